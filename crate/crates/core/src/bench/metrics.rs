use serde::{Deserialize, Serialize};

use crate::error::{DpqError, Result};

/// Average precision of a ranked relevance list over the full ranking:
/// `(1/R) * sum over relevant positions i of precision@i`, with R the
/// number of relevant items in the list. `None` when nothing is relevant.
pub fn average_precision(relevance: &[bool]) -> Result<Option<f64>> {
    let total = relevance.iter().filter(|r| **r).count();
    average_precision_with_total(relevance, total)
}

/// As [`average_precision`], for a possibly truncated ranking where
/// `total_relevant` counts relevant items in the whole database.
pub fn average_precision_with_total(relevance: &[bool], total_relevant: usize) -> Result<Option<f64>> {
    if relevance.is_empty() {
        return Err(DpqError::Empty("ranked relevance list"));
    }
    if total_relevant == 0 {
        return Ok(None);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &rel) in relevance.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(Some(sum / total_relevant as f64))
}

/// Rankings of a database for a set of queries, plus the labels needed to score them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRun {
    pub mode: String,
    pub query_labels: Vec<usize>,
    pub database_labels: Vec<usize>,
    /// Database indices per query, best first.
    pub rankings: Vec<Vec<usize>>,
}

impl RetrievalRun {
    pub fn new(
        mode: impl Into<String>,
        query_labels: Vec<usize>,
        database_labels: Vec<usize>,
        rankings: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if rankings.len() != query_labels.len() {
            return Err(DpqError::ShapeMismatch {
                what: "ranking count",
                expected: query_labels.len(),
                actual: rankings.len(),
            });
        }
        let n = database_labels.len();
        let mut seen = vec![usize::MAX; n];
        for (q, ranking) in rankings.iter().enumerate() {
            if ranking.len() > n {
                return Err(DpqError::InvalidConfig(format!("ranking {q} is longer than the database")));
            }
            for &i in ranking {
                if i >= n || seen[i] == q {
                    return Err(DpqError::InvalidConfig(format!(
                        "ranking {q} is not a prefix of a database permutation"
                    )));
                }
                seen[i] = q;
            }
        }
        Ok(Self {
            mode: mode.into(),
            query_labels,
            database_labels,
            rankings,
        })
    }

    /// AP of query `q`, or `None` if the database holds no item of its class.
    pub fn query_ap(&self, q: usize) -> Result<Option<f64>> {
        let label = self.query_labels[q];
        let total = self.database_labels.iter().filter(|&&l| l == label).count();
        let rel: Vec<bool> = self.rankings[q]
            .iter()
            .map(|&i| self.database_labels[i] == label)
            .collect();
        if rel.is_empty() {
            return if total == 0 { Ok(None) } else { Ok(Some(0.0)) };
        }
        average_precision_with_total(&rel, total)
    }
}

/// Mean AP over queries whose class occurs in the database.
pub fn eval_map(run: &RetrievalRun) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for q in 0..run.query_labels.len() {
        if let Some(ap) = run.query_ap(q)? {
            sum += ap;
            count += 1;
        }
    }
    if count == 0 {
        return Err(DpqError::Empty("queries with relevant database items"));
    }
    Ok(sum / count as f64)
}

/// Fraction of rows whose true label is among the `k` highest scores
/// (ties broken toward the lower class index).
pub fn top_k_accuracy(scores: &[Vec<f64>], labels: &[usize], k: usize) -> Result<f64> {
    if scores.is_empty() {
        return Err(DpqError::Empty("score rows"));
    }
    if scores.len() != labels.len() {
        return Err(DpqError::ShapeMismatch {
            what: "label count",
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(row, &y)| {
            let target = row[y];
            let better = row
                .iter()
                .enumerate()
                .filter(|&(c, &s)| s > target || (s == target && c < y))
                .count();
            better < k
        })
        .count();
    Ok(hits as f64 / scores.len() as f64)
}

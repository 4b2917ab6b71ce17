//! Lloyd's k-means with k-means++ seeding.
//!
//! Assignment is data-parallel. Centroid sums are accumulated per fixed-size
//! chunk and the chunk partials are combined in chunk order, so results do not
//! depend on the number of worker threads.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{DpqError, Result};

const SUM_CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Array2<f64>,
    pub assignments: Vec<u32>,
    /// Sum of squared distances from each point to its assigned centroid.
    pub inertia: f64,
    /// Inertia after the initial assignment and after every Lloyd iteration.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

#[inline]
pub(crate) fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest row of `centroids` (lowest index on ties) and its squared distance.
pub fn nearest_centroid(x: ArrayView1<'_, f64>, centroids: ArrayView2<'_, f64>) -> (u32, f64) {
    let mut best = (0u32, f64::INFINITY);
    for (k, c) in centroids.rows().into_iter().enumerate() {
        let d = squared_distance(x, c);
        if d < best.1 {
            best = (k as u32, d);
        }
    }
    best
}

fn assign(data: ArrayView2<'_, f64>, centroids: ArrayView2<'_, f64>) -> Vec<(u32, f64)> {
    (0..data.nrows())
        .into_par_iter()
        .map(|i| nearest_centroid(data.row(i), centroids))
        .collect()
}

fn kmeans_plus_plus(data: ArrayView2<'_, f64>, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let n = data.nrows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| squared_distance(data.row(i), data.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let next = match WeightedIndex::new(&nearest) {
            Ok(dist) => dist.sample(rng),
            // Every remaining point coincides with a chosen centroid.
            Err(_) => (0..n).find(|i| !chosen.contains(i)).expect("n >= k"),
        };
        chosen.push(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(squared_distance(data.row(i), data.row(next)));
        }
    }
    let mut centroids = Array2::zeros((k, data.ncols()));
    for (row, &i) in chosen.iter().enumerate() {
        centroids.row_mut(row).assign(&data.row(i));
    }
    centroids
}

fn update(
    data: ArrayView2<'_, f64>,
    labels: &[(u32, f64)],
    centroids: &mut Array2<f64>,
) {
    let (k, dim) = centroids.dim();
    let n = data.nrows();
    let partials: Vec<(Array2<f64>, Vec<usize>)> = (0..n.div_ceil(SUM_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut sums = Array2::<f64>::zeros((k, dim));
            let mut counts = vec![0usize; k];
            let range = c * SUM_CHUNK..((c + 1) * SUM_CHUNK).min(n);
            for (i, &(z, _)) in range.clone().zip(&labels[range]) {
                let z = z as usize;
                let mut row = sums.row_mut(z);
                row += &data.row(i);
                counts[z] += 1;
            }
            (sums, counts)
        })
        .collect();
    let mut sums = Array2::<f64>::zeros((k, dim));
    let mut counts = vec![0usize; k];
    for (s, c) in partials {
        sums += &s;
        for (a, b) in counts.iter_mut().zip(c) {
            *a += b;
        }
    }

    // Empty clusters move onto the points that are currently worst served.
    let mut order: Vec<usize> = Vec::new();
    if counts.contains(&0) {
        order = (0..n).collect();
        order.sort_by(|&a, &b| labels[b].1.total_cmp(&labels[a].1).then(a.cmp(&b)));
    }
    let mut donors = order.into_iter();
    for (z, &count) in counts.iter().enumerate() {
        if count > 0 {
            let mut row = centroids.row_mut(z);
            row.assign(&sums.row(z));
            row /= count as f64;
        } else if let Some(i) = donors.next() {
            centroids.row_mut(z).assign(&data.row(i));
        }
    }
}

pub fn kmeans(
    data: ArrayView2<'_, f64>,
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<KMeansResult> {
    let n = data.nrows();
    if n == 0 || data.ncols() == 0 {
        return Err(DpqError::Empty("k-means data"));
    }
    if k == 0 {
        return Err(DpqError::InvalidConfig("k-means needs K >= 1".into()));
    }
    if n < k {
        return Err(DpqError::TooFewPoints { n, k });
    }
    if max_iters == 0 {
        return Err(DpqError::InvalidConfig("max_iters must be >= 1".into()));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(DpqError::NonFinite("k-means data"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(data, k, &mut rng);
    let mut labels = assign(data, centroids.view());
    let mut history = vec![labels.iter().map(|l| l.1).sum::<f64>()];
    let mut iterations = 0;

    while iterations < max_iters {
        update(data, &labels, &mut centroids);
        let next = assign(data, centroids.view());
        let inertia: f64 = next.iter().map(|l| l.1).sum();
        let prev = *history.last().expect("history starts non-empty");
        debug_assert!(
            inertia <= prev + 1e-9 * prev.abs().max(1.0),
            "Lloyd inertia increased: {prev} -> {inertia}"
        );
        history.push(inertia);
        iterations += 1;
        let converged = next.iter().zip(&labels).all(|(a, b)| a.0 == b.0);
        labels = next;
        if converged {
            break;
        }
    }

    Ok(KMeansResult {
        centroids,
        assignments: labels.iter().map(|l| l.0).collect(),
        inertia: *history.last().expect("non-empty"),
        inertia_history: history,
        iterations,
    })
}

//! Per-sample building blocks of the forward pass and the objective.

use ndarray::{Array, Array1, ArrayView, ArrayView1, ArrayView2, Dimension};

use crate::error::{DpqError, Result};

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(p: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

fn check_rows(p: ArrayView1<'_, f64>, centroids: ArrayView2<'_, f64>) -> Result<()> {
    if p.len() != centroids.nrows() {
        return Err(DpqError::ShapeMismatch {
            what: "probability vector length",
            expected: centroids.nrows(),
            actual: p.len(),
        });
    }
    Ok(())
}

/// Convex combination `sum_k p(k) C(k)` of the codebook rows.
pub fn soft_subvector(p: ArrayView1<'_, f64>, centroids: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    check_rows(p, centroids)?;
    Ok(p.dot(&centroids))
}

/// The row `C(k*)` with `k* = argmax p`, together with `k*`.
pub fn hard_subvector(p: ArrayView1<'_, f64>, centroids: ArrayView2<'_, f64>) -> Result<(Array1<f64>, usize)> {
    check_rows(p, centroids)?;
    if p.is_empty() {
        return Err(DpqError::Empty("probability vector"));
    }
    let k = argmax(p);
    Ok((centroids.row(k).to_owned(), k))
}

/// Backward of the one-hot layer under the straight-through estimator: the
/// gradient arriving at `e_m` is handed to `p_m` unchanged.
pub fn st_backward<D: Dimension>(grad_on_one_hot: ArrayView<'_, f64, D>) -> Array<f64, D> {
    grad_on_one_hot.to_owned()
}

pub fn softmax(scores: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = scores.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut e = scores.mapv(|s| (s - max).exp());
    let total = e.sum();
    e /= total;
    e
}

/// Cross-entropy of `softmax(scores)` against `label`, via log-sum-exp.
pub fn softmax_loss(scores: ArrayView1<'_, f64>, label: usize) -> Result<f64> {
    if label >= scores.len() {
        return Err(DpqError::LabelOutOfRange {
            label,
            classes: scores.len(),
        });
    }
    let max = scores.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    Ok(lse - scores[label])
}

/// `1/2 ||soft - o_y||^2 + 1/2 ||hard - o_y||^2` with one shared center `o_y`.
pub fn joint_central_loss(
    soft: ArrayView1<'_, f64>,
    hard: ArrayView1<'_, f64>,
    label: usize,
    centers: ArrayView2<'_, f64>,
) -> Result<f64> {
    if label >= centers.nrows() {
        return Err(DpqError::LabelOutOfRange {
            label,
            classes: centers.nrows(),
        });
    }
    let v = centers.ncols();
    for (what, len) in [("soft representation", soft.len()), ("hard representation", hard.len())] {
        if len != v {
            return Err(DpqError::ShapeMismatch { what, expected: v, actual: len });
        }
    }
    let o = centers.row(label);
    let half_sq = |r: ArrayView1<'_, f64>| 0.5 * r.iter().zip(o.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    Ok(half_sq(soft) + half_sq(hard))
}

/// Squared norm of the batch-mean cluster distribution of one partition.
/// Lies in `[1/K, 1]`; 1 when every row is the same one-hot vector.
pub fn gini_batch(p_batch: ArrayView2<'_, f64>) -> Result<f64> {
    let b = p_batch.nrows();
    if b == 0 {
        return Err(DpqError::Empty("Gini batch"));
    }
    Ok(p_batch
        .columns()
        .into_iter()
        .map(|col| {
            let mean = col.sum() / b as f64;
            mean * mean
        })
        .sum())
}

/// `-sum_k p(k)^2`: -1 at one-hot vectors, -1/K at the uniform distribution.
pub fn gini_sample(p: ArrayView1<'_, f64>) -> f64 {
    -p.dot(&p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    #[test]
    fn soft_vertices_and_mean() {
        let c = array![[0.0, 0.0], [4.0, 8.0], [1.0, -1.0]];
        assert_eq!(soft_subvector(array![0.0, 1.0, 0.0].view(), c.view()).unwrap(), array![4.0, 8.0]);
        let u = soft_subvector(array![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0].view(), c.view()).unwrap();
        assert!((u[0] - 5.0 / 3.0).abs() < 1e-15 && (u[1] - 7.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn soft_weighted_sum_matches_loop() {
        let c = array![[0.0, 0.0], [4.0, 8.0]];
        let p = array![0.25, 0.75];
        let got = soft_subvector(p.view(), c.view()).unwrap();
        let mut oracle = [0.0; 2];
        for k in 0..2 {
            for d in 0..2 {
                oracle[d] += p[k] * c[[k, d]];
            }
        }
        assert_eq!(got.to_vec(), oracle.to_vec());
        assert_eq!(got, array![3.0, 6.0]);
    }

    #[test]
    fn hard_picks_argmax_lowest_on_ties() {
        let c = array![[1.0, 1.0], [2.0, 2.0]];
        assert_eq!(hard_subvector(array![0.4, 0.6].view(), c.view()).unwrap().1, 1);
        let (row, k) = hard_subvector(array![0.5, 0.5].view(), c.view()).unwrap();
        assert_eq!((row, k), (array![1.0, 1.0], 0));
        let one_hot = array![0.0, 1.0];
        assert_eq!(
            hard_subvector(one_hot.view(), c.view()).unwrap().0,
            soft_subvector(one_hot.view(), c.view()).unwrap()
        );
        assert!(hard_subvector(array![1.0].view(), c.view()).is_err());
    }

    #[test]
    fn st_is_identity() {
        let g = array![0.5, -1.25, 3.0];
        assert_eq!(st_backward(g.view()), g);
    }

    #[test]
    fn softmax_loss_cases() {
        let l = softmax_loss(array![0.3, 0.3, 0.3, 0.3].view(), 2).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        let l = softmax_loss(array![1e4, 0.0, -3.0].view(), 0).unwrap();
        assert!(l.abs() < 1e-12);
        assert!(softmax_loss(array![0.0].view(), 1).is_err());
        // direct -log p, computed without max subtraction on tame logits
        let s = array![0.1, -2.0, 1.7, 0.4];
        let z: f64 = s.iter().map(|v: &f64| v.exp()).sum();
        let direct = -(s[2].exp() / z).ln();
        assert!((softmax_loss(s.view(), 2).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn central_loss_cases() {
        let centers = array![[1.0, 2.0], [0.0, 0.0]];
        let o = centers.row(0);
        assert_eq!(joint_central_loss(o, o, 0, centers.view()).unwrap(), 0.0);
        let soft = array![1.0, 3.0];
        assert_eq!(joint_central_loss(soft.view(), o, 0, centers.view()).unwrap(), 0.5);
        assert!(joint_central_loss(o, o, 2, centers.view()).is_err());
    }

    #[test]
    fn gini_values() {
        let unanimous = array![[0.0, 1.0, 0.0], [0.0, 1.0, 0.0]];
        assert_eq!(gini_batch(unanimous.view()).unwrap(), 1.0);
        let spread = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(gini_batch(spread.view()).unwrap(), 0.5);
        assert!(gini_batch(Array2::<f64>::zeros((0, 3)).view()).is_err());
        assert_eq!(gini_sample(array![0.0, 0.0, 1.0].view()), -1.0);
        assert_eq!(gini_sample(array![0.25, 0.25, 0.25, 0.25].view()), -0.25);
        assert!((gini_sample(array![0.5, 0.3, 0.2].view()) + 0.38).abs() < 1e-15);
    }

    fn simplex_batch() -> impl Strategy<Value = Array2<f64>> {
        (2usize..9, 1usize..6).prop_flat_map(|(k, b)| {
            prop::collection::vec(0.0f64..1.0, k * b).prop_map(move |raw| {
                let mut a = Array2::from_shape_vec((b, k), raw).unwrap();
                for mut row in a.rows_mut() {
                    let total = row.sum() + 1e-12;
                    row /= total;
                }
                a
            })
        })
    }

    proptest! {
        #[test]
        fn gini_bounds(p in simplex_batch()) {
            let k = p.ncols() as f64;
            let g = gini_batch(p.view()).unwrap();
            prop_assert!(g >= 1.0 / k - 1e-12 && g <= 1.0 + 1e-12);
            for row in p.rows() {
                let s = gini_sample(row);
                prop_assert!(s >= -1.0 - 1e-12 && s <= -1.0 / k + 1e-12);
            }
        }
    }
}

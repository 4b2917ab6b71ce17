use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dpq::lut::{build_sym_lut, naive};
use dpq::pq::pq_train;
use dpq::{search, DpqModel, ProductQuantizer, Quantizer, QuantizerConfig, SearchIndex, SearchMode, VectorSet};

fn random_rows(seed: u64, n: usize, dim: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, dim), |_| rng.random_range(-1.0..1.0))
}

fn assert_matches_brute_force<Q: Quantizer>(q: &Q, data: &Array2<f64>, queries: &Array2<f64>) {
    let db = q.encode_all(data.view()).unwrap();
    let mut index = SearchIndex::new(q, &db).unwrap();
    for mode in [SearchMode::Symmetric, SearchMode::Asymmetric] {
        for query in queries.rows() {
            let want = naive::brute_force_ranking(query, &db, q, mode).unwrap();
            let got = index.search(query, mode, 25).unwrap();
            assert_eq!(got.len(), 25);
            for (a, b) in got.iter().zip(&want) {
                assert_eq!(a.index, b.index, "{mode:?}");
                assert!((a.distance - b.distance).abs() <= 1e-9);
            }
            let free = search(query, &db, q, mode, 25).unwrap();
            assert_eq!(free, got);
        }
    }
}

#[test]
fn pq_search_matches_brute_force_on_a_thousand_items() {
    let data = random_rows(1, 1000, 16);
    let set = VectorSet::unlabeled(data.clone()).unwrap();
    let mut cfg = QuantizerConfig::new(16, 4, 16, 1);
    cfg.seed = 1;
    let pq = ProductQuantizer::train(&set, &cfg).unwrap();
    assert_matches_brute_force(&pq, &data, &random_rows(2, 20, 16));
}

#[test]
fn dpq_search_matches_brute_force_on_a_thousand_items() {
    let data = random_rows(3, 1000, 16);
    let mut cfg = QuantizerConfig::new(16, 4, 16, 3);
    cfg.hidden_dim = 12;
    cfg.seed = 3;
    let model = DpqModel::random(&cfg).unwrap();
    assert_matches_brute_force(&model, &data, &random_rows(4, 20, 16));
    let normalized = model.intra_normalize().unwrap();
    assert_matches_brute_force(&normalized, &data, &random_rows(5, 10, 16));
}

#[test]
fn symmetric_distance_is_a_squared_metric() {
    let data = random_rows(6, 400, 12);
    let set = VectorSet::unlabeled(data).unwrap();
    let cb = pq_train(&set, &QuantizerConfig::new(12, 3, 8, 1)).unwrap();
    let lut = build_sym_lut(&cb);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut code = || -> Vec<u32> { (0..3).map(|_| rng.random_range(0..8)).collect() };
    for _ in 0..500 {
        let (a, b, c) = (code(), code(), code());
        let d = |x: &[u32], y: &[u32]| lut.distance(x, y).unwrap();
        assert_eq!(d(&a, &a), 0.0);
        assert_eq!(d(&a, &b), d(&b, &a));
        assert!(d(&a, &b) >= 0.0);
        assert!(d(&a, &c).sqrt() <= d(&a, &b).sqrt() + d(&b, &c).sqrt() + 1e-12);
    }
}

#[test]
fn ties_break_towards_lower_database_index() {
    let data = random_rows(8, 200, 8);
    let set = VectorSet::unlabeled(data.clone()).unwrap();
    let pq = ProductQuantizer::train(&set, &QuantizerConfig::new(8, 2, 4, 1)).unwrap();
    let db = pq.encode_all(data.view()).unwrap();
    let ranked = search(data.row(0), &db, &pq, SearchMode::Symmetric, db.len()).unwrap();
    for pair in ranked.windows(2) {
        assert!(pair[0].distance < pair[1].distance || pair[0].index < pair[1].index);
    }
}

#[test]
fn rejects_bad_requests() {
    let data = random_rows(9, 50, 8);
    let set = VectorSet::unlabeled(data.clone()).unwrap();
    let pq = ProductQuantizer::train(&set, &QuantizerConfig::new(8, 2, 4, 1)).unwrap();
    let db = pq.encode_all(data.view()).unwrap();
    assert!(search(data.row(0), &db, &pq, SearchMode::Asymmetric, 0).is_err());
    assert!(search(data.row(0), &db, &pq, SearchMode::Asymmetric, 51).is_err());
    let wrong = random_rows(10, 1, 6);
    assert!(search(wrong.row(0), &db, &pq, SearchMode::Symmetric, 5).is_err());
}

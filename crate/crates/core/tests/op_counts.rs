// Counters are process-global: keep this binary to a single test.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dpq::lut::counters;
use dpq::pq::pq_train;
use dpq::{CodeSet, ProductQuantizer, Quantizer, QuantizerConfig, SearchIndex, SearchMode, VectorSet};

#[test]
fn asymmetric_search_cost_is_one_table_build_and_m_reads_per_item() {
    let (m, k, d, n) = (4usize, 16usize, 3usize, 1000usize);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = Array2::from_shape_fn((n, m * d), |_| rng.random_range(-1.0..1.0));
    let set = VectorSet::unlabeled(data.clone()).unwrap();
    let cb = pq_train(&set, &QuantizerConfig::new(m * d, m, k, 1)).unwrap();
    let pq = ProductQuantizer::new(cb);
    let db: CodeSet = pq.encode_all(data.view()).unwrap();
    let mut index = SearchIndex::new(&pq, &db).unwrap();

    counters::reset();
    let hits = index.search(data.row(0), SearchMode::Asymmetric, 10).unwrap();
    let c = counters::snapshot();
    assert_eq!(hits.len(), 10);

    if !counters::enabled() {
        assert_eq!(c, counters::OpCounts::default());
        return;
    }
    assert_eq!(c.asym_builds, 1);
    assert_eq!(c.asym_build_terms, (m * k * d) as u64);
    assert_eq!(c.distance_evals, n as u64);
    assert_eq!(c.table_reads, (n * m) as u64);

    counters::reset();
    index.search(data.row(1), SearchMode::Symmetric, 5).unwrap();
    let c = counters::snapshot();
    assert_eq!(c.asym_builds, 0);
    assert_eq!(c.distance_evals, n as u64);
    assert_eq!(c.table_reads, (n * m) as u64);
}

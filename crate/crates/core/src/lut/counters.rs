//! Operation counters for the lookup paths, compiled in only with debug
//! assertions. In release builds every call is a no-op and snapshots are zero.
//!
//! The counters are process-global, so tests that assert on them must not
//! share a process with other LUT users.

#[cfg(debug_assertions)]
use std::sync::atomic::{AtomicU64, Ordering};

/// Counter values at one point in time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    /// Asymmetric tables built.
    pub asym_builds: u64,
    /// Squared-difference terms evaluated while building asymmetric tables.
    pub asym_build_terms: u64,
    /// Code-to-table distance evaluations (symmetric or asymmetric).
    pub distance_evals: u64,
    /// Table entries read by those evaluations.
    pub table_reads: u64,
}

#[cfg(debug_assertions)]
static COUNTERS: [AtomicU64; 4] = [AtomicU64::new(0), AtomicU64::new(0), AtomicU64::new(0), AtomicU64::new(0)];

#[inline]
#[allow(unused_variables)]
fn add(slot: usize, n: u64) {
    #[cfg(debug_assertions)]
    COUNTERS[slot].fetch_add(n, Ordering::Relaxed);
}

pub(crate) fn record_asym_build(terms: u64) {
    add(0, 1);
    add(1, terms);
}

pub(crate) fn record_evals(evals: u64, reads: u64) {
    add(2, evals);
    add(3, reads);
}

pub fn snapshot() -> OpCounts {
    #[cfg(debug_assertions)]
    {
        let v = |i: usize| COUNTERS[i].load(Ordering::Relaxed);
        OpCounts {
            asym_builds: v(0),
            asym_build_terms: v(1),
            distance_evals: v(2),
            table_reads: v(3),
        }
    }
    #[cfg(not(debug_assertions))]
    OpCounts::default()
}

pub fn reset() {
    #[cfg(debug_assertions)]
    for c in &COUNTERS {
        c.store(0, Ordering::Relaxed);
    }
}

/// Whether counting is compiled in.
pub const fn enabled() -> bool {
    cfg!(debug_assertions)
}

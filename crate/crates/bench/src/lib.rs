//! Shared helpers for the criterion benchmarks.

use num_rational::BigRational;
use tslab_core::{IndexStream, SparseVector};

/// Uniform convex vector on `[lo, hi]`.
pub fn uniform(lo: u32, hi: u32) -> SparseVector {
    let len = (hi - lo + 1) as i64;
    let coeff = BigRational::new(1.into(), len.into());
    SparseVector::from_entries((lo..=hi).map(|i| (i, coeff.clone())).collect()).unwrap()
}

/// The 21-point doubling-layout combination used across the norm benches.
pub fn compact_21() -> SparseVector {
    let half = BigRational::new(1.into(), 2.into());
    tslab_core::make_compact_scc(&half, 2, 3).unwrap().vector
}

/// A fixed block of basis vectors for stream-driven constructions.
pub fn even_stream() -> IndexStream {
    IndexStream::evens()
}

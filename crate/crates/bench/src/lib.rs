//! Criterion benchmarks for `reclaim-core`; see `benches/`.

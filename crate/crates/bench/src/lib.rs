//! Criterion benchmarks for loraq-core; see `benches/`.

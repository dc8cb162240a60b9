//! Criterion benchmarks for the deltalab kernels; see `benches/`.

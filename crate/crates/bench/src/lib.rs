//! Criterion benchmarks for the fusion and model kernels; see `benches/`.

//! Criterion benchmarks for the solver, gradient and evaluation kernels; see `benches/`.

//! Benchmarks for the solver, rasterizer and texture projection; see `benches/`.

//! Criterion benchmarks for the numeric kernels; see `benches/kernels.rs`.
//! Run with `cargo bench -p cacto-bench`.

//! Benchmarks for segfuse live under `benches/`; this crate has no library code.

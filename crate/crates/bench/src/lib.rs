//! Criterion benchmarks for `oamtomo`; see `benches/pipeline.rs`.

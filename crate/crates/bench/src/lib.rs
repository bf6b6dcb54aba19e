//! Criterion benchmarks for opdlab-core live in `benches/`.

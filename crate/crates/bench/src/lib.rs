//! Criterion benchmarks for equigraph live in `benches/`.

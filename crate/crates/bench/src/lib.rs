//! Criterion benchmarks for the ratchet engines live in `benches/`.

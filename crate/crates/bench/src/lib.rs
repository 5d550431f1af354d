//! Benchmark-only crate; see `benches/policies.rs`.

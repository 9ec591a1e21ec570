//! Criterion benchmarks for the ordering and feature code.

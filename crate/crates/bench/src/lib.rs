//! Criterion benchmarks for the decoder step, the batched loss and
//! linearization. Run with `cargo bench -p concept-parse-bench`.

//! Acceptance criteria for `lor-core`. The suite lives in
//! `tests/acceptance.rs`; run it with `cargo test -p lor-validation`.

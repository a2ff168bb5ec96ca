//! Acceptance criteria for `learnrec`, run by `cargo test -p learnrec-suite`.
//! The checks live in `tests/acceptance.rs`.

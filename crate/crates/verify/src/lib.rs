//! Acceptance criteria for the workspace. Run with
//! `cargo test -p qhist-verify --test acceptance`.

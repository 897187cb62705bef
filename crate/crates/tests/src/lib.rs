//! Holds the workspace acceptance suite (`cargo test -p fblrate-tests`).

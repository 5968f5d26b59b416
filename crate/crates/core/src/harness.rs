//! Evaluation harness (stub).

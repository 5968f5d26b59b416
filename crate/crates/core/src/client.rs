//! Client driver (stub).

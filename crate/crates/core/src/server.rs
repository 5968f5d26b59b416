//! Server daemon (stub).

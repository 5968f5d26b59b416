//! Two-server private top-k retrieval over secret-shared embeddings.
//!
//! A data owner splits an embedding database into additive shares held by
//! two non-colluding servers. A user shares a prompt embedding the same
//! way, and the servers compute shared dot-product distances without
//! learning anything. The user then runs an interactive bisection over a
//! distance threshold: each round it uploads a fresh comparison-gate key,
//! the servers count how many documents clear the threshold, and the user
//! narrows the interval until the count lands in `[k, k + slack]`. The
//! servers cap the number of rounds and the final candidate count, verify
//! that the returned selection vector is 0/1-valued, and only then release
//! its shares. The user ends up with the indices of the top-k documents;
//! the servers end up with nothing.
//!
//! Module map:
//! - [`field`], [`shares`]: prime-field fixed-point arithmetic and 2-of-2
//!   additive sharing.
//! - [`prg`], [`dcf`], [`cmp`]: AES-MMO seed expansion, distributed
//!   comparison functions, and the masked interval-containment gate.
//! - [`dot`]: Beaver-style batched secure dot products.
//! - [`dealer`], [`db`]: offline correlated randomness and the shared
//!   database files.
//! - [`wire`], [`server`], [`client`]: the online two-server protocol.
//! - [`synth`], [`harness`]: synthetic data, plaintext oracles, and the
//!   evaluation harness.

pub mod client;
pub mod cmp;
pub mod db;
pub mod dcf;
pub mod dealer;
pub mod dot;
pub mod error;
pub mod field;
pub mod harness;
pub mod prg;
pub mod server;
pub mod shares;
pub mod synth;
pub mod wire;

pub use error::{Error, Result};
pub use field::{Fe, FieldParams};

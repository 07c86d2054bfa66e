//! Monotonic attention for sequence-to-sequence models.
//!
//! The crate is organised bottom-up:
//!
//! - [`numkit`]: hardened numeric primitives (softmax, sigmoid, prefix sums and
//!   products, seeded random streams, a small dense matrix).
//! - [`attn`]: energy functions, softmax attention, soft monotonic attention
//!   (sequential recurrence and cumulative-sum/product scan) and the hard,
//!   online, linear-time monotonic decoding step.
//! - [`oracle`]: independent ground truth for the monotonic attention
//!   marginals (path enumeration and Monte-Carlo simulation).
//! - [`gradcheck`]: reverse-mode gradients for the training path and the
//!   finite-difference machinery that validates them.
//! - [`seq2seq`]: a GRU encoder-decoder trained with soft monotonic attention
//!   on a synthetic monotonic transduction task.
//! - [`bench`]: the softmax-vs-hard-monotonic timing harness.
//! - [`checkpoint`]: checksummed text checkpoints.

pub mod attn;
pub mod bench;
pub mod checkpoint;
mod error;
pub mod gradcheck;
pub mod numkit;
pub mod oracle;
pub mod seq2seq;

pub use error::{Error, Result};

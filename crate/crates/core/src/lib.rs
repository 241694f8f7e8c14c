//! Compositionality-aware fine-tuning on concatenated image pairs.
//!
//! Two image-caption pairs are joined into one training example with
//! several positive captions and a hard negative produced by swapping one
//! same-category word between the two first sentences. The crate covers
//! the caption and image pipelines, batch assembly, the contrastive /
//! hard-negative / uni-modal losses with analytic gradients, a toy linear
//! encoder training loop and the benchmark scorers.

pub mod batch;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod exec;
pub mod gradcheck;
pub mod image;
pub mod linalg;
pub mod losses;
pub mod rng;
pub mod text;
pub mod train;

pub use error::{Error, Result};
pub use exec::Exec;
pub use linalg::Matrix;

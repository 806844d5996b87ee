//! Hardness-guided adversarial domain adaptation.
//!
//! The crate trains a small multi-stage feature generator so that labelled
//! source data and unlabelled target data become indistinguishable:
//!
//! * [`kernel`] measures how far apart the two domains are at each stage
//!   (RBF-kernel MMD, called *hardness*).
//! * [`adversarial`] trains one domain discriminator per stage through a
//!   gradient-reversal node, with a focal loss whose exponent is that
//!   stage's hardness, and adds the hardness itself as a loss.
//! * [`sps`] gates each update on the batch's average hardness against a
//!   threshold that moves to the median of the previous epoch.
//! * [`harness`] runs the whole thing, including the ablation variants.
//!
//! Everything is built on the small reverse-mode engine in [`tape`].

pub mod adversarial;
pub mod data;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod model;
pub mod optim;
pub mod sps;
pub mod tape;
pub mod tensor;

pub use error::{Error, ErrorKind, Result};
pub use tensor::Tensor;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tape.md")]
    mod tape {}
    #[doc = include_str!("../../../book/src/hardness.md")]
    mod hardness {}
    #[doc = include_str!("../../../book/src/adversarial.md")]
    mod adversarial {}
    #[doc = include_str!("../../../book/src/progressive-sampling.md")]
    mod progressive_sampling {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

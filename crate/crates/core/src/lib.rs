//! A category-aware single-object tracker: a shared convolutional trunk,
//! a category classifier (NetC) and per-category foreground branches (NetT)
//! that supervise each other online.
//!
//! The guide in `book/` walks through the pipeline; its code blocks run as
//! doc-tests of this crate.

pub mod data;
pub mod error;
pub mod eval;
pub mod net;
pub mod nn;
pub mod persist;
pub mod regions;
pub mod regression;
pub mod seed;
pub mod tensor;
pub mod track;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;

// Each chapter is its own module so a failing snippet names its chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/regions.md")]
    mod regions {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/tracking.md")]
    mod tracking {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

//! Value-at-risk Bayesian optimization: Gaussian-process confidence bands
//! over `(x, z)`, lacing values for choosing `z`, and the optimistic VaR
//! acquisition for choosing `x`.
//!
//! The guide in `book/` walks through each module; its examples are
//! compiled as doc-tests of this crate.

// `!(v > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod acquire;
pub mod bench;
pub mod bounds;
pub mod env;
pub mod error;
pub mod gp;
pub mod lacing;
pub mod qmc;
pub mod risk;
pub mod surrogate;
pub mod vucb;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/value-at-risk.md")]
    mod value_at_risk {}
    #[doc = include_str!("../../../book/src/confidence-bounds.md")]
    mod confidence_bounds {}
    #[doc = include_str!("../../../book/src/lacing-values.md")]
    mod lacing_values {}
    #[doc = include_str!("../../../book/src/acquisition.md")]
    mod acquisition {}
    #[doc = include_str!("../../../book/src/continuous.md")]
    mod continuous {}
    #[doc = include_str!("../../../book/src/loop.md")]
    mod optimization_loop {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}

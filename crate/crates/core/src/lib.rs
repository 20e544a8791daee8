//! Simulation of the preemptive SRPT queue, its measure-valued state
//! descriptor and the distribution-dependent heavy-traffic scaling for
//! light-tailed processing times.
//!
//! ```
//! use srpt_ht::distributions::Law;
//! use srpt_ht::scaling::make_params;
//!
//! let law = Law::exponential(1.0).unwrap();
//! let p = make_params(&law, 10.0, 0.0).unwrap();
//! assert!((law.big_s(p.c_r).unwrap() - 10.0).abs() < 1e-8);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distributions;
pub mod engine;
pub mod harness;
pub mod error;
pub mod paths;
pub mod quadrature;
pub mod reference;
pub mod scaling;
pub mod seed;
pub mod verify;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/distributions.md")]
    mod distributions {}
    #[doc = include_str!("../../../book/src/paths.md")]
    mod paths {}
    #[doc = include_str!("../../../book/src/engine.md")]
    mod engine {}
    #[doc = include_str!("../../../book/src/scaling.md")]
    mod scaling {}
    #[doc = include_str!("../../../book/src/reference.md")]
    mod reference {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

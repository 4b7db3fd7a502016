//! Committor functions of overdamped Langevin dynamics, learned by minimising
//! a semigroup variational loss that needs no spatial derivatives.

pub mod config;
pub mod error;
pub mod gl_validation;
pub mod harness;
pub mod io;
pub mod net;
pub mod potentials;
pub mod reference;
pub mod sde;
pub mod training;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/committor.md")]
    mod committor {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/references.md")]
    mod references {}
    #[doc = include_str!("../../../book/src/validation.md")]
    mod validation {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}

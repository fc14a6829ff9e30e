//! Variational Monte Carlo for the 2+1d Z2 lattice gauge theory with gauged
//! Gaussian fermionic PEPS.

pub mod ansatz;
pub mod ec;
pub mod ed;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod io;
pub mod lattice;
pub mod mcmc;
pub mod observables;
pub mod optim;
pub mod verify;

pub use error::{Error, Result};

#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../README.md")]
    pub mod readme {}
    #[doc = include_str!("../../../book/src/overview.md")]
    pub mod overview {}
    #[doc = include_str!("../../../book/src/lattice.md")]
    pub mod lattice {}
    #[doc = include_str!("../../../book/src/gaussian.md")]
    pub mod gaussian {}
    #[doc = include_str!("../../../book/src/ansatz.md")]
    pub mod ansatz {}
    #[doc = include_str!("../../../book/src/observables.md")]
    pub mod observables {}
    #[doc = include_str!("../../../book/src/exact_contraction.md")]
    pub mod exact_contraction {}
    #[doc = include_str!("../../../book/src/monte_carlo.md")]
    pub mod monte_carlo {}
    #[doc = include_str!("../../../book/src/optimization.md")]
    pub mod optimization {}
    #[doc = include_str!("../../../book/src/exact_diagonalization.md")]
    pub mod exact_diagonalization {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}

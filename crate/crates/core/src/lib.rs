//! Well-balanced, asymptotic-preserving finite volume schemes for 1D kinetic
//! transport: neutron transport, chemotaxis and grey radiative transfer.

pub mod cli_io;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod limits;
pub mod linalg;
pub mod models;
pub mod state;
pub mod steady_cell;
pub mod ugks_chemo;
pub mod ugks_rad;
pub mod wbap;

pub use error::{Error, Result};
pub use grid::{gauss_legendre_quadrature, uniform_mesh, Mesh1D, Quadrature, QuadratureKind};
pub use state::KineticState;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/discretization.md")]
    mod discretization {}
    #[doc = include_str!("../../../book/src/cell-solver.md")]
    mod cell_solver {}
    #[doc = include_str!("../../../book/src/prediction.md")]
    mod prediction {}
    #[doc = include_str!("../../../book/src/wbap.md")]
    mod wbap {}
    #[doc = include_str!("../../../book/src/limits.md")]
    mod limits {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

//! Numerical laboratory for pseudoholomorphic strips in the symplectisation
//! of a contact 3-manifold, near a Legendrian knot bounding a spanning
//! surface with elliptic singular points.
//!
//! The modules follow the natural pipeline:
//!
//! - [`geometry`]: surface profiles, singular points, Thurston-Bennequin count.
//! - [`contact_structures`]: contact form, Reeb field, `J^`, `Omega`.
//! - [`exact_solutions`]: the closed-form strip family and residual/energy checks.
//! - [`spectral`]: the asymptotic operator `-M_inf d/dt` and its spectrum.
//! - [`decay`]: weighted inner products, `alpha(s)` and decay-rate fits.
//! - [`solver`]: Gauss-Newton for the discretized Cauchy-Riemann system.
//!
//! A guide with worked examples lives in the `book/` directory.

pub mod contact_structures;
pub mod decay;
pub mod dual;
pub mod error;
pub mod exact_solutions;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/normal-forms.md")]
    mod normal_forms {}
    #[doc = include_str!("../../../book/src/structures.md")]
    mod structures {}
    #[doc = include_str!("../../../book/src/explicit-solutions.md")]
    mod explicit_solutions {}
    #[doc = include_str!("../../../book/src/spectrum.md")]
    mod spectrum {}
    #[doc = include_str!("../../../book/src/decay.md")]
    mod decay {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}

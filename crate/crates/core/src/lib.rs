//! Graphs of prescribed Gauss curvature outside a compact set, asymptotic to
//! a cone: barriers, compact Dirichlet solves on growing annuli, the
//! monotone exterior limit, and audits of the derivative estimates.

pub mod banded;
pub mod barriers;
pub mod cli;
pub mod diagnostics;
pub mod exterior;
pub mod fields;
pub mod fspec;
pub mod grid;
pub mod radial;
pub mod solver;

pub use barriers::{glue_subsolutions, smooth_max, ConeSupersolution, ExplicitSubsolution};
pub use exterior::{solve_exterior, ExteriorRun, GridPlan, ProblemSpec};
pub use fields::{gauss_curvature, ScalarField};
pub use fspec::{FSpec, Family};
pub use grid::{AnnulusGrid, InnerBoundary, RadialGrid, Stretching};
pub use radial::solve_radial_bvp;
pub use solver::{homotopy_solve, solve_dirichlet, CompactProblem, InitKind, SolverOptions};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grids.md")]
    mod grids {}
    #[doc = include_str!("../../../book/src/fields.md")]
    mod fields {}
    #[doc = include_str!("../../../book/src/barriers.md")]
    mod barriers {}
    #[doc = include_str!("../../../book/src/radial.md")]
    mod radial {}
    #[doc = include_str!("../../../book/src/compact.md")]
    mod compact {}
    #[doc = include_str!("../../../book/src/exterior.md")]
    mod exterior {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

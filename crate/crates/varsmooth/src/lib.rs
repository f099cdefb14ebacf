//! Variable smoothing for composite minimization.
//!
//! Minimizes objectives of the form `F(x) = h(x) + g(Ax)` where `h` is smooth,
//! `g` is a (possibly nonsmooth) weakly convex function with a cheap proximal
//! operator, and `A` is a linear operator. The nonsmooth term is replaced by
//! its Moreau envelope with a decreasing smoothing parameter, and plain
//! gradient steps are taken on the smoothed objective. The crate ships:
//!
//! - a zoo of weakly convex penalties (`regularizers`): soft/firm thresholding,
//!   SCAD, a fractional penalty, and the Tukey/Cauchy robust losses, each with
//!   its weak-convexity modulus and Lipschitz certificate;
//! - Moreau-envelope calculus (`moreau`): value, gradient, gradient Lipschitz
//!   constant, and the two-parameter comparison bound;
//! - linear operators (`linops`): identity, dense, 2D forward-difference
//!   gradient, scaling, norm estimation, and least-norm correction;
//! - smooth terms (`smooth`) and composite problems (`problem`);
//! - solvers (`solvers`): variable smoothing, its epoch-wise variant with a
//!   joint criticality/feasibility stopping test, proximal gradient for the
//!   identity-operator case, and a plain subgradient baseline;
//! - a small experiment harness (`image`, `ssim`, `builders`) plus a CLI
//!   front end (`varsmooth solve|denoise|compare`).

pub mod builders;
pub mod cli;
pub mod config;
pub mod error;
pub mod image;
pub mod linops;
pub mod moreau;
pub mod problem;
pub mod regularizers;
pub mod report;
pub mod smooth;
pub mod solvers;
pub mod ssim;
pub mod trace;

pub use error::{Error, Result};
pub use linops::LinearOperator;
pub use moreau::MoreauEnvelope;
pub use problem::CompositeProblem;
pub use regularizers::WeaklyConvexFunction;
pub use smooth::SmoothFunction;
pub use solvers::{
    proximal_gradient, subgradient_method, surjective_witness, variable_smoothing,
    variable_smoothing_epochs, StepSchedule,
};
pub use trace::{Certificate, IterationRecord, SolveTrace};

//! mechlin — analysis, linearizing synthesis, and simulation for mechanical
//! control systems with configuration outputs.
//!
//! A mechanical control system on a configuration space Q is
//!
//! ```text
//! ẋ = v
//! v̇ = −vᵀΓ(x)v + e(x) + Σ g_r(x) u_r,      y_ℓ = h_ℓ(x)
//! ```
//!
//! with Christoffel symbols Γ, uncontrolled acceleration e, control
//! acceleration fields g_r, and configuration outputs h.  The crate answers,
//! for such systems:
//!
//! - what the relative half-degrees of the outputs are and whether the
//!   mechanical input–output linearization and decoupling problem is
//!   solvable ([`geometry`]);
//! - how to build the mechanical diffeomorphism and quadratic feedback that
//!   realize the decoupled chain normal form ([`synthesis`]);
//! - whether the synthesized loop actually behaves like decoupled integrator
//!   chains, by simulation and certificate checks ([`sim`]).
//!
//! Systems are entered directly as (Γ, e, g) or derived from a Lagrangian
//! (inertia matrix + potential + force basis) in [`model`]; the symbolic
//! substrate lives in [`expr`].

pub mod cli;
pub mod corpus;
pub mod expr;
#[cfg(test)]
pub(crate) mod fixtures;
pub mod geometry;
pub mod model;
pub mod report;
pub mod sim;
pub mod symmat;
pub mod synthesis;
pub mod sysfile;

pub use expr::{Expr, Point};
pub use model::{
    apply_transformation, from_lagrangian, LagrangianSpec, MechanicalSystem,
    MechanicalTransformation, ModelError,
};
pub use report::{analysis_report, law_report, AnalysisReport, LawReport};
pub use sim::{
    closed_loop_run, decoupling_certificate, energy_series, integrate, relative_energy_drift,
    ChannelCheck, DecouplingCertificate, InputSignal, SimError, Trajectory,
};
pub use synthesis::{
    closed_loop_system, controller_card, flatness_remark, synthesize, FeedbackLaw,
    NormalFormDescription, SynthesisError,
};
pub use sysfile::{
    load_system, parse_outputs, parse_system_str, LoadedRegime, LoadedSystem, SysFileError,
};

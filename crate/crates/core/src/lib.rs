//! Numerical toolkit for the McCall search model with wage insurance.
//!
//! The crate solves the baseline economy (unemployment benefits, a lump-sum
//! tax on the employed and a wage-insurance top-up), builds the UI-only
//! policy that reproduces its reservation rule, search effort and ex-ante
//! welfare, and checks the result against independent oracles:
//!
//! * [`dist`]: bounded wage distributions, partial moments, quadrature.
//! * [`model`]: reservation wages, search surplus and effort, the pooling
//!   threshold and its analytic derivatives.
//! * [`replicate`]: construction and from-scratch verification of the
//!   replicating UI-only policy.
//! * [`welfare`]: acceptance hazards, present-value weights, ex-ante welfare
//!   and government budget residuals.
//! * [`oracle`]: discrete-time value iteration and a Monte Carlo panel.
//! * [`scenario`] and [`pipeline`]: scenario files and the report pipelines
//!   behind the command-line tool.

pub mod dist;
pub mod error;
pub mod interp;
pub mod model;
pub mod ode;
pub mod oracle;
pub mod pipeline;
pub mod replicate;
pub mod root;
pub mod scenario;
pub mod welfare;

pub use dist::{Distribution, DistributionSpec, Quadrature};
pub use error::{Error, Result};
pub use model::{BenefitSchedule, Primitives, SearchMode, WIPolicy, WISolution};
pub use replicate::{UIOnlyPolicy, VerificationReport};
pub use welfare::WelfareReport;

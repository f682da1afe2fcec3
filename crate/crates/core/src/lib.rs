//! Generalized false discovery rate (k-FDR) and generalized familywise error
//! rate (k-FWER) stepup procedures.
//!
//! The crate is organised bottom-up:
//!
//! - [`binom`]: binomial tail `G(k, n, u)`, the transform `t·G(k-1, n-1, t)`
//!   and its inverse.
//! - [`critical`]: critical-value families for every supported procedure.
//! - [`stepup`]: p-value sets, the stepup rule and the two-stage adaptive
//!   procedure.
//! - [`estimators`]: null-proportion and k-FDR point estimators and the
//!   threshold form of the procedures.
//! - [`mixture`]: exact error rates of single-step tests under the
//!   two-group mixture model.
//! - [`sim`]: seeded Monte Carlo harness.
//! - [`pipeline`]: two-group expression analysis with permutation p-values.

pub mod binom;
pub mod critical;
pub mod error;
pub mod estimators;
pub mod mixture;
pub mod normal;
pub mod pipeline;
pub mod sim;
pub mod stepup;

pub use binom::{binom_tail, g_tilde, g_tilde_inv, Probability, TailParams};
pub use critical::{CriticalValues, Family, Method, Proc2Variant, ProcedureSpec};
pub use error::{Error, Result};
pub use stepup::{proc2, run_procedure, stepup, PValueSet, RejectionResult};

//! Treatment effects for threshold-assigned treatments with an unobserved
//! confounder in the score.
//!
//! The model is
//!
//! ```text
//! Y = alpha(X, eta) 1{Q >= tau0} + X^T beta + l(eta) + eps
//! Q = Z^T gamma + eta
//! ```
//!
//! and the target is the average effect on the treated,
//! `E[alpha(X, eta) | Q >= tau0]`. Estimation splits the sample in three:
//! `gamma` by OLS on the first block, `beta` from first differences of
//! controls in the second block sorted by the estimated residual, and the
//! effect by nearest-residual matching in the third block. See [`att`].

pub mod att;
pub mod bootstrap;
pub mod cli;
pub mod data;
pub mod differencing;
pub mod error;
pub mod ite;
pub mod linreg;
pub mod matching;
pub mod residualize;
pub mod seeds;
pub mod simulate;
pub mod spline;
pub mod stats;

pub use att::{estimate_att, estimate_att_crossfit, AttEstimate, CrossfitEstimate};
pub use bootstrap::{bootstrap_att, BootstrapResult};
pub use data::{
    load_csv, split_three_way, treatment_mask, ColumnSpec, ObservationSet, SplitAssignment,
};
pub use error::{Error, Result};
pub use ite::{fit_ite, predict_ite, IteModel, SplineBasisSpec};
pub use matching::{match_controls, match_controls_brute, MatchResult};

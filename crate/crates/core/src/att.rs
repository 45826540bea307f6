//! The ATT estimator and its cross-fitted version.
//!
//! One run uses three disjoint blocks: the score regression is fitted on the
//! first, the outcome slope on the controls of the second, and treated rows
//! of the third are matched to controls of the third. The estimate is the
//! mean over those treated rows of
//! `(Y_i - X_i^T beta) - (Y_c(i) - X_c(i)^T beta)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{split_three_way, ObservationSet, Roles, SplitAssignment};
use crate::differencing::{fit_beta, BetaFit};
use crate::error::{Error, Result, Stage};
use crate::matching::{match_controls, MatchResult};
use crate::residualize::{fit_gamma, residuals_eta, GammaFit};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttEstimate {
    pub theta_hat: f64,
    pub beta: BetaFit,
    pub gamma: GammaFit,
    pub matches: MatchResult,
    pub n_treated_i3: usize,
    pub n_control_i3: usize,
    /// Estimated score residual for every row of the sample, indexed by row.
    /// Only the difference and matching blocks feed the estimate.
    #[serde(skip)]
    pub eta_hat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossfitEstimate {
    pub theta_cf: f64,
    pub rotations: Vec<AttEstimate>,
}

/// `(Y_i - X_i^T beta) - (Y_c - X_c^T beta)` for each matched pair.
pub fn matched_differences(
    obs: &ObservationSet,
    beta_hat: &[f64],
    pairs: &[(usize, usize)],
) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(t, c)| {
            (obs.y()[t] - obs.x_dot(t, beta_hat)) - (obs.y()[c] - obs.x_dot(c, beta_hat))
        })
        .collect()
}

/// Recomputes the estimate from stored pairs and slope.
pub fn theta_from_pairs(obs: &ObservationSet, beta_hat: &[f64], pairs: &[(usize, usize)]) -> f64 {
    let d = matched_differences(obs, beta_hat, pairs);
    d.iter().sum::<f64>() / d.len() as f64
}

/// Runs the pipeline with the standard roles `(I1, I2, I3)`.
pub fn estimate_att(obs: &ObservationSet, splits: &SplitAssignment) -> Result<AttEstimate> {
    estimate_with_roles(obs, splits.roles(0))
}

pub fn estimate_with_roles(obs: &ObservationSet, roles: Roles<'_>) -> Result<AttEstimate> {
    let gamma = fit_gamma(obs, roles.score).map_err(|e| e.in_split(Stage::Score))?;
    let all_rows: Vec<usize> = (0..obs.n()).collect();
    let eta_hat = residuals_eta(&gamma, obs, &all_rows).map_err(|e| e.in_split(Stage::Score))?;

    let beta =
        fit_beta(obs, roles.difference, &eta_hat).map_err(|e| e.in_split(Stage::Difference))?;

    let (treated, controls): (Vec<usize>, Vec<usize>) = roles
        .matching
        .iter()
        .copied()
        .partition(|&i| obs.is_treated(i));
    let treated_eta: Vec<(usize, f64)> = treated.iter().map(|&i| (i, eta_hat[i])).collect();
    let control_eta: Vec<(usize, f64)> = controls.iter().map(|&i| (i, eta_hat[i])).collect();
    let matches =
        match_controls(&treated_eta, &control_eta).map_err(|e| e.in_split(Stage::Matching))?;

    let theta_hat = theta_from_pairs(obs, &beta.beta_hat, &matches.pairs);
    if !theta_hat.is_finite() {
        return Err(
            Error::DimensionMismatch("non-finite estimate".into()).in_split(Stage::Matching)
        );
    }
    Ok(AttEstimate {
        theta_hat,
        beta,
        gamma,
        matches,
        n_treated_i3: treated.len(),
        n_control_i3: controls.len(),
        eta_hat,
    })
}

/// Mean of the three rotation estimates, written so identical inputs come
/// back unchanged.
pub fn crossfit_mean(thetas: [f64; 3]) -> f64 {
    let [a, b, c] = thetas;
    a + ((b - a) + (c - a)) / 3.0
}

/// Cross-fitted estimate over one shuffled split drawn from `seed`.
pub fn estimate_att_crossfit(obs: &ObservationSet, seed: u64) -> Result<CrossfitEstimate> {
    let splits = split_three_way(obs.n(), seed, true)?;
    estimate_att_crossfit_with(obs, &splits)
}

/// Runs the three cyclic role rotations over fixed blocks and averages.
pub fn estimate_att_crossfit_with(
    obs: &ObservationSet,
    splits: &SplitAssignment,
) -> Result<CrossfitEstimate> {
    let rotations = (0..3)
        .into_par_iter()
        .map(|r| {
            estimate_with_roles(obs, splits.roles(r)).map_err(|e| Error::InRotation {
                rotation: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let theta_cf = crossfit_mean([
        rotations[0].theta_hat,
        rotations[1].theta_hat,
        rotations[2].theta_hat,
    ]);
    Ok(CrossfitEstimate {
        theta_cf,
        rotations,
    })
}

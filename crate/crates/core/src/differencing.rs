//! Difference-based estimate of the outcome slope on controls.
//!
//! Controls are sorted by their estimated score residual and adjacent rows
//! are differenced, which removes intercepts and (approximately) the smooth
//! nuisance term in the residual. The slope then comes from an OLS of the
//! outcome differences on covariate differences, without intercept.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::ObservationSet;
use crate::error::{Error, Result};
use crate::linreg::ols;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaFit {
    pub beta_hat: Vec<f64>,
    pub n_controls_used: usize,
    /// Control rows in ascending residual order.
    pub sort_permutation: Vec<usize>,
}

/// Sorts `rows` ascending by the residual paired with each (`eta[k]` belongs
/// to `rows[k]`). Ties go to the smaller row index.
pub fn order_by_eta(eta: &[f64], rows: &[usize]) -> Result<Vec<usize>> {
    if rows.is_empty() {
        return Err(Error::EmptyControlGroup);
    }
    if eta.len() != rows.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} residuals for {} rows",
            eta.len(),
            rows.len()
        )));
    }
    let mut pairs: Vec<(f64, usize)> = eta.iter().copied().zip(rows.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(pairs.into_iter().map(|(_, r)| r).collect())
}

/// Adjacent differences of `X` and `Y` along `sorted_rows`.
pub fn first_differences(
    sorted_rows: &[usize],
    obs: &ObservationSet,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let m = sorted_rows.len();
    if m < 2 {
        return Err(Error::TooFewControls(m));
    }
    if let Some(&index) = sorted_rows.iter().find(|&&r| r >= obs.n()) {
        return Err(Error::IndexOutOfRange { index, n: obs.n() });
    }
    let x = obs.x();
    let dx = DMatrix::from_fn(m - 1, obs.dx(), |k, c| {
        x[(sorted_rows[k + 1], c)] - x[(sorted_rows[k], c)]
    });
    let dy = sorted_rows
        .windows(2)
        .map(|w| obs.y()[w[1]] - obs.y()[w[0]])
        .collect();
    Ok((dx, dy))
}

/// Fits the slope on the control rows of `block`. `eta_hat` is indexed by
/// row id and must cover every row of `block`.
pub fn fit_beta(obs: &ObservationSet, block: &[usize], eta_hat: &[f64]) -> Result<BetaFit> {
    let controls: Vec<usize> = block
        .iter()
        .copied()
        .filter(|&i| !obs.is_treated(i))
        .collect();
    if controls.is_empty() {
        return Err(Error::EmptyControlGroup);
    }
    if controls.len() < obs.dx() + 1 {
        return Err(Error::TooFewControls(controls.len()));
    }
    let eta: Vec<f64> = controls.iter().map(|&i| eta_hat[i]).collect();
    let sorted = order_by_eta(&eta, &controls)?;
    let (dx, dy) = first_differences(&sorted, obs)?;
    let fit = ols(&dx, &dy)?;
    Ok(BetaFit {
        beta_hat: fit.coef,
        n_controls_used: controls.len(),
        sort_permutation: sorted,
    })
}

//! Score regression `Q = Z^T gamma + eta` and the estimated residuals.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::ObservationSet;
use crate::error::{Error, Result};
use crate::linreg::ols;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaFit {
    pub gamma_hat: Vec<f64>,
    pub fit_split_size: usize,
}

/// OLS of `Q` on `Z` over the rows in `rows`.
pub fn fit_gamma(obs: &ObservationSet, rows: &[usize]) -> Result<GammaFit> {
    let dz = obs.dz();
    if rows.len() < dz {
        return Err(Error::SplitTooSmall {
            rows: rows.len(),
            cols: dz,
        });
    }
    if let Some(&index) = rows.iter().find(|&&r| r >= obs.n()) {
        return Err(Error::IndexOutOfRange { index, n: obs.n() });
    }
    let z = DMatrix::from_fn(rows.len(), dz, |r, c| obs.z()[(rows[r], c)]);
    let q: Vec<f64> = rows.iter().map(|&r| obs.q()[r]).collect();
    let fit = ols(&z, &q)?;
    Ok(GammaFit {
        gamma_hat: fit.coef,
        fit_split_size: rows.len(),
    })
}

/// `Q_i - Z_i^T gamma_hat` for each `i` in `rows`, in order.
pub fn residuals_eta(fit: &GammaFit, obs: &ObservationSet, rows: &[usize]) -> Result<Vec<f64>> {
    if fit.gamma_hat.len() != obs.dz() {
        return Err(Error::ArityMismatch {
            expected: obs.dz(),
            got: fit.gamma_hat.len(),
        });
    }
    rows.iter()
        .map(|&i| {
            if i >= obs.n() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    n: obs.n(),
                });
            }
            let zg: f64 = obs
                .z()
                .row(i)
                .iter()
                .zip(&fit.gamma_hat)
                .map(|(z, g)| z * g)
                .sum();
            Ok(obs.q()[i] - zg)
        })
        .collect()
}

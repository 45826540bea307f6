//! Individual treatment effect surface.
//!
//! The matched differences from the ATT pipeline are regressed on the
//! treated covariates (and optionally their estimated score residual) with an
//! additive cubic B-spline design plus pairwise interactions. The spline
//! degrees of freedom come from 4-fold cross-validation.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::att::{matched_differences, AttEstimate};
use crate::data::ObservationSet;
use crate::error::{Error, Result};
use crate::linreg::ols;
use crate::seeds;
use crate::spline::{dimension, SplineDesign};

pub const CV_FOLDS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasisSpec {
    pub df_grid: Vec<usize>,
    pub degree: usize,
    pub include_eta: bool,
    pub interactions: bool,
}

impl Default for SplineBasisSpec {
    fn default() -> Self {
        Self {
            df_grid: vec![3, 4, 5, 6, 8, 10],
            degree: 3,
            include_eta: true,
            interactions: true,
        }
    }
}

impl SplineBasisSpec {
    pub fn validate(&self) -> Result<()> {
        if self.degree == 0 {
            return Err(Error::InvalidSpec("spline degree must be positive".into()));
        }
        if self.df_grid.is_empty() {
            return Err(Error::InvalidSpec("empty df grid".into()));
        }
        if self.df_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpec(
                "df grid must be strictly increasing".into(),
            ));
        }
        if self.df_grid[0] < self.degree {
            return Err(Error::InvalidSpec(format!(
                "df {} is below the spline degree {}",
                self.df_grid[0], self.degree
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IteModel {
    pub basis: SplineBasisSpec,
    pub df: usize,
    /// Clamped knot vector per covariate; the residual comes last when used.
    pub knots: Vec<Vec<f64>>,
    pub coef: Vec<f64>,
    pub training_mse: f64,
    /// Mean validation error per candidate df; `None` when that candidate
    /// could not be fitted on some fold.
    pub cv_mse: Vec<(usize, Option<f64>)>,
}

impl IteModel {
    fn design(&self) -> SplineDesign {
        SplineDesign {
            degree: self.basis.degree,
            df: self.df,
            knots: self.knots.clone(),
            interactions: self.basis.interactions,
        }
    }

    /// Predicted effect at an arbitrary covariate point (residual appended
    /// when the model uses it).
    pub fn predict_point(&self, point: &[f64]) -> Result<f64> {
        let row = self.design().row(point)?;
        Ok(row.iter().zip(&self.coef).map(|(a, b)| a * b).sum())
    }

    /// Plain-text form: one `key value...` line per field, floats in shortest
    /// round-trip notation.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut s = String::from("diffmatch-ite-model 1\n");
        let grid: Vec<String> = self.basis.df_grid.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(s, "df_grid {}", grid.join(" "));
        let _ = writeln!(s, "degree {}", self.basis.degree);
        let _ = writeln!(s, "include_eta {}", self.basis.include_eta);
        let _ = writeln!(s, "interactions {}", self.basis.interactions);
        let _ = writeln!(s, "df {}", self.df);
        let _ = writeln!(s, "covariates {}", self.knots.len());
        for k in &self.knots {
            let _ = writeln!(s, "knots {}", join(k));
        }
        let _ = writeln!(s, "coef {}", join(&self.coef));
        let _ = writeln!(s, "training_mse {}", self.training_mse);
        for (df, mse) in &self.cv_mse {
            match mse {
                Some(m) => {
                    let _ = writeln!(s, "cv {df} {m}");
                }
                None => {
                    let _ = writeln!(s, "cv {df} none");
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |what: &str| Error::ModelFormat(what.to_string());
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("diffmatch-ite-model 1") {
            return Err(bad("missing header"));
        }
        let mut df_grid = None;
        let mut degree = None;
        let mut include_eta = None;
        let mut interactions = None;
        let mut df = None;
        let mut knots = Vec::new();
        let mut coef = None;
        let mut training_mse = None;
        let mut cv_mse = Vec::new();
        fn floats(rest: &[&str]) -> Result<Vec<f64>> {
            rest.iter()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::ModelFormat(format!("bad number `{t}`")))
                })
                .collect()
        }
        fn int(t: Option<&&str>) -> Result<usize> {
            t.and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::ModelFormat("bad integer".into()))
        }
        fn flag(t: Option<&&str>) -> Result<bool> {
            t.and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::ModelFormat("bad flag".into()))
        }
        for line in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            let Some((&key, rest)) = toks.split_first() else {
                continue;
            };
            match key {
                "df_grid" => {
                    df_grid = Some(
                        rest.iter()
                            .map(|t| int(Some(t)))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                "degree" => degree = Some(int(rest.first())?),
                "include_eta" => include_eta = Some(flag(rest.first())?),
                "interactions" => interactions = Some(flag(rest.first())?),
                "df" => df = Some(int(rest.first())?),
                "covariates" => {}
                "knots" => knots.push(floats(rest)?),
                "coef" => coef = Some(floats(rest)?),
                "training_mse" => {
                    training_mse = Some(floats(rest)?.first().copied().ok_or_else(|| bad("mse"))?)
                }
                "cv" => {
                    let d = int(rest.first())?;
                    let m = match rest.get(1) {
                        Some(&"none") => None,
                        Some(t) => Some(floats(&[t])?[0]),
                        None => return Err(bad("cv line")),
                    };
                    cv_mse.push((d, m));
                }
                other => return Err(bad(&format!("unknown key `{other}`"))),
            }
        }
        let model = IteModel {
            basis: SplineBasisSpec {
                df_grid: df_grid.ok_or_else(|| bad("df_grid"))?,
                degree: degree.ok_or_else(|| bad("degree"))?,
                include_eta: include_eta.ok_or_else(|| bad("include_eta"))?,
                interactions: interactions.ok_or_else(|| bad("interactions"))?,
            },
            df: df.ok_or_else(|| bad("df"))?,
            knots,
            coef: coef.ok_or_else(|| bad("coef"))?,
            training_mse: training_mse.ok_or_else(|| bad("training_mse"))?,
            cv_mse,
        };
        if model.coef.len() != model.design().dimension() {
            return Err(bad("coefficient count does not match the basis"));
        }
        Ok(model)
    }
}

/// Covariate matrix for the treated rows of `rows`: `X` plus the residual
/// column when `include_eta`.
pub fn ite_covariates(
    obs: &ObservationSet,
    eta_hat: &[f64],
    rows: &[usize],
    include_eta: bool,
) -> DMatrix<f64> {
    let dx = obs.dx();
    let d = dx + usize::from(include_eta);
    DMatrix::from_fn(rows.len(), d, |r, c| {
        if c < dx {
            obs.x()[(rows[r], c)]
        } else {
            eta_hat[rows[r]]
        }
    })
}

/// Least-squares spline fit at a fixed df.
pub fn fit_spline_fixed(
    covariates: &DMatrix<f64>,
    response: &[f64],
    spec: &SplineBasisSpec,
    df: usize,
) -> Result<IteModel> {
    let design = SplineDesign::fit(covariates, df, spec.degree, spec.interactions)?;
    let basis = design.matrix(covariates)?;
    let fit = ols(&basis, response)?;
    let training_mse = fit.residuals.iter().map(|r| r * r).sum::<f64>() / response.len() as f64;
    Ok(IteModel {
        basis: spec.clone(),
        df,
        knots: design.knots,
        coef: fit.coef,
        training_mse,
        cv_mse: Vec::new(),
    })
}

fn rows_of(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |r, c| m[(idx[r], c)])
}

/// Mean validation MSE of `df` over the folds, or `None` if any fold fails.
fn cv_score(
    covariates: &DMatrix<f64>,
    response: &[f64],
    folds: &[usize],
    spec: &SplineBasisSpec,
    df: usize,
) -> Option<f64> {
    let mut total = 0.0;
    for f in 0..CV_FOLDS {
        let train: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] != f).collect();
        let valid: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] == f).collect();
        if valid.is_empty() {
            return None;
        }
        let train_y: Vec<f64> = train.iter().map(|&i| response[i]).collect();
        let model = fit_spline_fixed(&rows_of(covariates, &train), &train_y, spec, df).ok()?;
        let mut sse = 0.0;
        for &i in &valid {
            let point: Vec<f64> = covariates.row(i).iter().copied().collect();
            let e = model.predict_point(&point).ok()? - response[i];
            sse += e * e;
        }
        total += sse / valid.len() as f64;
    }
    Some(total / CV_FOLDS as f64)
}

/// Fits the effect surface from a completed ATT run.
///
/// The response for treated row `i` matched to control `c` is
/// `(Y_i - X_i^T beta) - (Y_c - X_c^T beta)`. Folds come from a shuffle seeded
/// by `cv_seed`; equal validation errors favour the smaller df.
pub fn fit_ite(
    obs: &ObservationSet,
    est: &AttEstimate,
    spec: &SplineBasisSpec,
    cv_seed: u64,
) -> Result<IteModel> {
    spec.validate()?;
    let rows: Vec<usize> = est.matches.pairs.iter().map(|&(t, _)| t).collect();
    let response = matched_differences(obs, &est.beta.beta_hat, &est.matches.pairs);
    let covariates = ite_covariates(obs, &est.eta_hat, &rows, spec.include_eta);
    fit_ite_on(&covariates, &response, spec, cv_seed)
}

/// Cross-validated fit on an explicit covariate matrix and response.
pub fn fit_ite_on(
    covariates: &DMatrix<f64>,
    response: &[f64],
    spec: &SplineBasisSpec,
    cv_seed: u64,
) -> Result<IteModel> {
    spec.validate()?;
    let m = response.len();
    let max_dim = dimension(
        covariates.ncols(),
        *spec.df_grid.last().unwrap(),
        spec.interactions,
    );
    if m < max_dim {
        return Err(Error::TooFewRows(m));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut seeds::rng(cv_seed));
    let mut folds = vec![0usize; m];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % CV_FOLDS;
    }

    let cv_mse: Vec<(usize, Option<f64>)> = spec
        .df_grid
        .iter()
        .map(|&df| (df, cv_score(covariates, response, &folds, spec, df)))
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for &(df, score) in &cv_mse {
        if let Some(s) = score {
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((df, s));
            }
        }
    }
    let df = match best {
        Some((df, _)) => df,
        None => {
            // Surface the underlying failure of the smallest candidate if there is one.
            fit_spline_fixed(covariates, response, spec, spec.df_grid[0])?;
            return Err(Error::InvalidSpec(
                "no df candidate survived cross-validation".into(),
            ));
        }
    };
    let mut model = fit_spline_fixed(covariates, response, spec, df)?;
    model.cv_mse = cv_mse;
    Ok(model)
}

pub fn predict_ite(model: &IteModel, x: &[f64], eta_hat: Option<f64>) -> Result<f64> {
    let expected = model.knots.len() - usize::from(model.basis.include_eta);
    if x.len() != expected {
        return Err(Error::ArityMismatch {
            expected,
            got: x.len(),
        });
    }
    let mut point = x.to_vec();
    match (model.basis.include_eta, eta_hat) {
        (true, Some(e)) => point.push(e),
        (false, None) => {}
        (true, None) => {
            return Err(Error::ArityMismatch {
                expected: expected + 1,
                got: expected,
            })
        }
        (false, Some(_)) => {
            return Err(Error::ArityMismatch {
                expected,
                got: expected + 1,
            })
        }
    }
    model.predict_point(&point)
}

/// Mean of `(prediction(i) - truth(i))^2` over `rows`.
pub fn ite_mse_with(
    rows: &[usize],
    prediction: impl Fn(usize) -> f64,
    truth: impl Fn(usize) -> f64,
) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter()
        .map(|&i| (prediction(i) - truth(i)).powi(2))
        .sum::<f64>()
        / rows.len() as f64
}

/// Squared error of the fitted surface against a known effect function over
/// the given (treated) rows. `truth` receives the sample and a row index.
pub fn ite_mse(
    model: &IteModel,
    obs: &ObservationSet,
    eta_hat: &[f64],
    rows: &[usize],
    truth: impl Fn(&ObservationSet, usize) -> f64,
) -> f64 {
    ite_mse_with(
        rows,
        |i| {
            let eta = model.basis.include_eta.then(|| eta_hat[i]);
            predict_ite(model, &obs.x_row(i), eta).expect("model arity matches the sample")
        },
        |i| truth(obs, i),
    )
}

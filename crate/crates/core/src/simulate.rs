//! Synthetic data and Monte-Carlo harness.
//!
//! The generator draws `X1..X4 ~ N(0, 1)`, `eta ~ U(-1, 1)` and
//! `eps ~ N(0, eps_sd^2)` independently, then sets
//!
//! ```text
//! Q = X4 + eta
//! Y = alpha(X, eta) 1{Q >= 0} + X1 + X3 + eta / 2 + eps
//! ```
//!
//! with `alpha = X1^2 + X2 X3 + eta^2` (or `X1^2 + X2 X3` for the
//! covariate-only case). The outcome covariates are `(X1, X2, X3)`, the score
//! covariates `(X1, .., X4)` and the cutoff is 0, so the true slope is
//! `(1, 0, 1)` and the true score coefficients `(0, 0, 0, 1)`. By the
//! symmetry `(X4, eta) -> (-X4, -eta)` the true ATT of the default case is
//! exactly 4/3.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::att::{estimate_att, estimate_att_crossfit_with};
use crate::data::{split_three_way, ObservationSet};
use crate::error::{Error, Result};
use crate::ite::{fit_ite, ite_mse, SplineBasisSpec};
use crate::seeds::{self, derive_seed, CV_STREAM, SPLIT_STREAM};
use crate::stats::{self, HistogramBin};

pub const THETA0: f64 = 4.0 / 3.0;
/// Reference asymptotic variance of the scaled estimator for this design.
pub const SIGMA2_THETA: f64 = 11.455;
pub const BETA0: [f64; 3] = [1.0, 0.0, 1.0];
pub const GAMMA0: [f64; 4] = [0.0, 0.0, 0.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IteKind {
    /// Effect depends on the covariates only.
    XOnly,
    /// Effect depends on the covariates and the score residual.
    XAndEta,
}

impl IteKind {
    pub fn alpha(self, x: &[f64], eta: f64) -> f64 {
        let base = x[0] * x[0] + x[1] * x[2];
        match self {
            IteKind::XOnly => base,
            IteKind::XAndEta => base + eta * eta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    pub seed: u64,
    pub ite_kind: IteKind,
    /// Standard deviation of the outcome noise; the default reads the noise
    /// law `N(0, 0.5)` as variance 0.5.
    pub eps_sd: f64,
}

impl DgpConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            ite_kind: IteKind::XAndEta,
            eps_sd: 0.5f64.sqrt(),
        }
    }

    pub fn with_kind(mut self, kind: IteKind) -> Self {
        self.ite_kind = kind;
        self
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

struct Draw {
    x: [f64; 4],
    eta: f64,
    eps: f64,
}

fn draw_row<R: Rng>(rng: &mut R) -> Draw {
    let x = [
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    ];
    let eta = rng.random_range(-1.0..1.0);
    let eps: f64 = rng.sample(StandardNormal);
    Draw { x, eta, eps }
}

fn assemble(rows: &[(f64, [f64; 4], f64)]) -> Result<ObservationSet> {
    let n = rows.len();
    let y = rows.iter().map(|r| r.0).collect();
    let q = rows.iter().map(|r| r.2).collect();
    let z = DMatrix::from_fn(n, 4, |i, c| rows[i].1[c]);
    let x = z.columns(0, 3).into_owned();
    ObservationSet::new(y, x, z, q, 0.0)
}

pub fn generate(config: &DgpConfig) -> Result<ObservationSet> {
    if config.eps_sd.is_nan() || config.eps_sd <= 0.0 {
        return Err(Error::InvalidSpec(format!(
            "noise sd must be positive, got {}",
            config.eps_sd
        )));
    }
    let mut rng = seeds::rng(config.seed);
    let rows: Vec<(f64, [f64; 4], f64)> = (0..config.n)
        .map(|_| {
            let d = draw_row(&mut rng);
            let q = d.x[3] + d.eta;
            let effect = if q >= 0.0 {
                config.ite_kind.alpha(&d.x, d.eta)
            } else {
                0.0
            };
            let y = effect + d.x[0] + d.x[2] + d.eta / 2.0 + config.eps_sd * d.eps;
            (y, d.x, q)
        })
        .collect();
    assemble(&rows)
}

/// Same covariates and score as [`generate`], with `Y = X^T (1, 0, 1)`: no
/// effect, no nuisance, no noise.
pub fn generate_noiseless_null(n: usize, seed: u64) -> Result<ObservationSet> {
    let mut rng = seeds::rng(seed);
    let rows: Vec<(f64, [f64; 4], f64)> = (0..n)
        .map(|_| {
            let d = draw_row(&mut rng);
            let y = BETA0[0] * d.x[0] + BETA0[1] * d.x[1] + BETA0[2] * d.x[2];
            (y, d.x, d.x[3] + d.eta)
        })
        .collect();
    assemble(&rows)
}

/// Score residual of row `i` of a generated sample.
pub fn true_eta(obs: &ObservationSet, i: usize) -> f64 {
    obs.q()[i] - obs.z()[(i, 3)]
}

pub fn true_alpha(kind: IteKind, obs: &ObservationSet, i: usize) -> f64 {
    kind.alpha(&obs.x_row(i), true_eta(obs, i))
}

/// Monte-Carlo ATT of the default design from `samples` draws.
pub fn true_att_oracle(samples: usize, seed: u64) -> f64 {
    true_att_oracle_with(samples, seed, |x, eta| IteKind::XAndEta.alpha(x, eta))
}

/// Mean of `alpha(X, eta)` over the draws with `X4 + eta >= 0`.
pub fn true_att_oracle_with(samples: usize, seed: u64, alpha: impl Fn(&[f64], f64) -> f64) -> f64 {
    let mut rng = seeds::rng(seed);
    let mut sum = 0.0;
    let mut count = 0usize;
    for _ in 0..samples {
        let d = draw_row(&mut rng);
        if d.x[3] + d.eta >= 0.0 {
            sum += alpha(&d.x, d.eta);
            count += 1;
        }
    }
    sum / count as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub n: usize,
    pub reps: usize,
    pub crossfit: bool,
    pub target_variance: f64,
    pub zetas: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub ks_stat: f64,
    pub histogram: Vec<HistogramBin>,
}

impl McReport {
    pub fn from_zetas(n: usize, crossfit: bool, zetas: Vec<f64>) -> Self {
        Self {
            n,
            reps: zetas.len(),
            crossfit,
            target_variance: SIGMA2_THETA,
            mean: stats::mean(&zetas),
            variance: stats::sample_variance(&zetas),
            skewness: stats::skewness(&zetas),
            excess_kurtosis: stats::excess_kurtosis(&zetas),
            ks_stat: stats::ks_normal(&zetas, SIGMA2_THETA),
            histogram: stats::histogram_fd(&zetas),
            zetas,
        }
    }

    pub fn write_histogram_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["bin_left", "bin_right", "count"])?;
        for b in &self.histogram {
            wtr.write_record([
                b.bin_left.to_string(),
                b.bin_right.to_string(),
                b.count.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Seed of dataset `k` in a Monte-Carlo batch.
pub fn replicate_seed(master_seed: u64, k: usize) -> u64 {
    derive_seed(master_seed, k as u64)
}

/// Generic harness: `estimate` receives dataset `k` and its split seed and
/// returns an estimate that is scaled to `sqrt(scale) * (estimate - THETA0)`.
pub fn monte_carlo_with<F>(
    config: &DgpConfig,
    reps: usize,
    master_seed: u64,
    scale: f64,
    crossfit: bool,
    estimate: F,
) -> Result<McReport>
where
    F: Fn(&ObservationSet, u64) -> Result<f64> + Sync,
{
    if reps < 30 {
        return Err(Error::InvalidSpec(format!(
            "need at least 30 Monte-Carlo replicates, got {reps}"
        )));
    }
    let zetas = (0..reps)
        .into_par_iter()
        .map(|k| {
            let seed = replicate_seed(master_seed, k);
            let run = || -> Result<f64> {
                let obs = generate(&config.with_seed(seed))?;
                estimate(&obs, derive_seed(seed, SPLIT_STREAM))
            };
            run()
                .map(|theta| scale.sqrt() * (theta - THETA0))
                .map_err(|e| Error::InReplicate {
                    index: k,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(McReport::from_zetas(config.n, crossfit, zetas))
}

/// `zeta_k = sqrt(floor(n/3)) (theta_k - theta0)` for single runs and
/// `sqrt(n) (theta_k - theta0)` for cross-fitted runs.
pub fn monte_carlo_att(
    config: &DgpConfig,
    reps: usize,
    crossfit: bool,
    master_seed: u64,
) -> Result<McReport> {
    let scale = if crossfit {
        config.n as f64
    } else {
        (config.n / 3) as f64
    };
    monte_carlo_with(
        config,
        reps,
        master_seed,
        scale,
        crossfit,
        |obs, split_seed| {
            let splits = split_three_way(obs.n(), split_seed, true)?;
            if crossfit {
                Ok(estimate_att_crossfit_with(obs, &splits)?.theta_cf)
            } else {
                Ok(estimate_att(obs, &splits)?.theta_hat)
            }
        },
    )
}

/// Treated-set MSE of the fitted effect surface for one generated dataset.
pub fn ite_replicate(config: &DgpConfig, spec: &SplineBasisSpec) -> Result<f64> {
    let obs = generate(config)?;
    let splits = split_three_way(obs.n(), derive_seed(config.seed, SPLIT_STREAM), true)?;
    let est = estimate_att(&obs, &splits)?;
    let model = fit_ite(&obs, &est, spec, derive_seed(config.seed, CV_STREAM))?;
    let rows: Vec<usize> = est.matches.pairs.iter().map(|&(t, _)| t).collect();
    let kind = config.ite_kind;
    Ok(ite_mse(&model, &obs, &est.eta_hat, &rows, |o, i| {
        true_alpha(kind, o, i)
    }))
}

/// One MSE per dataset seed, in seed order.
pub fn monte_carlo_ite(
    config: &DgpConfig,
    spec: &SplineBasisSpec,
    seeds: &[u64],
) -> Result<Vec<f64>> {
    seeds
        .par_iter()
        .enumerate()
        .map(|(k, &s)| {
            ite_replicate(&config.with_seed(s), spec).map_err(|e| Error::InReplicate {
                index: k,
                source: Box::new(e),
            })
        })
        .collect()
}

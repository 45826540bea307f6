//! n-out-of-n bootstrap of the ATT estimate.
//!
//! Replicate `r` resamples whole rows with replacement from a stream seeded
//! by `derive_seed(seed, r)`, draws a fresh split from a child of that seed,
//! and reruns the estimator. The variance estimate is
//! `floor(n/3) * sample_variance(replicates)`; the interval is the
//! percentile interval of the replicates.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::att::{estimate_att, estimate_att_crossfit};
use crate::data::{split_three_way, ObservationSet};
use crate::error::{Error, Result};
use crate::seeds::{self, derive_seed, SPLIT_STREAM};
use crate::stats::{quantile, sample_variance};

/// Largest tolerated share of failed replicates.
pub const FAILURE_BUDGET: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    /// Successful replicate estimates in replicate order.
    pub replicates: Vec<f64>,
    pub sigma2_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub b_requested: usize,
    pub b_failed: usize,
    /// Indices of replicates dropped as structurally degenerate.
    pub failed: Vec<usize>,
}

/// Runs one replicate in isolation.
pub fn bootstrap_replicate(
    obs: &ObservationSet,
    r: usize,
    seed: u64,
    crossfit: bool,
) -> Result<f64> {
    let n = obs.n();
    let rseed = derive_seed(seed, r as u64);
    let mut rng = seeds::rng(rseed);
    let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let sample = obs.select_rows(&rows)?;
    let split_seed = derive_seed(rseed, SPLIT_STREAM);
    if crossfit {
        Ok(estimate_att_crossfit(&sample, split_seed)?.theta_cf)
    } else {
        let splits = split_three_way(n, split_seed, true)?;
        Ok(estimate_att(&sample, &splits)?.theta_hat)
    }
}

/// Variance scaling and percentile interval from finished replicates.
pub fn summarize(
    replicates: Vec<f64>,
    n: usize,
    level: f64,
    b_requested: usize,
    failed: Vec<usize>,
) -> Result<BootstrapResult> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    let b_failed = failed.len();
    if b_failed as f64 > FAILURE_BUDGET * b_requested as f64 || replicates.len() < 2 {
        return Err(Error::TooManyFailures {
            failed: b_failed,
            requested: b_requested,
        });
    }
    let n_tilde = (n / 3) as f64;
    let sigma2_hat = n_tilde * sample_variance(&replicates);
    let alpha = (1.0 - level) / 2.0;
    let ci_low = quantile(&replicates, alpha);
    let ci_high = quantile(&replicates, 1.0 - alpha);
    Ok(BootstrapResult {
        replicates,
        sigma2_hat,
        ci_low,
        ci_high,
        level,
        b_requested,
        b_failed,
        failed,
    })
}

pub fn bootstrap_att(
    obs: &ObservationSet,
    b: usize,
    level: f64,
    seed: u64,
    crossfit: bool,
) -> Result<BootstrapResult> {
    if b < 2 {
        return Err(Error::InvalidSpec(format!(
            "need at least 2 bootstrap replicates, got {b}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    let outcomes: Vec<Result<f64>> = (0..b)
        .into_par_iter()
        .map(|r| bootstrap_replicate(obs, r, seed, crossfit))
        .collect();
    let mut replicates = Vec::with_capacity(b);
    let mut failed = Vec::new();
    for (r, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(v) => replicates.push(v),
            Err(_) => failed.push(r),
        }
    }
    summarize(replicates, obs.n(), level, b, failed)
}

//! Command-line front end.
//!
//! Every subcommand prints one JSON document on stdout, carrying a run
//! manifest with the parsed flags, the seed, the crate version and the
//! SHA-256 of the input file. Exit codes: 0 success, 2 invalid input,
//! 3 numeric failure, 4 bootstrap failure budget exceeded.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::att::{estimate_att, estimate_att_crossfit_with};
use crate::bootstrap::bootstrap_att;
use crate::data::{load_csv, split_three_way, treatment_mask, ColumnSpec, ObservationSet};
use crate::error::{Error, Result};
use crate::ite::{fit_ite, predict_ite, SplineBasisSpec};
use crate::seeds::{derive_seed, CV_STREAM};
use crate::simulate::{self, DgpConfig, IteKind};
use crate::stats;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
pub const EXIT_BOOTSTRAP: u8 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "diffmatch",
    version,
    about = "ATT and ITE estimation by differencing and residual matching"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the average treatment effect on the treated.
    Estimate(EstimateArgs),
    /// Bootstrap variance and percentile interval of the ATT.
    Bootstrap(BootstrapArgs),
    /// Fit the individual treatment effect surface.
    Ite(IteArgs),
    /// Synthetic data and Monte-Carlo studies.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Outcome column.
    #[arg(long)]
    pub y: String,
    /// Score column.
    #[arg(long)]
    pub q: String,
    /// Outcome covariate columns, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub x: Vec<String>,
    /// Score covariate columns, comma-separated; may overlap with --x.
    #[arg(long, value_delimiter = ',', required = true)]
    pub z: Vec<String>,
    /// Treatment threshold; rows with score >= tau are treated.
    #[arg(long, allow_hyphen_values = true)]
    pub tau: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Append a constant column to the score covariates.
    #[arg(long)]
    pub add_intercept_z: bool,
    /// Split in file order instead of after a seeded shuffle.
    #[arg(long)]
    pub no_shuffle: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Average the three role rotations of the split.
    #[arg(long)]
    pub crossfit: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BootstrapArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub estimate: EstimateArgs,
    /// Number of bootstrap replicates.
    #[arg(long, default_value_t = 500)]
    pub b: usize,
    /// Confidence level of the percentile interval.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IteArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Candidate spline degrees of freedom.
    #[arg(long, value_delimiter = ',', default_value = "3,4,5,6,8,10")]
    pub df_grid: Vec<usize>,
    /// Use the estimated score residual as a covariate.
    #[arg(long, action = ArgAction::Set, default_value_t = true)]
    pub include_eta: bool,
    /// Leave out pairwise interaction terms.
    #[arg(long)]
    pub no_interactions: bool,
    /// Where to write the fitted model.
    #[arg(long)]
    pub model_out: PathBuf,
    /// CSV of query points (the --x columns, plus `eta` with --include-eta true).
    #[arg(long)]
    pub predict_grid: Option<PathBuf>,
    /// CSV for predictions; without it they go into the JSON output.
    #[arg(long)]
    pub predict_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    /// Monte-Carlo study of the ATT estimator.
    McAtt,
    /// Monte-Carlo study of the ITE fit.
    McIte,
    /// Write one synthetic dataset as CSV.
    Gen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindArg {
    XAndEta,
    XOnly,
}

impl From<KindArg> for IteKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::XAndEta => IteKind::XAndEta,
            KindArg::XOnly => IteKind::XOnly,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub mode: SimMode,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub crossfit: bool,
    /// Effect surface of the generator.
    #[arg(long, value_enum, default_value = "x-and-eta")]
    pub kind: KindArg,
    /// Output file: the CSV for `gen`, the histogram CSV for `mc-att`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "3,4,5,6,8,10")]
    pub df_grid: Vec<usize>,
    /// For `mc-ite`; defaults to true for x-and-eta and false for x-only.
    #[arg(long, action = ArgAction::Set)]
    pub include_eta: Option<bool>,
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> u8 {
    if matches!(err.root(), Error::TooManyFailures { .. }) {
        EXIT_BOOTSTRAP
    } else if err.is_input_error() {
        EXIT_INPUT
    } else {
        EXIT_NUMERIC
    }
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn manifest(
    subcommand: &str,
    flags: &impl Serialize,
    seeds: &[u64],
    digest: Option<String>,
    started: Instant,
) -> Value {
    json!({
        "subcommand": subcommand,
        "flags": flags,
        "seeds": seeds,
        "version": env!("CARGO_PKG_VERSION"),
        "input_digest": digest,
        "duration_ms": started.elapsed().as_secs_f64() * 1e3,
    })
}

fn load(args: &DataArgs) -> Result<(ObservationSet, String)> {
    let spec = ColumnSpec {
        y_col: args.y.clone(),
        q_col: args.q.clone(),
        x_cols: args.x.clone(),
        z_cols: args.z.clone(),
        tau0: args.tau,
    };
    let obs = load_csv(&args.data, &spec)?;
    let obs = if args.add_intercept_z {
        obs.with_score_intercept()
    } else {
        obs
    };
    Ok((obs, file_digest(&args.data)?))
}

fn counts(obs: &ObservationSet) -> (usize, usize) {
    let treated = treatment_mask(obs).iter().filter(|&&t| t).count();
    (treated, obs.n() - treated)
}

/// Point estimate as JSON fields (without the manifest).
fn estimate_fields(obs: &ObservationSet, args: &EstimateArgs) -> Result<Value> {
    let splits = split_three_way(obs.n(), args.data.seed, !args.data.no_shuffle)?;
    let (n_treated, n_control) = counts(obs);
    if args.crossfit {
        let cf = estimate_att_crossfit_with(obs, &splits)?;
        let rotations: Vec<Value> = cf
            .rotations
            .iter()
            .map(|r| {
                json!({
                    "theta_hat": r.theta_hat,
                    "beta_hat": r.beta.beta_hat,
                    "gamma_hat": r.gamma.gamma_hat,
                    "n_treated_i3": r.n_treated_i3,
                    "n_control_i3": r.n_control_i3,
                })
            })
            .collect();
        Ok(json!({
            "theta_hat": cf.theta_cf,
            "crossfit": true,
            "beta_hat": cf.rotations[0].beta.beta_hat,
            "gamma_hat": cf.rotations[0].gamma.gamma_hat,
            "n": obs.n(),
            "n_treated": n_treated,
            "n_control": n_control,
            "rotations": rotations,
        }))
    } else {
        let est = estimate_att(obs, &splits)?;
        Ok(json!({
            "theta_hat": est.theta_hat,
            "crossfit": false,
            "beta_hat": est.beta.beta_hat,
            "gamma_hat": est.gamma.gamma_hat,
            "n": obs.n(),
            "n_treated": n_treated,
            "n_control": n_control,
            "n_treated_i3": est.n_treated_i3,
            "n_control_i3": est.n_control_i3,
        }))
    }
}

fn with_manifest(mut body: Value, manifest: Value) -> Value {
    body.as_object_mut()
        .expect("object body")
        .insert("manifest".into(), manifest);
    body
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<Value> {
    let started = Instant::now();
    let (obs, digest) = load(&args.data)?;
    let body = estimate_fields(&obs, args)?;
    Ok(with_manifest(
        body,
        manifest("estimate", args, &[args.data.seed], Some(digest), started),
    ))
}

pub fn cmd_bootstrap(args: &BootstrapArgs) -> Result<Value> {
    let started = Instant::now();
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(Error::InvalidLevel(args.level));
    }
    if args.b < 2 {
        return Err(Error::InvalidSpec(format!(
            "--b must be at least 2, got {}",
            args.b
        )));
    }
    let (obs, digest) = load(&args.estimate.data)?;
    let point = estimate_fields(&obs, &args.estimate)?;
    let seed = args.estimate.data.seed;
    let boot = bootstrap_att(&obs, args.b, args.level, seed, args.estimate.crossfit)?;
    let body = json!({
        "theta_hat": point["theta_hat"],
        "sigma2_hat": boot.sigma2_hat,
        "ci": [boot.ci_low, boot.ci_high],
        "level": boot.level,
        "b": boot.b_requested,
        "b_failed": boot.b_failed,
        "bootstrap_mean": stats::mean(&boot.replicates),
        "replicates": boot.replicates,
    });
    Ok(with_manifest(
        body,
        manifest("bootstrap", args, &[seed], Some(digest), started),
    ))
}

pub fn cmd_ite(args: &IteArgs) -> Result<Value> {
    let started = Instant::now();
    let (obs, digest) = load(&args.data)?;
    let seed = args.data.seed;
    let spec = SplineBasisSpec {
        df_grid: args.df_grid.clone(),
        degree: 3,
        include_eta: args.include_eta,
        interactions: !args.no_interactions,
    };
    spec.validate()?;
    let splits = split_three_way(obs.n(), seed, !args.data.no_shuffle)?;
    let est = estimate_att(&obs, &splits)?;
    let cv_seed = derive_seed(seed, CV_STREAM);
    let model = fit_ite(&obs, &est, &spec, cv_seed)?;
    std::fs::write(&args.model_out, model.to_text())?;

    let mut body = json!({
        "theta_hat": est.theta_hat,
        "chosen_df": model.df,
        "cv_mse": model.cv_mse.iter().map(|(d, m)| json!({"df": d, "mse": m})).collect::<Vec<_>>(),
        "training_mse": model.training_mse,
        "n_train": est.matches.pairs.len(),
        "model_out": args.model_out,
    });
    if let Some(grid) = &args.predict_grid {
        let predictions = predict_grid(&model, grid, &args.data.x)?;
        match &args.predict_out {
            Some(path) => {
                write_predictions(path, &args.data.x, args.include_eta, &predictions)?;
                body["predict_out"] = json!(path);
            }
            None => {
                body["predictions"] =
                    json!(predictions.iter().map(|(_, p)| *p).collect::<Vec<_>>());
            }
        }
    }
    Ok(with_manifest(
        body,
        manifest("ite", args, &[seed, cv_seed], Some(digest), started),
    ))
}

type Prediction = (Vec<f64>, f64);

fn predict_grid(
    model: &crate::ite::IteModel,
    path: &Path,
    x_cols: &[String],
) -> Result<Vec<Prediction>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let mut cols: Vec<String> = x_cols.to_vec();
    if model.basis.include_eta {
        cols.push("eta".into());
    }
    let pos = cols
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h.trim() == c)
                .ok_or_else(|| Error::MissingColumn(c.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let point = pos
            .iter()
            .zip(&cols)
            .map(|(&p, c)| {
                let v: f64 = rec
                    .get(p)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::ParseError {
                        row: i + 1,
                        col: c.clone(),
                    })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFiniteValue {
                        row: i + 1,
                        col: c.clone(),
                    })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let dx = x_cols.len();
        let eta = model.basis.include_eta.then(|| point[dx]);
        let p = predict_ite(model, &point[..dx], eta)?;
        out.push((point, p));
    }
    Ok(out)
}

fn write_predictions(
    path: &Path,
    x_cols: &[String],
    include_eta: bool,
    preds: &[Prediction],
) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = x_cols.to_vec();
    if include_eta {
        header.push("eta".into());
    }
    header.push("alpha_hat".into());
    wtr.write_record(&header)?;
    for (point, p) in preds {
        let mut rec: Vec<String> = point.iter().map(|v| v.to_string()).collect();
        rec.push(p.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes a generated sample with header `y,x1,x2,x3,x4,q`.
pub fn write_dgp_csv<W: Write>(writer: W, obs: &ObservationSet) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["y", "x1", "x2", "x3", "x4", "q"])?;
    for i in 0..obs.n() {
        let mut rec = vec![obs.y()[i].to_string()];
        rec.extend(obs.z_row(i).iter().map(|v| v.to_string()));
        rec.push(obs.q()[i].to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<Value> {
    let started = Instant::now();
    let config = DgpConfig::new(args.n, args.seed).with_kind(args.kind.into());
    let body = match args.mode {
        SimMode::Gen => {
            let obs = simulate::generate(&config)?;
            match &args.out {
                Some(path) => {
                    write_dgp_csv(BufWriter::new(File::create(path)?), &obs)?;
                    json!({ "mode": "gen", "n": obs.n(), "out": path })
                }
                None => {
                    let mut buf = Vec::new();
                    write_dgp_csv(&mut buf, &obs)?;
                    json!({ "mode": "gen", "n": obs.n(), "csv": String::from_utf8_lossy(&buf) })
                }
            }
        }
        SimMode::McAtt => {
            let report = simulate::monte_carlo_att(&config, args.reps, args.crossfit, args.seed)?;
            if let Some(path) = &args.out {
                report.write_histogram_csv(BufWriter::new(File::create(path)?))?;
            }
            let mut v = serde_json::to_value(&report).expect("report serializes");
            v["mode"] = json!("mc-att");
            v
        }
        SimMode::McIte => {
            let include_eta = args.include_eta.unwrap_or(args.kind == KindArg::XAndEta);
            let spec = SplineBasisSpec {
                df_grid: args.df_grid.clone(),
                degree: 3,
                include_eta,
                interactions: true,
            };
            spec.validate()?;
            let seeds: Vec<u64> = (0..args.reps)
                .map(|k| simulate::replicate_seed(args.seed, k))
                .collect();
            let mses = simulate::monte_carlo_ite(&config, &spec, &seeds)?;
            json!({
                "mode": "mc-ite",
                "n": args.n,
                "reps": args.reps,
                "include_eta": include_eta,
                "mse": mses,
                "median_mse": stats::median(&mses),
                "mean_mse": stats::mean(&mses),
            })
        }
    };
    Ok(with_manifest(
        body,
        manifest("simulate", args, &[args.seed], None, started),
    ))
}

pub fn execute(cli: &Cli) -> Result<Value> {
    match &cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Bootstrap(a) => cmd_bootstrap(a),
        Command::Ite(a) => cmd_ite(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

//! Observation container, CSV ingestion, and the three-way sample split.
//!
//! Treatment is assigned by `Q >= tau0`: an observation sitting exactly on
//! the cutoff counts as treated.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

/// Smallest sample that leaves every split nonempty.
pub const MIN_ROWS: usize = 9;

/// Columnar sample `{Y, X, Z, Q}` with its treatment threshold.
///
/// `x` holds the outcome-side covariates and `z` the score-side covariates;
/// they may share columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    y: Vec<f64>,
    x: DMatrix<f64>,
    z: DMatrix<f64>,
    q: Vec<f64>,
    tau0: f64,
}

impl ObservationSet {
    pub fn new(
        y: Vec<f64>,
        x: DMatrix<f64>,
        z: DMatrix<f64>,
        q: Vec<f64>,
        tau0: f64,
    ) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n || z.nrows() != n || q.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "y has {n} rows, x {}, z {}, q {}",
                x.nrows(),
                z.nrows(),
                q.len()
            )));
        }
        if x.ncols() == 0 || z.ncols() == 0 {
            return Err(Error::DimensionMismatch(
                "x and z need at least one column".into(),
            ));
        }
        if n < MIN_ROWS {
            return Err(Error::TooFewRows(n));
        }
        if !tau0.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "threshold {tau0} is not finite"
            )));
        }
        let check = |vals: &mut dyn Iterator<Item = (usize, f64)>, name: &str| -> Result<()> {
            for (row, v) in vals {
                if !v.is_finite() {
                    return Err(Error::NonFiniteValue {
                        row,
                        col: name.to_string(),
                    });
                }
            }
            Ok(())
        };
        check(&mut y.iter().copied().enumerate(), "y")?;
        check(&mut q.iter().copied().enumerate(), "q")?;
        for j in 0..x.ncols() {
            check(
                &mut x.column(j).iter().copied().enumerate(),
                &format!("x[{j}]"),
            )?;
        }
        for j in 0..z.ncols() {
            check(
                &mut z.column(j).iter().copied().enumerate(),
                &format!("z[{j}]"),
            )?;
        }
        Ok(Self { y, x, z, q, tau0 })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn dx(&self) -> usize {
        self.x.ncols()
    }

    pub fn dz(&self) -> usize {
        self.z.ncols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    pub fn x_row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    pub fn z_row(&self, i: usize) -> Vec<f64> {
        self.z.row(i).iter().copied().collect()
    }

    /// `X_i^T b`.
    pub fn x_dot(&self, i: usize, b: &[f64]) -> f64 {
        self.x.row(i).iter().zip(b).map(|(a, c)| a * c).sum()
    }

    pub fn is_treated(&self, i: usize) -> bool {
        self.q[i] >= self.tau0
    }

    /// New sample made of the given rows, in order. Repeats are allowed.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let n = self.n();
        if let Some(&index) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::IndexOutOfRange { index, n });
        }
        let x = DMatrix::from_fn(rows.len(), self.dx(), |r, c| self.x[(rows[r], c)]);
        let z = DMatrix::from_fn(rows.len(), self.dz(), |r, c| self.z[(rows[r], c)]);
        let y = rows.iter().map(|&r| self.y[r]).collect();
        let q = rows.iter().map(|&r| self.q[r]).collect();
        Self::new(y, x, z, q, self.tau0)
    }

    /// Same sample with a constant column appended to `z`.
    pub fn with_score_intercept(&self) -> Self {
        let n = self.n();
        let dz = self.dz();
        let z = DMatrix::from_fn(n, dz + 1, |r, c| if c < dz { self.z[(r, c)] } else { 1.0 });
        Self { z, ..self.clone() }
    }

    /// Same sample with the outcome replaced.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(y, self.x.clone(), self.z.clone(), self.q.clone(), self.tau0)
    }
}

/// Column roles for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub y_col: String,
    pub q_col: String,
    pub x_cols: Vec<String>,
    pub z_cols: Vec<String>,
    pub tau0: f64,
}

impl ColumnSpec {
    pub fn validate(&self) -> Result<()> {
        if self.y_col == self.q_col {
            return Err(Error::InvalidSpec(format!(
                "outcome and score columns are both `{}`",
                self.y_col
            )));
        }
        if self.x_cols.is_empty() {
            return Err(Error::InvalidSpec(
                "no outcome covariates (--x) given".into(),
            ));
        }
        if self.z_cols.is_empty() {
            return Err(Error::InvalidSpec("no score covariates (--z) given".into()));
        }
        Ok(())
    }
}

pub fn load_csv(path: impl AsRef<Path>, spec: &ColumnSpec) -> Result<ObservationSet> {
    let file = std::fs::File::open(path)?;
    read_csv(file, spec)
}

/// Parses a headed, comma-separated table. Row numbers in errors count
/// data rows from 1.
pub fn read_csv<R: Read>(reader: R, spec: &ColumnSpec) -> Result<ObservationSet> {
    spec.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let y_pos = position(&spec.y_col)?;
    let q_pos = position(&spec.q_col)?;
    let x_pos = spec
        .x_cols
        .iter()
        .map(|c| position(c))
        .collect::<Result<Vec<_>>>()?;
    let z_pos = spec
        .z_cols
        .iter()
        .map(|c| position(c))
        .collect::<Result<Vec<_>>>()?;

    let mut y = Vec::new();
    let mut q = Vec::new();
    let mut x_flat = Vec::new();
    let mut z_flat = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let cell = |pos: usize| -> Result<f64> {
            let col = headers.get(pos).unwrap_or_default().to_string();
            let raw = record.get(pos).ok_or_else(|| Error::ParseError {
                row,
                col: col.clone(),
            })?;
            let v: f64 = raw.trim().parse().map_err(|_| Error::ParseError {
                row,
                col: col.clone(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { row, col });
            }
            Ok(v)
        };
        y.push(cell(y_pos)?);
        q.push(cell(q_pos)?);
        for &p in &x_pos {
            x_flat.push(cell(p)?);
        }
        for &p in &z_pos {
            z_flat.push(cell(p)?);
        }
    }
    let n = y.len();
    if n < MIN_ROWS {
        return Err(Error::TooFewRows(n));
    }
    let x = DMatrix::from_row_slice(n, x_pos.len(), &x_flat);
    let z = DMatrix::from_row_slice(n, z_pos.len(), &z_flat);
    ObservationSet::new(y, x, z, q, spec.tau0)
}

/// Writes `obs` back out under the names in `spec`. A name listed in both
/// `x_cols` and `z_cols` is written once, from `x`.
pub fn write_csv<W: Write>(writer: W, obs: &ObservationSet, spec: &ColumnSpec) -> Result<()> {
    let mut names: Vec<&str> = vec![&spec.y_col, &spec.q_col];
    let mut sources: Vec<Box<dyn Fn(usize) -> f64 + '_>> =
        vec![Box::new(|i| obs.y()[i]), Box::new(|i| obs.q()[i])];
    for (j, name) in spec.x_cols.iter().enumerate() {
        if !names.contains(&name.as_str()) {
            names.push(name);
            sources.push(Box::new(move |i| obs.x()[(i, j)]));
        }
    }
    for (j, name) in spec.z_cols.iter().enumerate() {
        if !names.contains(&name.as_str()) {
            names.push(name);
            sources.push(Box::new(move |i| obs.z()[(i, j)]));
        }
    }
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(&names)?;
    for i in 0..obs.n() {
        wtr.write_record(sources.iter().map(|f| f(i).to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// The three index blocks of the sample split, plus the seed that drew them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitAssignment {
    pub i1: Vec<usize>,
    pub i2: Vec<usize>,
    pub i3: Vec<usize>,
    pub seed: u64,
}

/// Which block plays which part of the pipeline.
#[derive(Debug, Clone, Copy)]
pub struct Roles<'a> {
    pub score: &'a [usize],
    pub difference: &'a [usize],
    pub matching: &'a [usize],
}

impl SplitAssignment {
    pub fn blocks(&self) -> [&[usize]; 3] {
        [&self.i1, &self.i2, &self.i3]
    }

    /// Cyclic role rotation: 0 is `(I1, I2, I3)`, 1 is `(I2, I3, I1)`,
    /// 2 is `(I3, I1, I2)`.
    pub fn roles(&self, rotation: usize) -> Roles<'_> {
        let b = self.blocks();
        Roles {
            score: b[rotation % 3],
            difference: b[(rotation + 1) % 3],
            matching: b[(rotation + 2) % 3],
        }
    }
}

/// Partitions `0..n` into blocks of sizes `floor(n/3)`, `floor(n/3)` and the
/// remainder, optionally after a seeded shuffle.
pub fn split_three_way(n: usize, seed: u64, shuffle: bool) -> Result<SplitAssignment> {
    if n < MIN_ROWS {
        return Err(Error::TooFewRows(n));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    if shuffle {
        idx.shuffle(&mut seeds::rng(seed));
    }
    let third = n / 3;
    let i3 = idx.split_off(2 * third);
    let i2 = idx.split_off(third);
    Ok(SplitAssignment {
        i1: idx,
        i2,
        i3,
        seed,
    })
}

pub fn treatment_mask(obs: &ObservationSet) -> Vec<bool> {
    (0..obs.n()).map(|i| obs.is_treated(i)).collect()
}

//! One-nearest-neighbour residual matching, with replacement.
//!
//! Each treated unit is paired with the control whose estimated residual is
//! closest in absolute distance. Equidistant controls resolve toward the
//! smaller residual, then the smaller row index.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchResult {
    /// `(treated_row, control_row)` in the order the treated rows were given.
    pub pairs: Vec<(usize, usize)>,
    /// How many treated rows each used control serves.
    pub k_counts: BTreeMap<usize, usize>,
}

impl MatchResult {
    fn from_pairs(pairs: Vec<(usize, usize)>) -> Self {
        let mut k_counts = BTreeMap::new();
        for &(_, c) in &pairs {
            *k_counts.entry(c).or_insert(0) += 1;
        }
        Self { pairs, k_counts }
    }
}

fn check_inputs(treated: &[(usize, f64)], controls: &[(usize, f64)]) -> Result<()> {
    if controls.is_empty() {
        return Err(Error::EmptyControlGroup);
    }
    if treated.is_empty() {
        return Err(Error::EmptyTreatedGroup);
    }
    Ok(())
}

/// Candidate `a` beats `b` for a treated value `t`.
fn closer(t: f64, a: (usize, f64), b: (usize, f64)) -> bool {
    let da = (t - a.1).abs();
    let db = (t - b.1).abs();
    match da.total_cmp(&db) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => match a.1.total_cmp(&b.1) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => a.0 < b.0,
        },
    }
}

/// Matches each `(row, eta)` in `treated` against `controls`.
///
/// Controls are sorted once; each treated value is located by binary
/// search, so the cost is `O((n1 + n0) log n0)`.
pub fn match_controls(treated: &[(usize, f64)], controls: &[(usize, f64)]) -> Result<MatchResult> {
    check_inputs(treated, controls)?;
    let mut sorted = controls.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    // run_start[k]: first position holding the same residual as position k,
    // which is also the smallest row index for that residual.
    let mut run_start = vec![0usize; sorted.len()];
    for k in 1..sorted.len() {
        run_start[k] = if sorted[k].1 == sorted[k - 1].1 {
            run_start[k - 1]
        } else {
            k
        };
    }

    let pairs = treated
        .iter()
        .map(|&(row, t)| {
            let p = sorted.partition_point(|c| c.1 < t);
            let mut best: Option<(usize, f64)> = None;
            if p < sorted.len() {
                best = Some(sorted[p]);
            }
            if p > 0 {
                // Rounding can make |t - e| equal for several distinct e
                // below t; walk back to the smallest such residual.
                let mut k = run_start[p - 1];
                while k > 0 && (t - sorted[k - 1].1).abs() == (t - sorted[k].1).abs() {
                    k = run_start[k - 1];
                }
                let left = sorted[k];
                best = match best {
                    Some(right) if !closer(t, left, right) => Some(right),
                    _ => Some(left),
                };
            }
            let (c, _) = best.expect("controls are nonempty");
            (row, c)
        })
        .collect();
    Ok(MatchResult::from_pairs(pairs))
}

/// Exhaustive `O(n1 n0)` version of [`match_controls`] with the same tie
/// rule. Kept public as an oracle.
pub fn match_controls_brute(
    treated: &[(usize, f64)],
    controls: &[(usize, f64)],
) -> Result<MatchResult> {
    check_inputs(treated, controls)?;
    let pairs = treated
        .iter()
        .map(|&(row, t)| {
            let mut best = controls[0];
            for &c in &controls[1..] {
                if closer(t, c, best) {
                    best = c;
                }
            }
            (row, best.0)
        })
        .collect();
    Ok(MatchResult::from_pairs(pairs))
}

//! Clamped B-spline bases and the additive spline design used for ITE fits.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Type-7 (linear interpolation) quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Clamped knot vector with `df - degree` interior knots at equally spaced
/// quantiles of `values`. The basis it defines has `df + 1` functions.
pub fn clamped_knots(values: &[f64], df: usize, degree: usize) -> Result<Vec<f64>> {
    if df < degree {
        return Err(Error::InvalidSpec(format!("df {df} below degree {degree}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let interior = df - degree;
    let mut knots = vec![lo; degree + 1];
    for j in 1..=interior {
        knots.push(quantile_sorted(&sorted, j as f64 / (interior + 1) as f64));
    }
    knots.extend(std::iter::repeat_n(hi, degree + 1));
    Ok(knots)
}

/// All `knots.len() - degree - 1` basis functions at `x`, with `x` clamped
/// to the boundary knots. Inside the range the values sum to one.
pub fn bspline_basis(x: f64, knots: &[f64], degree: usize) -> Vec<f64> {
    let nb = knots.len() - degree - 1;
    let lo = knots[degree];
    let hi = knots[nb];
    let x = x.clamp(lo, hi);

    // Knot span s with knots[s] <= x < knots[s + 1]; the last nonempty span
    // at the right boundary.
    let s = if x >= hi {
        (degree..nb)
            .rev()
            .find(|&s| knots[s] < knots[s + 1])
            .unwrap_or(degree)
    } else {
        (knots.partition_point(|&u| u <= x) - 1).clamp(degree, nb - 1)
    };

    let mut out = vec![0.0; nb];
    let mut n = vec![0.0; degree + 1];
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    n[0] = 1.0;
    for j in 1..=degree {
        left[j] = x - knots[s + 1 - j];
        right[j] = knots[s + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom == 0.0 { 0.0 } else { n[r] / denom };
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    out[s - degree..=s].copy_from_slice(&n);
    out
}

/// Additive cubic-spline design: a constant, `df` spline columns per
/// covariate (the first B-spline of each block is dropped against the
/// constant), and optionally every pairwise product of distinct covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineDesign {
    pub degree: usize,
    pub df: usize,
    pub knots: Vec<Vec<f64>>,
    pub interactions: bool,
}

impl SplineDesign {
    /// Knots from the columns of `covariates`.
    pub fn fit(
        covariates: &DMatrix<f64>,
        df: usize,
        degree: usize,
        interactions: bool,
    ) -> Result<Self> {
        let knots = (0..covariates.ncols())
            .map(|j| {
                let col: Vec<f64> = covariates.column(j).iter().copied().collect();
                let (lo, hi) = col
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                        (a.min(v), b.max(v))
                    });
                if col.is_empty() || lo >= hi {
                    return Err(Error::DegenerateCovariate(j));
                }
                clamped_knots(&col, df, degree)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            degree,
            df,
            knots,
            interactions,
        })
    }

    pub fn n_covariates(&self) -> usize {
        self.knots.len()
    }

    pub fn dimension(&self) -> usize {
        dimension(self.n_covariates(), self.df, self.interactions)
    }

    pub fn row(&self, point: &[f64]) -> Result<Vec<f64>> {
        let d = self.n_covariates();
        if point.len() != d {
            return Err(Error::ArityMismatch {
                expected: d,
                got: point.len(),
            });
        }
        let mut row = Vec::with_capacity(self.dimension());
        row.push(1.0);
        let clamped: Vec<f64> = point
            .iter()
            .zip(&self.knots)
            .map(|(&v, k)| v.clamp(k[0], k[k.len() - 1]))
            .collect();
        for (v, k) in clamped.iter().zip(&self.knots) {
            row.extend_from_slice(&bspline_basis(*v, k, self.degree)[1..]);
        }
        if self.interactions {
            for a in 0..d {
                for b in a + 1..d {
                    row.push(clamped[a] * clamped[b]);
                }
            }
        }
        Ok(row)
    }

    pub fn matrix(&self, covariates: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let m = covariates.nrows();
        let p = self.dimension();
        let mut out = DMatrix::zeros(m, p);
        for i in 0..m {
            let point: Vec<f64> = covariates.row(i).iter().copied().collect();
            let row = self.row(&point)?;
            for (j, v) in row.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }
}

/// Column count of a design over `d` covariates.
pub fn dimension(d: usize, df: usize, interactions: bool) -> usize {
    1 + d * df
        + if interactions {
            d * (d.saturating_sub(1)) / 2
        } else {
            0
        }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Textbook Cox-de Boor recursion with 0/0 = 0, right-continuous except
    /// at the last knot.
    fn cox_de_boor(i: usize, p: usize, x: f64, u: &[f64]) -> f64 {
        if p == 0 {
            let last = *u.last().unwrap();
            let in_span = u[i] <= x && x < u[i + 1];
            let at_end = x == last && u[i] < u[i + 1] && u[i + 1] == last;
            return if in_span || at_end { 1.0 } else { 0.0 };
        }
        let a = if u[i + p] > u[i] {
            (x - u[i]) / (u[i + p] - u[i]) * cox_de_boor(i, p - 1, x, u)
        } else {
            0.0
        };
        let b = if u[i + p + 1] > u[i + 1] {
            (u[i + p + 1] - x) / (u[i + p + 1] - u[i + 1]) * cox_de_boor(i + 1, p - 1, x, u)
        } else {
            0.0
        };
        a + b
    }

    #[test]
    fn matches_recursive_definition() {
        let mut rng = crate::seeds::rng(21);
        let vals: Vec<f64> = (0..100).map(|_| rng.random_range(-2.0..3.0)).collect();
        for df in [3, 4, 5, 8] {
            let knots = clamped_knots(&vals, df, 3).unwrap();
            assert_eq!(knots.len() - 4, df + 1);
            for &x in vals.iter().chain(&[knots[0], *knots.last().unwrap()]) {
                let fast = bspline_basis(x, &knots, 3);
                for (i, f) in fast.iter().enumerate() {
                    assert!((f - cox_de_boor(i, 3, x, &knots)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn partition_of_unity() {
        let mut rng = crate::seeds::rng(22);
        let vals: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
        let knots = clamped_knots(&vals, 5, 3).unwrap();
        for &x in &vals {
            let s: f64 = bspline_basis(x, &knots, 3).iter().sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn clamps_outside_range() {
        let vals: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let knots = clamped_knots(&vals, 6, 3).unwrap();
        assert_eq!(
            bspline_basis(-5.0, &knots, 3),
            bspline_basis(0.0, &knots, 3)
        );
        assert_eq!(
            bspline_basis(50.0, &knots, 3),
            bspline_basis(19.0, &knots, 3)
        );
        let at_end = bspline_basis(19.0, &knots, 3);
        assert_eq!(*at_end.last().unwrap(), 1.0);
    }

    #[test]
    fn knots_at_quantiles() {
        let vals: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let knots = clamped_knots(&vals, 5, 3).unwrap();
        // Two interior knots at the 1/3 and 2/3 quantiles of 0..=10.
        let want = [
            0.0,
            0.0,
            0.0,
            0.0,
            10.0 / 3.0,
            20.0 / 3.0,
            10.0,
            10.0,
            10.0,
            10.0,
        ];
        for (k, w) in knots.iter().zip(want) {
            assert!((k - w).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_covariate() {
        let cov = DMatrix::from_fn(10, 2, |r, c| if c == 0 { r as f64 } else { 1.0 });
        assert!(matches!(
            SplineDesign::fit(&cov, 3, 3, false),
            Err(Error::DegenerateCovariate(1))
        ));
    }

    #[test]
    fn design_dimension() {
        let cov = DMatrix::from_fn(50, 4, |r, c| ((r * (c + 3)) % 17) as f64);
        let d = SplineDesign::fit(&cov, 5, 3, true).unwrap();
        assert_eq!(d.dimension(), 1 + 4 * 5 + 6);
        assert_eq!(d.matrix(&cov).unwrap().ncols(), 27);
        assert!(matches!(
            d.row(&[1.0, 2.0]),
            Err(Error::ArityMismatch {
                expected: 4,
                got: 2
            })
        ));
    }
}

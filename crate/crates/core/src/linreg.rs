//! Dense least squares through Householder QR.
//!
//! No intercept is ever added; callers append a constant column when they
//! want one. A triangular diagonal entry below `RANK_TOL` times the largest
//! one is reported as rank deficiency instead of being regularized away.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative threshold on `|R_kk|` for declaring rank deficiency.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coef: Vec<f64>,
    /// `b - A coef`.
    pub residuals: Vec<f64>,
    pub rank_tol: f64,
}

/// Minimizes `||A c - b||_2`.
pub fn ols(a: &DMatrix<f64>, b: &[f64]) -> Result<LinearFit> {
    let (m, p) = a.shape();
    if b.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "A has {m} rows but b has {}",
            b.len()
        )));
    }
    if p == 0 || m < p {
        return Err(Error::DimensionMismatch(format!(
            "need m >= p >= 1, got {m} x {p}"
        )));
    }

    // Column-major working copy; R overwrites the upper triangle.
    let mut r = a.clone();
    let w = r.as_mut_slice();
    let mut qtb = b.to_vec();
    let mut v = vec![0.0; m];

    for k in 0..p {
        let col = &w[k * m..(k + 1) * m];
        let norm = col[k..].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if col[k] > 0.0 { -norm } else { norm };
        v[k..].copy_from_slice(&col[k..]);
        v[k] -= alpha;
        let vnorm2 = v[k..].iter().map(|x| x * x).sum::<f64>();
        if vnorm2 == 0.0 {
            continue;
        }
        // H = I - 2 v v^T / (v^T v)
        for j in k..p {
            let cj = &mut w[j * m..(j + 1) * m];
            let s = 2.0 * v[k..].iter().zip(&cj[k..]).map(|(a, b)| a * b).sum::<f64>() / vnorm2;
            for (c, vi) in cj[k..].iter_mut().zip(&v[k..]) {
                *c -= s * vi;
            }
        }
        let s = 2.0
            * v[k..]
                .iter()
                .zip(&qtb[k..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
            / vnorm2;
        for (c, vi) in qtb[k..].iter_mut().zip(&v[k..]) {
            *c -= s * vi;
        }
    }

    let diag: Vec<f64> = (0..p).map(|k| w[k * m + k].abs()).collect();
    let max_diag = diag.iter().cloned().fold(0.0, f64::max);
    let tol = RANK_TOL * max_diag;
    let rank = diag.iter().filter(|&&d| d > tol && d > 0.0).count();
    if rank < p {
        return Err(Error::RankDeficient { rank, cols: p });
    }

    let mut coef = vec![0.0; p];
    for k in (0..p).rev() {
        let mut s = qtb[k];
        for j in k + 1..p {
            s -= w[j * m + k] * coef[j];
        }
        coef[k] = s / w[k * m + k];
    }

    let fitted = a * nalgebra::DVector::from_column_slice(&coef);
    let residuals = b
        .iter()
        .zip(fitted.iter())
        .map(|(bi, fi)| bi - fi)
        .collect();
    Ok(LinearFit {
        coef,
        residuals,
        rank_tol: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        let p = rows[0].len();
        DMatrix::from_row_slice(rows.len(), p, &rows.concat())
    }

    #[test]
    fn constant_fit() {
        let fit = ols(&DMatrix::from_element(3, 1, 1.0), &[2.0, 2.0, 2.0]).unwrap();
        assert!((fit.coef[0] - 2.0).abs() < 1e-14);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-14));
    }

    #[test]
    fn consistent_system() {
        let a = mat(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let fit = ols(&a, &[1.0, 2.0, 3.0]).unwrap();
        assert!((fit.coef[0] - 1.0).abs() < 1e-14);
        assert!((fit.coef[1] - 2.0).abs() < 1e-14);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-14));
    }

    #[test]
    fn line_matches_hand_normal_equations() {
        // A^T A = [[4, 10], [10, 30]], A^T b = [28, 77];
        // det = 20, c = [30*28 - 10*77, 4*77 - 10*28] / 20 = [3.5, 1.4].
        let a = mat(&[&[1.0, 1.0], &[1.0, 2.0], &[1.0, 3.0], &[1.0, 4.0]]);
        let fit = ols(&a, &[6.0, 5.0, 7.0, 10.0]).unwrap();
        assert!((fit.coef[0] - 3.5).abs() < 1e-12);
        assert!((fit.coef[1] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn rank_deficiency_is_an_error() {
        let a = mat(&[&[1.0, 2.0], &[2.0, 4.0], &[3.0, 6.0]]);
        assert!(matches!(
            ols(&a, &[1.0, 2.0, 3.0]),
            Err(Error::RankDeficient { rank: 1, cols: 2 })
        ));
        let a = DMatrix::zeros(4, 2);
        assert!(matches!(
            ols(&a, &[1.0; 4]),
            Err(Error::RankDeficient { rank: 0, cols: 2 })
        ));
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(
            ols(&DMatrix::zeros(2, 3), &[0.0; 2]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            ols(&DMatrix::zeros(3, 1), &[0.0; 2]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn residuals_orthogonal_on_random_systems() {
        let mut rng = crate::seeds::rng(11);
        for _ in 0..1000 {
            let m = rng.random_range(5..40);
            let p = rng.random_range(1..5usize.min(m));
            let a = DMatrix::from_fn(m, p, |_, _| rng.random_range(-1.0..1.0));
            let b: Vec<f64> = (0..m).map(|_| rng.random_range(-10.0..10.0)).collect();
            let fit = ols(&a, &b).unwrap();
            let a_inf = a
                .row_iter()
                .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
                .fold(0.0, f64::max);
            let b_inf = b.iter().map(|x| x.abs()).fold(0.0, f64::max);
            let scale = 1.0 + a_inf * b_inf;
            for j in 0..p {
                let dot: f64 = a
                    .column(j)
                    .iter()
                    .zip(&fit.residuals)
                    .map(|(x, r)| x * r)
                    .sum();
                assert!(dot.abs() <= 1e-8 * scale, "dot {dot}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn recovers_exact_coefficients(
            entries in proptest::collection::vec(-1.0f64..1.0, 60),
            coef in proptest::collection::vec(-5.0f64..5.0, 3),
        ) {
            let a = DMatrix::from_fn(20, 3, |r, c| entries[r * 3 + c] + if r == c { 2.0 } else { 0.0 });
            let b: Vec<f64> = (0..20).map(|r| (0..3).map(|c| a[(r, c)] * coef[c]).sum()).collect();
            let fit = ols(&a, &b).unwrap();
            for (got, want) in fit.coef.iter().zip(&coef) {
                prop_assert!((got - want).abs() <= 1e-10 * (1.0 + want.abs()));
            }
        }

        #[test]
        fn row_permutation_invariance(
            entries in proptest::collection::vec(-1.0f64..1.0, 45),
            b in proptest::collection::vec(-3.0f64..3.0, 15),
            shift in 1usize..15,
        ) {
            let a = DMatrix::from_fn(15, 3, |r, c| entries[r * 3 + c] + if r == c { 2.0 } else { 0.0 });
            let perm: Vec<usize> = (0..15).map(|i| (i + shift) % 15).collect();
            let ap = DMatrix::from_fn(15, 3, |r, c| a[(perm[r], c)]);
            let bp: Vec<f64> = perm.iter().map(|&r| b[r]).collect();
            let f1 = ols(&a, &b).unwrap();
            let f2 = ols(&ap, &bp).unwrap();
            for (x, y) in f1.coef.iter().zip(&f2.coef) {
                prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()));
            }
        }
    }
}

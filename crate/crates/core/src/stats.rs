//! Small descriptive statistics used by the bootstrap and Monte-Carlo reports.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

/// Arithmetic mean with one correction pass, so constant data is returned exactly.
pub fn mean(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    m + v.iter().map(|x| x - m).sum::<f64>() / n
}

/// Unbiased sample variance (divisor `n - 1`); zero for fewer than two values.
pub fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

fn central_moment(v: &[f64], k: i32) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(k)).sum::<f64>() / v.len() as f64
}

/// Moment skewness `m3 / m2^1.5`; zero for constant data.
pub fn skewness(v: &[f64]) -> f64 {
    let m2 = central_moment(v, 2);
    if m2 == 0.0 {
        return 0.0;
    }
    central_moment(v, 3) / m2.powf(1.5)
}

/// Moment excess kurtosis `m4 / m2^2 - 3`; zero for constant data.
pub fn excess_kurtosis(v: &[f64]) -> f64 {
    let m2 = central_moment(v, 2);
    if m2 == 0.0 {
        return 0.0;
    }
    central_moment(v, 4) / (m2 * m2) - 3.0
}

/// Linear-interpolation quantile (type 7) of unsorted data.
pub fn quantile(v: &[f64], p: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    crate::spline::quantile_sorted(&s, p)
}

pub fn median(v: &[f64]) -> f64 {
    quantile(v, 0.5)
}

/// Kolmogorov-Smirnov distance between the empirical distribution of `v`
/// and `N(0, variance)`.
pub fn ks_normal(v: &[f64], variance: f64) -> f64 {
    let normal = Normal::new(0.0, variance.sqrt()).expect("positive variance");
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: usize,
}

/// Equal-width histogram with Freedman-Diaconis bin width
/// `2 IQR n^(-1/3)`. Degenerate data gives a single bin.
pub fn histogram_fd(v: &[f64]) -> Vec<HistogramBin> {
    if v.is_empty() {
        return Vec::new();
    }
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let iqr = quantile(v, 0.75) - quantile(v, 0.25);
    let h = 2.0 * iqr * (v.len() as f64).powf(-1.0 / 3.0);
    let bins = if h > 0.0 && hi > lo {
        ((hi - lo) / h).ceil().max(1.0) as usize
    } else {
        1
    };
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in v {
        let k = if width > 0.0 {
            (((x - lo) / width).floor() as usize).min(bins - 1)
        } else {
            0
        };
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin {
            bin_left: lo + k as f64 * width,
            bin_right: if k + 1 == bins {
                hi
            } else {
                lo + (k + 1) as f64 * width
            },
            count,
        })
        .collect()
}

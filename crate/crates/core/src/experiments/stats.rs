//! Monte Carlo summaries, jackknife errors and log-log scaling fits.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::random_fields::SeedLineage;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// `1.96 sqrt(variance / n)`.
    pub ci_half_width: f64,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lineage: Option<SeedLineage>,
}

impl McEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let variance = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            variance,
            ci_half_width: Z95 * (variance / n as f64).sqrt(),
            n,
            lineage: None,
        }
    }

    pub fn with_lineage(mut self, lineage: SeedLineage) -> Self {
        self.lineage = Some(lineage);
        self
    }

    pub fn standard_error(&self) -> f64 {
        (self.variance / self.n as f64).sqrt()
    }
}

/// Delete-one jackknife: returns the full-sample statistic and its standard error.
pub fn jackknife<T: Copy>(items: &[T], stat: impl Fn(&[T]) -> f64) -> (f64, f64) {
    let n = items.len();
    let full = stat(items);
    if n < 2 {
        return (full, 0.0);
    }
    let mut buf: Vec<T> = items[1..].to_vec();
    let mut leave = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            // buf holds items without index i: swap the (i-1)-th back in
            buf[i - 1] = items[i - 1];
        }
        leave.push(stat(&buf));
    }
    (full, jackknife_se(&leave))
}

fn jackknife_se(leave: &[f64]) -> f64 {
    let n = leave.len() as f64;
    let mean = leave.iter().sum::<f64>() / n;
    ((n - 1.0) / n * leave.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
}

/// Unbiased sample variance with its delete-one jackknife standard error,
/// computed in O(n).
pub fn variance_with_jackknife(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n < 3 {
        return (McEstimate::from_samples(xs).variance, f64::INFINITY);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let s2: f64 = centered.iter().map(|c| c * c).sum();
    let var = s2 / (n - 1) as f64;
    let nf = n as f64;
    let leave: Vec<f64> = centered
        .iter()
        .map(|&c| {
            // sum of squares about the leave-one-out mean
            let ss = s2 - c * c - c * c / (nf - 1.0);
            ss / (nf - 2.0)
        })
        .collect();
    (var, jackknife_se(&leave))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingFit {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `log y` against `log x`.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints {
            count: points.len(),
        });
    }
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::NonPositiveValue {
            value: if x > 0.0 { y } else { x },
        });
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept, slope_stderr, r_squared) = least_squares(&lx, &ly);
    Ok(ScalingFit {
        x: points.iter().map(|p| p.0).collect(),
        y: points.iter().map(|p| p.1).collect(),
        slope,
        intercept,
        slope_stderr,
        r_squared,
    })
}

/// `(slope, intercept, slope standard error, R^2)` of `y ~ x`.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let stderr = if n > 2.0 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    (slope, intercept, stderr, r2)
}

/// Standard error of a log-log slope when each `log y_k` carries an
/// independent error `sigma_k` (from jackknifed variances).
pub fn propagated_slope_stderr(x: &[f64], log_sigma: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    lx.iter()
        .zip(log_sigma)
        .map(|(v, s)| ((v - mx) / sxx * s).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = [2.0f64, 4.0, 8.0, 16.0]
            .iter()
            .map(|&x| (x, 7.0 * x.powi(-3)))
            .collect();
        let fit = fit_loglog(&pts).unwrap();
        assert!((fit.slope + 3.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!((fit.intercept - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn perturbed_point() {
        let mut pts: Vec<(f64, f64)> = [2.0f64, 4.0, 8.0, 16.0]
            .iter()
            .map(|&x| (x, 7.0 * x.powi(-3)))
            .collect();
        pts[2].1 *= 1.01;
        // closed form: slope shift = (log(1.01) * (lx_3 - mean lx)) / sxx
        let fit = fit_loglog(&pts).unwrap();
        assert!((fit.slope + 3.0).abs() <= 0.02);
    }

    #[test]
    fn constant_is_flat() {
        let fit = fit_loglog(&[(1.0, 3.0), (2.0, 3.0), (5.0, 3.0)]).unwrap();
        assert!(fit.slope.abs() < 1e-14);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(
            fit_loglog(&[(1.0, 1.0), (2.0, 2.0)]),
            Err(Error::TooFewPoints { count: 2 })
        ));
        assert!(matches!(
            fit_loglog(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]),
            Err(Error::NonPositiveValue { .. })
        ));
    }

    #[test]
    fn ci_half_width_formula() {
        let e = McEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.variance - 5.0 / 3.0).abs() < 1e-15);
        assert!((e.ci_half_width - 1.96 * (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ci_shrinks_like_inverse_sqrt_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
        let h1 = McEstimate::from_samples(&xs[..2000]).ci_half_width;
        let h2 = McEstimate::from_samples(&xs).ci_half_width;
        let r = h2 / h1;
        assert!((0.65..=0.77).contains(&r), "{r}");
    }

    #[test]
    fn fast_jackknife_matches_generic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..50).map(|_| rng.random::<f64>().powi(2)).collect();
        let (v, se) = variance_with_jackknife(&xs);
        let (v2, se2) = jackknife(&xs, |s| McEstimate::from_samples(s).variance);
        assert!((v - v2).abs() < 1e-14);
        assert!((se - se2).abs() < 1e-12);
    }

    #[test]
    fn jackknife_of_mean_is_standard_error() {
        let xs = [1.0, 4.0, 2.0, 8.0, 5.0];
        let (m, se) = jackknife(&xs, |s| s.iter().sum::<f64>() / s.len() as f64);
        let e = McEstimate::from_samples(&xs);
        assert!((m - e.mean).abs() < 1e-15);
        assert!((se - e.standard_error()).abs() < 1e-12);
    }
}

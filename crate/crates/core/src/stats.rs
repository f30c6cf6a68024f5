//! Small statistics toolkit: estimates with standard errors, KS distance,
//! Kendall's τ and weighted log-log regression.

use crate::error::{Error, Result};
use crate::exec::pairwise_sum;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn new(value: f64, se: f64) -> Self {
        Estimate { value, se }
    }

    /// `|a - b| <= k · sqrt(se_a² + se_b²)`.
    pub fn agrees_with(&self, other: &Estimate, k: f64) -> bool {
        (self.value - other.value).abs() <= k * self.se.hypot(other.se)
    }

    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.se
    }

    pub fn scale(self, c: f64) -> Self {
        Estimate::new(self.value * c, self.se * c.abs())
    }
}

/// Sample mean with its standard error (pairwise summation).
pub fn mean_se(xs: &[f64]) -> Estimate {
    let n = xs.len();
    let m = pairwise_sum(xs) / n as f64;
    if n < 2 {
        return Estimate::new(m, f64::NAN);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    Estimate::new(m, (var / n as f64).sqrt())
}

/// Sample covariance of two equally long series.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    let mx = pairwise_sum(xs) / n as f64;
    let my = pairwise_sum(ys) / n as f64;
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    pairwise_sum(&prods) / (n - 1) as f64
}

/// Leave-one-out jackknife of a statistic of the sample.
pub fn jackknife<F: Fn(&[usize]) -> f64>(n: usize, stat: F) -> Estimate {
    let all: Vec<usize> = (0..n).collect();
    let full = stat(&all);
    let mut loo = Vec::with_capacity(n);
    let mut idx: Vec<usize> = Vec::with_capacity(n - 1);
    for i in 0..n {
        idx.clear();
        idx.extend((0..n).filter(|&j| j != i));
        loo.push(stat(&idx));
    }
    let m = pairwise_sum(&loo) / n as f64;
    let ss: Vec<f64> = loo.iter().map(|v| (v - m) * (v - m)).collect();
    let var = (n as f64 - 1.0) / n as f64 * pairwise_sum(&ss);
    Estimate::new(full, var.sqrt())
}

/// One-sample Kolmogorov–Smirnov distance to the standard normal.
pub fn ks_normal(samples: &[f64]) -> f64 {
    let mut xs: Vec<f64> = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut d = 0.0f64;
    for (i, x) in xs.iter().enumerate() {
        let f = normal.cdf(*x);
        d = d.max(f - i as f64 / n).max((i as f64 + 1.0) / n - f);
    }
    d
}

/// Kendall's τ-a.
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    let mut s = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let a = (xs[j] - xs[i]).signum() * (ys[j] - ys[i]).signum();
            s += a as i64;
        }
    }
    s as f64 / (n * (n - 1) / 2) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Weighted least squares of `log σ²` on `log R`. Weights are the inverse
/// delta-method variances `(se/σ²)^{-2}`. When `cov` (covariance matrix of
/// the σ² estimates) is given, the slope variance accounts for correlation
/// between the points.
pub fn loglog_slope(r: &[f64], s2: &[f64], se: &[f64], cov: Option<&[Vec<f64>]>) -> Result<SlopeFit> {
    let n = r.len();
    if n < 4 || s2.len() != n || se.len() != n {
        return Err(Error::DegenerateFit(format!("need at least 4 points, got {n}")));
    }
    if let Some(i) = s2.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::DegenerateFit(format!("σ² = {} at R = {} is not positive", s2[i], r[i])));
    }
    let x: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = s2.iter().map(|v| v.ln()).collect();
    let w: Vec<f64> = (0..n)
        .map(|i| {
            let rel = se[i] / s2[i];
            if rel > 0.0 {
                1.0 / (rel * rel)
            } else {
                1.0
            }
        })
        .collect();
    let sw: f64 = w.iter().sum();
    let xm = (0..n).map(|i| w[i] * x[i]).sum::<f64>() / sw;
    let ym = (0..n).map(|i| w[i] * y[i]).sum::<f64>() / sw;
    let sxx: f64 = (0..n).map(|i| w[i] * (x[i] - xm).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("all R values coincide".into()));
    }
    // slope = Σ c_i y_i
    let c: Vec<f64> = (0..n).map(|i| w[i] * (x[i] - xm) / sxx).collect();
    let slope: f64 = (0..n).map(|i| c[i] * y[i]).sum();
    let intercept = ym - slope * xm;
    let var = match cov {
        None => 1.0 / sxx,
        Some(m) => {
            // Cov(log σ²_i, log σ²_j) ≈ Cov_ij / (σ²_i σ²_j)
            let mut v = 0.0;
            for i in 0..n {
                for j in 0..n {
                    v += c[i] * c[j] * m[i][j] / (s2[i] * s2[j]);
                }
            }
            v
        }
    };
    let slope_se = var.max(0.0).sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        slope_se,
        ci_lo: slope - Z95 * slope_se,
        ci_hi: slope + Z95 * slope_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn exact_power_law_slopes() {
        let r = [8.0, 16.0, 32.0, 64.0];
        let s2: Vec<f64> = r.iter().map(|v: &f64| 7.0 * v.powf(1.5)).collect();
        let se: Vec<f64> = s2.iter().map(|v| 0.05 * v).collect();
        let fit = loglog_slope(&r, &s2, &se, None).unwrap();
        assert!((fit.slope - 1.5).abs() < 1e-12);
        assert!((fit.intercept - 7f64.ln()).abs() < 1e-12);
        let s2: Vec<f64> = r.iter().map(|v| 3.0 * v).collect();
        assert!((loglog_slope(&r, &s2, &se, None).unwrap().slope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_fits() {
        let r = [1.0, 2.0, 3.0, 4.0];
        assert!(matches!(
            loglog_slope(&r, &[1.0, 0.0, 1.0, 1.0], &[0.1; 4], None),
            Err(Error::DegenerateFit(_))
        ));
        assert!(loglog_slope(&r[..3], &[1.0; 3], &[0.1; 3], None).is_err());
    }

    #[test]
    fn ks_null_and_constant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(ks_normal(&xs) < 0.05);
        assert!((ks_normal(&[0.0; 2000]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kendall_extremes() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(&a, &[0.4, 0.3, 0.2, 0.1]), -1.0);
        assert_eq!(kendall_tau(&a, &a), 1.0);
    }

    #[test]
    fn jackknife_of_mean_is_standard_error() {
        let xs: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64).collect();
        let jk = jackknife(xs.len(), |idx| idx.iter().map(|&i| xs[i]).sum::<f64>() / idx.len() as f64);
        let plain = mean_se(&xs);
        assert!((jk.value - plain.value).abs() < 1e-12);
        assert!((jk.se - plain.se).abs() < 1e-12);
    }
}

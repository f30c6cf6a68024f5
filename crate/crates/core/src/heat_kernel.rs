//! Heat kernel `p_t(x) = (2πt)^{-d/2} e^{-|x|²/(2t)}` and its increments.

use crate::error::{Error, Result};
use std::f64::consts::PI;

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) {
        return Err(Error::domain(format!("heat kernel needs t > 0, got {t}")));
    }
    Ok(())
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// One-dimensional heat kernel without argument checks.
#[inline]
pub fn p1(t: f64, x: f64) -> f64 {
    (-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// `p_t(x)` in dimension `x.len()`.
pub fn p(t: f64, x: &[f64]) -> Result<f64> {
    check_time(t)?;
    let d = x.len() as f64;
    Ok((2.0 * PI * t).powf(-d / 2.0) * (-norm2(x) / (2.0 * t)).exp())
}

/// `Fp_t(ξ) = e^{-t|ξ|²/2}`.
pub fn fourier_p(t: f64, xi: &[f64]) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("fourier_p needs t >= 0, got {t}")));
    }
    Ok((-t * norm2(xi) / 2.0).exp())
}

fn add(a: &[f64], b: &[f64], sign: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(u, v)| u + sign * v).collect()
}

fn same_dim(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::domain("points of different dimension"));
    }
    Ok(())
}

/// `Δ_t(x, x') = p_t(x + x') - p_t(x)`.
pub fn delta_incr(t: f64, x: &[f64], x1: &[f64]) -> Result<f64> {
    check_time(t)?;
    same_dim(x, x1)?;
    Ok(p(t, &add(x, x1, 1.0))? - p(t, x)?)
}

/// `R_t(x, x', x'') = p_t(x+x'-x'') - p_t(x+x') - p_t(x-x'') + p_t(x)`.
pub fn rect_incr(t: f64, x: &[f64], x1: &[f64], x2: &[f64]) -> Result<f64> {
    check_time(t)?;
    same_dim(x, x1)?;
    same_dim(x, x2)?;
    let xp = add(x, x1, 1.0);
    Ok(p(t, &add(&xp, x2, -1.0))? - p(t, &xp)? - p(t, &add(x, x2, -1.0))? + p(t, x)?)
}

/// `N_t(x) = t^{-1/8} |x|^{1/4}` for `|x| <= √t`, else 1.
pub fn n_weight(t: f64, x: &[f64]) -> Result<f64> {
    check_time(t)?;
    let r = norm2(x).sqrt();
    if r > t.sqrt() {
        Ok(1.0)
    } else {
        Ok(t.powf(-0.125) * r.powf(0.25))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn point_values() {
        assert_relative_eq!(p(1.0, &[0.0]).unwrap(), 0.398942, epsilon = 1e-6);
        assert_relative_eq!(p(2.0, &[0.0, 0.0]).unwrap(), 0.079577, epsilon = 1e-6);
        assert!(p(0.0, &[1.0]).is_err());
        assert_eq!(p1(0.7, 0.3), p(0.7, &[0.3]).unwrap());
    }

    #[test]
    fn fourier_values() {
        assert_eq!(fourier_p(0.0, &[12.0]).unwrap(), 1.0);
        assert_relative_eq!(fourier_p(1.0, &[1.0]).unwrap(), 0.606531, epsilon = 1e-6);
        assert!(fourier_p(-1.0, &[1.0]).is_err());
    }

    #[test]
    fn increments() {
        assert_eq!(delta_incr(1.0, &[0.4], &[0.0]).unwrap(), 0.0);
        assert_eq!(rect_incr(1.0, &[0.4], &[0.0], &[0.9]).unwrap(), 0.0);
        let want = 2.0 * p1(1.0, 0.0) - 2.0 * p1(1.0, 1.0);
        assert_relative_eq!(rect_incr(1.0, &[0.0], &[1.0], &[1.0]).unwrap(), want, max_relative = 1e-15);
    }

    #[test]
    fn n_weight_values() {
        assert_eq!(n_weight(1.0, &[2.0]).unwrap(), 1.0);
        assert_eq!(n_weight(1.0, &[0.0]).unwrap(), 0.0);
        assert_relative_eq!(n_weight(1.0, &[1.0 / 16.0]).unwrap(), 0.5, max_relative = 1e-15);
        assert_relative_eq!(n_weight(4.0, &[2.0]).unwrap(), 1.0, max_relative = 1e-15);
        assert!(n_weight(-1.0, &[0.0]).is_err());
    }
}

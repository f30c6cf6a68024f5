//! Noise regimes: covariance kernels, spectral densities and the derived
//! scalar quantities (Dalang integral, heat mass, mollified covariance).
//!
//! Fourier convention: `Fφ(ξ) = ∫ e^{-iξx} φ(x) dx`, and the spectral measure
//! `μ(dξ) = g(ξ) dξ` satisfies `γ(x) = ∫ e^{-iξx} g(ξ) dξ`.

mod inner;
mod table;

pub use inner::{inner_gagliardo, inner_spectral, TestFunction};
pub use table::KernelTable;

use crate::error::{Error, Result};
use crate::quadrature::{
    integrate, integrate_from_zero, integrate_half_line, Decay, Integral, Tolerance,
};
use serde::Serialize;
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "regime", rename_all = "lowercase")]
pub enum Regime {
    White,
    Integrable,
    Riesz { beta: f64 },
    Rough { hurst: f64 },
}

/// `g(ρ) = coeff · ρ^power` for the scale-invariant regimes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLaw {
    pub coeff: f64,
    pub power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovarianceModel {
    #[serde(flatten)]
    regime: Regime,
    d: usize,
    /// Prefactor of the density (C_{d,β}, c_H, (2π)^{-d}).
    density_const: f64,
}

/// Surface area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// `c_H = Γ(2H+1) sin(πH) / (2π)`.
pub fn c_h_constant(h: f64) -> Result<f64> {
    if !(h > 0.0 && h < 0.5) {
        return Err(Error::domain(format!("H must lie in (0, 1/2), got {h}")));
    }
    Ok(gamma(2.0 * h + 1.0) * (PI * h).sin() / (2.0 * PI))
}

/// Constant of the Gagliardo form, `C_H = H(1-2H)/2`.
pub fn gagliardo_constant(h: f64) -> Result<f64> {
    if !(h > 0.0 && h < 0.5) {
        return Err(Error::domain(format!("H must lie in (0, 1/2), got {h}")));
    }
    Ok(h * (1.0 - 2.0 * h) / 2.0)
}

/// Riesz density constant fixed by matching `∫ |x|^{-β} w(x) dx` against
/// `∫ g(ξ) Fw(ξ) dξ` for the probe `w(x) = e^{-|x|²}`, `Fw(ξ) = π^{d/2} e^{-|ξ|²/4}`.
pub fn riesz_constant(d: usize, beta: f64) -> Result<f64> {
    if d == 0 || !(beta > 0.0 && beta < d as f64) {
        return Err(Error::domain(format!("Riesz exponent {beta} outside (0, {d})")));
    }
    let tol = Tolerance::rel(1e-13);
    let df = d as f64;
    let space = integrate_half_line(
        |r| r.powf(df - 1.0 - beta) * (-r * r).exp(),
        df - 1.0 - beta,
        Decay::Fast,
        1.0,
        tol,
    )?;
    let freq = integrate_half_line(
        |r| r.powf(beta - 1.0) * (-r * r / 4.0).exp(),
        beta - 1.0,
        Decay::Fast,
        2.0,
        tol,
    )?;
    Ok(space.value / (PI.powf(df / 2.0) * freq.value))
}

impl CovarianceModel {
    pub fn new(regime: Regime, d: usize) -> Result<Self> {
        let density_const = match regime {
            Regime::White => {
                if d != 1 {
                    return Err(Error::config("model.d", "white noise requires d = 1"));
                }
                1.0 / (2.0 * PI)
            }
            Regime::Integrable => {
                if d != 1 {
                    return Err(Error::config("model.d", "the built-in integrable kernel is one-dimensional"));
                }
                1.0 / (2.0 * PI).sqrt()
            }
            Regime::Riesz { beta } => {
                if d == 0 || d > 2 {
                    return Err(Error::config("model.d", format!("Riesz noise supports d in {{1, 2}}, got {d}")));
                }
                let cap = (d as f64).min(2.0);
                if !(beta > 0.0 && beta < cap) {
                    return Err(Error::config(
                        "model.beta",
                        format!("β ∈ (0, d ∧ 2) violated: β = {beta}, d = {d}"),
                    ));
                }
                riesz_constant(d, beta)?
            }
            Regime::Rough { hurst } => {
                if d != 1 {
                    return Err(Error::config("model.d", "rough noise requires d = 1"));
                }
                if !(hurst > 0.25 && hurst < 0.5) {
                    return Err(Error::config("model.H", format!("H ∈ (1/4, 1/2) violated: H = {hurst}")));
                }
                c_h_constant(hurst)?
            }
        };
        Ok(CovarianceModel {
            regime,
            d,
            density_const,
        })
    }

    pub fn white() -> Self {
        Self::new(Regime::White, 1).expect("white noise is always constructible")
    }

    pub fn integrable() -> Self {
        Self::new(Regime::Integrable, 1).expect("integrable kernel is always constructible")
    }

    pub fn riesz(d: usize, beta: f64) -> Result<Self> {
        Self::new(Regime::Riesz { beta }, d)
    }

    pub fn rough(hurst: f64) -> Result<Self> {
        Self::new(Regime::Rough { hurst }, 1)
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn tag(&self) -> &'static str {
        match self.regime {
            Regime::White => "white",
            Regime::Integrable => "integrable",
            Regime::Riesz { .. } => "riesz",
            Regime::Rough { .. } => "rough",
        }
    }

    /// The regime parameter (β or H); zero when there is none.
    pub fn parameter(&self) -> f64 {
        match self.regime {
            Regime::Riesz { beta } => beta,
            Regime::Rough { hurst } => hurst,
            _ => 0.0,
        }
    }

    pub fn density_constant(&self) -> f64 {
        self.density_const
    }

    pub fn power_law(&self) -> Option<PowerLaw> {
        let d = self.d as f64;
        match self.regime {
            Regime::White => Some(PowerLaw {
                coeff: self.density_const,
                power: 0.0,
            }),
            Regime::Integrable => None,
            Regime::Riesz { beta } => Some(PowerLaw {
                coeff: self.density_const,
                power: beta - d,
            }),
            Regime::Rough { hurst } => Some(PowerLaw {
                coeff: self.density_const,
                power: 1.0 - 2.0 * hurst,
            }),
        }
    }

    /// Covariance kernel `γ(x)`; only defined pointwise for Integrable and Riesz.
    pub fn gamma_at(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let r2: f64 = x.iter().map(|v| v * v).sum();
        match self.regime {
            Regime::Integrable => Ok((-r2 / 2.0).exp()),
            Regime::Riesz { beta } => {
                if r2 == 0.0 {
                    Err(Error::domain("Riesz kernel is singular at x = 0"))
                } else {
                    Ok(r2.powf(-beta / 2.0))
                }
            }
            Regime::White | Regime::Rough { .. } => Err(Error::UnsupportedRegime(format!(
                "{} noise has no pointwise covariance function",
                self.tag()
            ))),
        }
    }

    /// Density `g(ξ)` of the spectral measure.
    pub fn spectral_density(&self, xi: &[f64]) -> Result<f64> {
        self.check_point(xi)?;
        let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r == 0.0 {
            match self.regime {
                Regime::Riesz { .. } => return Err(Error::domain("Riesz density is singular at ξ = 0")),
                Regime::Rough { .. } => return Err(Error::domain("rough density is not evaluated at ξ = 0")),
                _ => {}
            }
        }
        Ok(self.density_radial(r))
    }

    /// `g` as a function of `|ξ|`, no domain checks.
    pub fn density_radial(&self, r: f64) -> f64 {
        match self.regime {
            Regime::Integrable => self.density_const * (-r * r / 2.0).exp(),
            _ => {
                let pl = self.power_law().expect("power-law regime");
                if pl.power == 0.0 {
                    pl.coeff
                } else {
                    pl.coeff * r.powf(pl.power)
                }
            }
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::domain(format!(
                "point has dimension {}, model has d = {}",
                x.len(),
                self.d
            )));
        }
        Ok(())
    }

    /// Exponent of `g(ρ) ρ^{d-1}` at the origin.
    fn radial_origin_power(&self) -> f64 {
        match self.power_law() {
            Some(pl) => pl.power + self.d as f64 - 1.0,
            None => 0.0,
        }
    }

    /// `∫ f(|ξ|) μ(dξ)` for `f` bounded near zero. `f_decay` describes how
    /// `f(ρ) g(ρ) ρ^{d-1}` decays.
    pub fn radial_integral<F: FnMut(f64) -> f64>(&self, mut f: F, decay: Decay, tol: Tolerance) -> Result<Integral> {
        let d = self.d as f64;
        let inner = integrate_half_line(
            |r| {
                let v = f(r);
                if v == 0.0 {
                    0.0
                } else {
                    v * self.density_radial(r) * r.powf(d - 1.0)
                }
            },
            self.radial_origin_power(),
            decay,
            1.0,
            tol,
        )?;
        Ok(inner.scale(sphere_area(self.d)))
    }

    /// Dalang integral `∫ (1+|ξ|²)^{-1} μ(dξ)`.
    pub fn dalang_integral(&self) -> Result<Integral> {
        let tol = Tolerance::rel(1e-10);
        let d = self.d as f64;
        let area = sphere_area(self.d);
        let f = |r: f64| self.density_radial(r) * r.powf(d - 1.0) / (1.0 + r * r);
        let out = match self.power_law() {
            None => integrate_half_line(f, 0.0, Decay::Fast, 1.0, tol)?,
            Some(pl) => {
                let m = pl.power + d - 1.0;
                if m >= 1.0 {
                    return Err(Error::Divergence("Dalang integral diverges".into()));
                }
                const SPLIT: f64 = 8.0;
                let head = integrate_from_zero(f, 1.0, m, tol)?;
                let mid = integrate(f, 1.0, SPLIT, tol)?;
                // ∫_X^∞ ρ^m/(1+ρ²) = Σ_k (-1)^k X^{m-1-2k} / (2k+1-m)
                let mut tail = 0.0;
                for k in 0..24 {
                    let kf = k as f64;
                    let term = SPLIT.powf(m - 1.0 - 2.0 * kf) / (2.0 * kf + 1.0 - m);
                    tail += if k % 2 == 0 { term } else { -term };
                }
                head + mid + Integral::exact(pl.coeff * tail)
            }
        };
        let out = out.scale(area);
        if out.error > 1e-8 * out.value.abs() {
            return Err(Error::QuadratureFailure(format!(
                "Dalang integral error {:.2e} above target",
                out.error
            )));
        }
        Ok(out)
    }

    /// Singularity exponent `α` of the heat mass, `q(s) ~ s^{-α}` as `s ↓ 0`.
    pub fn heat_singularity(&self) -> f64 {
        match self.regime {
            Regime::Integrable => 0.0,
            _ => {
                let pl = self.power_law().expect("power-law regime");
                (pl.power + self.d as f64) / 2.0
            }
        }
    }

    /// Heat mass `q(s) = ∫ e^{-s|ξ|²} μ(dξ)` in closed form.
    pub fn heat_mass(&self, s: f64) -> f64 {
        match self.regime {
            Regime::Integrable => 1.0 / (1.0 + 2.0 * s).sqrt(),
            _ => {
                let pl = self.power_law().expect("power-law regime");
                let a = (pl.power + self.d as f64) / 2.0;
                // S_d c ∫ ρ^{p+d-1} e^{-sρ²} dρ = S_d c Γ(a)/2 · s^{-a}
                sphere_area(self.d) * pl.coeff * gamma(a) / 2.0 * s.powf(-a)
            }
        }
    }

    /// `q(s)` by quadrature of the spectral integral (cross-check of `heat_mass`).
    pub fn heat_mass_quadrature(&self, s: f64) -> Result<Integral> {
        self.radial_integral(|r| (-s * r * r).exp(), Decay::Fast, Tolerance::rel(1e-11))
    }

    /// Mollified covariance `C^ε(a) = ∫ e^{-εξ²} cos(ξ a) g(ξ) dξ` by adaptive
    /// quadrature over the zeros of the cosine.
    pub fn mollified_cov(&self, eps: f64, lag: f64) -> Result<f64> {
        if !(eps > 0.0) {
            return Err(Error::domain(format!("mollification scale must be positive, got {eps}")));
        }
        if self.d != 1 {
            return Err(Error::UnsupportedRegime(
                "mollified covariance is implemented for d = 1".into(),
            ));
        }
        let a = lag.abs();
        let p = self.radial_origin_power();
        let f = |x: f64| 2.0 * self.density_radial(x) * (-eps * x * x).exp() * (x * a).cos();
        let scale = self.heat_mass(eps);
        let tol = Tolerance::rel(1e-10).with_abs(1e-13 * scale);
        // beyond this the Gaussian factor is below e^{-46}
        let cutoff = ((46.0 + p.max(0.0) * (1.0 / eps).ln().max(1.0)) / eps).sqrt();
        if a == 0.0 || a * cutoff < PI / 2.0 {
            let v = integrate_from_zero(f, cutoff, p, tol)?;
            return Ok(v.value);
        }
        let step = PI / a;
        let mut acc = integrate_from_zero(f, 0.5 * step, p, tol)?;
        let mut lo = 0.5 * step;
        while lo < cutoff {
            let hi = lo + step;
            acc = acc + integrate(f, lo, hi, tol)?;
            lo = hi;
        }
        if acc.error > (1e-8 * acc.value.abs()).max(1e-9 * scale) {
            return Err(Error::QuadratureFailure(format!(
                "mollified covariance at lag {lag}: error {:.2e}",
                acc.error
            )));
        }
        Ok(acc.value)
    }

    /// Closed forms of `C^ε(a)` where available (White, Integrable).
    pub fn mollified_cov_closed(&self, eps: f64, lag: f64) -> Option<f64> {
        match self.regime {
            Regime::White => Some((-lag * lag / (4.0 * eps)).exp() / (2.0 * (PI * eps).sqrt())),
            Regime::Integrable => {
                let v = 1.0 + 2.0 * eps;
                Some((-lag * lag / (2.0 * v)).exp() / v.sqrt())
            }
            _ => None,
        }
    }

    /// `∫_{lo}^{hi} g(ξ) dξ` for `0 <= lo < hi` (one-dimensional).
    pub fn density_mass(&self, lo: f64, hi: f64) -> f64 {
        debug_assert!(0.0 <= lo && lo <= hi);
        match self.regime {
            Regime::Integrable => {
                let s = std::f64::consts::SQRT_2;
                0.5 * (erfc(lo / s) - erfc(hi / s))
            }
            _ => {
                let pl = self.power_law().expect("power-law regime");
                let e = pl.power + 1.0;
                pl.coeff * (hi.powf(e) - lo.powf(e)) / e
            }
        }
    }

    /// Mass of `μ` on the frequency cell of width `h` centred at `center`
    /// (one-dimensional; the origin cell is symmetric about zero).
    pub fn cell_weight(&self, center: f64, h: f64) -> f64 {
        let c = center.abs();
        if c < 0.5 * h {
            return 2.0 * self.density_mass(0.0, 0.5 * h);
        }
        self.density_mass(c - 0.5 * h, c + 0.5 * h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn riesz_closed(d: usize, beta: f64) -> f64 {
        let df = d as f64;
        gamma((df - beta) / 2.0) / (2f64.powf(beta) * PI.powf(df / 2.0) * gamma(beta / 2.0))
    }

    #[test]
    fn gamma_at_examples() {
        let r = CovarianceModel::riesz(1, 0.5).unwrap();
        assert_eq!(r.gamma_at(&[4.0]).unwrap(), 0.5);
        assert!(matches!(r.gamma_at(&[0.0]), Err(Error::Domain(_))));
        assert_eq!(CovarianceModel::integrable().gamma_at(&[0.0]).unwrap(), 1.0);
        assert!(matches!(
            CovarianceModel::white().gamma_at(&[1.0]),
            Err(Error::UnsupportedRegime(_))
        ));
        assert!(matches!(
            CovarianceModel::rough(0.3).unwrap().gamma_at(&[1.0]),
            Err(Error::UnsupportedRegime(_))
        ));
    }

    #[test]
    fn spectral_density_examples() {
        assert_relative_eq!(
            CovarianceModel::white().spectral_density(&[3.0]).unwrap(),
            0.159155,
            epsilon = 1e-6
        );
        assert_relative_eq!(
            CovarianceModel::rough(0.25 + 1e-12).unwrap().spectral_density(&[1.0]).unwrap(),
            0.099736,
            epsilon = 1e-6
        );
        let r = CovarianceModel::riesz(1, 0.5).unwrap();
        assert_relative_eq!(r.spectral_density(&[1.0]).unwrap(), riesz_closed(1, 0.5), max_relative = 1e-10);
        assert!(r.spectral_density(&[0.0]).is_err());
    }

    #[test]
    fn riesz_constant_matches_closed_form() {
        for &(d, beta) in &[(1, 0.5), (1, 0.2), (1, 0.9), (2, 0.5), (2, 1.0), (2, 1.7)] {
            let c = riesz_constant(d, beta).unwrap();
            assert_relative_eq!(c, riesz_closed(d, beta), max_relative = 1e-10);
        }
        // equivalent reflection form in d = 1
        let beta: f64 = 0.5;
        let alt = 1.0 / (2.0 * gamma(beta) * (PI * beta / 2.0).cos());
        assert_relative_eq!(riesz_constant(1, beta).unwrap(), alt, max_relative = 1e-10);
    }

    #[test]
    fn c_h_examples() {
        let oracle = |h: f64| gamma(2.0 * h + 1.0) * (PI * h).sin() / (2.0 * PI);
        assert_relative_eq!(c_h_constant(0.25).unwrap(), 0.099736, epsilon = 1e-6);
        assert!(c_h_constant(0.49).unwrap() > 0.0);
        // Γ(1.6) = 0.8935153492876903 (tabulated), sin(0.3π) = 0.8090169943749474
        assert_relative_eq!(
            c_h_constant(0.3).unwrap(),
            0.893_515_349_287_690_3 * 0.809_016_994_374_947_4 / (2.0 * PI),
            max_relative = 1e-13
        );
        assert_relative_eq!(c_h_constant(0.3).unwrap(), oracle(0.3), max_relative = 1e-15);
        assert!(c_h_constant(0.5).is_err());
        assert!(c_h_constant(0.0).is_err());
    }

    #[test]
    fn constructors_enforce_ranges() {
        assert!(matches!(CovarianceModel::riesz(1, 1.5), Err(Error::Config { key, .. }) if key == "model.beta"));
        assert!(CovarianceModel::riesz(2, 1.5).is_ok());
        assert!(matches!(CovarianceModel::rough(0.2), Err(Error::Config { key, .. }) if key == "model.H"));
        assert!(CovarianceModel::new(Regime::Rough { hurst: 0.3 }, 2).is_err());
        assert!(CovarianceModel::new(Regime::White, 2).is_err());
    }

    #[test]
    fn dalang_values() {
        let w = CovarianceModel::white().dalang_integral().unwrap();
        assert!((w.value - 0.5).abs() < 1e-8);
        let i = CovarianceModel::integrable().dalang_integral().unwrap();
        assert!(i.value > 0.0 && i.value < 1.0);
        // ∫ (2π)^{-1/2} e^{-ξ²/2}/(1+ξ²) dξ = √(πe/2) erfc(1/√2)
        let oracle = (PI * 1f64.exp() / 2.0).sqrt() * erfc(1.0 / 2f64.sqrt());
        assert_relative_eq!(i.value, oracle, max_relative = 1e-9);
        let r = CovarianceModel::rough(0.3).unwrap().dalang_integral().unwrap();
        assert!(r.value.is_finite() && r.value > 0.0);
        // power-law oracle: 2c ∫ ξ^m/(1+ξ²) = c π / cos(π m / 2)
        for model in [CovarianceModel::rough(0.3).unwrap(), CovarianceModel::riesz(1, 0.5).unwrap()] {
            let pl = model.power_law().unwrap();
            let oracle = pl.coeff * PI / (PI * pl.power / 2.0).cos();
            assert_relative_eq!(model.dalang_integral().unwrap().value, oracle, max_relative = 1e-9);
        }
        let r2 = CovarianceModel::riesz(2, 1.0).unwrap().dalang_integral().unwrap();
        assert!(r2.value.is_finite());
    }

    #[test]
    fn heat_mass_closed_forms_match_quadrature() {
        let models = [
            CovarianceModel::white(),
            CovarianceModel::integrable(),
            CovarianceModel::riesz(1, 0.5).unwrap(),
            CovarianceModel::riesz(2, 1.2).unwrap(),
            CovarianceModel::rough(0.3).unwrap(),
        ];
        for m in &models {
            for &s in &[0.05, 0.5, 2.0] {
                let q = m.heat_mass_quadrature(s).unwrap();
                assert_relative_eq!(m.heat_mass(s), q.value, max_relative = 1e-9);
            }
        }
        assert_relative_eq!(
            CovarianceModel::white().heat_mass(0.25),
            1.0 / (2.0 * (PI * 0.25).sqrt()),
            max_relative = 1e-14
        );
    }

    #[test]
    fn mollified_cov_examples() {
        let w = CovarianceModel::white();
        let eps = 0.01;
        let q = w.mollified_cov(eps, 0.0).unwrap();
        assert_relative_eq!(q, (PI / eps).sqrt() / (2.0 * PI), max_relative = 1e-9);
        for &lag in &[0.05, 0.2, 0.7] {
            assert_relative_eq!(
                w.mollified_cov(eps, lag).unwrap(),
                w.mollified_cov_closed(eps, lag).unwrap(),
                max_relative = 1e-7,
                epsilon = 1e-12
            );
        }
        let i = CovarianceModel::integrable();
        for &lag in &[0.0, 0.3, 1.0, 2.5] {
            assert_relative_eq!(
                i.mollified_cov(0.1, lag).unwrap(),
                i.mollified_cov_closed(0.1, lag).unwrap(),
                max_relative = 1e-8
            );
            assert_eq!(i.mollified_cov(0.1, lag).unwrap(), i.mollified_cov(0.1, -lag).unwrap());
        }
        assert!(i.mollified_cov(1e4, 1.0).unwrap() < 1e-2);
    }

    #[test]
    fn riesz_mollified_cov_approaches_kernel() {
        // at lags much larger than √ε the mollified Riesz covariance is |a|^{-β}
        let r = CovarianceModel::riesz(1, 0.5).unwrap();
        let v = r.mollified_cov(1e-3, 2.0).unwrap();
        assert_relative_eq!(v, 2f64.powf(-0.5), max_relative = 1e-3);
    }

    #[test]
    fn cell_weights_sum_to_mass() {
        let m = CovarianceModel::integrable();
        let h = 0.1;
        let total: f64 = m.cell_weight(0.0, h) + 2.0 * (1..400).map(|k| m.cell_weight(k as f64 * h, h)).sum::<f64>();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
        let r = CovarianceModel::riesz(1, 0.5).unwrap();
        assert!(r.cell_weight(0.0, 0.1).is_finite());
    }
}

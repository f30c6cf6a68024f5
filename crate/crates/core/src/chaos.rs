//! Chaos-expansion quantities: the simplex integrals `h_n`, `J_n`, the
//! frequency splits `C_N`, `D_N`, first-chaos covariances of spatial
//! averages and the limiting covariance `K(t, s)`.
//!
//! With `q(s) = ∫ e^{-s|ξ|²} μ(dξ)` and gaps `u_j = t_{j+1} - t_j`,
//! `h_n(t) = ∫_{Σu ≤ t} Π q(u_j) du = ∫_0^t q(u) h_{n-1}(t-u) du`. For the
//! scale-invariant regimes `q(s) = κ s^{-α}` and the recursion closes:
//! `h_n(t) = (κ Γ(1-α))^n t^{n(1-α)} / Γ(n(1-α)+1)`.

use crate::covariance::{sphere_area, CovarianceModel, Regime};
use crate::error::{Error, Result};
use crate::exec::{pairwise_sum, Execution};
use crate::feynman_kac::{rho_profile, RhoProfile};
use crate::qmc::ScrambledHalton;
use crate::quadrature::{
    integrate, integrate_from_zero, integrate_to_infinity, Decay, Integral, Tolerance,
};
use crate::stats::{mean_se, Estimate};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::{gamma, ln_gamma};
use std::f64::consts::PI;

/// Largest chaos order for `h_n`.
pub const H_MAX_ORDER: usize = 4;
/// Largest chaos order for `J_n`.
pub const J_MAX_ORDER: usize = 3;

/// A value with an error estimate (quadrature bound or QMC standard error).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Valued {
    pub value: f64,
    pub error: f64,
}

impl Valued {
    fn exact(value: f64) -> Self {
        Valued { value, error: 0.0 }
    }
}

impl From<Integral> for Valued {
    fn from(i: Integral) -> Self {
        Valued {
            value: i.value,
            error: i.error,
        }
    }
}

fn check_order(n: usize, max: usize) -> Result<()> {
    if n > max {
        return Err(Error::domain(format!("chaos order {n} above the supported maximum {max}")));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::domain(format!("time must be non-negative, got {t}")));
    }
    Ok(())
}

/// `q(s) = κ s^{-α}`: returns `(κ, α)` for the power-law regimes.
fn heat_power(model: &CovarianceModel) -> Option<(f64, f64)> {
    model.power_law()?;
    Some((model.heat_mass(1.0), model.heat_singularity()))
}

/// `h_n(t)`.
pub fn h_n(model: &CovarianceModel, n: usize, t: f64) -> Result<Valued> {
    check_order(n, H_MAX_ORDER)?;
    check_time(t)?;
    if n == 0 {
        return Ok(Valued::exact(1.0));
    }
    if t == 0.0 {
        return Ok(Valued::exact(0.0));
    }
    match heat_power(model) {
        Some((kappa, alpha)) => {
            if alpha >= 1.0 {
                return Err(Error::Divergence(format!("q(s) ~ s^-{alpha} is not integrable at 0")));
            }
            let nf = n as f64;
            let e = nf * (1.0 - alpha);
            let ln = nf * (kappa * gamma(1.0 - alpha)).ln() + e * t.ln() - ln_gamma(e + 1.0);
            Ok(Valued::exact(ln.exp()))
        }
        None => h_n_recursive(model, n, t, Tolerance::rel(1e-11)).map(Valued::from),
    }
}

/// `h_n(t)` from the convolution recursion by nested quadrature.
pub fn h_n_recursive(model: &CovarianceModel, n: usize, t: f64, tol: Tolerance) -> Result<Integral> {
    if n == 0 {
        return Ok(Integral::exact(1.0));
    }
    if t == 0.0 {
        return Ok(Integral::ZERO);
    }
    let alpha = model.heat_singularity();
    let mut inner_err = 0.0f64;
    let mut fail = None;
    let v = integrate_from_zero(
        |u| {
            if fail.is_some() {
                return 0.0;
            }
            match h_n_recursive(model, n - 1, t - u, tol) {
                Ok(h) => {
                    let q = model.heat_mass(u);
                    inner_err = inner_err.max(h.error * q);
                    q * h.value
                }
                Err(e) => {
                    fail = Some(e);
                    0.0
                }
            }
        },
        t,
        -alpha,
        tol,
    )?;
    if let Some(e) = fail {
        return Err(e);
    }
    Ok(Integral {
        value: v.value,
        error: v.error + inner_err * t,
        evals: v.evals,
    })
}

/// Options for the quasi-Monte Carlo simplex integrals.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct QmcOptions {
    pub points: u64,
    pub scrambles: u64,
    pub seed: u64,
}

impl Default for QmcOptions {
    fn default() -> Self {
        QmcOptions {
            points: 1 << 14,
            scrambles: 8,
            seed: 0x5eed,
        }
    }
}

/// `J_n(t) = ∫_{T_n(t)} ∫ Π_j e^{-(t_{j+1}-t_j)|ξ_1+…+ξ_j|²} μ(dξ_1)…μ(dξ_n) dt`.
pub fn j_n(model: &CovarianceModel, n: usize, t: f64, opts: QmcOptions) -> Result<Valued> {
    check_order(n, J_MAX_ORDER)?;
    check_time(t)?;
    if n <= 1 || t == 0.0 || matches!(model.regime(), Regime::White) {
        // one frequency, or Lebesgue μ (the map ξ ↦ partial sums is unimodular)
        return h_n(model, n, t);
    }
    j_n_qmc(model, n, t, opts)
}

/// `(M)_{ab} = Σ_{j >= max(a,b)} u_j`, the quadratic form of the partial sums.
fn gap_matrix(u: &[f64], m: &mut Mat) {
    let n = u.len();
    let mut tail = vec![0.0; n + 1];
    for j in (0..n).rev() {
        tail[j] = tail[j + 1] + u[j];
    }
    for a in 0..n {
        for b in 0..n {
            m[a][b] = tail[a.max(b)];
        }
    }
}

fn det(m: &Mat, n: usize) -> f64 {
    let mut a = *m;
    let mut d = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if a[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            a.swap(p, c);
            d = -d;
        }
        d *= a[c][c];
        for r in (c + 1)..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    d
}

/// Stick-breaking map of `y ∈ (0,1)^n` onto `{u >= 0, Σu <= t}` after the
/// power change `x = y^k`; returns the Jacobian.
fn simplex_map(y: &[f64], t: f64, k: f64, u: &mut [f64]) -> f64 {
    let n = y.len();
    let mut rest = t;
    let mut jac = 1.0;
    for j in 0..n {
        let x = y[j].powf(k);
        jac *= k * y[j].powf(k - 1.0) * rest;
        u[j] = rest * x;
        rest *= 1.0 - x;
    }
    jac
}

/// `μ = v^a / (1-v)^b` and `dμ/dv`.
fn mixture_map(v: f64, a: f64, b: f64) -> (f64, f64) {
    let l = v.powf(a) / (1.0 - v).powf(b);
    (l, l * (a / v + b / (1.0 - v)))
}

/// Frequency integrand at fixed time gaps.
///
/// For a singular density (`p < 0`) each `|ξ_i|^p` is written as a Gaussian
/// scale mixture `|ξ|^{-2σ} = Γ(σ)^{-1} ∫ λ^{σ-1} e^{-λξ²} dλ`, `σ = -p/2`,
/// with the scales measured in units of the diagonal `D` of the gap matrix,
/// `λ_i = D_ii μ_i`, which pulls the time singularity out as `Π D_ii^{-α}`.
/// For `p >= 0` the partial sums `η_j` are sampled from the Gaussian factors
/// instead and the density is averaged over them.
#[derive(Clone, Copy)]
enum JIntegrand {
    /// Integrable kernel: `det(I + 2M)^{-1/2}`.
    Gaussian,
    Mixture { sigma: f64, a: f64, b: f64, pref: f64, alpha: f64 },
    /// `c^n π^{n/2} Π u_j^{-1/2} E Π |η_j - η_{j-1}|^p`, `η_j ~ N(0, 1/(2u_j))`.
    Paths { power: f64, pref: f64 },
}

impl JIntegrand {
    fn for_model(model: &CovarianceModel, n: usize) -> Self {
        let pl = match model.power_law() {
            None => return JIntegrand::Gaussian,
            Some(pl) => pl,
        };
        let alpha = model.heat_singularity();
        if pl.power < 0.0 {
            let sigma = -pl.power / 2.0;
            JIntegrand::Mixture {
                sigma,
                a: 1.0 / sigma,
                b: 1.0 / (0.5 - sigma),
                pref: (pl.coeff * PI.sqrt() / gamma(sigma)).powi(n as i32),
                alpha,
            }
        } else {
            JIntegrand::Paths {
                power: pl.power,
                pref: (pl.coeff * PI.sqrt()).powi(n as i32),
            }
        }
    }

    fn dim(&self, n: usize) -> usize {
        match self {
            JIntegrand::Gaussian => n,
            _ => 2 * n,
        }
    }

    fn eval(&self, m: &Mat, v: &[f64], n: usize) -> f64 {
        match *self {
            JIntegrand::Gaussian => {
                let mut a = *m;
                for i in 0..n {
                    for j in 0..n {
                        a[i][j] *= 2.0;
                    }
                    a[i][i] += 1.0;
                }
                det(&a, n).powf(-0.5)
            }
            JIntegrand::Mixture { sigma, a, b, pref, alpha } => {
                let mut q = [[0.0; 4]; 4];
                let mut w = pref;
                for i in 0..n {
                    w *= m[i][i].powf(-alpha);
                    for j in 0..n {
                        q[i][j] = m[i][j] / (m[i][i] * m[j][j]).sqrt();
                    }
                }
                for i in 0..n {
                    let (mu, dmu) = mixture_map(v[i], a, b);
                    q[i][i] += mu;
                    w *= mu.powf(sigma - 1.0) * dmu;
                }
                let dq = det(&q, n);
                if !(dq > 0.0) || !w.is_finite() {
                    return 0.0;
                }
                w * dq.powf(-0.5)
            }
            JIntegrand::Paths { power, pref } => {
                // gaps from the tail sums: u_j = M_jj - M_{j+1,j+1}
                let std_normal = Normal::new(0.0, 1.0).expect("standard normal");
                let mut w = pref;
                let mut prev = 0.0;
                for j in 0..n {
                    let u = m[j][j] - if j + 1 < n { m[j + 1][j + 1] } else { 0.0 };
                    if !(u > 0.0) {
                        return 0.0;
                    }
                    let eta = std_normal.inverse_cdf(v[j]) / (2.0 * u).sqrt();
                    w *= u.powf(-0.5) * (eta - prev).abs().powf(power);
                    prev = eta;
                }
                w
            }
        }
    }
}

type Mat = [[f64; 4]; 4];

/// QMC evaluation of `J_n` (also valid at `n = 1`, where it reproduces `h_1`).
pub fn j_n_qmc(model: &CovarianceModel, n: usize, t: f64, opts: QmcOptions) -> Result<Valued> {
    if model.dim() != 1 {
        return Err(Error::UnsupportedRegime("J_n is implemented for d = 1".into()));
    }
    if matches!(model.regime(), Regime::White) {
        return h_n(model, n, t);
    }
    let integrand = JIntegrand::for_model(model, n);
    // A small gap u_j (j < n) makes |η_j| large in both ξ_j and ξ_{j+1}, so
    // the integrand can blow up like u_j^{-(1/2 + p)}, worse than q's u^{-α}.
    let alpha = model.heat_singularity();
    let s_max = match model.power_law() {
        Some(pl) if n >= 2 => alpha.max(0.5 + pl.power),
        _ => alpha,
    };
    let k = 1.0 / (1.0 - s_max);
    let dim = integrand.dim(n);
    let means: Vec<f64> = (0..opts.scrambles)
        .map(|r| {
            let seq = ScrambledHalton::new(dim, opts.seed, r);
            let mut p = vec![0.0; dim];
            let mut u = vec![0.0; n];
            let mut m = [[0.0; 4]; 4];
            let vals: Vec<f64> = (0..opts.points)
                .map(|i| {
                    seq.point(i, &mut p);
                    let jac = simplex_map(&p[..n], t, k, &mut u);
                    gap_matrix(&u, &mut m);
                    jac * integrand.eval(&m, &p[n..], n)
                })
                .collect();
            pairwise_sum(&vals) / opts.points as f64
        })
        .collect();
    let e = mean_se(&means);
    Ok(Valued {
        value: e.value,
        error: e.se,
    })
}


/// `C_N = ∫_{|ξ|>N} |ξ|^{-2} μ(dξ)` and `D_N = ∫_{|ξ|<=N} μ(dξ)`.
pub fn cn_dn(model: &CovarianceModel, big_n: f64) -> Result<(f64, f64)> {
    if !(big_n > 0.0) {
        return Err(Error::domain("N must be positive"));
    }
    let area = sphere_area(model.dim());
    let d = model.dim() as f64;
    match model.power_law() {
        Some(pl) => {
            let e = pl.power + d;
            if e - 2.0 >= 0.0 {
                return Err(Error::Divergence("C_N diverges".into()));
            }
            let c = area * pl.coeff * big_n.powf(e - 2.0) / (2.0 - e);
            let dd = area * pl.coeff * big_n.powf(e) / e;
            Ok((c, dd))
        }
        None => {
            let tol = Tolerance::rel(1e-12);
            let c = integrate_to_infinity(
                |r| model.density_radial(r) * r.powf(d - 3.0),
                big_n,
                Decay::Fast,
                tol,
            )?;
            let dd = 2.0 * model.density_mass(0.0, big_n);
            Ok((area * c.value, dd))
        }
    }
}

/// Partial sums of `H(t;γ) = Σ γ^n h_n(t)` and `H̃(t;γ) = Σ √(γ^n h_n(t))`.
#[derive(Clone, Debug, Serialize)]
pub struct SeriesPartial {
    pub gamma: f64,
    /// `h[i]` is the sum over `n <= i`.
    pub h: Vec<f64>,
    pub h_tilde: Vec<f64>,
    /// Magnitude of the last term of `H` and its ratio to the previous one.
    pub last_term: f64,
    pub last_ratio: f64,
}

pub fn series_partial(model: &CovarianceModel, t: f64, gamma_scale: f64, n_max: usize) -> Result<SeriesPartial> {
    check_order(n_max, H_MAX_ORDER)?;
    let mut terms = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let h = h_n(model, n, t)?.value;
        terms.push(if n == 0 { 1.0 } else { gamma_scale.powi(n as i32) * h });
    }
    let mut h = Vec::new();
    let mut ht = Vec::new();
    let (mut a, mut b) = (0.0, 0.0);
    for v in &terms {
        a += v;
        b += v.sqrt();
        h.push(a);
        ht.push(b);
    }
    let last = terms[n_max];
    let ratio = if n_max == 0 { 0.0 } else { last / terms[n_max - 1] };
    Ok(SeriesPartial {
        gamma: gamma_scale,
        h,
        h_tilde: ht,
        last_term: last,
        last_ratio: ratio,
    })
}

/// `ℓ_R(ξ) = sin²(Rξ) / (π R ξ²)`, with `ℓ_R(0) = R/π`.
pub fn ell_r(r: f64, xi: f64) -> f64 {
    let x = r * xi;
    let sinc = if x.abs() < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
    r * sinc * sinc / PI
}

/// `∫_0^∞ sin²v · v^m dv` for `-3 < m < -1`: panels up to `V = 100π`, then
/// two terms of the integration-by-parts tail.
fn sin2_power_integral(m: f64) -> Result<f64> {
    const PANELS: usize = 100;
    let tol = Tolerance::rel(1e-12);
    let f = |v: f64| {
        let s = v.sin();
        s * s * v.powf(m)
    };
    let mut acc = integrate_from_zero(f, PI, m + 2.0, tol)?;
    for k in 1..PANELS {
        acc = acc + integrate(f, k as f64 * PI, (k + 1) as f64 * PI, tol)?;
    }
    let big_v = PANELS as f64 * PI;
    let tail = -big_v.powf(m + 1.0) / (2.0 * (m + 1.0)) + m * big_v.powf(m - 1.0) / 8.0;
    Ok(acc.value + tail)
}

/// `∫ ℓ_R(ξ) μ(dξ)` (d = 1).
pub fn ell_r_mu_integral(model: &CovarianceModel, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::domain("R must be positive"));
    }
    if model.dim() != 1 {
        return Err(Error::UnsupportedRegime("ℓ_R integral is one-dimensional".into()));
    }
    match model.power_law() {
        Some(pl) => {
            // ξ = v/R: (2c/π) R^{-p} ∫ sin²v v^{p-2} dv
            let s = sin2_power_integral(pl.power - 2.0)?;
            Ok(2.0 * pl.coeff / PI * r.powf(-pl.power) * s)
        }
        None => {
            let tol = Tolerance::rel(1e-11).with_abs(1e-16);
            let cutoff = 12.0;
            let step = PI / r;
            let mut knots = vec![0.0];
            while *knots.last().unwrap() < cutoff {
                knots.push(knots.last().unwrap() + step);
            }
            let f = |x: f64| 2.0 * ell_r(r, x) * model.density_radial(x);
            let head = crate::quadrature::integrate_panels(f, &knots, tol)?;
            let tail = integrate_to_infinity(f, *knots.last().unwrap(), Decay::Fast, tol)?;
            Ok(head.value + tail.value)
        }
    }
}

/// `a_t(ξ) = ∫_0^t e^{-rξ²/2} dr`.
fn time_factor(t: f64, xi: f64) -> f64 {
    let h = xi * xi / 2.0;
    if h * t < 1e-8 {
        t * (1.0 - h * t / 2.0)
    } else {
        -(-h * t).exp_m1() / h
    }
}

/// `E[J_{1,R}(t) J_{1,R}(s)] = 4πR ∫ ℓ_R(ξ) a_t(ξ) a_s(ξ) μ(dξ)`, the
/// covariance of the first-chaos parts of `F_R(t)` and `F_R(s)` (d = 1).
pub fn first_chaos_cov(model: &CovarianceModel, r: f64, t: f64, s: f64) -> Result<f64> {
    check_time(t)?;
    check_time(s)?;
    if !(r > 0.0) {
        return Err(Error::domain("R must be positive"));
    }
    if model.dim() != 1 {
        return Err(Error::UnsupportedRegime("first-chaos covariance is one-dimensional".into()));
    }
    if t == 0.0 || s == 0.0 {
        return Ok(0.0);
    }
    let p = model.power_law().map(|pl| pl.power).unwrap_or(0.0);
    let f = |x: f64| 2.0 * ell_r(r, x) * time_factor(t, x) * time_factor(s, x) * model.density_radial(x);
    let tol = Tolerance::rel(1e-10);
    let step = PI / r;
    // beyond X the integrand is below ~X^{p-6}
    let cutoff = (60.0 / t.min(s).sqrt()).max(40.0 * step);
    let n_panels = (cutoff / step).ceil() as usize;
    let mut acc = integrate_from_zero(f, step, p, tol)?;
    for k in 1..n_panels {
        acc = acc + integrate(f, k as f64 * step, (k + 1) as f64 * step, tol)?;
    }
    // tail: replace sin² by its mean
    let g = |x: f64| time_factor(t, x) * time_factor(s, x) * model.density_radial(x) / (PI * r * x * x);
    let tail = integrate_to_infinity(g, n_panels as f64 * step, Decay::Power(6.0 - p), tol)?;
    let total = acc + tail;
    if total.error > 1e-6 * total.value.abs() {
        return Err(Error::QuadratureFailure(format!(
            "first-chaos covariance error {:.2e}",
            total.error
        )));
    }
    Ok(4.0 * PI * r * total.value)
}

/// `‖f_1(·, x; t)‖²_{P₀} = ∫ a_t(ξ)² μ(dξ)`; bounded by `t h_1(t)`.
pub fn first_kernel_norm_sq(model: &CovarianceModel, t: f64) -> Result<Valued> {
    check_time(t)?;
    let p = model.power_law().map(|pl| pl.power).unwrap_or(0.0);
    let d = model.dim() as f64;
    let decay = match model.regime() {
        Regime::Integrable => Decay::Fast,
        _ => Decay::Power(4.0 - p - (d - 1.0)),
    };
    model
        .radial_integral(|x| time_factor(t, x).powi(2), decay, Tolerance::rel(1e-10))
        .map(Valued::from)
}

/// `∫_{B_1×B_1} |x - x'|^{-β} dx dx'` by nested quadrature: over `[-1,1]²`
/// (d = 1), or as `2π ∫_0^2 A(r) r^{1-β} dr` with the lens area `A` (d = 2).
pub fn riesz_ball_integral(d: usize, beta: f64) -> Result<Integral> {
    let tol = Tolerance::rel(1e-12);
    match d {
        1 => {
            let mut fail = None;
            let mut err = 0.0f64;
            let outer = integrate(
                |x| {
                    let left = integrate_from_zero(|y| y.powf(-beta), x + 1.0, -beta, tol);
                    let right = integrate_from_zero(|y| y.powf(-beta), 1.0 - x, -beta, tol);
                    match (left, right) {
                        (Ok(a), Ok(b)) => {
                            err = err.max(a.error + b.error);
                            a.value + b.value
                        }
                        (Err(e), _) | (_, Err(e)) => {
                            fail = Some(e);
                            0.0
                        }
                    }
                },
                -1.0,
                1.0,
                tol,
            )?;
            if let Some(e) = fail {
                return Err(e);
            }
            Ok(Integral {
                value: outer.value,
                error: outer.error + 2.0 * err,
                evals: outer.evals,
            })
        }
        2 => {
            let lens = |r: f64| {
                let h = (r / 2.0).min(1.0);
                2.0 * h.acos() - h * 2.0 * (1.0 - h * h).max(0.0).sqrt()
            };
            let v = integrate_from_zero(|r| lens(r) * r.powf(1.0 - beta), 2.0, 1.0 - beta, tol)?;
            Ok(v.scale(2.0 * PI))
        }
        _ => Err(Error::UnsupportedRegime(format!("Riesz ball integral for d = {d}"))),
    }
}

/// `2^{3-β} / ((1-β)(2-β))`, the d = 1 value of [`riesz_ball_integral`].
pub fn riesz_ball_closed(beta: f64) -> f64 {
    2f64.powf(3.0 - beta) / ((1.0 - beta) * (2.0 - beta))
}

/// Monte Carlo settings for the profile-based limits.
#[derive(Clone, Copy, Debug)]
pub struct LimitMc {
    pub eps: f64,
    pub n_pairs: usize,
    pub seed: u64,
    pub exec: Execution,
}

#[derive(Clone, Debug, Serialize)]
pub struct KLimit {
    pub t: f64,
    pub s: f64,
    /// Reported value with its (Monte Carlo or quadrature) error.
    pub value: Estimate,
    /// Closed form where one exists.
    pub closed_form: Option<f64>,
    /// Independent quadrature of the same constant.
    pub quadrature: Option<Valued>,
    /// How the value was obtained.
    pub method: &'static str,
    #[serde(skip)]
    pub profile: Option<RhoProfile>,
}

/// Lag window for the profile-based limits.
pub fn limit_window(t: f64, s: f64) -> f64 {
    (8.0 * (t + s).sqrt()).max(16.0)
}

/// Limiting covariance `K(t, s)` of the rescaled spatial averages.
pub fn k_limit(model: &CovarianceModel, t: f64, s: f64, mc: &LimitMc) -> Result<KLimit> {
    check_time(t)?;
    check_time(s)?;
    match model.regime() {
        Regime::Riesz { beta } => {
            let quad = riesz_ball_integral(model.dim(), beta)?.scale(t * s);
            let closed = (model.dim() == 1).then(|| t * s * riesz_ball_closed(beta));
            let value = closed.unwrap_or(quad.value);
            Ok(KLimit {
                t,
                s,
                value: Estimate::new(value, if closed.is_some() { 0.0 } else { quad.error }),
                closed_form: closed,
                quadrature: Some(quad.into()),
                method: "riesz-ball",
                profile: None,
            })
        }
        Regime::White | Regime::Integrable | Regime::Rough { .. } => {
            if t == 0.0 || s == 0.0 {
                return Ok(KLimit {
                    t,
                    s,
                    value: Estimate::new(0.0, 0.0),
                    closed_form: Some(0.0),
                    quadrature: None,
                    method: "trivial",
                    profile: None,
                });
            }
            let prof = rho_profile(model, t, s, mc.eps, limit_window(t, s), &[], mc.n_pairs, mc.seed, mc.exec)?;
            k_limit_from_profile(model, prof)
        }
    }
}

/// `K(t, s)` read off a profile that was already computed (its window
/// should cover the decay of `ρ`). Riesz models ignore the profile.
pub fn k_limit_from_profile(model: &CovarianceModel, prof: RhoProfile) -> Result<KLimit> {
    let (t, s) = (prof.t, prof.s);
    let omega = 2.0;
    let (value, method) = match model.regime() {
        Regime::Riesz { .. } => {
            let k = k_limit(model, t, s, &LimitMc { eps: prof.eps, n_pairs: 0, seed: 0, exec: Execution::Sequential })?;
            return Ok(k);
        }
        Regime::Rough { .. } => (prof.nonlinear_integral.scale(omega), "rho-profile-nonlinear"),
        Regime::White | Regime::Integrable => (prof.integral.scale(omega), "rho-profile"),
    };
    Ok(KLimit {
        t,
        s,
        value,
        closed_form: None,
        quadrature: None,
        method,
        profile: Some(prof),
    })
}

/// Options for [`ChaosTable::compute`].
#[derive(Clone, Debug)]
pub struct ChaosOptions {
    pub h_order: usize,
    pub j_order: usize,
    pub n_levels: Vec<f64>,
    pub gamma_scale: f64,
    pub qmc: QmcOptions,
}

impl Default for ChaosOptions {
    fn default() -> Self {
        ChaosOptions {
            h_order: H_MAX_ORDER,
            j_order: J_MAX_ORDER,
            n_levels: vec![1.0, 10.0, 100.0],
            gamma_scale: 1.0,
            qmc: QmcOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderValue {
    pub n: usize,
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FrequencySplit {
    #[serde(rename = "N")]
    pub n: f64,
    pub c_n: f64,
    pub d_n: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChaosTable {
    pub model: CovarianceModel,
    pub t: f64,
    pub h: Vec<OrderValue>,
    pub j: Vec<OrderValue>,
    pub splits: Vec<FrequencySplit>,
    pub series: SeriesPartial,
    pub first_kernel_norm_sq: Valued,
}

impl ChaosTable {
    pub fn compute(model: &CovarianceModel, t: f64, opts: &ChaosOptions) -> Result<Self> {
        check_order(opts.h_order, H_MAX_ORDER)?;
        check_order(opts.j_order, J_MAX_ORDER)?;
        let mut h = Vec::new();
        for n in 1..=opts.h_order {
            let v = h_n(model, n, t)?;
            h.push(OrderValue {
                n,
                value: v.value,
                error: v.error,
            });
        }
        let mut j = Vec::new();
        if model.dim() == 1 {
            for n in 1..=opts.j_order {
                let v = j_n(model, n, t, opts.qmc)?;
                j.push(OrderValue {
                    n,
                    value: v.value,
                    error: v.error,
                });
            }
        }
        let splits = opts
            .n_levels
            .iter()
            .map(|&n| cn_dn(model, n).map(|(c_n, d_n)| FrequencySplit { n, c_n, d_n }))
            .collect::<Result<Vec<_>>>()?;
        Ok(ChaosTable {
            model: model.clone(),
            t,
            h,
            j,
            splits,
            series: series_partial(model, t, opts.gamma_scale, opts.h_order)?,
            first_kernel_norm_sq: first_kernel_norm_sq(model, t)?,
        })
    }
}

use super::{CovarianceModel, Regime};
use crate::error::{Error, Result};
use statrs::function::gamma::gamma;

/// Tabulated mollified covariance `G_ε(a) = ∫ e^{-εξ²} cos(ξa) g(ξ) dξ` on a
/// uniform grid of `[0, range]` with cubic interpolation.
///
/// Power-law regimes are scale-invariant, `G_ε(a) = c ε^{-(p+1)/2} Ψ(a/√ε)`
/// with `Ψ(y) = Γ(k) M(k, 1/2, -y²/4)`, `k = (p+1)/2`. Nodes with
/// `y <= ASYMPTOTIC_Y` are integrated numerically, larger ones use the
/// large-argument expansion of Kummer's function.
#[derive(Clone, Debug)]
pub struct KernelTable {
    step: f64,
    range: f64,
    eps: f64,
    values: Vec<f64>,
}

const ASYMPTOTIC_Y: f64 = 30.0;

impl KernelTable {
    pub const DEFAULT_NODES: usize = 1 << 15;

    pub fn build(model: &CovarianceModel, eps: f64, range: f64, n_nodes: usize) -> Result<Self> {
        if !(eps > 0.0) || !(range > 0.0) || n_nodes < 8 {
            return Err(Error::domain("kernel table needs ε > 0, range > 0 and at least 8 nodes"));
        }
        let step = range / (n_nodes - 1) as f64;
        let mut values = Vec::with_capacity(n_nodes);
        for i in 0..n_nodes {
            values.push(node_value(model, eps, i as f64 * step)?);
        }
        Ok(KernelTable {
            step,
            range,
            eps,
            values,
        })
    }

    /// Table covering the arguments met by paths on `[0,t]`, `[0,t2]` at lags up to `z_max`.
    pub fn for_times(model: &CovarianceModel, eps: f64, t: f64, t2: f64, z_max: f64) -> Result<Self> {
        let range = 6.0 * (t + t2).sqrt() + z_max.abs();
        Self::build(model, eps, range.max(1e-3), Self::DEFAULT_NODES)
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn eval(&self, a: f64) -> Result<f64> {
        if !(a.abs() <= self.range) {
            return Err(Error::TableRange {
                arg: a,
                limit: self.range,
            });
        }
        Ok(self.eval_unchecked(a))
    }

    /// Cubic Lagrange interpolation; `|a|` must not exceed the range.
    #[inline]
    pub fn eval_unchecked(&self, a: f64) -> f64 {
        let u = a.abs() / self.step;
        let n = self.values.len();
        let i = (u as usize).min(n - 2);
        let i0 = i.clamp(1, n - 3);
        let s = u - i0 as f64;
        let v = |j: isize| -> f64 { self.values[j.unsigned_abs()] };
        let (y0, y1, y2, y3) = (
            v(i0 as isize - 1),
            v(i0 as isize),
            v(i0 as isize + 1),
            v(i0 as isize + 2),
        );
        // nodes at s = -1, 0, 1, 2
        let c0 = -s * (s - 1.0) * (s - 2.0) / 6.0;
        let c1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
        let c2 = -(s + 1.0) * s * (s - 2.0) / 2.0;
        let c3 = (s + 1.0) * s * (s - 1.0) / 6.0;
        c0 * y0 + c1 * y1 + c2 * y2 + c3 * y3
    }
}

fn node_value(model: &CovarianceModel, eps: f64, a: f64) -> Result<f64> {
    if let Some(v) = model.mollified_cov_closed(eps, a) {
        return Ok(v);
    }
    let pl = model.power_law().ok_or_else(|| {
        Error::UnsupportedRegime(format!("no kernel table route for {}", model.tag()))
    })?;
    debug_assert!(matches!(model.regime(), Regime::Riesz { .. } | Regime::Rough { .. }));
    let y = a / eps.sqrt();
    if y <= ASYMPTOTIC_Y {
        return model.mollified_cov(eps, a);
    }
    let k = (pl.power + 1.0) / 2.0;
    Ok(pl.coeff * eps.powf(-k) * psi_asymptotic(k, y))
}

/// `Γ(k) M(k, 1/2, -x)` for large `x = y²/4`:
/// `Γ(k) Γ(1/2)/Γ(1/2-k) x^{-k} Σ_s (k)_s (k+1/2)_s / (s! x^s)`.
fn psi_asymptotic(k: f64, y: f64) -> f64 {
    let x = y * y / 4.0;
    let lead = gamma(k) * std::f64::consts::PI.sqrt() / gamma(0.5 - k);
    if lead == 0.0 || !lead.is_finite() {
        return 0.0;
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for s in 0..60 {
        let sf = s as f64;
        let next = term * (k + sf) * (k + 0.5 + sf) / ((sf + 1.0) * x);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    lead * x.powf(-k) * sum
}

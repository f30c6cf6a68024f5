use super::{gagliardo_constant, CovarianceModel};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use realfft::RealFftPlanner;

/// Samples of a smooth, compactly supported function on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    grid: GridSpec,
    values: Vec<f64>,
}

impl TestFunction {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid of {} points",
                values.len(),
                grid.n_points()
            )));
        }
        let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let edge = values[0].abs().max(values[values.len() - 1].abs());
        if edge > 1e-12 * peak.max(f64::MIN_POSITIVE) {
            return Err(Error::domain("test function does not vanish at the grid boundary"));
        }
        Ok(TestFunction { grid, values })
    }

    pub fn sample(grid: GridSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..grid.n_points()).map(|j| f(grid.x(j))).collect();
        Self::new(grid, values)
    }

    pub fn zero(grid: GridSpec) -> Self {
        TestFunction {
            grid,
            values: vec![0.0; grid.n_points()],
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn same_grid(a: &TestFunction, b: &TestFunction) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch("test functions live on different grids".into()));
    }
    Ok(())
}

const PAD: usize = 16;

/// Spectral inner product `∫ Fφ conj(Fψ) μ(dξ)` from a zero-padded DFT with
/// cell-integrated spectral weights.
pub fn inner_spectral(phi: &TestFunction, psi: &TestFunction, model: &CovarianceModel) -> Result<f64> {
    same_grid(phi, psi)?;
    if model.dim() != 1 {
        return Err(Error::UnsupportedRegime("inner_spectral is one-dimensional".into()));
    }
    let grid = phi.grid;
    let n = grid.n_points() * PAD;
    let dx = grid.dx();
    let dxi = 2.0 * std::f64::consts::PI / (n as f64 * dx);
    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let transform = |f: &TestFunction| {
        let mut buf = fft.make_input_vec();
        buf[..f.values.len()].copy_from_slice(&f.values);
        let mut out = fft.make_output_vec();
        fft.process(&mut buf, &mut out).expect("fft buffer sizes");
        out
    };
    let fa = transform(phi);
    let fb = transform(psi);
    let half = n / 2;
    let mut acc = 0.0;
    for k in 0..=half {
        let w = model.cell_weight(k as f64 * dxi, dxi);
        let prod = fa[k].re * fb[k].re + fa[k].im * fb[k].im;
        let mult = if k == 0 || k == half { 1.0 } else { 2.0 };
        acc += mult * w * prod;
    }
    Ok(acc * dx * dx)
}

/// Gagliardo form `C_H ∬ (φ(x)-φ(y))(ψ(x)-ψ(y)) |x-y|^{2H-2} dx dy`.
///
/// Pairs inside the grid are summed directly with the diagonal cell set to
/// zero; pairs with one point outside the grid window reduce to
/// `2 C_H ∫ φψ (dist to edge)^{2H-1}/(1-2H)` and are added in closed form.
pub fn inner_gagliardo(phi: &TestFunction, psi: &TestFunction, hurst: f64) -> Result<f64> {
    same_grid(phi, psi)?;
    if !(hurst > 0.25 && hurst < 0.5) {
        return Err(Error::domain(format!("H must lie in (1/4, 1/2), got {hurst}")));
    }
    let ch = gagliardo_constant(hurst)?;
    let grid = phi.grid;
    let n = grid.n_points();
    let dx = grid.dx();
    let expo = 2.0 * hurst - 2.0;
    let kern: Vec<f64> = (0..n).map(|m| if m == 0 { 0.0 } else { (m as f64 * dx).powf(expo) }).collect();
    let (a, b) = (&phi.values, &psi.values);
    let inside = increment_sum(a, b, &kern);
    let lo = grid.x(0) - 0.5 * dx;
    let hi = grid.x(n - 1) + 0.5 * dx;
    let q = 2.0 * hurst - 1.0;
    let mut outside = 0.0;
    for j in 0..n {
        let x = grid.x(j);
        let ab = a[j] * b[j];
        if ab != 0.0 {
            outside += ab * ((hi - x).powf(q) + (x - lo).powf(q));
        }
    }
    outside *= 2.0 / (1.0 - 2.0 * hurst);
    Ok(ch * (inside * dx * dx + outside * dx))
}

/// `Σ_{i≠j} (a_i-a_j)(b_i-b_j) k_{|i-j|}`.
fn increment_sum(a: &[f64], b: &[f64], kern: &[f64]) -> f64 {
    let n = a.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in (i + 1)..n {
            row += (a[i] - a[j]) * (b[i] - b[j]) * kern[j - i];
        }
        acc += row;
    }
    2.0 * acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bump(grid: GridSpec, c: f64, s: f64) -> TestFunction {
        TestFunction::sample(grid, |x| (-(x - c) * (x - c) / (2.0 * s * s)).exp()).unwrap()
    }

    #[test]
    fn zero_functions_give_zero() {
        let g = GridSpec::new(8.0, 256).unwrap();
        let z = TestFunction::zero(g);
        assert_eq!(inner_spectral(&z, &z, &CovarianceModel::white()).unwrap(), 0.0);
        assert_eq!(inner_gagliardo(&z, &z, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn white_inner_is_l2() {
        let g = GridSpec::new(8.0, 512).unwrap();
        let f = bump(g, 0.3, 0.7);
        let l2: f64 = f.values().iter().map(|v| v * v).sum::<f64>() * g.dx();
        let v = inner_spectral(&f, &f, &CovarianceModel::white()).unwrap();
        assert_relative_eq!(v, l2, max_relative = 1e-10);
    }

    #[test]
    fn integrable_inner_matches_kernel_double_sum() {
        let g = GridSpec::new(8.0, 256).unwrap();
        let f = bump(g, 0.0, 0.5);
        let h = bump(g, 1.0, 0.8);
        let dx = g.dx();
        let mut direct = 0.0;
        for i in 0..256 {
            for j in 0..256 {
                let r = g.x(i) - g.x(j);
                direct += f.values()[i] * h.values()[j] * (-r * r / 2.0).exp();
            }
        }
        direct *= dx * dx;
        let v = inner_spectral(&f, &h, &CovarianceModel::integrable()).unwrap();
        // cell-averaged weights carry an O(Δξ²) midpoint error
        assert_relative_eq!(v, direct, max_relative = 1e-4);
    }

    #[test]
    fn arguments_commute() {
        let g = GridSpec::new(8.0, 512).unwrap();
        let f = bump(g, 0.2, 0.4);
        let h = bump(g, -0.5, 0.6);
        let m = CovarianceModel::rough(0.3).unwrap();
        assert_eq!(inner_spectral(&f, &h, &m).unwrap(), inner_spectral(&h, &f, &m).unwrap());
        assert_eq!(inner_gagliardo(&f, &h, 0.3).unwrap(), inner_gagliardo(&h, &f, 0.3).unwrap());
    }

    #[test]
    fn constant_has_no_increments() {
        let c = vec![0.7; 64];
        let kern: Vec<f64> = (0..64).map(|m| (m as f64 + 1.0).powf(-1.4)).collect();
        assert_eq!(increment_sum(&c, &c, &kern), 0.0);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let a = TestFunction::zero(GridSpec::new(4.0, 64).unwrap());
        let b = TestFunction::zero(GridSpec::new(4.0, 128).unwrap());
        assert!(matches!(inner_gagliardo(&a, &b, 0.3), Err(Error::GridMismatch(_))));
        assert!(matches!(
            inner_spectral(&a, &b, &CovarianceModel::white()),
            Err(Error::GridMismatch(_))
        ));
    }
}

//! Feynman–Kac Monte Carlo for the mollified equation.
//!
//! For a path `B` on `[0, t]`, `W(A_{t,x}) = ∫_0^t Ẇ^ε(x + B_r) dr`, which on
//! the grid is `Σ_k b_k conj(φ(ξ_k)) e^{iξ_k x}` with the occupation transform
//! `φ(ξ) = Σ_r e^{-iξ B_r} Δt`. One inverse FFT per path gives every `x`.
//! The occupation measure is deposited on the spatial lattice with
//! cloud-in-cell weights before the forward FFT.

mod cross;

pub use cross::{
    cross_functional, lattice_spacing, moment_mc, rho_estimate, rho_profile, OverlapEstimate, PairKernel,
    RhoProfile,
};

use crate::error::{Error, Result};
use crate::exec::{pairwise_sum, Execution};
use crate::field::{mode_variances, NoiseField};
use crate::grid::GridSpec;
use crate::seed::{seed_derive, stream_rng};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use std::ops::Range;
use std::sync::Arc;

/// Exponents above this are flagged.
pub const EXPONENT_GUARD: f64 = 700.0;

/// `max(64, ⌈50 t / ε⌉)` Euler steps resolve `p_ε` along the path.
pub fn n_steps_for(t: f64, eps: f64) -> usize {
    ((50.0 * t / eps).ceil() as usize).max(64)
}

/// Seeded Brownian paths `B_0 = 0, B_1, …, B_n` on `[0, t]`.
#[derive(Clone, Debug)]
pub struct BrownianEnsemble {
    horizon: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    positions: Vec<f64>,
}

/// Draw path `m` of the ensemble keyed by `seed` into `out` (`n_steps + 1` values).
pub fn draw_path(seed: u64, m: usize, t: f64, out: &mut [f64]) {
    let n_steps = out.len() - 1;
    let sd = (t / n_steps as f64).sqrt();
    let mut rng = stream_rng(seed_derive(seed, &["path".into(), m.into()]));
    out[0] = 0.0;
    let mut b = 0.0;
    for v in out[1..].iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        b += sd * z;
        *v = b;
    }
}

pub fn sample_ensemble(t: f64, n_steps: usize, n_paths: usize, seed: u64) -> Result<BrownianEnsemble> {
    sample_ensemble_with(t, n_steps, n_paths, seed, Execution::default())
}

pub fn sample_ensemble_with(
    t: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    exec: Execution,
) -> Result<BrownianEnsemble> {
    if n_steps == 0 {
        return Err(Error::domain("an ensemble needs at least one time step"));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::domain(format!("horizon must be non-negative, got {t}")));
    }
    let stride = n_steps + 1;
    let paths = exec.map(n_paths, |m| {
        let mut buf = vec![0.0; stride];
        draw_path(seed, m, t, &mut buf);
        buf
    });
    Ok(BrownianEnsemble {
        horizon: t,
        n_steps,
        n_paths,
        seed,
        positions: paths.concat(),
    })
}

impl BrownianEnsemble {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// `B_0, …, B_n` of path `m`.
    pub fn path(&self, m: usize) -> &[f64] {
        let s = self.n_steps + 1;
        &self.positions[m * s..(m + 1) * s]
    }

    /// `φ_m(ξ_k) = Σ_{i<n} Δt e^{-iξ_k B_i}` for `k = 0..=n/2`, summed
    /// directly (the solution engine uses a lattice deposit instead).
    pub fn phi(&self, m: usize, grid: &GridSpec) -> Vec<Complex64> {
        let n_freq = grid.n_freq();
        let dt = self.dt();
        let mut acc = vec![Complex64::new(0.0, 0.0); n_freq];
        let path = self.path(m);
        for &b in &path[..path.len() - 1] {
            let w = Complex64::from_polar(1.0, -grid.dxi() * b);
            let mut cur = Complex64::new(dt, 0.0);
            for a in acc.iter_mut() {
                *a += cur;
                cur *= w;
            }
        }
        acc
    }

    /// Recompute every path from the seed and compare (cache consistency).
    pub fn verify(&self) -> bool {
        let mut buf = vec![0.0; self.n_steps + 1];
        (0..self.n_paths).all(|m| {
            draw_path(self.seed, m, self.horizon, &mut buf);
            buf == self.path(m)
        })
    }
}

/// Cloud-in-cell deposit of `Δt` at `B_0..B_{n-1}` onto the periodic lattice `jΔx`.
pub(crate) fn deposit_periodic(path: &[f64], dt: f64, dx: f64, out: &mut [f64]) {
    let n = out.len() as i64;
    out.iter_mut().for_each(|v| *v = 0.0);
    for &b in &path[..path.len() - 1] {
        let u = b / dx;
        let j0 = u.floor();
        let f = u - j0;
        let j0 = j0 as i64;
        out[j0.rem_euclid(n) as usize] += (1.0 - f) * dt;
        out[(j0 + 1).rem_euclid(n) as usize] += f * dt;
    }
}

/// FFT plans and scratch for per-path work on one grid.
pub(crate) struct Transforms {
    dx: f64,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    real: Vec<f64>,
    spec: Vec<Complex64>,
    scratch_fwd: Vec<Complex64>,
    scratch_inv: Vec<Complex64>,
}

impl Transforms {
    pub(crate) fn new(grid: &GridSpec) -> Self {
        let n = grid.n_points();
        let mut planner = RealFftPlanner::<f64>::new();
        let r2c = planner.plan_fft_forward(n);
        let c2r = planner.plan_fft_inverse(n);
        Transforms {
            dx: grid.dx(),
            real: r2c.make_input_vec(),
            spec: r2c.make_output_vec(),
            scratch_fwd: r2c.make_scratch_vec(),
            scratch_inv: c2r.make_scratch_vec(),
            r2c,
            c2r,
        }
    }

    fn forward_phi(&mut self, path: &[f64], dt: f64) {
        deposit_periodic(path, dt, self.dx, &mut self.real);
        self.r2c
            .process_with_scratch(&mut self.real, &mut self.spec, &mut self.scratch_fwd)
            .expect("fft sizes");
    }

    /// Fill `self.real` with `W(A_{t,x_j})` for all `j`; return `‖A‖²`.
    fn exponent(&mut self, coeffs: &[Complex64], variances: &[f64], path: &[f64], dt: f64) -> f64 {
        self.forward_phi(path, dt);
        let half = coeffs.len() - 1;
        let mut norm = Vec::with_capacity(half + 1);
        for k in 0..=half {
            let phi = self.spec[k];
            let m = if k == 0 || k == half { 1.0 } else { 2.0 };
            norm.push(m * variances[k] * phi.norm_sqr());
            let x = coeffs[k] * phi.conj();
            self.spec[k] = if k % 2 == 0 { x } else { -x };
        }
        self.spec[0].im = 0.0;
        self.spec[half].im = 0.0;
        self.c2r
            .process_with_scratch(&mut self.spec, &mut self.real, &mut self.scratch_inv)
            .expect("hermitian spectrum");
        pairwise_sum(&norm)
    }
}

/// Monte Carlo estimate `û(t, x)` on a window of grid nodes.
#[derive(Clone, Debug)]
pub struct SolutionSample {
    pub t: f64,
    pub grid: GridSpec,
    /// Grid indices covered by `values`.
    pub window: Range<usize>,
    pub values: Vec<f64>,
    pub n_paths: usize,
    pub eps: f64,
    pub noise_seed: u64,
    pub path_seed: u64,
    /// Largest exponent met; above [`EXPONENT_GUARD`] the sample is flagged.
    pub max_exponent: f64,
    pub overflow: bool,
}

impl SolutionSample {
    pub fn x(&self, i: usize) -> f64 {
        self.grid.x(self.window.start + i)
    }

    pub fn at_index(&self, j: usize) -> Option<f64> {
        if self.window.contains(&j) {
            Some(self.values[j - self.window.start])
        } else {
            None
        }
    }
}

/// Per-path evaluator shared across paths of one field.
pub struct FkEngine<'a> {
    field: &'a NoiseField,
    variances: Vec<f64>,
}

impl<'a> FkEngine<'a> {
    pub fn new(field: &'a NoiseField) -> Self {
        FkEngine {
            variances: mode_variances(field.model(), &field.grid(), field.eps()),
            field,
        }
    }

    /// Sum over `paths` of `exp(W(A_x) - ½‖A‖²)` on the `window`, and the
    /// largest exponent seen.
    pub fn sum_over_paths(
        &self,
        ensemble: &BrownianEnsemble,
        paths: Range<usize>,
        window: Range<usize>,
    ) -> (Vec<f64>, f64) {
        let mut tr = Transforms::new(&self.field.grid());
        let mut acc = vec![0.0; window.len()];
        let mut max_exp = f64::NEG_INFINITY;
        let coeffs = self.field.spectral_coeffs();
        for m in paths {
            let norm = tr.exponent(coeffs, &self.variances, ensemble.path(m), ensemble.dt());
            for (a, w) in acc.iter_mut().zip(&tr.real[window.clone()]) {
                let e = w - 0.5 * norm;
                max_exp = max_exp.max(e);
                *a += e.exp();
            }
        }
        (acc, max_exp)
    }
}

const PATH_BLOCK: usize = 16;

/// `û(t, x) = (1/M) Σ_m exp(W(A^m_{t,x}) - ½‖A^m‖²)` on a window of nodes.
pub fn u_estimate(
    field: &NoiseField,
    ensemble: &BrownianEnsemble,
    window: Range<usize>,
    exec: Execution,
) -> Result<SolutionSample> {
    let grid = field.grid();
    if window.end > grid.n_points() || window.is_empty() {
        return Err(Error::GridMismatch(format!(
            "window {window:?} outside a grid of {} points",
            grid.n_points()
        )));
    }
    if ensemble.n_paths() == 0 {
        return Err(Error::domain("empty ensemble"));
    }
    let engine = FkEngine::new(field);
    let n_blocks = ensemble.n_paths().div_ceil(PATH_BLOCK);
    let blocks = exec.map(n_blocks, |b| {
        let lo = b * PATH_BLOCK;
        let hi = (lo + PATH_BLOCK).min(ensemble.n_paths());
        engine.sum_over_paths(ensemble, lo..hi, window.clone())
    });
    let mut max_exponent = f64::NEG_INFINITY;
    let mut values = vec![0.0; window.len()];
    let mut column = vec![0.0; n_blocks];
    for (i, v) in values.iter_mut().enumerate() {
        for (b, blk) in blocks.iter().enumerate() {
            column[b] = blk.0[i];
        }
        *v = pairwise_sum(&column) / ensemble.n_paths() as f64;
    }
    for b in &blocks {
        max_exponent = max_exponent.max(b.1);
    }
    Ok(SolutionSample {
        t: ensemble.horizon(),
        grid,
        window,
        values,
        n_paths: ensemble.n_paths(),
        eps: field.eps(),
        noise_seed: field.seed(),
        path_seed: ensemble.seed(),
        max_exponent,
        overflow: max_exponent > EXPONENT_GUARD,
    })
}

/// Fourier coefficients of `A^{ε,B}_{t,x}`: `e^{-iξx} e^{-εξ²/2} φ_m(ξ)`.
pub fn occupation_transform(
    ensemble: &BrownianEnsemble,
    m: usize,
    x: f64,
    eps: f64,
    grid: &GridSpec,
) -> Result<Vec<Complex64>> {
    if m >= ensemble.n_paths() {
        return Err(Error::GridMismatch(format!("path {m} not in ensemble")));
    }
    let phi = ensemble.phi(m, grid);
    Ok(phi
        .into_iter()
        .enumerate()
        .map(|(k, p)| {
            let xi = grid.xi(k);
            Complex64::from_polar((-eps * xi * xi / 2.0).exp(), -xi * x) * p
        })
        .collect())
}

/// Real-space values of a half-spectrum of Fourier coefficients `F(ξ_k)`
/// on the grid nodes: `(1/2L) Σ_k F(ξ_k) e^{iξ_k x_j}`.
pub fn inverse_on_grid(grid: &GridSpec, coeffs: &[Complex64]) -> Vec<f64> {
    let n = grid.n_points();
    let mut planner = RealFftPlanner::<f64>::new();
    let c2r = planner.plan_fft_inverse(n);
    let mut spec: Vec<Complex64> = coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| if k % 2 == 0 { *c } else { -*c })
        .collect();
    spec[0].im = 0.0;
    spec[n / 2].im = 0.0;
    let mut out = c2r.make_output_vec();
    c2r.process(&mut spec, &mut out).expect("hermitian spectrum");
    let scale = 1.0 / (2.0 * grid.half_width());
    out.iter().map(|v| v * scale).collect()
}

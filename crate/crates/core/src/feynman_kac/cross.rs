//! Cross functionals `I(z) = ∫_0^t ∫_0^{t'} C^ε(z + B¹_r - B²_{r'}) dr dr'` of
//! independent path pairs, and the moments built from them.
//!
//! Each path is deposited (cloud-in-cell, weight `Δt`) on a lattice of
//! spacing `δ = √ε / 8`; the double sum then becomes
//! `Σ_w c_w C^ε(wδ + z)` with `c` the cross-correlation of the two
//! histograms, computed by FFT. Linear deposit on both sides acts like an
//! extra smoothing of variance `δ²/3` on the lag, which is removed by
//! evaluating the kernel at `ε - δ²/6`.

use super::{draw_path, n_steps_for, EXPONENT_GUARD};
use crate::covariance::{CovarianceModel, KernelTable};
use crate::error::{Error, Result};
use crate::exec::{pairwise_sum, Execution};
use crate::seed::seed_derive;
use crate::stats::{mean_se, Estimate};
use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::Serialize;
use std::sync::Arc;

use super::BrownianEnsemble;

/// Lattice spacing for path histograms at mollification `ε`.
pub fn lattice_spacing(eps: f64) -> f64 {
    eps.sqrt() / 8.0
}

fn kernel_eps(eps: f64) -> f64 {
    let d = lattice_spacing(eps);
    eps - d * d / 6.0
}

/// Reach (in units of `√(t+t')`) of the lattice used by [`rho_profile`].
const LATTICE_REACH: f64 = 8.0;

/// Pairs per work unit; partial sums are combined in block order.
const PAIR_BLOCK: usize = 64;

/// `C^ε` evaluated in closed form or through a [`KernelTable`].
#[derive(Clone, Debug)]
pub enum PairKernel {
    Closed { model: CovarianceModel, eps: f64 },
    Table(KernelTable),
}

impl PairKernel {
    /// Kernel at scale `eps` valid for `|a| <= reach`.
    pub fn new(model: &CovarianceModel, eps: f64, reach: f64) -> Result<Self> {
        if model.mollified_cov_closed(eps, 0.0).is_some() {
            return Ok(PairKernel::Closed {
                model: model.clone(),
                eps,
            });
        }
        Ok(PairKernel::Table(KernelTable::build(
            model,
            eps,
            reach.max(1e-3),
            KernelTable::DEFAULT_NODES,
        )?))
    }

    /// Kernel sized for horizons `t`, `t2` and lag `z` (`6√(t+t2) + |z|`).
    pub fn for_times(model: &CovarianceModel, eps: f64, t: f64, t2: f64, z: f64) -> Result<Self> {
        if model.mollified_cov_closed(eps, 0.0).is_some() {
            return Self::new(model, eps, 0.0);
        }
        Ok(PairKernel::Table(KernelTable::for_times(model, eps, t, t2, z)?))
    }

    pub fn eval(&self, a: f64) -> Result<f64> {
        match self {
            PairKernel::Closed { model, eps } => Ok(model.mollified_cov_closed(*eps, a).expect("closed form")),
            PairKernel::Table(t) => t.eval(a),
        }
    }

    fn reach(&self) -> f64 {
        match self {
            PairKernel::Closed { .. } => f64::INFINITY,
            PairKernel::Table(t) => t.range(),
        }
    }
}

/// Cloud-in-cell occupation histogram of one path on the lattice `aδ`.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Histogram {
    /// Lattice index of `weights[0]`.
    pub start: i64,
    pub weights: Vec<f64>,
}

impl Histogram {
    /// Deposit `Δt` at `B_0, …, B_{n-1}` (left-point rule).
    pub fn of_path(path: &[f64], dt: f64, delta: f64) -> Self {
        let pts = &path[..path.len() - 1];
        let (lo, hi) = pts
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), b| (l.min(*b), h.max(*b)));
        let start = (lo / delta).floor() as i64;
        let end = (hi / delta).floor() as i64 + 1;
        let mut weights = vec![0.0; (end - start + 1) as usize];
        for &b in pts {
            let u = b / delta;
            let j = u.floor();
            let f = u - j;
            let i = (j as i64 - start) as usize;
            weights[i] += (1.0 - f) * dt;
            weights[i + 1] += f * dt;
        }
        Histogram { start, weights }
    }

    fn end(&self) -> i64 {
        self.start + self.weights.len() as i64 - 1
    }

    fn max_abs_index(&self) -> i64 {
        self.start.abs().max(self.end().abs())
    }

    fn write_circular(&self, buf: &mut [f64]) {
        let n = buf.len() as i64;
        buf.iter_mut().for_each(|v| *v = 0.0);
        for (i, w) in self.weights.iter().enumerate() {
            buf[(self.start + i as i64).rem_euclid(n) as usize] += w;
        }
    }
}

/// Circular FFT correlation of histograms of length `n` (a power of two).
struct Correlator {
    n: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    a: Vec<f64>,
    b: Vec<f64>,
    fa: Vec<Complex64>,
    fb: Vec<Complex64>,
    scratch: Vec<Complex64>,
    out: Vec<f64>,
}

impl Correlator {
    fn new(n: usize) -> Self {
        let mut planner = RealFftPlanner::<f64>::new();
        let r2c = planner.plan_fft_forward(n);
        let c2r = planner.plan_fft_inverse(n);
        let len = r2c.get_scratch_len().max(c2r.get_scratch_len());
        Correlator {
            n,
            a: r2c.make_input_vec(),
            b: r2c.make_input_vec(),
            fa: r2c.make_output_vec(),
            fb: r2c.make_output_vec(),
            out: c2r.make_output_vec(),
            scratch: vec![Complex64::new(0.0, 0.0); len],
            r2c,
            c2r,
        }
    }

    fn transform_pair(&mut self, h1: &Histogram, h2: &Histogram) {
        h1.write_circular(&mut self.a);
        h2.write_circular(&mut self.b);
        self.r2c
            .process_with_scratch(&mut self.a, &mut self.fa, &mut self.scratch)
            .expect("fft sizes");
        self.r2c
            .process_with_scratch(&mut self.b, &mut self.fb, &mut self.scratch)
            .expect("fft sizes");
    }

    fn inverse(&mut self) {
        let last = self.fa.len() - 1;
        self.fa[0].im = 0.0;
        self.fa[last].im = 0.0;
        self.c2r
            .process_with_scratch(&mut self.fa, &mut self.out, &mut self.scratch)
            .expect("hermitian spectrum");
        let s = 1.0 / self.n as f64;
        self.out.iter_mut().for_each(|v| *v *= s);
    }

    /// `c_w = Σ_a h1_a h2_{a-w}` stored at `w mod n`.
    fn cross(&mut self, h1: &Histogram, h2: &Histogram) -> &[f64] {
        self.transform_pair(h1, h2);
        for (x, y) in self.fa.iter_mut().zip(&self.fb) {
            *x *= y.conj();
        }
        self.inverse();
        &self.out
    }

    /// `I_m = Σ_w c_w g_{w+m}` at `m mod n`, given the transform of `g`.
    fn profile(&mut self, h1: &Histogram, h2: &Histogram, g_hat: &[Complex64]) -> &[f64] {
        self.transform_pair(h1, h2);
        for ((x, y), g) in self.fa.iter_mut().zip(&self.fb).zip(g_hat) {
            *x = x.conj() * y * g;
        }
        self.inverse();
        &self.out
    }
}

fn correlator_size(span: i64) -> usize {
    (2 * span as usize + 2).next_power_of_two().max(64)
}

/// Lag reach of the histograms: the bound on `|a|` used for FFT sizing.
fn histogram_span(t: f64, t2: f64, delta: f64) -> i64 {
    (LATTICE_REACH * (t + t2).sqrt() / delta).ceil() as i64 + 2
}

/// `Σ_w c_w G(wδ + z)` over the support of the two histograms.
fn pair_value(
    corr: &mut Correlator,
    kernel: &PairKernel,
    h1: &Histogram,
    h2: &Histogram,
    delta: f64,
    z: f64,
) -> Result<f64> {
    let lo = h1.start - h2.end();
    let hi = h1.end() - h2.start;
    let n = corr.n as i64;
    if hi - lo + 1 > n {
        return Err(Error::TableRange {
            arg: (hi - lo) as f64 * delta,
            limit: (n as f64) * delta,
        });
    }
    let reach = kernel.reach();
    let far = (lo as f64 * delta + z).abs().max((hi as f64 * delta + z).abs());
    if far > reach {
        return Err(Error::TableRange { arg: far, limit: reach });
    }
    let c = corr.cross(h1, h2);
    let mut acc = 0.0;
    for w in lo..=hi {
        let cw = c[w.rem_euclid(n) as usize];
        if cw != 0.0 {
            acc += cw * kernel.eval(w as f64 * delta + z)?;
        }
    }
    Ok(acc)
}

fn histogram(seed: u64, m: usize, t: f64, n_steps: usize, delta: f64, buf: &mut Vec<f64>) -> Histogram {
    buf.resize(n_steps + 1, 0.0);
    draw_path(seed, m, t, buf);
    Histogram::of_path(buf, t / n_steps as f64, delta)
}

/// Per-pair `I_ε(z)` for path `m` of `a` against path `m` of `b`.
pub fn cross_functional(
    model: &CovarianceModel,
    z: f64,
    a: &BrownianEnsemble,
    b: &BrownianEnsemble,
    eps: f64,
) -> Result<Vec<f64>> {
    let (t, t2) = (a.horizon(), b.horizon());
    let delta = lattice_spacing(eps);
    let kernel = PairKernel::for_times(model, kernel_eps(eps), t, t2, z)?;
    let mut corr = Correlator::new(correlator_size(histogram_span(t, t2, delta)));
    let n = a.n_paths().min(b.n_paths());
    (0..n)
        .map(|m| {
            let h1 = Histogram::of_path(a.path(m), a.dt(), delta);
            let h2 = Histogram::of_path(b.path(m), b.dt(), delta);
            pair_value(&mut corr, &kernel, &h1, &h2, delta, z)
        })
        .collect()
}

/// Seed of the `j`-th path family used by [`moment_mc`] and [`rho_profile`].
pub fn moment_stream(seed: u64, j: usize) -> u64 {
    seed_derive(seed, &["moment".into(), j.into()])
}

/// `E[∏_j u(t_j, x_j)] = E[exp(Σ_{j<k} I^{j,k}(x_j - x_k))]` by Monte Carlo
/// over `n_samples` independent path tuples; `2 <= n <= 4`.
pub fn moment_mc(
    model: &CovarianceModel,
    times: &[f64],
    points: &[f64],
    n_samples: usize,
    eps: f64,
    seed: u64,
    exec: Execution,
) -> Result<Estimate> {
    let n = times.len();
    if !(2..=4).contains(&n) || points.len() != n {
        return Err(Error::domain("moment_mc needs 2 to 4 times and as many points"));
    }
    if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::domain("times must be non-negative"));
    }
    if n_samples < 2 {
        return Err(Error::InsufficientSamples {
            got: n_samples,
            need: 2,
        });
    }
    let delta = lattice_spacing(eps);
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    let z_max = points
        .iter()
        .flat_map(|x| points.iter().map(move |y| (x - y).abs()))
        .fold(0.0, f64::max);
    let kernel = PairKernel::for_times(model, kernel_eps(eps), t_max, t_max, z_max)?;
    let size = correlator_size(histogram_span(t_max, t_max, delta));
    let steps: Vec<usize> = times.iter().map(|t| n_steps_for(*t, eps)).collect();
    let streams: Vec<u64> = (0..n).map(|j| moment_stream(seed, j)).collect();
    let n_blocks = n_samples.div_ceil(PAIR_BLOCK);
    let blocks = exec.map(n_blocks, |blk| -> Result<Vec<f64>> {
        let mut corr = Correlator::new(size);
        let mut buf = Vec::new();
        let lo = blk * PAIR_BLOCK;
        let hi = (lo + PAIR_BLOCK).min(n_samples);
        let mut out = Vec::with_capacity(hi - lo);
        for m in lo..hi {
            let hs: Vec<Histogram> = (0..n)
                .map(|j| histogram(streams[j], m, times[j], steps[j], delta, &mut buf))
                .collect();
            let mut expo = 0.0;
            for j in 0..n {
                for k in (j + 1)..n {
                    expo += pair_value(&mut corr, &kernel, &hs[j], &hs[k], delta, points[j] - points[k])?;
                }
            }
            if expo > EXPONENT_GUARD {
                return Err(Error::Overflow { exponent: expo });
            }
            out.push(expo.exp());
        }
        Ok(out)
    });
    let mut values = Vec::with_capacity(n_samples);
    for b in blocks {
        values.extend(b?);
    }
    Ok(mean_se(&values))
}

/// `ρ̂_{t,s}(z) = E[e^{I_{t,s}(z)}] - 1` (same samples as [`moment_mc`] with `n = 2`).
pub fn rho_estimate(
    model: &CovarianceModel,
    t: f64,
    s: f64,
    z: f64,
    n_pairs: usize,
    eps: f64,
    seed: u64,
    exec: Execution,
) -> Result<Estimate> {
    let m = moment_mc(model, &[t, s], &[z, 0.0], n_pairs, eps, seed, exec)?;
    Ok(Estimate::new(m.value - 1.0, m.se))
}

/// Pair-level overlap integral with its Monte Carlo error.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OverlapEstimate {
    pub r: f64,
    /// `∫ ρ(z) (2R - |z|)₊ dz = Cov(F_R(t), F_R(s))`.
    pub cov: Estimate,
}

/// `ρ̂_{t,s}` on the lattice `z = mδ`, `|z| <= z_max`, with integrals of
/// functionals of `I` computed pair by pair (so their errors include the
/// correlation across `z`).
#[derive(Clone, Debug, Serialize)]
pub struct RhoProfile {
    pub t: f64,
    pub s: f64,
    pub eps: f64,
    pub delta: f64,
    pub n_pairs: usize,
    pub z: Vec<f64>,
    pub rho: Vec<Estimate>,
    /// `∫ ρ dz`.
    pub integral: Estimate,
    /// `∫ E[e^I - I - 1] dz` (chaos of order two and higher).
    pub nonlinear_integral: Estimate,
    /// `∫ E[I] dz` (first chaos).
    pub first_chaos_integral: Estimate,
    pub overlaps: Vec<OverlapEstimate>,
    /// `max(|ρ̂(-z_max)|, |ρ̂(z_max)|) / ρ̂(0)`.
    pub tail_ratio: f64,
}

impl RhoProfile {
    pub fn rho_at(&self, z: f64) -> Option<Estimate> {
        let m = (z / self.delta).round();
        let i = m as i64 + (self.z.len() as i64 - 1) / 2;
        if (m * self.delta - z).abs() > 1e-9 * self.delta.max(z.abs()) || i < 0 || i as usize >= self.z.len() {
            return None;
        }
        Some(self.rho[i as usize])
    }
}

struct BlockSums {
    rho: Vec<f64>,
    rho_sq: Vec<f64>,
    scalars: Vec<Vec<f64>>,
}

/// Lattice profile of `ρ_{t,s}` and overlap integrals for each `R` in `radii`.
#[allow(clippy::too_many_arguments)]
pub fn rho_profile(
    model: &CovarianceModel,
    t: f64,
    s: f64,
    eps: f64,
    z_max: f64,
    radii: &[f64],
    n_pairs: usize,
    seed: u64,
    exec: Execution,
) -> Result<RhoProfile> {
    if n_pairs < 2 {
        return Err(Error::InsufficientSamples { got: n_pairs, need: 2 });
    }
    if !(z_max > 0.0) {
        return Err(Error::domain("profile needs z_max > 0"));
    }
    if let Some(r) = radii.iter().find(|r| 2.0 * **r > z_max * (1.0 + 1e-12)) {
        return Err(Error::Range(format!("overlap for R = {r} needs z_max >= {}", 2.0 * r)));
    }
    let delta = lattice_spacing(eps);
    let m_max = (z_max / delta).ceil() as i64;
    let w = histogram_span(t, s, delta);
    let ng = m_max + w;
    let size = (2 * ng as usize + 1).next_power_of_two();
    let kernel = PairKernel::new(model, kernel_eps(eps), ng as f64 * delta * (1.0 + 1e-9))?;
    let n_i = size as i64;

    let mut g = vec![0.0; size];
    for k in -ng..=ng {
        g[k.rem_euclid(n_i) as usize] = kernel.eval(k as f64 * delta)?;
    }
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let mut g_hat = fwd.make_output_vec();
    fwd.process(&mut g, &mut g_hat).expect("fft sizes");

    let n_z = (2 * m_max + 1) as usize;
    let zs: Vec<f64> = (-m_max..=m_max).map(|m| m as f64 * delta).collect();
    // trapezoid weights on [-z_max', z_max']
    let trap: Vec<f64> = (0..n_z)
        .map(|i| if i == 0 || i == n_z - 1 { 0.5 * delta } else { delta })
        .collect();
    let n_scalar = 3 + radii.len();
    let (s1, s2) = (moment_stream(seed, 0), moment_stream(seed, 1));
    let (n1, n2) = (n_steps_for(t, eps), n_steps_for(s, eps));

    let n_blocks = n_pairs.div_ceil(PAIR_BLOCK);
    let blocks = exec.map(n_blocks, |blk| -> Result<BlockSums> {
        let mut corr = Correlator::new(size);
        let mut buf = Vec::new();
        let mut sums = BlockSums {
            rho: vec![0.0; n_z],
            rho_sq: vec![0.0; n_z],
            scalars: vec![Vec::new(); n_scalar],
        };
        let lo = blk * PAIR_BLOCK;
        let hi = (lo + PAIR_BLOCK).min(n_pairs);
        let mut e = vec![0.0; n_z];
        let mut ii = vec![0.0; n_z];
        for p in lo..hi {
            let h1 = histogram(s1, p, t, n1, delta, &mut buf);
            let h2 = histogram(s2, p, s, n2, delta, &mut buf);
            let span = h1.max_abs_index() + h2.max_abs_index();
            if span > w {
                return Err(Error::TableRange {
                    arg: span as f64 * delta,
                    limit: w as f64 * delta,
                });
            }
            let prof = corr.profile(&h1, &h2, &g_hat);
            for (i, m) in (-m_max..=m_max).enumerate() {
                let v = prof[m.rem_euclid(n_i) as usize];
                if v > EXPONENT_GUARD {
                    return Err(Error::Overflow { exponent: v });
                }
                ii[i] = v;
                e[i] = v.exp_m1();
                sums.rho[i] += e[i];
                sums.rho_sq[i] += e[i] * e[i];
            }
            let mut total = 0.0;
            let mut nonlin = 0.0;
            let mut first = 0.0;
            for i in 0..n_z {
                total += trap[i] * e[i];
                nonlin += trap[i] * (e[i] - ii[i]);
                first += trap[i] * ii[i];
            }
            sums.scalars[0].push(total);
            sums.scalars[1].push(nonlin);
            sums.scalars[2].push(first);
            for (j, r) in radii.iter().enumerate() {
                let mut acc = 0.0;
                for i in 0..n_z {
                    let wgt = 2.0 * r - zs[i].abs();
                    if wgt > 0.0 {
                        acc += trap[i] * wgt * e[i];
                    }
                }
                sums.scalars[3 + j].push(acc);
            }
        }
        Ok(sums)
    });

    let mut rho_sum = vec![Vec::with_capacity(n_blocks); n_z];
    let mut rho_sq = vec![Vec::with_capacity(n_blocks); n_z];
    let mut scalars = vec![Vec::with_capacity(n_pairs); n_scalar];
    for b in blocks {
        let b = b?;
        for i in 0..n_z {
            rho_sum[i].push(b.rho[i]);
            rho_sq[i].push(b.rho_sq[i]);
        }
        for (dst, src) in scalars.iter_mut().zip(b.scalars) {
            dst.extend(src);
        }
    }
    let nf = n_pairs as f64;
    let rho: Vec<Estimate> = (0..n_z)
        .map(|i| {
            let m = pairwise_sum(&rho_sum[i]) / nf;
            let var = ((pairwise_sum(&rho_sq[i]) - nf * m * m) / (nf - 1.0)).max(0.0);
            Estimate::new(m, (var / nf).sqrt())
        })
        .collect();
    let centre = rho[m_max as usize].value;
    let tail = rho[0].value.abs().max(rho[n_z - 1].value.abs());
    Ok(RhoProfile {
        t,
        s,
        eps,
        delta,
        n_pairs,
        z: zs,
        integral: mean_se(&scalars[0]),
        nonlinear_integral: mean_se(&scalars[1]),
        first_chaos_integral: mean_se(&scalars[2]),
        overlaps: radii
            .iter()
            .enumerate()
            .map(|(j, r)| OverlapEstimate {
                r: *r,
                cov: mean_se(&scalars[3 + j]),
            })
            .collect(),
        tail_ratio: tail / centre,
        rho,
    })
}

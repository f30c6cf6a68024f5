//! Spectral synthesis of the mollified noise `Ẇ^ε` on a periodic grid.
//!
//! The field is `Ẇ^ε(x) = Σ_k b_k e^{iξ_k x}` over `|k| <= n/2` with
//! independent Hermitian coefficients, `E|b_k|² = w_k e^{-εξ_k²}` where `w_k`
//! is the spectral mass of the frequency cell around `ξ_k`. The Nyquist mode
//! is zeroed. Each coefficient comes from its own ChaCha8 stream keyed by
//! `(seed, k)`, so the output does not depend on the thread count.

use crate::covariance::{CovarianceModel, Regime};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::GridSpec;
use crate::seed::{seed_derive, stream_rng};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use realfft::RealFftPlanner;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Clone, Debug)]
pub struct NoiseField {
    model: CovarianceModel,
    grid: GridSpec,
    eps: f64,
    seed: u64,
    coeffs: Vec<Complex64>,
    samples: Vec<f64>,
}

/// Reject `ε` too small to be resolved by the grid: `e^{-ε ξ_max²} <= 0.1`.
pub fn check_aliasing(grid: &GridSpec, eps: f64, allow_aliasing: bool) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::config("grid.eps", format!("mollification scale must be positive, got {eps}")));
    }
    let damp = (-eps * grid.xi_max().powi(2)).exp();
    if damp > 0.1 && !allow_aliasing {
        return Err(Error::config(
            "grid.eps",
            format!(
                "e^(-ε ξ_max²) = {damp:.3} > 0.1 at ε = {eps}; refine the grid, raise ε or pass --allow-aliasing"
            ),
        ));
    }
    Ok(())
}

/// `E|b_k|²` for `k = 0..=n/2`.
pub fn mode_variances(model: &CovarianceModel, grid: &GridSpec, eps: f64) -> Vec<f64> {
    let h = grid.dxi();
    let half = grid.n_points() / 2;
    (0..=half)
        .map(|k| {
            if k == half {
                return 0.0;
            }
            let xi = grid.xi(k);
            model.cell_weight(xi, h) * (-eps * xi * xi).exp()
        })
        .collect()
}

fn require_1d(model: &CovarianceModel) -> Result<()> {
    if model.dim() != 1 {
        return Err(Error::config("model.d", "field synthesis is implemented for d = 1"));
    }
    Ok(())
}

/// Draw a field realization.
pub fn synthesize(
    model: &CovarianceModel,
    grid: GridSpec,
    eps: f64,
    seed: u64,
    allow_aliasing: bool,
    exec: Execution,
) -> Result<NoiseField> {
    require_1d(model)?;
    check_aliasing(&grid, eps, allow_aliasing)?;
    let var = mode_variances(model, &grid, eps);
    let coeffs = exec.map(var.len(), |k| {
        let v = var[k];
        if v == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let mut rng = stream_rng(seed_derive(seed, &["mode".into(), k.into()]));
        let z1: f64 = StandardNormal.sample(&mut rng);
        if k == 0 {
            Complex64::new(v.sqrt() * z1, 0.0)
        } else {
            let z2: f64 = StandardNormal.sample(&mut rng);
            let s = (v / 2.0).sqrt();
            Complex64::new(s * z1, s * z2)
        }
    });
    let samples = real_samples(&grid, &coeffs);
    Ok(NoiseField {
        model: model.clone(),
        grid,
        eps,
        seed,
        coeffs,
        samples,
    })
}

/// `Σ_k b_k e^{iξ_k x_j}` at all nodes.
fn real_samples(grid: &GridSpec, coeffs: &[Complex64]) -> Vec<f64> {
    let n = grid.n_points();
    let mut planner = RealFftPlanner::<f64>::new();
    let c2r = planner.plan_fft_inverse(n);
    let mut spec: Vec<Complex64> = coeffs
        .iter()
        .enumerate()
        .map(|(k, b)| if k % 2 == 0 { *b } else { -*b })
        .collect();
    let mut out = c2r.make_output_vec();
    c2r.process(&mut spec, &mut out).expect("hermitian spectrum");
    out
}

impl NoiseField {
    /// The field with all coefficients zero.
    pub fn zero(model: &CovarianceModel, grid: GridSpec, eps: f64) -> Result<Self> {
        require_1d(model)?;
        Ok(NoiseField {
            model: model.clone(),
            grid,
            eps,
            seed: 0,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.n_freq()],
            samples: vec![0.0; grid.n_points()],
        })
    }

    pub fn model(&self) -> &CovarianceModel {
        &self.model
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Coefficients `b_k` for `k = 0..=n/2`; negative `k` are conjugates.
    pub fn spectral_coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `b_k` for any `|k| <= n/2`.
    pub fn coeff(&self, k: i64) -> Complex64 {
        let c = self.coeffs[k.unsigned_abs() as usize];
        if k < 0 {
            c.conj()
        } else {
            c
        }
    }

    pub fn real_samples(&self) -> &[f64] {
        &self.samples
    }

    /// Discrete pairing `W(φ) = Σ_k conj(c_k) b_k` over the full spectrum,
    /// given the non-negative half `c_0..c_{n/2}` of a Hermitian array.
    pub fn pair(&self, coeffs: &[Complex64]) -> Result<f64> {
        if coeffs.len() != self.coeffs.len() {
            return Err(Error::GridMismatch(format!(
                "{} coefficients for a field with {} stored frequencies",
                coeffs.len(),
                self.coeffs.len()
            )));
        }
        let half = self.coeffs.len() - 1;
        let mut acc = coeffs[0].re * self.coeffs[0].re;
        let mut inner = 0.0;
        for k in 1..half {
            let c = coeffs[k];
            let b = self.coeffs[k];
            inner += c.re * b.re + c.im * b.im;
        }
        acc += 2.0 * inner;
        acc += coeffs[half].re * self.coeffs[half].re;
        Ok(acc)
    }

    /// Theoretical variance of [`NoiseField::pair`] for the given coefficients.
    pub fn pair_variance(&self, coeffs: &[Complex64]) -> f64 {
        let var = mode_variances(&self.model, &self.grid, self.eps);
        let half = var.len() - 1;
        (0..=half)
            .map(|k| {
                let m = if k == 0 || k == half { 1.0 } else { 2.0 };
                m * var[k] * coeffs[k].norm_sqr()
            })
            .sum()
    }

    pub fn write_dump(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header = DumpHeader::of(self);
        header.write(&mut f)?;
        for v in &self.samples {
            f.write_all(&v.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }
}

/// `c_k = Δx Σ_j φ(x_j) e^{-iξ_k x_j}` for `k = 0..=n/2`.
pub fn fourier_coeffs(grid: &GridSpec, values: &[f64]) -> Result<Vec<Complex64>> {
    if values.len() != grid.n_points() {
        return Err(Error::GridMismatch("sample count differs from grid size".into()));
    }
    let n = grid.n_points();
    let mut planner = RealFftPlanner::<f64>::new();
    let r2c = planner.plan_fft_forward(n);
    let mut buf = values.to_vec();
    let mut out = r2c.make_output_vec();
    r2c.process(&mut buf, &mut out).expect("fft sizes");
    let dx = grid.dx();
    Ok(out
        .into_iter()
        .enumerate()
        .map(|(k, c)| if k % 2 == 0 { c * dx } else { -c * dx })
        .collect())
}

const DUMP_MAGIC: &[u8; 8] = b"PAMCLTNF";
const DUMP_FORMAT: u32 = 1;

/// Fixed-width little-endian header of a field dump.
#[derive(Clone, Debug, PartialEq)]
pub struct DumpHeader {
    pub model_tag: u32,
    pub d: u32,
    /// β for Riesz, H for rough, 0 otherwise.
    pub model_param: f64,
    pub half_width: f64,
    pub n_points: u64,
    pub eps: f64,
    pub seed: u64,
}

impl DumpHeader {
    pub const BYTES: usize = 8 + 4 + 4 + 4 + 8 + 8 + 8 + 8 + 8;

    fn of(field: &NoiseField) -> Self {
        let model_tag = match field.model.regime() {
            Regime::White => 0,
            Regime::Integrable => 1,
            Regime::Riesz { .. } => 2,
            Regime::Rough { .. } => 3,
        };
        DumpHeader {
            model_tag,
            d: field.model.dim() as u32,
            model_param: field.model.parameter(),
            half_width: field.grid.half_width(),
            n_points: field.grid.n_points() as u64,
            eps: field.eps,
            seed: field.seed,
        }
    }

    fn write(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&DUMP_FORMAT.to_le_bytes())?;
        w.write_all(&self.model_tag.to_le_bytes())?;
        w.write_all(&self.d.to_le_bytes())?;
        w.write_all(&self.model_param.to_le_bytes())?;
        w.write_all(&self.half_width.to_le_bytes())?;
        w.write_all(&self.n_points.to_le_bytes())?;
        w.write_all(&self.eps.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())
    }
}

/// Read back a dump written by [`NoiseField::write_dump`].
pub fn read_dump(path: &Path) -> Result<(DumpHeader, Vec<f64>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < DumpHeader::BYTES || &bytes[..8] != DUMP_MAGIC {
        return Err(Error::Format("missing field-dump magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    if u32_at(8) != DUMP_FORMAT {
        return Err(Error::Format(format!("unknown dump format {}", u32_at(8))));
    }
    let header = DumpHeader {
        model_tag: u32_at(12),
        d: u32_at(16),
        model_param: f64_at(20),
        half_width: f64_at(28),
        n_points: u64_at(36),
        eps: f64_at(44),
        seed: u64_at(52),
    };
    let body = &bytes[DumpHeader::BYTES..];
    if body.len() as u64 != header.n_points * 8 {
        return Err(Error::Format(format!(
            "expected {} samples, found {} bytes",
            header.n_points,
            body.len()
        )));
    }
    let samples = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, samples))
}

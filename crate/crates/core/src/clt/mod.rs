//! Experiments on spatial averages `F_R(t) = ∫_{-R}^{R} (u(t, x) - 1) dx`:
//! variance scans by direct simulation and through the two-point profile,
//! log-log scaling fits, normality diagnostics and covariance limits.

mod report;

pub use report::{CltReport, CovarianceRow, CsvRow, FitSummary, MeanOne, NormalityRow, CSV_HEADER, SCHEMA_VERSION};

use crate::chaos::KLimit;
use crate::covariance::{CovarianceModel, Regime};
use crate::error::{Error, Result};
use crate::exec::{pairwise_sum, Execution};
use crate::feynman_kac::{n_steps_for, sample_ensemble_with, FkEngine, RhoProfile, SolutionSample, EXPONENT_GUARD};
use crate::field::{check_aliasing, synthesize};
use crate::grid::GridSpec;
use crate::seed::seed_derive;
use crate::stats::{covariance, kendall_tau, ks_normal, mean_se, Estimate};
use serde::Serialize;
use std::ops::Range;

pub const MIN_REPLICATES: usize = 100;
pub const MIN_NORMALITY_SAMPLES: usize = 1000;
/// `ρ̂(z_max) / ρ̂(0)` above this raises a tail warning.
pub const TAIL_TOLERANCE: f64 = 0.01;

/// Everything needed to run one scan.
#[derive(Clone, Debug)]
pub struct ExperimentPlan {
    pub model: CovarianceModel,
    pub grid: GridSpec,
    pub eps: f64,
    /// Times whose variances are scanned.
    pub times: Vec<f64>,
    /// Partner times for cross covariances `Cov(F_R(t), F_R(s))`.
    pub partner_times: Vec<f64>,
    pub radii: Vec<f64>,
    pub replicates: usize,
    pub paths: usize,
    pub n_pairs: usize,
    pub seed: u64,
    pub allow_aliasing: bool,
}

impl ExperimentPlan {
    /// The default desk-scale budget: `R ∈ {8, 16, 32, 64}`, `L = 256`,
    /// `2^15` nodes, `ε = Δx`, 2000 replicates of 256 paths at `t = 1`.
    /// Rough noise gets twice the replicates.
    pub fn default_for(model: CovarianceModel, seed: u64) -> Self {
        let grid = GridSpec::new(256.0, 1 << 15).expect("valid default grid");
        let replicates = if matches!(model.regime(), Regime::Rough { .. }) { 4000 } else { 2000 };
        ExperimentPlan {
            model,
            eps: grid.dx(),
            grid,
            times: vec![1.0],
            partner_times: Vec::new(),
            radii: vec![8.0, 16.0, 32.0, 64.0],
            replicates,
            paths: 256,
            n_pairs: 4000,
            seed,
            allow_aliasing: false,
        }
    }

    /// Checks every precondition of the scans without allocating anything
    /// experiment-sized.
    pub fn validate(&self) -> Result<()> {
        if self.model.dim() != 1 {
            return Err(Error::config("model.d", "simulation is implemented for d = 1 only"));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::config("grid.eps", format!("must be positive, got {}", self.eps)));
        }
        check_aliasing(&self.grid, self.eps, self.allow_aliasing)?;
        for (key, list) in [("experiment.t", &self.times), ("experiment.s", &self.partner_times)] {
            if let Some(t) = list.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
                return Err(Error::config(key, format!("times must be positive, got {t}")));
            }
        }
        if self.times.is_empty() {
            return Err(Error::config("experiment.t", "at least one time is required"));
        }
        let r = &self.radii;
        if r.len() < 4 {
            return Err(Error::config("experiment.R", format!("need at least 4 radii, got {}", r.len())));
        }
        if !(r[0] > 0.0) || r.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("experiment.R", "radii must be positive and strictly increasing"));
        }
        let (r_min, r_max) = (r[0], r[r.len() - 1]);
        if r_max < 8.0 * r_min {
            return Err(Error::config(
                "experiment.R",
                format!("radii must span at least a factor 8, got {r_min}..{r_max}"),
            ));
        }
        if r_max > self.grid.half_width() / 4.0 {
            return Err(Error::config(
                "experiment.R",
                format!("largest radius {r_max} exceeds L/4 = {}", self.grid.half_width() / 4.0),
            ));
        }
        if self.replicates < MIN_REPLICATES {
            return Err(Error::config(
                "experiment.replicates",
                format!("need at least {MIN_REPLICATES}, got {}", self.replicates),
            ));
        }
        if self.paths < 2 || !self.paths.is_multiple_of(2) {
            return Err(Error::config(
                "experiment.paths",
                format!("need an even count of at least 2 (split into halves), got {}", self.paths),
            ));
        }
        if self.n_pairs < 2 {
            return Err(Error::config("experiment.n_pairs", format!("need at least 2, got {}", self.n_pairs)));
        }
        Ok(())
    }

    /// Distinct simulated times: `times` followed by new partner times.
    pub fn all_times(&self) -> Vec<f64> {
        let mut out = self.times.clone();
        for s in &self.partner_times {
            if !out.contains(s) {
                out.push(*s);
            }
        }
        out
    }

    pub fn max_radius(&self) -> f64 {
        self.radii.iter().copied().fold(0.0, f64::max)
    }

    /// Node window covering `[-R_max, R_max]` with one spare cell each side.
    pub fn window(&self) -> Range<usize> {
        let r = self.max_radius();
        let lo = self.grid.index_of(-r).saturating_sub(1);
        let hi = (self.grid.index_of(r) + 2).min(self.grid.n_points());
        lo..hi
    }
}

/// `∫_{-R}^{R} (û - 1) dx` with the piecewise-linear interpolant of the
/// window values (the trapezoid rule when `±R` are nodes).
pub fn spatial_average(sample: &SolutionSample, r: f64) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::domain(format!("radius must be positive, got {r}")));
    }
    let l = sample.grid.half_width();
    if r > l {
        return Err(Error::Range(format!("R = {r} exceeds the half-width L = {l}")));
    }
    let n = sample.values.len();
    if n < 2 || sample.x(0) > -r || sample.x(n - 1) < r {
        return Err(Error::Range(format!("sample window does not cover [-{r}, {r}]")));
    }
    let f = |i: usize| sample.values[i] - 1.0;
    let mut parts = Vec::with_capacity(n);
    for i in 0..n - 1 {
        let (a, b) = (sample.x(i), sample.x(i + 1));
        let (lo, hi) = (a.max(-r), b.min(r));
        if hi <= lo {
            continue;
        }
        let slope = (f(i + 1) - f(i)) / (b - a);
        let (fl, fh) = (f(i) + slope * (lo - a), f(i) + slope * (hi - a));
        parts.push(0.5 * (hi - lo) * (fl + fh));
    }
    Ok(pairwise_sum(&parts))
}

/// Spatial averages from every replicate of a Monte Carlo scan. Each
/// replicate's paths are split into halves A and B, giving two
/// conditionally independent estimates of `F_R(t)` given the noise.
#[derive(Clone, Debug)]
pub struct McScan {
    pub times: Vec<f64>,
    pub radii: Vec<f64>,
    pub replicates: usize,
    /// `[A, B]` per replicate, each indexed `time * n_radii + radius`.
    halves: Vec<[Vec<f64>; 2]>,
    /// `û(t, 0)` per replicate and time.
    pub center: Vec<Vec<f64>>,
    /// Replicates in which some exponent exceeded the guard.
    pub overflowed: Vec<usize>,
    pub max_exponent: f64,
}

impl McScan {
    fn at(&self, rep: usize, half: usize, ti: usize, ri: usize) -> f64 {
        self.halves[rep][half][ti * self.radii.len() + ri]
    }

    /// Per-replicate `½(F^A(t) F^B(s) + F^B(t) F^A(s))`. Its noise average is
    /// `E[F_R(t) F_R(s)]`: the halves share the noise but not the paths, so
    /// the path variance drops out.
    pub fn products(&self, ti: usize, tj: usize, ri: usize) -> Vec<f64> {
        (0..self.replicates)
            .map(|k| 0.5 * (self.at(k, 0, ti, ri) * self.at(k, 1, tj, ri) + self.at(k, 1, ti, ri) * self.at(k, 0, tj, ri)))
            .collect()
    }

    /// `Cov(F_R(t_i), F_R(t_j))` with its standard error.
    pub fn covariance(&self, ti: usize, tj: usize, ri: usize) -> Result<Estimate> {
        let est = mean_se(&self.products(ti, tj, ri));
        if !(est.se > 0.0) {
            return Err(Error::InsufficientReplicates(format!(
                "replicate products at R = {} are all identical (seed reuse?)",
                self.radii[ri]
            )));
        }
        Ok(est)
    }

    pub fn variance(&self, ti: usize, ri: usize) -> Result<Estimate> {
        self.covariance(ti, ti, ri)
    }

    /// Covariance matrix (across radii) of the covariance estimates.
    pub fn estimate_covariance(&self, ti: usize, tj: usize) -> Vec<Vec<f64>> {
        let p: Vec<Vec<f64>> = (0..self.radii.len()).map(|ri| self.products(ti, tj, ri)).collect();
        let n = self.replicates as f64;
        p.iter().map(|a| p.iter().map(|b| covariance(a, b) / n).collect()).collect()
    }

    /// Full-ensemble estimates `F̂_R(t) = ½(F^A + F^B)` across replicates.
    pub fn averages(&self, ti: usize, ri: usize) -> Vec<f64> {
        (0..self.replicates)
            .map(|k| 0.5 * (self.at(k, 0, ti, ri) + self.at(k, 1, ti, ri)))
            .collect()
    }
}

/// Simulates `plan.replicates` independent noise fields, each with its own
/// path ensemble per time, and records the spatial averages.
pub fn variance_scan_mc(plan: &ExperimentPlan, exec: Execution) -> Result<McScan> {
    if plan.replicates < MIN_REPLICATES {
        return Err(Error::InsufficientReplicates(format!(
            "{} replicates, need at least {MIN_REPLICATES}",
            plan.replicates
        )));
    }
    plan.validate()?;
    let times = plan.all_times();
    let window = plan.window();
    let center = plan.grid.index_of(0.0);
    let half = plan.paths / 2;

    struct Replicate {
        halves: [Vec<f64>; 2],
        center: Vec<f64>,
        max_exponent: f64,
    }

    let reps = exec.map(plan.replicates, |k| -> Result<Replicate> {
        let field = synthesize(
            &plan.model,
            plan.grid,
            plan.eps,
            seed_derive(plan.seed, &["field".into(), k.into()]),
            plan.allow_aliasing,
            Execution::Sequential,
        )?;
        let engine = FkEngine::new(&field);
        let mut out = Replicate {
            halves: [Vec::new(), Vec::new()],
            center: Vec::with_capacity(times.len()),
            max_exponent: f64::NEG_INFINITY,
        };
        for (ti, &t) in times.iter().enumerate() {
            let path_seed = seed_derive(plan.seed, &["paths".into(), k.into(), ti.into()]);
            let ens = sample_ensemble_with(t, n_steps_for(t, plan.eps), plan.paths, path_seed, Execution::Sequential)?;
            let mut u0 = 0.0;
            for (h, paths) in [0..half, half..plan.paths].into_iter().enumerate() {
                let (sum, max_exp) = engine.sum_over_paths(&ens, paths, window.clone());
                out.max_exponent = out.max_exponent.max(max_exp);
                let sample = SolutionSample {
                    t,
                    grid: plan.grid,
                    window: window.clone(),
                    values: sum.into_iter().map(|v| v / half as f64).collect(),
                    n_paths: half,
                    eps: plan.eps,
                    noise_seed: field.seed(),
                    path_seed,
                    max_exponent: max_exp,
                    overflow: max_exp > EXPONENT_GUARD,
                };
                u0 += 0.5 * sample.at_index(center).unwrap_or(f64::NAN);
                for &r in &plan.radii {
                    out.halves[h].push(spatial_average(&sample, r)?);
                }
            }
            out.center.push(u0);
        }
        Ok(out)
    });

    let mut scan = McScan {
        times,
        radii: plan.radii.clone(),
        replicates: plan.replicates,
        halves: Vec::with_capacity(plan.replicates),
        center: Vec::with_capacity(plan.replicates),
        overflowed: Vec::new(),
        max_exponent: f64::NEG_INFINITY,
    };
    for (k, rep) in reps.into_iter().enumerate() {
        let rep = rep?;
        if rep.max_exponent > EXPONENT_GUARD {
            scan.overflowed.push(k);
        }
        scan.max_exponent = scan.max_exponent.max(rep.max_exponent);
        scan.halves.push(rep.halves);
        scan.center.push(rep.center);
    }
    Ok(scan)
}

/// `∫ ρ(z) (2R - |z|)₊ dz` by the trapezoid rule on the table's nodes.
pub fn overlap_integral(z: &[f64], rho: &[f64], r: f64) -> f64 {
    let w = |i: usize| rho[i] * (2.0 * r - z[i].abs()).max(0.0);
    let parts: Vec<f64> = z.windows(2).enumerate().map(|(i, p)| 0.5 * (p[1] - p[0]) * (w(i) + w(i + 1))).collect();
    pairwise_sum(&parts)
}

/// Variances (or covariances) through the overlap formula.
#[derive(Clone, Debug, Serialize)]
pub struct RhoScan {
    pub t: f64,
    pub s: f64,
    pub radii: Vec<f64>,
    pub values: Vec<Estimate>,
    pub tail_ratio: f64,
    /// `ρ̂` at the edge of its table is not yet negligible.
    pub tail_warning: bool,
}

/// `σ²_R = ∫ ρ̂(z) (2R - |z|)₊ dz` for each requested `R`. The value is the
/// overlap integral of the mean table; the error comes from the per-pair
/// overlap integrals, so it includes correlation across lags.
pub fn variance_scan_rho(profile: &RhoProfile, radii: &[f64]) -> Result<RhoScan> {
    let means: Vec<f64> = profile.rho.iter().map(|e| e.value).collect();
    let values = radii
        .iter()
        .map(|&r| {
            let pair = profile
                .overlaps
                .iter()
                .find(|o| (o.r - r).abs() <= 1e-12 * r)
                .ok_or_else(|| Error::Range(format!("profile carries no overlap for R = {r}")))?;
            Ok(Estimate::new(overlap_integral(&profile.z, &means, r), pair.cov.se))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RhoScan {
        t: profile.t,
        s: profile.s,
        radii: radii.to_vec(),
        values,
        tail_ratio: profile.tail_ratio,
        tail_warning: !(profile.tail_ratio <= TAIL_TOLERANCE),
    })
}

/// Rescales samples of a centred quantity to unit root-mean-square.
pub fn standardize(xs: &[f64]) -> Vec<f64> {
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    let rms = (pairwise_sum(&sq) / xs.len() as f64).sqrt();
    if rms > 0.0 {
        xs.iter().map(|x| x / rms).collect()
    } else {
        xs.to_vec()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NormalityReport {
    pub radii: Vec<f64>,
    pub ks: Vec<f64>,
    /// Kendall's τ of `(R, KS)`.
    pub kendall_tau: f64,
    /// `τ <= 0`: the distance does not grow with `R`.
    pub non_increasing: bool,
}

/// One-sample KS distance to `N(0, 1)` for each radius's normalized samples.
pub fn normality_report(samples: &[Vec<f64>], radii: &[f64]) -> Result<NormalityReport> {
    if samples.len() != radii.len() {
        return Err(Error::domain("one sample set per radius is required"));
    }
    if let Some(s) = samples.iter().find(|s| s.len() < MIN_NORMALITY_SAMPLES) {
        return Err(Error::InsufficientSamples {
            got: s.len(),
            need: MIN_NORMALITY_SAMPLES,
        });
    }
    let ks: Vec<f64> = samples.iter().map(|s| ks_normal(s)).collect();
    let tau = if radii.len() >= 2 { kendall_tau(radii, &ks) } else { 0.0 };
    Ok(NormalityReport {
        radii: radii.to_vec(),
        ks,
        kendall_tau: tau,
        non_increasing: tau <= 0.0,
    })
}

/// Exponent of `R` in the growth of `Cov(F_R(t), F_R(s))`.
pub fn scaling_exponent(model: &CovarianceModel) -> f64 {
    let d = model.dim() as f64;
    match model.regime() {
        Regime::Riesz { beta } => 2.0 * d - beta,
        _ => d,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CovarianceLimit {
    pub t: f64,
    pub s: f64,
    pub exponent: f64,
    pub radii: Vec<f64>,
    /// `Ĉov(F_R(t), F_R(s)) / R^exponent`.
    pub normalized: Vec<Estimate>,
    pub target: Estimate,
    pub method: String,
}

/// Normalized covariances next to the limiting `K(t, s)`.
pub fn covariance_limit_report(
    model: &CovarianceModel,
    radii: &[f64],
    covariances: &[Estimate],
    limit: &KLimit,
) -> Result<CovarianceLimit> {
    if radii.len() != covariances.len() {
        return Err(Error::domain("one covariance per radius is required"));
    }
    let exponent = scaling_exponent(model);
    Ok(CovarianceLimit {
        t: limit.t,
        s: limit.s,
        exponent,
        radii: radii.to_vec(),
        normalized: radii
            .iter()
            .zip(covariances)
            .map(|(r, c)| c.scale(r.powf(-exponent)))
            .collect(),
        target: limit.value,
        method: limit.method.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(values: Vec<f64>) -> SolutionSample {
        let grid = GridSpec::new(8.0, 64).unwrap();
        SolutionSample {
            t: 1.0,
            grid,
            window: 0..values.len(),
            values,
            n_paths: 1,
            eps: 0.1,
            noise_seed: 0,
            path_seed: 0,
            max_exponent: 0.0,
            overflow: false,
        }
    }

    #[test]
    fn averages_of_constants() {
        assert_eq!(spatial_average(&sample(vec![1.0; 64]), 4.0).unwrap(), 0.0);
        let c = 0.3;
        let v = spatial_average(&sample(vec![1.0 + c; 64]), 4.0).unwrap();
        assert!((v - c * 8.0).abs() < 1e-12);
        // non-node radius
        let v = spatial_average(&sample(vec![1.0 + c; 64]), 3.1).unwrap();
        assert!((v - c * 6.2).abs() < 1e-12);
    }

    #[test]
    fn average_is_linear_and_exact_on_linear_profiles() {
        let g = GridSpec::new(8.0, 64).unwrap();
        let f: Vec<f64> = (0..64).map(|j| 1.0 + 2.0 * g.x(j) + 0.5).collect();
        // ∫_{-3}^{3} (2x + 0.5) dx = 3
        assert!((spatial_average(&sample(f), 3.0).unwrap() - 3.0).abs() < 1e-12);
        let a: Vec<f64> = (0..64).map(|j| 1.0 + (j as f64 * 0.3).sin()).collect();
        let b: Vec<f64> = (0..64).map(|j| 1.0 + (j as f64 * 0.7).cos()).collect();
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 1.0 + 2.0 * (x - 1.0) - 3.0 * (y - 1.0)).collect();
        let lhs = spatial_average(&sample(ab), 5.0).unwrap();
        let rhs = 2.0 * spatial_average(&sample(a), 5.0).unwrap() - 3.0 * spatial_average(&sample(b), 5.0).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn radius_outside_grid_or_window() {
        assert!(matches!(spatial_average(&sample(vec![1.0; 64]), 9.0), Err(Error::Range(_))));
        let mut s = sample(vec![1.0; 10]);
        s.window = 27..37;
        assert!(matches!(spatial_average(&s, 4.0), Err(Error::Range(_))));
    }

    #[test]
    fn overlap_of_a_spike() {
        let delta = 0.01;
        let z: Vec<f64> = (-500..=500).map(|m| m as f64 * delta).collect();
        let mut rho = vec![0.0; z.len()];
        let mass = 2.5;
        rho[500] = mass / delta;
        for r in [1.0, 2.0, 3.0] {
            assert!((overlap_integral(&z, &rho, r) - 2.0 * r * mass).abs() < 1e-9);
        }
        // reflection invariance
        let sym: Vec<f64> = z.iter().map(|v| (-v * v).exp() * (1.0 + 0.1 * v.cos())).collect();
        let refl: Vec<f64> = sym.iter().rev().copied().collect();
        assert!((overlap_integral(&z, &sym, 1.5) - overlap_integral(&z, &refl, 1.5)).abs() < 1e-12);
    }

    #[test]
    fn plan_validation_names_keys() {
        let plan = ExperimentPlan::default_for(CovarianceModel::integrable(), 1);
        plan.validate().unwrap();
        let key = |p: ExperimentPlan| match p.validate() {
            Err(Error::Config { key, .. }) => key,
            other => panic!("{other:?}"),
        };
        let mut p = plan.clone();
        p.radii = vec![8.0, 16.0, 32.0, 128.0];
        assert_eq!(key(p), "experiment.R");
        let mut p = plan.clone();
        p.radii = vec![8.0, 16.0, 32.0];
        assert_eq!(key(p), "experiment.R");
        let mut p = plan.clone();
        p.radii = vec![8.0, 16.0, 16.0, 64.0];
        assert_eq!(key(p), "experiment.R");
        let mut p = plan.clone();
        p.radii = vec![16.0, 20.0, 32.0, 64.0];
        assert_eq!(key(p), "experiment.R");
        let mut p = plan.clone();
        p.replicates = 99;
        assert_eq!(key(p), "experiment.replicates");
        let mut p = plan.clone();
        p.paths = 255;
        assert_eq!(key(p), "experiment.paths");
        let mut p = plan;
        p.model = CovarianceModel::riesz(2, 0.5).unwrap();
        assert_eq!(key(p), "model.d");
    }

    #[test]
    fn too_few_replicates() {
        let mut plan = ExperimentPlan::default_for(CovarianceModel::white(), 1);
        plan.replicates = 50;
        assert!(matches!(
            variance_scan_mc(&plan, Execution::Sequential),
            Err(Error::InsufficientReplicates(_))
        ));
    }

    #[test]
    fn normality_null_and_constant() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let rep = normality_report(&[xs.clone(), vec![0.0; 2000]], &[1.0, 2.0]).unwrap();
        assert!(rep.ks[0] < 0.05);
        assert!((rep.ks[1] - 0.5).abs() < 1e-3);
        assert!(!rep.non_increasing);
        assert!(matches!(
            normality_report(&[xs[..999].to_vec()], &[1.0]),
            Err(Error::InsufficientSamples { got: 999, need: 1000 })
        ));
    }
}

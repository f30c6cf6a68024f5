use super::{
    covariance_limit_report, normality_report, scaling_exponent, standardize, variance_scan_mc, variance_scan_rho,
    CovarianceLimit, ExperimentPlan, McScan, NormalityReport,
};
use crate::chaos::k_limit_from_profile;
use crate::error::Result;
use crate::exec::Execution;
use crate::feynman_kac::rho_profile;
use crate::seed::seed_derive;
use crate::stats::{loglog_slope, mean_se, Estimate, SlopeFit};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: [&str; 12] = [
    "regime", "t", "s", "R", "sigma2_mc", "se_mc", "sigma2_rho", "se_rho", "ks", "slope", "slope_lo", "slope_hi",
];

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FitSummary {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub lo: f64,
    pub hi: f64,
    /// Exponent predicted by the limit theorem.
    pub expected: f64,
}

impl FitSummary {
    fn new(fit: SlopeFit, expected: f64) -> Self {
        FitSummary {
            slope: fit.slope,
            slope_se: fit.slope_se,
            intercept: fit.intercept,
            lo: fit.ci_lo,
            hi: fit.ci_hi,
            expected,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Both estimator routes for `Cov(F_R(t), F_R(s))` across the radii.
#[derive(Clone, Debug, Serialize)]
pub struct CovarianceRow {
    pub t: f64,
    pub s: f64,
    pub radii: Vec<f64>,
    pub mc: Vec<Estimate>,
    pub rho: Vec<Estimate>,
    pub fit: Option<FitSummary>,
    pub tail_ratio: f64,
    pub tail_warning: bool,
    pub limit: CovarianceLimit,
}

#[derive(Clone, Debug, Serialize)]
pub struct NormalityRow {
    pub t: f64,
    #[serde(flatten)]
    pub report: NormalityReport,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MeanOne {
    pub t: f64,
    /// Replicate average of `û(t, 0)`.
    pub u0: Estimate,
}

#[derive(Clone, Debug, Serialize)]
pub struct CltReport {
    pub schema_version: u32,
    pub regime: String,
    pub parameter: Option<f64>,
    pub d: usize,
    pub half_width: f64,
    pub n_points: usize,
    pub eps: f64,
    pub replicates: usize,
    pub paths: usize,
    pub n_pairs: usize,
    pub covariances: Vec<CovarianceRow>,
    pub normality: Vec<NormalityRow>,
    pub mean_one: Vec<MeanOne>,
    pub overflowed_replicates: Vec<usize>,
    pub max_exponent: f64,
    pub warnings: Vec<String>,
}

/// One line of the flat table.
#[derive(Clone, Debug, Serialize)]
pub struct CsvRow {
    pub regime: String,
    pub t: f64,
    pub s: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub sigma2_mc: f64,
    pub se_mc: f64,
    pub sigma2_rho: f64,
    pub se_rho: f64,
    pub ks: Option<f64>,
    pub slope: Option<f64>,
    pub slope_lo: Option<f64>,
    pub slope_hi: Option<f64>,
}

impl CltReport {
    /// Runs the Monte Carlo scan and then everything derived from it.
    pub fn compute(plan: &ExperimentPlan, exec: Execution) -> Result<Self> {
        let scan = variance_scan_mc(plan, exec)?;
        Self::from_scan(plan, &scan, exec)
    }

    /// Profiles, fits, normality and limits for an existing scan.
    pub fn from_scan(plan: &ExperimentPlan, scan: &McScan, exec: Execution) -> Result<Self> {
        let model = &plan.model;
        let mut warnings = Vec::new();
        let mut covariances = Vec::new();
        let mut normality = Vec::new();
        let z_max = 2.0 * plan.max_radius();
        let index = |t: f64| scan.times.iter().position(|x| *x == t).expect("simulated time");

        for &t in &plan.times {
            let ti = index(t);
            let mut partners = vec![t];
            partners.extend(plan.partner_times.iter().copied().filter(|s| *s != t));
            for s in partners {
                let si = index(s);
                let mc = (0..plan.radii.len())
                    .map(|ri| scan.covariance(ti, si, ri))
                    .collect::<Result<Vec<_>>>()?;
                let profile = rho_profile(
                    model,
                    t,
                    s,
                    plan.eps,
                    z_max,
                    &plan.radii,
                    plan.n_pairs,
                    seed_derive(plan.seed, &["rho".into(), ti.into(), si.into()]),
                    exec,
                )?;
                let rho = variance_scan_rho(&profile, &plan.radii)?;
                if rho.tail_warning {
                    warnings.push(format!(
                        "t={t} s={s}: profile tail ratio {:.3e} exceeds {}",
                        rho.tail_ratio,
                        super::TAIL_TOLERANCE
                    ));
                }
                let values: Vec<f64> = mc.iter().map(|e| e.value).collect();
                let ses: Vec<f64> = mc.iter().map(|e| e.se).collect();
                let cov = scan.estimate_covariance(ti, si);
                let fit = match loglog_slope(&plan.radii, &values, &ses, Some(&cov)) {
                    Ok(f) => Some(FitSummary::new(f, scaling_exponent(model))),
                    Err(e) => {
                        warnings.push(format!("t={t} s={s}: {e}"));
                        None
                    }
                };
                let limit = k_limit_from_profile(model, profile)?;
                let limit = covariance_limit_report(model, &plan.radii, &mc, &limit)?;
                covariances.push(CovarianceRow {
                    t,
                    s,
                    radii: plan.radii.clone(),
                    mc,
                    rho: rho.values,
                    fit,
                    tail_ratio: rho.tail_ratio,
                    tail_warning: rho.tail_warning,
                    limit,
                });
            }
            let samples: Vec<Vec<f64>> = (0..plan.radii.len()).map(|ri| standardize(&scan.averages(ti, ri))).collect();
            match normality_report(&samples, &plan.radii) {
                Ok(report) => normality.push(NormalityRow { t, report }),
                Err(e) => warnings.push(format!("t={t}: normality skipped: {e}")),
            }
        }

        let mean_one = scan
            .times
            .iter()
            .enumerate()
            .map(|(ti, &t)| {
                let u: Vec<f64> = scan.center.iter().map(|c| c[ti]).collect();
                MeanOne { t, u0: mean_se(&u) }
            })
            .collect();
        if !scan.overflowed.is_empty() {
            warnings.push(format!("{} replicates hit the exponent guard", scan.overflowed.len()));
        }

        Ok(CltReport {
            schema_version: SCHEMA_VERSION,
            regime: model.tag().to_string(),
            parameter: model.power_law().map(|_| model.parameter()),
            d: model.dim(),
            half_width: plan.grid.half_width(),
            n_points: plan.grid.n_points(),
            eps: plan.eps,
            replicates: plan.replicates,
            paths: plan.paths,
            n_pairs: plan.n_pairs,
            covariances,
            normality,
            mean_one,
            overflowed_replicates: scan.overflowed.clone(),
            max_exponent: scan.max_exponent,
            warnings,
        })
    }

    pub fn row(&self, t: f64, s: f64) -> Option<&CovarianceRow> {
        self.covariances.iter().find(|c| c.t == t && c.s == s)
    }

    /// Flat table, one line per `(t, s, R)`.
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let mut out = Vec::new();
        for c in &self.covariances {
            let ks = (c.t == c.s)
                .then(|| self.normality.iter().find(|n| n.t == c.t))
                .flatten();
            for (i, &r) in c.radii.iter().enumerate() {
                out.push(CsvRow {
                    regime: self.regime.clone(),
                    t: c.t,
                    s: c.s,
                    r,
                    sigma2_mc: c.mc[i].value,
                    se_mc: c.mc[i].se,
                    sigma2_rho: c.rho[i].value,
                    se_rho: c.rho[i].se,
                    ks: ks.map(|n| n.report.ks[i]),
                    slope: c.fit.map(|f| f.slope),
                    slope_lo: c.fit.map(|f| f.lo),
                    slope_hi: c.fit.map(|f| f.hi),
                });
            }
        }
        out
    }
}

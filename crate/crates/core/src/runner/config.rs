//! TOML run configuration. Unknown keys are rejected everywhere.

use crate::chaos::{ChaosOptions, QmcOptions};
use crate::clt::ExperimentPlan;
use crate::covariance::{CovarianceModel, Regime};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// A scalar or a list of numbers.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum Times {
    One(f64),
    Many(Vec<f64>),
}

impl Times {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Times::One(t) => vec![*t],
            Times::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub model: ModelSection,
    pub grid: Option<GridSection>,
    pub experiment: Option<ExperimentSection>,
    pub chaos: Option<ChaosSection>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub regime: String,
    #[serde(default = "one")]
    pub d: usize,
    pub beta: Option<f64>,
    #[serde(rename = "H")]
    pub hurst: Option<f64>,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(rename = "L")]
    pub half_width: f64,
    pub n_points: usize,
    /// Mollification parameter; defaults to the grid spacing.
    pub eps: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub t: Option<Times>,
    pub s: Option<Times>,
    #[serde(rename = "R")]
    pub radii: Option<Vec<f64>>,
    pub replicates: Option<usize>,
    pub paths: Option<usize>,
    pub n_pairs: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ChaosSection {
    pub t: Option<Times>,
    pub h_order: Option<usize>,
    pub j_order: Option<usize>,
    pub n_levels: Option<Vec<f64>>,
    pub gamma_scale: Option<f64>,
    pub qmc_points: Option<u64>,
    pub qmc_scrambles: Option<u64>,
}

/// Turns a TOML deserialization error into a config error naming the key.
fn parse_error(e: toml::de::Error) -> Error {
    let msg = e.message().to_string();
    let quoted = |prefix: &str| {
        msg.find(prefix).and_then(|i| {
            let rest = &msg[i + prefix.len()..];
            rest.find('`').map(|j| rest[..j].to_string())
        })
    };
    let key = quoted("unknown field `")
        .or_else(|| quoted("missing field `"))
        .unwrap_or_else(|| "config".to_string());
    let at = e.span().map(|s| format!(" (bytes {}..{})", s.start, s.end)).unwrap_or_default();
    Error::config(key, format!("{msg}{at}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(parse_error)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn model(&self) -> Result<CovarianceModel> {
        let m = &self.model;
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| Error::config(key, "required for this regime"));
        let regime = match m.regime.to_ascii_lowercase().as_str() {
            "white" => Regime::White,
            "integrable" => Regime::Integrable,
            "riesz" => Regime::Riesz {
                beta: need(m.beta, "model.beta")?,
            },
            "rough" => Regime::Rough {
                hurst: need(m.hurst, "model.H")?,
            },
            other => {
                return Err(Error::config(
                    "model.regime",
                    format!("unknown regime `{other}` (white, integrable, riesz, rough)"),
                ))
            }
        };
        if m.beta.is_some() && !matches!(regime, Regime::Riesz { .. }) {
            return Err(Error::config("model.beta", "only meaningful for the riesz regime"));
        }
        if m.hurst.is_some() && !matches!(regime, Regime::Rough { .. }) {
            return Err(Error::config("model.H", "only meaningful for the rough regime"));
        }
        CovarianceModel::new(regime, m.d).map_err(|e| match e {
            Error::Config { .. } => e,
            other => Error::config("model", other.to_string()),
        })
    }

    pub fn grid(&self) -> Result<Option<(GridSpec, f64)>> {
        let Some(g) = &self.grid else { return Ok(None) };
        let grid = GridSpec::new(g.half_width, g.n_points)?;
        let eps = g.eps.unwrap_or(grid.dx());
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::config("grid.eps", format!("must be positive, got {eps}")));
        }
        Ok(Some((grid, eps)))
    }

    pub fn require_grid(&self) -> Result<(GridSpec, f64)> {
        self.grid()?.ok_or_else(|| Error::config("grid", "section is required for this command"))
    }

    pub fn experiment(&self) -> Result<&ExperimentSection> {
        self.experiment
            .as_ref()
            .ok_or_else(|| Error::config("experiment", "section is required for this command"))
    }

    /// `experiment.t`, defaulting to `[1]`.
    pub fn times(&self) -> Vec<f64> {
        self.experiment
            .as_ref()
            .and_then(|e| e.t.as_ref())
            .map_or_else(|| vec![1.0], Times::to_vec)
    }

    pub fn partner_times(&self) -> Vec<f64> {
        self.experiment
            .as_ref()
            .and_then(|e| e.s.as_ref())
            .map_or_else(Vec::new, Times::to_vec)
    }

    /// Full experiment plan; every field must be present.
    pub fn plan(&self, seed: u64, allow_aliasing: bool) -> Result<ExperimentPlan> {
        let model = self.model()?;
        let (grid, eps) = self.require_grid()?;
        let e = self.experiment()?;
        let need = |v: Option<usize>, key: &str| v.ok_or_else(|| Error::config(key, "required by `clt`"));
        let plan = ExperimentPlan {
            model,
            grid,
            eps,
            times: self.times(),
            partner_times: self.partner_times(),
            radii: e
                .radii
                .clone()
                .ok_or_else(|| Error::config("experiment.R", "required by `clt`"))?,
            replicates: need(e.replicates, "experiment.replicates")?,
            paths: need(e.paths, "experiment.paths")?,
            n_pairs: need(e.n_pairs, "experiment.n_pairs")?,
            seed,
            allow_aliasing,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn chaos_times(&self) -> Vec<f64> {
        self.chaos
            .as_ref()
            .and_then(|c| c.t.as_ref())
            .map_or_else(|| vec![1.0], Times::to_vec)
    }

    pub fn chaos_options(&self, seed: u64) -> Result<ChaosOptions> {
        let mut opts = ChaosOptions {
            qmc: QmcOptions {
                seed,
                ..QmcOptions::default()
            },
            ..ChaosOptions::default()
        };
        if let Some(c) = &self.chaos {
            if let Some(n) = c.h_order {
                opts.h_order = n;
            }
            if let Some(n) = c.j_order {
                opts.j_order = n;
            }
            if let Some(v) = &c.n_levels {
                opts.n_levels = v.clone();
            }
            if let Some(g) = c.gamma_scale {
                if !(g > 0.0) {
                    return Err(Error::config("chaos.gamma_scale", format!("must be positive, got {g}")));
                }
                opts.gamma_scale = g;
            }
            if let Some(p) = c.qmc_points {
                if p < 2 {
                    return Err(Error::config("chaos.qmc_points", "need at least 2 points"));
                }
                opts.qmc.points = p;
            }
            if let Some(s) = c.qmc_scrambles {
                if s < 2 {
                    return Err(Error::config("chaos.qmc_scrambles", "need at least 2 scrambles for an error bar"));
                }
                opts.qmc.scrambles = s;
            }
        }
        for t in self.chaos_times() {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::config("chaos.t", format!("times must be non-negative, got {t}")));
            }
        }
        if opts.h_order == 0 || opts.h_order > crate::chaos::H_MAX_ORDER {
            return Err(Error::config(
                "chaos.h_order",
                format!("must be in 1..={}", crate::chaos::H_MAX_ORDER),
            ));
        }
        if opts.j_order > crate::chaos::J_MAX_ORDER {
            return Err(Error::config(
                "chaos.j_order",
                format!("must be at most {}", crate::chaos::J_MAX_ORDER),
            ));
        }
        Ok(opts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RIESZ: &str = r#"
command = "clt"
seed = 7
[model]
regime = "riesz"
beta = 0.5
[grid]
L = 256.0
n_points = 32768
[experiment]
t = 1.0
s = [2.0]
R = [8, 16, 32, 64]
replicates = 200
paths = 16
n_pairs = 100
"#;

    #[test]
    fn parses_and_builds_a_plan() {
        let c = RunConfig::parse(RIESZ).unwrap();
        let plan = c.plan(7, false).unwrap();
        assert_eq!(plan.times, vec![1.0]);
        assert_eq!(plan.partner_times, vec![2.0]);
        assert_eq!(plan.eps, 256.0 / 16384.0);
        assert_eq!(plan.model.tag(), "riesz");
    }

    fn key_of(text: &str) -> String {
        match RunConfig::parse(text).and_then(|c| c.plan(0, false)) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(key_of(&RIESZ.replace("beta = 0.5", "bta = 0.5")), "bta");
        assert_eq!(key_of(&RIESZ.replace("beta = 0.5", "beta = 1.5")), "model.beta");
        assert_eq!(key_of(&RIESZ.replace("beta = 0.5\n", "")), "model.beta");
        assert_eq!(key_of(&RIESZ.replace("regime = \"riesz\"", "regime = \"pink\"")), "model.regime");
        assert_eq!(key_of(&RIESZ.replace("R = [8, 16, 32, 64]", "R = [8, 16, 32, 128]")), "experiment.R");
        assert_eq!(key_of(&RIESZ.replace("replicates = 200", "replicates = 20")), "experiment.replicates");
        assert_eq!(key_of(&RIESZ.replace("n_points = 32768", "n_points = 1000")), "grid.n_points");
        assert_eq!(key_of(&RIESZ.replace("paths = 16\n", "")), "experiment.paths");
        assert_eq!(key_of(&RIESZ.replace("[grid]", "[grid]\nfoo = 1")), "foo");
    }
}

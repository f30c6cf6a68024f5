//! Command orchestration for the `pamclt` binary.

pub mod config;
pub mod output;

pub use config::RunConfig;
pub use output::{sha256_hex, Meta};

use crate::chaos::{k_limit, k_limit_from_profile, limit_window, ChaosTable, KLimit, LimitMc};
use crate::clt::{variance_scan_mc, CltReport, CSV_HEADER};
use crate::covariance::Regime;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::feynman_kac::{rho_profile, RhoProfile};
use crate::field::{check_aliasing, synthesize};
use crate::seed::seed_derive;
use output::{cell, write_csv, write_json};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Environment variable consulted when neither `--out` nor `out` is set.
pub const OUT_ENV: &str = "PAMCLT_OUT";
const DEFAULT_OUT: &str = "pamclt-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Validate,
    ChaosTable,
    Covariance,
    Clt,
    FieldDump,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::ChaosTable => "chaos-table",
            Command::Covariance => "covariance",
            Command::Clt => "clt",
            Command::FieldDump => "field-dump",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "validate" => Command::Validate,
            "chaos-table" => Command::ChaosTable,
            "covariance" => Command::Covariance,
            "clt" => Command::Clt,
            "field-dump" => Command::FieldDump,
            other => return Err(Error::config("command", format!("unknown command `{other}`"))),
        })
    }
}

/// Parsed command line.
#[derive(Clone, Debug, Default)]
pub struct Invocation {
    pub command: Option<Command>,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub allow_aliasing: bool,
}

/// Process exit status for an error: 2 for configuration problems, 3 for
/// numerical failures, 1 for I/O.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::UnsupportedRegime(_) => 2,
        Error::Io(_) | Error::Json(_) | Error::Format(_) => 1,
        _ => 3,
    }
}

/// Everything a command needs after the configuration has been resolved.
struct Context {
    cfg: RunConfig,
    command: Command,
    seed: u64,
    allow_aliasing: bool,
    out: PathBuf,
    meta: Meta,
    exec: Execution,
}

impl Context {
    fn resolve(inv: &Invocation) -> Result<Self> {
        let cfg = RunConfig::load(&inv.config)?;
        let command = match (inv.command, cfg.command.as_deref()) {
            (Some(c), Some(s)) => {
                let from_file: Command = s.parse()?;
                // validate may be pointed at any config
                if from_file != c && c != Command::Validate {
                    return Err(Error::config(
                        "command",
                        format!("config says `{s}` but `{}` was requested", c.name()),
                    ));
                }
                c
            }
            (Some(c), None) => c,
            (None, Some(s)) => s.parse()?,
            (None, None) => return Err(Error::config("command", "no command given on the command line or in the config")),
        };
        let seed = inv.seed.or(cfg.seed).unwrap_or(0);
        let out = inv
            .out
            .clone()
            .or_else(|| cfg.out.clone())
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        let meta = Meta {
            command: command.name().to_string(),
            config_hash: config_hash(&cfg, command, seed, inv.allow_aliasing)?,
            seed,
        };
        Ok(Context {
            cfg,
            command,
            seed,
            allow_aliasing: inv.allow_aliasing,
            out,
            meta,
            exec: Execution::default(),
        })
    }

    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out)?;
        Ok(&self.out)
    }
}

/// SHA-256 of the effective configuration (after command-line overrides),
/// serialized canonically. The output directory does not enter the hash.
pub fn config_hash(cfg: &RunConfig, command: Command, seed: u64, allow_aliasing: bool) -> Result<String> {
    let mut effective = cfg.clone();
    effective.out = None;
    effective.command = Some(command.name().to_string());
    effective.seed = Some(seed);
    let doc = serde_json::json!({ "config": effective, "allow_aliasing": allow_aliasing });
    let text = output::json_document(
        &Meta {
            command: String::new(),
            config_hash: String::new(),
            seed: 0,
        },
        "",
        &doc,
        None,
    )?;
    Ok(sha256_hex(text.as_bytes()))
}

/// Runs one command, writing artifacts and one summary line per result to
/// `log`. On a numerical failure whatever was finished is flushed first.
pub fn run(inv: &Invocation, log: &mut dyn Write) -> Result<Vec<PathBuf>> {
    let ctx = Context::resolve(inv)?;
    match ctx.command {
        Command::Validate => validate(&ctx, log).map(|_| Vec::new()),
        Command::ChaosTable => chaos_table(&ctx, log),
        Command::Covariance => covariance(&ctx, log),
        Command::Clt => clt(&ctx, log),
        Command::FieldDump => field_dump(&ctx, log),
    }
}

fn say(log: &mut dyn Write, line: String) {
    let _ = writeln!(log, "{line}");
}

fn describe(model: &crate::CovarianceModel) -> String {
    match model.regime() {
        Regime::Riesz { beta } => format!("riesz beta={beta} d={}", model.dim()),
        Regime::Rough { hurst } => format!("rough H={hurst}"),
        _ => model.tag().to_string(),
    }
}

fn validate(ctx: &Context, log: &mut dyn Write) -> Result<()> {
    let cfg = &ctx.cfg;
    let model = cfg.model()?;
    let dalang = model.dalang_integral()?;
    if let Some((grid, eps)) = cfg.grid()? {
        check_aliasing(&grid, eps, ctx.allow_aliasing)?;
    }
    if cfg.experiment.as_ref().is_some_and(|e| e.radii.is_some()) {
        cfg.plan(ctx.seed, ctx.allow_aliasing)?;
    }
    if cfg.chaos.is_some() {
        cfg.chaos_options(ctx.seed)?;
    }
    say(
        log,
        format!(
            "validate: ok {} dalang={:.6} (±{:.1e})",
            describe(&model),
            dalang.value,
            dalang.error
        ),
    );
    Ok(())
}

fn chaos_table(ctx: &Context, log: &mut dyn Write) -> Result<Vec<PathBuf>> {
    let model = ctx.cfg.model()?;
    let opts = ctx.cfg.chaos_options(ctx.seed)?;
    let mut tables = Vec::new();
    let mut failure = None;
    for t in ctx.cfg.chaos_times() {
        match ChaosTable::compute(&model, t, &opts) {
            Ok(tab) => {
                let h1 = tab.h.first().map_or(f64::NAN, |v| v.value);
                let j1 = tab.j.first().map_or(f64::NAN, |v| v.value);
                say(log, format!("chaos-table {} t={t}: h_1={h1:.6} j_1={j1:.6}", describe(&model)));
                tables.push(tab);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    let dir = ctx.out_dir()?;
    let status = if failure.is_some() { "partial" } else { "ok" };
    let mut rows = Vec::new();
    for tab in &tables {
        for h in &tab.h {
            let j = tab.j.iter().find(|j| j.n == h.n);
            rows.push(vec![
                model.tag().to_string(),
                cell(Some(tab.t)),
                h.n.to_string(),
                cell(Some(h.value)),
                cell(Some(h.error)),
                cell(j.map(|j| j.value)),
                cell(j.map(|j| j.error)),
            ]);
        }
    }
    let paths = vec![
        write_json(dir, "chaos_table.json", &ctx.meta, status, &tables, failure.as_ref())?,
        write_csv(dir, "chaos_table.csv", &ctx.meta, &["regime", "t", "n", "h", "h_err", "j", "j_err"], &rows)?,
    ];
    match failure {
        Some(e) => Err(e),
        None => Ok(paths),
    }
}

#[derive(Serialize)]
struct CovarianceEntry {
    t: f64,
    s: f64,
    k_limit: KLimit,
    profile: Option<RhoProfile>,
}

fn covariance(ctx: &Context, log: &mut dyn Write) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.cfg;
    let model = cfg.model()?;
    let times = cfg.times();
    let partners = cfg.partner_times();
    let mut pairs = Vec::new();
    for &t in &times {
        if partners.is_empty() {
            pairs.push((t, t));
        }
        for &s in &partners {
            pairs.push((t, s));
        }
    }
    for &(t, s) in &pairs {
        if !(t.is_finite() && t >= 0.0 && s.is_finite() && s >= 0.0) {
            return Err(Error::config("experiment.t", format!("times must be non-negative, got ({t}, {s})")));
        }
    }
    let riesz = matches!(model.regime(), Regime::Riesz { .. });
    let n_pairs = cfg.experiment.as_ref().and_then(|e| e.n_pairs);
    let radii = cfg.experiment.as_ref().and_then(|e| e.radii.clone()).unwrap_or_default();
    // the profile is needed for the non-Riesz limits and optional otherwise
    let profile_setup = if !riesz || n_pairs.is_some() {
        let (grid, eps) = cfg.require_grid()?;
        check_aliasing(&grid, eps, ctx.allow_aliasing)?;
        let n = n_pairs.ok_or_else(|| Error::config("experiment.n_pairs", "required for this regime"))?;
        if n < 2 {
            return Err(Error::config("experiment.n_pairs", format!("need at least 2, got {n}")));
        }
        Some((eps, n))
    } else {
        None
    };

    let mut entries = Vec::new();
    let mut failure = None;
    for (i, &(t, s)) in pairs.iter().enumerate() {
        let result = (|| -> Result<CovarianceEntry> {
            let profile = match profile_setup {
                Some((eps, n)) => {
                    let r_max = radii.iter().copied().fold(0.0, f64::max);
                    let z_max = limit_window(t, s).max(2.0 * r_max);
                    let seed = seed_derive(ctx.seed, &["covariance".into(), i.into()]);
                    Some(rho_profile(&model, t, s, eps, z_max, &radii, n, seed, ctx.exec)?)
                }
                None => None,
            };
            let k = match (&profile, riesz) {
                (Some(p), false) => k_limit_from_profile(&model, p.clone())?,
                _ => k_limit(
                    &model,
                    t,
                    s,
                    &LimitMc {
                        eps: 0.0,
                        n_pairs: 0,
                        seed: 0,
                        exec: ctx.exec,
                    },
                )?,
            };
            Ok(CovarianceEntry {
                t,
                s,
                k_limit: k,
                profile,
            })
        })();
        match result {
            Ok(e) => {
                let k = &e.k_limit;
                let extra = match (k.closed_form, k.quadrature) {
                    (Some(c), Some(q)) => format!(" closed={c:.6} quadrature={:.6}(±{:.1e})", q.value, q.error),
                    _ => format!(" (±{:.1e}, {})", k.value.se, k.method),
                };
                say(
                    log,
                    format!("covariance {} t={t} s={s}: K={:.6}{extra}", describe(&model), k.value.value),
                );
                entries.push(e);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }

    let dir = ctx.out_dir()?;
    let status = if failure.is_some() { "partial" } else { "ok" };
    let k_rows: Vec<Vec<String>> = entries
        .iter()
        .map(|e| {
            vec![
                model.tag().to_string(),
                cell(Some(e.t)),
                cell(Some(e.s)),
                cell(Some(e.k_limit.value.value)),
                cell(Some(e.k_limit.value.se)),
                cell(e.k_limit.closed_form),
                e.k_limit.method.to_string(),
            ]
        })
        .collect();
    let mut paths = vec![
        write_json(dir, "covariance.json", &ctx.meta, status, &entries, failure.as_ref())?,
        write_csv(
            dir,
            "covariance.csv",
            &ctx.meta,
            &["regime", "t", "s", "K", "K_se", "K_closed", "method"],
            &k_rows,
        )?,
    ];
    if profile_setup.is_some() {
        let mut rows = Vec::new();
        for e in &entries {
            if let Some(p) = &e.profile {
                for (z, r) in p.z.iter().zip(&p.rho) {
                    rows.push(vec![
                        model.tag().to_string(),
                        cell(Some(e.t)),
                        cell(Some(e.s)),
                        cell(Some(*z)),
                        cell(Some(r.value)),
                        cell(Some(r.se)),
                    ]);
                }
            }
        }
        paths.push(write_csv(
            dir,
            "rho_profile.csv",
            &ctx.meta,
            &["regime", "t", "s", "z", "rho", "se"],
            &rows,
        )?);
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(paths),
    }
}

#[derive(Serialize)]
struct PartialClt {
    /// `(t, R, σ̂², se)` for whatever the Monte Carlo scan produced.
    variances: Vec<(f64, f64, Option<f64>, Option<f64>)>,
}

fn clt(ctx: &Context, log: &mut dyn Write) -> Result<Vec<PathBuf>> {
    let plan = ctx.cfg.plan(ctx.seed, ctx.allow_aliasing)?;
    let flush_partial = |partial: &PartialClt, e: &Error| -> Result<()> {
        let dir = ctx.out_dir()?;
        write_json(dir, "clt_report.json", &ctx.meta, "partial", partial, Some(e))?;
        Ok(())
    };
    let scan = match variance_scan_mc(&plan, ctx.exec) {
        Ok(s) => s,
        Err(e) => {
            flush_partial(&PartialClt { variances: Vec::new() }, &e)?;
            return Err(e);
        }
    };
    let report = match CltReport::from_scan(&plan, &scan, ctx.exec) {
        Ok(r) => r,
        Err(e) => {
            let mut variances = Vec::new();
            for &t in &plan.times {
                let ti = scan.times.iter().position(|x| *x == t).expect("simulated time");
                for (ri, &r) in plan.radii.iter().enumerate() {
                    let v = scan.variance(ti, ri).ok();
                    variances.push((t, r, v.map(|v| v.value), v.map(|v| v.se)));
                }
            }
            flush_partial(&PartialClt { variances }, &e)?;
            return Err(e);
        }
    };
    let overflow = (!report.overflowed_replicates.is_empty()).then_some(Error::Overflow {
        exponent: report.max_exponent,
    });
    let dir = ctx.out_dir()?;
    let status = if overflow.is_some() { "partial" } else { "ok" };
    let rows: Vec<Vec<String>> = report
        .csv_rows()
        .into_iter()
        .map(|r| {
            vec![
                r.regime,
                cell(Some(r.t)),
                cell(Some(r.s)),
                cell(Some(r.r)),
                cell(Some(r.sigma2_mc)),
                cell(Some(r.se_mc)),
                cell(Some(r.sigma2_rho)),
                cell(Some(r.se_rho)),
                cell(r.ks),
                cell(r.slope),
                cell(r.slope_lo),
                cell(r.slope_hi),
            ]
        })
        .collect();
    let paths = vec![
        write_json(dir, "clt_report.json", &ctx.meta, status, &report, overflow.as_ref())?,
        write_csv(dir, "clt_report.csv", &ctx.meta, &CSV_HEADER, &rows)?,
    ];
    for c in &report.covariances {
        let fit = c.fit.map_or_else(
            || "no fit".to_string(),
            |f| format!("slope={:.3} [{:.3}, {:.3}] expected {}", f.slope, f.lo, f.hi, f.expected),
        );
        say(log, format!("clt {} t={} s={}: {fit}", describe(&plan.model), c.t, c.s));
    }
    for n in &report.normality {
        let ks: Vec<String> = n.report.ks.iter().map(|k| format!("{k:.4}")).collect();
        say(
            log,
            format!("clt {} t={}: ks=[{}] tau={:.2}", describe(&plan.model), n.t, ks.join(", "), n.report.kendall_tau),
        );
    }
    for w in &report.warnings {
        say(log, format!("warning: {w}"));
    }
    match overflow {
        Some(e) => Err(e),
        None => Ok(paths),
    }
}

#[derive(Serialize)]
struct DumpInfo {
    file: String,
    regime: String,
    parameter: f64,
    d: usize,
    half_width: f64,
    n_points: usize,
    eps: f64,
    field_seed: u64,
}

fn field_dump(ctx: &Context, log: &mut dyn Write) -> Result<Vec<PathBuf>> {
    let model = ctx.cfg.model()?;
    let (grid, eps) = ctx.cfg.require_grid()?;
    check_aliasing(&grid, eps, ctx.allow_aliasing)?;
    // the noise of replicate 0 of a `clt` run with the same seed
    let field_seed = seed_derive(ctx.seed, &["field".into(), 0usize.into()]);
    let field = synthesize(&model, grid, eps, field_seed, ctx.allow_aliasing, ctx.exec)?;
    let dir = ctx.out_dir()?;
    let bin = dir.join("field.bin");
    field.write_dump(&bin)?;
    let info = DumpInfo {
        file: "field.bin".into(),
        regime: model.tag().into(),
        parameter: model.parameter(),
        d: model.dim(),
        half_width: grid.half_width(),
        n_points: grid.n_points(),
        eps,
        field_seed,
    };
    let json = write_json(dir, "field.json", &ctx.meta, "ok", &info, None)?;
    say(
        log,
        format!("field-dump {}: {} samples -> {}", describe(&model), grid.n_points(), bin.display()),
    );
    Ok(vec![bin, json])
}

//! GA reports and sensitivity sweeps over a resolved run configuration.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::analytic::ga_approx;
use crate::config::{RunConfig, RunInputs, RunMode};
use crate::error::{Error, Result};
use crate::irb::portfolio_irb;
use crate::mc::{ga_mc_actuarial, ga_mc_mtm, McEstimate};
use crate::mtm::{MtmApprox, MtmMode, MtmModel};
use crate::params::{RhoMode, RiskParams};
use crate::portfolio::Portfolio;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    McIrb,
    Approx,
    Simplified,
    MtmMcDefault,
    MtmMcRatings,
    MtmApprox,
}

impl Estimator {
    pub const ALL: [Estimator; 6] = [
        Estimator::McIrb,
        Estimator::Approx,
        Estimator::Simplified,
        Estimator::MtmMcDefault,
        Estimator::MtmMcRatings,
        Estimator::MtmApprox,
    ];

    fn label(self) -> &'static str {
        match self {
            Estimator::McIrb => "GA MC IRB",
            Estimator::Approx => "GA approx.",
            Estimator::Simplified => "GA simplified",
            Estimator::MtmMcDefault => "GA MC def. MtM",
            Estimator::MtmMcRatings => "GA MC MtM",
            Estimator::MtmApprox => "GA MtM approx.",
        }
    }

    /// Estimator a sweep targets when none is named.
    pub fn default_for(mode: RunMode) -> Estimator {
        match mode {
            RunMode::Actuarial | RunMode::All => Estimator::McIrb,
            RunMode::MtmDefault => Estimator::MtmMcDefault,
            RunMode::MtmRatings => Estimator::MtmMcRatings,
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::McIrb => "mc-irb",
            Estimator::Approx => "approx",
            Estimator::Simplified => "simplified",
            Estimator::MtmMcDefault => "mtm-mc-default",
            Estimator::MtmMcRatings => "mtm-mc-ratings",
            Estimator::MtmApprox => "mtm-approx",
        })
    }
}

impl FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.to_string() == s)
            .ok_or_else(|| Error::invalid(format!("unknown estimator '{s}'")))
    }
}

/// One portfolio's results, all as fractions of total exposure.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub portfolio: String,
    pub borrowers: usize,
    pub k_star: f64,
    pub ga_mc_irb: Option<McEstimate>,
    pub ga_approx: f64,
    pub ga_simplified: f64,
    pub ga_mtm_mc_default: Option<McEstimate>,
    pub ga_mtm_mc_ratings: Option<McEstimate>,
    pub ga_mtm_approx: Option<MtmApprox>,
}

impl ReportRow {
    pub fn value(&self, e: Estimator) -> Option<f64> {
        match e {
            Estimator::McIrb => self.ga_mc_irb.map(|m| m.value),
            Estimator::Approx => Some(self.ga_approx),
            Estimator::Simplified => Some(self.ga_simplified),
            Estimator::MtmMcDefault => self.ga_mtm_mc_default.map(|m| m.value),
            Estimator::MtmMcRatings => self.ga_mtm_mc_ratings.map(|m| m.value),
            Estimator::MtmApprox => self.ga_mtm_approx.map(|m| m.ga),
        }
    }

    /// `GA / (K* + GA)`, the GA's share of total unexpected loss.
    pub fn relative(&self, e: Estimator) -> Option<f64> {
        self.value(e).map(|g| relative_ga(g, self.k_star))
    }
}

pub fn relative_ga(ga: f64, k_star: f64) -> f64 {
    ga / (k_star + ga)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaReport {
    /// Config text that reproduces the run.
    pub metadata: String,
    pub rows: Vec<ReportRow>,
}

/// Keeps the numerical/input split of an error while naming the portfolio.
fn in_portfolio(name: &str, e: Error) -> Error {
    match e {
        Error::Degenerate(m) => Error::Degenerate(format!("portfolio {name}: {m}")),
        Error::NonConvergence { what, detail } => Error::NonConvergence {
            what: format!("portfolio {name}: {what}"),
            detail,
        },
        e @ (Error::BracketOutOfRange { .. } | Error::Config { .. }) => e,
        other => Error::invalid(format!("portfolio {name}: {other}")),
    }
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {n} worker threads: {e}")))?
            .install(f),
    }
}

fn wants(mode: RunMode, e: Estimator) -> bool {
    match e {
        Estimator::Approx | Estimator::Simplified => true,
        Estimator::McIrb => matches!(mode, RunMode::Actuarial | RunMode::All),
        Estimator::MtmMcDefault => matches!(mode, RunMode::MtmDefault | RunMode::All),
        Estimator::MtmMcRatings | Estimator::MtmApprox => matches!(mode, RunMode::MtmRatings | RunMode::All),
    }
}

fn report_row(name: &str, p: &Portfolio, inputs: &RunInputs, params: &RiskParams, mode: RunMode) -> Result<ReportRow> {
    let tm = &inputs.matrix;
    let irb = portfolio_irb(p, tm, params);
    let analytic = ga_approx(p, &irb, params.xi, params.q)?;
    let ga_mc_irb = if wants(mode, Estimator::McIrb) {
        Some(ga_mc_actuarial(p, tm, params)?)
    } else {
        None
    };
    let ga_mtm_mc_default = if wants(mode, Estimator::MtmMcDefault) {
        let model = MtmModel::build(p, tm, &inputs.curve, params, MtmMode::DefaultOnly)?;
        Some(ga_mc_mtm(&model, params)?)
    } else {
        None
    };
    let (ga_mtm_mc_ratings, ga_mtm_approx) = if wants(mode, Estimator::MtmMcRatings) {
        let model = MtmModel::build(p, tm, &inputs.curve, params, MtmMode::RatingsBased)?;
        (Some(ga_mc_mtm(&model, params)?), Some(model.ga_approx(params.q)?))
    } else {
        (None, None)
    };
    Ok(ReportRow {
        portfolio: name.to_string(),
        borrowers: p.len(),
        k_star: analytic.k_star,
        ga_mc_irb,
        ga_approx: analytic.ga_full,
        ga_simplified: analytic.ga_simplified,
        ga_mtm_mc_default,
        ga_mtm_mc_ratings,
        ga_mtm_approx,
    })
}

/// Metadata recorded in reports: the full config minus the worker count,
/// which does not affect results.
pub fn report_metadata(config: &RunConfig) -> String {
    config
        .to_config_string()
        .lines()
        .filter(|l| !l.starts_with("threads"))
        .map(|l| format!("{l}\n"))
        .collect()
}

pub fn run_report(config: &RunConfig, inputs: &RunInputs) -> Result<GaReport> {
    config.validate()?;
    let rows = with_threads(config.threads, || {
        inputs
            .portfolios
            .iter()
            .map(|(name, p)| {
                report_row(name, p, inputs, &config.params, config.mode).map_err(|e| in_portfolio(name, e))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(GaReport {
        metadata: report_metadata(config),
        rows,
    })
}

fn pct(v: f64) -> String {
    format!("{}", 100.0 * v)
}

fn opt_pct(v: Option<f64>) -> String {
    v.map(pct).unwrap_or_default()
}

fn mc_cells(m: Option<McEstimate>) -> [String; 4] {
    match m {
        Some(m) => [pct(m.value), pct(m.std_error), pct(m.ci95.0), pct(m.ci95.1)],
        None => Default::default(),
    }
}

pub const REPORT_COLUMNS: [&str; 26] = [
    "portfolio",
    "borrowers",
    "k_star",
    "ga_mc_irb",
    "ga_mc_irb_se",
    "ga_mc_irb_ci_lo",
    "ga_mc_irb_ci_hi",
    "ga_approx",
    "ga_simplified",
    "ga_mtm_mc_default",
    "ga_mtm_mc_default_se",
    "ga_mtm_mc_default_ci_lo",
    "ga_mtm_mc_default_ci_hi",
    "ga_mtm_mc_ratings",
    "ga_mtm_mc_ratings_se",
    "ga_mtm_mc_ratings_ci_lo",
    "ga_mtm_mc_ratings_ci_hi",
    "ga_mtm_approx",
    "mtm_richardson_ok",
    "scenarios",
    "rel_ga_mc_irb",
    "rel_ga_approx",
    "rel_ga_simplified",
    "rel_ga_mtm_mc_default",
    "rel_ga_mtm_mc_ratings",
    "rel_ga_mtm_approx",
];

/// Machine-readable report: `#!` metadata lines, then one row per
/// portfolio. GA columns are in percent of total exposure at full
/// precision; empty cells mark estimators the run mode skipped.
pub fn report_csv(report: &GaReport) -> String {
    let mut out: String = report.metadata.lines().map(|l| format!("#! {l}\n")).collect();
    out.push_str(&REPORT_COLUMNS.join(","));
    out.push('\n');
    for r in &report.rows {
        let scenarios = [r.ga_mc_irb, r.ga_mtm_mc_default, r.ga_mtm_mc_ratings]
            .iter()
            .flatten()
            .map(|m| m.scenarios_used)
            .next();
        let mut cells = vec![r.portfolio.clone(), r.borrowers.to_string(), pct(r.k_star)];
        cells.extend(mc_cells(r.ga_mc_irb));
        cells.push(pct(r.ga_approx));
        cells.push(pct(r.ga_simplified));
        cells.extend(mc_cells(r.ga_mtm_mc_default));
        cells.extend(mc_cells(r.ga_mtm_mc_ratings));
        cells.push(opt_pct(r.ga_mtm_approx.map(|a| a.ga)));
        cells.push(r.ga_mtm_approx.map(|a| a.richardson_ok.to_string()).unwrap_or_default());
        cells.push(scenarios.map(|s| s.to_string()).unwrap_or_default());
        for e in Estimator::ALL {
            cells.push(opt_pct(r.relative(e)));
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Human-readable table in percent of total exposure, two decimals,
/// estimators as rows and portfolios as columns.
pub fn report_text(report: &GaReport) -> String {
    let mut out = String::from("Run settings\n");
    for l in report.metadata.lines() {
        out.push_str(&format!("  {l}\n"));
    }
    out.push('\n');
    let width = report
        .rows
        .iter()
        .map(|r| r.portfolio.len() + 5)
        .max()
        .unwrap_or(8)
        .max(9);
    let label_width = 22;
    let mut header = format!("{:<label_width$}", "(% of EAD)");
    for r in &report.rows {
        header.push_str(&format!("{:>width$}", format!("{} ({})", r.portfolio, r.borrowers)));
    }
    out.push_str(&header);
    out.push('\n');
    let cell = |v: Option<f64>| v.map(|x| format!("{:.2}", 100.0 * x)).unwrap_or_else(|| "-".into());
    let mut line = |label: &str, f: &dyn Fn(&ReportRow) -> Option<f64>| {
        let mut s = format!("{label:<label_width$}");
        for r in &report.rows {
            s.push_str(&format!("{:>width$}", cell(f(r))));
        }
        out.push_str(&s);
        out.push('\n');
    };
    line("K*", &|r| Some(r.k_star));
    for e in Estimator::ALL {
        line(e.label(), &|r| r.value(e));
    }
    for e in Estimator::ALL {
        line(&format!("rel. {}", e.label()), &|r| r.relative(e));
    }
    line("ci95 lo GA MC IRB", &|r| r.ga_mc_irb.map(|m| m.ci95.0));
    line("ci95 hi GA MC IRB", &|r| r.ga_mc_irb.map(|m| m.ci95.1));
    out
}

/// Writes `contents` to a sibling temporary file and renames it over
/// `path`.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let io = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(io)
}

/// Writes `report.csv` and `report.txt` into `dir`.
pub fn write_report(report: &GaReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write_atomic(&dir.join("report.csv"), &report_csv(report))?;
    write_atomic(&dir.join("report.txt"), &report_text(report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Rho,
    Maturity,
    Coupon,
}

impl SweepAxis {
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepAxis::Rho => vec![0.12, 0.24, 0.35],
            SweepAxis::Maturity => vec![1.0, 3.0, 5.0, 8.0],
            SweepAxis::Coupon => vec![0.0, 0.01, 0.03, 0.05],
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Rho => "rho",
            SweepAxis::Maturity => "maturity",
            SweepAxis::Coupon => "coupon",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rho" => Ok(SweepAxis::Rho),
            "maturity" => Ok(SweepAxis::Maturity),
            "coupon" => Ok(SweepAxis::Coupon),
            _ => Err(Error::invalid(format!(
                "unknown sweep axis '{s}' (rho, maturity, coupon)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub portfolio: String,
    pub axis_value: f64,
    /// Analytic targets carry a zero standard error.
    pub estimate: McEstimate,
}

fn exact(v: f64) -> McEstimate {
    McEstimate {
        value: v,
        std_error: 0.0,
        ci95: (v, v),
        scenarios_used: 0,
    }
}

/// One estimator on one portfolio.
pub fn estimate(p: &Portfolio, inputs: &RunInputs, params: &RiskParams, target: Estimator) -> Result<McEstimate> {
    let tm = &inputs.matrix;
    match target {
        Estimator::McIrb => ga_mc_actuarial(p, tm, params),
        Estimator::Approx | Estimator::Simplified => {
            let a = ga_approx(p, &portfolio_irb(p, tm, params), params.xi, params.q)?;
            Ok(exact(if target == Estimator::Approx {
                a.ga_full
            } else {
                a.ga_simplified
            }))
        }
        Estimator::MtmMcDefault => ga_mc_mtm(
            &MtmModel::build(p, tm, &inputs.curve, params, MtmMode::DefaultOnly)?,
            params,
        ),
        Estimator::MtmMcRatings => ga_mc_mtm(
            &MtmModel::build(p, tm, &inputs.curve, params, MtmMode::RatingsBased)?,
            params,
        ),
        Estimator::MtmApprox => Ok(exact(
            MtmModel::build(p, tm, &inputs.curve, params, MtmMode::RatingsBased)?
                .ga_approx(params.q)?
                .ga,
        )),
    }
}

/// Evaluates `target` at every axis value for every portfolio, holding the
/// seed fixed so that neighbouring points are paired.
pub fn run_sweep(
    config: &RunConfig,
    inputs: &RunInputs,
    axis: SweepAxis,
    values: &[f64],
    target: Estimator,
) -> Result<Vec<SweepPoint>> {
    config.validate()?;
    if values.is_empty() {
        return Err(Error::invalid(format!("empty value set for the {axis} sweep")));
    }
    with_threads(config.threads, || {
        let mut out = Vec::new();
        for (name, p) in &inputs.portfolios {
            for &v in values {
                let mut params = config.params;
                let q = match axis {
                    SweepAxis::Rho => {
                        params.rho_mode = RhoMode::Fixed(v);
                        params.validate()?;
                        p.clone()
                    }
                    SweepAxis::Maturity => p.with_maturity(v)?,
                    SweepAxis::Coupon => p.with_coupon(v)?,
                };
                let e = estimate(&q, inputs, &params, target).map_err(|e| in_portfolio(name, e))?;
                out.push(SweepPoint {
                    portfolio: name.clone(),
                    axis_value: v,
                    estimate: e,
                });
            }
        }
        Ok(out)
    })
}

pub fn sweep_csv(config: &RunConfig, axis: SweepAxis, target: Estimator, points: &[SweepPoint]) -> String {
    let mut out: String = report_metadata(config).lines().map(|l| format!("#! {l}\n")).collect();
    out.push_str(&format!("# sweep axis = {axis}, target = {target}\n"));
    out.push_str(&format!("portfolio,{axis},ga,ga_se,ga_ci_lo,ga_ci_hi\n"));
    for p in points {
        let e = &p.estimate;
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.portfolio,
            p.axis_value,
            pct(e.value),
            pct(e.std_error),
            pct(e.ci95.0),
            pct(e.ci95.1)
        ));
    }
    out
}

/// Writes `sweep_<axis>.csv` into `dir`.
pub fn write_sweep(
    config: &RunConfig,
    axis: SweepAxis,
    target: Estimator,
    points: &[SweepPoint],
    dir: &Path,
) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let path = dir.join(format!("sweep_{axis}.csv"));
    write_atomic(&path, &sweep_csv(config, axis, target, points))?;
    Ok(path)
}

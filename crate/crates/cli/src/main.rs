//! `namerisk`: granularity adjustments for small credit portfolios.
//!
//! Exit codes: 0 on success, 1 for bad input or configuration, 2 when a
//! numerical procedure fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use namerisk_core::config::{RunConfig, RunMode};
use namerisk_core::estimation::{self, EstimationMethod};
use namerisk_core::fixtures;
use namerisk_core::irb;
use namerisk_core::mtm::{price_bond, BondSpec, PriceAt};
use namerisk_core::report::{self, Estimator, SweepAxis};
use namerisk_core::{LgdSpec, TransitionMatrix};

#[derive(Parser)]
#[command(
    name = "namerisk",
    version,
    about = "Name-concentration risk for small credit portfolios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Config file; a report.csv written earlier also works.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set q=0.995`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Portfolio CSV files; replaces `portfolio_paths`.
    #[arg(long = "portfolio", short = 'p')]
    portfolios: Vec<PathBuf>,
    /// actuarial, mtm-default, mtm-ratings or all.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    scenarios: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

impl RunArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let cwd = Path::new(".");
        for s in &self.sets {
            let Some((k, v)) = s.split_once('=') else {
                bail!("--set expects KEY=VALUE, got '{s}'");
            };
            cfg.set(k.trim(), v, cwd)?;
        }
        if !self.portfolios.is_empty() {
            cfg.portfolio_paths = self.portfolios.clone();
        }
        if let Some(m) = &self.mode {
            cfg.set("mode", m, cwd)?;
        }
        if let Some(s) = self.scenarios {
            cfg.params.scenarios = s;
        }
        if let Some(s) = self.seed {
            cfg.params.seed = s;
        }
        if let Some(t) = self.threads {
            cfg.threads = (t > 0).then_some(t);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// GA table for every portfolio: report.csv and report.txt.
    GaReport {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// GA along one parameter axis with the seed held fixed.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// rho, maturity or coupon.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values; defaults depend on the axis.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// mc-irb, approx, simplified, mtm-mc-default, mtm-mc-ratings or
        /// mtm-approx. Defaults to the MC estimator of the run mode.
        #[arg(long)]
        target: Option<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Fit xi against the exact ratings-based MtM GA of the portfolios.
    CalibrateXi {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Asset correlation from a `year,cohort_size,defaults` series.
    EstimateRho {
        #[arg(long)]
        series: PathBuf,
        /// mle, mom or beta-match.
        #[arg(long, default_value = "mle")]
        method: String,
        #[arg(long, default_value_t = 0.45)]
        elgd: f64,
        #[arg(long, default_value_t = 0.999)]
        q: f64,
    },
    /// Price a unit-face bond today or at the horizon.
    PriceBond {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        rating: String,
        #[arg(long)]
        maturity: f64,
        #[arg(long)]
        coupon: Option<f64>,
        /// Grade at the horizon; prices today when absent.
        #[arg(long)]
        state: Option<String>,
    },
    /// Load and check the config and portfolios without running anything.
    Validate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write the bundled synthetic portfolios as CSV files.
    Fixtures {
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn pct(v: f64) -> String {
    format!("{:.4}%", 100.0 * v)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GaReport { run, out } => {
            let cfg = run.resolve()?;
            let inputs = cfg.resolve_inputs()?;
            let rep = report::run_report(&cfg, &inputs)?;
            report::write_report(&rep, &out)?;
            print!("{}", report::report_text(&rep));
            eprintln!("wrote {}", out.join("report.csv").display());
        }
        Command::Sweep {
            run,
            axis,
            values,
            target,
            out,
        } => {
            let cfg = run.resolve()?;
            let axis: SweepAxis = axis.parse()?;
            let target = match target {
                Some(t) => t.parse()?,
                None => Estimator::default_for(cfg.mode),
            };
            let values = values.unwrap_or_else(|| axis.default_values());
            let inputs = cfg.resolve_inputs()?;
            let points = report::run_sweep(&cfg, &inputs, axis, &values, target)?;
            let path = report::write_sweep(&cfg, axis, target, &points, &out)?;
            for p in &points {
                let e = &p.estimate;
                println!(
                    "{:<10} {axis}={:<8} GA {} ± {}",
                    p.portfolio,
                    p.axis_value,
                    pct(e.value),
                    pct(1.96 * e.std_error)
                );
            }
            eprintln!("wrote {}", path.display());
        }
        Command::CalibrateXi { run, out } => {
            let cfg = run.resolve()?;
            let inputs = cfg.resolve_inputs()?;
            let params = cfg.params;
            let targets = report::with_threads(cfg.threads, || {
                estimation::mtm_targets(&inputs.portfolios, &inputs.matrix, &inputs.curve, &params)
            })?;
            let fit = estimation::calibrate_xi(&targets, params.q)?;
            let base_mse = estimation::mse_at(&targets, params.xi, params.q)?;
            let mut csv: String = report::report_metadata(&cfg)
                .lines()
                .map(|l| format!("#! {l}\n"))
                .collect();
            csv.push_str(&format!(
                "# xi = {}, mse = {}, mse at xi {} = {}\n",
                fit.xi, fit.mse, params.xi, base_mse
            ));
            csv.push_str("portfolio,target,residual\n");
            for (t, (name, r)) in targets.iter().zip(&fit.residuals) {
                csv.push_str(&format!("{name},{},{}\n", 100.0 * t.target, 100.0 * r));
            }
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let path = out.join("xi_calibration.csv");
            report::write_atomic(&path, &csv)?;
            println!(
                "xi = {:.4}  (MSE {:.3e}; at xi = {}: {:.3e})",
                fit.xi, fit.mse, params.xi, base_mse
            );
            for (name, r) in &fit.residuals {
                println!("  {name:<10} residual {}", pct(*r));
            }
            eprintln!("wrote {}", path.display());
        }
        Command::EstimateRho {
            series,
            method,
            elgd,
            q,
        } => {
            let s = estimation::load_default_series(&series)?;
            let method: EstimationMethod = method.parse()?;
            let est = estimation::estimate_rho(&s, method, elgd, q)?;
            println!("method     {}", est.method);
            println!("rho        {:.6}", est.rho_hat);
            println!("pd         {:.6}", est.pd_hat);
            println!("objective  {}", est.diagnostics.objective);
            println!("iterations {}", est.diagnostics.iterations);
            println!("converged  {}", est.diagnostics.converged);
        }
        Command::PriceBond {
            run,
            rating,
            maturity,
            coupon,
            state,
        } => {
            let cfg = run.resolve()?;
            let tm: TransitionMatrix = cfg.load_matrix()?;
            let curve = cfg.load_curve()?;
            let grade = |s: &str| tm.scale().index_of(s).with_context(|| format!("unknown rating '{s}'"));
            let g = grade(&rating)?;
            let at = match &state {
                Some(s) => PriceAt::Horizon(grade(s)?),
                None => PriceAt::Today,
            };
            let p = &cfg.params;
            let spec = BondSpec::new(coupon.unwrap_or(cfg.coupon_default), p.accrual, maturity, p.horizon)?;
            let lgd = LgdSpec::deterministic(cfg.effective_elgd())?;
            let rho = irb::correlation(irb::grade_pd(&tm, g), p.pricing_rho_mode());
            let price = price_bond(&spec, g, at, &curve, &tm, &lgd, p.psi, rho)?;
            println!("{price}");
        }
        Command::Validate { run } => {
            let cfg = run.resolve()?;
            let inputs = cfg.resolve_inputs()?;
            for (name, p) in &inputs.portfolios {
                println!(
                    "{name:<10} {:>4} borrowers  exposure {:>12.2}  avg PD {}  avg maturity {:.2}",
                    p.len(),
                    p.total_exposure(),
                    pct(fixtures::weighted_average_pd(p, &inputs.matrix)),
                    p.average_maturity()
                );
            }
            println!("ok: mode {}, {} scenarios", cfg.mode, cfg.params.scenarios);
            if cfg.mode != RunMode::Actuarial {
                println!("curve: {:?}", cfg.curve);
            }
        }
        Command::Fixtures { out } => {
            let tm = TransitionMatrix::bundled_sovereign();
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for spec in fixtures::all_specs() {
                let path = out.join(format!("{}.csv", spec.name));
                report::write_atomic(&path, &fixtures::fixture_csv(&spec, &tm)?)?;
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<namerisk_core::Error>())
        .any(|e| e.is_numerical());
    if numerical {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

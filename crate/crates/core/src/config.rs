//! Flat `key = value` run configuration.
//!
//! Lines starting with `#` are comments, except `#! key = value` lines,
//! which carry the metadata of a written report so that the report itself
//! can be fed back as a config.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::params::{RhoMode, RiskParams};
use crate::portfolio::{load_portfolio, LoadOptions, Portfolio};
use crate::ratings::TransitionMatrix;
use crate::yieldcurve::{fit_nss, load_curve_observations, NssParams};

/// ELGD used when neither the file nor the config sets one.
pub const BASE_ELGD: f64 = 0.45;
/// ELGD default under preferred creditor treatment.
pub const PCT_ELGD: f64 = 0.10;
/// Risk-free rate of the flat curve used when no curve is configured.
pub const DEFAULT_FLAT_RATE: f64 = 0.04;
/// Fixed correlation used when `rho_mode = fixed` without `rho_fixed`.
pub const DEFAULT_FIXED_RHO: f64 = 0.35;

/// Which Monte Carlo estimators a report runs. The analytic columns are
/// always filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Actuarial,
    MtmDefault,
    MtmRatings,
    All,
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::Actuarial => "actuarial",
            RunMode::MtmDefault => "mtm-default",
            RunMode::MtmRatings => "mtm-ratings",
            RunMode::All => "all",
        })
    }
}

impl FromStr for RunMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "actuarial" => Ok(RunMode::Actuarial),
            "mtm-default" => Ok(RunMode::MtmDefault),
            "mtm-ratings" => Ok(RunMode::MtmRatings),
            "all" => Ok(RunMode::All),
            _ => Err(Error::config(
                "mode",
                format!("expected actuarial, mtm-default, mtm-ratings or all, got '{s}'"),
            )),
        }
    }
}

/// Whether loans keep their file maturities or are all set to one year.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaturityMode {
    Portfolio,
    OneYear,
}

impl fmt::Display for MaturityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaturityMode::Portfolio => "portfolio",
            MaturityMode::OneYear => "one-year",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CurveSource {
    Flat(f64),
    Nss(NssParams),
    /// `maturity_years,zero_rate` observations to fit.
    Observations(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: RiskParams,
    /// Correlation applied when `rho_mode = fixed`.
    pub rho_fixed: f64,
    /// Explicit run-level ELGD; `None` picks the base or PCT default.
    pub elgd: Option<f64>,
    pub coupon_default: f64,
    /// `None` is the bundled sovereign matrix.
    pub matrix_path: Option<PathBuf>,
    pub pct: bool,
    pub pct_matrix_path: Option<PathBuf>,
    pub curve: CurveSource,
    pub portfolio_paths: Vec<PathBuf>,
    pub mode: RunMode,
    pub maturity: MaturityMode,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: RiskParams::default(),
            rho_fixed: DEFAULT_FIXED_RHO,
            elgd: None,
            coupon_default: 0.01,
            matrix_path: None,
            pct: false,
            pct_matrix_path: None,
            curve: CurveSource::Flat(DEFAULT_FLAT_RATE),
            portfolio_paths: Vec::new(),
            mode: RunMode::Actuarial,
            maturity: MaturityMode::Portfolio,
            threads: None,
        }
    }
}

fn number(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::config(key, format!("expected a number, got '{v}'")))
}

fn integer<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.replace('_', "")
        .parse::<T>()
        .map_err(|_| Error::config(key, format!("expected a non-negative integer, got '{v}'")))
}

fn switch(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(key, format!("expected on or off, got '{v}'"))),
    }
}

fn resolve(base: &Path, v: &str) -> PathBuf {
    let p = PathBuf::from(v);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn fmt_rho(m: RhoMode) -> String {
    match m {
        RhoMode::Irb => "irb".into(),
        RhoMode::Fixed(v) => format!("{v}"),
    }
}

pub const KEYS: [&str; 24] = [
    "q",
    "scenarios",
    "seed",
    "nu",
    "xi",
    "psi",
    "elgd",
    "rho_mode",
    "rho_fixed",
    "pricing_rho",
    "ma_clamp",
    "horizon",
    "coupon_default",
    "accrual",
    "matrix_path",
    "pct",
    "pct_matrix_path",
    "curve_path",
    "flat_rate",
    "nss",
    "portfolio_paths",
    "mode",
    "maturity",
    "threads",
];

impl RunConfig {
    /// Sets one key. Relative paths are resolved against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let v = value.trim();
        let p = &mut self.params;
        match key {
            "q" => p.q = number(key, v)?,
            "scenarios" => p.scenarios = integer(key, v)?,
            "seed" => p.seed = integer(key, v)?,
            "nu" => p.nu = number(key, v)?,
            "xi" => p.xi = number(key, v)?,
            "psi" => p.psi = number(key, v)?,
            "elgd" => self.elgd = Some(number(key, v)?),
            "rho_mode" => {
                p.rho_mode = match v {
                    "irb" => RhoMode::Irb,
                    "fixed" => RhoMode::Fixed(self.rho_fixed),
                    _ => return Err(Error::config(key, format!("expected irb or fixed, got '{v}'"))),
                }
            }
            "rho_fixed" => {
                let r = number(key, v)?;
                if !(r > 0.0 && r < 1.0) {
                    return Err(Error::config(key, format!("{r} outside (0, 1)")));
                }
                if let RhoMode::Fixed(_) = p.rho_mode {
                    p.rho_mode = RhoMode::Fixed(r);
                }
                self.rho_fixed = r;
            }
            "pricing_rho" => {
                p.pricing_rho = match v {
                    "run" => None,
                    "irb" => Some(RhoMode::Irb),
                    _ => Some(RhoMode::Fixed(number(key, v)?)),
                }
            }
            "ma_clamp" => p.ma_clamp = switch(key, v)?,
            "horizon" => p.horizon = number(key, v)?,
            "coupon_default" => self.coupon_default = number(key, v)?,
            "accrual" => p.accrual = number(key, v)?,
            "matrix_path" => {
                self.matrix_path = match v {
                    "" | "bundled" => None,
                    _ => Some(resolve(base, v)),
                }
            }
            "pct" => self.pct = switch(key, v)?,
            "pct_matrix_path" => self.pct_matrix_path = Some(resolve(base, v)),
            "curve_path" => self.curve = CurveSource::Observations(resolve(base, v)),
            "flat_rate" => self.curve = CurveSource::Flat(number(key, v)?),
            "nss" => {
                let xs: Vec<f64> = v.split(',').map(|s| number(key, s.trim())).collect::<Result<_>>()?;
                if xs.len() != 6 {
                    return Err(Error::config(key, "expected beta0,beta1,beta2,beta3,tau1,tau2"));
                }
                let params = NssParams::new([xs[0], xs[1], xs[2], xs[3]], xs[4], xs[5])
                    .map_err(|e| Error::config(key, e.to_string()))?;
                self.curve = CurveSource::Nss(params);
            }
            "portfolio_paths" => {
                self.portfolio_paths = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| resolve(base, s))
                    .collect()
            }
            "mode" => self.mode = v.parse()?,
            "maturity" => {
                self.maturity = match v {
                    "portfolio" | "mean" => MaturityMode::Portfolio,
                    "one-year" | "1" => MaturityMode::OneYear,
                    _ => return Err(Error::config(key, format!("expected portfolio or one-year, got '{v}'"))),
                }
            }
            "threads" => {
                let n: usize = integer(key, v)?;
                self.threads = (n > 0).then_some(n);
            }
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }
}

/// Inputs resolved from a config: matrix, curve and named portfolios.
#[derive(Debug, Clone)]
pub struct RunInputs {
    pub matrix: TransitionMatrix,
    pub curve: NssParams,
    pub portfolios: Vec<(String, Portfolio)>,
}

impl RunConfig {
    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.trim().strip_prefix("#!") {
                Some(meta) => meta.trim(),
                None if raw.trim_start().starts_with('#') => continue,
                None => raw.trim(),
            };
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, format!("expected 'key = value', got '{line}'")))?;
            cfg.set(key.trim(), value, base)?;
        }
        Ok(cfg)
    }

    /// Reads a config file, or the metadata block of a written report.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        // A report CSV carries its config in `#!` lines; everything else in
        // it is data.
        if text.lines().any(|l| l.starts_with("#!")) {
            let meta: String = text
                .lines()
                .filter(|l| l.starts_with("#!"))
                .map(|l| format!("{l}\n"))
                .collect();
            return Self::parse(&meta, base);
        }
        Self::parse(&text, base)
    }

    pub fn effective_elgd(&self) -> f64 {
        self.elgd.unwrap_or(if self.pct { PCT_ELGD } else { BASE_ELGD })
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let e = self.effective_elgd();
        if !(0.0..=1.0).contains(&e) {
            return Err(Error::config("elgd", format!("{e} outside [0, 1]")));
        }
        if !(0.0..1.0).contains(&self.coupon_default) {
            return Err(Error::config("coupon_default", "must lie in [0, 1)"));
        }
        if self.params.nu >= 1.0 {
            return Err(Error::config("nu", "nu = 1 leaves the beta LGD undefined"));
        }
        Ok(())
    }

    /// Every key with its effective value, paths absolute. Parsing the
    /// output reproduces this config.
    pub fn to_config_string(&self) -> String {
        let p = &self.params;
        let path = |x: &Path| {
            std::path::absolute(x)
                .unwrap_or_else(|_| x.to_path_buf())
                .display()
                .to_string()
        };
        let mut lines = vec![
            ("q", format!("{}", p.q)),
            ("scenarios", p.scenarios.to_string()),
            ("seed", p.seed.to_string()),
            ("nu", format!("{}", p.nu)),
            ("xi", format!("{}", p.xi)),
            ("psi", format!("{}", p.psi)),
            ("elgd", format!("{}", self.effective_elgd())),
            ("rho_fixed", format!("{}", self.rho_fixed)),
            (
                "rho_mode",
                match p.rho_mode {
                    RhoMode::Irb => "irb".into(),
                    RhoMode::Fixed(_) => "fixed".into(),
                },
            ),
            ("pricing_rho", p.pricing_rho.map_or("run".into(), fmt_rho)),
            ("ma_clamp", if p.ma_clamp { "on" } else { "off" }.into()),
            ("horizon", format!("{}", p.horizon)),
            ("coupon_default", format!("{}", self.coupon_default)),
            ("accrual", format!("{}", p.accrual)),
            (
                "matrix_path",
                self.matrix_path.as_deref().map_or("bundled".into(), path),
            ),
            ("pct", if self.pct { "on" } else { "off" }.into()),
        ];
        if let Some(x) = &self.pct_matrix_path {
            lines.push(("pct_matrix_path", path(x)));
        }
        match &self.curve {
            CurveSource::Flat(r) => lines.push(("flat_rate", format!("{r}"))),
            CurveSource::Nss(c) => lines.push((
                "nss",
                format!("{},{},{},{},{},{}", c.beta0, c.beta1, c.beta2, c.beta3, c.tau1, c.tau2),
            )),
            CurveSource::Observations(x) => lines.push(("curve_path", path(x))),
        }
        lines.push((
            "portfolio_paths",
            self.portfolio_paths
                .iter()
                .map(|x| path(x))
                .collect::<Vec<_>>()
                .join(", "),
        ));
        lines.push(("mode", self.mode.to_string()));
        lines.push(("maturity", self.maturity.to_string()));
        if let Some(t) = self.threads {
            lines.push(("threads", t.to_string()));
        }
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Loads the transition matrix the run uses; errors name the key.
    pub fn load_matrix(&self) -> Result<TransitionMatrix> {
        let (key, path) = if self.pct {
            match &self.pct_matrix_path {
                Some(p) => ("pct_matrix_path", Some(p)),
                None => {
                    return Err(Error::config(
                        "pct_matrix_path",
                        "pct = on needs the PCT-adjusted transition matrix file",
                    ))
                }
            }
        } else {
            ("matrix_path", self.matrix_path.as_ref())
        };
        match path {
            None => Ok(TransitionMatrix::bundled_sovereign()),
            Some(p) => TransitionMatrix::from_path(p)
                .map_err(|e| Error::config(key, format!("cannot load '{}': {e}", p.display()))),
        }
    }

    pub fn load_curve(&self) -> Result<NssParams> {
        match &self.curve {
            CurveSource::Flat(r) => Ok(NssParams::flat(*r)),
            CurveSource::Nss(c) => Ok(*c),
            CurveSource::Observations(p) => {
                let obs = load_curve_observations(p)
                    .map_err(|e| Error::config("curve_path", format!("cannot load '{}': {e}", p.display())))?;
                fit_nss(&obs)
                    .map(|f| f.params)
                    .map_err(|e| Error::config("curve_path", format!("cannot fit '{}': {e}", p.display())))
            }
        }
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            default_elgd: self.effective_elgd(),
            nu: self.params.nu,
            default_coupon: self.coupon_default,
            default_maturity: 1.0,
        }
    }

    /// Applies the run's maturity mode to a loaded portfolio.
    pub fn prepare(&self, p: &Portfolio) -> Result<Portfolio> {
        match self.maturity {
            MaturityMode::Portfolio => Ok(p.clone()),
            MaturityMode::OneYear => p.with_maturity(1.0),
        }
    }

    pub fn resolve_inputs(&self) -> Result<RunInputs> {
        self.validate()?;
        let matrix = self.load_matrix()?;
        let curve = self.load_curve()?;
        if self.portfolio_paths.is_empty() {
            return Err(Error::config("portfolio_paths", "no portfolio files given"));
        }
        let options = self.load_options();
        let portfolios = self
            .portfolio_paths
            .iter()
            .map(|path| {
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string());
                let p = load_portfolio(path, matrix.scale(), &options).map_err(|e| match e {
                    Error::Io { .. } => {
                        Error::config("portfolio_paths", format!("cannot load '{}': {e}", path.display()))
                    }
                    other => Error::invalid(format!("portfolio {name} ({}): {other}", path.display())),
                })?;
                Ok((name, self.prepare(&p)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RunInputs {
            matrix,
            curve,
            portfolios,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Path::new("/base"))
    }

    #[test]
    fn defaults_and_overrides() {
        let c =
            parse("# comment\nq = 0.99\nscenarios = 100_000\nnu=0.25\n\nportfolio_paths = a.csv, /x/b.csv\n").unwrap();
        assert_eq!(c.params.q, 0.99);
        assert_eq!(c.params.scenarios, 100_000);
        assert_eq!(c.params.nu, 0.25);
        assert_eq!(
            c.portfolio_paths,
            vec![PathBuf::from("/base/a.csv"), PathBuf::from("/x/b.csv")]
        );
        assert_eq!(c.effective_elgd(), 0.45);
        assert_eq!(c.mode, RunMode::Actuarial);
    }

    #[test]
    fn rho_keys_in_any_order() {
        let a = parse("rho_fixed = 0.2\nrho_mode = fixed\n").unwrap();
        let b = parse("rho_mode = fixed\nrho_fixed = 0.2\n").unwrap();
        assert_eq!(a.params.rho_mode, RhoMode::Fixed(0.2));
        assert_eq!(b.params.rho_mode, RhoMode::Fixed(0.2));
        assert_eq!(parse("rho_mode = fixed").unwrap().params.rho_mode, RhoMode::Fixed(0.35));
        assert_eq!(parse("rho_fixed = 0.2").unwrap().params.rho_mode, RhoMode::Irb);
    }

    #[test]
    fn pct_switches_defaults() {
        let c = parse("pct = on").unwrap();
        assert_eq!(c.effective_elgd(), 0.10);
        let err = c.load_matrix().unwrap_err();
        assert!(err.to_string().contains("pct_matrix_path"), "{err}");
        assert_eq!(parse("pct = on\nelgd = 0.2").unwrap().effective_elgd(), 0.2);
    }

    #[test]
    fn missing_matrix_names_key() {
        let c = parse("matrix_path = /does/not/exist.csv").unwrap();
        let err = c.load_matrix().unwrap_err();
        assert!(err.to_string().contains("matrix_path"), "{err}");
    }

    #[test]
    fn bad_values_name_key() {
        for (text, key) in [
            ("q = abc", "q"),
            ("mode = fast", "mode"),
            ("ma_clamp = maybe", "ma_clamp"),
            ("bogus = 1", "bogus"),
        ] {
            let err = parse(text).unwrap_err();
            assert!(err.to_string().contains(key), "{err}");
        }
        assert!(matches!(parse("just words").unwrap_err(), Error::Parse { line: 1, .. }));
    }

    #[test]
    fn serialization_round_trips() {
        let c = parse(
            "q = 0.995\nseed = 42\nnu = 0.25\nxi = 0.063\nrho_mode = fixed\nrho_fixed = 0.24\npricing_rho = irb\n\
             ma_clamp = off\nnss = 0.04,-0.01,0.005,0.002,1.5,10\nportfolio_paths = p.csv\nmode = all\nmaturity = one-year\nthreads = 4\n",
        )
        .unwrap();
        let back = parse(&c.to_config_string()).unwrap();
        assert_eq!(back.params, c.params);
        assert_eq!(back.curve, c.curve);
        assert_eq!(back.portfolio_paths, c.portfolio_paths);
        assert_eq!(back.mode, c.mode);
        assert_eq!(back.maturity, c.maturity);
        assert_eq!(back.threads, c.threads);
        assert_eq!(back.effective_elgd(), c.effective_elgd());
    }

    #[test]
    fn metadata_lines_are_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        std::fs::write(&path, "#! seed = 7\n#! nu = 0.25\n# plain comment\nportfolio,ga\nA,1\n").unwrap();
        let c = RunConfig::load(&path).unwrap();
        assert_eq!(c.params.seed, 7);
        assert_eq!(c.params.nu, 0.25);
    }
}

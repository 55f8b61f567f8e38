//! Asset-correlation estimators on annual default-rate series, and the
//! cross-portfolio calibration of the CreditRisk⁺ precision ξ.

use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::analytic::{delta_factor, ga_approx_with_delta};
use crate::error::{Error, Result};
use crate::irb::{conditional_pd, portfolio_irb};
use crate::mc::{ga_mc_mtm, scenario_rng};
use crate::mtm::{MtmMode, MtmModel};
use crate::normal;
use crate::optim::{bisect, golden_section, nelder_mead, NelderMeadResult};
use crate::params::RiskParams;
use crate::portfolio::Portfolio;
use crate::quadrature::{adaptive_simpson, GaussHermite};
use crate::ratings::TransitionMatrix;
use crate::yieldcurve::NssParams;

/// Minimum number of years accepted by the estimators.
pub const MIN_YEARS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CohortYear {
    pub year: i32,
    pub cohort_size: u64,
    pub defaults: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefaultRateSeries {
    years: Vec<CohortYear>,
}

impl DefaultRateSeries {
    pub fn new(years: Vec<CohortYear>) -> Result<Self> {
        if years.len() < MIN_YEARS {
            return Err(Error::invalid(format!(
                "default-rate series needs at least {MIN_YEARS} years, got {}",
                years.len()
            )));
        }
        for y in &years {
            if y.cohort_size == 0 || y.defaults > y.cohort_size {
                return Err(Error::invalid(format!(
                    "year {}: need 0 <= defaults <= cohort_size and cohort_size > 0",
                    y.year
                )));
            }
        }
        Ok(DefaultRateSeries { years })
    }

    pub fn years(&self) -> &[CohortYear] {
        &self.years
    }

    pub fn rates(&self) -> Vec<f64> {
        self.years
            .iter()
            .map(|y| y.defaults as f64 / y.cohort_size as f64)
            .collect()
    }

    /// Same rates with every cohort and default count multiplied by `k`.
    pub fn scaled(&self, k: u64) -> Self {
        DefaultRateSeries {
            years: self
                .years
                .iter()
                .map(|y| CohortYear {
                    cohort_size: y.cohort_size * k,
                    defaults: y.defaults * k,
                    ..*y
                })
                .collect(),
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("year,cohort_size,defaults\n");
        for y in &self.years {
            out.push_str(&format!("{},{},{}\n", y.year, y.cohort_size, y.defaults));
        }
        out
    }
}

/// Reads a `year,cohort_size,defaults` file.
pub fn load_default_series(path: &Path) -> Result<DefaultRateSeries> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_default_series(&text)
}

pub fn parse_default_series(text: &str) -> Result<DefaultRateSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::parse(1, e.to_string()))?;
    let expected = ["year", "cohort_size", "defaults"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::parse(1, "header must be 'year,cohort_size,defaults'"));
    }
    let mut years = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(0, e.to_string()))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |i: usize| Error::parse(line, format!("bad integer '{}'", &record[i]));
        years.push(CohortYear {
            year: record[0].parse().map_err(|_| bad(0))?,
            cohort_size: record[1].parse().map_err(|_| bad(1))?,
            defaults: record[2].parse().map_err(|_| bad(2))?,
        });
    }
    DefaultRateSeries::new(years)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimationMethod {
    Mle,
    Mom,
    BetaMatch,
}

impl fmt::Display for EstimationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimationMethod::Mle => "mle",
            EstimationMethod::Mom => "mom",
            EstimationMethod::BetaMatch => "beta-match",
        })
    }
}

impl std::str::FromStr for EstimationMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mle" => Ok(EstimationMethod::Mle),
            "mom" => Ok(EstimationMethod::Mom),
            "beta-match" | "beta" => Ok(EstimationMethod::BetaMatch),
            _ => Err(Error::invalid(format!("unknown estimation method '{s}'"))),
        }
    }
}

/// `objective` is the maximised log-likelihood for MLE and the absolute
/// matching residual at the root for the other two methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEstimate {
    pub rho_hat: f64,
    pub method: EstimationMethod,
    pub pd_hat: f64,
    pub diagnostics: Diagnostics,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn expit(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn ln_choose(n: u64, k: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

const LN_TINY: f64 = -745.0;

fn ln_prob(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        LN_TINY
    }
}

/// Log-likelihood of the series under the single-factor binomial mixture,
/// with the factor integrated out by Gauss–Hermite quadrature.
pub fn log_likelihood(series: &DefaultRateSeries, pd: f64, rho: f64) -> f64 {
    let gh = GaussHermite::standard();
    let c = normal::inv_cdf(pd);
    let (sr, si) = (rho.sqrt(), (1.0 - rho).sqrt());
    // Conditional default and survival log-probabilities per node; a bad
    // factor draw (x < 0 here) raises the default probability.
    let nodes: Vec<(f64, f64, f64)> = gh
        .nodes
        .iter()
        .zip(&gh.weights)
        .map(|(&x, &w)| {
            let z = (c - sr * x) / si;
            (w.ln(), ln_prob(normal::cdf(z)), ln_prob(normal::cdf(-z)))
        })
        .collect();
    series
        .years
        .iter()
        .map(|y| {
            let (n, k) = (y.cohort_size, y.defaults);
            let terms: Vec<f64> = nodes
                .iter()
                .map(|&(lw, lp, lq)| lw + k as f64 * lp + (n - k) as f64 * lq)
                .collect();
            let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            ln_choose(n, k) + top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
        })
        .sum()
}

/// Joint maximum-likelihood estimate of `(PD, ρ)`.
pub fn estimate_rho_mle(series: &DefaultRateSeries) -> Result<CorrelationEstimate> {
    if !series
        .years
        .iter()
        .any(|y| y.defaults > 0 && y.defaults < y.cohort_size)
    {
        return Err(Error::Degenerate(
            "every year has either no defaults or only defaults; the likelihood is flat in rho".into(),
        ));
    }
    let pd0 = mean(&series.rates()).clamp(1e-4, 0.5);
    let objective = |v: &[f64]| {
        let (pd, rho) = (expit(v[0]), expit(v[1]));
        if !(pd > 1e-9 && pd < 1.0 - 1e-9 && rho > 1e-9 && rho < 0.999) {
            return f64::INFINITY;
        }
        let ll = log_likelihood(series, pd, rho);
        if ll.is_finite() {
            -ll
        } else {
            f64::INFINITY
        }
    };
    let mut best = nelder_mead(objective, &[logit(pd0), logit(0.2)], 0.5, 1e-12, 2000);
    // One restart from the optimum guards against a collapsed simplex.
    let again = nelder_mead(objective, &best.x, 0.25, 1e-12, 2000);
    if again.value <= best.value {
        best = NelderMeadResult {
            iterations: best.iterations + again.iterations,
            ..again
        };
    }
    if !best.value.is_finite() {
        return Err(Error::NonConvergence {
            what: "MLE for rho".into(),
            detail: "likelihood not finite at the optimum".into(),
        });
    }
    Ok(CorrelationEstimate {
        rho_hat: expit(best.x[1]),
        method: EstimationMethod::Mle,
        pd_hat: expit(best.x[0]),
        diagnostics: Diagnostics {
            objective: -best.value,
            iterations: best.iterations,
            converged: best.converged,
        },
    })
}

/// Bivariate normal `Φ₂(c, c; ρ)` through its one-factor representation
/// `∫ φ(x) Φ((c - √ρ x)/√(1-ρ))² dx`.
pub fn bivariate_normal_equal(c: f64, rho: f64) -> f64 {
    if rho == 0.0 {
        let p = normal::cdf(c);
        return p * p;
    }
    let (sr, si) = (rho.sqrt(), (1.0 - rho).sqrt());
    let f = |x: f64| {
        let p = normal::cdf((c - sr * x) / si);
        normal::pdf(x) * p * p
    };
    // Split at the peak region so the adaptive rule sees the mass.
    adaptive_simpson(&f, -10.0, 0.0, 5e-12) + adaptive_simpson(&f, 0.0, 10.0, 5e-12)
}

/// Method of moments on the binomially adjusted variance of default rates.
pub fn estimate_rho_mom(series: &DefaultRateSeries) -> Result<CorrelationEstimate> {
    let rates = series.rates();
    let pd = mean(&rates);
    let raw = sample_variance(&rates);
    if !(raw > 0.0) || pd <= 0.0 || pd >= 1.0 {
        return Err(Error::Degenerate("default rates have zero variance".into()));
    }
    let noise = series
        .years
        .iter()
        .map(|y| pd * (1.0 - pd) / y.cohort_size as f64)
        .sum::<f64>()
        / series.years.len() as f64;
    let systematic = raw - noise;
    if systematic <= 0.0 {
        return Err(Error::Degenerate(format!(
            "rate variance {raw:.3e} is below the binomial floor {noise:.3e}"
        )));
    }
    let c = normal::inv_cdf(pd);
    let target = pd * pd + systematic;
    let mut evals = 0;
    let rho = bisect(
        |r| {
            evals += 1;
            bivariate_normal_equal(c, r) - target
        },
        1e-4,
        0.99,
        1e-10,
        "method-of-moments rho",
    )?;
    Ok(CorrelationEstimate {
        rho_hat: rho,
        method: EstimationMethod::Mom,
        pd_hat: pd,
        diagnostics: Diagnostics {
            objective: (bivariate_normal_equal(c, rho) - target).abs(),
            iterations: evals,
            converged: true,
        },
    })
}

/// Correlation at which the IRB unexpected loss `elgd (π(q) - PD)` equals
/// `ul`.
pub fn rho_for_unexpected_loss(pd: f64, elgd: f64, ul: f64, q: f64) -> Result<f64> {
    if !(ul > 0.0) {
        return Err(Error::Degenerate(format!(
            "empirical unexpected loss {ul:.3e} is not positive"
        )));
    }
    bisect(
        |r| elgd * (conditional_pd(pd, r, q) - pd) - ul,
        1e-8,
        1.0 - 1e-8,
        1e-14,
        "beta-match rho",
    )
}

/// Beta-match estimate from the first two moments of the default rate.
pub fn beta_match_from_moments(pd: f64, rate_variance: f64, elgd: f64, q: f64) -> Result<CorrelationEstimate> {
    if !(elgd > 0.0 && elgd <= 1.0) {
        return Err(Error::invalid("beta matching needs 0 < elgd <= 1"));
    }
    let m = pd * elgd;
    let v = rate_variance * elgd * elgd;
    if !(m > 0.0 && v > 0.0) {
        return Err(Error::Degenerate("loss rates need positive mean and variance".into()));
    }
    let common = m * (1.0 - m) / v - 1.0;
    if !(common > 0.0) {
        return Err(Error::Degenerate("loss-rate variance too large for a beta fit".into()));
    }
    let beta =
        Beta::new(m * common, (1.0 - m) * common).map_err(|e| Error::Degenerate(format!("beta fit failed: {e}")))?;
    let ul = beta.inverse_cdf(q) - m;
    let rho = rho_for_unexpected_loss(pd, elgd, ul, q)?;
    Ok(CorrelationEstimate {
        rho_hat: rho,
        method: EstimationMethod::BetaMatch,
        pd_hat: pd,
        diagnostics: Diagnostics {
            objective: (elgd * (conditional_pd(pd, rho, q) - pd) - ul).abs(),
            iterations: 0,
            converged: true,
        },
    })
}

/// Fits a beta law to the loss rates `rate · elgd` and matches its
/// unexpected loss at `q` with the IRB one.
pub fn estimate_rho_beta_match(series: &DefaultRateSeries, elgd: f64, q: f64) -> Result<CorrelationEstimate> {
    let rates = series.rates();
    beta_match_from_moments(mean(&rates), sample_variance(&rates), elgd, q)
}

pub fn estimate_rho(
    series: &DefaultRateSeries,
    method: EstimationMethod,
    elgd: f64,
    q: f64,
) -> Result<CorrelationEstimate> {
    match method {
        EstimationMethod::Mle => estimate_rho_mle(series),
        EstimationMethod::Mom => estimate_rho_mom(series),
        EstimationMethod::BetaMatch => estimate_rho_beta_match(series, elgd, q),
    }
}

/// Simulates `years` of defaults among `cohort` names, drawing every latent
/// asset return in the single-factor model.
pub fn simulate_default_series(pd: f64, rho: f64, years: usize, cohort: u64, seed: u64) -> Result<DefaultRateSeries> {
    if !(pd > 0.0 && pd < 1.0 && (0.0..1.0).contains(&rho)) {
        return Err(Error::invalid("simulation needs 0 < pd < 1 and 0 <= rho < 1"));
    }
    let c = normal::inv_cdf(pd);
    let (sr, si) = (rho.sqrt(), (1.0 - rho).sqrt());
    let out = (0..years)
        .map(|t| {
            let mut rng = scenario_rng(seed, t as u64);
            let x: f64 = rng.sample(StandardNormal);
            let defaults = (0..cohort)
                .filter(|_| {
                    let e: f64 = rng.sample(StandardNormal);
                    sr * x + si * e <= c
                })
                .count() as u64;
            CohortYear {
                year: 1900 + t as i32,
                cohort_size: cohort,
                defaults,
            }
        })
        .collect();
    DefaultRateSeries::new(out)
}

/// Lower and upper end of the ξ search.
pub const XI_BRACKET: (f64, f64) = (0.005, 2.0);

/// One portfolio's calibration data. The analytic GA is affine in `δ`, so
/// `ga(ξ) = intercept + slope · δ(ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct XiTarget {
    pub name: String,
    pub intercept: f64,
    pub slope: f64,
    pub target: f64,
}

impl XiTarget {
    pub fn new(name: &str, p: &Portfolio, tm: &TransitionMatrix, params: &RiskParams, target: f64) -> Result<Self> {
        let irb = portfolio_irb(p, tm, params);
        let at0 = ga_approx_with_delta(p, &irb, 0.0)?.ga_full;
        let at1 = ga_approx_with_delta(p, &irb, 1.0)?.ga_full;
        Ok(XiTarget {
            name: name.to_string(),
            intercept: at0,
            slope: at1 - at0,
            target,
        })
    }

    pub fn approx_at_delta(&self, delta: f64) -> f64 {
        self.intercept + self.slope * delta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct XiCalibration {
    pub xi: f64,
    pub mse: f64,
    /// `(name, approx - target)` at the optimum.
    pub residuals: Vec<(String, f64)>,
}

pub fn mse_at(targets: &[XiTarget], xi: f64, q: f64) -> Result<f64> {
    let delta = delta_factor(xi, q)?;
    Ok(targets
        .iter()
        .map(|t| (t.approx_at_delta(delta) - t.target).powi(2))
        .sum::<f64>()
        / targets.len() as f64)
}

const XI_GRID: usize = 241;

/// Minimises the mean squared gap between analytic and target GAs over
/// `ξ ∈ [0.005, 2]`: a log-spaced scan, then golden section on `ln ξ` around
/// the best grid point.
pub fn calibrate_xi(targets: &[XiTarget], q: f64) -> Result<XiCalibration> {
    if targets.is_empty() {
        return Err(Error::invalid("xi calibration needs at least one portfolio"));
    }
    if let Some(t) = targets
        .iter()
        .find(|t| !(t.intercept.is_finite() && t.slope.is_finite() && t.target.is_finite()))
    {
        return Err(Error::Degenerate(format!("non-finite GA for portfolio {}", t.name)));
    }
    let (lo, hi) = (XI_BRACKET.0.ln(), XI_BRACKET.1.ln());
    let step = (hi - lo) / (XI_GRID - 1) as f64;
    let grid: Vec<(f64, f64)> = (0..XI_GRID)
        .map(|i| {
            let l = lo + step * i as f64;
            mse_at(targets, l.exp(), q).map(|m| (l, m))
        })
        .collect::<Result<_>>()?;
    let best = (0..XI_GRID)
        .min_by(|&a, &b| grid[a].1.total_cmp(&grid[b].1))
        .unwrap_or(0);
    let a = grid[best.saturating_sub(1)].0;
    let b = grid[(best + 1).min(XI_GRID - 1)].0;
    let (l_star, _) = golden_section(|l| mse_at(targets, l.exp(), q).unwrap_or(f64::INFINITY), a, b, 1e-12);
    let xi = l_star.exp();
    let delta = delta_factor(xi, q)?;
    Ok(XiCalibration {
        xi,
        mse: mse_at(targets, xi, q)?,
        residuals: targets
            .iter()
            .map(|t| (t.name.clone(), t.approx_at_delta(delta) - t.target))
            .collect(),
    })
}

/// Builds calibration targets from the exact ratings-based MtM GA, one fixed
/// seed per portfolio, evaluating portfolios in parallel.
pub fn mtm_targets(
    portfolios: &[(String, Portfolio)],
    tm: &TransitionMatrix,
    curve: &NssParams,
    params: &RiskParams,
) -> Result<Vec<XiTarget>> {
    portfolios
        .par_iter()
        .map(|(name, p)| {
            let model = MtmModel::build(p, tm, curve, params, MtmMode::RatingsBased)?;
            let exact = ga_mc_mtm(&model, params)?;
            XiTarget::new(name, p, tm, params, exact.value)
        })
        .collect()
}

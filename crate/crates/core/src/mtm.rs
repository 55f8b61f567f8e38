//! Rating-migration (mark-to-market) machinery: bond prices per rating
//! state, conditional state probabilities and return moments, and the
//! second-order approximate granularity adjustment.
//!
//! Returns are `R_n = P_T(s) / P_0`; the portfolio loss rate is
//! `e^{-rT} (E[R] - R)`. Bad factor outcomes are negative `x`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::irb::{correlation, floor_pd, grade_pd};
use crate::normal;
use crate::params::RiskParams;
use crate::portfolio::{LgdSpec, Portfolio};
use crate::quadrature::GaussHermite;
use crate::ratings::{risk_neutral_pd, thresholds, PdTermStructure, ThresholdTable, TransitionMatrix};
use crate::sum::compensated_sum;
use crate::yieldcurve::NssParams;

/// Dates closer than this are treated as equal.
const DATE_EPS: f64 = 1e-9;

/// Finite-difference step in factor units.
pub const FD_STEP: f64 = 1e-3;

/// Relative gap between the `h` and `h/2` derivative estimates above which
/// the approximation is flagged.
pub const RICHARDSON_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtmMode {
    /// Two states per borrower: default or its current grade.
    DefaultOnly,
    /// Full migration to every grade of the scale.
    RatingsBased,
}

impl fmt::Display for MtmMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MtmMode::DefaultOnly => "default-only",
            MtmMode::RatingsBased => "ratings-based",
        })
    }
}

impl FromStr for MtmMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default-only" | "default" => Ok(MtmMode::DefaultOnly),
            "ratings-based" | "ratings" => Ok(MtmMode::RatingsBased),
            other => Err(Error::invalid(format!("unknown MtM mode '{other}'"))),
        }
    }
}

/// Unit-face coupon bond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BondSpec {
    pub coupon: f64,
    pub accrual: f64,
    pub maturity: f64,
    pub horizon: f64,
}

impl BondSpec {
    /// A bond maturing exactly at the horizon is accepted: it redeems at
    /// `T` in every surviving state.
    pub fn new(coupon: f64, accrual: f64, maturity: f64, horizon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&coupon) {
            return Err(Error::invalid(format!("coupon {coupon} outside [0, 1)")));
        }
        if !(accrual > 0.0 && accrual <= 1.0) {
            return Err(Error::invalid(format!("accrual {accrual} outside (0, 1]")));
        }
        if !(horizon > 0.0) {
            return Err(Error::invalid("horizon must be positive"));
        }
        if !(maturity >= horizon - DATE_EPS) {
            return Err(Error::invalid(format!(
                "maturity {maturity} before the horizon {horizon}"
            )));
        }
        Ok(BondSpec {
            coupon,
            accrual,
            maturity,
            horizon,
        })
    }

    /// Payment dates in `(0, τ]`, ascending, spaced by the accrual period
    /// backwards from maturity (a short first period if needed).
    pub fn schedule(&self) -> Vec<f64> {
        let mut dates = Vec::new();
        let mut k = 0usize;
        loop {
            let d = self.maturity - k as f64 * self.accrual;
            if d <= DATE_EPS {
                break;
            }
            dates.push(d);
            k += 1;
        }
        dates.reverse();
        dates
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceAt {
    Today,
    /// At the horizon, having migrated to the given state index.
    Horizon(usize),
}

/// Bond prices today and at the horizon per state.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePriceTable {
    pub p0: f64,
    /// `p_t[s]` for `s = 0..=S`.
    pub p_t: Vec<f64>,
}

/// Risk-neutral expected discounted cashflow pricer.
#[derive(Debug, Clone)]
pub struct Pricer<'a> {
    pub curve: &'a NssParams,
    pub term: &'a PdTermStructure,
    pub psi: f64,
}

impl Pricer<'_> {
    /// Risk-neutral survival to `t` years for grade `g`.
    pub fn survival(&self, g: usize, rho: f64, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(1.0);
        }
        let p = floor_pd(self.term.pd(g, t));
        Ok(1.0 - risk_neutral_pd(p, rho, t, self.psi)?)
    }

    pub fn price(&self, spec: &BondSpec, g: usize, at: PriceAt, lgd: &LgdSpec, rho: f64) -> Result<f64> {
        let recovery = 1.0 - lgd.elgd;
        let (start, grade) = match at {
            PriceAt::Today => (0.0, g),
            PriceAt::Horizon(0) => return Ok(recovery),
            PriceAt::Horizon(s) => (spec.horizon, s),
        };
        let dates: Vec<f64> = spec.schedule().into_iter().filter(|&u| u > start + DATE_EPS).collect();
        if dates.is_empty() {
            if start == 0.0 {
                return Err(Error::invalid("bond has no cashflows"));
            }
            // Redeemed at the horizon together with the final coupon.
            return Ok(1.0 + spec.coupon * spec.accrual);
        }
        let df0 = self.curve.discount_factor(start);
        let cd = spec.coupon * spec.accrual;
        let mut prev_q = 1.0;
        let mut terms = Vec::with_capacity(2 * dates.len() + 1);
        for &u in &dates {
            let df = self.curve.discount_factor(u) / df0;
            let q = self.survival(grade, rho, u - start)?;
            terms.push(cd * df * q);
            terms.push(recovery * df * (prev_q - q));
            prev_q = q;
        }
        let last = *dates.last().unwrap_or(&start);
        terms.push(self.curve.discount_factor(last) / df0 * prev_q);
        Ok(compensated_sum(terms))
    }

    pub fn state_table(
        &self,
        spec: &BondSpec,
        g: usize,
        lgd: &LgdSpec,
        rho: f64,
        n_states: usize,
    ) -> Result<StatePriceTable> {
        let p0 = self.price(spec, g, PriceAt::Today, lgd, rho)?;
        let p_t = (0..n_states)
            .map(|s| self.price(spec, g, PriceAt::Horizon(s), lgd, rho))
            .collect::<Result<Vec<f64>>>()?;
        Ok(StatePriceTable { p0, p_t })
    }
}

/// Prices a bond of grade `g` against the one-year matrix `tm`.
#[allow(clippy::too_many_arguments)]
pub fn price_bond(
    spec: &BondSpec,
    g: usize,
    at: PriceAt,
    curve: &NssParams,
    tm: &TransitionMatrix,
    lgd: &LgdSpec,
    psi: f64,
    rho: f64,
) -> Result<f64> {
    let term = PdTermStructure::new(tm, spec.maturity.ceil() as usize + 1);
    Pricer {
        curve,
        term: &term,
        psi,
    }
    .price(spec, g, at, lgd, rho)
}

/// `π_s(x)` for ascending finite cutoffs (states `0..=cuts.len()`).
pub fn state_probabilities_from_cuts(cuts: &[f64], rho: f64, x: f64) -> Vec<f64> {
    let shift = x * rho.sqrt();
    let scale = (1.0 - rho).sqrt();
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut prev = 0.0;
    for &c in cuts {
        let cur = normal::cdf((c - shift) / scale);
        out.push((cur - prev).max(0.0));
        prev = cur;
    }
    out.push((1.0 - prev).max(0.0));
    out
}

/// Conditional migration probabilities of a grade-`g` borrower given `X = x`.
pub fn state_probabilities(g: usize, rho: f64, x: f64, table: &ThresholdTable) -> Vec<f64> {
    state_probabilities_from_cuts(table.cuts(g), rho, x)
}

/// One borrower's reachable states, as used by both the moments and the
/// simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct MtmBorrower {
    pub rho: f64,
    /// Ascending latent-return cutoffs between consecutive reachable states.
    pub cuts: Vec<f64>,
    /// Return `P_T(s) / P_0` per reachable state; state 0 is default.
    pub returns: Vec<f64>,
    /// Variance of the default-state return from a random LGD.
    pub default_return_variance: f64,
    pub prices: StatePriceTable,
    pub lgd: LgdSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMoments {
    pub mu_n: Vec<f64>,
    pub mu: f64,
    /// Conditional variance of the discounted portfolio loss rate.
    pub var: f64,
}

/// Precomputed MtM inputs for one portfolio.
#[derive(Debug, Clone)]
pub struct MtmModel {
    pub mode: MtmMode,
    pub shares: Vec<f64>,
    pub borrowers: Vec<MtmBorrower>,
    /// `e^{-rT}` with `r` the zero rate at the horizon.
    pub discount: f64,
}

impl MtmModel {
    pub fn build(
        p: &Portfolio,
        tm: &TransitionMatrix,
        curve: &NssParams,
        params: &RiskParams,
        mode: MtmMode,
    ) -> Result<Self> {
        params.validate()?;
        let max_m = p.positions().iter().map(|x| x.maturity).fold(params.horizon, f64::max);
        let term = PdTermStructure::new(tm, max_m.ceil() as usize + 1);
        let pricer = Pricer {
            curve,
            term: &term,
            psi: params.psi,
        };
        let table = thresholds(tm);
        let n_states = tm.scale().len();
        let borrowers = p
            .positions()
            .iter()
            .map(|pos| {
                let pd = grade_pd(tm, pos.rating);
                let rho = correlation(pd, params.rho_mode);
                let pricing_rho = correlation(pd, params.pricing_rho_mode());
                let spec = BondSpec::new(pos.coupon, params.accrual, pos.maturity, params.horizon)
                    .map_err(|e| Error::invalid(format!("borrower {}: {e}", pos.borrower_id)))?;
                let prices = pricer
                    .state_table(&spec, pos.rating, &pos.lgd, pricing_rho, n_states)
                    .map_err(|e| Error::invalid(format!("borrower {}: {e}", pos.borrower_id)))?;
                let (cuts, returns) = match mode {
                    MtmMode::RatingsBased => (
                        table.cuts(pos.rating).to_vec(),
                        prices.p_t.iter().map(|v| v / prices.p0).collect(),
                    ),
                    MtmMode::DefaultOnly => (
                        vec![normal::inv_cdf_clamped(
                            tm.default_prob(pos.rating),
                            crate::ratings::THRESHOLD_EPS,
                        )],
                        vec![prices.p_t[0] / prices.p0, prices.p_t[pos.rating] / prices.p0],
                    ),
                };
                Ok(MtmBorrower {
                    rho,
                    cuts,
                    returns,
                    default_return_variance: pos.lgd.variance() / (prices.p0 * prices.p0),
                    prices,
                    lgd: pos.lgd,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let r = curve.zero_rate(params.horizon)?;
        Ok(MtmModel {
            mode,
            shares: p.exposure_shares(),
            borrowers,
            discount: (-r * params.horizon).exp(),
        })
    }

    pub fn conditional_moments(&self, x: f64) -> ConditionalMoments {
        let mut mu_n = Vec::with_capacity(self.borrowers.len());
        let mut var_terms = Vec::with_capacity(self.borrowers.len());
        for (b, a) in self.borrowers.iter().zip(&self.shares) {
            let probs = state_probabilities_from_cuts(&b.cuts, b.rho, x);
            let m = compensated_sum(probs.iter().zip(&b.returns).map(|(p, v)| p * v));
            let second = compensated_sum(probs.iter().zip(&b.returns).map(|(p, v)| p * v * v))
                + probs[0] * b.default_return_variance;
            mu_n.push(m);
            var_terms.push(a * a * (second - m * m).max(0.0));
        }
        let mu = compensated_sum(mu_n.iter().zip(&self.shares).map(|(m, a)| a * m));
        ConditionalMoments {
            mu_n,
            mu,
            var: self.discount * self.discount * compensated_sum(var_terms),
        }
    }

    /// Unconditional expected portfolio return by Gauss–Hermite quadrature.
    pub fn expected_return(&self) -> f64 {
        GaussHermite::standard().integrate(|x| self.conditional_moments(x).mu)
    }

    /// Conditional mean loss `m(x) = e^{-rT}(E[R] - μ(x))`.
    pub fn conditional_loss(&self, x: f64, expected_return: f64) -> f64 {
        self.discount * (expected_return - self.conditional_moments(x).mu)
    }

    /// Second-order approximate GA at level `q`.
    pub fn ga_approx(&self, q: f64) -> Result<MtmApprox> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::invalid(format!("quantile level {q} outside (0, 1)")));
        }
        let x_star = normal::inv_cdf(1.0 - q);
        let slope = self.loss_slope(x_star, FD_STEP);
        if slope.abs() < 1e-12 {
            return Err(Error::Degenerate(format!(
                "conditional loss is flat at the factor quantile (slope {slope:e})"
            )));
        }
        let ga_h = self.ga_at_step(x_star, FD_STEP);
        let ga_h2 = self.ga_at_step(x_star, 0.5 * FD_STEP);
        let discrepancy = if ga_h2 == 0.0 {
            (ga_h - ga_h2).abs()
        } else {
            ((ga_h - ga_h2) / ga_h2).abs()
        };
        Ok(MtmApprox {
            ga: ga_h,
            ga_half_step: ga_h2,
            richardson_discrepancy: discrepancy,
            richardson_ok: discrepancy <= RICHARDSON_TOLERANCE,
            x_star,
        })
    }

    /// `m'(x)` by central differences; `E[R]` cancels.
    fn loss_slope(&self, x: f64, h: f64) -> f64 {
        let up = self.conditional_moments(x + h).mu;
        let down = self.conditional_moments(x - h).mu;
        -self.discount * (up - down) / (2.0 * h)
    }

    fn ga_at_step(&self, x: f64, h: f64) -> f64 {
        let g = |t: f64| normal::pdf(t) * self.conditional_moments(t).var / self.loss_slope(t, h);
        let derivative = (g(x + h) - g(x - h)) / (2.0 * h);
        -derivative / (2.0 * normal::pdf(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtmApprox {
    pub ga: f64,
    pub ga_half_step: f64,
    pub richardson_discrepancy: f64,
    pub richardson_ok: bool,
    pub x_star: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::RhoMode;
    use crate::portfolio::LoanPosition;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn bundled() -> TransitionMatrix {
        TransitionMatrix::bundled_sovereign()
    }

    #[test]
    fn schedule_runs_back_from_maturity() {
        let b = BondSpec::new(0.01, 0.5, 3.0, 1.0).unwrap();
        assert_eq!(b.schedule(), vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0]);
        let stub = BondSpec::new(0.01, 0.5, 2.2, 1.0).unwrap().schedule();
        assert_eq!(stub.len(), 5);
        assert!((stub[0] - 0.2).abs() < 1e-12);
        assert!(BondSpec::new(0.01, 0.5, 0.5, 1.0).is_err());
        assert!(BondSpec::new(0.01, 0.5, 1.0, 1.0).is_ok());
    }

    #[test]
    fn state_probabilities_examples() {
        let tm = bundled();
        let table = thresholds(&tm);
        let g = tm.scale().index_of("B").unwrap();
        let flat = state_probabilities(g, 0.0, 1.7, &table);
        for (s, p) in flat.iter().enumerate() {
            assert!((p - tm.prob(g, s)).abs() < 1e-10, "s={s}");
        }
        let tail = state_probabilities(g, 0.35, -40.0, &table);
        assert!(tail[0] > 1.0 - 1e-12);

        // Per-state oracle with an independent CDF.
        let n = Normal::standard();
        let rho: f64 = 0.35;
        let x = -3.09;
        let probs = state_probabilities(g, rho, x, &table);
        let mut cum = 0.0;
        let mut prev = 0.0;
        for s in 0..tm.scale().len() {
            cum += tm.prob(g, s);
            let upper = if s + 1 == tm.scale().len() {
                1.0
            } else {
                let c = n.inverse_cdf(cum.clamp(1e-12, 1.0 - 1e-12));
                n.cdf((c - x * rho.sqrt()) / (1.0 - rho).sqrt())
            };
            assert!((probs[s] - (upper - prev)).abs() < 1e-9, "s={s}");
            prev = upper;
        }
    }

    fn pricer_parts(tm: &TransitionMatrix) -> PdTermStructure {
        PdTermStructure::new(tm, 12)
    }

    #[test]
    fn default_state_and_risk_free_limit() {
        let tm = bundled();
        let curve = NssParams::flat(0.03);
        let term = pricer_parts(&tm);
        let pricer = Pricer {
            curve: &curve,
            term: &term,
            psi: 0.4,
        };
        let lgd = LgdSpec::deterministic(0.45).unwrap();
        let spec = BondSpec::new(0.01, 0.5, 3.0, 1.0).unwrap();
        assert_eq!(pricer.price(&spec, 5, PriceAt::Horizon(0), &lgd, 0.35).unwrap(), 0.55);

        let aaa = tm.scale().index_of("AAA").unwrap();
        let p = pricer.price(&spec, aaa, PriceAt::Today, &lgd, 0.0).unwrap();
        let riskless: f64 = spec.schedule().iter().map(|&u| 0.005 * (-0.03 * u).exp()).sum::<f64>() + (-0.09f64).exp();
        assert!((p - riskless).abs() < 1e-5, "{p} vs {riskless}");
    }

    #[test]
    fn cashflow_enumeration_oracle() {
        // BB bond, 1% semi-annual coupon, three years, flat 3%.
        let tm = bundled();
        let curve = NssParams::flat(0.03);
        let g = tm.scale().index_of("BB").unwrap();
        let spec = BondSpec::new(0.01, 0.5, 3.0, 1.0).unwrap();
        let lgd = LgdSpec::deterministic(0.45).unwrap();
        let got = price_bond(&spec, g, PriceAt::Today, &curve, &tm, &lgd, 0.4, 0.35).unwrap();

        let n = Normal::standard();
        // Cumulative PDs from explicit matrix powers.
        let k = tm.scale().len();
        let mut power: Vec<Vec<f64>> = (0..k).map(|i| tm.row(i).to_vec()).collect();
        let mut cum = vec![0.0, power[g][0]];
        for _ in 1..3 {
            let mut next = vec![vec![0.0; k]; k];
            for i in 0..k {
                for j in 0..k {
                    next[i][j] = (0..k).map(|l| power[i][l] * tm.prob(l, j)).sum();
                }
            }
            power = next;
            cum.push(power[g][0]);
        }
        let q = |t: f64| -> f64 {
            let lo = t.floor() as usize;
            let p = if t.fract() == 0.0 {
                cum[lo]
            } else {
                cum[lo] + t.fract() * (cum[lo + 1] - cum[lo])
            };
            let p = p.clamp(1e-6, 1.0 - 1e-6);
            1.0 - n.cdf(n.inverse_cdf(p) + 0.4 * t.sqrt() * 0.35f64.sqrt())
        };
        let mut expected = 0.0;
        let mut prev = 1.0;
        for i in 1..=6 {
            let u = 0.5 * i as f64;
            let df = (-0.03 * u).exp();
            expected += 0.005 * df * q(u) + 0.55 * df * (prev - q(u));
            prev = q(u);
        }
        expected += (-0.09f64).exp() * q(3.0);
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn price_monotone_in_rating_and_coupon() {
        let tm = bundled();
        let curve = NssParams::flat(0.03);
        let term = pricer_parts(&tm);
        let pricer = Pricer {
            curve: &curve,
            term: &term,
            psi: 0.4,
        };
        let lgd = LgdSpec::deterministic(0.45).unwrap();
        let spec = BondSpec::new(0.01, 0.5, 5.0, 1.0).unwrap();
        let table = pricer.state_table(&spec, 8, &lgd, 0.35, tm.scale().len()).unwrap();
        // The empirical matrix has a few adjacent grades whose multi-year
        // default rates cross, so horizon prices are only nearly monotone.
        assert!(table.p_t.windows(2).all(|w| w[0] <= w[1] + 1e-3), "{:?}", table.p_t);
        assert!(table.p_t[1..].iter().all(|&v| v > table.p_t[0]));
        let rich = BondSpec::new(0.05, 0.5, 5.0, 1.0).unwrap();
        assert!(pricer.price(&rich, 8, PriceAt::Today, &lgd, 0.35).unwrap() > table.p0);
        let worse = LgdSpec::deterministic(0.6).unwrap();
        assert!(pricer.price(&spec, 8, PriceAt::Today, &worse, 0.35).unwrap() < table.p0);
        assert!(pricer.price(&spec, 5, PriceAt::Today, &lgd, 0.35).unwrap() < table.p0);
    }

    #[test]
    fn horizon_prices_monotone_for_ordered_matrix() {
        let scale = crate::ratings::RatingScale::new("toy", ["D", "C", "B", "A"].map(String::from).to_vec()).unwrap();
        let p = vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.30, 0.50, 0.15, 0.05],
            vec![0.05, 0.10, 0.75, 0.10],
            vec![0.005, 0.015, 0.08, 0.90],
        ];
        let tm = TransitionMatrix::new(scale, p, 1.0).unwrap();
        let curve = NssParams::flat(0.03);
        let term = PdTermStructure::new(&tm, 12);
        let pricer = Pricer {
            curve: &curve,
            term: &term,
            psi: 0.4,
        };
        let lgd = LgdSpec::deterministic(0.45).unwrap();
        for m in [1.0, 2.0, 4.5, 8.0] {
            let spec = BondSpec::new(0.01, 0.5, m, 1.0).unwrap();
            for g in 1..4 {
                let t = pricer.state_table(&spec, g, &lgd, 0.3, 4).unwrap();
                assert!(t.p_t.windows(2).all(|w| w[0] <= w[1]), "m={m} g={g} {:?}", t.p_t);
            }
        }
    }

    fn portfolio(grades: &[&str], exposures: &[f64], maturity: f64, nu: f64) -> Portfolio {
        let tm = bundled();
        let positions = grades
            .iter()
            .zip(exposures)
            .enumerate()
            .map(|(i, (g, e))| LoanPosition {
                borrower_id: format!("b{i}"),
                exposure: *e,
                rating: tm.scale().index_of(g).unwrap(),
                maturity,
                coupon: 0.01,
                lgd: LgdSpec::new(0.45, nu).unwrap(),
                elgd_explicit: false,
            })
            .collect();
        Portfolio::new(positions, tm.scale()).unwrap()
    }

    fn model(p: &Portfolio, mode: MtmMode, rho_mode: RhoMode) -> MtmModel {
        let params = RiskParams {
            rho_mode,
            ..RiskParams::default()
        };
        MtmModel::build(p, &bundled(), &NssParams::flat(0.03), &params, mode).unwrap()
    }

    #[test]
    fn zero_correlation_decouples_moments() {
        let p = portfolio(&["BB", "B-"], &[2.0, 1.0], 4.0, 0.0);
        let m = model(&p, MtmMode::RatingsBased, RhoMode::Fixed(0.0));
        let a = m.conditional_moments(-3.0);
        let b = m.conditional_moments(2.0);
        for (x, y) in a.mu_n.iter().zip(&b.mu_n) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn moments_match_joint_enumeration() {
        for nu in [0.0, 0.25] {
            let p = portfolio(&["BB", "B-"], &[3.0, 1.0], 4.0, nu);
            let m = model(&p, MtmMode::RatingsBased, RhoMode::Irb);
            let x = -2.3;
            let got = m.conditional_moments(x);
            let b = &m.borrowers;
            let pa = state_probabilities_from_cuts(&b[0].cuts, b[0].rho, x);
            let pb = state_probabilities_from_cuts(&b[1].cuts, b[1].rho, x);
            let (wa, wb) = (m.shares[0], m.shares[1]);
            let mut mean = 0.0;
            let mut second = 0.0;
            for (i, &p_i) in pa.iter().enumerate() {
                for (j, &p_j) in pb.iter().enumerate() {
                    let r = wa * b[0].returns[i] + wb * b[1].returns[j];
                    // Random LGD only adds variance in the default states.
                    let extra = if i == 0 {
                        wa * wa * b[0].default_return_variance
                    } else {
                        0.0
                    } + if j == 0 {
                        wb * wb * b[1].default_return_variance
                    } else {
                        0.0
                    };
                    mean += p_i * p_j * r;
                    second += p_i * p_j * (r * r + extra);
                }
            }
            let var = m.discount * m.discount * (second - mean * mean);
            assert!((got.mu - mean).abs() < 1e-12);
            assert!((got.var - var).abs() < 1e-12, "{} vs {var}", got.var);
        }
    }

    #[test]
    fn expected_return_matches_transition_average() {
        let p = portfolio(&["BB", "B-", "A"], &[3.0, 1.0, 2.0], 4.0, 0.0);
        let m = model(&p, MtmMode::RatingsBased, RhoMode::Irb);
        let tm = bundled();
        let direct: f64 = p
            .positions()
            .iter()
            .zip(&m.borrowers)
            .zip(&m.shares)
            .map(|((pos, b), a)| {
                a * (0..tm.scale().len())
                    .map(|s| tm.prob(pos.rating, s) * b.returns[s])
                    .sum::<f64>()
            })
            .sum();
        assert!((m.expected_return() - direct).abs() < 1e-10);
    }

    #[test]
    fn approx_ga_properties() {
        let fine = portfolio(&vec!["B"; 1000], &vec![1.0; 1000], 3.0, 0.0);
        let m = model(&fine, MtmMode::RatingsBased, RhoMode::Irb);
        let r = m.ga_approx(0.999).unwrap();
        assert!(r.ga > 0.0 && r.ga < 0.005, "{}", r.ga);
        assert!(r.richardson_ok);

        let p = portfolio(&["BB", "B-", "B"], &[3.0, 1.0, 2.0], 3.0, 0.0);
        let q = portfolio(&["BB", "B-", "B"], &[6.0, 2.0, 4.0], 3.0, 0.0);
        let a = model(&p, MtmMode::RatingsBased, RhoMode::Irb)
            .ga_approx(0.999)
            .unwrap()
            .ga;
        let b = model(&q, MtmMode::RatingsBased, RhoMode::Irb)
            .ga_approx(0.999)
            .unwrap()
            .ga;
        assert!(((a - b) / a).abs() < 1e-12);
    }

    #[test]
    fn approx_ga_halves_when_split() {
        let one = portfolio(&["B+"; 5], &[1.0; 5], 3.0, 0.0);
        let two = portfolio(&["B+"; 10], &[0.5; 10], 3.0, 0.0);
        let a = model(&one, MtmMode::RatingsBased, RhoMode::Irb)
            .ga_approx(0.999)
            .unwrap()
            .ga;
        let b = model(&two, MtmMode::RatingsBased, RhoMode::Irb)
            .ga_approx(0.999)
            .unwrap()
            .ga;
        assert!(((a / 2.0 - b) / b).abs() < 0.2, "{a} {b}");
    }

    #[test]
    fn flat_loss_is_degenerate() {
        let p = portfolio(&["BB"], &[1.0], 3.0, 0.0);
        let m = model(&p, MtmMode::RatingsBased, RhoMode::Fixed(0.0));
        assert!(matches!(m.ga_approx(0.999), Err(Error::Degenerate(_))));
    }

    proptest! {
        #[test]
        fn state_probabilities_sum_to_one(g in 1usize..18, rho in 0.0f64..0.99, x in -6.0f64..6.0) {
            let table = thresholds(&bundled());
            let probs = state_probabilities(g, rho, x, &table);
            prop_assert!(probs.iter().all(|&p| p >= 0.0));
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn price_decreasing_in_elgd_and_increasing_in_coupon(
            g in 1usize..18, elgd in 0.05f64..0.9, de in 0.01f64..0.09, c in 0.0f64..0.1, dc in 0.001f64..0.05, m in 1.5f64..10.0,
        ) {
            let tm = bundled();
            let curve = NssParams::flat(0.03);
            let term = PdTermStructure::new(&tm, 12);
            let pricer = Pricer { curve: &curve, term: &term, psi: 0.4 };
            let spec = BondSpec::new(c, 0.5, m, 1.0).unwrap();
            let richer = BondSpec::new(c + dc, 0.5, m, 1.0).unwrap();
            let base = pricer.price(&spec, g, PriceAt::Today, &LgdSpec::deterministic(elgd).unwrap(), 0.3).unwrap();
            let worse = pricer.price(&spec, g, PriceAt::Today, &LgdSpec::deterministic(elgd + de).unwrap(), 0.3).unwrap();
            let more = pricer.price(&richer, g, PriceAt::Today, &LgdSpec::deterministic(elgd).unwrap(), 0.3).unwrap();
            prop_assert!(worse <= base);
            prop_assert!(more > base);
        }
    }
}

//! Closed-form granularity adjustment with a Gamma-distributed systematic
//! factor of mean 1 and precision `ξ`.

use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::irb::IrbOutputs;
use crate::portfolio::Portfolio;
use crate::sum::compensated_sum;

/// Default precision of the Gamma factor.
pub const DEFAULT_XI: f64 = 0.25;
/// Alternative precision obtained by cross-portfolio calibration.
pub const CALIBRATED_XI: f64 = 0.063;

/// Gamma factor with shape `ξ` and scale `1/ξ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaFactor {
    pub xi: f64,
}

impl GammaFactor {
    pub fn new(xi: f64) -> Result<Self> {
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(Error::invalid(format!("gamma precision must be positive, got {xi}")));
        }
        Ok(GammaFactor { xi })
    }

    pub fn mean(&self) -> f64 {
        1.0
    }

    pub fn variance(&self) -> f64 {
        1.0 / self.xi
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            gamma_lr(self.xi, self.xi * x)
        }
    }
}

/// `x` solving `P(ξ, ξx) = q` for the regularized lower incomplete gamma.
pub fn gamma_quantile(xi: f64, q: f64) -> Result<f64> {
    let g = GammaFactor::new(xi)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("quantile level {q} outside (0, 1)")));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while g.cdf(hi) < q {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::NonConvergence {
                what: "gamma quantile".into(),
                detail: format!("upper bracket exceeded 1e300 (xi = {xi}, q = {q})"),
            });
        }
    }
    let mut it = 0;
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if g.cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
        it += 1;
        if it > 2000 {
            return Err(Error::NonConvergence {
                what: "gamma quantile".into(),
                detail: format!("bracket [{lo}, {hi}] after {it} halvings"),
            });
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `δ = (α - 1)(ξ + (1 - ξ)/α)` with `α` the Gamma quantile.
pub fn delta_from_quantile(xi: f64, alpha: f64) -> f64 {
    (alpha - 1.0) * (xi + (1.0 - xi) / alpha)
}

pub fn delta_factor(xi: f64, q: f64) -> Result<f64> {
    Ok(delta_from_quantile(xi, gamma_quantile(xi, q)?))
}

/// Per-borrower summands of the two approximations, before the
/// `1/(2K*)` factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaContribution {
    pub full: f64,
    pub simplified: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaAnalyticReport {
    pub ga_full: f64,
    pub ga_simplified: f64,
    pub k_star: f64,
    pub delta: f64,
    pub contributions: Vec<GaContribution>,
}

/// Full and simplified analytic GA as fractions of total exposure.
pub fn ga_approx(p: &Portfolio, irb: &[IrbOutputs], xi: f64, q: f64) -> Result<GaAnalyticReport> {
    let delta = delta_factor(xi, q)?;
    ga_approx_with_delta(p, irb, delta)
}

/// As [`ga_approx`] with a precomputed `δ`; the approximation is affine in
/// `δ`, which the calibration exploits.
pub fn ga_approx_with_delta(p: &Portfolio, irb: &[IrbOutputs], delta: f64) -> Result<GaAnalyticReport> {
    if irb.len() != p.len() {
        return Err(Error::invalid("IRB outputs do not match the portfolio"));
    }
    let shares = p.exposure_shares();
    let k_star = compensated_sum(shares.iter().zip(irb).map(|(a, o)| a * o.k));
    if !(k_star > 0.0) {
        return Err(Error::Degenerate(
            "capital requirement K* is zero; the analytic GA is undefined".into(),
        ));
    }

    let contributions: Vec<GaContribution> = p
        .positions()
        .iter()
        .zip(&shares)
        .zip(irb)
        .map(|((pos, &a), o)| {
            let e = pos.lgd.elgd;
            if e == 0.0 {
                return GaContribution {
                    full: 0.0,
                    simplified: 0.0,
                };
            }
            let v2 = pos.lgd.variance();
            let c = (v2 + e * e) / e;
            let kr = o.k + o.r;
            let base = c * (delta * kr - o.k);
            // The LGD-variance terms are kept separate so that they vanish
            // exactly for deterministic LGDs.
            let extra = v2 / (e * e) * (delta * kr * kr - 2.0 * o.k * kr);
            let w = a * a;
            GaContribution {
                full: w * (base + extra),
                simplified: w * base,
            }
        })
        .collect();

    let scale = 0.5 / k_star;
    Ok(GaAnalyticReport {
        ga_full: scale * compensated_sum(contributions.iter().map(|c| c.full)),
        ga_simplified: scale * compensated_sum(contributions.iter().map(|c| c.simplified)),
        k_star,
        delta,
        contributions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irb::{capital_and_reserve, IrbInputs};
    use crate::params::RhoMode;
    use crate::portfolio::{LgdSpec, LoanPosition};
    use crate::ratings::TransitionMatrix;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, Gamma, Normal};

    #[test]
    fn gamma_quantile_examples() {
        let a = gamma_quantile(0.25, 0.999).unwrap();
        let b = gamma_quantile(4.0, 0.999).unwrap();
        let c = gamma_quantile(100.0, 0.999).unwrap();
        assert!(a > b && b > c && c > 1.0);
        assert!((gamma_quantile(1.0, 0.5).unwrap() - std::f64::consts::LN_2).abs() < 1e-10);
        // statrs parameterizes by shape and rate.
        let reference = Gamma::new(0.25, 0.25).unwrap();
        assert!((reference.cdf(a) - 0.999).abs() < 1e-12);
        assert!((a - 17.505_777_031_546_7).abs() < 1e-8, "{a}");
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta_from_quantile(0.25, 1.0), 0.0);
        let d = delta_factor(0.25, 0.999).unwrap();
        assert!((d - 4.833_601_258_193).abs() < 1e-8, "{d}");
        let alpha = gamma_quantile(1.0, 0.99).unwrap();
        assert!((delta_factor(1.0, 0.99).unwrap() - (alpha - 1.0)).abs() < 1e-12);
    }

    fn two_borrowers(nu: f64) -> (Portfolio, Vec<IrbOutputs>) {
        let tm = TransitionMatrix::bundled_sovereign();
        let pds = [0.02, 0.005];
        let positions = [0.9, 0.1]
            .iter()
            .enumerate()
            .map(|(i, &e)| LoanPosition {
                borrower_id: format!("b{i}"),
                exposure: e,
                rating: 5,
                maturity: 1.0,
                coupon: 0.01,
                lgd: LgdSpec::new(0.45, nu).unwrap(),
                elgd_explicit: false,
            })
            .collect();
        let p = Portfolio::new(positions, tm.scale()).unwrap();
        let irb = pds
            .iter()
            .map(|&pd| {
                capital_and_reserve(
                    &IrbInputs {
                        pd,
                        elgd: 0.45,
                        maturity: 1.0,
                        rho_mode: RhoMode::Irb,
                    },
                    0.999,
                    true,
                )
            })
            .collect();
        (p, irb)
    }

    // Term-by-term expansion of the full approximation with independently
    // computed capital, reserve and Gamma quantile.
    fn spreadsheet(a: &[f64], pds: &[f64], elgd: f64, nu: f64, xi: f64, q: f64) -> f64 {
        let n = Normal::standard();
        let alpha = Gamma::new(xi, xi).unwrap().inverse_cdf(q);
        let delta = (alpha - 1.0) * (xi + (1.0 - xi) / alpha);
        let mut ks = Vec::new();
        let mut rs = Vec::new();
        for &pd in pds {
            let w = (1.0 - (-50.0 * pd).exp()) / (1.0 - (-50.0f64).exp());
            let rho = 0.12 * w + 0.24 * (1.0 - w);
            let cpd = n.cdf((n.inverse_cdf(pd) + rho.sqrt() * n.inverse_cdf(q)) / (1.0 - rho).sqrt());
            ks.push(elgd * cpd - elgd * pd);
            rs.push(elgd * pd);
        }
        let k_star: f64 = a.iter().zip(&ks).map(|(a, k)| a * k).sum();
        let v2 = nu * elgd * (1.0 - elgd);
        let c = (v2 + elgd * elgd) / elgd;
        let mut total = 0.0;
        for i in 0..a.len() {
            let kr = ks[i] + rs[i];
            let first = delta * (c * kr + kr * kr * v2 / (elgd * elgd));
            let second = ks[i] * (c + 2.0 * kr * v2 / (elgd * elgd));
            total += a[i] * a[i] * (first - second);
        }
        total / (2.0 * k_star)
    }

    #[test]
    fn two_borrower_fixture_matches_expansion() {
        for nu in [0.0, 0.25] {
            let (p, irb) = two_borrowers(nu);
            let r = ga_approx(&p, &irb, 0.25, 0.999).unwrap();
            let expected = spreadsheet(&[0.9, 0.1], &[0.02, 0.005], 0.45, nu, 0.25, 0.999);
            assert!(
                ((r.ga_full - expected) / expected).abs() < 1e-8,
                "{} vs {expected}",
                r.ga_full
            );
            if nu == 0.0 {
                assert_eq!(r.ga_full, r.ga_simplified);
            } else {
                assert!(r.ga_full > r.ga_simplified);
            }
        }
    }

    #[test]
    fn zero_capital_is_degenerate() {
        let (p, mut irb) = two_borrowers(0.0);
        irb.iter_mut().for_each(|o| o.k = 0.0);
        assert!(matches!(ga_approx(&p, &irb, 0.25, 0.999), Err(Error::Degenerate(_))));
    }

    fn homogeneous(n: usize, exposure: f64, nu: f64) -> (Portfolio, Vec<IrbOutputs>) {
        let tm = TransitionMatrix::bundled_sovereign();
        let positions = (0..n)
            .map(|i| LoanPosition {
                borrower_id: format!("h{i}"),
                exposure,
                rating: 5,
                maturity: 1.0,
                coupon: 0.01,
                lgd: LgdSpec::new(0.45, nu).unwrap(),
                elgd_explicit: false,
            })
            .collect();
        let o = capital_and_reserve(
            &IrbInputs {
                pd: 0.01,
                elgd: 0.45,
                maturity: 1.0,
                rho_mode: RhoMode::Irb,
            },
            0.999,
            true,
        );
        (Portfolio::new(positions, tm.scale()).unwrap(), vec![o; n])
    }

    #[test]
    fn homogeneous_scales_as_one_over_n() {
        let (p1, i1) = homogeneous(1, 1.0, 0.25);
        let (p7, i7) = homogeneous(7, 1.0, 0.25);
        let a = ga_approx(&p1, &i1, 0.25, 0.999).unwrap();
        let b = ga_approx(&p7, &i7, 0.25, 0.999).unwrap();
        assert!((a.ga_full / 7.0 - b.ga_full).abs() < 1e-14);
        assert!((a.ga_simplified / 7.0 - b.ga_simplified).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn nu_zero_identity_and_scale_invariance(
            rows in prop::collection::vec((0.1f64..100.0, 1e-4f64..0.3, 0.0f64..1.0, 1.0f64..8.0), 1..12),
            lambda in 0.01f64..100.0,
            xi in 0.01f64..3.0,
        ) {
            let tm = TransitionMatrix::bundled_sovereign();
            let build = |k: f64| {
                let positions: Vec<LoanPosition> = rows.iter().enumerate().map(|(i, &(e, _, l, m))| LoanPosition {
                    borrower_id: format!("b{i}"),
                    exposure: e * k,
                    rating: 5,
                    maturity: m,
                    coupon: 0.01,
                    lgd: LgdSpec::new(0.05 + 0.9 * l, 0.0).unwrap(),
                    elgd_explicit: false,
                }).collect();
                let irb: Vec<IrbOutputs> = rows.iter().zip(&positions).map(|(&(_, pd, _, m), pos)| capital_and_reserve(
                    &IrbInputs { pd, elgd: pos.lgd.elgd, maturity: m, rho_mode: RhoMode::Irb }, 0.999, true)).collect();
                (Portfolio::new(positions, tm.scale()).unwrap(), irb)
            };
            let (p, irb) = build(1.0);
            let r = ga_approx(&p, &irb, xi, 0.999).unwrap();
            prop_assert!(r.ga_full == r.ga_simplified || ((r.ga_full - r.ga_simplified) / r.ga_full).abs() < 1e-14);
            let (ps, irbs) = build(lambda);
            let s = ga_approx(&ps, &irbs, xi, 0.999).unwrap();
            prop_assert!(((r.ga_full - s.ga_full) / r.ga_full).abs() < 1e-10);
        }

        #[test]
        fn splitting_a_borrower_lowers_ga(
            rows in prop::collection::vec((0.1f64..100.0, 1e-3f64..0.2), 1..8),
            which in 0usize..8,
            nu in 0.0f64..0.5,
        ) {
            let tm = TransitionMatrix::bundled_sovereign();
            let which = which % rows.len();
            let mut expanded: Vec<(f64, f64)> = Vec::new();
            for (i, &(e, pd)) in rows.iter().enumerate() {
                if i == which {
                    expanded.push((e / 2.0, pd));
                    expanded.push((e / 2.0, pd));
                } else {
                    expanded.push((e, pd));
                }
            }
            let build = |set: &[(f64, f64)]| {
                let positions: Vec<LoanPosition> = set.iter().enumerate().map(|(i, &(e, _))| LoanPosition {
                    borrower_id: format!("b{i}"),
                    exposure: e,
                    rating: 5,
                    maturity: 1.0,
                    coupon: 0.01,
                    lgd: LgdSpec::new(0.45, nu).unwrap(),
                    elgd_explicit: false,
                }).collect();
                let irb: Vec<IrbOutputs> = set.iter().map(|&(_, pd)| capital_and_reserve(
                    &IrbInputs { pd, elgd: 0.45, maturity: 1.0, rho_mode: RhoMode::Irb }, 0.999, true)).collect();
                ga_approx(&Portfolio::new(positions, tm.scale()).unwrap(), &irb, 0.25, 0.999).unwrap()
            };
            let before = build(&rows);
            let after = build(&expanded);
            prop_assert!(after.ga_full < before.ga_full);
            prop_assert!(after.ga_simplified < before.ga_simplified);
        }
    }
}

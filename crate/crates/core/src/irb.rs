//! Single-factor (Vasicek / Basel IRB) quantities.

use crate::normal::{self, PROB_FLOOR};
use crate::params::{RhoMode, RiskParams};
use crate::portfolio::Portfolio;
use crate::ratings::TransitionMatrix;
use crate::sum::compensated_sum;

/// Clamps a probability to `[1e-6, 1 - 1e-6]`.
pub fn floor_pd(pd: f64) -> f64 {
    pd.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Basel correlation `0.12 w + 0.24 (1 - w)`, `w = (1 - e^{-50 pd}) / (1 - e^{-50})`.
pub fn asset_correlation_irb(pd: f64) -> f64 {
    let w = -(-50.0 * pd).exp_m1() / -(-50.0f64).exp_m1();
    0.12 * w + 0.24 * (1.0 - w)
}

pub fn correlation(pd: f64, mode: RhoMode) -> f64 {
    match mode {
        RhoMode::Irb => asset_correlation_irb(pd),
        RhoMode::Fixed(r) => r,
    }
}

/// Default probability conditional on the systematic factor sitting at its
/// `q`-stress level: `Φ((Φ⁻¹(pd) + √ρ Φ⁻¹(q)) / √(1-ρ))`.
pub fn conditional_pd(pd: f64, rho: f64, q: f64) -> f64 {
    if rho == 0.0 {
        return pd;
    }
    normal::cdf((normal::inv_cdf(pd) + rho.sqrt() * normal::inv_cdf(q)) / (1.0 - rho).sqrt())
}

/// `(1 + (m - 2.5) b) / (1 - 1.5 b)` with `b = (0.11852 - 0.05478 ln pd)²`.
pub fn maturity_adjustment(pd: f64, m: f64) -> f64 {
    let b = (0.11852 - 0.05478 * pd.ln()).powi(2);
    (1.0 + (m - 2.5) * b) / (1.0 - 1.5 * b)
}

pub fn effective_maturity(m: f64, clamp: bool) -> f64 {
    if clamp {
        m.clamp(1.0, 5.0)
    } else {
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrbInputs {
    pub pd: f64,
    pub elgd: f64,
    pub maturity: f64,
    pub rho_mode: RhoMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrbOutputs {
    /// Floored one-year PD.
    pub pd: f64,
    pub rho: f64,
    pub cond_pd: f64,
    /// Unexpected-loss capital requirement.
    pub k: f64,
    /// Expected-loss reserve `ELGD · PD`.
    pub r: f64,
    pub ma: f64,
}

pub fn capital_and_reserve(inputs: &IrbInputs, q: f64, ma_clamp: bool) -> IrbOutputs {
    let pd = floor_pd(inputs.pd);
    let rho = correlation(pd, inputs.rho_mode);
    let cond_pd = conditional_pd(pd, rho, q);
    let ma = maturity_adjustment(pd, effective_maturity(inputs.maturity, ma_clamp));
    let e = inputs.elgd;
    IrbOutputs {
        pd,
        rho,
        cond_pd,
        k: (e * cond_pd - pd * e) * ma,
        r: e * pd,
        ma,
    }
}

/// One-year PD of grade `g`, floored.
pub fn grade_pd(tm: &TransitionMatrix, g: usize) -> f64 {
    floor_pd(tm.default_prob(g))
}

/// Per-borrower IRB outputs in position order.
pub fn portfolio_irb(p: &Portfolio, tm: &TransitionMatrix, params: &RiskParams) -> Vec<IrbOutputs> {
    p.positions()
        .iter()
        .map(|pos| {
            let inputs = IrbInputs {
                pd: tm.default_prob(pos.rating),
                elgd: pos.lgd.elgd,
                maturity: pos.maturity,
                rho_mode: params.rho_mode,
            };
            capital_and_reserve(&inputs, params.q, params.ma_clamp)
        })
        .collect()
}

/// Asymptotic conditional expected loss `Σ a_n ELGD_n π_n(α_q(X))`.
pub fn asymptotic_el(p: &Portfolio, tm: &TransitionMatrix, params: &RiskParams) -> f64 {
    let irb = portfolio_irb(p, tm, params);
    let shares = p.exposure_shares();
    compensated_sum(
        p.positions()
            .iter()
            .zip(&shares)
            .zip(&irb)
            .map(|((pos, a), o)| a * pos.lgd.elgd * o.cond_pd),
    )
}

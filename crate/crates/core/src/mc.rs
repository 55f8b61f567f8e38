//! Monte Carlo value-at-risk and exact granularity adjustments.
//!
//! Every scenario draws from its own ChaCha stream, keyed by the run seed
//! and selected by the scenario index, so results do not depend on how the
//! scenarios are split across worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::irb::{asymptotic_el, correlation, grade_pd};
use crate::mtm::MtmModel;
use crate::normal;
use crate::params::RiskParams;
use crate::portfolio::{LgdSpec, Portfolio};
use crate::ratings::TransitionMatrix;
use crate::sum::compensated_sum;

/// Two-sided 95% standard normal quantile.
pub const Z_975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub ci95: (f64, f64),
    pub scenarios_used: usize,
}

impl McEstimate {
    /// Shifts and scales the estimate by an affine map `a + b·v` with `b ≥ 0`.
    pub fn affine(&self, a: f64, b: f64) -> McEstimate {
        McEstimate {
            value: a + b * self.value,
            std_error: b * self.std_error,
            ci95: (a + b * self.ci95.0, a + b * self.ci95.1),
            scenarios_used: self.scenarios_used,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random stream of scenario `index` under `seed`.
pub fn scenario_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Beta-distributed LGD sampler, or a constant.
#[derive(Debug, Clone, Copy)]
enum LgdSampler {
    Constant(f64),
    Beta(Gamma<f64>, Gamma<f64>),
}

impl LgdSampler {
    fn new(lgd: &LgdSpec) -> Result<Self> {
        match lgd.beta_shapes() {
            None => Ok(LgdSampler::Constant(lgd.elgd)),
            Some(_) if lgd.nu >= 1.0 => Err(Error::invalid(
                "LGD volatility multiplier nu = 1 gives degenerate beta parameters",
            )),
            Some((a, b)) => {
                let ga = Gamma::new(a, 1.0).map_err(|e| Error::invalid(format!("beta shape {a}: {e}")))?;
                let gb = Gamma::new(b, 1.0).map_err(|e| Error::invalid(format!("beta shape {b}: {e}")))?;
                Ok(LgdSampler::Beta(ga, gb))
            }
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            LgdSampler::Constant(v) => v,
            LgdSampler::Beta(ga, gb) => {
                let x = ga.sample(rng);
                let y = gb.sample(rng);
                if x + y == 0.0 {
                    0.0
                } else {
                    x / (x + y)
                }
            }
        }
    }
}

/// Index bracket `[k_lo, k_hi]` (1-based) around the `⌈qS⌉` order statistic.
fn bracket(n: usize, q: f64) -> Result<(usize, usize, usize)> {
    let k = ((q * n as f64).ceil() as usize).clamp(1, n);
    let half = Z_975 * (n as f64 * q * (1.0 - q)).sqrt();
    let lo = (k as f64 - half).floor() as i64;
    let hi = (k as f64 + half).ceil() as i64;
    if lo < 1 || hi > n as i64 {
        return Err(Error::BracketOutOfRange { lo, hi, n });
    }
    Ok((k, lo as usize, hi as usize))
}

/// Standard error of the `⌈qS⌉` order statistic from the binomial bracket.
pub fn quantile_std_error(sorted: &[f64], q: f64) -> Result<f64> {
    let (_, lo, hi) = bracket(sorted.len(), q)?;
    Ok(((sorted[hi - 1] - sorted[lo - 1]) / (2.0 * Z_975)).max(0.0))
}

/// Sorts `samples` and reads off the `⌈qS⌉` order statistic with its
/// bracket.
pub fn quantile_estimate(samples: &mut [f64], q: f64) -> Result<McEstimate> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("quantile level {q} outside (0, 1)")));
    }
    samples.par_sort_unstable_by(f64::total_cmp);
    let (k, lo, hi) = bracket(samples.len(), q)?;
    Ok(McEstimate {
        value: samples[k - 1],
        std_error: quantile_std_error(samples, q)?,
        ci95: (samples[lo - 1], samples[hi - 1]),
        scenarios_used: samples.len(),
    })
}

struct ActuarialBorrower {
    share: f64,
    threshold: f64,
    sqrt_rho: f64,
    sqrt_idio: f64,
    lgd: LgdSampler,
}

/// Unsorted per-scenario actuarial loss rates `Σ a_n LGD_n D_n`.
pub fn simulate_actuarial_losses(p: &Portfolio, tm: &TransitionMatrix, params: &RiskParams) -> Result<Vec<f64>> {
    params.validate()?;
    let shares = p.exposure_shares();
    let borrowers = p
        .positions()
        .iter()
        .zip(&shares)
        .map(|(pos, &share)| {
            let pd = grade_pd(tm, pos.rating);
            let rho = correlation(pd, params.rho_mode);
            Ok(ActuarialBorrower {
                share,
                threshold: normal::inv_cdf(pd),
                sqrt_rho: rho.sqrt(),
                sqrt_idio: (1.0 - rho).sqrt(),
                lgd: LgdSampler::new(&pos.lgd)
                    .map_err(|e| Error::invalid(format!("borrower {}: {e}", pos.borrower_id)))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let seed = params.seed;
    Ok((0..params.scenarios as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = scenario_rng(seed, i);
            let x: f64 = rng.sample(StandardNormal);
            let mut loss = 0.0;
            for b in &borrowers {
                let eps: f64 = rng.sample(StandardNormal);
                if b.sqrt_rho * x + b.sqrt_idio * eps <= b.threshold {
                    loss += b.share * b.lgd.sample(&mut rng);
                }
            }
            loss
        })
        .collect())
}

/// `α_q(L)` of the actuarial loss rate.
pub fn simulate_actuarial_var(p: &Portfolio, tm: &TransitionMatrix, params: &RiskParams) -> Result<McEstimate> {
    let mut losses = simulate_actuarial_losses(p, tm, params)?;
    quantile_estimate(&mut losses, params.q)
}

/// Exact actuarial GA: simulated VaR minus the asymptotic conditional
/// expected loss.
pub fn ga_mc_actuarial(p: &Portfolio, tm: &TransitionMatrix, params: &RiskParams) -> Result<McEstimate> {
    let var = simulate_actuarial_var(p, tm, params)?;
    Ok(var.affine(-asymptotic_el(p, tm, params), 1.0))
}

/// Unsorted per-scenario negated portfolio returns `-R`.
pub fn simulate_mtm_negative_returns(model: &MtmModel, params: &RiskParams) -> Result<Vec<f64>> {
    params.validate()?;
    let samplers = model
        .borrowers
        .iter()
        .map(|b| LgdSampler::new(&b.lgd))
        .collect::<Result<Vec<_>>>()?;
    let prepared: Vec<_> = model
        .borrowers
        .iter()
        .zip(&model.shares)
        .zip(samplers)
        .map(|((b, &a), s)| {
            (
                a,
                b.rho.sqrt(),
                (1.0 - b.rho).sqrt(),
                b.cuts.as_slice(),
                b.returns.as_slice(),
                b.prices.p0,
                s,
            )
        })
        .collect();
    let seed = params.seed;
    Ok((0..params.scenarios as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = scenario_rng(seed, i);
            let x: f64 = rng.sample(StandardNormal);
            let mut r = 0.0;
            for (a, sr, si, cuts, returns, p0, lgd) in &prepared {
                let eps: f64 = rng.sample(StandardNormal);
                let y = sr * x + si * eps;
                let s = cuts.partition_point(|&c| c < y);
                let value = match (s, lgd) {
                    (0, LgdSampler::Beta(..)) => (1.0 - lgd.sample(&mut rng)) / p0,
                    _ => returns[s],
                };
                r += a * value;
            }
            -r
        })
        .collect())
}

/// Exact MtM GA `e^{-rT}[Σ a_n μ_n(Φ⁻¹(1-q)) + α_q(-R)]`.
pub fn ga_mc_mtm(model: &MtmModel, params: &RiskParams) -> Result<McEstimate> {
    let mut neg = simulate_mtm_negative_returns(model, params)?;
    let quantile = quantile_estimate(&mut neg, params.q)?;
    let x_star = normal::inv_cdf(1.0 - params.q);
    let moments = model.conditional_moments(x_star);
    let mu = compensated_sum(moments.mu_n.iter().zip(&model.shares).map(|(m, a)| a * m));
    Ok(quantile.affine(model.discount * mu, model.discount))
}

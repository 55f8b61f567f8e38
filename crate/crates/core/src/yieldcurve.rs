//! Nelson–Siegel–Svensson zero curve, continuously compounded.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::optim::nelder_mead;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NssParams {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub tau1: f64,
    pub tau2: f64,
}

fn f1(x: f64) -> f64 {
    if x < 1e-8 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    }
}

fn f2(x: f64) -> f64 {
    f1(x) - (-x).exp()
}

impl NssParams {
    pub fn new(beta: [f64; 4], tau1: f64, tau2: f64) -> Result<Self> {
        if !(tau1 > 0.0 && tau2 > 0.0) {
            return Err(Error::invalid("NSS decay scales must be positive"));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("NSS loadings must be finite"));
        }
        Ok(NssParams {
            beta0: beta[0],
            beta1: beta[1],
            beta2: beta[2],
            beta3: beta[3],
            tau1,
            tau2,
        })
    }

    /// Flat curve at `rate`.
    pub fn flat(rate: f64) -> Self {
        NssParams {
            beta0: rate,
            beta1: 0.0,
            beta2: 0.0,
            beta3: 0.0,
            tau1: 1.0,
            tau2: 1.0,
        }
    }

    fn loadings(&self, t: f64) -> [f64; 4] {
        let x1 = t / self.tau1;
        let x2 = t / self.tau2;
        [1.0, f1(x1), f2(x1), f2(x2)]
    }

    fn rate_unchecked(&self, t: f64) -> f64 {
        let l = self.loadings(t);
        self.beta0 * l[0] + self.beta1 * l[1] + self.beta2 * l[2] + self.beta3 * l[3]
    }

    pub fn zero_rate(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::invalid(format!("zero rate needs t > 0, got {t}")));
        }
        Ok(self.rate_unchecked(t))
    }

    /// `e^{-r(t) t}`, with `DF(0) = 1`.
    pub fn discount_factor(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        (-self.rate_unchecked(t) * t).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NssFit {
    pub params: NssParams,
    pub rmse: f64,
}

const TAU_GRID: [f64; 20] = [
    0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0, 6.5, 7.0, 7.5, 8.0, 8.5, 9.0, 9.5, 10.0,
];

/// Least-squares loadings for fixed decay scales; returns the betas and RMSE.
fn solve_betas(obs: &[(f64, f64)], tau1: f64, tau2: f64) -> Option<([f64; 4], f64)> {
    let probe = NssParams::flat(0.0);
    let probe = NssParams { tau1, tau2, ..probe };
    let n = obs.len();
    let a = DMatrix::from_fn(n, 4, |i, j| probe.loadings(obs[i].0)[j]);
    let y = DVector::from_iterator(n, obs.iter().map(|o| o.1));
    let beta = a.clone().svd(true, true).solve(&y, 1e-12).ok()?;
    let resid = &a * &beta - &y;
    let rmse = (resid.norm_squared() / n as f64).sqrt();
    rmse.is_finite().then(|| ([beta[0], beta[1], beta[2], beta[3]], rmse))
}

/// Fits an NSS curve to `(maturity, zero rate)` observations: grid search
/// over the decay scales with linear least squares for the loadings, then a
/// Nelder–Mead polish on the log scales.
pub fn fit_nss(observations: &[(f64, f64)]) -> Result<NssFit> {
    if observations.len() < 6 {
        return Err(Error::invalid(format!(
            "NSS fit needs at least 6 observations, got {}",
            observations.len()
        )));
    }
    if observations.iter().any(|&(t, r)| !(t > 0.0) || !r.is_finite()) {
        return Err(Error::invalid(
            "curve observations need positive maturities and finite rates",
        ));
    }
    let mut ts: Vec<f64> = observations.iter().map(|o| o.0).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    if ts.len() < 6 {
        return Err(Error::Degenerate(
            "curve observations need at least 6 distinct maturities".into(),
        ));
    }

    let mut best: Option<(f64, f64, f64)> = None;
    for &t1 in &TAU_GRID {
        for &t2 in &TAU_GRID {
            if t1 == t2 {
                continue;
            }
            if let Some((_, rmse)) = solve_betas(observations, t1, t2) {
                if best.is_none_or(|b| rmse < b.2) {
                    best = Some((t1, t2, rmse));
                }
            }
        }
    }
    let (t1, t2, _) = best.ok_or_else(|| Error::Degenerate("no admissible NSS decay scales".into()))?;

    let objective = |v: &[f64]| {
        let (a, b) = (v[0].exp(), v[1].exp());
        if !(0.05..=50.0).contains(&a) || !(0.05..=50.0).contains(&b) {
            return f64::INFINITY;
        }
        solve_betas(observations, a, b).map_or(f64::INFINITY, |s| s.1)
    };
    let polished = nelder_mead(objective, &[t1.ln(), t2.ln()], 0.1, 1e-12, 500);
    let (tau1, tau2) = (polished.x[0].exp(), polished.x[1].exp());
    let (beta, rmse) = solve_betas(observations, tau1, tau2)
        .ok_or_else(|| Error::Degenerate("NSS polish left the admissible region".into()))?;
    Ok(NssFit {
        params: NssParams::new(beta, tau1, tau2)?,
        rmse,
    })
}

/// Reads `maturity_years,zero_rate` observations.
pub fn load_curve_observations(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::parse(1, e.to_string()))?;
    if headers.len() != 2 || &headers[0] != "maturity_years" || &headers[1] != "zero_rate" {
        return Err(Error::parse(1, "curve header must be 'maturity_years,zero_rate'"));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(0, e.to_string()))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse = |i: usize| {
            record[i]
                .parse::<f64>()
                .map_err(|_| Error::parse(line, format!("bad number '{}'", &record[i])))
        };
        out.push((parse(0)?, parse(1)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Closed form written out term by term, without the shared helpers.
    fn reference_rate(b: [f64; 4], tau1: f64, tau2: f64, t: f64) -> f64 {
        let x = t / tau1;
        let y = t / tau2;
        let g1 = (1.0 - (-x).exp()) / x;
        let g2 = g1 - (-x).exp();
        let h2 = (1.0 - (-y).exp()) / y - (-y).exp();
        b[0] + b[1] * g1 + b[2] * g2 + b[3] * h2
    }

    #[test]
    fn flat_curve() {
        let c = NssParams::flat(0.03);
        for t in [0.1, 1.0, 7.0, 30.0] {
            assert!((c.zero_rate(t).unwrap() - 0.03).abs() < 1e-15);
        }
        assert_eq!(c.discount_factor(0.0), 1.0);
        assert!((c.discount_factor(1.0) - (-0.03f64).exp()).abs() < 1e-15);
        assert!((c.discount_factor(1.0) - 0.970_445_533_548_508).abs() < 1e-12);
        assert!((c.discount_factor(10.0) - (-0.3f64).exp()).abs() < 1e-15);
        assert!(c.zero_rate(0.0).is_err());
    }

    #[test]
    fn closed_form_and_limits() {
        let b = [0.04, -0.01, 0.005, 0.002];
        let c = NssParams::new(b, 1.5, 10.0).unwrap();
        assert!((c.zero_rate(5.0).unwrap() - reference_rate(b, 1.5, 10.0, 5.0)).abs() < 1e-15);
        assert!((c.zero_rate(1e-10).unwrap() - (b[0] + b[1])).abs() < 1e-9);
        assert!((c.zero_rate(1e7).unwrap() - b[0]).abs() < 1e-6);
        for i in 1..400 {
            let t = i as f64 * 0.1;
            assert!((c.zero_rate(t).unwrap() - reference_rate(b, 1.5, 10.0, t)).abs() < 1e-14);
        }
    }

    fn grid_obs(c: &NssParams) -> Vec<(f64, f64)> {
        [0.25, 0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 20.0, 30.0]
            .iter()
            .map(|&t| (t, c.zero_rate(t).unwrap()))
            .collect()
    }

    #[test]
    fn fit_recovers_noise_free_curve() {
        let truth = NssParams::new([0.04, -0.01, 0.005, 0.002], 1.5, 10.0).unwrap();
        let obs = grid_obs(&truth);
        let fit = fit_nss(&obs).unwrap();
        assert!(fit.rmse < 1e-6, "rmse {}", fit.rmse);
        for &(t, r) in &obs {
            assert!((fit.params.zero_rate(t).unwrap() - r).abs() < 1e-6);
        }
    }

    #[test]
    fn fit_with_one_bp_noise() {
        let truth = NssParams::new([0.045, -0.02, 0.01, -0.005], 2.0, 7.0).unwrap();
        let noise = [1.0, -1.0, 0.5, -0.5, 1.0, -1.0, 0.0, 1.0, -1.0, 0.5];
        let obs: Vec<(f64, f64)> = grid_obs(&truth)
            .into_iter()
            .zip(noise)
            .map(|((t, r), e)| (t, r + e * 1e-4))
            .collect();
        let fit = fit_nss(&obs).unwrap();
        assert!(fit.rmse <= 2e-4, "rmse {}", fit.rmse);
    }

    #[test]
    fn fit_rejections() {
        assert!(fit_nss(&[(1.0, 0.03), (2.0, 0.03), (3.0, 0.03)]).is_err());
        assert!(fit_nss(&[(1.0, 0.03); 8]).is_err());
    }

    proptest! {
        #[test]
        fn discount_decreasing_for_positive_flat(rate in 1e-4f64..0.2, t in 0.0f64..50.0, dt in 1e-3f64..5.0) {
            let c = NssParams::flat(rate);
            prop_assert!(c.discount_factor(t + dt) < c.discount_factor(t));
        }

        #[test]
        fn matches_reference_on_grid(
            b0 in -0.05f64..0.1, b1 in -0.05f64..0.05, b2 in -0.05f64..0.05, b3 in -0.05f64..0.05,
            tau1 in 0.2f64..15.0, tau2 in 0.2f64..15.0, t in 0.01f64..40.0,
        ) {
            let c = NssParams::new([b0, b1, b2, b3], tau1, tau2).unwrap();
            let r = reference_rate([b0, b1, b2, b3], tau1, tau2, t);
            prop_assert!((c.zero_rate(t).unwrap() - r).abs() < 1e-13);
        }
    }
}

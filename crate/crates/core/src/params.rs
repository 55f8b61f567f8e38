//! Run-level model parameters.

use crate::error::{Error, Result};

/// How asset correlations are assigned to borrowers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoMode {
    /// Basel IRB function of the one-year PD.
    Irb,
    /// The same value for every borrower.
    Fixed(f64),
}

impl RhoMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RhoMode::Irb => Ok(()),
            RhoMode::Fixed(r) if (0.0..1.0).contains(&r) => Ok(()),
            RhoMode::Fixed(r) => Err(Error::invalid(format!("fixed correlation {r} outside [0, 1)"))),
        }
    }
}

impl std::fmt::Display for RhoMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RhoMode::Irb => write!(f, "irb"),
            RhoMode::Fixed(r) => write!(f, "fixed({r})"),
        }
    }
}

pub const MIN_SCENARIOS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskParams {
    pub q: f64,
    pub scenarios: usize,
    pub seed: u64,
    /// LGD volatility multiplier applied by run-level overrides.
    pub nu: f64,
    /// Gamma precision of the analytic approximation.
    pub xi: f64,
    /// Market Sharpe ratio for the risk-neutral transform.
    pub psi: f64,
    pub rho_mode: RhoMode,
    /// Correlation used inside the risk-neutral transform; `None` follows
    /// `rho_mode`.
    pub pricing_rho: Option<RhoMode>,
    /// Risk horizon `T` in years.
    pub horizon: f64,
    /// Clamp maturities to `[1, 5]` in the maturity adjustment.
    pub ma_clamp: bool,
    /// Coupon accrual period in years.
    pub accrual: f64,
}

impl Default for RiskParams {
    fn default() -> Self {
        RiskParams {
            q: 0.999,
            scenarios: 4_000_000,
            seed: 20_230_101,
            nu: 0.0,
            xi: 0.25,
            psi: 0.4,
            rho_mode: RhoMode::Irb,
            pricing_rho: None,
            horizon: 1.0,
            ma_clamp: true,
            accrual: 0.5,
        }
    }
}

impl RiskParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::invalid(format!("q = {} outside (0, 1)", self.q)));
        }
        if self.scenarios < MIN_SCENARIOS {
            return Err(Error::invalid(format!(
                "scenario count {} below the minimum {MIN_SCENARIOS}",
                self.scenarios
            )));
        }
        if !(0.0..=1.0).contains(&self.nu) {
            return Err(Error::invalid(format!("nu = {} outside [0, 1]", self.nu)));
        }
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(Error::invalid(format!("xi = {} must be positive", self.xi)));
        }
        if !self.psi.is_finite() {
            return Err(Error::invalid("psi must be finite"));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::invalid("horizon must be positive"));
        }
        if !(self.accrual > 0.0 && self.accrual <= 1.0) {
            return Err(Error::invalid("accrual must lie in (0, 1]"));
        }
        self.rho_mode.validate()?;
        if let Some(m) = self.pricing_rho {
            m.validate()?;
        }
        Ok(())
    }

    pub fn pricing_rho_mode(&self) -> RhoMode {
        self.pricing_rho.unwrap_or(self.rho_mode)
    }
}

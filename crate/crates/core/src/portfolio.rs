//! Borrower-level loan portfolios and their CSV representation.
//!
//! Header: `borrower_id,exposure,rating,maturity_years[,coupon_rate][,elgd]`.
//! Lines starting with `#` are comments. Missing or empty `maturity_years`,
//! `coupon_rate` and `elgd` cells fall back to [`LoadOptions`].

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ratings::RatingScale;

/// Loss-given-default distribution: mean `elgd` and volatility multiplier
/// `nu`, with `VLGD² = nu · elgd · (1 - elgd)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LgdSpec {
    pub elgd: f64,
    pub nu: f64,
}

impl LgdSpec {
    pub fn new(elgd: f64, nu: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&elgd) {
            return Err(Error::invalid(format!("ELGD {elgd} outside [0, 1]")));
        }
        if !(0.0..=1.0).contains(&nu) {
            return Err(Error::invalid(format!("LGD volatility multiplier {nu} outside [0, 1]")));
        }
        Ok(LgdSpec { elgd, nu })
    }

    pub fn deterministic(elgd: f64) -> Result<Self> {
        Self::new(elgd, 0.0)
    }

    /// LGD variance `VLGD²`.
    pub fn variance(&self) -> f64 {
        self.nu * self.elgd * (1.0 - self.elgd)
    }

    pub fn is_random(&self) -> bool {
        self.variance() > 0.0
    }

    /// Beta shape parameters matching the mean and variance, when random.
    pub fn beta_shapes(&self) -> Option<(f64, f64)> {
        if !self.is_random() {
            return None;
        }
        let k = 1.0 / self.nu - 1.0;
        Some((self.elgd * k, (1.0 - self.elgd) * k))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoanPosition {
    pub borrower_id: String,
    pub exposure: f64,
    /// Grade index on the portfolio's rating scale (never the default grade).
    pub rating: usize,
    pub maturity: f64,
    pub coupon: f64,
    pub lgd: LgdSpec,
    /// Whether the ELGD was given per borrower rather than taken from the run.
    pub elgd_explicit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    positions: Vec<LoanPosition>,
    scale_id: String,
}

/// Defaults applied to cells absent from a portfolio file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    pub default_elgd: f64,
    pub nu: f64,
    pub default_coupon: f64,
    pub default_maturity: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            default_elgd: 0.45,
            nu: 0.0,
            default_coupon: 0.01,
            default_maturity: 1.0,
        }
    }
}

const COLUMNS: [&str; 6] = [
    "borrower_id",
    "exposure",
    "rating",
    "maturity_years",
    "coupon_rate",
    "elgd",
];

impl Portfolio {
    pub fn new(positions: Vec<LoanPosition>, scale: &RatingScale) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::EmptyPortfolio);
        }
        let mut ids = HashSet::new();
        for p in &positions {
            if !ids.insert(p.borrower_id.as_str()) {
                return Err(Error::DuplicateBorrower(p.borrower_id.clone()));
            }
            let who = &p.borrower_id;
            if !(p.exposure > 0.0 && p.exposure.is_finite()) {
                return Err(Error::invalid(format!("borrower {who}: exposure must be positive")));
            }
            if !(p.maturity > 0.0 && p.maturity.is_finite()) {
                return Err(Error::invalid(format!("borrower {who}: maturity must be positive")));
            }
            if !(0.0..1.0).contains(&p.coupon) {
                return Err(Error::invalid(format!("borrower {who}: coupon must lie in [0, 1)")));
            }
            if p.rating == 0 || p.rating >= scale.len() {
                return Err(Error::invalid(format!(
                    "borrower {who}: rating must be a non-default grade"
                )));
            }
            LgdSpec::new(p.lgd.elgd, p.lgd.nu).map_err(|e| Error::invalid(format!("borrower {who}: {e}")))?;
        }
        Ok(Portfolio {
            positions,
            scale_id: scale.id().to_string(),
        })
    }

    pub fn positions(&self) -> &[LoanPosition] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn scale_id(&self) -> &str {
        &self.scale_id
    }

    pub fn total_exposure(&self) -> f64 {
        self.positions.iter().map(|p| p.exposure).sum()
    }

    /// Exposure shares `a_n = A_n / Σ A_i`, in position order.
    pub fn exposure_shares(&self) -> Vec<f64> {
        let total = self.total_exposure();
        self.positions.iter().map(|p| p.exposure / total).collect()
    }

    /// Applies run-level LGD settings: `elgd` where no per-borrower value was
    /// given, and `nu` everywhere.
    pub fn with_run_lgd(&self, elgd: f64, nu: f64) -> Result<Self> {
        LgdSpec::new(elgd, nu)?;
        let mut out = self.clone();
        for p in &mut out.positions {
            let e = if p.elgd_explicit { p.lgd.elgd } else { elgd };
            p.lgd = LgdSpec::new(e, nu)?;
        }
        Ok(out)
    }

    /// Copy with every maturity replaced.
    pub fn with_maturity(&self, maturity: f64) -> Result<Self> {
        if !(maturity > 0.0) {
            return Err(Error::invalid("maturity must be positive"));
        }
        let mut out = self.clone();
        out.positions.iter_mut().for_each(|p| p.maturity = maturity);
        Ok(out)
    }

    /// Copy with every coupon replaced.
    pub fn with_coupon(&self, coupon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&coupon) {
            return Err(Error::invalid("coupon must lie in [0, 1)"));
        }
        let mut out = self.clone();
        out.positions.iter_mut().for_each(|p| p.coupon = coupon);
        Ok(out)
    }

    /// Exposure-weighted average maturity.
    pub fn average_maturity(&self) -> f64 {
        let shares = self.exposure_shares();
        shares.iter().zip(&self.positions).map(|(a, p)| a * p.maturity).sum()
    }

    pub fn to_csv_string(&self, scale: &RatingScale) -> String {
        let mut out = String::from("borrower_id,exposure,rating,maturity_years,coupon_rate,elgd\n");
        for p in &self.positions {
            let elgd = if p.elgd_explicit {
                p.lgd.elgd.to_string()
            } else {
                String::new()
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.borrower_id,
                p.exposure,
                scale.symbol(p.rating),
                p.maturity,
                p.coupon,
                elgd
            ));
        }
        out
    }
}

pub fn load_portfolio(path: &Path, scale: &RatingScale, options: &LoadOptions) -> Result<Portfolio> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_portfolio(&text, scale, options)
}

pub fn parse_portfolio(text: &str, scale: &RatingScale, options: &LoadOptions) -> Result<Portfolio> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::parse(1, e.to_string()))?.clone();
    let mut index = [None; 6];
    for (i, h) in headers.iter().enumerate() {
        let col = COLUMNS
            .iter()
            .position(|c| *c == h)
            .ok_or_else(|| Error::parse(1, format!("unknown column '{h}'")))?;
        if index[col].replace(i).is_some() {
            return Err(Error::parse(1, format!("duplicate column '{h}'")));
        }
    }
    for required in 0..3 {
        if index[required].is_none() {
            return Err(Error::parse(1, format!("missing column '{}'", COLUMNS[required])));
        }
    }

    let mut positions = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let cell = |col: usize| index[col].and_then(|i| record.get(i)).filter(|s| !s.is_empty());
        let number = |col: usize| -> Result<Option<f64>> {
            cell(col)
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::parse(line, format!("bad {} '{s}'", COLUMNS[col])))
                })
                .transpose()
        };

        let borrower_id = cell(0)
            .ok_or_else(|| Error::parse(line, "empty borrower_id"))?
            .to_string();
        let exposure = number(1)?.ok_or_else(|| Error::parse(line, "empty exposure"))?;
        if !(exposure > 0.0) {
            return Err(Error::parse(
                line,
                format!("borrower {borrower_id}: exposure must be positive"),
            ));
        }
        let symbol = cell(2).ok_or_else(|| Error::parse(line, "empty rating"))?;
        let rating = scale
            .index_of(symbol)
            .filter(|&g| g != 0)
            .ok_or_else(|| Error::UnknownRating {
                symbol: symbol.to_string(),
                borrower: Some(borrower_id.clone()),
            })?;
        let maturity = number(3)?.unwrap_or(options.default_maturity);
        let coupon = number(4)?.unwrap_or(options.default_coupon);
        let explicit = number(5)?;
        let lgd = LgdSpec::new(explicit.unwrap_or(options.default_elgd), options.nu)
            .map_err(|e| Error::parse(line, format!("borrower {borrower_id}: {e}")))?;
        positions.push(LoanPosition {
            borrower_id,
            exposure,
            rating,
            maturity,
            coupon,
            lgd,
            elgd_explicit: explicit.is_some(),
        });
    }
    Portfolio::new(positions, scale)
}

//! Synthetic development-bank-shaped portfolios.
//!
//! Per-borrower exposures of the real portfolios are not public, so the
//! fixtures only reproduce summary statistics: borrower count, total
//! exposure, exposure-weighted average PD and maturity, and a steep
//! exposure profile in which the largest tenth of borrowers holds about half
//! of the exposure.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mc::scenario_rng;
use crate::portfolio::{LgdSpec, LoanPosition, Portfolio};
use crate::ratings::TransitionMatrix;

/// Maturity used where none is published: the mean of the published ones.
pub const FALLBACK_MATURITY: f64 = 5.43;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPortfolioSpec {
    pub name: String,
    pub n_borrowers: usize,
    pub total_exposure: f64,
    /// Exposure-weighted one-year PD, as a fraction.
    pub avg_pd: f64,
    /// Exposure-weighted maturity in years.
    pub avg_maturity: f64,
    pub seed: u64,
}

/// `(name, borrowers, total exposure in millions, average PD in percent,
/// average maturity)`.
pub const MDB_SUMMARY: [(&str, usize, f64, f64, Option<f64>); 11] = [
    ("CAF", 16, 28_574.0, 1.46, Some(5.09)),
    ("ADB", 38, 145_036.0, 0.18, Some(8.20)),
    ("AFDB", 29, 28_174.0, 1.46, Some(5.62)),
    ("IDB", 26, 108_520.0, 0.90, Some(8.48)),
    ("CDB", 16, 1_327.0, 2.38, None),
    ("CABEI", 11, 9_255.0, 1.46, Some(5.39)),
    ("EADB", 4, 135.0, 2.38, Some(2.82)),
    ("IBRD", 78, 229_344.0, 0.40, Some(7.08)),
    ("TDB", 21, 6_506.0, 51.47, Some(1.64)),
    ("BOAD", 8, 3_868.0, 2.38, Some(4.59)),
    ("EBRD", 38, 47_272.0, 0.90, None),
];

const BASE_SEED: u64 = 0x004D_4442_3230_3232;

pub fn mdb_specs() -> Vec<SyntheticPortfolioSpec> {
    MDB_SUMMARY
        .iter()
        .enumerate()
        .map(|(i, &(name, n, total, pd, m))| SyntheticPortfolioSpec {
            name: name.to_string(),
            n_borrowers: n,
            total_exposure: total,
            avg_pd: pd / 100.0,
            avg_maturity: m.unwrap_or(FALLBACK_MATURITY),
            seed: BASE_SEED + i as u64,
        })
        .collect()
}

/// Ten borrowers around B+, one-year loans.
pub fn ten_borrower_spec() -> SyntheticPortfolioSpec {
    SyntheticPortfolioSpec {
        name: "TEN".into(),
        n_borrowers: 10,
        total_exposure: 1_000.0,
        avg_pd: 0.0146,
        avg_maturity: 1.0,
        seed: BASE_SEED + 100,
    }
}

/// Twelve Cs-rated borrowers, five-year loans. The rating level mirrors the
/// TDB-shaped portfolio, the lowest-rated of the bank fixtures.
pub fn low_rated_spec() -> SyntheticPortfolioSpec {
    SyntheticPortfolioSpec {
        name: "LOWRATED".into(),
        n_borrowers: 12,
        total_exposure: 1_000.0,
        avg_pd: 0.5147,
        avg_maturity: 5.0,
        seed: BASE_SEED + 101,
    }
}

/// Descending geometric exposure shares. For ten or more borrowers the ratio
/// `2^{-10/N}` puts half of the exposure on the top tenth and three quarters
/// on the top fifth; smaller portfolios use ratio 1/2.
pub fn share_profile(n: usize) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let ratio = 2f64.powf(-10.0 / n as f64).max(0.5);
    let raw: Vec<f64> = (0..n).map(|k| ratio.powi(k as i32)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

/// Share of exposure held by the largest `fraction` of borrowers, linearly
/// interpolated between whole borrowers.
pub fn top_share(shares: &[f64], fraction: f64) -> f64 {
    let mut sorted = shares.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = sorted.iter().sum();
    let count = fraction * sorted.len() as f64;
    let whole = count.floor() as usize;
    let mut acc: f64 = sorted[..whole.min(sorted.len())].iter().sum();
    if whole < sorted.len() {
        acc += (count - whole as f64) * sorted[whole];
    }
    acc / total
}

pub fn weighted_average_pd(p: &Portfolio, tm: &TransitionMatrix) -> f64 {
    p.exposure_shares()
        .iter()
        .zip(p.positions())
        .map(|(a, pos)| a * tm.default_prob(pos.rating))
        .sum()
}

fn weighted_pd(shares: &[f64], grades: &[usize], tm: &TransitionMatrix) -> f64 {
    shares.iter().zip(grades).map(|(a, &g)| a * tm.default_prob(g)).sum()
}

const PD_TOLERANCE: f64 = 0.02;

/// Builds a portfolio matching the given summary statistics,
/// deterministically from its seed.
pub fn generate_synthetic(spec: &SyntheticPortfolioSpec, tm: &TransitionMatrix) -> Result<Portfolio> {
    if spec.n_borrowers == 0 {
        return Err(Error::EmptyPortfolio);
    }
    if !(spec.total_exposure > 0.0 && spec.avg_maturity > 0.0) {
        return Err(Error::invalid("total exposure and maturity must be positive"));
    }
    let scale = tm.scale();
    let best = scale.len() - 1;
    let pds: Vec<f64> = (0..scale.len()).map(|g| tm.default_prob(g)).collect();
    let lo = pds[1..].iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = pds[1..].iter().cloned().fold(0.0, f64::max);
    let slack = 1e-9 * spec.avg_pd.abs();
    if !(spec.avg_pd >= lo - slack && spec.avg_pd <= hi + slack) {
        return Err(Error::invalid(format!(
            "average PD {} not achievable with grade PDs in [{lo}, {hi}]",
            spec.avg_pd
        )));
    }
    let target = (1..=best)
        .min_by(|&a, &b| (pds[a] - spec.avg_pd).abs().total_cmp(&(pds[b] - spec.avg_pd).abs()))
        .unwrap_or(1);

    let mut rng = scenario_rng(spec.seed, 0);
    let shares = share_profile(spec.n_borrowers);
    let n = spec.n_borrowers;

    // Spread grades by paired moves that keep the average PD close.
    let mut grades = vec![target; n];
    if n >= 2 {
        for _ in 0..4 * n {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i == j || grades[i] >= best || grades[j] <= 1 {
                continue;
            }
            let (gi, gj) = (grades[i] + 1, grades[j] - 1);
            if gi.abs_diff(target) > 2 || gj.abs_diff(target) > 2 {
                continue;
            }
            let mut trial = grades.clone();
            trial[i] = gi;
            trial[j] = gj;
            let avg = weighted_pd(&shares, &trial, tm);
            if ((avg - spec.avg_pd) / spec.avg_pd).abs() <= PD_TOLERANCE {
                grades = trial;
            }
        }
    }

    // Maturities uniform around the mean, rescaled to hit it, at least a year.
    let mut maturities: Vec<f64> = (0..n).map(|_| spec.avg_maturity * rng.random_range(0.5..1.5)).collect();
    for _ in 0..50 {
        let avg: f64 = shares.iter().zip(&maturities).map(|(a, m)| a * m).sum();
        let k = spec.avg_maturity / avg;
        maturities.iter_mut().for_each(|m| *m = (*m * k).max(1.0));
    }

    let positions = (0..n)
        .map(|i| LoanPosition {
            borrower_id: format!("{}-{:02}", spec.name, i + 1),
            exposure: round2(spec.total_exposure * shares[i]).max(0.01),
            rating: grades[i],
            maturity: round2(maturities[i]).max(1.0),
            coupon: 0.01,
            lgd: LgdSpec::deterministic(0.45).expect("constant LGD is valid"),
            elgd_explicit: false,
        })
        .collect();
    Portfolio::new(positions, scale)
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// CSV text of a generated fixture, with a provenance comment.
pub fn fixture_csv(spec: &SyntheticPortfolioSpec, tm: &TransitionMatrix) -> Result<String> {
    let p = generate_synthetic(spec, tm)?;
    let mut out = format!(
        "# synthetic portfolio {}: {} borrowers, total {}, avg PD {:.6}, avg maturity {}, seed {}\n",
        spec.name, spec.n_borrowers, spec.total_exposure, spec.avg_pd, spec.avg_maturity, spec.seed
    );
    out.push_str(&p.to_csv_string(tm.scale()));
    Ok(out)
}

/// All bundled fixture specs: the eleven bank-shaped portfolios followed by
/// the ten-borrower and low-rated portfolios.
pub fn all_specs() -> Vec<SyntheticPortfolioSpec> {
    let mut v = mdb_specs();
    v.push(ten_borrower_spec());
    v.push(low_rated_spec());
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tm() -> TransitionMatrix {
        TransitionMatrix::bundled_sovereign()
    }

    #[test]
    fn profile_concentration() {
        for n in [10, 16, 26, 38, 78] {
            let s = share_profile(n);
            assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((top_share(&s, 0.1) - 0.5).abs() <= 0.05, "n={n}");
            assert!((top_share(&s, 0.2) - 0.75).abs() <= 0.05, "n={n}");
        }
        assert_eq!(share_profile(1), vec![1.0]);
    }

    #[test]
    fn generated_portfolios_hit_targets() {
        let tm = tm();
        for spec in all_specs() {
            let p = generate_synthetic(&spec, &tm).unwrap();
            assert_eq!(p.len(), spec.n_borrowers);
            let pd = weighted_average_pd(&p, &tm);
            assert!(
                ((pd - spec.avg_pd) / spec.avg_pd).abs() <= 0.05,
                "{} pd {pd}",
                spec.name
            );
            let m = p.average_maturity();
            assert!(
                ((m - spec.avg_maturity) / spec.avg_maturity).abs() <= 0.05,
                "{} maturity {m}",
                spec.name
            );
            let total = p.total_exposure();
            assert!(
                ((total - spec.total_exposure) / spec.total_exposure).abs() <= 0.01,
                "{}",
                spec.name
            );
        }
    }

    #[test]
    fn single_borrower_takes_nearest_grade() {
        let tm = tm();
        let spec = SyntheticPortfolioSpec {
            name: "ONE".into(),
            n_borrowers: 1,
            total_exposure: 10.0,
            avg_pd: 0.025,
            avg_maturity: 3.0,
            seed: 1,
        };
        let p = generate_synthetic(&spec, &tm).unwrap();
        assert_eq!(tm.scale().symbol(p.positions()[0].rating), "B");
    }

    #[test]
    fn generation_is_deterministic() {
        let tm = tm();
        let spec = &mdb_specs()[7];
        assert_eq!(fixture_csv(spec, &tm).unwrap(), fixture_csv(spec, &tm).unwrap());
    }

    #[test]
    fn infeasible_pd_rejected() {
        let tm = tm();
        let mut spec = ten_borrower_spec();
        spec.avg_pd = 0.9;
        assert!(generate_synthetic(&spec, &tm).is_err());
    }

    fn shipped_dir() -> std::path::PathBuf {
        std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/portfolios")
    }

    // The shipped portfolio files must match the generator from the stored
    // seeds. Set `NAMERISK_UPDATE_FIXTURES=1` to rewrite them.
    #[test]
    fn shipped_portfolios_match_generator() {
        let tm = tm();
        let update = std::env::var_os("NAMERISK_UPDATE_FIXTURES").is_some();
        for spec in all_specs() {
            let path = shipped_dir().join(format!("{}.csv", spec.name));
            let fresh = fixture_csv(&spec, &tm).unwrap();
            if update {
                std::fs::write(&path, &fresh).unwrap();
                continue;
            }
            let shipped = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(shipped, fresh, "{} drifted from its generator", spec.name);
        }
    }

    #[test]
    fn shipped_portfolios_load_back() {
        let tm = tm();
        for spec in all_specs() {
            let path = shipped_dir().join(format!("{}.csv", spec.name));
            let loaded =
                crate::portfolio::load_portfolio(&path, tm.scale(), &crate::portfolio::LoadOptions::default()).unwrap();
            let generated = generate_synthetic(&spec, &tm).unwrap();
            assert_eq!(loaded.positions(), generated.positions(), "{}", spec.name);
        }
    }
}

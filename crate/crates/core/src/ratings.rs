//! Rating scales, annual transition matrices and what is derived from them:
//! migration thresholds, cumulative default-probability term structures and
//! the risk-neutral default-probability transform.
//!
//! Grades are indexed from the absorbing default state `D` at index 0 up to
//! the best grade at index `S`. Files list grades the other way round
//! (best first, `D` last) and are reversed on load.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::normal;

/// Symbol of the absorbing default state.
pub const DEFAULT_SYMBOL: &str = "D";
/// Symbol of the consolidated bottom grade produced by [`normalize_and_merge`].
pub const MERGED_SYMBOL: &str = "Cs";
/// Column label for withdrawn ratings in raw matrices.
pub const NOT_RATED_SYMBOL: &str = "NR";

/// Clip applied to cumulative probabilities before threshold inversion.
pub const THRESHOLD_EPS: f64 = 1e-12;

/// Allowed deviation (in percentage points) of a row sum from 100 in a file.
/// Published tables are rounded to two decimals and do not add up exactly.
const PERCENT_ROW_TOLERANCE: f64 = 0.05;

const BUNDLED_CSV: &str = include_str!("../fixtures/sovereign_fc_normalized.csv");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingScale {
    id: String,
    grades: Vec<String>,
}

impl RatingScale {
    /// Builds a scale from grades listed worst to best, `D` first.
    pub fn new(id: impl Into<String>, grades_worst_first: Vec<String>) -> Result<Self> {
        if grades_worst_first.first().map(String::as_str) != Some(DEFAULT_SYMBOL) {
            return Err(Error::invalid("rating scale must start with the default grade 'D'"));
        }
        if grades_worst_first.len() < 2 {
            return Err(Error::invalid("rating scale needs at least one non-default grade"));
        }
        let mut seen = HashSet::new();
        for g in &grades_worst_first {
            if !seen.insert(g.as_str()) {
                return Err(Error::invalid(format!("duplicate grade symbol '{g}'")));
            }
        }
        Ok(RatingScale {
            id: id.into(),
            grades: grades_worst_first,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Number of grades including default.
    pub fn len(&self) -> usize {
        self.grades.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grades.is_empty()
    }

    /// Number of non-default grades, `S`.
    pub fn non_default_count(&self) -> usize {
        self.grades.len() - 1
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.grades.iter().position(|g| g == symbol)
    }

    pub fn symbol(&self, index: usize) -> &str {
        &self.grades[index]
    }

    /// Grades worst first.
    pub fn grades(&self) -> &[String] {
        &self.grades
    }
}

/// Row-stochastic matrix over a [`RatingScale`]; `p[g][s]` is the probability
/// of moving from grade `g` to grade `s` over `horizon` years.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    scale: RatingScale,
    p: Vec<Vec<f64>>,
    horizon: f64,
}

impl TransitionMatrix {
    pub fn new(scale: RatingScale, p: Vec<Vec<f64>>, horizon: f64) -> Result<Self> {
        let k = scale.len();
        if p.len() != k || p.iter().any(|row| row.len() != k) {
            return Err(Error::invalid(format!("transition matrix must be {k}x{k}")));
        }
        for (g, row) in p.iter().enumerate() {
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::invalid(format!(
                    "row '{}' has entries outside [0, 1]",
                    scale.symbol(g)
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("row '{}' sums to {sum}", scale.symbol(g))));
            }
        }
        if p[0][0] != 1.0 {
            return Err(Error::invalid("default row must be absorbing"));
        }
        if !(horizon > 0.0) {
            return Err(Error::invalid("matrix horizon must be positive"));
        }
        Ok(TransitionMatrix { scale, p, horizon })
    }

    /// The bundled sovereign foreign-currency matrix (one-year, NR removed,
    /// CCC+ and below merged into `Cs`).
    pub fn bundled_sovereign() -> Self {
        Self::from_csv_str(BUNDLED_CSV, "sovereign-fc").expect("bundled matrix is valid")
    }

    /// Raw text of the bundled matrix file.
    pub fn bundled_csv() -> &'static str {
        BUNDLED_CSV
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_csv_str(&text, &id)
    }

    /// Parses a percent matrix without an `NR` column. Each row is rescaled
    /// to sum to exactly one; rows off by more than 0.05pp are rejected.
    pub fn from_csv_str(text: &str, id: &str) -> Result<Self> {
        let parsed = parse_percent_table(text)?;
        if parsed.columns.iter().any(|c| c == NOT_RATED_SYMBOL) {
            return Err(Error::invalid(
                "matrix has an NR column; normalize it with normalize_and_merge first",
            ));
        }
        let columns = &parsed.columns;
        if columns.last().map(String::as_str) != Some(DEFAULT_SYMBOL) {
            return Err(Error::invalid("last matrix column must be 'D'"));
        }
        let mut worst_first: Vec<String> = columns.clone();
        worst_first.reverse();
        let scale = RatingScale::new(id, worst_first)?;
        let k = scale.len();
        let mut p = vec![vec![0.0; k]; k];
        let mut filled = vec![false; k];
        for row in &parsed.rows {
            let g = scale.index_of(&row.from).ok_or_else(|| Error::UnknownRating {
                symbol: row.from.clone(),
                borrower: None,
            })?;
            if filled[g] {
                return Err(Error::parse(
                    row.line,
                    format!("duplicate row for grade '{}'", row.from),
                ));
            }
            filled[g] = true;
            let sum: f64 = row.values.iter().sum();
            if (sum - 100.0).abs() > PERCENT_ROW_TOLERANCE {
                return Err(Error::parse(row.line, format!("row '{}' sums to {sum}%", row.from)));
            }
            for (j, v) in row.values.iter().enumerate() {
                p[g][k - 1 - j] = v / sum;
            }
        }
        if !filled[0] {
            p[0][0] = 1.0;
            filled[0] = true;
        }
        if let Some(missing) = filled.iter().position(|f| !f) {
            return Err(Error::invalid(format!(
                "missing row for grade '{}'",
                scale.symbol(missing)
            )));
        }
        TransitionMatrix::new(scale, p, 1.0)
    }

    pub fn scale(&self) -> &RatingScale {
        &self.scale
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.p[from][to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.p[from]
    }

    /// One-period default probability of grade `g`.
    pub fn default_prob(&self, g: usize) -> f64 {
        self.p[g][0]
    }

    /// Matrix product `self · other` over the same scale.
    pub fn compose(&self, other: &TransitionMatrix) -> TransitionMatrix {
        let p = mat_mul(&self.p, &other.p);
        TransitionMatrix {
            scale: self.scale.clone(),
            p,
            horizon: self.horizon + other.horizon,
        }
    }

    /// Serialises in the percent CSV layout (best grade first).
    pub fn to_csv_string(&self) -> String {
        let k = self.scale.len();
        let order: Vec<usize> = (0..k).rev().collect();
        let mut out = String::from("grade");
        for &j in &order {
            out.push(',');
            out.push_str(self.scale.symbol(j));
        }
        out.push('\n');
        for &g in &order {
            out.push_str(self.scale.symbol(g));
            for &j in &order {
                out.push_str(&format!(",{}", self.p[g][j] * 100.0));
            }
            out.push('\n');
        }
        out
    }
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = a.len();
    let mut out = vec![vec![0.0; k]; k];
    for i in 0..k {
        for l in 0..k {
            let ail = a[i][l];
            if ail == 0.0 {
                continue;
            }
            for j in 0..k {
                out[i][j] += ail * b[l][j];
            }
        }
    }
    out
}

struct PercentRow {
    line: usize,
    from: String,
    values: Vec<f64>,
}

struct PercentTable {
    columns: Vec<String>,
    rows: Vec<PercentRow>,
}

fn parse_percent_table(text: &str) -> Result<PercentTable> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty matrix file"))?;
    let cells: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    let mut rows = Vec::new();
    let mut width = None;
    for (line, raw) in lines {
        let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
        let from = parts[0].to_string();
        let values = parts[1..]
            .iter()
            .map(|v| {
                let x: f64 = v.parse().map_err(|_| Error::parse(line, format!("bad number '{v}'")))?;
                if !(0.0..=100.0).contains(&x) {
                    return Err(Error::parse(line, format!("probability {x}% outside [0, 100]")));
                }
                Ok(x)
            })
            .collect::<Result<Vec<f64>>>()?;
        if *width.get_or_insert(values.len()) != values.len() {
            return Err(Error::parse(line, "ragged matrix row"));
        }
        rows.push(PercentRow { line, from, values });
    }
    let width = width.ok_or_else(|| Error::parse(1, "matrix has no data rows"))?;
    // The header may or may not carry a label cell above the row names.
    let columns = if cells.len() == width + 1 {
        cells[1..].to_vec()
    } else if cells.len() == width {
        cells
    } else {
        return Err(Error::parse(1, "header width does not match rows"));
    };
    Ok(PercentTable { columns, rows })
}

/// Transition table as published, with an `NR` (rating withdrawn) column and
/// possibly more granular bottom grades. Probabilities are fractions.
#[derive(Debug, Clone)]
pub struct RawTransitionMatrix {
    /// Non-default grades, best first.
    pub grades: Vec<String>,
    /// `rows[i][j]`: from `grades[i]` to `grades[j]`; last entry is to `D`.
    pub rows: Vec<Vec<f64>>,
    /// Probability of moving to `NR`, per source grade.
    pub not_rated: Vec<f64>,
}

impl RawTransitionMatrix {
    /// Parses a percent table whose columns are the grades best first, then
    /// `D` and `NR` in either order. A `D` row, if present, is ignored.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let parsed = parse_percent_table(text)?;
        let nr_col = parsed
            .columns
            .iter()
            .position(|c| c == NOT_RATED_SYMBOL)
            .ok_or_else(|| Error::invalid("raw matrix needs an NR column"))?;
        let d_col = parsed
            .columns
            .iter()
            .position(|c| c == DEFAULT_SYMBOL)
            .ok_or_else(|| Error::invalid("raw matrix needs a D column"))?;
        let grade_cols: Vec<usize> = (0..parsed.columns.len())
            .filter(|&j| j != nr_col && j != d_col)
            .collect();
        let grades: Vec<String> = grade_cols.iter().map(|&j| parsed.columns[j].clone()).collect();
        let mut rows = vec![Vec::new(); grades.len()];
        let mut not_rated = vec![f64::NAN; grades.len()];
        for row in &parsed.rows {
            if row.from == DEFAULT_SYMBOL {
                continue;
            }
            let i = grades
                .iter()
                .position(|g| *g == row.from)
                .ok_or_else(|| Error::UnknownRating {
                    symbol: row.from.clone(),
                    borrower: None,
                })?;
            let mut r: Vec<f64> = grade_cols.iter().map(|&j| row.values[j] / 100.0).collect();
            r.push(row.values[d_col] / 100.0);
            rows[i] = r;
            not_rated[i] = row.values[nr_col] / 100.0;
        }
        if let Some(i) = rows.iter().position(Vec::is_empty) {
            return Err(Error::invalid(format!("missing row for grade '{}'", grades[i])));
        }
        Ok(RawTransitionMatrix {
            grades,
            rows,
            not_rated,
        })
    }
}

/// Removes the `NR` column by rescaling each row with `1 / (1 - p_NR)` and
/// consolidates `merge_from` and every worse non-default grade into a single
/// `Cs` grade. Destination probabilities of merged grades are added up; the
/// merged source row is the unweighted average of the source rows.
pub fn normalize_and_merge(raw: &RawTransitionMatrix, merge_from: &str) -> Result<TransitionMatrix> {
    let n = raw.grades.len();
    let cut = raw
        .grades
        .iter()
        .position(|g| g == merge_from)
        .ok_or_else(|| Error::UnknownRating {
            symbol: merge_from.to_string(),
            borrower: None,
        })?;

    let mut normalized = Vec::with_capacity(n);
    for (i, row) in raw.rows.iter().enumerate() {
        let nr = raw.not_rated[i];
        if nr >= 1.0 {
            return Err(Error::invalid(format!(
                "grade '{}' moves to NR with probability 1",
                raw.grades[i]
            )));
        }
        let total: f64 = row.iter().sum::<f64>() + nr;
        if (total - 1.0).abs() > PERCENT_ROW_TOLERANCE / 100.0 {
            return Err(Error::invalid(format!("raw row '{}' sums to {total}", raw.grades[i])));
        }
        normalized.push(row.iter().map(|v| v / (1.0 - nr)).collect::<Vec<f64>>());
    }

    // Columns: kept grades best first, then Cs, then D.
    let kept = cut;
    let width = kept + 2;
    let collapse = |row: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; width];
        out[..kept].copy_from_slice(&row[..kept]);
        out[kept] = row[kept..n].iter().sum();
        out[kept + 1] = row[n];
        out
    };
    let mut best_first: Vec<Vec<f64>> = normalized[..kept].iter().map(|r| collapse(r)).collect();
    let merged_rows: Vec<Vec<f64>> = normalized[kept..].iter().map(|r| collapse(r)).collect();
    let mut merged = vec![0.0; width];
    for r in &merged_rows {
        for (m, v) in merged.iter_mut().zip(r) {
            *m += v / merged_rows.len() as f64;
        }
    }
    best_first.push(merged);

    let mut symbols: Vec<String> = raw.grades[..kept].to_vec();
    symbols.push(MERGED_SYMBOL.to_string());
    symbols.push(DEFAULT_SYMBOL.to_string());
    let mut worst_first = symbols.clone();
    worst_first.reverse();
    let scale = RatingScale::new("normalized", worst_first)?;
    let k = scale.len();
    let mut p = vec![vec![0.0; k]; k];
    p[0][0] = 1.0;
    for (i, row) in best_first.iter().enumerate() {
        let g = k - 1 - i;
        let sum: f64 = row.iter().sum();
        for (j, v) in row.iter().enumerate() {
            p[g][k - 1 - j] = v / sum;
        }
    }
    TransitionMatrix::new(scale, p, 1.0)
}

/// Latent-return cutoffs `C[g][s] = Φ⁻¹(Σ_{i≤s} p[g][i])` for `s < S`.
/// `C[g][-1] = -∞` and `C[g][S] = +∞` are implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    cuts: Vec<Vec<f64>>,
}

impl ThresholdTable {
    /// Finite cutoffs of grade `g`, ascending; state `s` is occupied when
    /// `cuts[s-1] < y <= cuts[s]`.
    pub fn cuts(&self, g: usize) -> &[f64] {
        &self.cuts[g]
    }

    pub fn get(&self, g: usize, s: isize) -> f64 {
        let row = &self.cuts[g];
        if s < 0 {
            f64::NEG_INFINITY
        } else if s as usize >= row.len() {
            f64::INFINITY
        } else {
            row[s as usize]
        }
    }
}

pub fn thresholds(tm: &TransitionMatrix) -> ThresholdTable {
    let k = tm.scale.len();
    let cuts = (0..k)
        .map(|g| {
            let mut cum = 0.0;
            let mut row = Vec::with_capacity(k - 1);
            for s in 0..k - 1 {
                cum += tm.p[g][s];
                row.push(normal::inv_cdf_clamped(cum, THRESHOLD_EPS));
            }
            // Guard against rounding making the cumulative sum dip.
            for s in 1..row.len() {
                if row[s] < row[s - 1] {
                    row[s] = row[s - 1];
                }
            }
            row
        })
        .collect();
    ThresholdTable { cuts }
}

/// Cumulative default probabilities `p_g(0, t)` from powers of a one-year
/// matrix, tabulated at integer years and interpolated linearly in between.
#[derive(Debug, Clone)]
pub struct PdTermStructure {
    /// `cumulative[y][g]`
    cumulative: Vec<Vec<f64>>,
}

impl PdTermStructure {
    pub fn new(tm: &TransitionMatrix, max_years: usize) -> Self {
        let k = tm.scale.len();
        let mut cumulative = vec![vec![0.0; k]];
        let mut power = tm.p.clone();
        cumulative.push((0..k).map(|g| power[g][0]).collect());
        for _ in 1..max_years.max(1) {
            power = mat_mul(&power, &tm.p);
            cumulative.push((0..k).map(|g| power[g][0]).collect());
        }
        // Default is absorbing so powers are monotone; enforce against rounding.
        for y in 1..cumulative.len() {
            for g in 0..k {
                if cumulative[y][g] < cumulative[y - 1][g] {
                    cumulative[y][g] = cumulative[y - 1][g];
                }
            }
        }
        PdTermStructure { cumulative }
    }

    pub fn max_years(&self) -> usize {
        self.cumulative.len() - 1
    }

    /// `p_g(0, t)`; beyond the tabulated range the last year is held.
    pub fn pd(&self, g: usize, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let max = self.max_years() as f64;
        let t = t.min(max);
        let lo = t.floor() as usize;
        let frac = t - lo as f64;
        if frac == 0.0 {
            return self.cumulative[lo][g];
        }
        let a = self.cumulative[lo][g];
        let b = self.cumulative[lo + 1][g];
        a + frac * (b - a)
    }
}

/// Cumulative default probability of grade `g` over `t` years.
pub fn pd_term_structure(tm: &TransitionMatrix, g: usize, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    PdTermStructure::new(tm, t.ceil() as usize).pd(g, t)
}

/// KMV-style risk-neutral default probability
/// `Φ(Φ⁻¹(p) + ψ·√horizon·√ρ)`.
pub fn risk_neutral_pd(p: f64, rho: f64, horizon: f64, psi: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!(
            "risk-neutral transform needs 0 < p < 1, got {p}"
        )));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::invalid(format!("correlation {rho} outside [0, 1)")));
    }
    if !(horizon > 0.0) {
        return Err(Error::invalid("risk-neutral horizon must be positive"));
    }
    let shift = psi * horizon.sqrt() * rho.sqrt();
    if shift == 0.0 {
        return Ok(p);
    }
    Ok(normal::cdf(normal::inv_cdf(p) + shift))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundled() -> TransitionMatrix {
        TransitionMatrix::bundled_sovereign()
    }

    #[test]
    fn bundled_matrix_layout() {
        let tm = bundled();
        assert_eq!(tm.scale().len(), 18);
        assert_eq!(tm.scale().symbol(0), "D");
        assert_eq!(tm.scale().symbol(17), "AAA");
        let cs = tm.scale().index_of("Cs").unwrap();
        assert_eq!(cs, 1);
        assert!((tm.default_prob(cs) - 0.5147).abs() < 1e-15);
        let aaa = tm.scale().index_of("AAA").unwrap();
        assert!((tm.prob(aaa, aaa) - 0.9679).abs() < 1e-12);
        for g in 0..18 {
            assert!((tm.row(g).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn threshold_examples() {
        let scale = RatingScale::new("t", vec!["D".into(), "A".into()]).unwrap();
        let tm = TransitionMatrix::new(scale, vec![vec![1.0, 0.0], vec![0.5, 0.5]], 1.0).unwrap();
        let th = thresholds(&tm);
        assert_eq!(th.get(1, 0), 0.0);
        assert_eq!(th.get(1, -1), f64::NEG_INFINITY);
        assert_eq!(th.get(1, 1), f64::INFINITY);

        let tm = bundled();
        let th = thresholds(&tm);
        let bm = tm.scale().index_of("B-").unwrap();
        // B- defaults with 7.59% (row sums to 99.99% in the table).
        let pd = tm.default_prob(bm);
        assert!((pd - 0.0759 / 0.9999).abs() < 1e-12);
        assert!((th.get(bm, 0) - (-1.433)).abs() < 1e-3);

        // Cs reaches cumulative 1 before the top of the scale; cut stays finite.
        let cs = tm.scale().index_of("Cs").unwrap();
        let top = th.cuts(cs).last().copied().unwrap();
        assert!(top.is_finite());
        assert!((top - normal::inv_cdf(1.0 - THRESHOLD_EPS)).abs() < 1e-12);
        for g in 0..tm.scale().len() {
            assert!(th.cuts(g).windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn term_structure_examples() {
        let tm = bundled();
        let cs = tm.scale().index_of("Cs").unwrap();
        assert_eq!(pd_term_structure(&tm, cs, 0.0), 0.0);
        assert!((pd_term_structure(&tm, cs, 1.0) - 0.5147).abs() < 1e-15);
        let ts = PdTermStructure::new(&tm, 3);
        let half = ts.pd(cs, 1.5);
        assert!((half - 0.5 * (ts.pd(cs, 1.0) + ts.pd(cs, 2.0))).abs() < 1e-15);
    }

    #[test]
    fn risk_neutral_examples() {
        assert_eq!(risk_neutral_pd(0.01, 0.35, 1.0, 0.0).unwrap(), 0.01);
        assert!((risk_neutral_pd(0.01, 0.0, 3.0, 0.4).unwrap() - 0.01).abs() < 1e-17);
        let v = risk_neutral_pd(0.01, 0.35, 1.0, 0.4).unwrap();
        assert!((v - 0.0183).abs() < 1e-4, "{v}");
        assert!(risk_neutral_pd(0.0, 0.2, 1.0, 0.4).is_err());
        assert!(risk_neutral_pd(1.0, 0.2, 1.0, 0.4).is_err());
    }

    #[test]
    fn identity_raw_matrix_is_unchanged() {
        let text = "grade,A,B,D,NR\nA,100,0,0,0\nB,0,100,0,0\n";
        let raw = RawTransitionMatrix::from_csv_str(text).unwrap();
        let tm = normalize_and_merge(&raw, "B").unwrap();
        assert_eq!(tm.scale().grades(), &["D".to_string(), "Cs".into(), "A".into()]);
        for g in 0..3 {
            for s in 0..3 {
                assert_eq!(tm.prob(g, s), if g == s { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn normalize_rescales_and_merges() {
        let text = "\
grade,A,B,C,D,NR
A,80,5,5,0,10
B,10,60,10,10,10
C,0,20,40,20,20
";
        let raw = RawTransitionMatrix::from_csv_str(text).unwrap();
        let tm = normalize_and_merge(&raw, "B").unwrap();
        let a = tm.scale().index_of("A").unwrap();
        let cs = tm.scale().index_of("Cs").unwrap();
        assert!((tm.prob(a, a) - 80.0 / 90.0).abs() < 1e-12);
        assert!((tm.prob(a, cs) - 10.0 / 90.0).abs() < 1e-12);
        // merged row: average of B (10/90, 70/90, 10/90) and C (0, 60/80, 20/80)
        let expected_d = 0.5 * (10.0 / 90.0 + 20.0 / 80.0);
        assert!((tm.prob(cs, 0) - expected_d).abs() < 1e-12);
        assert!((tm.row(cs).iter().sum::<f64>() - 1.0).abs() < 1e-12);

        assert!(normalize_and_merge(&raw, "ZZ").is_err());
        let all_nr = "grade,A,D,NR\nA,0,0,100\n";
        let raw = RawTransitionMatrix::from_csv_str(all_nr).unwrap();
        assert!(normalize_and_merge(&raw, "A").is_err());
    }

    #[test]
    fn rejects_bad_files() {
        assert!(TransitionMatrix::from_csv_str("grade,A,D\nA,90,5\n", "x").is_err());
        assert!(TransitionMatrix::from_csv_str("grade,A,D\nA,90,x\n", "x").is_err());
        assert!(TransitionMatrix::from_csv_str("grade,A,D,NR\nA,90,5,5\n", "x").is_err());
        assert!(TransitionMatrix::from_csv_str("grade,A,D\nZ,95,5\n", "x").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let tm = bundled();
        let again = TransitionMatrix::from_csv_str(&tm.to_csv_string(), "sovereign-fc").unwrap();
        for g in 0..18 {
            for s in 0..18 {
                assert!((tm.prob(g, s) - again.prob(g, s)).abs() < 1e-15);
            }
        }
    }
}

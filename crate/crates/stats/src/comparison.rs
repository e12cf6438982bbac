use crate::special::{chi2_sf, f_sf};
use crate::StatsError;

/// Below this many discordant pairs McNemar uses the exact binomial test.
pub const MCNEMAR_EXACT_BELOW: u64 = 25;
pub const DEFAULT_ALPHA: f64 = 0.05;

/// N×L binary table: `rows[i][j]` is whether instance i was classified
/// correctly by classifier j.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrectnessMatrix {
    pub classifiers: Vec<String>,
    rows: Vec<Vec<bool>>,
}

impl CorrectnessMatrix {
    pub fn new(classifiers: Vec<String>, rows: Vec<Vec<bool>>) -> Result<Self, StatsError> {
        let l = classifiers.len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != l {
                return Err(StatsError::Ragged { row: i, got: r.len(), expected: l });
            }
        }
        Ok(Self { classifiers, rows })
    }

    /// Unnamed columns `c0, c1, ...` from 0/1 rows.
    pub fn from_bits(rows: &[&[u8]]) -> Result<Self, StatsError> {
        let l = rows.first().map_or(0, |r| r.len());
        let names = (0..l).map(|j| format!("c{j}")).collect();
        Self::new(names, rows.iter().map(|r| r.iter().map(|&x| x != 0).collect()).collect())
    }

    /// Builds the table from per-classifier predictions against one truth vector.
    pub fn from_predictions(
        classifiers: Vec<String>,
        truth: &[usize],
        predictions: &[Vec<usize>],
    ) -> Result<Self, StatsError> {
        if classifiers.len() != predictions.len() {
            return Err(StatsError::LengthMismatch(classifiers.len(), predictions.len()));
        }
        for p in predictions {
            if p.len() != truth.len() {
                return Err(StatsError::LengthMismatch(p.len(), truth.len()));
            }
        }
        let rows = (0..truth.len())
            .map(|i| predictions.iter().map(|p| p[i] == truth[i]).collect())
            .collect();
        Self::new(classifiers, rows)
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn l(&self) -> usize {
        self.classifiers.len()
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }

    pub fn column(&self, j: usize) -> Vec<bool> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn column_totals(&self) -> Vec<u64> {
        (0..self.l()).map(|j| self.rows.iter().filter(|r| r[j]).count() as u64).collect()
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.iter().filter(|&&x| x).count() as u64).collect()
    }

    fn require(&self, min_rows: usize) -> Result<(), StatsError> {
        if self.rows.is_empty() || self.l() == 0 {
            return Err(StatsError::Empty);
        }
        if self.l() < 2 {
            return Err(StatsError::TooSmall { what: "classifiers", need: 2, got: self.l() });
        }
        if self.n() < min_rows {
            return Err(StatsError::TooSmall { what: "rows", need: min_rows, got: self.n() });
        }
        Ok(())
    }

    /// (T, ΣG², ΣR²) as exact integers.
    fn sums(&self) -> (i128, i128, i128) {
        let g = self.column_totals();
        let r = self.row_totals();
        let t: u64 = g.iter().sum();
        let sq = |v: &[u64]| v.iter().map(|&x| (x as i128) * (x as i128)).sum::<i128>();
        (t as i128, sq(&g), sq(&r))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Df {
    One(f64),
    Two(f64, f64),
}

impl std::fmt::Display for Df {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Df::One(d) => write!(f, "{d}"),
            Df::Two(a, b) => write!(f, "{a},{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatTestResult {
    pub statistic: f64,
    pub df: Df,
    pub p_value: f64,
    pub p_adjusted: f64,
    pub comparisons: usize,
    pub alpha: f64,
    pub significant: bool,
    pub degenerate: bool,
    pub method: &'static str,
}

impl StatTestResult {
    fn new(statistic: f64, df: Df, p_value: f64, degenerate: bool, method: &'static str) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            statistic,
            df,
            p_value,
            p_adjusted: p_value,
            comparisons: 1,
            alpha: DEFAULT_ALPHA,
            significant: p_value < DEFAULT_ALPHA,
            degenerate,
            method,
        }
    }

    /// Applies a Bonferroni correction for `m` comparisons at level `alpha`.
    pub fn adjusted(mut self, m: usize, alpha: f64) -> Self {
        self.comparisons = m.max(1);
        self.alpha = alpha;
        self.p_adjusted = bonferroni_one(self.p_value, self.comparisons);
        self.significant = self.p_adjusted < alpha;
        self
    }
}

fn bonferroni_one(p: f64, m: usize) -> f64 {
    (p * m as f64).min(1.0)
}

/// p' = min(1, m·p) for each p.
pub fn bonferroni(p_values: &[f64], m: usize) -> Vec<f64> {
    p_values.iter().map(|&p| bonferroni_one(p, m)).collect()
}

/// Cochran's Q over the classifiers of a correctness matrix.
pub fn cochran_q(m: &CorrectnessMatrix) -> Result<StatTestResult, StatsError> {
    m.require(1)?;
    let l = m.l() as i128;
    let (t, g2, r2) = m.sums();
    let df = (l - 1) as f64;
    let den = l * t - r2;
    if den == 0 {
        return Ok(StatTestResult::new(0.0, Df::One(df), 1.0, true, "cochran_q"));
    }
    let q = ((l - 1) * (l * g2 - t * t)) as f64 / den as f64;
    Ok(StatTestResult::new(q, Df::One(df), chi2_sf(q, df)?, false, "cochran_q"))
}

/// Repeated-measures one-way ANOVA F on the 0/1 entries, classifiers as
/// the within-subject factor.
pub fn rm_anova_f(m: &CorrectnessMatrix) -> Result<StatTestResult, StatsError> {
    m.require(2)?;
    let (n, l) = (m.n() as i128, m.l() as i128);
    let (t, g2, r2) = m.sums();
    // sums of squares scaled by N·L, exact on binary data where Σx² = T
    let ss_treat = l * g2 - t * t;
    let ss_err = n * l * t - l * g2 - n * r2 + t * t;
    let (df1, df2) = ((l - 1) as f64, ((l - 1) * (n - 1)) as f64);
    let df = Df::Two(df1, df2);
    if ss_err == 0 {
        return Ok(if ss_treat == 0 {
            StatTestResult::new(0.0, df, 1.0, true, "rm_anova_f")
        } else {
            StatTestResult::new(f64::INFINITY, df, 0.0, true, "rm_anova_f")
        });
    }
    let f = (ss_treat as f64 / df1) / (ss_err as f64 / df2);
    Ok(StatTestResult::new(f, df, f_sf(f, df1, df2)?, false, "rm_anova_f"))
}

/// Discordant counts (b: A right, B wrong; c: A wrong, B right).
pub fn discordant(correct_a: &[bool], correct_b: &[bool]) -> Result<(u64, u64), StatsError> {
    if correct_a.len() != correct_b.len() {
        return Err(StatsError::LengthMismatch(correct_a.len(), correct_b.len()));
    }
    let b = correct_a.iter().zip(correct_b).filter(|(a, b)| **a && !**b).count() as u64;
    let c = correct_a.iter().zip(correct_b).filter(|(a, b)| !**a && **b).count() as u64;
    Ok((b, c))
}

/// Two-sided exact binomial p for `k = min(b, c)` of `n` at ½.
pub fn mcnemar_exact(b: u64, c: u64) -> f64 {
    let n = b + c;
    let k = b.min(c);
    let mut coef = 1.0f64;
    let mut tail = 0.0f64;
    for i in 0..=k {
        tail += coef;
        coef = coef * (n - i) as f64 / (i + 1) as f64;
    }
    (2.0 * tail * 0.5f64.powi(n as i32)).min(1.0)
}

/// Continuity-corrected chi-square statistic and p with one df.
pub fn mcnemar_chi2(b: u64, c: u64) -> (f64, f64) {
    let n = (b + c) as f64;
    if n == 0.0 {
        return (0.0, 1.0);
    }
    let d = (b.abs_diff(c) as f64 - 1.0).max(0.0);
    let stat = d * d / n;
    (stat, chi2_sf(stat, 1.0).expect("df 1 is valid"))
}

pub fn mcnemar_counts(b: u64, c: u64) -> StatTestResult {
    if b + c == 0 {
        StatTestResult::new(0.0, Df::One(1.0), 1.0, true, "mcnemar_exact")
    } else if b + c < MCNEMAR_EXACT_BELOW {
        StatTestResult::new(b.min(c) as f64, Df::One(1.0), mcnemar_exact(b, c), false, "mcnemar_exact")
    } else {
        let (stat, p) = mcnemar_chi2(b, c);
        StatTestResult::new(stat, Df::One(1.0), p, false, "mcnemar_chi2")
    }
}

pub fn mcnemar(correct_a: &[bool], correct_b: &[bool]) -> Result<StatTestResult, StatsError> {
    let (b, c) = discordant(correct_a, correct_b)?;
    Ok(mcnemar_counts(b, c))
}

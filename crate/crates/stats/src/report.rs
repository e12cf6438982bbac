//! Plain-text and CSV tables for accuracy, per-label F1, omnibus tests and
//! pairwise McNemar grids.
//!
//! Numbers render with three decimals; an infinite statistic renders as
//! `inf`; the McNemar grid diagonal is always `NA`.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn fmt3(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else if x.is_nan() {
        "nan".to_string()
    } else {
        let s = format!("{x:.3}");
        if s == "-0.000" { "0.000".to_string() } else { s }
    }
}

impl Table {
    pub fn new(title: impl Into<String>, headers: &[&str]) -> Self {
        Self {
            title: title.into(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.headers.len(), "row width");
        self.rows.push(row);
    }

    pub fn cell(&self, row: usize, header: &str) -> Option<&str> {
        let col = self.headers.iter().position(|h| h == header)?;
        self.rows.get(row).map(|r| r[col].as_str())
    }

    /// Title line, then left-aligned columns separated by two spaces.
    pub fn to_text(&self) -> String {
        let widths: Vec<usize> = (0..self.headers.len())
            .map(|c| {
                std::iter::once(&self.headers[c])
                    .chain(self.rows.iter().map(|r| &r[c]))
                    .map(|s| s.chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = format!("{}\n", self.title);
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
                if i + 1 == cells.len() {
                    s.push_str(c);
                } else {
                    let _ = write!(s, "{c:<w$}  ");
                }
            }
            s.trim_end().to_string()
        };
        out.push_str(&line(&self.headers));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let esc = |s: &String| {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.clone()
            }
        };
        let mut out = String::new();
        for r in std::iter::once(&self.headers).chain(&self.rows) {
            out.push_str(&r.iter().map(esc).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

/// Mean and standard deviation of accuracy per technique and model.
pub struct AccuracyRow<'a> {
    pub technique: &'a str,
    pub model: &'a str,
    pub mean: f64,
    pub std: f64,
}

pub fn accuracy_table(rows: &[AccuracyRow]) -> Table {
    let mut t = Table::new("Accuracy by labelling technique", &["technique", "model", "accuracy_mean", "accuracy_std"]);
    for r in rows {
        t.push(vec![r.technique.into(), r.model.into(), fmt3(r.mean), fmt3(r.std)]);
    }
    t
}

pub struct F1Row<'a> {
    pub technique: &'a str,
    pub model: &'a str,
    pub f1: Vec<f64>,
}

pub fn f1_table(labels: &[&str], rows: &[F1Row]) -> Table {
    let mut headers = vec!["technique", "model"];
    headers.extend_from_slice(labels);
    let mut t = Table::new("F1 score per label", &headers);
    for r in rows {
        assert_eq!(r.f1.len(), labels.len(), "one F1 per label");
        let mut row = vec![r.technique.to_string(), r.model.to_string()];
        row.extend(r.f1.iter().map(|&v| fmt3(v)));
        t.push(row);
    }
    t
}

/// One technique's omnibus results: Q with its adjusted p, F with its p.
pub struct OmnibusRow<'a> {
    pub technique: &'a str,
    pub q: f64,
    pub q_p: f64,
    pub f: f64,
    pub f_p: f64,
}

pub fn omnibus_table(rows: &[OmnibusRow], comparisons: usize) -> Table {
    let title = format!(
        "Cochran's Q and repeated-measures F comparing models (Bonferroni m = {comparisons})"
    );
    let mut t = Table::new(title, &["technique", "Q", "Q_p", "F", "F_p"]);
    for r in rows {
        t.push(vec![r.technique.into(), fmt3(r.q), fmt3(r.q_p), fmt3(r.f), fmt3(r.f_p)]);
    }
    t
}

/// Symmetric grid of pairwise p values with `NA` on the diagonal.
/// `p(i, j)` is only called for `i < j`.
pub fn mcnemar_grid(title: &str, names: &[&str], mut p: impl FnMut(usize, usize) -> f64) -> Table {
    let mut headers = vec![""];
    headers.extend_from_slice(names);
    let mut t = Table::new(title, &headers);
    let n = names.len();
    let mut grid = vec![vec![String::from("NA"); n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = fmt3(p(i, j));
            grid[i][j] = v.clone();
            grid[j][i] = v;
        }
    }
    for (name, cells) in names.iter().zip(grid) {
        let mut row = vec![name.to_string()];
        row.extend(cells);
        t.push(row);
    }
    t
}

//! Per-category L1 error tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RegressionError;

pub const ALL: &str = "All";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Cell {
    /// `None` for an empty slice.
    pub fn from_errors(errors: &[f64]) -> Option<Self> {
        if errors.is_empty() {
            return None;
        }
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for &e in errors {
            min = min.min(e);
            max = max.max(e);
            sum += e;
        }
        let mean = (sum / errors.len() as f64).clamp(min, max);
        Some(Self { mean, min, max })
    }

    pub fn render(&self) -> String {
        format!("{:.3}/{:.3}/{:.3}", self.mean, self.min, self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub source: String,
    pub cells: BTreeMap<String, Cell>,
}

/// Rows are training sources, columns are test categories with `All` last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub categories: Vec<String>,
    pub counts: BTreeMap<String, usize>,
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn row(&self, source: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.source == source)
    }

    pub fn cell(&self, source: &str, category: &str) -> Option<&Cell> {
        self.row(source)?.cells.get(category)
    }

    /// Appends the rows of `other`, which must cover the same test set.
    pub fn merge(&mut self, other: EvalReport) -> Result<(), RegressionError> {
        if self.rows.is_empty() && self.categories.is_empty() {
            *self = other;
            return Ok(());
        }
        if other.categories != self.categories || other.counts != self.counts {
            return Err(RegressionError::Report(
                "reports cover different test sets".into(),
            ));
        }
        for r in other.rows {
            if self.row(&r.source).is_some() {
                return Err(RegressionError::Report(format!("duplicate row {}", r.source)));
            }
            self.rows.push(r);
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, RegressionError> {
        serde_json::from_str(text).map_err(|e| RegressionError::Report(e.to_string()))
    }
}

const SOURCE_HEADER: &str = "Training source";
const COUNT_ROW: &str = "Samples";
const MISSING: &str = "-";

/// Plain-text table, one cell per category as `mean/min/max`, followed by a
/// row of sample counts.
pub fn render_report(report: &EvalReport) -> String {
    let mut table: Vec<Vec<String>> = Vec::new();
    let mut header = vec![SOURCE_HEADER.to_owned()];
    header.extend(report.categories.iter().cloned());
    table.push(header);
    for r in &report.rows {
        let mut line = vec![r.source.clone()];
        line.extend(report.categories.iter().map(|c| {
            r.cells
                .get(c)
                .map_or_else(|| MISSING.to_owned(), Cell::render)
        }));
        table.push(line);
    }
    let mut counts = vec![COUNT_ROW.to_owned()];
    counts.extend(
        report
            .categories
            .iter()
            .map(|c| report.counts.get(c).copied().unwrap_or(0).to_string()),
    );
    table.push(counts);

    let cols = table[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|j| table.iter().map(|row| row[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in table.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:<w$}"))
            .collect();
        out.push_str(cells.join(" | ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            out.push_str(&rule.join("-+-"));
            out.push('\n');
        }
    }
    out
}

/// Inverse of [`render_report`] up to the three printed decimals.
pub fn parse_report(text: &str) -> Result<EvalReport, RegressionError> {
    let bad = |m: String| RegressionError::Report(m);
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() < 3 {
        return Err(bad("table too short".into()));
    }
    let split = |l: &str| -> Vec<String> { l.split(" | ").map(|c| c.trim().to_owned()).collect() };
    let header = split(lines[0]);
    if header.first().map(String::as_str) != Some(SOURCE_HEADER) {
        return Err(bad("missing header".into()));
    }
    let categories: Vec<String> = header[1..].to_vec();
    let count_line = split(lines[lines.len() - 1]);
    if count_line.first().map(String::as_str) != Some(COUNT_ROW)
        || count_line.len() != header.len()
    {
        return Err(bad("missing sample counts".into()));
    }
    let mut counts = BTreeMap::new();
    for (c, v) in categories.iter().zip(&count_line[1..]) {
        counts.insert(
            c.clone(),
            v.parse().map_err(|_| bad(format!("bad count {v}")))?,
        );
    }
    let mut rows = Vec::new();
    for l in &lines[2..lines.len() - 1] {
        let fields = split(l);
        if fields.len() != header.len() {
            return Err(bad(format!("row has {} fields: {l}", fields.len())));
        }
        let mut cells = BTreeMap::new();
        for (c, v) in categories.iter().zip(&fields[1..]) {
            if v == MISSING {
                continue;
            }
            let parts: Vec<f64> = v
                .split('/')
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| bad(format!("bad cell {v}")))?;
            let [mean, min, max] = parts[..] else {
                return Err(bad(format!("bad cell {v}")));
            };
            cells.insert(c.clone(), Cell { mean, min, max });
        }
        rows.push(ReportRow {
            source: fields[0].clone(),
            cells,
        });
    }
    Ok(EvalReport {
        categories,
        counts,
        rows,
    })
}

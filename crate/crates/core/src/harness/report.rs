use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::spec::{canonical_index, row_label};
use super::HarnessError;
use crate::context::AblationSpec;
use crate::corpus::Split;

/// One evaluated cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub column: String,
    pub label: String,
    pub ablation: AblationSpec,
    pub split: Split,
    pub n: usize,
    pub mae: Option<f64>,
    /// Against the same column's text-only row.
    pub relative_improvement_vs_text_only: Option<f64>,
    pub parse_failures: usize,
    pub fallbacks: usize,
    /// Set when the cell failed; the metric fields are then empty.
    pub error: Option<String>,
}

impl MetricsRow {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub rows: Vec<MetricsRow>,
}

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TABLE: &str = "table.txt";

impl MatrixReport {
    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(MetricsRow::failed)
    }

    /// Columns in first-appearance order.
    pub fn columns(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.column) {
                out.push(r.column.clone());
            }
        }
        out
    }

    /// Row labels: canonical ones in standard order, then others in
    /// first-appearance order.
    pub fn labels(&self) -> Vec<String> {
        let mut keyed: Vec<(usize, usize, String)> = Vec::new();
        for (i, r) in self.rows.iter().enumerate() {
            if keyed.iter().any(|(_, _, l)| l == &r.label) {
                continue;
            }
            let rank = canonical_index(&r.ablation).unwrap_or(usize::MAX);
            keyed.push((rank, i, r.label.clone()));
        }
        keyed.sort();
        keyed.into_iter().map(|(_, _, l)| l).collect()
    }

    /// Fills `relative_improvement_vs_text_only` from each column's text-only row.
    pub fn compute_relative_improvements(&mut self) {
        let baselines: BTreeMap<String, f64> = self
            .rows
            .iter()
            .filter(|r| r.ablation == AblationSpec::TEXT_ONLY)
            .filter_map(|r| r.mae.map(|m| (r.column.clone(), m)))
            .collect();
        for r in &mut self.rows {
            r.relative_improvement_vs_text_only = match (baselines.get(&r.column), r.mae) {
                (Some(&b), Some(m)) => super::relative_improvement(b, m).ok(),
                _ => None,
            };
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("report: {e}")))
    }

    /// Aligned text table, rows by configuration and columns by predictor.
    /// Each column's minimum MAE (all ties) is wrapped in `**`.
    pub fn render_table(&self) -> String {
        let columns = self.columns();
        let labels = self.labels();
        let cell = |label: &str, column: &str| self.rows.iter().find(|r| r.label == label && &r.column == column);
        let minima: Vec<Option<String>> = columns
            .iter()
            .map(|c| {
                self.rows
                    .iter()
                    .filter(|r| &r.column == c)
                    .filter_map(|r| r.mae)
                    .map(|m| format!("{m:.2}"))
                    .min_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()))
            })
            .collect();

        let mut grid: Vec<Vec<String>> = vec![std::iter::once("Configuration".to_string()).chain(columns.iter().cloned()).collect()];
        for label in &labels {
            let mut line = vec![label.clone()];
            for (c, min) in columns.iter().zip(&minima) {
                line.push(match cell(label, c) {
                    None => "-".to_string(),
                    Some(r) if r.failed() => "ERR".to_string(),
                    Some(r) => {
                        let v = format!("{:.2}", r.mae.expect("successful rows carry an MAE"));
                        if Some(&v) == min.as_ref() {
                            format!("**{v}**")
                        } else {
                            v
                        }
                    }
                });
            }
            grid.push(line);
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|j| grid.iter().map(|row| row[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &grid {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (c, &w))| if j == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// Writes `report.json` and `table.txt` into `dir`.
pub fn render_report(report: &MatrixReport, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if report.rows.is_empty() {
        return Err(HarnessError::Config("cannot render an empty report".into()));
    }
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let json = dir.join(REPORT_JSON);
    fs::write(&json, report.to_json()).map_err(io(&json))?;
    let table = dir.join(REPORT_TABLE);
    fs::write(&table, report.render_table()).map_err(io(&table))?;
    Ok(vec![json, table])
}

/// A successful row, mostly for fixtures and tests.
pub fn row(column: &str, ablation: AblationSpec, split: Split, mae: f64, n: usize) -> MetricsRow {
    MetricsRow {
        column: column.to_string(),
        label: row_label(&ablation),
        ablation,
        split,
        n,
        mae: Some(mae),
        relative_improvement_vs_text_only: None,
        parse_failures: 0,
        fallbacks: 0,
        error: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_row_table() {
        let report = MatrixReport {
            rows: vec![row("m", AblationSpec::TEXT_ONLY, Split::Dev, 0.5, 10)],
        };
        let table = report.render_table();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "Configuration         m");
        assert_eq!(lines[1], "Text only      **0.50**");
    }

    #[test]
    fn json_round_trip() {
        let mut report = MatrixReport {
            rows: vec![
                row("a", AblationSpec::TEXT_ONLY, Split::Test, 0.75, 4),
                row("a", AblationSpec::full(), Split::Test, 0.61, 4),
            ],
        };
        report.rows.push(MetricsRow {
            error: Some("boom".into()),
            mae: None,
            ..row("b", AblationSpec::full(), Split::Test, 0.0, 0)
        });
        report.compute_relative_improvements();
        let back = MatrixReport::from_json(&report.to_json()).unwrap();
        assert_eq!(back, report);
        assert!(back.render_table().contains("ERR"));
    }

    #[test]
    fn empty_report_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(render_report(&MatrixReport::default(), dir.path()).is_err());
    }
}

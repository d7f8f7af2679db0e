//! Results tables: one row per training configuration, an (F1, EM) column
//! pair per evaluation dataset. A row holding several reports for the same
//! dataset (one per training seed) shows their mean.

use serde::{Deserialize, Serialize};

use super::config::ReportFormat;
use crate::metrics::{format_score, round_one_decimal, EvalReport};

/// Column order of the results table.
pub const TABLE_DATASETS: [&str; 5] = ["SQUAD", "NewWiki", "NYT", "Amazon", "Reddit"];

/// Maps common spellings (`new_wiki`, `amazon_reviews`, `squad-v1.1`) onto a
/// table column name. Unknown names pass through unchanged.
pub fn canonical_dataset(name: &str) -> String {
    let key: String = name.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_lowercase();
    let key = key.trim_end_matches("v10").trim_end_matches("v11").trim_end_matches("test");
    match key {
        "squad" | "squaddev" => "SQUAD",
        "newwiki" | "wiki" => "NewWiki",
        "nyt" | "newyorktimes" => "NYT",
        "amazon" | "amazonreviews" => "Amazon",
        "reddit" => "Reddit",
        _ => return name.to_string(),
    }
    .to_string()
}

#[derive(Debug, Clone)]
pub struct ReportGroup {
    pub name: String,
    pub reports: Vec<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub f1: f64,
    pub em: f64,
    pub f1_std: f64,
    pub em_std: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub name: String,
    pub cells: Vec<Option<Cell>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub datasets: Vec<String>,
    pub rows: Vec<TableRow>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn build_table(groups: &[ReportGroup]) -> ResultsTable {
    let mut datasets: Vec<String> = TABLE_DATASETS.iter().map(|s| s.to_string()).collect();
    for g in groups {
        for r in &g.reports {
            let name = canonical_dataset(&r.dataset_name);
            if !datasets.contains(&name) {
                datasets.push(name);
            }
        }
    }
    let present: Vec<Vec<bool>> = groups
        .iter()
        .map(|g| {
            datasets
                .iter()
                .map(|d| g.reports.iter().any(|r| &canonical_dataset(&r.dataset_name) == d))
                .collect()
        })
        .collect();
    let rows = groups
        .iter()
        .zip(&present)
        .map(|(g, mine)| {
            let cells = datasets
                .iter()
                .map(|d| {
                    let hits: Vec<&EvalReport> =
                        g.reports.iter().filter(|r| &canonical_dataset(&r.dataset_name) == d).collect();
                    if hits.is_empty() {
                        return None;
                    }
                    let (f1, f1_std) = mean_std(&hits.iter().map(|r| r.f1).collect::<Vec<_>>());
                    let (em, em_std) = mean_std(&hits.iter().map(|r| r.em).collect::<Vec<_>>());
                    Some(Cell { f1, em, f1_std, em_std, seeds: hits.len() })
                })
                .collect();
            let missing: Vec<&str> = datasets
                .iter()
                .enumerate()
                .filter(|&(i, _)| !mine[i] && present.iter().any(|other| other[i]))
                .map(|(_, d)| d.as_str())
                .collect();
            let warnings = if missing.is_empty() {
                Vec::new()
            } else {
                vec![format!("missing datasets: {}", missing.join(", "))]
            };
            TableRow { name: g.name.clone(), cells, warnings }
        })
        .collect();
    ResultsTable { datasets, rows }
}

impl ResultsTable {
    fn has_warnings(&self) -> bool {
        self.rows.iter().any(|r| !r.warnings.is_empty())
    }

    fn header(&self, with_std: bool) -> Vec<String> {
        let mut h = vec!["Dataset".to_string()];
        for d in &self.datasets {
            h.push(format!("{d} F1"));
            h.push(format!("{d} EM"));
            if with_std {
                h.push(format!("{d} F1 std"));
                h.push(format!("{d} EM std"));
            }
        }
        if self.has_warnings() {
            h.push("Warnings".into());
        }
        h
    }

    fn record(&self, row: &TableRow, with_std: bool) -> Vec<String> {
        let mut out = vec![row.name.clone()];
        for cell in &row.cells {
            match cell {
                Some(c) => {
                    out.push(format_score(c.f1));
                    out.push(format_score(c.em));
                    if with_std {
                        out.push(format_score(c.f1_std));
                        out.push(format_score(c.em_std));
                    }
                }
                None => {
                    let n = if with_std { 4 } else { 2 };
                    out.extend(std::iter::repeat_n("-".to_string(), n));
                }
            }
        }
        if self.has_warnings() {
            out.push(row.warnings.join("; "));
        }
        out
    }

    pub fn render(&self, format: ReportFormat, with_std: bool) -> String {
        match format {
            ReportFormat::Markdown => {
                let header = self.header(with_std);
                let mut out = format!("| {} |\n", header.join(" | "));
                let rule: Vec<&str> = header
                    .iter()
                    .enumerate()
                    .map(|(i, h)| if i == 0 || h == "Warnings" { "---" } else { "---:" })
                    .collect();
                out.push_str(&format!("| {} |\n", rule.join(" | ")));
                for row in &self.rows {
                    out.push_str(&format!("| {} |\n", self.record(row, with_std).join(" | ")));
                }
                out
            }
            ReportFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(self.header(with_std)).expect("in-memory csv");
                for row in &self.rows {
                    w.write_record(self.record(row, with_std)).expect("in-memory csv");
                }
                String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
            }
            ReportFormat::Json => {
                let mut rounded = self.clone();
                for row in &mut rounded.rows {
                    for c in row.cells.iter_mut().flatten() {
                        c.f1 = round_one_decimal(c.f1);
                        c.em = round_one_decimal(c.em);
                        c.f1_std = round_one_decimal(c.f1_std);
                        c.em_std = round_one_decimal(c.em_std);
                    }
                }
                serde_json::to_string_pretty(&rounded).expect("table serializes") + "\n"
            }
        }
    }
}

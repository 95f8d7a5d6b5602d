//! Results tables in Markdown or CSV, and TSV export of datasets.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Dataset;
use crate::metrics::{AggregateMetrics, Summary};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("ragged table: {0}")]
    RaggedCells(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
}

impl FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "md" | "markdown" => Ok(TableFormat::Markdown),
            "csv" => Ok(TableFormat::Csv),
            other => Err(format!("unknown table format `{other}` (expected md or csv)")),
        }
    }
}

/// `x` as a percentage in tenths, rounded half away from zero. The product
/// is first snapped to 1e-6 so that decimal inputs such as 0.8725 round as
/// written rather than as their binary approximation.
fn tenths(x: f64) -> i64 {
    let scaled = ((x * 1000.0) * 1e6).round() / 1e6;
    scaled.round() as i64
}

fn tenths_str(t: i64) -> String {
    let sign = if t < 0 { "-" } else { "" };
    format!("{sign}{}.{}", t.unsigned_abs() / 10, t.unsigned_abs() % 10)
}

/// A fraction as a percentage with one decimal: 0.872 → "87.2".
pub fn format_pct(x: f64) -> String {
    if !x.is_finite() {
        return "n/a".to_string();
    }
    tenths_str(tenths(x))
}

/// Difference of two fractions in percentage points, computed from the
/// displayed (rounded) values: 0.664 → 0.865 gives "+20.1".
pub fn format_delta(from: f64, to: f64) -> String {
    if !from.is_finite() || !to.is_finite() {
        return "n/a".to_string();
    }
    let d = tenths(to) - tenths(from);
    if d > 0 {
        format!("+{}", tenths_str(d))
    } else {
        tenths_str(d)
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn render(&self, format: TableFormat) -> Result<String, ReportError> {
        match format {
            TableFormat::Markdown => {
                let line = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
                let mut out = line(&self.header);
                out.push_str(&format!("|{}\n", "---|".repeat(self.header.len())));
                for r in &self.rows {
                    out.push_str(&line(r));
                }
                Ok(out)
            }
            TableFormat::Csv => {
                let mut w = csv::WriterBuilder::new()
                    .terminator(csv::Terminator::Any(b'\n'))
                    .from_writer(Vec::new());
                w.write_record(&self.header)?;
                for r in &self.rows {
                    w.write_record(r)?;
                }
                let bytes = w.into_inner().map_err(|e| ReportError::Io(e.into_error()))?;
                Ok(String::from_utf8(bytes).expect("table text is UTF-8"))
            }
        }
    }
}

/// Cells grouped as model → task → metrics, both in first-seen order.
/// Every model must cover the same tasks, in any order.
fn grid(cells: &[AggregateMetrics]) -> Result<(Vec<String>, IndexMap<String, IndexMap<String, &AggregateMetrics>>), ReportError> {
    if cells.is_empty() {
        return Err(ReportError::RaggedCells("no cells".into()));
    }
    let mut by_model: IndexMap<String, IndexMap<String, &AggregateMetrics>> = IndexMap::new();
    for c in cells {
        if by_model.entry(c.model.clone()).or_default().insert(c.task.clone(), c).is_some() {
            return Err(ReportError::RaggedCells(format!("duplicate cell ({}, {})", c.model, c.task)));
        }
    }
    let tasks: Vec<String> = by_model[0].keys().cloned().collect();
    for (model, row) in &by_model {
        if row.len() != tasks.len() || tasks.iter().any(|t| !row.contains_key(t)) {
            return Err(ReportError::RaggedCells(format!("model `{model}` does not cover the same tasks")));
        }
    }
    Ok((tasks, by_model))
}

fn metric_header(tasks: &[String]) -> Vec<String> {
    tasks
        .iter()
        .flat_map(|t| [format!("{t} Acc_val"), format!("{t} C_R"), format!("{t} C_S")])
        .collect()
}

fn metric_cells(m: &AggregateMetrics) -> [String; 3] {
    let f = |s: &Summary| format_pct(s.mean);
    [f(&m.acc_val), f(&m.c_reverse), f(&m.c_signal)]
}

/// One row per model, three columns (Acc_val, C_R, C_S) per task.
pub fn emit_results_table(cells: &[AggregateMetrics], format: TableFormat) -> Result<String, ReportError> {
    let (tasks, by_model) = grid(cells)?;
    let mut header = vec!["Model".to_string()];
    header.extend(metric_header(&tasks));
    let rows = by_model
        .iter()
        .map(|(model, row)| {
            std::iter::once(model.clone())
                .chain(tasks.iter().flat_map(|t| metric_cells(row[t])))
                .collect()
        })
        .collect();
    Table { header, rows }.render(format)
}

/// Single-task, PARA and ALL results for one model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonFamily {
    pub name: String,
    pub single: Vec<AggregateMetrics>,
    pub para: Vec<AggregateMetrics>,
    pub all: Vec<AggregateMetrics>,
}

/// Three rows per family (`-Single`, `-Para`, `-All`) in the results-table
/// column scheme, plus one `ΔC_R` column per task: the Para row holds
/// Para − Single, the All row All − Single, the Single row is blank.
pub fn emit_comparison_table(families: &[ComparisonFamily], format: TableFormat) -> Result<String, ReportError> {
    if families.is_empty() {
        return Err(ReportError::RaggedCells("no model families".into()));
    }
    let mut tasks: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for fam in families {
        let (t_single, single) = grid(&fam.single)?;
        let (t_para, para) = grid(&fam.para)?;
        let (t_all, all) = grid(&fam.all)?;
        for (variant, g) in [("single", &single), ("para", &para), ("all", &all)] {
            if g.len() != 1 {
                return Err(ReportError::RaggedCells(format!(
                    "family `{}` {variant} cells name {} models",
                    fam.name,
                    g.len()
                )));
            }
        }
        let same = |other: &[String]| other.len() == t_single.len() && other.iter().all(|t| t_single.contains(t));
        if !same(&t_para) || !same(&t_all) {
            return Err(ReportError::RaggedCells(format!("family `{}` variants cover different tasks", fam.name)));
        }
        let tasks = tasks.get_or_insert_with(|| t_single.clone());
        if !same(tasks) {
            return Err(ReportError::RaggedCells(format!("family `{}` covers different tasks", fam.name)));
        }
        let base = &single[0];
        for (suffix, g, delta) in [("Single", &single, false), ("Para", &para, true), ("All", &all, true)] {
            let row = &g[0];
            let mut cells = vec![format!("{}-{suffix}", fam.name)];
            for t in tasks.iter() {
                cells.extend(metric_cells(row[t]));
                cells.push(if delta {
                    format_delta(base[t].c_reverse.mean, row[t].c_reverse.mean)
                } else {
                    String::new()
                });
            }
            rows.push(cells);
        }
    }
    let tasks = tasks.expect("at least one family");
    let mut header = vec!["Model".to_string()];
    for t in &tasks {
        header.extend(metric_header(std::slice::from_ref(t)));
        header.push(format!("{t} ΔC_R"));
    }
    Table { header, rows }.render(format)
}

/// Write `dataset` as a TSV that [`crate::corpus::load_tsv`] reads back:
/// an `index` column, the task's sentence columns, and its label column
/// (empty where there is no gold label).
pub fn write_tsv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), ReportError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_tsv_to(dataset, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_tsv_to(dataset: &Dataset, out: &mut impl Write) -> Result<(), ReportError> {
    let f = &dataset.task.fields;
    writeln!(out, "index\t{}\t{}\t{}", f.a, f.b, f.label)?;
    for e in dataset.examples() {
        writeln!(out, "{}\t{}\t{}\t{}", e.id, e.sentence_a, e.sentence_b, e.gold.as_deref().unwrap_or(""))?;
    }
    Ok(())
}

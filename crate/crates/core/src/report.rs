//! Score tables, their text serializations, and report bundles on disk.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::metrics::{
    format_fixed, mean_scores, total_score, MetricReport, MetricsError, BLEU_DECIMALS,
    F1_DECIMALS, TOTAL_DECIMALS,
};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("table has no rows")]
    Empty,
    #[error("row {0} has an empty label")]
    EmptyLabel(usize),
    #[error("row {row} has {got} cells, header has {want}")]
    Ragged { row: usize, got: usize, want: usize },
    #[error("unsupported table format `{0}` (expected markdown, csv or tsv)")]
    UnknownFormat(String),
    #[error("run id `{0}` appears more than once in the bundle")]
    DuplicateRunId(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("report bundle: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// The two headline numbers of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub weighted_f1: f64,
    pub bleu: f64,
}

impl ScoreSummary {
    pub fn new(weighted_f1: f64, bleu: f64) -> Self {
        Self { weighted_f1, bleu }
    }
}

impl From<&MetricReport> for ScoreSummary {
    fn from(r: &MetricReport) -> Self {
        Self::new(r.weighted_f1, r.bleu)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self, ReportError> {
        let table = Self { header, rows };
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<(), ReportError> {
        if self.rows.is_empty() || self.header.is_empty() {
            return Err(ReportError::Empty);
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.header.len() {
                return Err(ReportError::Ragged {
                    row: i,
                    got: row.len(),
                    want: self.header.len(),
                });
            }
        }
        Ok(())
    }
}

fn check_labels<'a>(labels: impl Iterator<Item = &'a str>) -> Result<(), ReportError> {
    for (i, label) in labels.enumerate() {
        if label.trim().is_empty() {
            return Err(ReportError::EmptyLabel(i));
        }
    }
    Ok(())
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

/// Per-fold rows followed by an `Average` row.
pub fn fold_table(reports: &[(String, ScoreSummary)]) -> Result<Table, ReportError> {
    if reports.is_empty() {
        return Err(ReportError::Empty);
    }
    check_labels(reports.iter().map(|(l, _)| l.as_str()))?;
    let scores: Vec<(f64, f64)> = reports
        .iter()
        .map(|(_, s)| (s.weighted_f1, s.bleu))
        .collect();
    let (f1, bleu) = mean_scores(&scores)?;
    let mut rows: Vec<Vec<String>> = reports
        .iter()
        .map(|(label, s)| {
            vec![
                label.clone(),
                format_fixed(s.weighted_f1, F1_DECIMALS),
                format_fixed(s.bleu, BLEU_DECIMALS),
            ]
        })
        .collect();
    rows.push(vec![
        "Average".to_string(),
        format_fixed(f1, F1_DECIMALS),
        format_fixed(bleu, BLEU_DECIMALS),
    ]);
    Table::new(header(&["label", "Weighted F1", "BLEU"]), rows)
}

/// One row per run with its total score; no average.
pub fn comparison_table(rows: &[(String, ScoreSummary)]) -> Result<Table, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::Empty);
    }
    check_labels(rows.iter().map(|(l, _)| l.as_str()))?;
    let body = rows
        .iter()
        .map(|(label, s)| {
            Ok(vec![
                label.clone(),
                format_fixed(s.weighted_f1, F1_DECIMALS),
                format_fixed(s.bleu, BLEU_DECIMALS),
                format_fixed(total_score(s.weighted_f1, s.bleu)?, TOTAL_DECIMALS),
            ])
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    Table::new(header(&["label", "Weighted F1", "BLEU", "Total"]), body)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Markdown,
    Csv,
    Tsv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Markdown => "md",
            Self::Csv => "csv",
            Self::Tsv => "tsv",
        }
    }
}

impl FromStr for Format {
    type Err = ReportError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            "tsv" => Ok(Self::Tsv),
            _ => Err(ReportError::UnknownFormat(s.to_string())),
        }
    }
}

fn markdown_cell(cell: &str) -> String {
    let mut out = String::with_capacity(cell.len());
    for c in cell.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '|' => out.push_str("\\|"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn markdown_row(cells: &[String]) -> String {
    let inner: Vec<String> = cells.iter().map(|c| markdown_cell(c)).collect();
    format!("| {} |\n", inner.join(" | "))
}

pub fn emit(table: &Table, format: Format) -> Result<String, ReportError> {
    table.validate()?;
    match format {
        Format::Markdown => {
            let mut out = markdown_row(&table.header);
            out.push('|');
            for _ in &table.header {
                out.push_str(" --- |");
            }
            out.push('\n');
            for row in &table.rows {
                out.push_str(&markdown_row(row));
            }
            Ok(out)
        }
        Format::Csv | Format::Tsv => {
            let delimiter = if format == Format::Csv { b',' } else { b'\t' };
            let mut writer = csv::WriterBuilder::new()
                .delimiter(delimiter)
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            writer.write_record(&table.header)?;
            for row in &table.rows {
                writer.write_record(row)?;
            }
            let bytes = writer.into_inner().map_err(|e| ReportError::Io {
                path: "<memory>".into(),
                source: e.into_error(),
            })?;
            Ok(String::from_utf8(bytes).expect("csv output of UTF-8 cells is UTF-8"))
        }
    }
}

/// Reads back a table written by [`emit`] in csv or tsv form.
pub fn parse_delimited(text: &str, format: Format) -> Result<Table, ReportError> {
    let delimiter = match format {
        Format::Csv => b',',
        Format::Tsv => b'\t',
        Format::Markdown => return Err(ReportError::UnknownFormat("markdown".into())),
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader
        .records()
        .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>, _>>()?;
    if records.is_empty() {
        return Err(ReportError::Empty);
    }
    let header = records.remove(0);
    Table::new(header, records)
}

/// Provenance for one run. Hyperparameters are descriptive only; the harness
/// never trains anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub run_id: String,
    pub description: String,
    pub hyperparameters: BTreeMap<String, Value>,
    pub created_at: DateTime<Utc>,
}

impl RunMetadata {
    pub fn new(run_id: impl Into<String>, description: impl Into<String>, created_at: DateTime<Utc>) -> Self {
        Self {
            run_id: run_id.into(),
            description: description.into(),
            hyperparameters: BTreeMap::new(),
            created_at,
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.hyperparameters.insert(key.to_string(), value.into());
        self
    }

    /// Settings of the BART-Large fold models.
    pub fn lm_recipe(run_id: impl Into<String>, created_at: DateTime<Utc>) -> Self {
        Self::new(run_id, "LM fold model (caption + dialog prompt)", created_at)
            .with("model", "bart-large")
            .with("batch_size", 32)
            .with("learning_rate", 5e-5)
            .with("epochs", 3)
            .with("gradient_accumulation_steps", 2)
            .with("optimizer", "AdamW")
            .with("lr_scheduler", "cosine")
            .with("warmup_fraction", 0.01)
            .with("mixed_precision", true)
            .with("folds", 5)
    }

    /// Settings of the LoRA-tuned LLaVA model.
    pub fn lvlm_recipe(run_id: impl Into<String>, created_at: DateTime<Utc>) -> Self {
        Self::new(run_id, "LVLM (image + dialog prompt), LoRA fine-tune", created_at)
            .with("model", "llava-v1.5-7b")
            .with("vision_tower", "clip-vit-large")
            .with("lora_rank", 96)
            .with("lora_alpha", 192)
            .with("learning_rate", 5e-5)
            .with("batch_size", 16)
            .with("epochs", 2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledReport {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    pub report: MetricReport,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ReportBundle {
    pub reports: Vec<LabeledReport>,
    pub runs: Vec<RunMetadata>,
}

impl ReportBundle {
    pub fn validate(&self) -> Result<(), ReportError> {
        let mut seen = HashSet::new();
        for run in &self.runs {
            if !seen.insert(run.run_id.as_str()) {
                return Err(ReportError::DuplicateRunId(run.run_id.clone()));
            }
        }
        Ok(())
    }

    pub fn summaries(&self) -> Vec<(String, ScoreSummary)> {
        self.reports
            .iter()
            .map(|r| (r.label.clone(), ScoreSummary::from(&r.report)))
            .collect()
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        self.validate()?;
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let bundle: Self = serde_json::from_str(text)?;
        bundle.validate()?;
        Ok(bundle)
    }

    /// Writes `report.json` plus `tables/<name>.md` and `tables/<name>.csv`
    /// for every named table.
    pub fn write(&self, dir: &Path, tables: &[(&str, &Table)]) -> Result<(), ReportError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| ReportError::Io { path, source }
        };
        let tables_dir = dir.join("tables");
        fs::create_dir_all(&tables_dir).map_err(io(&tables_dir))?;
        let json_path = dir.join("report.json");
        fs::write(&json_path, self.to_json()?).map_err(io(&json_path))?;
        for (name, table) in tables {
            for format in [Format::Markdown, Format::Csv] {
                let path = tables_dir.join(format!("{name}.{}", format.extension()));
                fs::write(&path, emit(table, format)?).map_err(io(&path))?;
            }
        }
        Ok(())
    }
}

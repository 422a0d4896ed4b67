//! Campaign statistics and the tables and figure data written from them.
//!
//! Output files in a report directory:
//!
//! | file          | contents                                                  |
//! |---------------|-----------------------------------------------------------|
//! | `stats.json`  | array of [`CampaignStats`]                                |
//! | `stats.csv`   | same, one row per campaign                                |
//! | `edits.csv`   | every edit of every successful sample                     |
//! | `pairs.csv`   | salience of perturbed positions, original vs adversarial  |
//! | `bins.csv`    | token counts and perturbation ratio per salience bin      |
//! | `report.md`   | success-rate table and per-sample statistics table        |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{success_rate, AdversarialRecord, AttackBudget, Method};
use crate::diagnosis::{histogram_trend, EditOp, HistogramBin, PairKind, SampleDiagnosis, SampleType};
use crate::error::{Error, Result};

/// Identifies a campaign in the tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub model: String,
    pub dataset: String,
    pub method: Method,
    pub budget: AttackBudget,
    pub steps: usize,
    pub top_n: usize,
    pub pmi_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignStats {
    pub model: String,
    pub method: Method,
    pub dataset: String,
    pub correct: usize,
    pub adversarial: usize,
    /// Percent, `100 · adversarial / correct`.
    pub success_rate: f64,
    /// Mean edit-script length over successful samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_perturb: Option<f64>,
    /// Percent of successful samples of type 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pct_salience: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pct_ood: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pct_spurious: Option<f64>,
    /// Mean of adversarial minus original confidence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_confidence: Option<f64>,
    /// Spearman correlation of salience bin index with perturbation ratio.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub salience_trend: Option<f64>,
    /// Fraction of perturbed-position pairs within 0.1 of the diagonal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub near_diagonal: Option<f64>,
    pub epsilon: f64,
    pub budget: AttackBudget,
    pub steps: usize,
    pub top_n: usize,
    pub pmi_threshold: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn percent(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| 100.0 * hits as f64 / total as f64)
}

/// `diagnoses` must match the successful records one to one, by id.
pub fn compute_stats(
    info: &RunInfo,
    records: &[AdversarialRecord],
    diagnoses: &[SampleDiagnosis],
    n_correct: usize,
) -> Result<CampaignStats> {
    let successes: Vec<&AdversarialRecord> = records.iter().filter(|r| r.success).collect();
    if successes.len() != diagnoses.len() || successes.iter().zip(diagnoses).any(|(r, d)| r.id != d.id) {
        return Err(Error::Config(format!(
            "{} diagnoses do not match {} successful records",
            diagnoses.len(),
            successes.len()
        )));
    }
    if successes.len() > n_correct {
        return Err(Error::Config(format!(
            "{} successes exceed {n_correct} correct predictions",
            successes.len()
        )));
    }
    let n = diagnoses.len();
    let pairs: Vec<_> = diagnoses.iter().flat_map(|d| &d.salience_pairs).collect();
    Ok(CampaignStats {
        model: info.model.clone(),
        method: info.method,
        dataset: info.dataset.clone(),
        correct: n_correct,
        adversarial: n,
        success_rate: success_rate(n, n_correct),
        avg_perturb: mean(diagnoses.iter().map(|d| d.edit_count as f64)),
        pct_salience: percent(
            diagnoses.iter().filter(|d| d.sample_type == SampleType::Type1).count(),
            n,
        ),
        pct_ood: percent(diagnoses.iter().filter(|d| d.is_ood()).count(), n),
        pct_spurious: percent(diagnoses.iter().filter(|d| d.spurious_flag).count(), n),
        avg_confidence: mean(diagnoses.iter().map(|d| d.confidence_drop)),
        salience_trend: None,
        near_diagonal: mean(pairs.iter().map(|p| {
            if (p.original - p.adversarial).abs() <= 0.1 {
                1.0
            } else {
                0.0
            }
        })),
        epsilon: info.budget.epsilon,
        budget: info.budget,
        steps: info.steps,
        top_n: info.top_n,
        pmi_threshold: info.pmi_threshold,
    })
}

/// One edit of a successful sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRow {
    pub method: Method,
    pub record: usize,
    pub op: String,
    pub orig_position: Option<usize>,
    pub adv_position: Option<usize>,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub method: Method,
    pub record: usize,
    pub sample_type: SampleType,
    pub kind: PairKind,
    pub original: f64,
    pub adversarial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub method: Method,
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    pub tokens: usize,
    pub perturbed: usize,
    pub ratio: f64,
}

/// Everything a report directory is written from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub stats: Vec<CampaignStats>,
    pub edits: Vec<EditRow>,
    pub pairs: Vec<PairRow>,
    pub bins: Vec<BinRow>,
}

impl Report {
    /// Adds one campaign. Records and diagnoses as for [`compute_stats`];
    /// `histogram` is the campaign's salience histogram.
    pub fn push(
        &mut self,
        mut stats: CampaignStats,
        records: &[AdversarialRecord],
        diagnoses: &[SampleDiagnosis],
        histogram: &[HistogramBin],
    ) {
        let method = stats.method;
        stats.salience_trend = histogram_trend(histogram);
        for r in records.iter().filter(|r| r.success) {
            for op in &r.edits.ops {
                self.edits.push(edit_row(method, r.id, op));
            }
        }
        for d in diagnoses {
            self.pairs.extend(d.salience_pairs.iter().map(|p| PairRow {
                method,
                record: d.id,
                sample_type: d.sample_type,
                kind: p.kind,
                original: p.original,
                adversarial: p.adversarial,
            }));
        }
        self.bins.extend(histogram.iter().map(|b| BinRow {
            method,
            bin: b.index,
            lower: b.lower,
            upper: b.upper,
            tokens: b.tokens,
            perturbed: b.perturbed,
            ratio: b.ratio,
        }));
        self.stats.push(stats);
    }
}

fn edit_row(method: Method, record: usize, op: &EditOp) -> EditRow {
    let (name, orig, adv, from, to) = match op {
        EditOp::Substitute { orig, adv, from, to } => ("substitute", Some(*orig), Some(*adv), from.clone(), to.clone()),
        EditOp::Delete { orig, token } => ("delete", Some(*orig), None, token.clone(), String::new()),
        EditOp::Insert { adv, token } => ("insert", None, Some(*adv), String::new(), token.clone()),
    };
    EditRow {
        method,
        record,
        op: name.to_string(),
        orig_position: orig,
        adv_position: adv,
        from,
        to,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Json, Format::Csv, Format::Markdown];
}

/// Writes `report` in `format` under `dir` and returns the paths written.
pub fn emit(report: &Report, format: Format, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files: Vec<(&str, Vec<u8>)> = match format {
        Format::Json => vec![("stats.json", stats_json(&report.stats)?.into_bytes())],
        Format::Csv => vec![
            ("stats.csv", stats_csv(&report.stats)?),
            ("edits.csv", csv_bytes(EDIT_HEADER, &report.edits)?),
            ("pairs.csv", csv_bytes(PAIR_HEADER, &report.pairs)?),
            ("bins.csv", csv_bytes(BIN_HEADER, &report.bins)?),
        ],
        Format::Markdown => vec![("report.md", markdown(&report.stats).into_bytes())],
    };
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

pub fn emit_all(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for f in Format::ALL {
        out.extend(emit(report, f, dir)?);
    }
    Ok(out)
}

pub fn stats_json(stats: &[CampaignStats]) -> Result<String> {
    let mut s = serde_json::to_string_pretty(stats)?;
    s.push('\n');
    Ok(s)
}

pub fn load_stats_json(path: impl AsRef<Path>) -> Result<Vec<CampaignStats>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

const EDIT_HEADER: &[&str] = &["method", "record", "op", "orig_position", "adv_position", "from", "to"];
const PAIR_HEADER: &[&str] = &["method", "record", "sample_type", "kind", "original", "adversarial"];
const BIN_HEADER: &[&str] = &["method", "bin", "lower", "upper", "tokens", "perturbed", "ratio"];

/// Header is written explicitly so empty data still yields a valid file.
fn csv_bytes<T: Serialize>(header: &[&str], rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| Error::Config(e.to_string()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn stats_csv(stats: &[CampaignStats]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model",
        "method",
        "dataset",
        "correct",
        "adversarial",
        "success_rate",
        "avg_perturb",
        "pct_salience",
        "pct_ood",
        "pct_spurious",
        "avg_confidence",
        "salience_trend",
        "near_diagonal",
        "epsilon",
        "max_perturb",
        "max_queries",
        "steps",
        "top_n",
        "pmi_threshold",
    ])?;
    for s in stats {
        w.write_record([
            s.model.clone(),
            s.method.to_string(),
            s.dataset.clone(),
            s.correct.to_string(),
            s.adversarial.to_string(),
            s.success_rate.to_string(),
            opt(s.avg_perturb),
            opt(s.pct_salience),
            opt(s.pct_ood),
            opt(s.pct_spurious),
            opt(s.avg_confidence),
            opt(s.salience_trend),
            opt(s.near_diagonal),
            s.epsilon.to_string(),
            s.budget.max_perturb.to_string(),
            s.budget.max_queries.to_string(),
            s.steps.to_string(),
            s.top_n.to_string(),
            s.pmi_threshold.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Config(e.to_string()))
}

fn two(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}"))
}

/// `12345` → `12,345`.
pub fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// `adversarial/rate%` as printed in the success-rate table.
pub fn success_cell(stats: &CampaignStats) -> String {
    format!("{}/{:.2}%", thousands(stats.adversarial), stats.success_rate)
}

/// Success-rate table followed by the per-sample statistics table.
pub fn markdown(stats: &[CampaignStats]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "## Attack success\n");
    let _ = writeln!(out, "| Model | Dataset | Correct | Adversarial / Success rate |");
    let _ = writeln!(out, "|---|---|---:|---:|");
    for s in stats {
        let _ = writeln!(
            out,
            "| {} ({}) | {} | {} | {} |",
            s.model,
            s.method.display_name(),
            s.dataset,
            thousands(s.correct),
            success_cell(s)
        );
    }
    let _ = writeln!(out, "\n## Adversarial samples\n");
    let _ = writeln!(out, "| Model | Avg. Perturb | % Salience | % OOD | Avg. Confidence |");
    let _ = writeln!(out, "|---|---:|---:|---:|---:|");
    for s in stats {
        let _ = writeln!(
            out,
            "| {} ({}) | {} | {} | {} | {} |",
            s.model,
            s.method.display_name(),
            two(s.avg_perturb),
            two(s.pct_salience),
            two(s.pct_ood),
            two(s.avg_confidence)
        );
    }
    let _ = writeln!(out, "\n## Settings and trends\n");
    let _ = writeln!(out, "| Model | epsilon | max perturb | IG steps | top-n | PMI threshold | % spurious | salience trend | near diagonal |");
    let _ = writeln!(out, "|---|---:|---:|---:|---:|---:|---:|---:|---:|");
    for s in stats {
        let _ = writeln!(
            out,
            "| {} ({}) | {:.2} | {:.2} | {} | {} | {:.2} | {} | {} | {} |",
            s.model,
            s.method.display_name(),
            s.epsilon,
            s.budget.max_perturb,
            s.steps,
            s.top_n,
            s.pmi_threshold,
            two(s.pct_spurious),
            two(s.salience_trend),
            two(s.near_diagonal.map(|f| 100.0 * f)),
        );
    }
    out
}

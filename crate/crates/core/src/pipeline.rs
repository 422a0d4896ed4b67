//! Staged train → attack → diagnose → report runs over a run directory.
//!
//! File layout inside a run directory:
//!
//! | file                        | written by |
//! |-----------------------------|------------|
//! | `model.json`                | train      |
//! | `records-<method>.jsonl`    | attack     |
//! | `summary-<method>.json`     | attack     |
//! | `diagnoses-<method>.jsonl`  | diagnose   |
//! | `salience-<method>.jsonl`   | diagnose   |
//! | `diagnosis-<method>.json`   | diagnose   |
//! | report files                | report     |

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{
    read_records, run_attack_campaign, write_records, AdversarialRecord, AttackBudget, CampaignSummary, Method,
};
use crate::attribution::{read_salience_jsonl, salience_rows, write_salience_jsonl, SalienceProfile};
use crate::corpus::{insert_markers, Instance, SynonymLexicon};
use crate::diagnosis::{
    diagnose_campaign, read_diagnoses, salience_histogram, write_diagnoses, CooccurrenceTable, Diagnosed,
    DiagnosisConfig, HistogramBin, SampleDiagnosis,
};
use crate::error::{Error, Result};
use crate::model::{train, Classifier, TrainConfig, Victim};
use crate::report::{compute_stats, emit_all, Report, RunInfo};

/// Classifier settings used for desk-scale runs.
///
/// The wide hidden layer and light L2 keep the tanh units out of saturation,
/// which keeps the logit close to linear along the attribution path.
pub fn desk_train_config() -> TrainConfig {
    TrainConfig {
        dim: 64,
        hidden: 256,
        learning_rate: 0.5,
        epochs: 40,
        batch_size: 16,
        min_freq: 2,
        embedding_std: 0.5,
        l2: 0.003,
    }
}

pub const DEFAULT_BINS: usize = 20;

/// Campaign summary plus the run settings it was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignManifest {
    pub summary: CampaignSummary,
    pub seed: u64,
    pub model_fingerprint: String,
    /// Records file, relative to the run directory when inside it.
    pub records_file: PathBuf,
}

pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(RunDir { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn model(&self) -> PathBuf {
        self.root.join("model.json")
    }

    pub fn records(&self, m: Method) -> PathBuf {
        self.root.join(format!("records-{m}.jsonl"))
    }

    pub fn summary(&self, m: Method) -> PathBuf {
        self.root.join(format!("summary-{m}.json"))
    }

    pub fn diagnoses(&self, m: Method) -> PathBuf {
        self.root.join(format!("diagnoses-{m}.jsonl"))
    }

    pub fn salience(&self, m: Method) -> PathBuf {
        self.root.join(format!("salience-{m}.jsonl"))
    }

    pub fn diagnosis_config(&self, m: Method) -> PathBuf {
        self.root.join(format!("diagnosis-{m}.json"))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// One attack campaign's inputs.
pub struct AttackJob<'a> {
    pub test: &'a [Instance],
    pub lexicon: &'a SynonymLexicon,
    pub method: Method,
    pub budget: AttackBudget,
    /// Echoed into the manifest; the attacks themselves are deterministic.
    pub seed: u64,
}

/// Runs `job` and writes its records to `records_path` and its manifest
/// into `dir`.
pub fn attack_stage<V: Victim>(
    victim: &V,
    model_fingerprint: &str,
    job: &AttackJob<'_>,
    records_path: &Path,
    dir: &RunDir,
) -> Result<(Vec<AdversarialRecord>, CampaignManifest)> {
    let (records, summary) = run_attack_campaign(victim, job.test, job.method, job.lexicon, &job.budget)?;
    write_records(records_path, &records)?;
    let manifest = CampaignManifest {
        summary,
        seed: job.seed,
        model_fingerprint: model_fingerprint.to_string(),
        records_file: records_path
            .strip_prefix(dir.root())
            .unwrap_or(records_path)
            .to_path_buf(),
    };
    write_json(&dir.summary(job.method), &manifest)?;
    Ok((records, manifest))
}

/// Sequence id under which a record's original salience is exported.
pub fn salience_id(record_id: usize) -> String {
    format!("{record_id}")
}

/// Diagnoses successful records and writes diagnoses, original-sentence
/// salience and the diagnosis settings into `dir`.
pub fn diagnose_stage<V: Victim>(
    victim: &V,
    train_set: &[Instance],
    records: &[AdversarialRecord],
    method: Method,
    config: &DiagnosisConfig,
    dir: &RunDir,
) -> Result<Vec<Diagnosed>> {
    config_check(config)?;
    let table = CooccurrenceTable::build(train_set);
    let diagnosed = diagnose_campaign(victim, records, &table, config)?;
    let plain: Vec<SampleDiagnosis> = diagnosed.iter().map(|d| d.diagnosis.clone()).collect();
    write_diagnoses(dir.diagnoses(method), &plain)?;
    let mut rows = Vec::new();
    for (r, d) in records.iter().filter(|r| r.success).zip(&diagnosed) {
        rows.extend(salience_rows(
            &salience_id(r.id),
            &insert_markers(&r.original),
            &d.original_salience,
        ));
    }
    write_salience_jsonl(dir.salience(method), &rows)?;
    write_json(&dir.diagnosis_config(method), config)?;
    Ok(diagnosed)
}

fn config_check(config: &DiagnosisConfig) -> Result<()> {
    if config.steps == 0 {
        return Err(Error::Config("IG steps must be at least 1".into()));
    }
    if config.top_n == 0 {
        return Err(Error::Config("top-n must be at least 1".into()));
    }
    if !config.pmi_threshold.is_finite() {
        return Err(Error::Config("PMI threshold must be finite".into()));
    }
    Ok(())
}

/// Histogram over the original sentences of successful records.
pub fn campaign_histogram(
    records: &[AdversarialRecord],
    profiles: &[&SalienceProfile],
    bins: usize,
) -> Result<Vec<HistogramBin>> {
    let items: Vec<(&AdversarialRecord, &SalienceProfile)> = records
        .iter()
        .filter(|r| r.success)
        .zip(profiles.iter().copied())
        .collect();
    salience_histogram(&items, bins)
}

/// Names shown in the report tables.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportNames {
    pub model: String,
    pub dataset: String,
}

impl Default for ReportNames {
    fn default() -> Self {
        ReportNames {
            model: "desk".into(),
            dataset: "synthetic".into(),
        }
    }
}

/// Builds the report from whatever campaigns `dir` holds, in method order,
/// and writes it into `dir`. Returns the report and the files written.
pub fn report_stage(dir: &RunDir, names: &ReportNames, bins: usize) -> Result<(Report, Vec<PathBuf>)> {
    let mut report = Report::default();
    for method in Method::ALL {
        if !dir.summary(method).exists() {
            continue;
        }
        let manifest: CampaignManifest = read_json(&dir.summary(method))?;
        let config: DiagnosisConfig = read_json(&dir.diagnosis_config(method))?;
        let records = read_records(dir.root().join(&manifest.records_file))?;
        let diagnoses = read_diagnoses(dir.diagnoses(method))?;
        let salience = read_salience_jsonl(dir.salience(method))?;
        let profiles = records
            .iter()
            .filter(|r| r.success)
            .map(|r| {
                salience
                    .get(&salience_id(r.id))
                    .ok_or_else(|| Error::Config(format!("no salience for record {}", r.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let histogram = campaign_histogram(&records, &profiles, bins)?;
        let info = RunInfo {
            model: names.model.clone(),
            dataset: names.dataset.clone(),
            method,
            budget: manifest.summary.budget,
            steps: config.steps,
            top_n: config.top_n,
            pmi_threshold: config.pmi_threshold,
        };
        let stats = compute_stats(&info, &records, &diagnoses, manifest.summary.correct)?;
        report.push(stats, &records, &diagnoses, &histogram);
    }
    if report.stats.is_empty() {
        return Err(Error::Config(format!(
            "no campaign summaries in {}",
            dir.root().display()
        )));
    }
    let files = emit_all(&report, dir.root())?;
    Ok((report, files))
}

/// Everything an end-to-end run needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub budget: AttackBudget,
    pub diagnosis: DiagnosisConfig,
    pub bins: usize,
    pub names: ReportNames,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: desk_train_config(),
            seed: 1,
            methods: Method::ALL.to_vec(),
            budget: AttackBudget::default(),
            diagnosis: DiagnosisConfig::default(),
            bins: DEFAULT_BINS,
            names: ReportNames::default(),
        }
    }
}

/// Trains, attacks with every configured method, diagnoses and reports.
pub fn run_all(
    train_set: &[Instance],
    test_set: &[Instance],
    lexicon: &SynonymLexicon,
    config: &RunConfig,
    dir: &RunDir,
) -> Result<(Classifier, Report)> {
    config.budget.validate()?;
    config_check(&config.diagnosis)?;
    let model = train(train_set, &config.train, config.seed)?;
    model.save(dir.model())?;
    let fingerprint = model.vocab_fingerprint();
    for &method in &config.methods {
        let job = AttackJob {
            test: test_set,
            lexicon,
            method,
            budget: config.budget,
            seed: config.seed,
        };
        let (records, _) = attack_stage(&model, &fingerprint, &job, &dir.records(method), dir)?;
        diagnose_stage(&model, train_set, &records, method, &config.diagnosis, dir)?;
    }
    let (report, _) = report_stage(dir, &config.names, config.bins)?;
    Ok((model, report))
}

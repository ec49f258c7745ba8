//! File-based pipeline stages: simulate → extract → rank → train →
//! evaluate → report, plus a one-shot `reproduce` that chains them.
//!
//! Every stage reads its inputs from and writes its outputs to one run
//! directory, so each is re-runnable in isolation and a chained run is
//! byte-identical to stagewise runs. All randomness flows from the single
//! config seed through fixed labeled derivations (`simulate`, `rank`,
//! `experiment`), so changing one stage's knobs never perturbs another's
//! random stream. Nothing here reads the clock.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::eval::{metrics, round2_half_up, ConfusionMatrix, EvalError, MetricsSummary, ModelSpec};
use crate::features::{build_dataset, segment_trips, FeatureError, GapTable, FEATURE_SCHEMA};
use crate::io::{self, CsvError};
use crate::mlp::{MlpError, TrainingTrace};
use crate::model::{lookup, ModelError, TrainedModel};
use crate::relieff::{relieff_rank, ReliefFError, ReliefFParams};
use crate::seed::RngSeed;
use crate::sim::{simulate_experiment, SimConfig, SimError};
use crate::split::{stratified_split, SplitError};
use crate::tree::TreeError;
use crate::types::{Mode, FEATURE_COUNT};

/// Pipeline failures, bucketed by whose fault they are: the configuration,
/// the data on disk, or the training run itself.
#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training error: {0}")]
    Training(String),
}

impl PipelineError {
    /// Process exit code for this failure class (0 is success).
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) => 3,
            PipelineError::Training(_) => 4,
        }
    }
}

impl From<SimError> for PipelineError {
    fn from(e: SimError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<CsvError> for PipelineError {
    fn from(e: CsvError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<FeatureError> for PipelineError {
    fn from(e: FeatureError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<SplitError> for PipelineError {
    fn from(e: SplitError) -> Self {
        match e {
            SplitError::BadFraction(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<ReliefFError> for PipelineError {
    fn from(e: ReliefFError) -> Self {
        match e {
            ReliefFError::BadK | ReliefFError::BadSampleCount => {
                PipelineError::Config(e.to_string())
            }
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for PipelineError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Unknown(_) | ModelError::BadParams { .. } => {
                PipelineError::Config(e.to_string())
            }
            ModelError::Tree(TreeError::BadParams(_) | TreeError::BadFeatureSampling(_)) => {
                PipelineError::Config(e.to_string())
            }
            ModelError::Tree(inner) => PipelineError::Data(inner.to_string()),
            ModelError::Mlp(MlpError::BadParams(_)) => PipelineError::Config(e.to_string()),
            ModelError::Mlp(MlpError::NonFiniteLoss { .. }) => {
                PipelineError::Training(e.to_string())
            }
            ModelError::Mlp(inner) => PipelineError::Data(inner.to_string()),
        }
    }
}

impl From<EvalError> for PipelineError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::NoModels => PipelineError::Config(e.to_string()),
            EvalError::Split(inner) => inner.into(),
            EvalError::Model(inner) => inner.into(),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

// --- configuration --------------------------------------------------------

/// Whole-run configuration; a JSON document with every field optional
/// (unknown keys rejected).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Master seed; every stage derives its own stream from it.
    pub seed: RngSeed,
    /// Share of feature rows held out for testing.
    pub test_fraction: f64,
    pub sim: SimConfig,
    pub relieff: ReliefFParams,
    /// Classifiers to train and score, in order.
    pub models: Vec<ModelSpec>,
}

impl Default for PipelineConfig {
    fn default() -> PipelineConfig {
        PipelineConfig {
            seed: RngSeed::new(42),
            test_fraction: 0.4,
            sim: SimConfig::default(),
            relieff: ReliefFParams::default(),
            models: ["dt", "bdt", "rf", "mlp"]
                .iter()
                .map(|name| ModelSpec { name: name.to_string(), params: None })
                .collect(),
        }
    }
}

impl PipelineConfig {
    /// Check everything checkable without running: simulation geometry,
    /// fractions, model names, and per-model hyperparameter schemas.
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.sim.validate()?;
        if !(self.test_fraction.is_finite()
            && self.test_fraction > 0.0
            && self.test_fraction < 1.0)
        {
            return Err(PipelineError::Config(format!(
                "test_fraction must be in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.relieff.k_neighbors == 0 {
            return Err(PipelineError::Config("relieff.k_neighbors must be at least 1".into()));
        }
        if self.relieff.sample_count == Some(0) {
            return Err(PipelineError::Config(
                "relieff.sample_count must be at least 1 when given".into(),
            ));
        }
        if self.models.is_empty() {
            return Err(PipelineError::Config("at least one model must be configured".into()));
        }
        for (i, spec) in self.models.iter().enumerate() {
            if self.models[..i].iter().any(|other| other.name == spec.name) {
                return Err(PipelineError::Config(format!(
                    "model '{}' is configured twice; names must be unique",
                    spec.name
                )));
            }
            let strategy = lookup(&spec.name)?;
            strategy.validate_params(spec.params.as_ref())?;
        }
        Ok(())
    }
}

/// Read a config file (`None` means built-in defaults). Unknown or
/// ill-typed keys are config errors.
pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig, PipelineError> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| {
                PipelineError::Config(format!("cannot read config {}: {e}", p.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| PipelineError::Config(format!("config {}: {e}", p.display())))
        }
    }
}

// --- artifact helpers -------------------------------------------------------

fn data_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Data(format!("{}: {e}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| data_err(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| data_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| data_err(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| data_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| data_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(|e| data_err(path, e))
}

fn model_file(out: &Path, name: &str) -> PathBuf {
    out.join("models").join(format!("{name}.json"))
}

fn trace_file(out: &Path, name: &str) -> PathBuf {
    out.join("models").join(format!("{name}_trace.csv"))
}

fn report_file(out: &Path, name: &str) -> PathBuf {
    out.join("reports").join(format!("{name}.json"))
}

fn write_trace_csv(path: &Path, trace: &TrainingTrace) -> Result<(), PipelineError> {
    let mut text = String::from("epoch,train_acc,val_acc,train_loss,val_loss\n");
    for e in &trace.epochs {
        let opt = |v: Option<f64>| v.map(io::fmt_float).unwrap_or_default();
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            e.epoch,
            io::fmt_float(e.train_accuracy),
            opt(e.val_accuracy),
            io::fmt_float(e.train_loss),
            opt(e.val_loss),
        ));
    }
    write_text(path, &text)
}

// --- artifact schemas -------------------------------------------------------

/// One row of `ranking.json`: a feature and its ReliefF weight/rank.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RankingEntry {
    pub id: usize,
    pub column: String,
    pub name: String,
    pub weight: f64,
    /// 1 = highest weight.
    pub rank: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ConfusionFile {
    orientation: String,
    labels: Vec<String>,
    counts: [[u64; Mode::COUNT]; Mode::COUNT],
}

impl ConfusionFile {
    fn new(cm: &ConfusionMatrix) -> ConfusionFile {
        ConfusionFile {
            orientation: "rows actual, columns predicted".into(),
            labels: Mode::ALL.iter().map(|m| m.as_str().to_string()).collect(),
            counts: cm.0,
        }
    }
}

/// One model's evaluation (`reports/<name>.json`); metrics are raw
/// (unrounded) percentages.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelReportFile {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<serde_json::Value>,
    pub train_rows: usize,
    pub test_rows: usize,
    pub test_class_counts: [usize; Mode::COUNT],
    confusion: ConfusionFile,
    pub metrics: MetricsSummary,
}

/// One model's rounded headline numbers inside `metrics.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsEntry {
    pub model: String,
    pub accuracy_pct: f64,
    pub recall_pct: [f64; Mode::COUNT],
    pub precision_pct: [Option<f64>; Mode::COUNT],
}

/// The run's headline table (`metrics.json`), percentages rounded half-up
/// to 2 decimals.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsFile {
    pub train_rows: usize,
    pub test_rows: usize,
    pub models: Vec<MetricsEntry>,
}

// --- stages -----------------------------------------------------------------

/// Simulate the street-loop experiment: writes `detections.csv` and
/// `truth.csv`.
pub fn stage_simulate(config: &PipelineConfig, out: &Path) -> Result<Vec<String>, PipelineError> {
    config.validate()?;
    ensure_dir(out)?;
    let (detections, truth) = simulate_experiment(&config.sim, config.seed.derive("simulate"))?;
    io::write_detections_csv(&out.join("detections.csv"), &detections)?;
    io::write_truth_csv(&out.join("truth.csv"), &truth)?;
    Ok(vec![format!(
        "simulate: {} detections from {} devices -> detections.csv, truth.csv",
        detections.len(),
        truth.len()
    )])
}

/// Segment detections into trips and extract feature rows: reads
/// `detections.csv` + `truth.csv`, writes `features.csv`.
pub fn stage_extract(config: &PipelineConfig, out: &Path) -> Result<Vec<String>, PipelineError> {
    config.validate()?;
    let detections = io::load_detections(&out.join("detections.csv"))?;
    let truth = io::load_truth_csv(&out.join("truth.csv"))?;
    let trips = segment_trips(&detections, &truth)?;
    let gaps = GapTable::from_geometry(&config.sim.geometry);
    let build = build_dataset(&trips, &gaps)?;
    io::write_features_csv(&out.join("features.csv"), &build.dataset)?;
    Ok(vec![format!(
        "extract: {} trips segmented, {} feature rows written ({} skipped), speed norm {:.3} m/s -> features.csv",
        trips.len(),
        build.dataset.n_rows(),
        build.skipped.len(),
        build.speed_norm
    )])
}

/// Rank features with ReliefF: reads `features.csv`, writes `ranking.json`.
pub fn stage_rank(config: &PipelineConfig, out: &Path) -> Result<Vec<String>, PipelineError> {
    config.validate()?;
    let ds = io::load_features_csv(&out.join("features.csv"))?;
    let weights = relieff_rank(&ds, &config.relieff, config.seed.derive("rank"))?;
    let entries: Vec<RankingEntry> = (0..ds.n_features())
        .map(|f| RankingEntry {
            id: f + 1,
            column: ds.feature_names[f].clone(),
            name: if ds.n_features() == FEATURE_COUNT {
                FEATURE_SCHEMA[f].name.to_string()
            } else {
                ds.feature_names[f].clone()
            },
            weight: weights.weights[f],
            rank: weights.ranking.iter().position(|&r| r == f).unwrap() + 1,
        })
        .collect();
    write_json(&out.join("ranking.json"), &entries)?;
    let top: Vec<&str> = weights
        .ranking
        .iter()
        .take(3)
        .map(|&f| ds.feature_names[f].as_str())
        .collect();
    Ok(vec![format!("rank: top features {} -> ranking.json", top.join(", "))])
}

/// Split the feature rows and train the configured models: reads
/// `features.csv`, writes `split/{train,test}.csv` and
/// `models/<name>.json` (plus `models/<name>_trace.csv` for models with
/// epoch curves). `only` narrows training to one configured model.
pub fn stage_train(
    config: &PipelineConfig,
    out: &Path,
    only: Option<&str>,
) -> Result<Vec<String>, PipelineError> {
    config.validate()?;
    if let Some(name) = only {
        if !config.models.iter().any(|s| s.name == name) {
            return Err(PipelineError::Config(format!(
                "model '{name}' is not in the configured model list"
            )));
        }
    }
    let ds = io::load_features_csv(&out.join("features.csv"))?;
    let experiment_seed = config.seed.derive("experiment");
    let (train, test) = stratified_split(&ds, config.test_fraction, experiment_seed.derive("split"))?;
    ensure_dir(&out.join("split"))?;
    io::write_features_csv(&out.join("split").join("train.csv"), &train)?;
    io::write_features_csv(&out.join("split").join("test.csv"), &test)?;
    ensure_dir(&out.join("models"))?;

    let mut lines = vec![format!(
        "train: split {} rows into {} train / {} test",
        ds.n_rows(),
        train.n_rows(),
        test.n_rows()
    )];
    for (i, spec) in config.models.iter().enumerate() {
        if only.is_some_and(|name| name != spec.name) {
            continue;
        }
        let strategy = lookup(&spec.name)?;
        let label = format!("train/{i}/{}", spec.name);
        let outcome =
            strategy.train_from_json(&train, spec.params.as_ref(), experiment_seed.derive(&label))?;
        write_json(&model_file(out, &spec.name), &outcome.model)?;
        let mut note = format!("train: {} ({}) -> models/{}.json", spec.name, strategy.summary(), spec.name);
        if let Some(trace) = &outcome.trace {
            write_trace_csv(&trace_file(out, &spec.name), trace)?;
            note.push_str(&format!(" + models/{}_trace.csv", spec.name));
        }
        lines.push(note);
    }
    Ok(lines)
}

/// Score every configured model on the held-out split: reads
/// `split/{train,test}.csv` and `models/*.json`, writes
/// `reports/<name>.json` and `metrics.json`.
pub fn stage_evaluate(config: &PipelineConfig, out: &Path) -> Result<Vec<String>, PipelineError> {
    config.validate()?;
    let train = io::load_features_csv(&out.join("split").join("train.csv"))?;
    let test = io::load_features_csv(&out.join("split").join("test.csv"))?;
    let actual: Vec<Mode> = test.rows.iter().map(|r| r.mode).collect();
    ensure_dir(&out.join("reports"))?;

    let mut entries = Vec::with_capacity(config.models.len());
    let mut lines = Vec::new();
    for spec in &config.models {
        let path = model_file(out, &spec.name);
        let model: TrainedModel = read_json(&path)?;
        if model.n_features() != test.n_features() {
            return Err(PipelineError::Data(format!(
                "{}: model expects {} features but the test split has {}",
                path.display(),
                model.n_features(),
                test.n_features()
            )));
        }
        let predicted: Vec<Mode> = test.rows.iter().map(|r| model.predict(&r.values)).collect();
        let confusion = ConfusionMatrix::from_pairs(&actual, &predicted)?;
        let summary = metrics(&confusion)?;
        let report = ModelReportFile {
            model: spec.name.clone(),
            params: spec.params.clone(),
            train_rows: train.n_rows(),
            test_rows: test.n_rows(),
            test_class_counts: test.class_counts(),
            confusion: ConfusionFile::new(&confusion),
            metrics: summary,
        };
        write_json(&report_file(out, &spec.name), &report)?;
        entries.push(MetricsEntry {
            model: spec.name.clone(),
            accuracy_pct: round2_half_up(summary.accuracy_pct),
            recall_pct: summary.recall_pct.map(round2_half_up),
            precision_pct: summary.precision_pct.map(|p| p.map(round2_half_up)),
        });
        lines.push(format!(
            "evaluate: {} accuracy {:.2}% -> reports/{}.json",
            spec.name,
            round2_half_up(summary.accuracy_pct),
            spec.name
        ));
    }
    write_json(
        &out.join("metrics.json"),
        &MetricsFile { train_rows: train.n_rows(), test_rows: test.n_rows(), models: entries },
    )?;
    lines.push("evaluate: headline table -> metrics.json".into());
    Ok(lines)
}

fn matrix_block(report: &ModelReportFile) -> String {
    let labels: Vec<&str> = Mode::ALL.iter().map(|m| m.as_str()).collect();
    let mut s = String::new();
    s.push_str(&format!("{:>12}  {:>8} {:>8} {:>8}  {:>9}\n", "", labels[0], labels[1], labels[2], "recall%"));
    for (r, label) in labels.iter().enumerate() {
        s.push_str(&format!(
            "{:>12}  {:>8} {:>8} {:>8}  {:>9.2}\n",
            label,
            report.confusion.counts[r][0],
            report.confusion.counts[r][1],
            report.confusion.counts[r][2],
            round2_half_up(report.metrics.recall_pct[r]),
        ));
    }
    let prec: Vec<String> = report
        .metrics
        .precision_pct
        .iter()
        .map(|p| match p {
            Some(v) => format!("{:.2}", round2_half_up(*v)),
            None => "-".to_string(),
        })
        .collect();
    s.push_str(&format!(
        "{:>12}  {:>8} {:>8} {:>8}\n",
        "precision%", prec[0], prec[1], prec[2]
    ));
    s
}

/// Render the human-readable summary and plot data: reads `ranking.json`,
/// `reports/*.json`, `metrics.json` (and any epoch traces), writes
/// `summary.txt`, `plots/accuracy.csv`, `plots/<name>_epochs.csv`.
pub fn stage_report(config: &PipelineConfig, out: &Path) -> Result<Vec<String>, PipelineError> {
    config.validate()?;
    let ranking: Vec<RankingEntry> = read_json(&out.join("ranking.json"))?;
    let metrics_file: MetricsFile = read_json(&out.join("metrics.json"))?;
    let reports: Vec<ModelReportFile> = config
        .models
        .iter()
        .map(|spec| read_json(&report_file(out, &spec.name)))
        .collect::<Result<_, _>>()?;
    ensure_dir(&out.join("plots"))?;

    // accuracy per model, for plotting
    let mut accuracy_csv = String::from("model,accuracy_pct\n");
    for entry in &metrics_file.models {
        accuracy_csv.push_str(&format!("{},{}\n", entry.model, io::fmt_float(entry.accuracy_pct)));
    }
    write_text(&out.join("plots").join("accuracy.csv"), &accuracy_csv)?;

    // epoch traces, copied next to the other plot data
    let mut plot_names = vec!["accuracy.csv".to_string()];
    for spec in &config.models {
        let src = trace_file(out, &spec.name);
        if src.exists() {
            let dst = out.join("plots").join(format!("{}_epochs.csv", spec.name));
            fs::copy(&src, &dst).map_err(|e| data_err(&dst, e))?;
            plot_names.push(format!("{}_epochs.csv", spec.name));
        }
    }

    // the summary text
    let mut s = String::new();
    s.push_str("mobility mode detection — experiment summary\n");
    s.push_str("=============================================\n\n");
    s.push_str(&format!("seed:        {}\n", config.seed.0));
    s.push_str(&format!("train rows:  {}\n", metrics_file.train_rows));
    s.push_str(&format!("test rows:   {}\n", metrics_file.test_rows));
    if let Some(first) = reports.first() {
        let counts = first.test_class_counts;
        s.push_str(&format!(
            "test mix:    walking {}, biking {}, driving {}\n",
            counts[0], counts[1], counts[2]
        ));
    }

    s.push_str("\nfeature ranking (descending weight)\n");
    let mut by_rank = ranking.clone();
    by_rank.sort_by_key(|e| e.rank);
    for e in &by_rank {
        s.push_str(&format!("{:>4}  {:<6} {:>+8.4}  {}\n", e.rank, e.column, e.weight, e.name));
    }

    for report in &reports {
        let summary = lookup(&report.model).map(|st| st.summary()).unwrap_or("");
        s.push_str(&format!("\nmodel: {} — {}\n", report.model, summary));
        if let Some(params) = &report.params {
            s.push_str(&format!("params: {params}\n"));
        }
        let correct: u64 = (0..Mode::COUNT).map(|c| report.confusion.counts[c][c]).sum();
        s.push_str(&format!(
            "accuracy: {:.2}% ({} of {} test rows)\n",
            round2_half_up(report.metrics.accuracy_pct),
            correct,
            report.test_rows
        ));
        s.push_str("rows actual, columns predicted\n");
        s.push_str(&matrix_block(report));
    }
    write_text(&out.join("summary.txt"), &s)?;

    Ok(vec![format!(
        "report: summary.txt + plots/{{{}}} written",
        plot_names.join(", ")
    )])
}

/// Run the whole pipeline into `out`: config echo, simulation, extraction,
/// ranking, training, evaluation, and reporting.
pub fn reproduce(config: &PipelineConfig, out: &Path) -> Result<Vec<String>, PipelineError> {
    config.validate()?;
    ensure_dir(out)?;
    write_json(&out.join("config.json"), config)?;
    let mut lines = vec!["reproduce: config echo -> config.json".to_string()];
    lines.extend(stage_simulate(config, out)?);
    lines.extend(stage_extract(config, out)?);
    lines.extend(stage_rank(config, out)?);
    lines.extend(stage_train(config, out, None)?);
    lines.extend(stage_evaluate(config, out)?);
    lines.extend(stage_report(config, out)?);
    Ok(lines)
}

//! Configuration-driven workflow behind the command-line tool.
//!
//! Every command reads its inputs from the paths in [`RunConfig`], writes its
//! outputs atomically, and depends only on those inputs and the configured
//! seeds, so reruns reproduce their outputs byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{lambda_sweep, write_dump, AttackConfig, RecordAttack};
use crate::cohort::{
    load_cohort, plan_folds, save_cohort, synth_cohort, write_raw_csv, Cohort, FoldPlan,
    SynthConfig,
};
use crate::error::{Error, Result};
use crate::evaluate::{classification_metrics, ClassificationMetrics};
use crate::fsio;
use crate::metrics::{curve_to_csv, default_budgets, success_curve, CurvePoint, PerturbationStats};
use crate::model::{
    load_params, predict, save_params, train, train_with_validation, Architecture, ModelParams,
    TrainConfig,
};
use crate::preprocess::{preprocess, read_raw_cohort, PreprocessConfig};
use crate::susceptibility::{
    cumulative_scores, rank_measurements, ranking_to_csv, screen_cohort, write_map, Direction,
    RankEntry, Screening,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub observations: PathBuf,
    pub labels: PathBuf,
    pub cohort: PathBuf,
    pub plan: PathBuf,
    pub weights_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            observations: "data/observations.csv".into(),
            labels: "data/labels.csv".into(),
            cohort: "work/cohort.json".into(),
            plan: "work/folds.txt".into(),
            weights_dir: "work/weights".into(),
            output_dir: "out".into(),
        }
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.observations,
            &mut self.labels,
            &mut self.cohort,
            &mut self.plan,
            &mut self.weights_dir,
            &mut self.output_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn weights(&self, fold: usize) -> PathBuf {
        self.weights_dir.join(format!("fold{fold}.json"))
    }

    fn fold_dir(&self, fold: usize) -> PathBuf {
        self.output_dir.join("screen").join(format!("fold{fold}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_dim: usize,
    pub dense_dim: usize,
    /// After early stopping picks an epoch count, retrain from scratch on
    /// training and validation records together for that many epochs.
    pub retrain_on_validation: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden_dim: 32,
            dense_dim: 16,
            retrain_on_validation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// MAP budgets of the success curves, ascending.
    pub budgets: Vec<f64>,
    /// Budget quoted in the report's success table.
    pub headline_budget: f64,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            budgets: default_budgets(),
            headline_budget: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed of the fold plan.
    pub seed: u64,
    pub folds: usize,
    /// Attack directions such as `0to1`.
    pub directions: Vec<String>,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub preprocess: PreprocessConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub attack: AttackConfig,
    pub report: ReportSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            folds: 5,
            directions: vec!["0to1".into(), "1to0".into()],
            paths: Paths::default(),
            synth: SynthConfig::default(),
            preprocess: PreprocessConfig::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            attack: AttackConfig::default(),
            report: ReportSection::default(),
        }
    }
}

/// Sets `dotted.key = value` in `table`. The value is read as a TOML value
/// when it parses as one and as a bare string otherwise.
fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::InvalidConfig(format!(
            "override `{assignment}` is not of the form key=value"
        ))
    })?;
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut node = table;
    for part in parents {
        node = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                Error::InvalidConfig(format!("override `{key}`: `{part}` is not a table"))
            })?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Parses a TOML document, applies `key=value` overrides, and validates.
    /// Relative paths are kept as written.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths are resolved against its directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let mut cfg = Self::from_toml_str(&fsio::read_to_string(path)?, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.paths.resolve(base);
        Ok(cfg)
    }

    /// Defaults plus overrides, with relative paths resolved against `base`.
    pub fn with_base(base: &Path, overrides: &[String]) -> Result<Self> {
        let mut cfg = Self::from_toml_str("", overrides)?;
        cfg.paths.resolve(base);
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidConfig(format!(
                "folds must be at least 2, got {}",
                self.folds
            )));
        }
        self.directions()?;
        self.train.validate()?;
        self.attack.validate()?;
        if self.preprocess.length == 0 {
            return Err(Error::InvalidConfig(
                "preprocess.length must be positive".into(),
            ));
        }
        if self.report.budgets.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::InvalidConfig(
                "report.budgets must be ascending".into(),
            ));
        }
        Ok(())
    }

    pub fn directions(&self) -> Result<Vec<Direction>> {
        if self.directions.is_empty() {
            return Err(Error::InvalidConfig(
                "no attack direction configured".into(),
            ));
        }
        self.directions
            .iter()
            .map(|d| Direction::parse(d))
            .collect()
    }

    pub fn architecture(&self, input_dim: usize, class_count: usize) -> Architecture {
        Architecture::new(
            input_dim,
            self.model.hidden_dim,
            self.model.dense_dim,
            class_count,
        )
    }
}

fn class_count(cohort: &Cohort) -> usize {
    cohort.labels.iter().max().map_or(2, |&m| (m + 1).max(2))
}

/// Writes a seeded synthetic cohort to the processed-cohort path, and
/// optionally as raw observation and label files.
pub fn cmd_synth(cfg: &RunConfig, raw_gap_rate: Option<f64>) -> Result<String> {
    let cohort = synth_cohort(&cfg.synth)?;
    save_cohort(&cohort, None, &cfg.paths.cohort)?;
    if let Some(rate) = raw_gap_rate {
        write_raw_csv(
            &cohort,
            &cfg.paths.observations,
            &cfg.paths.labels,
            rate,
            cfg.synth.seed,
        )?;
    }
    let pos = cohort.labels.iter().filter(|&&y| y == 1).count();
    Ok(format!(
        "synthetic cohort: n={} d={} T={} positives={}",
        cohort.len(),
        cohort.n_features(),
        cohort.n_steps(),
        pos
    ))
}

pub fn cmd_preprocess(cfg: &RunConfig) -> Result<String> {
    let raw = read_raw_cohort(&cfg.paths.observations, &cfg.paths.labels)?;
    let out = preprocess(&raw.records, &raw.feature_names, &cfg.preprocess)?;
    let cohort = Cohort::new(out.records, out.labels, raw.feature_names)?;
    save_cohort(&cohort, Some(&out.scaler), &cfg.paths.cohort)?;
    Ok(format!(
        "processed cohort: n={} d={} T={}",
        cohort.len(),
        cohort.n_features(),
        cohort.n_steps()
    ))
}

pub fn cmd_split(cfg: &RunConfig) -> Result<String> {
    let (cohort, _) = load_cohort(&cfg.paths.cohort)?;
    let plan = plan_folds(&cohort.labels, cfg.folds, cfg.seed)?;
    plan.save(&cfg.paths.plan)?;
    let mut out = format!("fold plan: k={} seed={}", cfg.folds, cfg.seed);
    for (f, s) in plan.splits.iter().enumerate() {
        let _ = write!(
            out,
            "\nfold {f}: train {} validation {} test {}",
            s.train.len(),
            s.validation.len(),
            s.test.len()
        );
    }
    Ok(out)
}

fn load_inputs(cfg: &RunConfig) -> Result<(Cohort, FoldPlan)> {
    let (cohort, _) = load_cohort(&cfg.paths.cohort)?;
    let plan = FoldPlan::load(&cfg.paths.plan)?;
    let n = cohort.len();
    for s in &plan.splits {
        if let Some(&i) = s
            .train
            .iter()
            .chain(&s.validation)
            .chain(&s.test)
            .find(|&&i| i >= n)
        {
            return Err(Error::InvalidInput(format!(
                "fold plan index {i} is out of range for a cohort of {n} records"
            )));
        }
    }
    Ok((cohort, plan))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub train_size: usize,
    pub validation_size: usize,
    pub test_size: usize,
    pub best_epochs: usize,
    pub metrics: ClassificationMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub folds: Vec<FoldMetrics>,
    pub mean: ClassificationMetrics,
    pub sd: ClassificationMetrics,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn summarize(folds: &[ClassificationMetrics]) -> (ClassificationMetrics, ClassificationMetrics) {
    let stat =
        |f: fn(&ClassificationMetrics) -> f64| mean_sd(&folds.iter().map(f).collect::<Vec<_>>());
    let (auc, f1, precision, recall, accuracy) = (
        stat(|m| m.auc),
        stat(|m| m.f1),
        stat(|m| m.precision),
        stat(|m| m.recall),
        stat(|m| m.accuracy),
    );
    (
        ClassificationMetrics {
            auc: auc.0,
            f1: f1.0,
            precision: precision.0,
            recall: recall.0,
            accuracy: accuracy.0,
        },
        ClassificationMetrics {
            auc: auc.1,
            f1: f1.1,
            precision: precision.1,
            recall: recall.1,
            accuracy: accuracy.1,
        },
    )
}

fn metrics_csv(report: &TrainReport) -> String {
    let mut out = String::from("fold,auc,f1,precision,recall,accuracy,best_epochs\n");
    let row = |out: &mut String, label: &str, m: &ClassificationMetrics, epochs: &str| {
        let _ = writeln!(
            out,
            "{label},{},{},{},{},{},{epochs}",
            m.auc, m.f1, m.precision, m.recall, m.accuracy
        );
    };
    for f in &report.folds {
        row(
            &mut out,
            &f.fold.to_string(),
            &f.metrics,
            &f.best_epochs.to_string(),
        );
    }
    row(&mut out, "mean", &report.mean, "");
    row(&mut out, "sd", &report.sd, "");
    out
}

/// Trains one model per fold and evaluates it on the held-out fold. The epoch
/// count is chosen by validation loss; the returned model is either the best
/// validation epoch or, with `model.retrain_on_validation`, a fresh model
/// trained on training and validation records for that many epochs.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainReport> {
    let (cohort, plan) = load_inputs(cfg)?;
    let arch = cfg.architecture(cohort.n_features(), class_count(&cohort));
    let results: Vec<(FoldMetrics, ModelParams)> = plan
        .splits
        .par_iter()
        .enumerate()
        .map(|(fold, split)| {
            let mut outcome = train_with_validation(
                &cohort.dataset(&split.train),
                &cohort.dataset(&split.validation),
                arch,
                &cfg.train,
            )?;
            if cfg.model.retrain_on_validation && !split.validation.is_empty() {
                let mut all = split.train.clone();
                all.extend_from_slice(&split.validation);
                all.sort_unstable();
                let full = TrainConfig {
                    epochs: outcome.best_epochs,
                    ..cfg.train.clone()
                };
                outcome.params = train(&cohort.dataset(&all), arch, &full)?.params;
            }
            let mut scores = Vec::with_capacity(split.test.len());
            let mut predicted = Vec::with_capacity(split.test.len());
            let mut labels = Vec::with_capacity(split.test.len());
            for &i in &split.test {
                let p = predict(&outcome.params, &cohort.records[i])?;
                scores.push(p.probabilities[1]);
                predicted.push(p.label);
                labels.push(cohort.labels[i]);
            }
            let metrics = classification_metrics(&scores, &predicted, &labels)?;
            Ok((
                FoldMetrics {
                    fold,
                    train_size: split.train.len(),
                    validation_size: split.validation.len(),
                    test_size: split.test.len(),
                    best_epochs: outcome.best_epochs,
                    metrics,
                },
                outcome.params,
            ))
        })
        .collect::<Result<_>>()?;

    for (m, params) in &results {
        save_params(params, &cfg.paths.weights(m.fold))?;
    }
    let folds: Vec<FoldMetrics> = results.into_iter().map(|(m, _)| m).collect();
    let (mean, sd) = summarize(&folds.iter().map(|f| f.metrics).collect::<Vec<_>>());
    let report = TrainReport { folds, mean, sd };
    let out = &cfg.paths.output_dir;
    fsio::write_atomic(&out.join("metrics.csv"), metrics_csv(&report).as_bytes())?;
    fsio::write_atomic(
        &out.join("metrics.json"),
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    Ok(report)
}

impl TrainReport {
    pub fn render(&self) -> String {
        let mut out = String::from("fold  auc     f1      precision  recall  accuracy\n");
        for f in &self.folds {
            let m = &f.metrics;
            let _ = writeln!(
                out,
                "{:<5} {:.4}  {:.4}  {:.4}     {:.4}  {:.4}",
                f.fold, m.auc, m.f1, m.precision, m.recall, m.accuracy
            );
        }
        let _ = write!(
            out,
            "mean  {:.4}  {:.4}  {:.4}     {:.4}  {:.4}",
            self.mean.auc, self.mean.f1, self.mean.precision, self.mean.recall, self.mean.accuracy
        );
        out
    }
}

/// Attacks one record with the fold's model over the configured lambda sweep.
/// The record must be correctly classified; the target defaults to the next class.
pub fn cmd_attack(
    cfg: &RunConfig,
    fold: usize,
    record_id: &str,
    target: Option<usize>,
) -> Result<RecordAttack> {
    let (cohort, _) = load_cohort(&cfg.paths.cohort)?;
    let params = load_params(&cfg.paths.weights(fold))?;
    let idx = cohort
        .records
        .iter()
        .position(|r| r.record_id == record_id)
        .ok_or_else(|| Error::InvalidInput(format!("no record with id `{record_id}`")))?;
    let x = &cohort.records[idx];
    let label = cohort.labels[idx];
    let predicted = predict(&params, x)?.label;
    if predicted != label {
        return Err(Error::NotSourceClass {
            predicted,
            source_label: label,
        });
    }
    let target = target.unwrap_or((label + 1) % params.class_count());
    let candidates = lambda_sweep(&params, x, label, target, &cfg.attack)?;
    let attack = RecordAttack::new(record_id, label, target, &candidates);
    let safe_id: String = record_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    write_dump(
        std::slice::from_ref(&attack),
        &cfg.paths
            .output_dir
            .join(format!("attack_fold{fold}_{safe_id}.jsonl")),
    )?;
    Ok(attack)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScreenSummary {
    pub fold: usize,
    pub attacked: usize,
    pub succeeded: usize,
    pub failed: Vec<String>,
    /// Per-feature cumulative scores; absent when nothing succeeded.
    pub cumulative: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub budget: f64,
    pub success_rate: f64,
    pub mean_pp: Option<f64>,
}

impl From<&CurvePoint> for CurveRow {
    fn from(p: &CurvePoint) -> Self {
        Self {
            budget: p.budget,
            success_rate: p.success_rate,
            mean_pp: p.mean_pp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSummary {
    pub direction: Direction,
    pub attacked: usize,
    pub succeeded: usize,
    pub success_fraction: f64,
    pub folds: Vec<FoldScreenSummary>,
    pub ranking: Vec<RankEntry>,
    pub curve: Vec<CurveRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenSummary {
    pub feature_names: Vec<String>,
    pub directions: Vec<DirectionSummary>,
}

impl ScreenSummary {
    /// Directions in which no attack succeeded.
    pub fn failed_directions(&self) -> Vec<Direction> {
        self.directions
            .iter()
            .filter(|d| d.succeeded == 0)
            .map(|d| d.direction)
            .collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for d in &self.directions {
            let _ = writeln!(
                out,
                "{}: attacked {} succeeded {} ({:.1}%)",
                d.direction,
                d.attacked,
                d.succeeded,
                100.0 * d.success_fraction
            );
        }
        out.pop();
        out
    }
}

/// Screens each fold's held-out records with that fold's model in every
/// configured direction, writing per-fold maps and candidate dumps plus
/// cross-fold rankings, success curves and a summary.
pub fn cmd_screen(cfg: &RunConfig) -> Result<ScreenSummary> {
    let (cohort, plan) = load_inputs(cfg)?;
    let names = &cohort.feature_names;
    let params: Vec<ModelParams> = (0..plan.splits.len())
        .map(|f| load_params(&cfg.paths.weights(f)))
        .collect::<Result<_>>()?;
    let out = &cfg.paths.output_dir;

    let mut directions = Vec::new();
    for direction in cfg.directions()? {
        let tag = direction.tag();
        let mut folds = Vec::new();
        let mut stats: Vec<PerturbationStats> = Vec::new();
        for (fold, split) in plan.splits.iter().enumerate() {
            let test = cohort.dataset(&split.test);
            let screening = match screen_cohort(&params[fold], &test, names, &cfg.attack, direction)
            {
                Ok(s) => s,
                Err(Error::NoEligibleRecords(_)) => Screening {
                    direction,
                    attacked: 0,
                    map: None,
                    ranking: Vec::new(),
                    records: Vec::new(),
                    failed: Vec::new(),
                    stats: Vec::new(),
                },
                Err(e) => return Err(e),
            };
            let dir = cfg.paths.fold_dir(fold);
            write_dump(
                &screening.records,
                &dir.join(format!("{tag}_candidates.jsonl")),
            )?;
            if let Some(map) = &screening.map {
                write_map(map, names, &dir, &tag)?;
            }
            stats.extend_from_slice(&screening.stats);
            folds.push(FoldScreenSummary {
                fold,
                attacked: screening.attacked,
                succeeded: screening.succeeded(),
                failed: screening.failed.clone(),
                cumulative: screening.map.as_ref().map(cumulative_scores),
            });
        }

        let attacked: usize = folds.iter().map(|f| f.attacked).sum();
        let succeeded: usize = folds.iter().map(|f| f.succeeded).sum();
        let per_fold: Vec<Vec<f64>> = folds.iter().filter_map(|f| f.cumulative.clone()).collect();
        let ranking = if per_fold.is_empty() {
            Vec::new()
        } else {
            rank_measurements(&per_fold, names)?
        };
        fsio::write_atomic(
            &out.join(format!("ranking_{tag}.csv")),
            ranking_to_csv(&ranking).as_bytes(),
        )?;
        let curve = if stats.is_empty() {
            Vec::new()
        } else {
            success_curve(&stats, &cfg.report.budgets)?
        };
        fsio::write_atomic(
            &out.join(format!("curve_{tag}.csv")),
            curve_to_csv(&curve).as_bytes(),
        )?;
        directions.push(DirectionSummary {
            direction,
            attacked,
            succeeded,
            success_fraction: if attacked == 0 {
                0.0
            } else {
                succeeded as f64 / attacked as f64
            },
            folds,
            ranking,
            curve: curve.iter().map(CurveRow::from).collect(),
        });
    }

    let summary = ScreenSummary {
        feature_names: names.clone(),
        directions,
    };
    fsio::write_atomic(
        &out.join("screen_summary.json"),
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    Ok(summary)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&fsio::read_to_string(path)?).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

/// Renders `report.md` from the training metrics and the screening summary:
/// a cross-validation metrics table, a ranking table per attack direction
/// with `mean (SD)` scores, and the success rates at the headline budget.
pub fn cmd_report(cfg: &RunConfig) -> Result<String> {
    let out = &cfg.paths.output_dir;
    let train: TrainReport = read_json(&out.join("metrics.json"))?;
    let screen: ScreenSummary = read_json(&out.join("screen_summary.json"))?;
    let text = render_report(&train, &screen, cfg.report.headline_budget);
    fsio::write_atomic(&out.join("report.md"), text.as_bytes())?;
    Ok(text)
}

pub fn render_report(train: &TrainReport, screen: &ScreenSummary, budget: f64) -> String {
    let mut r = String::from("# Susceptibility screening report\n\n");
    let _ = writeln!(
        r,
        "## Classification, {}-fold cross-validation\n",
        train.folds.len()
    );
    r.push_str("| Metric | Mean | SD |\n|---|---|---|\n");
    type Getter = fn(&ClassificationMetrics) -> f64;
    let rows: [(&str, Getter); 5] = [
        ("AUC", |m| m.auc),
        ("F1 score", |m| m.f1),
        ("Precision", |m| m.precision),
        ("Recall", |m| m.recall),
        ("Accuracy", |m| m.accuracy),
    ];
    for (name, f) in rows {
        let _ = writeln!(
            r,
            "| {name} | {:.4} | {:.4} |",
            f(&train.mean),
            f(&train.sd)
        );
    }
    r.push_str("\n| Fold | AUC | F1 | Precision | Recall | Accuracy | Epochs |\n|---|---|---|---|---|---|---|\n");
    for f in &train.folds {
        let m = &f.metrics;
        let _ = writeln!(
            r,
            "| {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {} |",
            f.fold, m.auc, m.f1, m.precision, m.recall, m.accuracy, f.best_epochs
        );
    }

    r.push_str("\n## Measurement ranking by cumulative susceptibility score\n\n");
    r.push_str(
        "Scores are the mean across folds with the sample standard deviation in parentheses.\n\n",
    );
    r.push_str("| Rank |");
    for d in &screen.directions {
        let _ = write!(r, " {} attack |", d.direction);
    }
    r.push_str("\n|---|");
    for _ in &screen.directions {
        r.push_str("---|");
    }
    r.push('\n');
    let depth = screen
        .directions
        .iter()
        .map(|d| d.ranking.len())
        .max()
        .unwrap_or(0);
    for i in 0..depth {
        let _ = write!(r, "| {} |", i + 1);
        for d in &screen.directions {
            match d.ranking.get(i) {
                Some(e) => {
                    let _ = write!(r, " {} {:.2} ({:.2}) |", e.feature, e.mean, e.sd);
                }
                None => r.push_str(" |"),
            }
        }
        r.push('\n');
    }

    r.push_str("\n## Attack success\n\n");
    let _ = writeln!(
        r,
        "| Direction | Attacked | Succeeded | Success rate | Rate at MAP <= {budget} | Mean PP at MAP <= {budget} |"
    );
    r.push_str("|---|---|---|---|---|---|\n");
    for d in &screen.directions {
        let at = d.curve.iter().take_while(|p| p.budget <= budget).last();
        let rate = at.map_or("n/a".to_string(), |p| format!("{:.4}", p.success_rate));
        let pp = at
            .and_then(|p| p.mean_pp)
            .map_or("n/a".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(
            r,
            "| {} | {} | {} | {:.4} | {rate} | {pp} |",
            d.direction, d.attacked, d.succeeded, d.success_fraction
        );
    }
    r
}

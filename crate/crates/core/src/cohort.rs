//! Cohort data model, fold planning with class rebalancing, and the seeded
//! synthetic cohort generator.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::preprocess::ScalerParams;
use crate::record::{FeatureMatrix, MASK_VALUE};

/// Default share of the positive class in generated cohorts.
pub const DEFAULT_POSITIVE_RATE: f64 = 0.111;

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub records: Vec<FeatureMatrix>,
    pub labels: Vec<usize>,
    pub feature_names: Vec<String>,
}

impl Cohort {
    pub fn new(
        records: Vec<FeatureMatrix>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if records.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "cohort labels",
                expected: records.len(),
                found: labels.len(),
            });
        }
        let d = feature_names.len();
        let t = records.first().map_or(0, FeatureMatrix::n_steps);
        for r in &records {
            r.check_shape(d)?;
            if r.n_steps() != t {
                return Err(Error::DimensionMismatch {
                    context: "record length",
                    expected: t,
                    found: r.n_steps(),
                });
            }
        }
        Ok(Self {
            records,
            labels,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_steps(&self) -> usize {
        self.records.first().map_or(0, FeatureMatrix::n_steps)
    }

    /// Labelled pairs for the given record indices.
    pub fn dataset(&self, indices: &[usize]) -> Vec<(FeatureMatrix, usize)> {
        indices
            .iter()
            .map(|&i| (self.records[i].clone(), self.labels[i]))
            .collect()
    }

    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        class_counts(self.labels.iter().copied())
    }
}

fn class_counts(labels: impl Iterator<Item = usize>) -> BTreeMap<usize, usize> {
    let mut out = BTreeMap::new();
    for y in labels {
        *out.entry(y).or_insert(0) += 1;
    }
    out
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Members of each class among `indices`, keyed by class.
fn by_class(indices: &[usize], labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in indices {
        out.entry(labels[i]).or_default().push(i);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub seed: u64,
    pub splits: Vec<Split>,
}

/// Stratified `k`-fold partition. Each split's `train` holds every record
/// outside its test fold; `validation` is left empty.
///
/// Class members are shuffled, then dealt round-robin to the folds, with the
/// dealing position carried from one class to the next so that per-class and
/// total fold sizes each differ by at most one.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "k-fold splitting needs k >= 2, got {k}"
        )));
    }
    let all: Vec<usize> = (0..labels.len()).collect();
    let classes = by_class(&all, labels);
    for (&class, members) in &classes {
        if members.len() < k {
            return Err(Error::InsufficientClass {
                class,
                count: members.len(),
                required: k,
            });
        }
    }

    let mut rng = rng_for(seed, 0);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut next = 0;
    for (_, mut members) in classes {
        members.shuffle(&mut rng);
        for i in members {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }

    let splits = folds
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let mut in_test = vec![false; labels.len()];
            for &i in &test {
                in_test[i] = true;
            }
            let train = (0..labels.len()).filter(|&i| !in_test[i]).collect();
            Split {
                train,
                validation: Vec::new(),
                test,
            }
        })
        .collect();
    Ok(FoldPlan { seed, splits })
}

/// Down-samples every class (without replacement) to the size of the smallest one.
pub fn rebalance_training(indices: &[usize], labels: &[usize], seed: u64) -> Result<Vec<usize>> {
    let classes = by_class(indices, labels);
    if classes.len() < 2 {
        return Err(Error::SingleClass(
            classes.keys().next().copied().unwrap_or(0),
        ));
    }
    let minority = classes.values().map(Vec::len).min().unwrap_or(0);
    let mut rng = rng_for(seed, 1);
    let mut out = Vec::with_capacity(minority * classes.len());
    for (_, mut members) in classes {
        if members.len() > minority {
            members.shuffle(&mut rng);
            members.truncate(minority);
        }
        out.extend(members);
    }
    out.sort_unstable();
    Ok(out)
}

/// Stratified split into training and validation parts by the ratio
/// `train_parts : validation_parts`; each class contributes
/// `round(n_c * validation_parts / (train_parts + validation_parts))` records
/// to validation.
pub fn split_train_validation(
    indices: &[usize],
    labels: &[usize],
    ratio: (usize, usize),
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let (train_parts, val_parts) = ratio;
    let parts = train_parts + val_parts;
    if train_parts == 0 || val_parts == 0 {
        return Err(Error::InvalidConfig(format!(
            "split ratio must have positive parts, got {train_parts}:{val_parts}"
        )));
    }
    if indices.len() < parts {
        return Err(Error::InvalidInput(format!(
            "{} indices are too few for a {train_parts}:{val_parts} split",
            indices.len()
        )));
    }
    let mut rng = rng_for(seed, 2);
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for (_, mut members) in by_class(indices, labels) {
        members.shuffle(&mut rng);
        let n_val = (members.len() as f64 * val_parts as f64 / parts as f64).round() as usize;
        validation.extend_from_slice(&members[..n_val]);
        train.extend_from_slice(&members[n_val..]);
    }
    train.sort_unstable();
    validation.sort_unstable();
    Ok((train, validation))
}

/// The full cross-validation plan: stratified folds, then for each split the
/// non-test records are rebalanced and divided 4:1 into training and validation.
pub fn plan_folds(labels: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    let mut plan = stratified_kfold(labels, k, seed)?;
    for (fold, split) in plan.splits.iter_mut().enumerate() {
        let fold_seed = seed.wrapping_add(1 + fold as u64);
        let balanced = rebalance_training(&split.train, labels, fold_seed)?;
        let (train, validation) = split_train_validation(&balanced, labels, (4, 1), fold_seed)?;
        split.train = train;
        split.validation = validation;
    }
    Ok(plan)
}

impl FoldPlan {
    /// Plain-text form: a header, then one line per split part listing indices.
    ///
    /// ```text
    /// # suscept fold plan
    /// seed 7
    /// folds 5
    /// fold 0 train 1 4 9 ...
    /// fold 0 validation ...
    /// fold 0 test ...
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = String::from("# suscept fold plan\n");
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "folds {}", self.splits.len());
        for (f, split) in self.splits.iter().enumerate() {
            for (name, idx) in [
                ("train", &split.train),
                ("validation", &split.validation),
                ("test", &split.test),
            ] {
                let _ = write!(out, "fold {f} {name}");
                for i in idx {
                    let _ = write!(out, " {i}");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line as u64,
            message,
        };
        let mut seed = None;
        let mut folds = None;
        let mut splits: Vec<Split> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let mut parts = raw.split_whitespace();
            let parse_num = |s: Option<&str>| -> Result<u64> {
                s.and_then(|v| v.parse().ok())
                    .ok_or_else(|| err(line, format!("expected a number in `{raw}`")))
            };
            match parts.next() {
                Some("seed") => seed = Some(parse_num(parts.next())?),
                Some("folds") => {
                    let k = parse_num(parts.next())? as usize;
                    splits = vec![Split::default(); k];
                    folds = Some(k);
                }
                Some("fold") => {
                    let f = parse_num(parts.next())? as usize;
                    let split = splits
                        .get_mut(f)
                        .ok_or_else(|| err(line, format!("fold {f} out of range")))?;
                    let target = match parts.next() {
                        Some("train") => &mut split.train,
                        Some("validation") => &mut split.validation,
                        Some("test") => &mut split.test,
                        other => return Err(err(line, format!("unknown split part {other:?}"))),
                    };
                    for p in parts {
                        target.push(
                            p.parse()
                                .map_err(|_| err(line, format!("invalid index `{p}`")))?,
                        );
                    }
                }
                Some(other) => return Err(err(line, format!("unknown key `{other}`"))),
                None => {}
            }
        }
        let (Some(seed), Some(_)) = (seed, folds) else {
            return Err(err(0, "missing `seed` or `folds` header".into()));
        };
        Ok(FoldPlan { seed, splits })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsio::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fsio::read_to_string(path)?, path)
    }
}

const COHORT_FORMAT: &str = "suscept-cohort";

/// On-disk processed cohort: shape header, feature names, optional scaler,
/// and row-major `n x d x t` values with an `n x t` mask (1 = observed).
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CohortDocument {
    format: String,
    version: u32,
    n: usize,
    d: usize,
    t: usize,
    feature_names: Vec<String>,
    scaler: Option<ScalerParams>,
    record_ids: Vec<String>,
    labels: Vec<usize>,
    values: Vec<f64>,
    mask: Vec<u8>,
}

pub fn cohort_to_json(cohort: &Cohort, scaler: Option<&ScalerParams>) -> String {
    let (n, d, t) = (cohort.len(), cohort.n_features(), cohort.n_steps());
    let mut values = Vec::with_capacity(n * d * t);
    let mut mask = Vec::with_capacity(n * t);
    for r in &cohort.records {
        values.extend(r.values.iter().copied());
        mask.extend(r.mask.iter().map(|&m| u8::from(m)));
    }
    let doc = CohortDocument {
        format: COHORT_FORMAT.into(),
        version: 1,
        n,
        d,
        t,
        feature_names: cohort.feature_names.clone(),
        scaler: scaler.cloned(),
        record_ids: cohort.records.iter().map(|r| r.record_id.clone()).collect(),
        labels: cohort.labels.clone(),
        values,
        mask,
    };
    serde_json::to_string(&doc).expect("cohort document serializes")
}

pub fn cohort_from_json(text: &str) -> Result<(Cohort, Option<ScalerParams>)> {
    let doc: CohortDocument = serde_json::from_str(text)?;
    let bad = |m: String| Error::InvalidInput(format!("processed cohort: {m}"));
    if doc.format != COHORT_FORMAT {
        return Err(bad(format!("unknown format `{}`", doc.format)));
    }
    let (n, d, t) = (doc.n, doc.d, doc.t);
    if doc.feature_names.len() != d
        || doc.record_ids.len() != n
        || doc.labels.len() != n
        || doc.values.len() != n * d * t
        || doc.mask.len() != n * t
    {
        return Err(bad(format!(
            "arrays disagree with shape header ({n}, {d}, {t})"
        )));
    }
    let mut records = Vec::with_capacity(n);
    for (i, id) in doc.record_ids.into_iter().enumerate() {
        let values =
            Array2::from_shape_vec((d, t), doc.values[i * d * t..(i + 1) * d * t].to_vec())
                .expect("length checked above");
        let mask = doc.mask[i * t..(i + 1) * t]
            .iter()
            .map(|&m| m != 0)
            .collect();
        records.push(FeatureMatrix::new(id, values, mask)?);
    }
    Ok((
        Cohort::new(records, doc.labels, doc.feature_names)?,
        doc.scaler,
    ))
}

pub fn save_cohort(cohort: &Cohort, scaler: Option<&ScalerParams>, path: &Path) -> Result<()> {
    fsio::write_atomic(path, cohort_to_json(cohort, scaler).as_bytes())
}

pub fn load_cohort(path: &Path) -> Result<(Cohort, Option<ScalerParams>)> {
    cohort_from_json(&fsio::read_to_string(path)?)
}

/// Settings of the synthetic two-class cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub d: usize,
    pub length: usize,
    /// Peak separation between the class templates.
    pub margin: f64,
    /// Standard deviation of the per-cell Gaussian noise.
    pub noise: f64,
    pub positive_rate: f64,
    /// Shortest observed length; shorter records are pre-padded.
    pub min_length: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            d: 8,
            length: 16,
            margin: 0.3,
            noise: 0.05,
            positive_rate: DEFAULT_POSITIVE_RATE,
            min_length: 8,
            seed: 7,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("synthetic cohort: {m}")));
        if self.n < 2 || self.d == 0 || self.length == 0 {
            return bad(format!(
                "need n >= 2, d >= 1, length >= 1 (got {}, {}, {})",
                self.n, self.d, self.length
            ));
        }
        if !(self.margin > 0.0) {
            return bad(format!("margin must be positive, got {}", self.margin));
        }
        if !(self.noise >= 0.0) {
            return bad(format!("noise must be non-negative, got {}", self.noise));
        }
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return bad(format!(
                "positive_rate must lie in (0, 1), got {}",
                self.positive_rate
            ));
        }
        if self.min_length == 0 || self.min_length > self.length {
            return bad(format!(
                "min_length must lie in [1, {}], got {}",
                self.length, self.min_length
            ));
        }
        Ok(())
    }

    /// Class-`label` mean trajectory. The positive class is shifted from the
    /// baseline by `margin` times a per-feature weight (alternating sign,
    /// decaying from 1 to 0.4 across features) times a ramp that grows
    /// towards the most recent stamp.
    pub fn template(&self, label: usize) -> Array2<f64> {
        let (d, t) = (self.d, self.length);
        Array2::from_shape_fn((d, t), |(k, j)| {
            let phase = std::f64::consts::TAU * j as f64 / t as f64 + 0.9 * k as f64;
            let base = 0.4 + 0.15 * phase.sin();
            if label == 0 {
                return base;
            }
            let weight = 1.0 - 0.6 * k as f64 / (d.max(2) - 1) as f64;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let ramp = (j + 1) as f64 / t as f64;
            (base + sign * self.margin * weight * ramp).clamp(0.0, 1.0)
        })
    }
}

/// Seeded two-class cohort of template-plus-noise records clipped to `[0, 1]`.
pub fn synth_cohort(cfg: &SynthConfig) -> Result<Cohort> {
    cfg.validate()?;
    let positives = ((cfg.n as f64 * cfg.positive_rate).round() as usize).clamp(1, cfg.n - 1);
    let mut labels: Vec<usize> = (0..cfg.n).map(|i| usize::from(i < positives)).collect();
    let mut rng = rng_for(cfg.seed, 0);
    labels.shuffle(&mut rng);

    let templates = [cfg.template(0), cfg.template(1)];
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let records = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let observed = rng.random_range(cfg.min_length..=cfg.length);
            let pad = cfg.length - observed;
            let mut values = templates[y].clone();
            for ((_, j), v) in values.indexed_iter_mut() {
                *v = if j < pad {
                    MASK_VALUE
                } else {
                    (*v + noise.sample(&mut rng)).clamp(0.0, 1.0)
                };
            }
            let mask = (0..cfg.length).map(|j| j >= pad).collect();
            FeatureMatrix::new(format!("syn-{i:05}"), values, mask)
        })
        .collect::<Result<Vec<_>>>()?;
    let feature_names = (0..cfg.d).map(|k| format!("f{k}")).collect();
    Cohort::new(records, labels, feature_names)
}

/// Writes a cohort as raw observation rows (`record_id,feature_name,time_index,value`)
/// and label rows, in synthetic raw units (`offset_k + scale_k * value`).
///
/// Each observed cell is dropped with probability `gap_rate`, except that every
/// feature keeps at least one observation per record.
pub fn write_raw_csv(
    cohort: &Cohort,
    observations: &Path,
    labels: &Path,
    gap_rate: f64,
    seed: u64,
) -> Result<()> {
    let mut rng = rng_for(seed, 3);
    let mut obs = String::from("record_id,feature_name,time_index,value\n");
    for r in &cohort.records {
        let observed: Vec<usize> = (0..r.n_steps()).filter(|&j| r.mask[j]).collect();
        for (k, name) in cohort.feature_names.iter().enumerate() {
            let keep_anyway = observed[rng.random_range(0..observed.len())];
            let (offset, scale) = (50.0, 10.0 * (k + 1) as f64);
            for (time, &j) in observed.iter().enumerate() {
                let drop = rng.random_bool(gap_rate.clamp(0.0, 1.0));
                if drop && j != keep_anyway {
                    continue;
                }
                let _ = writeln!(
                    obs,
                    "{},{},{},{}",
                    r.record_id,
                    name,
                    time,
                    offset + scale * r.values[[k, j]]
                );
            }
        }
    }
    let mut lab = String::from("record_id,label\n");
    for (r, y) in cohort.records.iter().zip(&cohort.labels) {
        let _ = writeln!(lab, "{},{}", r.record_id, y);
    }
    fsio::write_atomic(observations, obs.as_bytes())?;
    fsio::write_atomic(labels, lab.as_bytes())
}

//! Raw, gappy, variable-length series to fixed-shape normalized records.
//!
//! Stages run in the order impute -> repair outliers -> pad/truncate -> min-max
//! normalize.

use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{FeatureMatrix, MASK_VALUE};

/// Default sequence length after padding.
pub const DEFAULT_LENGTH: usize = 48;

/// Interquartile-range multiplier for the outlier fences.
pub const IQR_FENCE: f64 = 1.5;

/// A record as ingested: per feature, the observed `(time index, value)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub record_id: String,
    /// Indexed by feature; time indices strictly increasing within each series.
    pub series: Vec<Vec<(u32, f64)>>,
    pub label: usize,
}

/// A record on a dense time window starting at `start`; no gaps remain.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseRecord {
    pub record_id: String,
    pub start: u32,
    /// Features as rows, consecutive time indices as columns.
    pub values: Array2<f64>,
    pub label: usize,
}

impl DenseRecord {
    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }
}

impl RawRecord {
    pub fn validate(&self) -> Result<()> {
        for (k, s) in self.series.iter().enumerate() {
            if s.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::InvalidInput(format!(
                    "record {}: time indices of feature #{k} are not strictly increasing",
                    self.record_id
                )));
            }
        }
        Ok(())
    }
}

/// Fills every gap of the record's observation window with that feature's
/// mean over its observed stamps.
///
/// The window spans the earliest to the latest time index observed in any
/// feature of the record.
pub fn impute_missing(r: &RawRecord, feature_names: &[String]) -> Result<DenseRecord> {
    r.validate()?;
    let name = |k: usize| {
        feature_names
            .get(k)
            .cloned()
            .unwrap_or_else(|| format!("#{k}"))
    };
    for (k, s) in r.series.iter().enumerate() {
        if s.is_empty() {
            return Err(Error::MissingFeature {
                record: r.record_id.clone(),
                feature: name(k),
            });
        }
    }
    let start =
        r.series.iter().map(|s| s[0].0).min().ok_or_else(|| {
            Error::InvalidInput(format!("record {} has no features", r.record_id))
        })?;
    let end = r
        .series
        .iter()
        .map(|s| s[s.len() - 1].0)
        .max()
        .unwrap_or(start);
    let len = (end - start) as usize + 1;

    let mut values = Array2::zeros((r.series.len(), len));
    for (k, s) in r.series.iter().enumerate() {
        let mean = s.iter().map(|&(_, v)| v).sum::<f64>() / s.len() as f64;
        let mut row = values.row_mut(k);
        row.fill(mean);
        for &(time, v) in s {
            row[(time - start) as usize] = v;
        }
    }
    Ok(DenseRecord {
        record_id: r.record_id.clone(),
        start,
        values,
        label: r.label,
    })
}

/// Quantile by linear interpolation between order statistics: position
/// `(n - 1) p` in the sorted sample.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-feature outlier fences computed over a whole cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub median: Vec<f64>,
}

impl OutlierBounds {
    pub fn is_outlier(&self, feature: usize, v: f64) -> bool {
        v < self.lower[feature] || v > self.upper[feature]
    }
}

/// Fences `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]` per feature, pooling all records and stamps.
pub fn fit_outlier_bounds(records: &[DenseRecord]) -> Result<OutlierBounds> {
    let d = records
        .first()
        .map(|r| r.values.nrows())
        .ok_or_else(|| Error::InvalidInput("cohort is empty".into()))?;
    let mut bounds = OutlierBounds {
        lower: Vec::with_capacity(d),
        upper: Vec::with_capacity(d),
        median: Vec::with_capacity(d),
    };
    for k in 0..d {
        let mut pool: Vec<f64> = Vec::new();
        for r in records {
            if r.values.nrows() != d {
                return Err(Error::DimensionMismatch {
                    context: "record feature count",
                    expected: d,
                    found: r.values.nrows(),
                });
            }
            pool.extend(r.values.row(k).iter().copied());
        }
        if pool.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("raw cohort values"));
        }
        pool.sort_by(f64::total_cmp);
        let q1 = quantile(&pool, 0.25);
        let q3 = quantile(&pool, 0.75);
        let iqr = q3 - q1;
        bounds.lower.push(q1 - IQR_FENCE * iqr);
        bounds.upper.push(q3 + IQR_FENCE * iqr);
        bounds.median.push(quantile(&pool, 0.5));
    }
    Ok(bounds)
}

/// Replaces values outside the fences.
///
/// An outlier takes the (already repaired) value of the previous stamp. At the
/// first stamp it takes the mean of the record's remaining in-bounds stamps,
/// or the cohort median of the feature when no such stamp exists.
pub fn repair_with_bounds(r: &DenseRecord, bounds: &OutlierBounds) -> DenseRecord {
    let mut out = r.clone();
    for k in 0..out.values.nrows() {
        let mut row = out.values.row_mut(k);
        for j in 0..row.len() {
            if !bounds.is_outlier(k, row[j]) {
                continue;
            }
            row[j] = if j > 0 {
                row[j - 1]
            } else {
                let inliers: Vec<f64> = row
                    .iter()
                    .skip(1)
                    .copied()
                    .filter(|&v| !bounds.is_outlier(k, v))
                    .collect();
                if inliers.is_empty() {
                    bounds.median[k]
                } else {
                    inliers.iter().sum::<f64>() / inliers.len() as f64
                }
            };
        }
    }
    out
}

/// Fits the fences on `records` and repairs every record with them.
pub fn repair_outliers(records: &[DenseRecord]) -> Result<(Vec<DenseRecord>, OutlierBounds)> {
    let bounds = fit_outlier_bounds(records)?;
    let repaired = records
        .iter()
        .map(|r| repair_with_bounds(r, &bounds))
        .collect();
    Ok((repaired, bounds))
}

/// Aligns a record to `length` stamps with the most recent event in the last column.
///
/// Short records are pre-padded with `mask_value` (mask `false`); long records
/// lose their oldest stamps.
pub fn pad_truncate(r: &DenseRecord, length: usize, mask_value: f64) -> Result<FeatureMatrix> {
    if length == 0 {
        return Err(Error::InvalidConfig(
            "target length must be at least 1".into(),
        ));
    }
    if r.is_empty() {
        return Err(Error::InvalidInput(format!(
            "record {} is empty",
            r.record_id
        )));
    }
    let d = r.values.nrows();
    let len = r.len();
    let mut values = Array2::from_elem((d, length), mask_value);
    let mut mask = vec![false; length];
    if len >= length {
        values.assign(&r.values.slice(ndarray::s![.., len - length..]));
        mask.fill(true);
    } else {
        let pad = length - len;
        values.slice_mut(ndarray::s![.., pad..]).assign(&r.values);
        mask[pad..].fill(true);
    }
    FeatureMatrix::new(r.record_id.clone(), values, mask)
}

/// Per-feature minimum and maximum over observed stamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScalerParams {
    /// Identity scaling for data that already lives in `[0, 1]`.
    pub fn unit(d: usize) -> Self {
        Self {
            min: vec![0.0; d],
            max: vec![1.0; d],
        }
    }

    fn range(&self, k: usize) -> f64 {
        self.max[k] - self.min[k]
    }
}

pub fn fit_scaler(records: &[FeatureMatrix]) -> Result<ScalerParams> {
    let d = records
        .first()
        .map(FeatureMatrix::n_features)
        .ok_or_else(|| Error::InvalidInput("cohort is empty".into()))?;
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for r in records {
        r.check_shape(d)?;
        for (j, _) in r.mask.iter().enumerate().filter(|(_, &m)| m) {
            for k in 0..d {
                let v = r.values[[k, j]];
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
    }
    for k in 0..d {
        if min[k] > max[k] {
            // No observed stamp anywhere for this feature.
            min[k] = 0.0;
            max[k] = 0.0;
        }
    }
    Ok(ScalerParams { min, max })
}

/// Min-max normalization; a constant feature maps to 0. Padded stamps hold [`MASK_VALUE`].
pub fn apply_scaler(r: &FeatureMatrix, s: &ScalerParams) -> Result<FeatureMatrix> {
    r.check_shape(s.min.len())?;
    let mut values = r.values.clone();
    for ((k, j), v) in values.indexed_iter_mut() {
        *v = if !r.mask[j] {
            MASK_VALUE
        } else if s.range(k) > 0.0 {
            (*v - s.min[k]) / s.range(k)
        } else {
            0.0
        };
    }
    Ok(r.with_values(values))
}

/// Normalized values back to raw units (padded stamps stay at [`MASK_VALUE`]).
pub fn invert_scaler(r: &FeatureMatrix, s: &ScalerParams) -> Result<Array2<f64>> {
    r.check_shape(s.min.len())?;
    let mut values = r.values.clone();
    for ((k, j), v) in values.indexed_iter_mut() {
        if r.mask[j] {
            *v = s.min[k] + *v * s.range(k);
        }
    }
    Ok(values)
}

/// A perturbation in normalized units expressed in raw units.
pub fn invert_perturbation(delta: &Array2<f64>, s: &ScalerParams) -> Array2<f64> {
    let mut out = delta.clone();
    for ((k, _), v) in out.indexed_iter_mut() {
        *v *= s.range(k);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub length: usize,
    pub mask_value: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            length: DEFAULT_LENGTH,
            mask_value: MASK_VALUE,
        }
    }
}

/// Output of the full preprocessing pipeline.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub records: Vec<FeatureMatrix>,
    pub labels: Vec<usize>,
    pub scaler: ScalerParams,
    pub bounds: OutlierBounds,
}

pub fn preprocess(
    raw: &[RawRecord],
    feature_names: &[String],
    cfg: &PreprocessConfig,
) -> Result<Preprocessed> {
    let dense = raw
        .iter()
        .map(|r| impute_missing(r, feature_names))
        .collect::<Result<Vec<_>>>()?;
    let (repaired, bounds) = repair_outliers(&dense)?;
    let padded = repaired
        .iter()
        .map(|r| pad_truncate(r, cfg.length, cfg.mask_value))
        .collect::<Result<Vec<_>>>()?;
    let scaler = fit_scaler(&padded)?;
    let records = padded
        .iter()
        .map(|r| apply_scaler(r, &scaler))
        .collect::<Result<Vec<_>>>()?;
    Ok(Preprocessed {
        records,
        labels: raw.iter().map(|r| r.label).collect(),
        scaler,
        bounds,
    })
}

/// Raw records plus the feature order they are indexed by.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCohort {
    pub feature_names: Vec<String>,
    pub records: Vec<RawRecord>,
}

/// Reads observation rows `record_id,feature_name,time_index,value` and label
/// rows `record_id,label` (both with a header line).
///
/// Features and records are ordered by first appearance in the observation file.
pub fn read_raw_cohort(observations: &Path, labels: &Path) -> Result<RawCohort> {
    let label_map = read_labels(labels)?;

    let mut reader = csv_reader(observations)?;
    let mut feature_index: HashMap<String, usize> = HashMap::new();
    let mut feature_names: Vec<String> = Vec::new();
    let mut record_index: HashMap<String, usize> = HashMap::new();
    // Per record: id and, per feature, the raw (stamp, value) pairs.
    type RawRows = Vec<(String, Vec<Vec<(u32, f64)>>)>;
    let mut rows: RawRows = Vec::new();

    for result in reader.records() {
        let row = result.map_err(|e| csv_error(observations, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let parse_err = |message: String| Error::Parse {
            path: observations.to_path_buf(),
            line,
            message,
        };
        if row.len() != 4 {
            return Err(parse_err(format!(
                "expected 4 columns, found {}",
                row.len()
            )));
        }
        let record_id = row[0].trim().to_string();
        let feature = row[1].trim().to_string();
        let time: u32 = row[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("invalid time index `{}`", &row[2])))?;
        let value: f64 = row[3]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("invalid value `{}`", &row[3])))?;
        if !value.is_finite() {
            return Err(parse_err(format!("non-finite value `{}`", &row[3])));
        }
        if record_id.is_empty() || feature.is_empty() {
            return Err(parse_err("empty record id or feature name".into()));
        }

        let k = *feature_index.entry(feature.clone()).or_insert_with(|| {
            feature_names.push(feature);
            feature_names.len() - 1
        });
        let r = *record_index.entry(record_id.clone()).or_insert_with(|| {
            rows.push((record_id, Vec::new()));
            rows.len() - 1
        });
        let series = &mut rows[r].1;
        if series.len() <= k {
            series.resize(k + 1, Vec::new());
        }
        series[k].push((time, value));
    }

    let d = feature_names.len();
    let mut records = Vec::with_capacity(rows.len());
    for (record_id, mut series) in rows {
        series.resize(d, Vec::new());
        for (k, s) in series.iter_mut().enumerate() {
            s.sort_by_key(|&(t, _)| t);
            if s.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidInput(format!(
                    "record {record_id}: duplicate time index for feature `{}`",
                    feature_names[k]
                )));
            }
        }
        let label = *label_map.get(&record_id).ok_or_else(|| {
            Error::InvalidInput(format!(
                "record {record_id} has no label in {}",
                labels.display()
            ))
        })?;
        records.push(RawRecord {
            record_id,
            series,
            label,
        });
    }
    if records.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} contains no observations",
            observations.display()
        )));
    }
    Ok(RawCohort {
        feature_names,
        records,
    })
}

fn read_labels(path: &Path) -> Result<HashMap<String, usize>> {
    let mut reader = csv_reader(path)?;
    let mut out = HashMap::new();
    for result in reader.records() {
        let row = result.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if row.len() != 2 {
            return Err(parse_err(format!(
                "expected 2 columns, found {}",
                row.len()
            )));
        }
        let label: usize = row[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("invalid label `{}`", &row[1])))?;
        if out.insert(row[0].trim().to_string(), label).is_some() {
            return Err(parse_err(format!(
                "duplicate label for record `{}`",
                &row[0]
            )));
        }
    }
    Ok(out)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

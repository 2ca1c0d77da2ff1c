//! Population aggregation of selected perturbations into per-cell maps,
//! per-feature cumulative scores, and cross-fold rankings.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::attack::{lambda_sweep, AttackConfig, RecordAttack};
use crate::error::{Error, Result};
use crate::fsio;
use crate::metrics::PerturbationStats;
use crate::model::{forward, ModelParams};
use crate::record::FeatureMatrix;

/// Which label flip an attack seeks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Direction {
    pub source: usize,
    pub target: usize,
}

impl Direction {
    pub fn new(source: usize, target: usize) -> Self {
        Self { source, target }
    }

    /// File-name form, e.g. `0to1`.
    pub fn tag(&self) -> String {
        format!("{}to{}", self.source, self.target)
    }

    pub fn parse(s: &str) -> Result<Self> {
        let bad =
            || Error::InvalidConfig(format!("attack direction `{s}` is not of the form 0to1"));
        let (a, b) = s.split_once("to").ok_or_else(bad)?;
        let source = a.trim().parse().map_err(|_| bad())?;
        let target = b.trim().parse().map_err(|_| bad())?;
        if source == target {
            return Err(bad());
        }
        Ok(Self { source, target })
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.source, self.target)
    }
}

/// Selected perturbations of the successfully attacked records, all `d x t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationTensor {
    pub direction: Direction,
    pub deltas: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SusceptibilityMap {
    pub direction: Direction,
    /// Records aggregated.
    pub count: usize,
    pub gmp: Array2<f64>,
    pub gap: Array2<f64>,
    pub gpp: Array2<f64>,
    pub s: Array2<f64>,
}

/// Per-cell maximum, mean and frequency of `|delta|` across records, and
/// their product `s = gmp * gpp`.
pub fn aggregate(tensor: &PerturbationTensor, zero_tol: f64) -> Result<SusceptibilityMap> {
    let first = tensor.deltas.first().ok_or_else(|| {
        Error::InvalidInput("cannot aggregate an empty perturbation tensor".into())
    })?;
    let dim = first.dim();
    let mut gmp = Array2::<f64>::zeros(dim);
    let mut sum = Array2::<f64>::zeros(dim);
    let mut hits = Array2::<f64>::zeros(dim);
    for delta in &tensor.deltas {
        if delta.dim() != dim {
            return Err(Error::DimensionMismatch {
                context: "perturbation tensor slice",
                expected: first.len(),
                found: delta.len(),
            });
        }
        ndarray::Zip::from(&mut gmp)
            .and(&mut sum)
            .and(&mut hits)
            .and(delta)
            .for_each(|m, s, h, &v| {
                let a = v.abs();
                *m = m.max(a);
                *s += a;
                if a > zero_tol {
                    *h += 1.0;
                }
            });
    }
    let n = tensor.deltas.len() as f64;
    let gap = sum / n;
    let gpp = hits / n;
    let s = &gmp * &gpp;
    Ok(SusceptibilityMap {
        direction: tensor.direction,
        count: tensor.deltas.len(),
        gmp,
        gap,
        gpp,
        s,
    })
}

/// Row sums of `s`: one score per feature.
pub fn cumulative_scores(map: &SusceptibilityMap) -> Vec<f64> {
    map.s.rows().into_iter().map(|r| r.sum()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub rank: usize,
    pub feature: String,
    pub mean: f64,
    /// Sample standard deviation across folds; 0 for one fold.
    pub sd: f64,
    /// Two-sided 95% Student-t interval for the mean; absent for one fold.
    pub ci: Option<(f64, f64)>,
}

/// Features ordered by mean cumulative score across folds, highest first;
/// equal means are ordered by feature name.
pub fn rank_measurements(per_fold: &[Vec<f64>], names: &[String]) -> Result<Vec<RankEntry>> {
    if per_fold.is_empty() {
        return Err(Error::InvalidInput(
            "ranking needs at least one fold".into(),
        ));
    }
    for v in per_fold {
        if v.len() != names.len() {
            return Err(Error::DimensionMismatch {
                context: "fold score vector",
                expected: names.len(),
                found: v.len(),
            });
        }
    }
    let k = per_fold.len();
    let t_crit = (k > 1).then(|| {
        StudentsT::new(0.0, 1.0, (k - 1) as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.975)
    });
    let mut entries: Vec<RankEntry> = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mean = per_fold.iter().map(|v| v[j]).sum::<f64>() / k as f64;
            let sd = if k > 1 {
                let ss: f64 = per_fold.iter().map(|v| (v[j] - mean).powi(2)).sum();
                (ss / (k - 1) as f64).sqrt()
            } else {
                0.0
            };
            let ci = t_crit.map(|t| {
                let half = t * sd / (k as f64).sqrt();
                (mean - half, mean + half)
            });
            RankEntry {
                rank: 0,
                feature: name.clone(),
                mean,
                sd,
                ci,
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        b.mean
            .total_cmp(&a.mean)
            .then_with(|| a.feature.cmp(&b.feature))
    });
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    Ok(entries)
}

/// Result of attacking every eligible record of one direction.
#[derive(Debug, Clone)]
pub struct Screening {
    pub direction: Direction,
    /// Correctly classified source-class records that were attacked.
    pub attacked: usize,
    /// Absent when no attack succeeded.
    pub map: Option<SusceptibilityMap>,
    pub ranking: Vec<RankEntry>,
    /// Full sweep of each attacked record, in input order.
    pub records: Vec<RecordAttack>,
    /// Ids of attacked records without a successful candidate.
    pub failed: Vec<String>,
    /// Stats of each attacked record's selected candidate (or, on failure, of
    /// its lowest-distance candidate), for success curves.
    pub stats: Vec<PerturbationStats>,
}

impl Screening {
    pub fn succeeded(&self) -> usize {
        self.attacked - self.failed.len()
    }
}

/// Attacks every record labelled `direction.source` that the model also
/// predicts as `direction.source`, selects each record's best candidate, and
/// aggregates the successes.
pub fn screen_cohort(
    params: &ModelParams,
    records: &[(FeatureMatrix, usize)],
    feature_names: &[String],
    cfg: &AttackConfig,
    direction: Direction,
) -> Result<Screening> {
    cfg.validate()?;
    let Direction { source, target } = direction;
    let predictions: Vec<usize> = records
        .par_iter()
        .map(|(x, _)| forward(params, x).map(|l| l.argmax()))
        .collect::<Result<_>>()?;
    let eligible: Vec<&FeatureMatrix> = records
        .iter()
        .zip(&predictions)
        .filter(|((_, y), &p)| *y == source && p == source)
        .map(|((x, _), _)| x)
        .collect();
    if eligible.is_empty() {
        return Err(Error::NoEligibleRecords(source));
    }

    let sweeps: Vec<_> = eligible
        .par_iter()
        .map(|x| lambda_sweep(params, x, source, target, cfg))
        .collect::<Result<_>>()?;

    let mut deltas = Vec::new();
    let mut failed = Vec::new();
    let mut stats = Vec::with_capacity(sweeps.len());
    let mut dump = Vec::with_capacity(sweeps.len());
    for (x, candidates) in eligible.iter().zip(&sweeps) {
        let attack = RecordAttack::new(&x.record_id, source, target, candidates);
        match attack.selected {
            Some(i) => {
                deltas.push(candidates[i].perturbation.clone());
                stats.push(candidates[i].stats());
            }
            None => {
                failed.push(x.record_id.clone());
                let closest = candidates
                    .iter()
                    .min_by(|a, b| a.distance.total_cmp(&b.distance))
                    .expect("sweep is non-empty");
                stats.push(closest.stats());
            }
        }
        dump.push(attack);
    }

    let map = if deltas.is_empty() {
        None
    } else {
        Some(aggregate(
            &PerturbationTensor { direction, deltas },
            cfg.zero_tol,
        )?)
    };
    let ranking = match &map {
        Some(m) => rank_measurements(&[cumulative_scores(m)], feature_names)?,
        None => Vec::new(),
    };
    Ok(Screening {
        direction,
        attacked: eligible.len(),
        map,
        ranking,
        records: dump,
        failed,
        stats,
    })
}

/// A `d x t` grid as delimited text: header `feature,t0,t1,...`, one row per feature.
pub fn grid_to_csv(grid: &Array2<f64>, names: &[String]) -> String {
    let mut out = String::from("feature");
    for j in 0..grid.ncols() {
        let _ = write!(out, ",t{j}");
    }
    out.push('\n');
    for (name, row) in names.iter().zip(grid.rows()) {
        out.push_str(name);
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Ranking as delimited text with columns `rank,feature,mean_score,sd,ci_low,ci_high`.
pub fn ranking_to_csv(ranking: &[RankEntry]) -> String {
    let mut out = String::from("rank,feature,mean_score,sd,ci_low,ci_high\n");
    for e in ranking {
        let (lo, hi) = e.ci.unwrap_or((f64::NAN, f64::NAN));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            e.rank, e.feature, e.mean, e.sd, lo, hi
        );
    }
    out
}

#[derive(Serialize)]
struct MapDocument<'a> {
    direction: Direction,
    count: usize,
    feature_names: &'a [String],
    gmp: Vec<Vec<f64>>,
    gap: Vec<Vec<f64>>,
    gpp: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
    cumulative: Vec<f64>,
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn map_to_json(map: &SusceptibilityMap, names: &[String]) -> String {
    let doc = MapDocument {
        direction: map.direction,
        count: map.count,
        feature_names: names,
        gmp: rows(&map.gmp),
        gap: rows(&map.gap),
        gpp: rows(&map.gpp),
        s: rows(&map.s),
        cumulative: cumulative_scores(map),
    };
    serde_json::to_string_pretty(&doc).expect("map document serializes")
}

/// Writes `<prefix>_{gmp,gap,gpp,s}.csv` and `<prefix>_map.json` into `dir`.
pub fn write_map(
    map: &SusceptibilityMap,
    names: &[String],
    dir: &Path,
    prefix: &str,
) -> Result<()> {
    for (grid, name) in [
        (&map.gmp, "gmp"),
        (&map.gap, "gap"),
        (&map.gpp, "gpp"),
        (&map.s, "s"),
    ] {
        fsio::write_atomic(
            &dir.join(format!("{prefix}_{name}.csv")),
            grid_to_csv(grid, names).as_bytes(),
        )?;
    }
    fsio::write_atomic(
        &dir.join(format!("{prefix}_map.json")),
        map_to_json(map, names).as_bytes(),
    )
}

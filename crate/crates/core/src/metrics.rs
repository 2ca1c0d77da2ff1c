//! Record-level perturbation metrics and the success-versus-budget curve.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;

/// Default tolerance above which a cell counts as perturbed.
pub const DEFAULT_ZERO_TOL: f64 = 1e-6;

/// Denominator used by [`pp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PpMode {
    /// Full grid, `d * t`, padding included.
    #[default]
    Grid,
    /// Observed cells only, `d * observed_steps`.
    Observed,
}

/// Largest absolute entry over observed stamps; 0 when nothing is observed.
pub fn map(delta: &Array2<f64>, mask: &[bool]) -> f64 {
    observed(delta, mask).fold(0.0, |m, v| m.max(v.abs()))
}

/// Fraction of cells with `|delta| > zero_tol`, counting observed stamps only.
pub fn pp(delta: &Array2<f64>, mask: &[bool], zero_tol: f64, mode: PpMode) -> f64 {
    let count = observed(delta, mask).filter(|v| v.abs() > zero_tol).count();
    let cells = match mode {
        PpMode::Grid => delta.len(),
        PpMode::Observed => delta.nrows() * mask.iter().filter(|&&m| m).count(),
    };
    if cells == 0 {
        0.0
    } else {
        count as f64 / cells as f64
    }
}

fn observed<'a>(delta: &'a Array2<f64>, mask: &'a [bool]) -> impl Iterator<Item = f64> + 'a {
    delta
        .indexed_iter()
        .filter(|((_, j), _)| mask[*j])
        .map(|(_, &v)| v)
}

/// `sqrt(map^2 + beta * pp^2)`.
pub fn distance_score(map: f64, pp: f64, beta: f64) -> f64 {
    (map * map + beta * pp * pp).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationStats {
    pub map: f64,
    pub pp: f64,
    pub distance: f64,
    pub success: bool,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub budget: f64,
    pub success_rate: f64,
    /// Mean PP over the successes counted at this budget.
    pub mean_pp: Option<f64>,
}

/// Budgets `0.01, 0.02, ..., 1.00`.
pub fn default_budgets() -> Vec<f64> {
    (1..=100).map(|k| k as f64 / 100.0).collect()
}

/// For each budget `b`, the fraction of `results` that succeeded with
/// `map <= b`, and the mean PP of those successes.
pub fn success_curve(results: &[PerturbationStats], budgets: &[f64]) -> Result<Vec<CurvePoint>> {
    if results.is_empty() {
        return Err(Error::InvalidInput(
            "success curve of an empty result set".into(),
        ));
    }
    if budgets.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidConfig(
            "curve budgets must be sorted ascending".into(),
        ));
    }
    let mut successes: Vec<&PerturbationStats> = results.iter().filter(|r| r.success).collect();
    successes.sort_by(|a, b| a.map.total_cmp(&b.map));

    let n = results.len() as f64;
    let mut taken = 0;
    let mut pp_sum = 0.0;
    Ok(budgets
        .iter()
        .map(|&budget| {
            while taken < successes.len() && successes[taken].map <= budget {
                pp_sum += successes[taken].pp;
                taken += 1;
            }
            CurvePoint {
                budget,
                success_rate: taken as f64 / n,
                mean_pp: (taken > 0).then(|| pp_sum / taken as f64),
            }
        })
        .collect())
}

/// Delimited text with header `budget,success_rate,mean_pp`; an undefined
/// mean is written as `NaN`.
pub fn curve_to_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("budget,success_rate,mean_pp\n");
    for p in curve {
        let _ = writeln!(
            out,
            "{},{},{}",
            p.budget,
            p.success_rate,
            p.mean_pp.unwrap_or(f64::NAN)
        );
    }
    out
}

pub fn write_curve(curve: &[CurvePoint], path: &Path) -> Result<()> {
    fsio::write_atomic(path, curve_to_csv(curve).as_bytes())
}

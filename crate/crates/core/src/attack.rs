//! Sparse adversarial search: hinge-on-logit-gap objective with an L1 penalty,
//! minimized by proximal gradient steps (ISTA) inside the `[0, 1]` box.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::metrics::{self, PerturbationStats, PpMode, DEFAULT_ZERO_TOL};
use crate::model::{ModelParams, Trace};
use crate::record::FeatureMatrix;

/// `count` values log-spaced over `[lo, hi]`, endpoints included.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..count)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    /// Hinge floor on the logit gap.
    pub kappa: f64,
    /// L1 weights tried per record.
    pub lambdas: Vec<f64>,
    /// Gradient step size.
    pub alpha: f64,
    pub max_iterations: usize,
    /// Sparsity weight in the distance score.
    pub beta: f64,
    /// `|delta|` above this counts as a perturbed cell.
    pub zero_tol: f64,
    pub pp_mode: PpMode,
    pub lower: f64,
    pub upper: f64,
    /// Stop early once no entry moves by this much in one iteration; 0 disables.
    pub stall_tol: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            kappa: 0.0,
            lambdas: log_grid(1e-4, 1.0, 8),
            alpha: 0.05,
            max_iterations: 1000,
            beta: 2.0,
            zero_tol: DEFAULT_ZERO_TOL,
            pp_mode: PpMode::Grid,
            lower: 0.0,
            upper: 1.0,
            stall_tol: 1e-9,
        }
    }
}

impl AttackConfig {
    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambdas: vec![lambda],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("attack: {m}")));
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be non-negative, got {}", self.kappa));
        }
        if self.lambdas.is_empty() {
            return bad("lambda list is empty".into());
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return bad(format!("every lambda must be positive, got {l}"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1".into());
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.zero_tol >= 0.0) || !(self.stall_tol >= 0.0) {
            return bad("tolerances must be non-negative".into());
        }
        if !(self.lower < self.upper) {
            return bad(format!("empty box [{}, {}]", self.lower, self.upper));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Success,
    MaxIterations,
    /// An iteration moved no entry by more than `stall_tol`.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialCandidate {
    pub adversarial: Array2<f64>,
    pub perturbation: Array2<f64>,
    pub success: bool,
    pub iterations: usize,
    pub stop: StopReason,
    pub lambda: f64,
    pub map: f64,
    pub pp: f64,
    pub distance: f64,
}

impl AdversarialCandidate {
    pub fn stats(&self) -> PerturbationStats {
        PerturbationStats {
            map: self.map,
            pp: self.pp,
            distance: self.distance,
            success: self.success,
            lambda: self.lambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackLoss {
    /// `max(logit_source - logit_target, -kappa)`.
    pub smooth: f64,
    /// `smooth + lambda * sum |x_adv - x|` over observed stamps.
    pub total: f64,
}

fn check_pair(params: &ModelParams, source: usize, target: usize) -> Result<()> {
    let c = params.class_count();
    if source >= c || target >= c {
        return Err(Error::DimensionMismatch {
            context: "attack class index",
            expected: c,
            found: source.max(target),
        });
    }
    if source == target {
        return Err(Error::InvalidConfig(format!(
            "source and target labels are both {source}"
        )));
    }
    Ok(())
}

pub fn attack_loss(
    params: &ModelParams,
    adversarial: &FeatureMatrix,
    original: &FeatureMatrix,
    source: usize,
    target: usize,
    kappa: f64,
    lambda: f64,
) -> Result<AttackLoss> {
    check_pair(params, source, target)?;
    if adversarial.values.dim() != original.values.dim() {
        return Err(Error::DimensionMismatch {
            context: "adversarial record shape",
            expected: original.values.len(),
            found: adversarial.values.len(),
        });
    }
    let logits = crate::model::forward(params, adversarial)?;
    let smooth = (logits.0[source] - logits.0[target]).max(-kappa);
    let l1: f64 = adversarial
        .values
        .indexed_iter()
        .filter(|((_, j), _)| original.mask[*j])
        .map(|((k, j), v)| (v - original.values[[k, j]]).abs())
        .sum();
    Ok(AttackLoss {
        smooth,
        total: smooth + lambda * l1,
    })
}

/// Soft-thresholding of one entry around `x`, then clipping to `[lower, upper]`.
#[inline]
pub fn prox_scalar(z: f64, x: f64, threshold: f64, lower: f64, upper: f64) -> f64 {
    let dev = z - x;
    let u = if dev.abs() <= threshold {
        x
    } else {
        z - dev.signum() * threshold
    };
    u.clamp(lower, upper)
}

/// Elementwise [`prox_scalar`] in the unit box; padded columns are reset to `x`.
pub fn prox_step(z: &Array2<f64>, x: &FeatureMatrix, threshold: f64) -> Result<Array2<f64>> {
    prox_step_in_box(z, x, threshold, 0.0, 1.0)
}

pub fn prox_step_in_box(
    z: &Array2<f64>,
    x: &FeatureMatrix,
    threshold: f64,
    lower: f64,
    upper: f64,
) -> Result<Array2<f64>> {
    if z.dim() != x.values.dim() {
        return Err(Error::DimensionMismatch {
            context: "prox input shape",
            expected: x.values.len(),
            found: z.len(),
        });
    }
    let mut out = x.values.clone();
    for ((k, j), o) in out.indexed_iter_mut() {
        if x.mask[j] {
            *o = prox_scalar(z[[k, j]], *o, threshold, lower, upper);
        }
    }
    Ok(out)
}

fn smooth_dlogits(trace: &Trace, source: usize, target: usize, kappa: f64) -> Option<Vec<f64>> {
    let z = trace.logits().as_slice();
    if z[source] - z[target] > -kappa {
        let mut g = vec![0.0; z.len()];
        g[source] = 1.0;
        g[target] = -1.0;
        Some(g)
    } else {
        None
    }
}

/// Proximal-gradient search for a record labelled `target` close to `x`,
/// using the first entry of `cfg.lambdas`.
///
/// `x` must currently be predicted as `source`. The prediction is checked
/// before the first update and after every update; the search stops at the
/// first success, after `max_iterations`, or when it stalls.
pub fn ista_attack(
    params: &ModelParams,
    x: &FeatureMatrix,
    source: usize,
    target: usize,
    cfg: &AttackConfig,
) -> Result<AdversarialCandidate> {
    cfg.validate()?;
    check_pair(params, source, target)?;
    let lambda = cfg.lambdas[0];
    let threshold = lambda * cfg.alpha;

    let mut adv = x.clone();
    let mut trace = params.trace(&adv)?;
    let predicted = trace.logits().argmax();
    if predicted != source && predicted != target {
        return Err(Error::NotSourceClass {
            predicted,
            source_label: source,
        });
    }

    let (d, t) = x.values.dim();
    let mut grad = Array2::zeros((d, t));
    let mut iterations = 0;
    let mut stop = if predicted == target {
        StopReason::Success
    } else {
        StopReason::MaxIterations
    };
    if predicted == source {
        // A clean record already predicted as target is a zero-cost success.
        while iterations < cfg.max_iterations {
            iterations += 1;
            grad.fill(0.0);
            if let Some(dl) = smooth_dlogits(&trace, source, target, cfg.kappa) {
                params.backprop(&adv, &trace, &dl, Some(&mut grad), None);
                if grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFinite("attack gradient"));
                }
            }
            let mut moved = 0.0f64;
            for ((k, j), v) in adv.values.indexed_iter_mut() {
                if !x.mask[j] {
                    continue;
                }
                let z = *v - cfg.alpha * grad[[k, j]];
                let u = prox_scalar(z, x.values[[k, j]], threshold, cfg.lower, cfg.upper);
                moved = moved.max((u - *v).abs());
                *v = u;
            }
            trace = params.trace(&adv)?;
            if trace.logits().argmax() == target {
                stop = StopReason::Success;
                break;
            }
            if moved < cfg.stall_tol {
                stop = StopReason::Stalled;
                break;
            }
        }
    }
    Ok(candidate(x, adv.values, stop, iterations, lambda, cfg))
}

fn candidate(
    x: &FeatureMatrix,
    adversarial: Array2<f64>,
    stop: StopReason,
    iterations: usize,
    lambda: f64,
    cfg: &AttackConfig,
) -> AdversarialCandidate {
    let perturbation = &adversarial - &x.values;
    let map = metrics::map(&perturbation, &x.mask);
    let pp = metrics::pp(&perturbation, &x.mask, cfg.zero_tol, cfg.pp_mode);
    AdversarialCandidate {
        adversarial,
        perturbation,
        success: stop == StopReason::Success,
        iterations,
        stop,
        lambda,
        map,
        pp,
        distance: metrics::distance_score(map, pp, cfg.beta),
    }
}

/// One independent attack per entry of `cfg.lambdas`, in order.
pub fn lambda_sweep(
    params: &ModelParams,
    x: &FeatureMatrix,
    source: usize,
    target: usize,
    cfg: &AttackConfig,
) -> Result<Vec<AdversarialCandidate>> {
    cfg.validate()?;
    cfg.lambdas
        .iter()
        .map(|&l| ista_attack(params, x, source, target, &cfg.with_lambda(l)))
        .collect()
}

/// Index of the successful candidate with the smallest distance score; ties
/// go to the smaller PP, then the smaller lambda.
pub fn select_optimal(candidates: &[AdversarialCandidate]) -> Result<usize> {
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.success)
        .min_by(|(_, a), (_, b)| {
            a.distance
                .total_cmp(&b.distance)
                .then(a.pp.total_cmp(&b.pp))
                .then(a.lambda.total_cmp(&b.lambda))
        })
        .map(|(i, _)| i)
        .ok_or(Error::NoSuccessfulCandidate)
}

/// One line of the candidate dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordAttack {
    pub record_id: String,
    pub source: usize,
    pub target: usize,
    /// Index into `candidates` of the selected candidate, if any succeeded.
    pub selected: Option<usize>,
    pub candidates: Vec<CandidateSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub lambda: f64,
    pub success: bool,
    pub iterations: usize,
    pub stop: StopReason,
    pub map: f64,
    pub pp: f64,
    pub distance: f64,
    /// Perturbation, one row per feature.
    pub delta: Vec<Vec<f64>>,
}

impl From<&AdversarialCandidate> for CandidateSummary {
    fn from(c: &AdversarialCandidate) -> Self {
        Self {
            lambda: c.lambda,
            success: c.success,
            iterations: c.iterations,
            stop: c.stop,
            map: c.map,
            pp: c.pp,
            distance: c.distance,
            delta: c
                .perturbation
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
        }
    }
}

impl RecordAttack {
    pub fn new(
        record_id: &str,
        source: usize,
        target: usize,
        candidates: &[AdversarialCandidate],
    ) -> Self {
        Self {
            record_id: record_id.to_string(),
            source,
            target,
            selected: select_optimal(candidates).ok(),
            candidates: candidates.iter().map(CandidateSummary::from).collect(),
        }
    }

    pub fn selected_candidate(&self) -> Option<&CandidateSummary> {
        self.selected.map(|i| &self.candidates[i])
    }
}

/// JSON lines, one [`RecordAttack`] per line.
pub fn dump_to_jsonl(records: &[RecordAttack]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(
            out,
            "{}",
            serde_json::to_string(r).expect("dump serializes")
        );
    }
    out
}

pub fn write_dump(records: &[RecordAttack], path: &Path) -> Result<()> {
    fsio::write_atomic(path, dump_to_jsonl(records).as_bytes())
}

pub fn read_dump(path: &Path) -> Result<Vec<RecordAttack>> {
    let text = fsio::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n as u64 + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    use super::*;
    use crate::model::{Architecture, ParamTensors};

    /// Open input and output gates, closed forget gate: the hidden state is
    /// `tanh(tanh(x0 + x1 - 1))` and class 1 wins exactly when `x0 + x1 > 1`.
    fn toy_model() -> ModelParams {
        let arch = Architecture::new(2, 1, 1, 2);
        let mut t = ParamTensors::zeros(&arch);
        t.lstm_bias = Array1::from(vec![20.0, -20.0, -1.0, 20.0]);
        t.lstm_input_kernel = array![[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [0.0, 0.0]];
        t.dense_kernel = array![[1.0]];
        t.dense_bias = Array1::from(vec![1.0]);
        t.output_kernel = array![[-1.0], [1.0]];
        t.output_bias = Array1::from(vec![1.0, -1.0]);
        ModelParams::new(arch, t).unwrap()
    }

    fn random_model(seed: u64) -> ModelParams {
        ModelParams::uniform(Architecture::new(3, 5, 4, 2), 0.8, seed).unwrap()
    }

    #[test]
    fn loss_examples() {
        let arch = Architecture::new(1, 1, 1, 2);
        let mut t = ParamTensors::zeros(&arch);
        t.output_bias = Array1::from(vec![2.0, 5.0]);
        let p = ModelParams::new(arch, t.clone()).unwrap();
        let x = FeatureMatrix::dense("r", array![[0.5]]);
        let l = attack_loss(&p, &x, &x, 0, 1, 0.0, 1.0).unwrap();
        assert_eq!((l.smooth, l.total), (0.0, 0.0));
        assert_eq!(
            attack_loss(&p, &x, &x, 0, 1, 1.0, 1.0).unwrap().smooth,
            -1.0
        );

        t.output_bias = Array1::from(vec![5.0, 2.0]);
        let p = ModelParams::new(arch, t).unwrap();
        let adv = x.with_values(array![[0.75]]);
        let l = attack_loss(&p, &adv, &x, 0, 1, 0.0, 2.0).unwrap();
        assert_eq!(l.smooth, 3.0);
        assert_eq!(l.total, 3.5);
        assert!(attack_loss(&p, &x, &x, 1, 1, 0.0, 1.0).is_err());
    }

    #[test]
    fn prox_examples() {
        assert_eq!(prox_scalar(0.45, 0.40, 0.1, 0.0, 1.0), 0.40);
        assert!((prox_scalar(0.60, 0.40, 0.1, 0.0, 1.0) - 0.50).abs() < 1e-15);
        assert!((prox_scalar(0.20, 0.40, 0.1, 0.0, 1.0) - 0.30).abs() < 1e-15);
        assert_eq!(prox_scalar(1.5, 0.9, 0.1, 0.0, 1.0), 1.0);

        let x = FeatureMatrix::new("r", array![[0.4, 0.0]], vec![true, false]).unwrap();
        let out = prox_step(&array![[0.6, 0.7]], &x, 0.1).unwrap();
        assert!((out[[0, 0]] - 0.5).abs() < 1e-15);
        assert_eq!(out[[0, 1]], 0.0);
    }

    #[test]
    fn already_target_is_immediate_success() {
        let p = toy_model();
        let x = FeatureMatrix::dense("r", array![[0.9], [0.9]]);
        assert_eq!(crate::model::forward(&p, &x).unwrap().argmax(), 1);
        let c = ista_attack(&p, &x, 0, 1, &AttackConfig::default()).unwrap();
        assert!(c.success);
        assert_eq!(c.iterations, 0);
        assert_eq!(c.map, 0.0);
    }

    #[test]
    fn wrong_source_is_rejected() {
        let p = ModelParams::uniform(Architecture::new(2, 3, 2, 3), 0.5, 1).unwrap();
        let x = FeatureMatrix::dense("r", array![[0.2], [0.3]]);
        let pred = crate::model::forward(&p, &x).unwrap().argmax();
        let others: Vec<usize> = (0..3).filter(|&c| c != pred).collect();
        let err = ista_attack(&p, &x, others[0], others[1], &AttackConfig::default());
        assert!(matches!(err, Err(Error::NotSourceClass { .. })));
    }

    #[test]
    fn huge_lambda_shrinks_everything_back() {
        let p = toy_model();
        let x = FeatureMatrix::dense("r", array![[0.1], [0.1]]);
        assert_eq!(crate::model::forward(&p, &x).unwrap().argmax(), 0);
        let cfg = AttackConfig {
            lambdas: vec![1e3],
            alpha: 0.1,
            stall_tol: 0.0,
            ..AttackConfig::default()
        };
        let c = ista_attack(&p, &x, 0, 1, &cfg).unwrap();
        assert!(!c.success);
        assert_eq!(c.iterations, cfg.max_iterations);
        assert_eq!(c.stop, StopReason::MaxIterations);
        assert!(c.perturbation.iter().all(|&v| v == 0.0));

        let early = ista_attack(
            &p,
            &x,
            0,
            1,
            &AttackConfig {
                stall_tol: 1e-9,
                ..cfg
            },
        )
        .unwrap();
        assert_eq!(early.stop, StopReason::Stalled);
        assert_eq!(early.iterations, 1);
        assert_eq!(early.perturbation, c.perturbation);
    }

    #[test]
    fn toy_attack_is_close_to_grid_search_minimum() {
        let p = toy_model();
        let x = FeatureMatrix::dense("r", array![[0.2], [0.3]]);
        assert_eq!(crate::model::forward(&p, &x).unwrap().argmax(), 0);
        let flips = |a: f64, b: f64| {
            let adv = x.with_values(array![[a], [b]]);
            crate::model::forward(&p, &adv).unwrap().argmax() == 1
        };

        // Exhaustive search over single- and two-cell perturbations at step 0.005.
        let steps: Vec<f64> = (-200..=200).map(|k| k as f64 * 0.005).collect();
        let inside = |v: f64| (0.0..=1.0).contains(&v);
        let mut best = f64::INFINITY;
        for &d0 in &steps {
            for &d1 in &steps {
                let (a, b) = (0.2 + d0, 0.3 + d1);
                let m = d0.abs().max(d1.abs());
                if m < best && inside(a) && inside(b) && flips(a, b) {
                    best = m;
                }
            }
        }
        assert!(best.is_finite());

        let cfg = AttackConfig {
            lambdas: vec![1e-3],
            alpha: 0.002,
            max_iterations: 20_000,
            ..AttackConfig::default()
        };
        let c = ista_attack(&p, &x, 0, 1, &cfg).unwrap();
        assert!(c.success);
        assert!(
            (c.map - best).abs() <= 0.02,
            "attack MAP {} vs grid minimum {best}",
            c.map
        );
    }

    #[test]
    fn sweep_matches_single_attacks_and_is_deterministic() {
        let p = random_model(4);
        let x = FeatureMatrix::new(
            "r",
            array![
                [0.0, 0.3, 0.6, 0.2],
                [0.0, 0.5, 0.1, 0.9],
                [0.0, 0.4, 0.4, 0.4]
            ],
            vec![false, true, true, true],
        )
        .unwrap();
        let source = crate::model::forward(&p, &x).unwrap().argmax();
        let target = 1 - source;
        let cfg = AttackConfig {
            alpha: 0.5,
            ..AttackConfig::default()
        };
        let sweep = lambda_sweep(&p, &x, source, target, &cfg).unwrap();
        assert_eq!(sweep.len(), 8);
        assert_eq!(sweep, lambda_sweep(&p, &x, source, target, &cfg).unwrap());
        let single = ista_attack(&p, &x, source, target, &cfg.with_lambda(cfg.lambdas[3])).unwrap();
        assert_eq!(sweep[3], single);

        for c in &sweep {
            assert!(c.adversarial.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(c.perturbation.column(0).iter().all(|&v| v == 0.0));
            let adv = x.with_values(c.adversarial.clone());
            let flipped = crate::model::forward(&p, &adv).unwrap().argmax() == target;
            assert_eq!(c.success, flipped);
        }
    }

    fn cand(map: f64, pp: f64, lambda: f64, success: bool) -> AdversarialCandidate {
        AdversarialCandidate {
            adversarial: Array2::zeros((1, 1)),
            perturbation: Array2::zeros((1, 1)),
            success,
            iterations: 1,
            stop: if success {
                StopReason::Success
            } else {
                StopReason::MaxIterations
            },
            lambda,
            map,
            pp,
            distance: metrics::distance_score(map, pp, 2.0),
        }
    }

    #[test]
    fn selection_rules() {
        assert_eq!(
            select_optimal(&[cand(0.1, 0.1, 1.0, false), cand(0.9, 0.9, 0.1, true)]).unwrap(),
            1
        );
        assert_eq!(
            select_optimal(&[cand(0.15, 0.03, 1.0, true), cand(0.05, 0.40, 0.1, true)]).unwrap(),
            0
        );
        let mut a = cand(0.3, 0.0, 0.1, true);
        a.distance = 0.30;
        let mut b = cand(0.2, 0.0, 0.1, true);
        b.distance = 0.20;
        assert_eq!(select_optimal(&[a, b]).unwrap(), 1);

        let mut tie_pp = [cand(0.2, 0.1, 0.5, true), cand(0.2, 0.1, 0.1, true)];
        tie_pp[0].pp = 0.05;
        tie_pp[0].distance = tie_pp[1].distance;
        assert_eq!(select_optimal(&tie_pp).unwrap(), 0);
        assert_eq!(
            select_optimal(&[cand(0.2, 0.1, 0.5, true), cand(0.2, 0.1, 0.1, true)]).unwrap(),
            1
        );

        assert!(matches!(
            select_optimal(&[cand(0.1, 0.1, 1.0, false)]),
            Err(Error::NoSuccessfulCandidate)
        ));
    }

    #[test]
    fn dump_round_trip() {
        let r = RecordAttack::new(
            "rec-1",
            0,
            1,
            &[cand(0.1, 0.1, 1.0, false), cand(0.2, 0.5, 0.1, true)],
        );
        assert_eq!(r.selected, Some(1));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dump.jsonl");
        write_dump(&[r.clone(), r.clone()], &path).unwrap();
        assert_eq!(read_dump(&path).unwrap(), vec![r.clone(), r]);
    }

    #[test]
    fn default_sweep_grid() {
        let g = AttackConfig::default().lambdas;
        assert_eq!(g.len(), 8);
        assert!((g[0] - 1e-4).abs() < 1e-18 && (g[7] - 1.0).abs() < 1e-15);
        for w in g.windows(2) {
            assert!((w[1] / w[0] - 10f64.powf(4.0 / 7.0)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn prox_minimizes_the_scalar_objective(
            z in -0.5..1.5f64, x in 0.0..=1.0f64, th in 0.0..0.5f64
        ) {
            let u = prox_scalar(z, x, th, f64::NEG_INFINITY, f64::INFINITY);
            let f = |u: f64| 0.5 * (u - z).powi(2) + th * (u - x).abs();
            let grid_best = (-20_000..=30_000)
                .map(|k| k as f64 * 1e-4)
                .min_by(|a, b| f(*a).total_cmp(&f(*b)))
                .unwrap();
            prop_assert!((u - grid_best).abs() < 1e-3);
        }

        #[test]
        fn candidates_stay_in_box_and_respect_padding(seed in 0u64..40, pad in 0usize..3) {
            let p = random_model(seed);
            let mut values = Array2::from_shape_fn((3, 4), |(k, j)| ((k * 7 + j * 3 + seed as usize) % 10) as f64 / 10.0);
            let mask: Vec<bool> = (0..4).map(|j| j >= pad).collect();
            for j in 0..pad { values.column_mut(j).fill(0.0); }
            let x = FeatureMatrix::new("r", values, mask).unwrap();
            let source = crate::model::forward(&p, &x).unwrap().argmax();
            let cfg = AttackConfig { lambdas: vec![0.01], alpha: 0.5, max_iterations: 50, ..AttackConfig::default() };
            let c = ista_attack(&p, &x, source, 1 - source, &cfg).unwrap();
            prop_assert!(c.adversarial.iter().all(|v| (0.0..=1.0).contains(v)));
            for j in 0..pad {
                prop_assert!(c.perturbation.column(j).iter().all(|&v| v == 0.0));
            }
        }
    }
}

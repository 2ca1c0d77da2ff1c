use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn arch(d: usize, h: usize, m: usize) -> Architecture {
    Architecture::new(d, h, m, 2)
}

fn random_record(d: usize, t: usize, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = Array2::from_shape_fn((d, t), |_| rng.random_range(0.0..1.0));
    FeatureMatrix::dense("r", values)
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Step-by-step evaluation with every gate written out, unrolled for two stamps.
fn reference_logits_t2(p: &ModelParams, x: &FeatureMatrix) -> Vec<f64> {
    let t = p.tensors();
    let (d, h) = (p.input_dim(), p.hidden_dim());
    let m = p.architecture().dense_dim;
    let gate = |k: usize, row: usize, xs: &[f64], hs: &[f64]| -> f64 {
        let r = k * h + row;
        let mut z = t.lstm_bias[r];
        for (j, xj) in xs.iter().enumerate().take(d) {
            z += t.lstm_input_kernel[[r, j]] * xj;
        }
        for (j, hj) in hs.iter().enumerate().take(h) {
            z += t.lstm_recurrent_kernel[[r, j]] * hj;
        }
        z
    };
    let x0: Vec<f64> = (0..d).map(|f| x.values[[f, 0]]).collect();
    let x1: Vec<f64> = (0..d).map(|f| x.values[[f, 1]]).collect();
    let h0 = vec![0.0; h];
    let mut c1 = vec![0.0; h];
    let mut h1 = vec![0.0; h];
    for r in 0..h {
        let i = sig(gate(0, r, &x0, &h0));
        let g = gate(2, r, &x0, &h0).tanh();
        let o = sig(gate(3, r, &x0, &h0));
        c1[r] = i * g;
        h1[r] = o * c1[r].tanh();
    }
    let mut h2 = vec![0.0; h];
    for r in 0..h {
        let i = sig(gate(0, r, &x1, &h1));
        let f = sig(gate(1, r, &x1, &h1));
        let g = gate(2, r, &x1, &h1).tanh();
        let o = sig(gate(3, r, &x1, &h1));
        let c2 = f * c1[r] + i * g;
        h2[r] = o * c2.tanh();
    }
    let a: Vec<f64> = (0..m)
        .map(|r| {
            let z: f64 =
                t.dense_bias[r] + (0..h).map(|j| t.dense_kernel[[r, j]] * h2[j]).sum::<f64>();
            z.max(0.0)
        })
        .collect();
    (0..2)
        .map(|r| t.output_bias[r] + (0..m).map(|j| t.output_kernel[[r, j]] * a[j]).sum::<f64>())
        .collect()
}

fn fd_gradient(p: &ModelParams, x: &FeatureMatrix, loss: ScalarLoss, step: f64) -> Array2<f64> {
    let mut g = Array2::zeros(x.values.dim());
    for f in 0..x.n_features() {
        for j in 0..x.n_steps() {
            let mut plus = x.clone();
            plus.values[[f, j]] += step;
            let mut minus = x.clone();
            minus.values[[f, j]] -= step;
            let lp = loss.value(forward(p, &plus).unwrap().as_slice());
            let lm = loss.value(forward(p, &minus).unwrap().as_slice());
            g[[f, j]] = (lp - lm) / (2.0 * step);
        }
    }
    g
}

fn max_rel_error(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let scale = x.abs().max(y.abs());
            if scale < 1e-8 {
                (x - y).abs()
            } else {
                (x - y).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

#[test]
fn zero_network_gives_zero_logits() {
    let p = ModelParams::zeros(arch(3, 4, 3)).unwrap();
    let x = random_record(3, 5, 1);
    assert_eq!(forward(&p, &x).unwrap().as_slice(), &[0.0, 0.0]);
}

#[test]
fn output_bias_passes_through() {
    let a = arch(3, 4, 3);
    let mut t = ParamTensors::zeros(&a);
    t.output_bias = array![1.0, -1.0];
    let p = ModelParams::new(a, t).unwrap();
    let x = random_record(3, 5, 2);
    assert_eq!(forward(&p, &x).unwrap().as_slice(), &[1.0, -1.0]);
    assert_eq!(predict(&p, &x).unwrap().label, 0);
}

#[test]
fn forward_matches_unrolled_reference() {
    let p = ModelParams::uniform(arch(3, 4, 3), 0.7, 11).unwrap();
    let x = random_record(3, 2, 12);
    let got = forward(&p, &x).unwrap();
    let want = reference_logits_t2(&p, &x);
    for (g, w) in got.as_slice().iter().zip(&want) {
        assert!((g - w).abs() < 1e-12, "{g} vs {w}");
    }
    // Softmax from an independent two-class formula.
    let pred = predict(&p, &x).unwrap();
    let p1 = 1.0 / (1.0 + (want[0] - want[1]).exp());
    assert!((pred.probabilities[1] - p1).abs() < 1e-12);
    assert!((pred.probabilities[0] - (1.0 - p1)).abs() < 1e-12);
    assert_eq!(pred.label, usize::from(want[1] > want[0]));
}

#[test]
fn equal_logits_tie_break_to_lowest_index() {
    let p = ModelParams::zeros(arch(2, 2, 2)).unwrap();
    let pred = predict(&p, &random_record(2, 3, 3)).unwrap();
    assert_eq!(pred.probabilities, vec![0.5, 0.5]);
    assert_eq!(pred.label, 0);
}

#[test]
fn dimension_mismatch_is_reported() {
    let p = ModelParams::zeros(arch(3, 2, 2)).unwrap();
    let err = forward(&p, &random_record(4, 2, 0)).unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch { .. }));
}

#[test]
fn exploded_weights_signal_non_finite() {
    let a = arch(1, 1, 1);
    let mut t = ParamTensors::zeros(&a);
    t.output_kernel.fill(f64::MAX);
    t.dense_bias.fill(f64::MAX);
    let p = ModelParams::new(a, t).unwrap();
    let err = forward(&p, &random_record(1, 2, 0)).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)));
}

#[test]
fn zero_output_layer_has_zero_input_gradient() {
    let mut t = ModelParams::uniform(arch(3, 4, 3), 0.5, 5)
        .unwrap()
        .into_tensors();
    t.output_kernel.fill(0.0);
    t.output_bias.fill(0.0);
    let p = ModelParams::new(arch(3, 4, 3), t).unwrap();
    let g = input_gradient(
        &p,
        &random_record(3, 4, 6),
        ScalarLoss::LogitGap {
            minuend: 0,
            subtrahend: 1,
        },
    )
    .unwrap();
    assert!(g.iter().all(|&v| v == 0.0));
}

#[test]
fn same_class_gap_has_zero_gradient() {
    let p = ModelParams::uniform(arch(3, 4, 3), 0.5, 7).unwrap();
    let g = input_gradient(
        &p,
        &random_record(3, 4, 8),
        ScalarLoss::LogitGap {
            minuend: 1,
            subtrahend: 1,
        },
    )
    .unwrap();
    assert!(g.iter().all(|&v| v == 0.0));
}

#[test]
fn logit_gap_gradient_matches_finite_differences() {
    let p = ModelParams::uniform(arch(5, 8, 4), 0.5, 21).unwrap();
    let x = random_record(5, 6, 22);
    let loss = ScalarLoss::LogitGap {
        minuend: 0,
        subtrahend: 1,
    };
    let analytic = input_gradient(&p, &x, loss).unwrap();
    let numeric = fd_gradient(&p, &x, loss, 1e-5);
    let err = max_rel_error(&analytic, &numeric);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let p = ModelParams::uniform(arch(4, 6, 5), 0.6, 31).unwrap();
    let x = random_record(4, 5, 32);
    let loss = ScalarLoss::CrossEntropy { label: 1 };
    let err = max_rel_error(
        &input_gradient(&p, &x, loss).unwrap(),
        &fd_gradient(&p, &x, loss, 1e-5),
    );
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn masked_positions_are_inert() {
    let p = ModelParams::uniform(arch(3, 5, 4), 0.6, 41).unwrap();
    let mut x = random_record(3, 6, 42);
    x.mask = vec![false, false, true, true, false, true];
    let base = forward(&p, &x).unwrap();
    let mut toggled = x.clone();
    for j in [0, 1, 4] {
        for f in 0..3 {
            toggled.values[[f, j]] = 123.0 + f as f64;
        }
    }
    assert_eq!(forward(&p, &toggled).unwrap(), base);
    let g = input_gradient(
        &p,
        &x,
        ScalarLoss::LogitGap {
            minuend: 0,
            subtrahend: 1,
        },
    )
    .unwrap();
    for j in [0, 1, 4] {
        assert!(g.column(j).iter().all(|&v| v == 0.0));
    }
    assert!(g.column(5).iter().any(|&v| v != 0.0));
}

#[test]
fn weight_gradient_matches_finite_differences() {
    // Training relies on the same backward pass; spot-check a few weights.
    let a = arch(3, 4, 3);
    let p = ModelParams::uniform(a, 0.6, 51).unwrap();
    let x = random_record(3, 4, 52);
    let label = 1;
    let trace = p.trace(&x).unwrap();
    let mut dl = softmax(trace.logits().as_slice());
    dl[label] -= 1.0;
    let mut grad = ParamTensors::zeros(&a);
    p.backprop(&x, &trace, &dl, None, Some(&mut grad));

    let analytic: Vec<Vec<f64>> = grad.slices().iter().map(|s| s.to_vec()).collect();
    for (tensor, slot) in [
        (0usize, 5usize),
        (1, 7),
        (2, 9),
        (3, 2),
        (4, 1),
        (5, 4),
        (6, 0),
    ] {
        let eps = 1e-6;
        let bump = |delta: f64| {
            let mut t = p.tensors().clone();
            t.slices_mut()[tensor][slot] += delta;
            let q = ModelParams::new(a, t).unwrap();
            cross_entropy(forward(&q, &x).unwrap().as_slice(), label)
        };
        let numeric = (bump(eps) - bump(-eps)) / (2.0 * eps);
        let got = analytic[tensor][slot];
        assert!(
            (numeric - got).abs() <= 1e-6 * numeric.abs().max(1e-3),
            "tensor {tensor} slot {slot}: {got} vs {numeric}"
        );
    }
}

#[test]
fn training_rejects_single_class() {
    let data: Vec<_> = (0..4).map(|s| (random_record(2, 3, s), 1usize)).collect();
    let err = train(&data, arch(2, 3, 2), &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, Error::SingleClass(1)));
}

#[test]
fn training_rejects_bad_config() {
    let data = vec![(random_record(2, 3, 0), 0), (random_record(2, 3, 1), 1)];
    for cfg in [
        TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        },
        TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        },
        TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        },
    ] {
        assert!(matches!(
            train(&data, arch(2, 3, 2), &cfg),
            Err(Error::InvalidConfig(_))
        ));
    }
}

#[test]
fn training_reports_divergence() {
    let data: Vec<_> = (0..8)
        .map(|s| (random_record(2, 3, s), (s % 2) as usize))
        .collect();
    let cfg = TrainConfig {
        learning_rate: 1e308,
        epochs: 5,
        ..TrainConfig::default()
    };
    match train(&data, arch(2, 3, 2), &cfg) {
        Err(Error::Diverged { epoch, .. }) => assert!(epoch >= 1),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn training_is_deterministic_and_learns_a_simple_rule() {
    // Class is whether the last stamp of feature 0 is high.
    let data: Vec<_> = (0..64)
        .map(|s| {
            let mut x = random_record(2, 4, 100 + s);
            let y = (s % 2) as usize;
            x.values[[0, 3]] = if y == 1 { 0.9 } else { 0.1 };
            (x, y)
        })
        .collect();
    let cfg = TrainConfig {
        epochs: 80,
        patience: 0,
        ..TrainConfig::default()
    };
    let a = train(&data, arch(2, 6, 4), &cfg).unwrap();
    let b = train(&data, arch(2, 6, 4), &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.train_losses, b.train_losses);
    let correct = data
        .iter()
        .filter(|(x, y)| predict(&a.params, x).unwrap().label == *y)
        .count();
    assert_eq!(correct, data.len());
}

#[test]
fn weight_file_round_trip_is_exact() {
    let p = ModelParams::uniform(arch(3, 4, 3), 0.9, 61).unwrap();
    let q = from_json_str(&to_json_string(&p)).unwrap();
    assert_eq!(p, q);
    let x = random_record(3, 7, 62);
    assert_eq!(forward(&p, &x).unwrap(), forward(&q, &x).unwrap());
}

#[test]
fn weight_file_shape_mismatch_is_rejected() {
    let p = ModelParams::uniform(arch(3, 1, 1), 0.5, 0).unwrap();
    let text = to_json_string(&p);
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["tensors"][0]["shape"] = serde_json::json!([4, 4]);
    doc["tensors"][0]["data"] = serde_json::json!(vec![0.0; 16]);
    let err = from_json_str(&doc.to_string()).unwrap_err();
    assert!(matches!(err, Error::MalformedWeights(_)), "{err}");
    assert!(matches!(
        from_json_str("{ not json"),
        Err(Error::MalformedWeights(_))
    ));
}

#[test]
fn hand_written_weight_file_loads() {
    // d=1, h=1, m=1, c=2; a single observed stamp with x = 0.5.
    let text = r#"{
      "format": "suscept-lstm-weights", "version": 1,
      "input_dim": 1, "hidden_dim": 1, "dense_dim": 1, "class_count": 2,
      "gate_order": "input,forget,cell,output",
      "tensors": [
        {"name": "lstm_input_kernel", "shape": [4, 1], "data": [1.0, 0.0, 2.0, -1.0]},
        {"name": "lstm_recurrent_kernel", "shape": [4, 1], "data": [0.0, 0.0, 0.0, 0.0]},
        {"name": "lstm_bias", "shape": [4], "data": [0.0, 0.0, 0.0, 0.5]},
        {"name": "dense_kernel", "shape": [1, 1], "data": [2.0]},
        {"name": "dense_bias", "shape": [1], "data": [0.1]},
        {"name": "output_kernel", "shape": [2, 1], "data": [1.0, -1.0]},
        {"name": "output_bias", "shape": [2], "data": [0.0, 0.25]}
      ]
    }"#;
    let p = from_json_str(text).unwrap();
    let x = FeatureMatrix::dense("one", array![[0.5]]);
    // Hand evaluation: i = σ(0.5), g = tanh(1.0), o = σ(-0.5 + 0.5) = 0.5.
    let c = sig(0.5) * 1.0f64.tanh();
    let h = 0.5 * c.tanh();
    let a = (2.0 * h + 0.1f64).max(0.0);
    let want = [a, -a + 0.25];
    let got = forward(&p, &x).unwrap();
    for (g, w) in got.as_slice().iter().zip(want) {
        assert!((g - w).abs() < 1e-15);
    }
}

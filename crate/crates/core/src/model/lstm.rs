//! Forward evaluation and backpropagation through time for the classifier.
//!
//! For every observed stamp `x_t` (padded stamps are skipped and the state is
//! carried through unchanged):
//!
//! ```text
//! z   = W_x x_t + W_h h + b          (4h, gates packed i, f, g, o)
//! i   = σ(z_i)   f = σ(z_f)   g = tanh(z_g)   o = σ(z_o)
//! c   = f ⊙ c + i ⊙ g
//! h   = o ⊙ tanh(c)
//! ```
//!
//! followed by `a = relu(W_d h + b_d)` and `logits = W_o a + b_o`.

use ndarray::Array2;

use super::params::{ModelParams, ParamTensors};
use crate::error::{Error, Result};
use crate::record::FeatureMatrix;

/// Pre-softmax class scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits(pub Vec<f64>);

impl Logits {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Highest-scoring class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn softmax(&self) -> Vec<f64> {
        softmax(&self.0)
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = k;
        }
    }
    best
}

pub(crate) fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += W x` for row-major `W` with `cols` columns.
#[inline]
fn gemv_acc(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (row, o) in w.chunks_exact(cols).zip(out.iter_mut()) {
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        *o += acc;
    }
}

/// `out += Wᵀ v`.
#[inline]
fn gemv_t_acc(w: &[f64], cols: usize, v: &[f64], out: &mut [f64]) {
    for (row, &vi) in w.chunks_exact(cols).zip(v) {
        if vi == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * vi;
        }
    }
}

/// `W += v xᵀ`.
#[inline]
fn outer_acc(w: &mut [f64], cols: usize, v: &[f64], x: &[f64]) {
    for (row, &vi) in w.chunks_exact_mut(cols).zip(v) {
        if vi == 0.0 {
            continue;
        }
        for (o, b) in row.iter_mut().zip(x) {
            *o += vi * b;
        }
    }
}

/// Activations recorded by a forward pass, needed for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Column index of each processed (observed) stamp, in time order.
    steps: Vec<usize>,
    /// Per step: activated gates `[i, f, g, o]`, `4h` values.
    gates: Vec<f64>,
    /// Per step: cell state after the step.
    cells: Vec<f64>,
    /// Per step: `tanh` of the cell state.
    cells_tanh: Vec<f64>,
    /// Per step: hidden state after the step.
    hiddens: Vec<f64>,
    final_hidden: Vec<f64>,
    dense_pre: Vec<f64>,
    dense_act: Vec<f64>,
    logits: Logits,
}

impl Trace {
    pub fn logits(&self) -> &Logits {
        &self.logits
    }

    pub fn into_logits(self) -> Logits {
        self.logits
    }
}

impl ModelParams {
    /// Runs the network and keeps every intermediate activation.
    pub fn trace(&self, x: &FeatureMatrix) -> Result<Trace> {
        x.check_shape(self.input_dim())?;
        let d = self.input_dim();
        let h = self.hidden_dim();
        let m = self.arch_dense();
        let c = self.class_count();
        let ParamTensors {
            lstm_input_kernel,
            lstm_recurrent_kernel,
            lstm_bias,
            dense_kernel,
            dense_bias,
            output_kernel,
            output_bias,
        } = &self.tensors;
        let wx = lstm_input_kernel.as_slice().expect("standard layout");
        let wh = lstm_recurrent_kernel.as_slice().expect("standard layout");
        let bias = lstm_bias.as_slice().expect("standard layout");

        let steps: Vec<usize> = (0..x.n_steps()).filter(|&j| x.mask[j]).collect();
        let n = steps.len();
        let mut gates = vec![0.0; n * 4 * h];
        let mut cells = vec![0.0; n * h];
        let mut cells_tanh = vec![0.0; n * h];
        let mut hiddens = vec![0.0; n * h];

        let zeros = vec![0.0; h];
        let mut xcol = vec![0.0; d];
        let mut z = vec![0.0; 4 * h];
        for (s, &col) in steps.iter().enumerate() {
            for (f, v) in xcol.iter_mut().enumerate() {
                *v = x.values[[f, col]];
            }
            let (h_prev, c_prev) = if s == 0 {
                (&zeros[..], &zeros[..])
            } else {
                (&hiddens[(s - 1) * h..s * h], &cells[(s - 1) * h..s * h])
            };
            z.copy_from_slice(bias);
            gemv_acc(wx, d, &xcol, &mut z);
            gemv_acc(wh, h, h_prev, &mut z);

            let mut c_new = vec![0.0; h];
            let mut tc_new = vec![0.0; h];
            let mut h_new = vec![0.0; h];
            let g_out = &mut gates[s * 4 * h..(s + 1) * 4 * h];
            for k in 0..h {
                let i = sigmoid(z[k]);
                let f = sigmoid(z[h + k]);
                let g = z[2 * h + k].tanh();
                let o = sigmoid(z[3 * h + k]);
                let cell = f * c_prev[k] + i * g;
                let tc = cell.tanh();
                g_out[k] = i;
                g_out[h + k] = f;
                g_out[2 * h + k] = g;
                g_out[3 * h + k] = o;
                c_new[k] = cell;
                tc_new[k] = tc;
                h_new[k] = o * tc;
            }
            cells[s * h..(s + 1) * h].copy_from_slice(&c_new);
            cells_tanh[s * h..(s + 1) * h].copy_from_slice(&tc_new);
            hiddens[s * h..(s + 1) * h].copy_from_slice(&h_new);
        }

        let final_hidden = if n == 0 {
            zeros
        } else {
            hiddens[(n - 1) * h..n * h].to_vec()
        };

        let mut dense_pre = dense_bias.to_vec();
        gemv_acc(
            dense_kernel.as_slice().expect("standard layout"),
            h,
            &final_hidden,
            &mut dense_pre,
        );
        let dense_act: Vec<f64> = dense_pre.iter().map(|&v| v.max(0.0)).collect();
        debug_assert_eq!(dense_act.len(), m);

        let mut logits = output_bias.to_vec();
        gemv_acc(
            output_kernel.as_slice().expect("standard layout"),
            m,
            &dense_act,
            &mut logits,
        );
        debug_assert_eq!(logits.len(), c);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("forward pass"));
        }

        Ok(Trace {
            steps,
            gates,
            cells,
            cells_tanh,
            hiddens,
            final_hidden,
            dense_pre,
            dense_act,
            logits: Logits(logits),
        })
    }

    fn arch_dense(&self) -> usize {
        self.architecture().dense_dim
    }

    /// Backpropagates `dlogits` (∂loss/∂logits) through a recorded pass.
    ///
    /// Input gradients are accumulated into `input_grad` (shape `d x t`, only
    /// observed columns are touched) and weight gradients into `param_grad`.
    pub(crate) fn backprop(
        &self,
        x: &FeatureMatrix,
        trace: &Trace,
        dlogits: &[f64],
        mut input_grad: Option<&mut Array2<f64>>,
        mut param_grad: Option<&mut ParamTensors>,
    ) {
        let d = self.input_dim();
        let h = self.hidden_dim();
        let m = self.arch_dense();
        let t = &self.tensors;

        let output_kernel = t.output_kernel.as_slice().expect("standard layout");
        let dense_kernel = t.dense_kernel.as_slice().expect("standard layout");
        let wx = t.lstm_input_kernel.as_slice().expect("standard layout");
        let wh = t.lstm_recurrent_kernel.as_slice().expect("standard layout");

        if let Some(pg) = param_grad.as_deref_mut() {
            outer_acc(
                pg.output_kernel.as_slice_mut().expect("standard layout"),
                m,
                dlogits,
                &trace.dense_act,
            );
            for (b, g) in pg.output_bias.iter_mut().zip(dlogits) {
                *b += g;
            }
        }

        let mut d_act = vec![0.0; m];
        gemv_t_acc(output_kernel, m, dlogits, &mut d_act);
        let d_pre: Vec<f64> = d_act
            .iter()
            .zip(&trace.dense_pre)
            .map(|(&g, &p)| if p > 0.0 { g } else { 0.0 })
            .collect();

        if let Some(pg) = param_grad.as_deref_mut() {
            outer_acc(
                pg.dense_kernel.as_slice_mut().expect("standard layout"),
                h,
                &d_pre,
                &trace.final_hidden,
            );
            for (b, g) in pg.dense_bias.iter_mut().zip(&d_pre) {
                *b += g;
            }
        }

        let mut dh = vec![0.0; h];
        gemv_t_acc(dense_kernel, h, &d_pre, &mut dh);
        let mut dc = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        let mut dx = vec![0.0; d];
        let mut xcol = vec![0.0; d];
        let zeros = vec![0.0; h];

        for s in (0..trace.steps.len()).rev() {
            let col = trace.steps[s];
            let gates = &trace.gates[s * 4 * h..(s + 1) * 4 * h];
            let tanh_c = &trace.cells_tanh[s * h..(s + 1) * h];
            let (h_prev, c_prev) = if s == 0 {
                (&zeros[..], &zeros[..])
            } else {
                (
                    &trace.hiddens[(s - 1) * h..s * h],
                    &trace.cells[(s - 1) * h..s * h],
                )
            };

            for k in 0..h {
                let i = gates[k];
                let f = gates[h + k];
                let g = gates[2 * h + k];
                let o = gates[3 * h + k];
                let tc = tanh_c[k];
                let d_o = dh[k] * tc;
                let dck = dc[k] + dh[k] * o * (1.0 - tc * tc);
                dz[k] = dck * g * i * (1.0 - i);
                dz[h + k] = dck * c_prev[k] * f * (1.0 - f);
                dz[2 * h + k] = dck * i * (1.0 - g * g);
                dz[3 * h + k] = d_o * o * (1.0 - o);
                dc[k] = dck * f;
            }

            if let Some(ig) = input_grad.as_deref_mut() {
                dx.fill(0.0);
                gemv_t_acc(wx, d, &dz, &mut dx);
                for (f, v) in dx.iter().enumerate() {
                    ig[[f, col]] += v;
                }
            }

            if let Some(pg) = param_grad.as_deref_mut() {
                for (f, v) in xcol.iter_mut().enumerate() {
                    *v = x.values[[f, col]];
                }
                outer_acc(
                    pg.lstm_input_kernel
                        .as_slice_mut()
                        .expect("standard layout"),
                    d,
                    &dz,
                    &xcol,
                );
                outer_acc(
                    pg.lstm_recurrent_kernel
                        .as_slice_mut()
                        .expect("standard layout"),
                    h,
                    &dz,
                    h_prev,
                );
                for (b, g) in pg.lstm_bias.iter_mut().zip(&dz) {
                    *b += g;
                }
            }

            dh.fill(0.0);
            gemv_t_acc(wh, h, &dz, &mut dh);
        }
    }
}

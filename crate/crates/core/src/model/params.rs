use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer sizes of the classifier: LSTM(hidden) -> dense(relu) -> output logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub dense_dim: usize,
    pub class_count: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden_dim: usize, dense_dim: usize, class_count: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            dense_dim,
            class_count,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.dense_dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "layer sizes must be positive: {self:?}"
            )));
        }
        if self.class_count < 2 {
            return Err(Error::InvalidConfig(format!(
                "class_count must be at least 2, got {}",
                self.class_count
            )));
        }
        Ok(())
    }
}

/// Raw weight tensors. The packed LSTM kernels stack the gate blocks in the
/// order input, forget, cell, output (rows `k*h..(k+1)*h` belong to gate `k`).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensors {
    /// `4h x d`
    pub lstm_input_kernel: Array2<f64>,
    /// `4h x h`
    pub lstm_recurrent_kernel: Array2<f64>,
    /// `4h`
    pub lstm_bias: Array1<f64>,
    /// `m x h`
    pub dense_kernel: Array2<f64>,
    /// `m`
    pub dense_bias: Array1<f64>,
    /// `c x m`
    pub output_kernel: Array2<f64>,
    /// `c`
    pub output_bias: Array1<f64>,
}

impl ParamTensors {
    pub fn zeros(arch: &Architecture) -> Self {
        let Architecture {
            input_dim: d,
            hidden_dim: h,
            dense_dim: m,
            class_count: c,
        } = *arch;
        Self {
            lstm_input_kernel: Array2::zeros((4 * h, d)),
            lstm_recurrent_kernel: Array2::zeros((4 * h, h)),
            lstm_bias: Array1::zeros(4 * h),
            dense_kernel: Array2::zeros((m, h)),
            dense_bias: Array1::zeros(m),
            output_kernel: Array2::zeros((c, m)),
            output_bias: Array1::zeros(c),
        }
    }

    pub(crate) fn slices(&self) -> [&[f64]; 7] {
        [
            self.lstm_input_kernel.as_slice().expect("standard layout"),
            self.lstm_recurrent_kernel
                .as_slice()
                .expect("standard layout"),
            self.lstm_bias.as_slice().expect("standard layout"),
            self.dense_kernel.as_slice().expect("standard layout"),
            self.dense_bias.as_slice().expect("standard layout"),
            self.output_kernel.as_slice().expect("standard layout"),
            self.output_bias.as_slice().expect("standard layout"),
        ]
    }

    pub(crate) fn slices_mut(&mut self) -> [&mut [f64]; 7] {
        [
            self.lstm_input_kernel
                .as_slice_mut()
                .expect("standard layout"),
            self.lstm_recurrent_kernel
                .as_slice_mut()
                .expect("standard layout"),
            self.lstm_bias.as_slice_mut().expect("standard layout"),
            self.dense_kernel.as_slice_mut().expect("standard layout"),
            self.dense_bias.as_slice_mut().expect("standard layout"),
            self.output_kernel.as_slice_mut().expect("standard layout"),
            self.output_bias.as_slice_mut().expect("standard layout"),
        ]
    }

    pub(crate) fn fill_zero(&mut self) {
        for s in self.slices_mut() {
            s.fill(0.0);
        }
    }

    fn standardized(self) -> Self {
        Self {
            lstm_input_kernel: self.lstm_input_kernel.as_standard_layout().into_owned(),
            lstm_recurrent_kernel: self.lstm_recurrent_kernel.as_standard_layout().into_owned(),
            lstm_bias: self.lstm_bias.as_standard_layout().into_owned(),
            dense_kernel: self.dense_kernel.as_standard_layout().into_owned(),
            dense_bias: self.dense_bias.as_standard_layout().into_owned(),
            output_kernel: self.output_kernel.as_standard_layout().into_owned(),
            output_bias: self.output_bias.as_standard_layout().into_owned(),
        }
    }
}

/// All weights of the recurrent classifier together with its layer sizes.
///
/// Immutable once constructed; every entry is finite and every tensor shape
/// agrees with the architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    arch: Architecture,
    pub(crate) tensors: ParamTensors,
}

impl ModelParams {
    pub fn new(arch: Architecture, tensors: ParamTensors) -> Result<Self> {
        arch.validate()?;
        let expected = ParamTensors::zeros(&arch);
        let check2 = |name: &str, got: &Array2<f64>, want: &Array2<f64>| {
            if got.dim() != want.dim() {
                return Err(Error::MalformedWeights(format!(
                    "{name} has shape {:?}, expected {:?}",
                    got.dim(),
                    want.dim()
                )));
            }
            Ok(())
        };
        let check1 = |name: &str, got: &Array1<f64>, want: &Array1<f64>| {
            if got.len() != want.len() {
                return Err(Error::MalformedWeights(format!(
                    "{name} has length {}, expected {}",
                    got.len(),
                    want.len()
                )));
            }
            Ok(())
        };
        check2(
            "lstm_input_kernel",
            &tensors.lstm_input_kernel,
            &expected.lstm_input_kernel,
        )?;
        check2(
            "lstm_recurrent_kernel",
            &tensors.lstm_recurrent_kernel,
            &expected.lstm_recurrent_kernel,
        )?;
        check1("lstm_bias", &tensors.lstm_bias, &expected.lstm_bias)?;
        check2(
            "dense_kernel",
            &tensors.dense_kernel,
            &expected.dense_kernel,
        )?;
        check1("dense_bias", &tensors.dense_bias, &expected.dense_bias)?;
        check2(
            "output_kernel",
            &tensors.output_kernel,
            &expected.output_kernel,
        )?;
        check1("output_bias", &tensors.output_bias, &expected.output_bias)?;

        let tensors = tensors.standardized();
        if tensors
            .slices()
            .iter()
            .any(|s| s.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(Self { arch, tensors })
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        Self::new(arch, ParamTensors::zeros(&arch))
    }

    /// Every weight and bias drawn uniformly from `[-scale, scale]`.
    pub fn uniform(arch: Architecture, scale: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = ParamTensors::zeros(&arch);
        for s in tensors.slices_mut() {
            for v in s.iter_mut() {
                *v = rng.random_range(-scale..=scale);
            }
        }
        Self::new(arch, tensors)
    }

    /// Glorot-uniform kernels (`limit = sqrt(6 / (fan_in + fan_out))`, with the
    /// packed gate blocks counted as one `4h`-wide output) and zero biases.
    pub fn glorot(arch: Architecture, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = ParamTensors::zeros(&arch);
        let mut fill = |a: &mut Array2<f64>| {
            let (rows, cols) = a.dim();
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            a.mapv_inplace(|_| rng.random_range(-limit..=limit));
        };
        fill(&mut tensors.lstm_input_kernel);
        fill(&mut tensors.lstm_recurrent_kernel);
        fill(&mut tensors.dense_kernel);
        fill(&mut tensors.output_kernel);
        Self::new(arch, tensors)
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn tensors(&self) -> &ParamTensors {
        &self.tensors
    }

    pub fn into_tensors(self) -> ParamTensors {
        self.tensors
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.arch.hidden_dim
    }

    pub fn class_count(&self) -> usize {
        self.arch.class_count
    }
}

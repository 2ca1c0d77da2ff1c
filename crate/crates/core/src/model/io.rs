//! Self-describing JSON weight file.
//!
//! ```text
//! {
//!   "format": "suscept-lstm-weights",
//!   "version": 1,
//!   "input_dim": d, "hidden_dim": h, "dense_dim": m, "class_count": c,
//!   "gate_order": "input,forget,cell,output",
//!   "tensors": [ { "name": "lstm_input_kernel", "shape": [4h, d], "data": [...] }, ... ]
//! }
//! ```
//!
//! Tensors appear in the order `lstm_input_kernel`, `lstm_recurrent_kernel`,
//! `lstm_bias`, `dense_kernel`, `dense_bias`, `output_kernel`, `output_bias`,
//! each flattened row-major. Values are written in shortest round-trip form.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::params::{Architecture, ModelParams, ParamTensors};
use crate::error::{Error, Result};
use crate::fsio;

pub const WEIGHTS_FORMAT: &str = "suscept-lstm-weights";
pub const GATE_ORDER: &str = "input,forget,cell,output";
const VERSION: u32 = 1;

const TENSOR_NAMES: [&str; 7] = [
    "lstm_input_kernel",
    "lstm_recurrent_kernel",
    "lstm_bias",
    "dense_kernel",
    "dense_bias",
    "output_kernel",
    "output_bias",
];

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightFile {
    format: String,
    version: u32,
    input_dim: usize,
    hidden_dim: usize,
    dense_dim: usize,
    class_count: usize,
    gate_order: String,
    tensors: Vec<NamedTensor>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

pub fn to_json_string(params: &ModelParams) -> String {
    let arch = params.architecture();
    let t = params.tensors();
    let shapes: [Vec<usize>; 7] = [
        t.lstm_input_kernel.shape().to_vec(),
        t.lstm_recurrent_kernel.shape().to_vec(),
        t.lstm_bias.shape().to_vec(),
        t.dense_kernel.shape().to_vec(),
        t.dense_bias.shape().to_vec(),
        t.output_kernel.shape().to_vec(),
        t.output_bias.shape().to_vec(),
    ];
    let tensors = TENSOR_NAMES
        .iter()
        .zip(shapes)
        .zip(t.slices())
        .map(|((name, shape), data)| NamedTensor {
            name: name.to_string(),
            shape,
            data: data.to_vec(),
        })
        .collect();
    let doc = WeightFile {
        format: WEIGHTS_FORMAT.into(),
        version: VERSION,
        input_dim: arch.input_dim,
        hidden_dim: arch.hidden_dim,
        dense_dim: arch.dense_dim,
        class_count: arch.class_count,
        gate_order: GATE_ORDER.into(),
        tensors,
    };
    serde_json::to_string_pretty(&doc).expect("weight document serializes")
}

pub fn from_json_str(text: &str) -> Result<ModelParams> {
    let doc: WeightFile =
        serde_json::from_str(text).map_err(|e| Error::MalformedWeights(e.to_string()))?;
    if doc.format != WEIGHTS_FORMAT {
        return Err(Error::MalformedWeights(format!(
            "unknown format `{}`",
            doc.format
        )));
    }
    if doc.version != VERSION {
        return Err(Error::MalformedWeights(format!(
            "unsupported version {}",
            doc.version
        )));
    }
    if doc.gate_order != GATE_ORDER {
        return Err(Error::MalformedWeights(format!(
            "unsupported gate order `{}`",
            doc.gate_order
        )));
    }
    let arch = Architecture::new(
        doc.input_dim,
        doc.hidden_dim,
        doc.dense_dim,
        doc.class_count,
    );
    let expected = ParamTensors::zeros(&arch);
    let expected_shapes: [&[usize]; 7] = [
        expected.lstm_input_kernel.shape(),
        expected.lstm_recurrent_kernel.shape(),
        expected.lstm_bias.shape(),
        expected.dense_kernel.shape(),
        expected.dense_bias.shape(),
        expected.output_kernel.shape(),
        expected.output_bias.shape(),
    ];
    if doc.tensors.len() != TENSOR_NAMES.len() {
        return Err(Error::MalformedWeights(format!(
            "expected {} tensors, found {}",
            TENSOR_NAMES.len(),
            doc.tensors.len()
        )));
    }

    let mut mats = Vec::new();
    let mut vecs = Vec::new();
    for ((tensor, name), want) in doc
        .tensors
        .into_iter()
        .zip(TENSOR_NAMES)
        .zip(expected_shapes)
    {
        if tensor.name != name {
            return Err(Error::MalformedWeights(format!(
                "expected tensor `{name}`, found `{}`",
                tensor.name
            )));
        }
        if tensor.shape != want {
            return Err(Error::MalformedWeights(format!(
                "tensor `{name}` has shape {:?}, header implies {:?}",
                tensor.shape, want
            )));
        }
        let count: usize = tensor.shape.iter().product();
        if tensor.data.len() != count {
            return Err(Error::MalformedWeights(format!(
                "tensor `{name}` holds {} values, shape {:?} needs {count}",
                tensor.data.len(),
                tensor.shape
            )));
        }
        match tensor.shape.as_slice() {
            [r, c] => mats
                .push(Array2::from_shape_vec((*r, *c), tensor.data).expect("length checked above")),
            _ => vecs.push(Array1::from_vec(tensor.data)),
        }
    }
    let mut mats = mats.into_iter();
    let mut vecs = vecs.into_iter();
    let mut next_mat = || mats.next().expect("four matrices");
    let lstm_input_kernel = next_mat();
    let lstm_recurrent_kernel = next_mat();
    let dense_kernel = next_mat();
    let output_kernel = next_mat();
    let lstm_bias = vecs.next().expect("bias");
    let dense_bias = vecs.next().expect("bias");
    let output_bias = vecs.next().expect("bias");
    ModelParams::new(
        arch,
        ParamTensors {
            lstm_input_kernel,
            lstm_recurrent_kernel,
            lstm_bias,
            dense_kernel,
            dense_bias,
            output_kernel,
            output_bias,
        },
    )
}

pub fn save_params(params: &ModelParams, path: &Path) -> Result<()> {
    fsio::write_atomic(path, to_json_string(params).as_bytes())
}

pub fn load_params(path: &Path) -> Result<ModelParams> {
    let text = fsio::read_to_string(path)?;
    from_json_str(&text).map_err(|e| match e {
        Error::MalformedWeights(msg) => {
            Error::MalformedWeights(format!("{}: {msg}", path.display()))
        }
        other => other,
    })
}

//! Small bidirectional recurrent models mapping frame-level input features to
//! vocoder parameter frames.
//!
//! Both directions share one cell kind. The forward direction runs `t = 1..T`,
//! the backward direction `t = T..1`, and the output is the affine
//! combination `y_t = W_fy h_f[t] + W_by h_b[t] + b_y`. Training minimizes the
//! mean squared error over every scalar output entry by plain gradient
//! descent with exact backpropagation-through-time gradients, one update per
//! sequence in a seeded shuffled order by default.

mod cells;
mod serialize;
mod train;

pub use cells::{forward, gradients, mse_loss, ForwardOutput};
pub use serialize::{load_model, parse_model, save_model, write_model};
pub use train::{dataset_loss, toy_dataset, train, train_with_validation, ToyConfig, TrainConfig, TrainOutcome};

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("{what}: expected dimension {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("input sequence is empty")]
    EmptySequence,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("non-finite value in {stage} at step {step}")]
    NonFinite { stage: &'static str, step: usize },
    #[error("loss diverged at epoch {epoch}: {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("unknown cell kind '{0}'")]
    UnknownCell(String),
    #[error("model file, line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("model file {path}: {message}")]
    Io { path: String, message: String },
}

/// Recurrent cell used by both directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    /// `h_t = tanh(W_x x_t + W_h h_{t-1} + b)`.
    VanillaBidirectional,
    /// Input, forget, candidate and output gates (in that row order).
    Lstm,
    /// Update, reset and candidate blocks (in that row order), with the reset
    /// gate applied to the previous state before the recurrent product.
    Gru,
}

impl CellKind {
    pub const ALL: [CellKind; 3] = [CellKind::VanillaBidirectional, CellKind::Lstm, CellKind::Gru];

    pub fn name(self) -> &'static str {
        match self {
            CellKind::VanillaBidirectional => "vanilla-bidirectional",
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        }
    }

    /// Number of `hidden_dim`-row blocks in the gate matrices.
    pub fn gate_blocks(self) -> usize {
        match self {
            CellKind::VanillaBidirectional => 1,
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CellKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CellKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ModelError::UnknownCell(s.to_string()))
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == rows * cols).then_some(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out[i] += sum_j M[rows.start + i][j] x[j]`.
    pub(crate) fn mul_add_rows(&self, rows: Range<usize>, x: &[f64], out: &mut [f64]) {
        for (o, r) in out.iter_mut().zip(rows) {
            *o += self.row(r).iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub(crate) fn mul_add(&self, x: &[f64], out: &mut [f64]) {
        self.mul_add_rows(0..self.rows, x, out);
    }

    /// `out[j] += sum_i M[rows.start + i][j] v[i]`.
    pub(crate) fn mul_t_add_rows(&self, rows: Range<usize>, v: &[f64], out: &mut [f64]) {
        for (vi, r) in v.iter().zip(rows) {
            if *vi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a * vi;
            }
        }
    }

    pub(crate) fn mul_t_add(&self, v: &[f64], out: &mut [f64]) {
        self.mul_t_add_rows(0..self.rows, v, out);
    }

    /// `M[rows.start + i][j] += a[i] b[j]`.
    pub(crate) fn add_outer_rows(&mut self, rows: Range<usize>, a: &[f64], b: &[f64]) {
        let cols = self.cols;
        for (ai, r) in a.iter().zip(rows) {
            if *ai == 0.0 {
                continue;
            }
            for (m, bj) in self.data[r * cols..(r + 1) * cols].iter_mut().zip(b) {
                *m += ai * bj;
            }
        }
    }

    pub(crate) fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        self.add_outer_rows(0..self.rows, a, b);
    }

    fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut ChaCha8Rng) -> Self {
        Self {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect(),
        }
    }
}

/// Weights of one direction; gate blocks are stacked along the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionParams {
    pub w_x: Mat,
    pub w_h: Mat,
    pub b: Vec<f64>,
}

impl DirectionParams {
    fn zeros(kind: CellKind, input_dim: usize, hidden_dim: usize) -> Self {
        let g = kind.gate_blocks() * hidden_dim;
        Self {
            w_x: Mat::zeros(g, input_dim),
            w_h: Mat::zeros(g, hidden_dim),
            b: vec![0.0; g],
        }
    }
}

/// All weights of a bidirectional model.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceModelParams {
    pub cell_kind: CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub forward: DirectionParams,
    pub backward: DirectionParams,
    pub w_fy: Mat,
    pub w_by: Mat,
    pub b_y: Vec<f64>,
    /// Seed used for initialization, kept for provenance in saved files.
    pub seed: u64,
}

/// Names of the tensors in [`SequenceModelParams::tensors`] order.
pub const TENSOR_NAMES: [&str; 9] = [
    "forward.w_x",
    "forward.w_h",
    "forward.b",
    "backward.w_x",
    "backward.w_h",
    "backward.b",
    "w_fy",
    "w_by",
    "b_y",
];

impl SequenceModelParams {
    pub fn zeros(cell_kind: CellKind, input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        Self {
            cell_kind,
            input_dim,
            hidden_dim,
            output_dim,
            forward: DirectionParams::zeros(cell_kind, input_dim, hidden_dim),
            backward: DirectionParams::zeros(cell_kind, input_dim, hidden_dim),
            w_fy: Mat::zeros(output_dim, hidden_dim),
            w_by: Mat::zeros(output_dim, hidden_dim),
            b_y: vec![0.0; output_dim],
            seed: 0,
        }
    }

    /// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init(cell_kind: CellKind, input_dim: usize, hidden_dim: usize, output_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = cell_kind.gate_blocks() * hidden_dim;
        let bx = 1.0 / (input_dim as f64).sqrt();
        let bh = 1.0 / (hidden_dim as f64).sqrt();
        let by = 1.0 / ((2 * hidden_dim) as f64).sqrt();
        let direction = |rng: &mut ChaCha8Rng| DirectionParams {
            w_x: Mat::uniform(g, input_dim, bx, rng),
            w_h: Mat::uniform(g, hidden_dim, bh, rng),
            b: (0..g).map(|_| rng.random_range(-bh..=bh)).collect(),
        };
        let forward = direction(&mut rng);
        let backward = direction(&mut rng);
        Self {
            cell_kind,
            input_dim,
            hidden_dim,
            output_dim,
            forward,
            backward,
            w_fy: Mat::uniform(output_dim, hidden_dim, by, &mut rng),
            w_by: Mat::uniform(output_dim, hidden_dim, by, &mut rng),
            b_y: (0..output_dim).map(|_| rng.random_range(-by..=by)).collect(),
            seed,
        }
    }

    /// A zero-valued set with the same shape, e.g. for gradients.
    pub fn zeros_like(&self) -> Self {
        Self {
            seed: self.seed,
            ..Self::zeros(self.cell_kind, self.input_dim, self.hidden_dim, self.output_dim)
        }
    }

    pub fn tensors(&self) -> [&[f64]; 9] {
        [
            self.forward.w_x.data(),
            self.forward.w_h.data(),
            &self.forward.b,
            self.backward.w_x.data(),
            self.backward.w_h.data(),
            &self.backward.b,
            self.w_fy.data(),
            self.w_by.data(),
            &self.b_y,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 9] {
        [
            self.forward.w_x.data_mut(),
            self.forward.w_h.data_mut(),
            &mut self.forward.b,
            self.backward.w_x.data_mut(),
            self.backward.w_h.data_mut(),
            &mut self.backward.b,
            self.w_fy.data_mut(),
            self.w_by.data_mut(),
            &mut self.b_y,
        ]
    }

    /// `(rows, cols)` of each tensor; vectors are single columns.
    pub fn tensor_shapes(&self) -> [(usize, usize); 9] {
        let g = self.cell_kind.gate_blocks() * self.hidden_dim;
        let (i, h, o) = (self.input_dim, self.hidden_dim, self.output_dim);
        [(g, i), (g, h), (g, 1), (g, i), (g, h), (g, 1), (o, h), (o, h), (o, 1)]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    /// Overwrites every parameter from a vector in [`Self::flatten`] order.
    pub fn unflatten(&mut self, values: &[f64]) -> Result<(), ModelError> {
        let expected = self.parameter_count();
        if values.len() != expected {
            return Err(ModelError::Dimension {
                what: "flattened parameters",
                expected,
                got: values.len(),
            });
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&values[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &SequenceModelParams, scale: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// One utterance: equal-length input and target frame sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

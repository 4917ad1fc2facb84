//! Gradient-descent training and a synthetic toy corpus.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{gradients, ModelError, Sequence, SequenceModelParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Sequences per update; `None` uses the whole training set.
    pub batch_size: Option<usize>,
    /// Seeds the per-epoch shuffle when mini-batching.
    pub seed: u64,
}

impl TrainConfig {
    /// One update per sequence, visiting sequences in a seeded random order
    /// each epoch.
    pub fn per_sequence(epochs: usize, learning_rate: f64, seed: u64) -> Self {
        Self {
            epochs,
            learning_rate,
            batch_size: Some(1),
            seed,
        }
    }

    pub fn full_batch(epochs: usize, learning_rate: f64, seed: u64) -> Self {
        Self {
            epochs,
            learning_rate,
            batch_size: None,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: SequenceModelParams,
    /// Training-set loss after each epoch.
    pub train_loss: Vec<f64>,
    /// Held-out loss after each epoch; empty without a validation set.
    pub val_loss: Vec<f64>,
}

/// Mean squared error of the model over a whole dataset.
pub fn dataset_loss(params: &SequenceModelParams, data: &[Sequence]) -> Result<f64, ModelError> {
    Ok(gradients(params, data)?.0)
}

fn diverged(e: ModelError, epoch: usize) -> ModelError {
    match e {
        ModelError::NonFinite { .. } => ModelError::Diverged {
            epoch,
            loss: f64::NAN,
        },
        other => other,
    }
}

pub fn train(
    params: SequenceModelParams,
    dataset: &[Sequence],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    train_with_validation(params, dataset, &[], cfg)
}

pub fn train_with_validation(
    mut params: SequenceModelParams,
    dataset: &[Sequence],
    validation: &[Sequence],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let batch = cfg.batch_size.unwrap_or(dataset.len()).clamp(1, dataset.len());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut train_loss = Vec::with_capacity(cfg.epochs);
    let mut val_loss = Vec::new();

    for epoch in 0..cfg.epochs {
        if batch < dataset.len() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let part: Vec<Sequence> = chunk.iter().map(|&i| dataset[i].clone()).collect();
            let (_, grad) = gradients(&params, &part).map_err(|e| diverged(e, epoch))?;
            params.add_scaled(&grad, -cfg.learning_rate);
        }
        let loss = dataset_loss(&params, dataset).map_err(|e| diverged(e, epoch))?;
        if !loss.is_finite() || !params.is_finite() {
            return Err(ModelError::Diverged { epoch, loss });
        }
        train_loss.push(loss);
        if !validation.is_empty() {
            val_loss.push(dataset_loss(&params, validation)?);
        }
    }
    Ok(TrainOutcome {
        params,
        train_loss,
        val_loss,
    })
}

/// Shape of the synthetic phone-to-parameter corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyConfig {
    pub samples: usize,
    pub frames: usize,
    pub phone_classes: usize,
    pub output_dim: usize,
    pub seed: u64,
}

impl ToyConfig {
    /// Per-frame input width: one-hot phone class plus two position scalars.
    pub fn input_dim(&self) -> usize {
        self.phone_classes + 2
    }
}

/// Sequences of phone segments (3 to 6 frames each). Inputs are one-hot
/// phone vectors with the relative position in the utterance and in the
/// current segment. Targets are a per-phone parameter vector with a linear
/// declination over the utterance, all in `[-0.5, 0.5]`.
pub fn toy_dataset(cfg: &ToyConfig) -> Vec<Sequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let table: Vec<Vec<f64>> = (0..cfg.phone_classes)
        .map(|_| (0..cfg.output_dim).map(|_| rng.random_range(-0.3..0.3)).collect())
        .collect();
    let slope: Vec<f64> = (0..cfg.output_dim).map(|_| rng.random_range(-0.2..0.2)).collect();
    (0..cfg.samples)
        .map(|_| {
            let mut inputs = Vec::with_capacity(cfg.frames);
            let mut targets = Vec::with_capacity(cfg.frames);
            while inputs.len() < cfg.frames {
                let phone = rng.random_range(0..cfg.phone_classes);
                let len: usize = rng.random_range(3..=6);
                for k in 0..len {
                    if inputs.len() == cfg.frames {
                        break;
                    }
                    let t = inputs.len() as f64 / (cfg.frames.max(2) - 1) as f64;
                    let mut x = vec![0.0; cfg.input_dim()];
                    x[phone] = 1.0;
                    x[cfg.phone_classes] = t;
                    x[cfg.phone_classes + 1] = k as f64 / len as f64;
                    inputs.push(x);
                    targets.push(
                        table[phone]
                            .iter()
                            .zip(&slope)
                            .map(|(v, s)| v + s * (t - 0.5))
                            .collect(),
                    );
                }
            }
            Sequence { inputs, targets }
        })
        .collect()
}

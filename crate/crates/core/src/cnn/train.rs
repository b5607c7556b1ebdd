//! Seeded mini-batch SGD with momentum, and inference on blocks.

use super::layers::{Real, Shape, Tensor};
use super::model::{Architecture, CnnModel, Grads};
use super::CnnError;
use crate::blocking::Block;
use crate::volume::Tissue;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout_p: f64,
    pub rng_seed: u64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            architecture: Architecture::standard(),
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            epochs: 10,
            dropout_p: 0.5,
            rng_seed: 0,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CnnError> {
        let bad = |m: String| Err(CnnError::InvalidConfig(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout_p {} outside [0, 1)", self.dropout_p));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!(
                "validation_fraction {} outside [0, 1)",
                self.validation_fraction
            ));
        }
        if self.architecture.output_classes()? != Tissue::ALL.len() {
            return bad("architecture must end in 3 classes".into());
        }
        Ok(())
    }
}

/// Per-epoch training statistics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    /// `None` when no validation split was held out.
    pub validation_accuracy: Vec<Option<f64>>,
}

impl TrainHistory {
    /// `epoch,train_loss,train_accuracy,validation_accuracy` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_accuracy,validation_accuracy\n");
        for i in 0..self.train_loss.len() {
            let val = self.validation_accuracy[i]
                .map(|v| v.to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                i + 1,
                self.train_loss[i],
                self.train_accuracy[i],
                val
            ));
        }
        out
    }
}

pub fn block_tensor<T: Real>(block: &Block) -> Tensor<T> {
    Tensor {
        shape: Shape::new(block.side, block.side, 1),
        data: block.patch.iter().map(|&v| T::of(f64::from(v))).collect(),
    }
}

/// Result of one mini-batch pass.
pub struct BatchOutcome<T> {
    /// Mean gradient over the batch.
    pub grads: Grads<T>,
    pub mean_loss: f64,
    pub correct: usize,
}

/// Mean loss gradient over `batch`. Each example's dropout mask comes from
/// its own stream seeded off `rng`, and per-example gradients are summed in
/// batch order, so the result does not depend on thread scheduling.
pub fn backprop_step<T: Real>(
    model: &CnnModel<T>,
    batch: &[&Block],
    rng: &mut ChaCha8Rng,
) -> Result<BatchOutcome<T>, CnnError> {
    if batch.is_empty() {
        return Err(CnnError::InsufficientData("empty batch".into()));
    }
    let seeds: Vec<u64> = batch.iter().map(|_| rng.random()).collect();
    let per_example: Vec<(T, usize, Grads<T>)> = batch
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(block, &seed)| {
            let mut drop_rng = ChaCha8Rng::seed_from_u64(seed);
            let label = block.label.index();
            let (loss, probs, grads) =
                model.example_gradients(&block_tensor(block), label, Some(&mut drop_rng))?;
            Ok((loss, usize::from(argmax(&probs) == label), grads))
        })
        .collect::<Result<_, CnnError>>()?;

    let mut iter = per_example.into_iter();
    let (mut loss_sum, mut correct, mut grads) = iter.next().expect("non-empty batch");
    for (l, c, g) in iter {
        loss_sum += l;
        correct += c;
        grads.add_assign(&g);
    }
    let mean_loss = loss_sum.to_f64().unwrap() / batch.len() as f64;
    if !mean_loss.is_finite() {
        return Err(CnnError::NonFiniteLoss);
    }
    grads.scale(T::of(1.0 / batch.len() as f64));
    Ok(BatchOutcome {
        grads,
        mean_loss,
        correct,
    })
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Trains a fresh model. Deterministic for a given (blocks, config).
pub fn train(
    blocks: &[Block],
    config: &TrainConfig,
) -> Result<(CnnModel<f32>, TrainHistory), CnnError> {
    config.validate()?;
    if blocks.len() < config.batch_size {
        return Err(CnnError::InsufficientData(format!(
            "{} blocks for batch size {}",
            blocks.len(),
            config.batch_size
        )));
    }
    for t in Tissue::ALL {
        if !blocks.iter().any(|b| b.label == t) {
            return Err(CnnError::InsufficientData(format!("no {t} blocks")));
        }
    }
    let input = config.architecture.input;
    if let Some(b) = blocks
        .iter()
        .find(|b| b.patch.len() != input.len() || b.side != input.h)
    {
        return Err(CnnError::ShapeMismatch(format!(
            "block side {} does not fit model input {input}",
            b.side
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut model = CnnModel::<f32>::he_init(&config.architecture, config.dropout_p, &mut rng)?;

    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (blocks.len() as f64 * config.validation_fraction).floor() as usize;
    let n_val = n_val.min(blocks.len() - config.batch_size.min(blocks.len()));
    let (val_idx, train_idx) = order.split_at(n_val);
    let val: Vec<&Block> = val_idx.iter().map(|&i| &blocks[i]).collect();
    let mut train_idx = train_idx.to_vec();

    let mut velocity: Vec<Vec<f32>> = model.params().iter().map(|p| vec![0.0; p.len()]).collect();
    let lr = config.learning_rate as f32;
    let mu = config.momentum as f32;
    let mut history = TrainHistory::default();

    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for chunk in train_idx.chunks(config.batch_size) {
            let batch: Vec<&Block> = chunk.iter().map(|&i| &blocks[i]).collect();
            let out = backprop_step(&model, &batch, &mut rng)?;
            loss_sum += out.mean_loss * batch.len() as f64;
            correct += out.correct;
            for ((param, vel), grad) in model
                .params_mut()
                .into_iter()
                .zip(velocity.iter_mut())
                .zip(&out.grads.tensors)
            {
                for ((p, v), &g) in param.iter_mut().zip(vel.iter_mut()).zip(grad) {
                    *v = mu * *v - lr * g;
                    *p += *v;
                }
            }
        }
        let n = train_idx.len() as f64;
        history.train_loss.push(loss_sum / n);
        history.train_accuracy.push(correct as f64 / n);
        let val_acc = (!val.is_empty()).then(|| {
            let hits = val
                .par_iter()
                .filter(|b| matches!(predict(&model, b), Ok((t, _)) if t == b.label))
                .count();
            hits as f64 / val.len() as f64
        });
        history.validation_accuracy.push(val_acc);
        log::info!(
            "epoch {}: loss {:.4} train acc {:.3} val acc {}",
            epoch + 1,
            loss_sum / n,
            correct as f64 / n,
            val_acc.map_or("-".to_string(), |v| format!("{v:.3}"))
        );
    }
    model.validate()?;
    Ok((model, history))
}

/// Class and probabilities for one block, dropout disabled.
pub fn predict(model: &CnnModel<f32>, block: &Block) -> Result<(Tissue, [f32; 3]), CnnError> {
    if block.patch.len() != model.input.len() || block.side != model.input.h {
        return Err(CnnError::ShapeMismatch(format!(
            "block side {} for model input {}",
            block.side, model.input
        )));
    }
    let probs = model.forward(&block_tensor(block))?;
    let probs: [f32; 3] = probs
        .try_into()
        .map_err(|_| CnnError::ShapeMismatch("model does not output 3 classes".into()))?;
    Ok((Tissue::from_index(argmax(&probs)).unwrap(), probs))
}

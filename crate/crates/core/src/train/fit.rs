use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tape};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::train::early::EarlyStopping;
use crate::train::loss::{cce_loss, one_hot};
use crate::train::model::{stack_images, Layer, ModelGraph};
use crate::train::optim::{adam_step, AdamConfig, AdamState};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 150, batch_size: 16, adam: AdamConfig::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy of the train-mode (dropout active) predictions seen while fitting.
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were restored.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl History {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("epoch\ttrain_loss\ttrain_accuracy\tval_loss\tval_accuracy\n");
        for r in &self.epochs {
            s.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
                r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy
            ));
        }
        s
    }
}

/// Parameter values and batch-norm statistics; enough to restore a model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSnapshot<T> {
    params: ParamStore<T>,
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> ModelSnapshot<T> {
    pub fn capture(model: &ModelGraph<T>) -> Self {
        Self { params: model.params.clone(), layers: model.layers.clone() }
    }

    pub fn restore(&self, model: &mut ModelGraph<T>) {
        model.params = self.params.clone();
        model.layers = self.layers.clone();
    }
}

/// Mean loss and accuracy of `samples` in inference mode.
pub fn evaluate_loss<T: Scalar>(model: &mut ModelGraph<T>, samples: &[Sample<T>]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for chunk in samples.chunks(64) {
        let refs: Vec<&Sample<T>> = chunk.iter().collect();
        let probs = model.predict_proba(&refs)?;
        let labels: Vec<usize> = chunk.iter().map(|s| s.label).collect();
        let targets = one_hot(&labels, model.num_classes)?;
        loss += cce_loss(&probs, &targets)?.to_f64_lossy() * chunk.len() as f64;
        correct += count_correct(&probs, &labels);
    }
    let n = samples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    row.iter().enumerate().fold(0, |best, (i, &v)| if v > row[best] { i } else { best })
}

pub(crate) fn predicted_classes<T: Scalar>(probs: &crate::Tensor<T>) -> Vec<usize> {
    let c = *probs.shape().last().unwrap();
    probs.data().chunks(c).map(argmax).collect()
}

fn count_correct<T: Scalar>(probs: &crate::Tensor<T>, labels: &[usize]) -> usize {
    predicted_classes(probs).iter().zip(labels).filter(|(p, l)| p == l).count()
}

/// Minibatch index groups for one epoch. A trailing batch of one is merged
/// into its predecessor so batch statistics stay defined.
fn minibatches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut batches: Vec<&[usize]> = order.chunks(batch_size).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        batches.pop();
        let n = batches.len();
        let start = (n - 1) * batch_size;
        batches[n - 1] = &order[start..];
    }
    batches
}

/// Fits `model` with Adam on shuffled minibatches, validating after every
/// epoch. Stops when validation loss has not improved for the stopper's
/// patience and restores the weights of the best validation epoch.
pub fn train_loop<T: Scalar>(
    model: &mut ModelGraph<T>,
    train: &[Sample<T>],
    val: &[Sample<T>],
    config: &TrainConfig,
    stopper: &mut EarlyStopping<ModelSnapshot<T>>,
    rng: &mut SeededRng,
) -> Result<History> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data("training needs non-empty train and validation sets".into()));
    }
    if config.batch_size == 0 || config.batch_size > train.len() {
        return Err(Error::Parameter(format!("batch size {} must be in [1, {}]", config.batch_size, train.len())));
    }
    let mut history = History::default();
    let mut adam = AdamState::new(config.adam);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in minibatches(&order, config.batch_size) {
            let refs: Vec<&Sample<T>> = batch.iter().map(|&i| &train[i]).collect();
            let labels: Vec<usize> = refs.iter().map(|s| s.label).collect();
            let mut tape = Tape::new();
            let x = tape.constant(stack_images(&refs)?);
            let trace = model.forward(&mut tape, x, Mode::Train, rng)?;
            let probs = tape.softmax_last(trace.logits)?;
            let loss = tape.cce_loss(probs, one_hot(&labels, model.num_classes)?)?;
            tape.backward_into(loss, &mut model.params)?;
            adam_step(&mut model.params, &mut adam)?;
            loss_sum += tape.value(loss).item()?.to_f64_lossy() * batch.len() as f64;
            correct += count_correct(tape.value(probs), &labels);
        }
        let (val_loss, val_accuracy) = evaluate_loss(model, val)?;
        let n = train.len() as f64;
        let record =
            EpochRecord { epoch, train_loss: loss_sum / n, train_accuracy: correct as f64 / n, val_loss, val_accuracy };
        log::debug!("{record:?}");
        history.epochs.push(record);
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("validation loss diverged at epoch {epoch}")));
        }
        if stopper.observe(epoch, val_loss, || ModelSnapshot::capture(model)) {
            history.stopped_early = epoch < config.epochs;
            break;
        }
    }
    if let Some(best) = stopper.best_snapshot() {
        best.restore(model);
        history.best_epoch = stopper.best_epoch();
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_lesion_dataset, SynthSpec};
    use crate::train::model::build_mininet_sized;

    fn tiny_data() -> Vec<Sample<f64>> {
        let spec = SynthSpec { n_per_class: 4, image_size: 8, patch_size: 3, noise_std: 0.05 };
        synth_lesion_dataset(&spec, &mut SeededRng::new(1)).unwrap()
    }

    #[test]
    fn batches_never_end_with_one() {
        let order: Vec<usize> = (0..9).collect();
        let b = minibatches(&order, 4);
        assert_eq!(b.iter().map(|b| b.len()).collect::<Vec<_>>(), vec![4, 5]);
        let b = minibatches(&order, 3);
        assert_eq!(b.len(), 3);
    }

    #[test]
    fn zero_epochs_keeps_initial_weights() {
        let data = tiny_data();
        let mut model = build_mininet_sized::<f64>(2, 8, None, &mut SeededRng::new(2)).unwrap();
        let before = model.clone();
        let cfg = TrainConfig { epochs: 0, batch_size: 4, ..Default::default() };
        let h = train_loop(&mut model, &data, &data, &cfg, &mut EarlyStopping::new(3), &mut SeededRng::new(0)).unwrap();
        assert!(h.epochs.is_empty());
        assert_eq!(model, before);
    }

    #[test]
    fn batch_larger_than_train_set() {
        let data = tiny_data();
        let mut model = build_mininet_sized::<f64>(2, 8, None, &mut SeededRng::new(2)).unwrap();
        let cfg = TrainConfig { epochs: 1, batch_size: 100, ..Default::default() };
        let r = train_loop(&mut model, &data, &data, &cfg, &mut EarlyStopping::new(3), &mut SeededRng::new(0));
        assert!(matches!(r, Err(Error::Parameter(_))));
    }

    #[test]
    fn restored_weights_match_best_validation_loss() {
        let data = tiny_data();
        let mut model = build_mininet_sized::<f64>(2, 8, None, &mut SeededRng::new(2)).unwrap();
        let cfg = TrainConfig { epochs: 6, batch_size: 4, ..Default::default() };
        let mut stopper = EarlyStopping::new(2);
        let h = train_loop(&mut model, &data, &data, &cfg, &mut stopper, &mut SeededRng::new(5)).unwrap();
        let best = h.epochs.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
        let (loss, _) = evaluate_loss(&mut model, &data).unwrap();
        assert!((loss - best).abs() < 1e-12, "{loss} vs {best}");
        assert_eq!(h.epochs[h.best_epoch.unwrap() - 1].val_loss, best);
    }

    #[test]
    fn identical_seeds_identical_trajectories() {
        let data = tiny_data();
        let run = || {
            let mut model = build_mininet_sized::<f64>(2, 8, None, &mut SeededRng::new(2)).unwrap();
            let cfg = TrainConfig { epochs: 2, batch_size: 4, ..Default::default() };
            let h =
                train_loop(&mut model, &data, &data, &cfg, &mut EarlyStopping::new(5), &mut SeededRng::new(5)).unwrap();
            (model, h)
        };
        assert_eq!(run(), run());
    }
}

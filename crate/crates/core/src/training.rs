//! Adam optimization, cross-entropy loss, the train/validate loop with
//! best-validation checkpointing, and classification metrics.

use crate::data::container::{read_container, write_container, TensorEntry};
use crate::data::loader::Sample;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::layers::{Param, Parameterized, Phase};
use crate::models::{positive_probabilities, Model};
use crate::rng::Rng;
use crate::tensor::{NDTensor, Scalar};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Mean over the batch of -log softmax(logits)[label], stabilized by
/// max-subtraction; also returns d(loss)/d(logits) = (softmax - onehot)/N.
pub fn cross_entropy<T: Scalar>(
    logits: &NDTensor<T>,
    labels: &[usize],
) -> Result<(T, NDTensor<T>)> {
    if logits.rank() != 2 {
        return Err(Error::Shape("cross entropy expects [N,C] logits".into()));
    }
    let (n, c) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {n} logit rows",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Data(format!(
            "label {bad} out of range for {c} classes"
        )));
    }
    let nf = T::of_f64(n as f64);
    let mut grad = logits.clone();
    let mut loss = T::zero();
    for (row_idx, row) in grad.data_mut().chunks_mut(c).enumerate() {
        let mut max = row[0];
        for &v in row.iter() {
            if v > max {
                max = v;
            }
        }
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        let label = labels[row_idx];
        // -log softmax[label] = -(logit - max - ln z)
        loss += z.ln() - (row[label].ln());
        for (j, v) in row.iter_mut().enumerate() {
            let p = *v / z;
            let onehot = if j == label { T::one() } else { T::zero() };
            *v = (p - onehot) / nf;
        }
    }
    Ok((loss / nf, grad))
}

/// Adam with bias correction. Moment tensors are keyed by parameter name,
/// so the optimizer follows the model's stable visiting order.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: BTreeMap<String, (NDTensor<T>, NDTensor<T>)>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over every parameter of `model` using its accumulated
    /// gradients. Non-finite gradients abort with a diagnostic.
    pub fn step(&mut self, model: &mut dyn Parameterized<T>) -> Result<()> {
        let mut bad: Option<String> = None;
        model.visit_params(&mut |name, p| {
            if bad.is_none() && p.grad.data().iter().any(|g| !g.is_finite()) {
                bad = Some(name.to_string());
            }
        });
        if let Some(name) = bad {
            return Err(Error::Training(format!(
                "non-finite gradient in '{name}' at step {}",
                self.step + 1
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let lr = T::of_f64(self.lr);
        let b1 = T::of_f64(self.beta1);
        let b2 = T::of_f64(self.beta2);
        let eps = T::of_f64(self.eps);
        let bc1 = T::one() - T::of_f64(self.beta1.powi(t));
        let bc2 = T::one() - T::of_f64(self.beta2.powi(t));
        let moments = &mut self.moments;
        let mut err: Option<Error> = None;
        model.visit_params(&mut |name, p: &mut Param<T>| {
            if err.is_some() {
                return;
            }
            let (m, v) = moments.entry(name.to_string()).or_insert_with(|| {
                let zeros = NDTensor::zeros(p.value.shape()).expect("param shape");
                (zeros.clone(), zeros)
            });
            if m.shape() != p.value.shape() {
                err = Some(Error::Shape(format!(
                    "optimizer state for '{name}' has shape {:?}, parameter {:?}",
                    m.shape(),
                    p.value.shape()
                )));
                return;
            }
            let one = T::one();
            for i in 0..p.value.len() {
                let g = p.grad.data()[i];
                let mi = b1 * m.data()[i] + (one - b1) * g;
                let vi = b2 * v.data()[i] + (one - b2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                let cur = p.value.data()[i];
                p.value.data_mut()[i] = cur - lr * m_hat / (v_hat.sqrt() + eps);
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        Ok(())
    }
}

/// Confusion counts and the derived rates, positive class = intoxicated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

impl Metrics {
    /// Rates from raw confusion counts; undefined ratios are reported as 0.
    pub fn from_confusion(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let total = tp + fp + tn + fn_;
        let ratio = |num: usize, den: usize| if den > 0 { num as f64 / den as f64 } else { 0.0 };
        Metrics {
            accuracy: ratio(tp + tn, total),
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            true_pos: tp,
            false_pos: fp,
            true_neg: tn,
            false_neg: fn_,
        }
    }
}

/// Decision rule shared everywhere: intoxicated iff p > 0.5 (a tie goes to
/// sober).
pub fn decide(p_intoxicated: f64) -> usize {
    usize::from(p_intoxicated > 0.5)
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1,
            batch_size: 2,
            lr: 1e-4,
            seed: 0,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
}

/// Stacks samples into one batch tensor [B, ...sample shape].
fn stack_batch<T: Scalar>(samples: &[&Sample<T>]) -> Result<(NDTensor<T>, Vec<usize>)> {
    let first_shape = samples[0].input.shape();
    let mut shape = vec![samples.len()];
    shape.extend_from_slice(first_shape);
    let mut data = Vec::with_capacity(samples.len() * samples[0].input.len());
    let mut labels = Vec::with_capacity(samples.len());
    for s in samples {
        if s.input.shape() != first_shape {
            return Err(Error::Shape(format!(
                "sample '{}' shape {:?} differs from batch shape {first_shape:?}",
                s.id,
                s.input.shape()
            )));
        }
        data.extend_from_slice(s.input.data());
        labels.push(s.label);
    }
    Ok((NDTensor::from_vec(&shape, data)?, labels))
}

/// Evaluates a model on a split: per-sample positive-class probabilities
/// plus confusion metrics. Eval mode, deterministic, order-insensitive
/// metric aggregation.
pub fn evaluate<T: Scalar>(
    model: &mut Model<T>,
    samples: &[Sample<T>],
    batch_size: usize,
) -> Result<(Metrics, Vec<(String, f64)>)> {
    if samples.is_empty() {
        return Err(Error::Usage("evaluate called on an empty split".into()));
    }
    let mut rng = Rng::from_seed(0); // eval path never draws from it
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    let mut probs_out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&Sample<T>> = chunk.iter().collect();
        let (batch, labels) = stack_batch(&refs)?;
        let logits = model.forward(&batch, Phase::Eval, &mut rng)?;
        let probs = positive_probabilities(&logits)?;
        for ((sample, label), p) in refs.iter().zip(labels).zip(probs) {
            let pred = decide(p);
            match (pred, label) {
                (1, 1) => tp += 1,
                (1, 0) => fp += 1,
                (0, 0) => tn += 1,
                (0, 1) => fn_ += 1,
                _ => unreachable!(),
            }
            probs_out.push((sample.id.clone(), p));
        }
    }
    Ok((Metrics::from_confusion(tp, fp, tn, fn_), probs_out))
}

/// Saves every parameter and buffer of a model plus the recorded best
/// validation accuracy into a tensor container.
pub fn save_checkpoint<T: Scalar>(model: &mut Model<T>, path: &Path, best_val_acc: f64) -> Result<()> {
    let mut entries: Vec<(String, TensorEntry)> = Vec::new();
    model.visit_params(&mut |name, p: &mut Param<T>| {
        entries.push((format!("param.{name}"), TensorEntry::wrap(p.value.clone())));
    });
    model.visit_buffers(&mut |name, t: &mut NDTensor<T>| {
        entries.push((format!("buffer.{name}"), TensorEntry::wrap(t.clone())));
    });
    entries.push((
        "meta.best_val_acc".to_string(),
        TensorEntry::F64(NDTensor::from_vec(&[1], vec![best_val_acc])?),
    ));
    write_container(path, &entries)
}

/// Restores parameters and buffers by name; returns the recorded best
/// validation accuracy. Every model tensor must be present with matching
/// shape and dtype.
pub fn load_checkpoint<T: Scalar>(model: &mut Model<T>, path: &Path) -> Result<f64> {
    let entries = read_container(path)?;
    let mut map: BTreeMap<String, TensorEntry> = entries.into_iter().collect();
    let mut err: Option<Error> = None;
    let mut restore = |name: String, dst: &mut NDTensor<T>| {
        if err.is_some() {
            return;
        }
        match map.remove(&name) {
            None => err = Some(Error::Format(format!("checkpoint missing '{name}'"))),
            Some(entry) => match entry.into_tensor::<T>() {
                Err(e) => err = Some(Error::Format(format!("checkpoint '{name}': {e}"))),
                Ok(t) => {
                    if t.shape() != dst.shape() {
                        err = Some(Error::Format(format!(
                            "checkpoint '{name}' has shape {:?}, model expects {:?}",
                            t.shape(),
                            dst.shape()
                        )));
                    } else {
                        *dst = t;
                    }
                }
            },
        }
    };
    model.visit_params(&mut |name, p: &mut Param<T>| restore(format!("param.{name}"), &mut p.value));
    model.visit_buffers(&mut |name, t: &mut NDTensor<T>| restore(format!("buffer.{name}"), t));
    if let Some(e) = err {
        return Err(e);
    }
    let best = map
        .remove("meta.best_val_acc")
        .ok_or_else(|| Error::Format("checkpoint missing 'meta.best_val_acc'".into()))?;
    let best = best.into_tensor::<f64>()?;
    if let Some(extra) = map.keys().next() {
        return Err(Error::Format(format!(
            "checkpoint has unexpected entry '{extra}'"
        )));
    }
    Ok(best.data()[0])
}

/// Epoch-shuffled minibatch training with per-epoch validation and
/// strict-improvement checkpointing (ties keep the earlier epoch).
///
/// A trailing batch of a single sample is skipped so batch-norm training
/// statistics stay well-defined for every model.
pub fn train_loop<T: Scalar>(
    model: &mut Model<T>,
    data: &Dataset<T>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::Usage(
            "training requires non-empty train and val splits".into(),
        ));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Usage("batch size must be >= 1".into()));
    }
    let mut rng = Rng::from_seed(cfg.seed);
    let mut adam = Adam::new(cfg.lr);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best_val_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0f64;
        let mut seen = 0usize;
        let mut correct = 0usize;
        for batch_ids in order.chunks(cfg.batch_size) {
            if batch_ids.len() == 1 && cfg.batch_size > 1 {
                continue;
            }
            let refs: Vec<&Sample<T>> = batch_ids.iter().map(|&i| &data.train[i]).collect();
            let (batch, labels) = stack_batch(&refs)?;
            model.zero_grads();
            let logits = model.forward(&batch, Phase::Train, &mut rng)?;
            let (loss, grad) = cross_entropy(&logits, &labels)?;
            model.backward(&grad)?;
            adam.step(model)?;

            loss_sum += loss.as_f64() * labels.len() as f64;
            seen += labels.len();
            for (p, &label) in positive_probabilities(&logits)?.iter().zip(&labels) {
                if decide(*p) == label {
                    correct += 1;
                }
            }
        }
        if seen == 0 {
            return Err(Error::Usage(
                "no trainable batches (train split smaller than batch size?)".into(),
            ));
        }
        let (val_metrics, _) = evaluate(model, &data.val, cfg.batch_size)?;
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_acc: correct as f64 / seen as f64,
            val_acc: val_metrics.accuracy,
        };
        if stats.val_acc > best_val_acc {
            best_val_acc = stats.val_acc;
            best_epoch = epoch;
            if let Some(path) = &cfg.checkpoint {
                save_checkpoint(model, path, best_val_acc).map_err(|e| {
                    Error::Training(format!(
                        "checkpoint write failed after epoch {epoch}: {e}"
                    ))
                })?;
            }
        }
        history.push(stats);
    }
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_val_acc,
    })
}

/// History CSV: `epoch,train_loss,train_acc,val_acc` with shortest
/// round-trip float formatting.
pub fn write_history(history: &[EpochStats], path: &Path) -> Result<()> {
    let mut out = String::from("epoch,train_loss,train_acc,val_acc\n");
    for h in history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            h.epoch, h.train_loss, h.train_acc, h.val_acc
        ));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ArchConfig, ArchName};

    #[test]
    fn uniform_logits_loss_is_ln2() {
        let logits = NDTensor::<f64>::zeros(&[1, 2]).unwrap();
        let (loss, grad) = cross_entropy(&logits, &[1]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        // grad = (softmax - onehot)/N = [0.5, -0.5]
        assert!((grad.data()[0] - 0.5).abs() < 1e-12);
        assert!((grad.data()[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let logits = NDTensor::<f64>::from_vec(&[1, 2], vec![1000.0, -1000.0]).unwrap();
        let (loss, grad) = cross_entropy(&logits, &[0]).unwrap();
        assert!(loss.is_finite());
        assert!(loss.abs() < 1e-9);
        assert!(grad.data().iter().all(|g| g.is_finite()));
    }

    #[test]
    fn invalid_label_rejected() {
        let logits = NDTensor::<f64>::zeros(&[1, 2]).unwrap();
        assert!(matches!(cross_entropy(&logits, &[2]), Err(Error::Data(_))));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut rng = Rng::from_seed(3);
        let logits = NDTensor::<f64>::rand_uniform(&mut rng, &[3, 2], -2.0, 2.0).unwrap();
        let labels = [0usize, 1, 1];
        let (_, grad) = cross_entropy(&logits, &labels).unwrap();
        let mut f = |point: &[f64]| -> Result<f64> {
            let l = NDTensor::from_vec(&[3, 2], point.to_vec())?;
            Ok(cross_entropy(&l, &labels)?.0)
        };
        let numeric = crate::verify::finite_diff(&mut f, logits.data(), 1e-6).unwrap();
        for (a, n) in grad.data().iter().zip(&numeric) {
            assert!(
                crate::verify::rel_err(*a, *n) <= 1e-8,
                "analytic {a} vs numeric {n}"
            );
        }
    }

    /// Shared tiny model for optimizer tests.
    fn tiny_model(seed: u64) -> Model<f64> {
        let cfg = ArchConfig {
            input_dim: 4,
            lstm_hidden: 3,
            ..Default::default()
        };
        let mut rng = Rng::from_seed(seed);
        Model::build(ArchName::FeatLstm, &cfg, &mut rng).unwrap()
    }

    #[test]
    fn adam_first_step_has_lr_magnitude() {
        // With fresh moments, |update| = lr * |g| / (|g| + eps') ~ lr.
        let mut model = tiny_model(1);
        let mut before = Vec::new();
        model.visit_params(&mut |_, p| before.extend_from_slice(p.value.data()));
        model.visit_params(&mut |_, p| {
            for (i, g) in p.grad.data_mut().iter_mut().enumerate() {
                *g = if i % 2 == 0 { 0.5 } else { -2.0 };
            }
        });
        let mut adam = Adam::new(1e-3);
        adam.step(&mut model).unwrap();
        let mut after = Vec::new();
        model.visit_params(&mut |_, p| after.extend_from_slice(p.value.data()));
        let mut i = 0usize;
        for (b, a) in before.iter().zip(&after) {
            let update = a - b;
            let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
            assert!(
                (update - sign * 1e-3).abs() < 1e-6,
                "coordinate {i}: update {update}"
            );
            i += 1;
        }
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut model = tiny_model(2);
        let mut before = Vec::new();
        model.visit_params(&mut |_, p| before.extend_from_slice(p.value.data()));
        let mut adam = Adam::new(1e-2);
        adam.step(&mut model).unwrap();
        let mut after = Vec::new();
        model.visit_params(&mut |_, p| after.extend_from_slice(p.value.data()));
        assert_eq!(before, after);
    }

    #[test]
    fn nan_gradient_aborts() {
        let mut model = tiny_model(3);
        model.visit_params(&mut |_, p| {
            p.grad.data_mut()[0] = f64::NAN;
        });
        let mut adam = Adam::new(1e-3);
        assert!(matches!(adam.step(&mut model), Err(Error::Training(_))));
    }

    #[test]
    fn metrics_from_confusion() {
        let m = Metrics::from_confusion(9, 1, 7, 3);
        assert!((m.precision - 0.9).abs() < 1e-12);
        assert!((m.recall - 0.75).abs() < 1e-12);
        assert!((m.accuracy - 0.8).abs() < 1e-12);
    }

    #[test]
    fn all_positive_predictor_arithmetic() {
        // 306 sober + 642 intoxicated, everything predicted positive.
        let m = Metrics::from_confusion(642, 306, 0, 0);
        assert!((m.recall - 1.0).abs() < 1e-12);
        assert!((m.accuracy - 642.0 / 948.0).abs() < 1e-12);
    }

    #[test]
    fn decision_threshold_ties_go_sober() {
        assert_eq!(decide(0.5), 0);
        assert_eq!(decide(0.5 + 1e-9), 1);
        assert_eq!(decide(1.0), 1);
    }
}

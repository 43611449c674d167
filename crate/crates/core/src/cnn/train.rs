use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{Grads, Network};
use super::scalar::Scalar;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// L2 factor applied to weights, not biases.
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Stop after this many epochs without a lower dev loss; 0 disables.
    pub patience: usize,
    /// Stop once an epoch classifies every training sample correctly. The
    /// dev split, if any, still selects the returned weights.
    pub stop_when_perfect: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 8,
            epochs: 300,
            seed: 0,
            patience: 10,
            stop_when_perfect: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.learning_rate, self.momentum, self.weight_decay]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if !positive || self.momentum >= 1.0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid(format!(
                "invalid training configuration {self:?}"
            )));
        }
        Ok(())
    }
}

/// A labelled network input, row-major `len × bins`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<T> {
    pub input: Vec<T>,
    pub label: usize,
}

/// Momentum buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Sgd<T> {
    velocity: Grads<T>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(net: &Network<T>) -> Self {
        Sgd {
            velocity: Grads::zeros_like(net),
        }
    }

    /// `v = m v - lr (g + decay w)`, `w += v`; biases skip the decay term.
    pub fn apply(&mut self, net: &mut Network<T>, grads: &Grads<T>, cfg: &TrainConfig) {
        let lr = T::from_f64(cfg.learning_rate);
        let mu = T::from_f64(cfg.momentum);
        let decay = T::from_f64(cfg.weight_decay);
        for ((layer, (gw, gb)), (vw, vb)) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.velocity.layers)
        {
            for ((w, &g), v) in layer.weights.iter_mut().zip(gw).zip(vw.iter_mut()) {
                *v = mu * *v - lr * (g + decay * *w);
                *w += *v;
            }
            for ((b, &g), v) in layer.bias.iter_mut().zip(gb).zip(vb.iter_mut()) {
                *v = mu * *v - lr * g;
                *b += *v;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub dev_loss: Option<f64>,
    pub dev_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochStats>,
    /// Epoch whose weights were returned (1-based).
    pub selected_epoch: usize,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.history.len()
    }

    pub fn final_stats(&self) -> Option<&EpochStats> {
        self.history.last()
    }
}

struct BatchOutcome<T> {
    grads: Grads<T>,
    loss: f64,
    correct: usize,
}

fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        })
        .0
}

fn sample_grads<T: Scalar>(net: &Network<T>, s: &Sample<T>) -> Result<BatchOutcome<T>> {
    let fwd = net.forward(&s.input)?;
    let mut grads = Grads::zeros_like(net);
    net.backward(&fwd, s.label, &mut grads, false);
    Ok(BatchOutcome {
        loss: Network::loss(&fwd, s.label),
        correct: usize::from(argmax(&fwd.probs) == s.label),
        grads,
    })
}

/// Per-sample gradients summed in batch order, so the result does not
/// depend on how work is scheduled.
fn batch_grads<T: Scalar>(net: &Network<T>, batch: &[&Sample<T>]) -> Result<BatchOutcome<T>> {
    #[cfg(feature = "parallel")]
    let parts: Vec<BatchOutcome<T>> = {
        use rayon::prelude::*;
        batch
            .par_iter()
            .map(|s| sample_grads(net, s))
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<BatchOutcome<T>> = batch
        .iter()
        .map(|s| sample_grads(net, s))
        .collect::<Result<_>>()?;
    let mut total = BatchOutcome {
        grads: Grads::zeros_like(net),
        loss: 0.0,
        correct: 0,
    };
    for p in parts {
        total.grads.add(&p.grads);
        total.loss += p.loss;
        total.correct += p.correct;
    }
    Ok(total)
}

fn check_samples<T: Scalar>(net: &Network<T>, samples: &[Sample<T>]) -> Result<()> {
    let classes = net.num_classes();
    for s in samples {
        if s.label >= classes {
            return Err(Error::invalid(format!(
                "label {} outside {classes} classes",
                s.label
            )));
        }
        if s.input.len() != net.input_shape().size() {
            return Err(Error::Dimension {
                expected: net.input_shape().size(),
                actual: s.input.len(),
            });
        }
    }
    Ok(())
}

/// One SGD step on the mean cross-entropy of `batch`. Returns the mean loss.
pub fn backward_step<T: Scalar>(
    net: &mut Network<T>,
    sgd: &mut Sgd<T>,
    batch: &[Sample<T>],
    cfg: &TrainConfig,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    check_samples(net, batch)?;
    let refs: Vec<&Sample<T>> = batch.iter().collect();
    let mut out = batch_grads(net, &refs)?;
    let loss = out.loss / batch.len() as f64;
    if !loss.is_finite() {
        return Err(Error::TrainingDiverged {
            epoch: 0,
            batch: 0,
            loss,
        });
    }
    out.grads.scale(T::from_f64(1.0 / batch.len() as f64));
    sgd.apply(net, &out.grads, cfg);
    Ok(loss)
}

/// Mean loss and accuracy without updating anything.
pub fn evaluate<T: Scalar>(net: &Network<T>, samples: &[Sample<T>]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let outcomes: Vec<(f64, bool)> = {
        let f = |s: &Sample<T>| -> Result<(f64, bool)> {
            let fwd = net.forward(&s.input)?;
            Ok((Network::loss(&fwd, s.label), argmax(&fwd.probs) == s.label))
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            samples.par_iter().map(f).collect::<Result<_>>()?
        }
        #[cfg(not(feature = "parallel"))]
        {
            samples.iter().map(f).collect::<Result<_>>()?
        }
    };
    let n = samples.len() as f64;
    let loss = outcomes.iter().map(|o| o.0).sum::<f64>() / n;
    let acc = outcomes.iter().filter(|o| o.1).count() as f64 / n;
    Ok((loss, acc))
}

/// Mini-batch SGD over seeded shuffles. With a dev split the weights with
/// the lowest dev loss are kept; otherwise the final weights.
pub fn train<T: Scalar>(
    net: &mut Network<T>,
    train_set: &[Sample<T>],
    dev_set: Option<&[Sample<T>]>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let first = train_set[0].label;
    if train_set.iter().all(|s| s.label == first) {
        return Err(Error::invalid("training data contains a single class"));
    }
    check_samples(net, train_set)?;
    let dev_set = dev_set.filter(|d| !d.is_empty());
    if let Some(dev) = dev_set {
        check_samples(net, dev)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sgd = Sgd::new(net);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Network<T>)> = None;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Sample<T>> = chunk.iter().map(|&i| &train_set[i]).collect();
            let mut out = batch_grads(net, &batch)?;
            let mean = out.loss / batch.len() as f64;
            if !mean.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    batch: b + 1,
                    loss: mean,
                });
            }
            loss_sum += out.loss;
            correct += out.correct;
            out.grads.scale(T::from_f64(1.0 / batch.len() as f64));
            sgd.apply(net, &out.grads, cfg);
        }
        let n = train_set.len() as f64;
        let mut stats = EpochStats {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            dev_loss: None,
            dev_accuracy: None,
        };
        let perfect = stats.train_accuracy == 1.0;
        let mut stale = false;
        if let Some(dev) = dev_set {
            let (loss, acc) = evaluate(net, dev)?;
            stats.dev_loss = Some(loss);
            stats.dev_accuracy = Some(acc);
            if best.as_ref().is_none_or(|b| loss < b.0) {
                best = Some((loss, epoch, net.clone()));
            }
            let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
            stale = cfg.patience > 0 && epoch - best_epoch >= cfg.patience;
        }
        history.push(stats);
        if (cfg.stop_when_perfect && perfect) || stale {
            break;
        }
    }
    let selected_epoch = match best {
        Some((_, epoch, weights)) => {
            *net = weights;
            epoch
        }
        None => history.len(),
    };
    Ok(TrainReport {
        history,
        selected_epoch,
    })
}

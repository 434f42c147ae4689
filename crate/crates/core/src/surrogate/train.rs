//! Minibatch training loop.

use ndarray::{s, Axis};
use rand::seq::SliceRandom;

use super::{init_network, optimizer_step, Head, MeanConstraint, OptimizerKind, OptimizerState, SurrogateNetwork};
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::init::MeanInit;
use crate::rng::{stream, StreamKind};
use crate::scalar::Scalar;

/// Rows per forward pass when evaluating a whole dataset.
const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    /// Number of hidden layers.
    pub depth: usize,
    pub width: usize,
    pub sigma_m2: T,
    pub sigma_b2: T,
    pub mean_init: MeanInit,
    pub kappa: T,
    pub head: Head,
    pub optimizer: OptimizerKind,
    pub constraint: MeanConstraint,
    pub learning_rate: T,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub variance_path: bool,
    /// Full-set metrics are computed on epochs divisible by this and on the
    /// last epoch; other history entries hold `NaN`.
    pub eval_every: usize,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            depth: 10,
            width: 256,
            sigma_m2: T::lit(0.5),
            sigma_b2: T::lit(1e-3),
            mean_init: MeanInit::SymmetricBernoulli,
            kappa: T::one(),
            head: Head::Softmax,
            optimizer: OptimizerKind::Adam,
            constraint: MeanConstraint::Projection,
            learning_rate: T::lit(2e-4),
            batch_size: 64,
            epochs: 20,
            seed: 0,
            variance_path: true,
            eval_every: 1,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= T::zero()) || self.learning_rate.is_infinite() {
            return Err(invalid(format!(
                "learning rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be >= 1"));
        }
        if self.eval_every == 0 {
            return Err(invalid("eval_every must be >= 1"));
        }
        if self.width == 0 && self.depth > 0 {
            return Err(invalid("width must be >= 1"));
        }
        Ok(())
    }

    /// `[input, width × depth, outputs]`.
    pub fn dims(&self, input_dim: usize, n_classes: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend(std::iter::repeat_n(self.width, self.depth));
        dims.push(self.head.outputs(n_classes));
        dims
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// 0 is the untrained network.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    /// `NaN` without a test set.
    pub test_acc: f64,
}

impl EpochMetrics {
    fn skipped(epoch: usize) -> Self {
        Self {
            epoch,
            train_loss: f64::NAN,
            train_acc: f64::NAN,
            test_acc: f64::NAN,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub history: Vec<EpochMetrics>,
    pub network: SurrogateNetwork<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

/// Mean loss and accuracy over a whole dataset.
pub fn evaluate<T: Scalar>(net: &SurrogateNetwork<T>, ds: &Dataset<T>) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset("nothing to evaluate".into()));
    }
    let (mut loss, mut correct) = (0.0, 0usize);
    for start in (0..ds.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(ds.len());
        let x = ds.inputs.slice(s![start..end, ..]);
        let labels = &ds.labels[start..end];
        let z = net.logits(x)?;
        loss += net.loss_from_logits(&z, labels)?.to_f64_lossy() * (end - start) as f64;
        correct += super::predictions(net.head, &z)
            .iter()
            .zip(labels)
            .filter(|(p, l)| p == l)
            .count();
    }
    let n = ds.len() as f64;
    Ok(Evaluation {
        loss: loss / n,
        accuracy: correct as f64 / n,
    })
}

/// Accuracy of the sign-binarized network.
pub fn binarize_and_eval<T: Scalar>(net: &SurrogateNetwork<T>, ds: &Dataset<T>) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset("nothing to evaluate".into()));
    }
    let mut correct = 0usize;
    for start in (0..ds.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(ds.len());
        let p = net.binarized_predict(ds.inputs.slice(s![start..end, ..]))?;
        correct += p.iter().zip(&ds.labels[start..end]).filter(|(p, l)| p == l).count();
    }
    Ok(correct as f64 / ds.len() as f64)
}

fn metrics<T: Scalar>(
    epoch: usize,
    net: &SurrogateNetwork<T>,
    train: &Dataset<T>,
    test: Option<&Dataset<T>>,
) -> Result<EpochMetrics> {
    let tr = evaluate(net, train)?;
    let test_acc = match test {
        Some(t) => evaluate(net, t)?.accuracy,
        None => f64::NAN,
    };
    Ok(EpochMetrics {
        epoch,
        train_loss: tr.loss,
        train_acc: tr.accuracy,
        test_acc,
    })
}

pub fn train<T: Scalar>(
    config: &TrainConfig<T>,
    train: &Dataset<T>,
    test: Option<&Dataset<T>>,
) -> Result<TrainOutcome<T>> {
    train_with(config, train, test, |_| {})
}

/// Trains from a fresh network; `on_epoch` sees every history entry as it
/// is produced. Metrics are computed on the full sets.
pub fn train_with<T: Scalar>(
    config: &TrainConfig<T>,
    train: &Dataset<T>,
    test: Option<&Dataset<T>>,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset("training set".into()));
    }
    if config.head == Head::BinarySigmoid && train.n_classes != 2 {
        return Err(invalid("the binary sigmoid head needs exactly two classes"));
    }
    let dims = config.dims(train.dim(), train.n_classes);
    let mut net = init_network(
        &dims,
        config.sigma_m2,
        config.sigma_b2,
        config.mean_init,
        config.kappa,
        config.head,
        config.seed,
    )?;
    let mut state = OptimizerState::new(config.optimizer, config.constraint, &net);
    let mut history = Vec::with_capacity(config.epochs + 1);
    let first = metrics(0, &net, train, test)?;
    on_epoch(&first);
    history.push(first);

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        order.sort_unstable();
        order.shuffle(&mut stream(config.seed, epoch as u64, 0, StreamKind::Shuffle));
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let x = train.inputs.select(Axis(0), idx);
            let labels: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
            let (_, grads) = net
                .loss_and_grad_with(x.view(), &labels, config.variance_path)
                .map_err(|e| Error::Batch {
                    index: b,
                    source: Box::new(e),
                })?;
            optimizer_step(&mut state, &mut net, &grads, config.learning_rate);
        }
        let m = if epoch % config.eval_every == 0 || epoch == config.epochs {
            metrics(epoch, &net, train, test)?
        } else {
            EpochMetrics::skipped(epoch)
        };
        on_epoch(&m);
        history.push(m);
    }
    Ok(TrainOutcome { history, network: net })
}

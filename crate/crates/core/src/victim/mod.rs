//! Self-contained victim classifiers, their trainer, and bundled data.

mod dataset;
pub mod format;
mod models;

pub use dataset::{blobs2d, digit_template, digits8x8, digits8x8_split, Dataset, DIGITS_NOISE_STD};
pub use models::{softmax, MlpModel, SoftmaxModel, Trainable};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::oracle::Classifier;
use crate::rng::RngStream;

/// Any bundled trainable model.
#[derive(Debug, Clone, PartialEq)]
pub enum Victim {
    Softmax(SoftmaxModel),
    Mlp(MlpModel),
}

impl Victim {
    fn trainable(&self) -> &dyn Trainable {
        match self {
            Victim::Softmax(m) => m,
            Victim::Mlp(m) => m,
        }
    }

    fn trainable_mut(&mut self) -> &mut dyn Trainable {
        match self {
            Victim::Softmax(m) => m,
            Victim::Mlp(m) => m,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Victim::Softmax(_) => "softmax",
            Victim::Mlp(_) => "mlp",
        }
    }
}

impl Classifier for Victim {
    fn input_dim(&self) -> usize {
        self.trainable().input_dim()
    }

    fn num_classes(&self) -> usize {
        self.trainable().num_classes()
    }

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.trainable().scores(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            learning_rate: 0.1,
            batch_size: 32,
        }
    }
}

/// Mean cross-entropy over `data`.
pub fn mean_loss<M: Trainable + ?Sized>(model: &M, data: &Dataset) -> f64 {
    let total: f64 = data
        .inputs()
        .iter()
        .zip(data.labels())
        .map(|(x, &y)| model.loss(x, y))
        .sum();
    total / data.len() as f64
}

pub fn accuracy<C: Classifier + ?Sized>(model: &C, data: &Dataset) -> Result<f64> {
    let mut hits = 0;
    for (x, &y) in data.inputs().iter().zip(data.labels()) {
        if model.label(x)? == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Mini-batch gradient descent on cross-entropy with a fresh shuffle per
/// epoch. Returns the full-data mean loss after each epoch.
pub fn train<M: Trainable + ?Sized>(
    model: &mut M,
    data: &Dataset,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_dim(model.input_dim(), data.dim())?;
    if data.num_classes() > model.num_classes() {
        return Err(Error::DimensionMismatch {
            expected: model.num_classes(),
            found: data.num_classes(),
        });
    }
    if !(cfg.learning_rate > 0.0) || cfg.batch_size == 0 {
        return Err(Error::invalid("learning_rate", "rate and batch size must be positive"));
    }
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; model.params().len()];
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        for i in (1..n).rev() {
            order.swap(i, rng.below(i + 1));
        }
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let (x, y) = data.get(i);
                model.loss_grad(x, y, &mut grad);
            }
            let step = cfg.learning_rate / batch.len() as f64;
            for (p, g) in model.params_mut().iter_mut().zip(&grad) {
                *p -= step * g;
            }
        }
        let l = mean_loss(model, data);
        if !l.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        losses.push(l);
    }
    Ok(losses)
}

impl Victim {
    pub fn train(&mut self, data: &Dataset, cfg: &TrainConfig, rng: &mut RngStream) -> Result<Vec<f64>> {
        train(self.trainable_mut(), data, cfg, rng)
    }

    pub fn mean_loss(&self, data: &Dataset) -> f64 {
        mean_loss(self.trainable(), data)
    }
}

/// Two-class victim on `[0, 1]` with logits `(0, slope·(x − threshold))`.
/// Class 1 wins strictly above the threshold; the tie at the threshold
/// goes to class 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold1d {
    pub slope: f64,
    pub threshold: f64,
}

impl Default for Threshold1d {
    fn default() -> Self {
        Self {
            slope: 10.0,
            threshold: 0.8,
        }
    }
}

impl Classifier for Threshold1d {
    fn input_dim(&self) -> usize {
        1
    }

    fn num_classes(&self) -> usize {
        2
    }

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(1, x.len())?;
        Ok(softmax(&[0.0, self.slope * (x[0] - self.threshold)]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_epochs_leave_model_unchanged() {
        let data = blobs2d(10, &mut RngStream::new(0));
        let mut v = Victim::Mlp(MlpModel::init(2, 4, 2, &mut RngStream::new(1)).unwrap());
        let before = v.clone();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(v.train(&data, &cfg, &mut RngStream::new(2)).unwrap().is_empty());
        assert_eq!(v, before);
    }

    #[test]
    fn separable_blobs_are_learned() {
        let data = blobs2d(100, &mut RngStream::new(0));
        let mut v = Victim::Softmax(SoftmaxModel::zeros(2, 2));
        let cfg = TrainConfig {
            epochs: 100,
            learning_rate: 0.5,
            batch_size: 16,
        };
        v.train(&data, &cfg, &mut RngStream::new(3)).unwrap();
        assert!(accuracy(&v, &data).unwrap() >= 0.99);
    }

    #[test]
    fn training_errors() {
        let data = blobs2d(3, &mut RngStream::new(0));
        let mut v = Victim::Softmax(SoftmaxModel::zeros(3, 2));
        assert!(matches!(
            v.train(&data, &TrainConfig::default(), &mut RngStream::new(0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn threshold_victim_boundary() {
        let v = Threshold1d::default();
        assert_eq!(v.label(&[0.8]).unwrap(), 0);
        assert_eq!(v.label(&[0.800001]).unwrap(), 1);
        assert_eq!(v.label(&[0.5]).unwrap(), 0);
    }
}

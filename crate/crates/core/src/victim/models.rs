use crate::error::{check_dim, Error, Result};
use crate::oracle::Classifier;
use crate::rng::RngStream;

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
}

/// A model trained by gradient descent on a flat parameter vector.
pub trait Trainable: Classifier {
    fn logits(&self, x: &[f64]) -> Vec<f64>;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    /// Cross-entropy at `(x, y)`; its gradient is added to `grad`.
    fn loss_grad(&self, x: &[f64], y: usize, grad: &mut [f64]) -> f64;

    fn loss(&self, x: &[f64], y: usize) -> f64 {
        let l = self.logits(x);
        log_sum_exp(&l) - l[y]
    }
}

/// `softmax(W x + b)`. Parameters are stored as `[W (K×d row-major), b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxModel {
    d: usize,
    k: usize,
    params: Vec<f64>,
}

impl SoftmaxModel {
    /// All-zero weights and biases.
    pub fn zeros(d: usize, k: usize) -> Self {
        Self {
            d,
            k,
            params: vec![0.0; k * d + k],
        }
    }

    pub fn from_parts(weights: Vec<f64>, biases: Vec<f64>, d: usize) -> Result<Self> {
        let k = biases.len();
        check_dim(k * d, weights.len())?;
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("softmax parameters"));
        }
        let mut params = weights;
        params.extend(biases);
        Ok(Self { d, k, params })
    }

    pub fn weights(&self) -> &[f64] {
        &self.params[..self.k * self.d]
    }

    pub fn biases(&self) -> &[f64] {
        &self.params[self.k * self.d..]
    }
}

impl Classifier for SoftmaxModel {
    fn input_dim(&self) -> usize {
        self.d
    }

    fn num_classes(&self) -> usize {
        self.k
    }

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.d, x.len())?;
        Ok(softmax(&self.logits(x)))
    }
}

impl Trainable for SoftmaxModel {
    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let (w, b) = (self.weights(), self.biases());
        (0..self.k)
            .map(|c| {
                b[c] + w[c * self.d..(c + 1) * self.d]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .collect()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn loss_grad(&self, x: &[f64], y: usize, grad: &mut [f64]) -> f64 {
        let l = self.logits(x);
        let loss = log_sum_exp(&l) - l[y];
        let mut dl = softmax(&l);
        dl[y] -= 1.0;
        let (gw, gb) = grad.split_at_mut(self.k * self.d);
        for (c, g) in dl.iter().enumerate() {
            for (gi, xi) in gw[c * self.d..(c + 1) * self.d].iter_mut().zip(x) {
                *gi += g * xi;
            }
            gb[c] += g;
        }
        loss
    }
}

/// One ReLU hidden layer then a softmax head. Parameters are stored as
/// `[W1 (h×d), b1, W2 (K×h), b2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    d: usize,
    h: usize,
    k: usize,
    params: Vec<f64>,
}

impl MlpModel {
    /// He-scaled Gaussian weights, zero biases.
    pub fn init(d: usize, h: usize, k: usize, rng: &mut RngStream) -> Result<Self> {
        if h == 0 {
            return Err(Error::invalid("hidden", "must be at least 1"));
        }
        let mut params = Vec::with_capacity(h * d + h + k * h + k);
        let s1 = (2.0 / d as f64).sqrt();
        params.extend((0..h * d).map(|_| s1 * rng.gaussian()));
        params.extend(std::iter::repeat_n(0.0, h));
        let s2 = (2.0 / h as f64).sqrt();
        params.extend((0..k * h).map(|_| s2 * rng.gaussian()));
        params.extend(std::iter::repeat_n(0.0, k));
        Ok(Self { d, h, k, params })
    }

    pub fn from_parts(d: usize, h: usize, k: usize, params: Vec<f64>) -> Result<Self> {
        if h == 0 {
            return Err(Error::invalid("hidden", "must be at least 1"));
        }
        check_dim(h * d + h + k * h + k, params.len())?;
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mlp parameters"));
        }
        Ok(Self { d, h, k, params })
    }

    pub fn hidden(&self) -> usize {
        self.h
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let (w1, rest) = self.params.split_at(self.h * self.d);
        let (b1, rest) = rest.split_at(self.h);
        let (w2, b2) = rest.split_at(self.k * self.h);
        (w1, b1, w2, b2)
    }

    /// Hidden pre-activations and logits.
    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (w1, b1, w2, b2) = self.split();
        let z1: Vec<f64> = (0..self.h)
            .map(|i| {
                b1[i]
                    + w1[i * self.d..(i + 1) * self.d]
                        .iter()
                        .zip(x)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect();
        let logits = (0..self.k)
            .map(|c| {
                b2[c]
                    + w2[c * self.h..(c + 1) * self.h]
                        .iter()
                        .zip(&z1)
                        .map(|(w, z)| w * z.max(0.0))
                        .sum::<f64>()
            })
            .collect();
        (z1, logits)
    }
}

impl Classifier for MlpModel {
    fn input_dim(&self) -> usize {
        self.d
    }

    fn num_classes(&self) -> usize {
        self.k
    }

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.d, x.len())?;
        Ok(softmax(&self.logits(x)))
    }
}

impl Trainable for MlpModel {
    fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).1
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn loss_grad(&self, x: &[f64], y: usize, grad: &mut [f64]) -> f64 {
        let (z1, l) = self.forward(x);
        let loss = log_sum_exp(&l) - l[y];
        let mut dl = softmax(&l);
        dl[y] -= 1.0;
        let (_, _, w2, _) = self.split();
        let (h, d, k) = (self.h, self.d, self.k);
        let (gw1, rest) = grad.split_at_mut(h * d);
        let (gb1, rest) = rest.split_at_mut(h);
        let (gw2, gb2) = rest.split_at_mut(k * h);
        let mut da = vec![0.0; h];
        for c in 0..k {
            for i in 0..h {
                gw2[c * h + i] += dl[c] * z1[i].max(0.0);
                da[i] += w2[c * h + i] * dl[c];
            }
            gb2[c] += dl[c];
        }
        for i in 0..h {
            if z1[i] <= 0.0 {
                continue;
            }
            for (g, xj) in gw1[i * d..(i + 1) * d].iter_mut().zip(x) {
                *g += da[i] * xj;
            }
            gb1[i] += da[i];
        }
        loss
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_examples() {
        let m = SoftmaxModel::zeros(3, 4);
        for p in m.scores(&[0.1, 0.2, 0.3]).unwrap() {
            assert!((p - 0.25).abs() < 1e-15);
        }
        let p = softmax(&[0.0, 9f64.ln()]);
        assert!((p[0] - 0.1).abs() < 1e-15 && (p[1] - 0.9).abs() < 1e-15);
        let a = softmax(&[0.3, -1.2, 2.0]);
        let b = softmax(&[100.3, 98.8, 102.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(m.scores(&[0.0; 2]).is_err());
    }

    #[test]
    fn rejects_zero_hidden() {
        assert!(MlpModel::init(3, 0, 2, &mut RngStream::new(0)).is_err());
    }

    fn fd_check<M: Trainable>(mut m: M, x: &[f64], y: usize) {
        let mut g = vec![0.0; m.params().len()];
        m.loss_grad(x, y, &mut g);
        for i in 0..g.len() {
            let h = 1e-6;
            let p0 = m.params()[i];
            m.params_mut()[i] = p0 + h;
            let up = m.loss(x, y);
            m.params_mut()[i] = p0 - h;
            let dn = m.loss(x, y);
            m.params_mut()[i] = p0;
            let fd = (up - dn) / (2.0 * h);
            let err = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-3);
            assert!(err <= 1e-5, "param {i}: analytic {} vs fd {fd}", g[i]);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn gradients_match_finite_differences(seed in 0u64..10_000) {
            let mut rng = RngStream::new(seed);
            let x: Vec<f64> = (0..4).map(|_| rng.uniform()).collect();
            let params = (0..4 * 3 + 3).map(|_| rng.gaussian()).collect::<Vec<_>>();
            let sm = SoftmaxModel::from_parts(params[..12].to_vec(), params[12..].to_vec(), 4).unwrap();
            fd_check(sm, &x, rng.below(3));
            let mut mlp = MlpModel::init(4, 5, 3, &mut rng).unwrap();
            for p in mlp.params_mut() {
                *p += 0.1 * rng.gaussian();
            }
            fd_check(mlp, &x, rng.below(3));
        }

        #[test]
        fn scores_are_on_the_simplex(seed in 0u64..10_000, scale in 0.0f64..50.0) {
            let mut rng = RngStream::new(seed);
            let mut m = MlpModel::init(6, 4, 5, &mut rng).unwrap();
            for p in m.params_mut() {
                *p *= scale;
            }
            let x: Vec<f64> = (0..6).map(|_| rng.uniform_in(-3.0, 3.0)).collect();
            let p = m.scores(&x).unwrap();
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert_eq!(m.scores(&x).unwrap(), p);
        }
    }
}

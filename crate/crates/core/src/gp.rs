//! Gaussian-process regression with the ARD Matérn 5/2 kernel.
//!
//! The prior mean is zero. The kernel matrix `S = K + σ_n² I` is factored
//! once per change of data or hyperparameters and reused for every
//! posterior query. Hyperparameters are fitted by gradient descent on the
//! negative log marginal likelihood in log space.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;

pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-4;

pub const LENGTHSCALE_BOUNDS: (f64, f64) = (1e-3, 1e3);
pub const AMPLITUDE_BOUNDS: (f64, f64) = (1e-3, 1e3);
pub const NOISE_BOUNDS: (f64, f64) = (1e-8, 1.0);

/// Dimensions above this default to a single shared lengthscale.
pub const ARD_MAX_DIM: usize = 32;

/// Kernel hyperparameters. `lengthscales` has either one entry (shared by
/// every dimension) or one per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub theta0: f64,
    pub lengthscales: Vec<f64>,
    pub noise_var: f64,
}

impl GpHyper {
    pub fn isotropic(theta0: f64, lengthscale: f64, noise_var: f64) -> Self {
        Self {
            theta0,
            lengthscales: vec![lengthscale],
            noise_var,
        }
    }

    pub fn ard(theta0: f64, lengthscales: Vec<f64>, noise_var: f64) -> Self {
        Self {
            theta0,
            lengthscales,
            noise_var,
        }
    }

    /// ARD for `d ≤ 32`, one shared lengthscale otherwise.
    pub fn default_for(d: usize) -> Self {
        let ls = 0.5 * (d as f64).sqrt();
        if d > ARD_MAX_DIM {
            Self::isotropic(1.0, ls, 1e-3)
        } else {
            Self::ard(1.0, vec![ls; d], 1e-3)
        }
    }

    pub fn is_isotropic(&self) -> bool {
        self.lengthscales.len() == 1
    }

    fn check(&self, d: usize) -> Result<()> {
        if !(self.theta0 > 0.0) || self.lengthscales.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::invalid("theta", "kernel hyperparameters must be positive"));
        }
        if !(self.noise_var >= 0.0) {
            return Err(Error::invalid("noise_var", "must be non-negative"));
        }
        if !self.is_isotropic() {
            check_dim(d, self.lengthscales.len())?;
        }
        Ok(())
    }

    fn lengthscale(&self, j: usize) -> f64 {
        if self.is_isotropic() {
            self.lengthscales[0]
        } else {
            self.lengthscales[j]
        }
    }

    /// `[ln θ0, ln θ_1.., ln σ_n²]`
    pub fn to_log(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.lengthscales.len() + 2);
        v.push(self.theta0.ln());
        v.extend(self.lengthscales.iter().map(|l| l.ln()));
        v.push(self.noise_var.ln());
        v
    }

    /// Inverse of [`GpHyper::to_log`], clamped to the declared bounds.
    pub fn from_log(p: &[f64]) -> Self {
        let n = p.len();
        let clamp = |v: f64, (lo, hi): (f64, f64)| v.exp().clamp(lo, hi);
        Self {
            theta0: clamp(p[0], AMPLITUDE_BOUNDS),
            lengthscales: p[1..n - 1].iter().map(|&l| clamp(l, LENGTHSCALE_BOUNDS)).collect(),
            noise_var: clamp(p[n - 1], NOISE_BOUNDS),
        }
    }

    pub fn clamped(&self) -> Self {
        Self::from_log(&self.to_log())
    }
}

fn scaled_dist2(x: &[f64], y: &[f64], h: &GpHyper) -> f64 {
    x.iter()
        .zip(y)
        .enumerate()
        .map(|(j, (a, b))| {
            let l = h.lengthscale(j);
            (a - b) * (a - b) / (l * l)
        })
        .sum()
}

#[inline]
fn matern_of_r(r: f64, amp2: f64) -> f64 {
    amp2 * (-SQRT5 * r).exp() * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r)
}

/// `−(1/r)·dk/dr = θ0²·(5/3)(1 + √5 r)·e^{−√5 r}`, finite at `r = 0`.
#[inline]
fn matern_radial(r: f64, amp2: f64) -> f64 {
    amp2 * 5.0 / 3.0 * (1.0 + SQRT5 * r) * (-SQRT5 * r).exp()
}

/// `θ0² exp(−√5 r)(1 + √5 r + (5/3) r²)`, `r² = Σ (x_i − y_i)²/θ_i²`.
pub fn matern52(x: &[f64], y: &[f64], hyper: &GpHyper) -> Result<f64> {
    check_dim(x.len(), y.len())?;
    hyper.check(x.len())?;
    let r = scaled_dist2(x, y, hyper).sqrt();
    Ok(matern_of_r(r, hyper.theta0 * hyper.theta0))
}

/// Dense lower Cholesky factor of an SPD matrix, row-major.
#[derive(Debug, Clone)]
pub(crate) struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub(crate) fn factor(n: usize, a: &[f64]) -> Option<Self> {
        Self::factor_with_floor(n, a, 0.0)
    }

    /// Like `factor`, but fails when any squared pivot is `<= floor`.
    pub(crate) fn factor_with_floor(n: usize, a: &[f64], floor: f64) -> Option<Self> {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(s > floor) {
                        return None;
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(Self { n, l })
    }

    /// Solves `L v = b`.
    pub(crate) fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut v = b.to_vec();
        for i in 0..n {
            let mut s = v[i];
            for k in 0..i {
                s -= self.l[i * n + k] * v[k];
            }
            v[i] = s / self.l[i * n + i];
        }
        v
    }

    /// Solves `Lᵀ v = b`.
    pub(crate) fn backward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut v = b.to_vec();
        for i in (0..n).rev() {
            let mut s = v[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * v[k];
            }
            v[i] = s / self.l[i * n + i];
        }
        v
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.backward(&self.forward(b))
    }

    pub(crate) fn log_det(&self) -> f64 {
        (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>() * 2.0
    }

    pub(crate) fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[c] = 1.0;
            let col = self.solve(&e);
            for r in 0..n {
                inv[r * n + c] = col[r];
            }
        }
        inv
    }
}

#[derive(Debug, Clone)]
struct Factor {
    chol: Cholesky,
    /// `S⁻¹ y`
    alpha: Vec<f64>,
    jitter: f64,
}

/// Posterior moments and their input gradients at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrad {
    pub mean: f64,
    pub var: f64,
    pub d_mean: Vec<f64>,
    pub d_var: Vec<f64>,
}

/// A GP conditioned on a set of noisy observations.
#[derive(Debug, Clone)]
pub struct GpModel {
    hyper: GpHyper,
    dim: usize,
    points: Vec<Vec<f64>>,
    targets: Vec<f64>,
    cache: Option<Factor>,
}

impl GpModel {
    pub fn new(dim: usize, hyper: GpHyper) -> Result<Self> {
        hyper.check(dim)?;
        Ok(Self {
            hyper,
            dim,
            points: Vec::new(),
            targets: Vec::new(),
            cache: None,
        })
    }

    pub fn with_data(dim: usize, hyper: GpHyper, points: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        let mut m = Self::new(dim, hyper)?;
        check_dim(points.len(), targets.len())?;
        for (p, y) in points.into_iter().zip(targets) {
            m.add(p, y)?;
        }
        Ok(m)
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn set_hyper(&mut self, hyper: GpHyper) -> Result<()> {
        hyper.check(self.dim)?;
        self.hyper = hyper;
        self.cache = None;
        Ok(())
    }

    pub fn add(&mut self, point: Vec<f64>, target: f64) -> Result<()> {
        check_dim(self.dim, point.len())?;
        if !target.is_finite() {
            return Err(Error::NonFinite("GP observation"));
        }
        self.points.push(point);
        self.targets.push(target);
        self.cache = None;
        Ok(())
    }

    pub fn clear(&mut self) {
        self.points.clear();
        self.targets.clear();
        self.cache = None;
    }

    /// Noise-free kernel matrix, each pair evaluated once.
    pub fn kernel_matrix(&self) -> Vec<f64> {
        let n = self.len();
        let amp2 = self.hyper.theta0 * self.hyper.theta0;
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            k[i * n + i] = amp2;
            for j in 0..i {
                let r = scaled_dist2(&self.points[i], &self.points[j], &self.hyper).sqrt();
                let v = matern_of_r(r, amp2);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    }

    fn factorize(&self) -> Result<Factor> {
        let n = self.len();
        let mut s = self.kernel_matrix();
        for i in 0..n {
            s[i * n + i] += self.hyper.noise_var;
        }
        // no jitter when the pivots are already as large as jitter would make them
        if let Some(chol) = Cholesky::factor_with_floor(n, &s, JITTER_START) {
            let alpha = chol.solve(&self.targets);
            return Ok(Factor {
                chol,
                alpha,
                jitter: 0.0,
            });
        }
        let mut jitter = JITTER_START;
        loop {
            let mut sj = s.clone();
            for i in 0..n {
                sj[i * n + i] += jitter;
            }
            if let Some(chol) = Cholesky::factor(n, &sj) {
                let alpha = chol.solve(&self.targets);
                return Ok(Factor { chol, alpha, jitter });
            }
            if jitter >= JITTER_MAX {
                return Err(Error::NotPositiveDefinite { jitter });
            }
            jitter *= 10.0;
        }
    }

    /// Factors `K + σ_n² I` if the cache is stale.
    pub fn refresh(&mut self) -> Result<()> {
        if self.cache.is_none() {
            if self.is_empty() {
                return Err(Error::invalid("observations", "GP has no observations"));
            }
            self.cache = Some(self.factorize()?);
        }
        Ok(())
    }

    /// Jitter that the current factorization needed.
    pub fn jitter(&self) -> Option<f64> {
        self.cache.as_ref().map(|f| f.jitter)
    }

    fn factor(&self) -> Result<&Factor> {
        self.cache
            .as_ref()
            .ok_or_else(|| Error::invalid("factorization", "stale; call refresh() first"))
    }

    fn cross_kernel(&self, x: &[f64]) -> Vec<f64> {
        let amp2 = self.hyper.theta0 * self.hyper.theta0;
        self.points
            .iter()
            .map(|p| matern_of_r(scaled_dist2(x, p, &self.hyper).sqrt(), amp2))
            .collect()
    }

    /// Posterior variance before clipping at zero.
    pub fn raw_posterior(&self, x: &[f64]) -> Result<(f64, f64)> {
        check_dim(self.dim, x.len())?;
        let f = self.factor()?;
        let k = self.cross_kernel(x);
        let mean = k.iter().zip(&f.alpha).map(|(a, b)| a * b).sum();
        let v = f.chol.forward(&k);
        let var = self.hyper.theta0 * self.hyper.theta0 - v.iter().map(|x| x * x).sum::<f64>();
        Ok((mean, var))
    }

    /// Posterior mean and variance at `x`. Requires a fresh factorization.
    pub fn posterior(&self, x: &[f64]) -> Result<(f64, f64)> {
        let (m, v) = self.raw_posterior(x)?;
        Ok((m, v.max(0.0)))
    }

    /// Posterior moments with their gradients in `x`.
    pub fn posterior_grad(&self, x: &[f64]) -> Result<PosteriorGrad> {
        check_dim(self.dim, x.len())?;
        let f = self.factor()?;
        let amp2 = self.hyper.theta0 * self.hyper.theta0;
        let n = self.len();
        let mut k = Vec::with_capacity(n);
        let mut radial = Vec::with_capacity(n);
        for p in &self.points {
            let r = scaled_dist2(x, p, &self.hyper).sqrt();
            k.push(matern_of_r(r, amp2));
            radial.push(matern_radial(r, amp2));
        }
        let w = f.chol.solve(&k);
        let mean = k.iter().zip(&f.alpha).map(|(a, b)| a * b).sum();
        let var = (amp2 - k.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()).max(0.0);
        let mut d_mean = vec![0.0; self.dim];
        let mut d_var = vec![0.0; self.dim];
        for (i, p) in self.points.iter().enumerate() {
            for j in 0..self.dim {
                let l = self.hyper.lengthscale(j);
                // ∂κ_i/∂x_j
                let dk = -radial[i] * (x[j] - p[j]) / (l * l);
                d_mean[j] += f.alpha[i] * dk;
                d_var[j] -= 2.0 * w[i] * dk;
            }
        }
        Ok(PosteriorGrad {
            mean,
            var,
            d_mean,
            d_var,
        })
    }

    /// `½ log|K + σ_n² I| + ½ yᵀ (K + σ_n² I)⁻¹ y` (the `(n/2) log 2π`
    /// constant is omitted).
    pub fn nlml(&mut self) -> Result<f64> {
        self.refresh()?;
        let f = self.factor()?;
        let quad: f64 = self.targets.iter().zip(&f.alpha).map(|(a, b)| a * b).sum();
        Ok(0.5 * f.chol.log_det() + 0.5 * quad)
    }

    /// Gradient of [`GpModel::nlml`] with respect to
    /// [`GpHyper::to_log`] coordinates.
    pub fn nlml_grad(&mut self) -> Result<Vec<f64>> {
        self.refresh()?;
        let f = self.factor()?;
        let n = self.len();
        let inv = f.chol.inverse();
        // W = S⁻¹ − ααᵀ; ∂L/∂p = ½ Σ_ij W_ij ∂S_ij/∂p
        let mut w = inv;
        for i in 0..n {
            for j in 0..n {
                w[i * n + j] -= f.alpha[i] * f.alpha[j];
            }
        }
        let h = &self.hyper;
        let amp2 = h.theta0 * h.theta0;
        let n_ls = h.lengthscales.len();
        let mut g = vec![0.0; n_ls + 2];
        for i in 0..n {
            g[0] += 0.5 * w[i * n + i] * 2.0 * amp2;
            g[n_ls + 1] += 0.5 * w[i * n + i] * h.noise_var;
            for j in 0..i {
                let (pi, pj) = (&self.points[i], &self.points[j]);
                let r = scaled_dist2(pi, pj, h).sqrt();
                let wij = w[i * n + j];
                // off-diagonal pairs appear twice in the trace
                g[0] += wij * 2.0 * matern_of_r(r, amp2);
                let radial = matern_radial(r, amp2);
                if h.is_isotropic() {
                    g[1] += wij * radial * r * r;
                } else {
                    for (m, gm) in g[1..=n_ls].iter_mut().enumerate() {
                        let l = h.lengthscales[m];
                        let diff = pi[m] - pj[m];
                        *gm += wij * radial * diff * diff / (l * l);
                    }
                }
            }
        }
        Ok(g)
    }

    /// Gradient descent on the NLML in log space. A step that raises the
    /// objective (or breaks the factorization) is rejected and the rate
    /// halved; accepted steps grow it by 10%. Every step, accepted or
    /// not, counts against `steps`.
    pub fn fit_hypers(&mut self, steps: usize, learning_rate: f64) -> Result<GpHyper> {
        if steps == 0 {
            return Ok(self.hyper.clone());
        }
        if self.len() < 2 {
            return Err(Error::invalid("observations", "fitting needs at least two"));
        }
        let mut current = self.hyper.clamped();
        self.set_hyper(current.clone())?;
        let mut value = self.nlml()?;
        let mut lr = learning_rate;
        for _ in 0..steps {
            let g = self.nlml_grad()?;
            let p: Vec<f64> = current.to_log().iter().zip(&g).map(|(p, g)| p - lr * g).collect();
            let candidate = GpHyper::from_log(&p);
            self.set_hyper(candidate.clone())?;
            match self.nlml() {
                Ok(v) if v <= value => {
                    current = candidate;
                    value = v;
                    lr *= 1.1;
                }
                _ => {
                    self.set_hyper(current.clone())?;
                    self.refresh()?;
                    lr *= 0.5;
                }
            }
        }
        self.refresh()?;
        Ok(current)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn kernel_examples() {
        let h = GpHyper::isotropic(1.7, 0.3, 0.0);
        assert!((matern52(&[0.2, 0.4], &[0.2, 0.4], &h).unwrap() - 1.7 * 1.7).abs() < 1e-15);
        let far = GpHyper::isotropic(1.0, 1.0, 0.0);
        assert!(matern52(&[0.0], &[50.0], &far).unwrap() < 1e-10);
        // independent scalar evaluation at r = 1
        let s5 = 5f64.sqrt();
        let expected = (-s5).exp() * (1.0 + s5 + 5.0 / 3.0);
        let got = matern52(&[0.0], &[1.0], &far).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.52399411).abs() < 1e-8);
    }

    #[test]
    fn kernel_rejects_bad_hypers() {
        let h = GpHyper::isotropic(0.0, 1.0, 0.0);
        assert!(matern52(&[0.0], &[1.0], &h).is_err());
        let h = GpHyper::ard(1.0, vec![1.0, -1.0], 0.0);
        assert!(matern52(&[0.0, 0.0], &[1.0, 1.0], &h).is_err());
        let h = GpHyper::ard(1.0, vec![1.0, 1.0], 0.0);
        assert!(matern52(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], &h).is_err());
    }

    #[test]
    fn ard_matches_isotropic_when_equal() {
        let a = GpHyper::ard(1.3, vec![0.4; 3], 0.0);
        let b = GpHyper::isotropic(1.3, 0.4, 0.0);
        let x = [0.1, 0.5, 0.9];
        let y = [0.3, 0.2, 0.4];
        assert_eq!(matern52(&x, &y, &a).unwrap(), matern52(&x, &y, &b).unwrap());
    }

    #[test]
    fn kernel_matrix_is_exactly_symmetric() {
        let mut rng = RngStream::new(2);
        let pts: Vec<Vec<f64>> = (0..12).map(|_| rng.gaussian_vec(3)).collect();
        let m = GpModel::with_data(3, GpHyper::default_for(3), pts, vec![0.0; 12]).unwrap();
        let k = m.kernel_matrix();
        for i in 0..12 {
            for j in 0..12 {
                assert_eq!(k[i * 12 + j], k[j * 12 + i]);
            }
        }
    }

    #[test]
    fn interpolates_without_noise() {
        let h = GpHyper::isotropic(1.0, 0.5, 0.0);
        let pts = vec![vec![0.0], vec![0.7], vec![1.5]];
        let ys = vec![0.3, -1.2, 0.8];
        let mut m = GpModel::with_data(1, h, pts.clone(), ys.clone()).unwrap();
        m.refresh().unwrap();
        for (p, y) in pts.iter().zip(&ys) {
            let (mu, var) = m.posterior(p).unwrap();
            assert!((mu - y).abs() < 1e-6);
            assert!(var <= 1e-6);
        }
    }

    #[test]
    fn far_from_data_recovers_prior() {
        let h = GpHyper::isotropic(2.0, 0.5, 1e-6);
        let mut m = GpModel::with_data(1, h, vec![vec![0.0]], vec![3.0]).unwrap();
        m.refresh().unwrap();
        let (mu, var) = m.posterior(&[1e3]).unwrap();
        assert!(mu.abs() < 1e-12);
        assert!((var - 4.0).abs() < 1e-12);
    }

    #[test]
    fn single_zero_observation_nlml() {
        let h = GpHyper::isotropic(1.5, 1.0, 0.01);
        let mut m = GpModel::with_data(2, h, vec![vec![0.1, 0.2]], vec![0.0]).unwrap();
        let expected = 0.5 * (1.5f64 * 1.5 + 0.01f64).ln();
        assert!((m.nlml().unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn stale_factorization_is_refused() {
        let mut m = GpModel::with_data(1, GpHyper::default_for(1), vec![vec![0.0]], vec![1.0]).unwrap();
        assert!(m.posterior(&[0.0]).is_err());
        m.refresh().unwrap();
        assert!(m.posterior(&[0.0]).is_ok());
        m.add(vec![1.0], 0.0).unwrap();
        assert!(m.posterior(&[0.0]).is_err());
    }

    #[test]
    fn duplicate_points_still_factorize() {
        let h = GpHyper::isotropic(1.0, 1.0, 0.0);
        let mut m = GpModel::with_data(1, h, vec![vec![0.5]; 4], vec![1.0; 4]).unwrap();
        m.refresh().unwrap();
        assert!(m.jitter().unwrap() >= JITTER_START);
        let (mean, var) = m.posterior(&[0.5]).unwrap();
        assert!((mean - 1.0).abs() < 1e-6 && var < 1e-6);
    }

    #[test]
    fn fit_with_zero_steps_is_identity() {
        let h = GpHyper::ard(1.2, vec![0.7, 0.3], 0.05);
        let mut m = GpModel::with_data(2, h.clone(), vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![0.0, 1.0]).unwrap();
        assert_eq!(m.fit_hypers(0, 0.1).unwrap(), h);
    }

    #[test]
    fn conflicting_duplicates_raise_noise() {
        let h = GpHyper::isotropic(1.0, 0.5, 1e-6);
        let pts = vec![vec![0.2], vec![0.2], vec![0.8], vec![0.8]];
        let ys = vec![1.0, -1.0, 0.5, -0.5];
        let mut m = GpModel::with_data(1, h, pts, ys).unwrap();
        let before = m.nlml().unwrap();
        let fitted = m.fit_hypers(200, 0.1).unwrap();
        assert!(fitted.noise_var > 1e-6);
        assert!(m.nlml().unwrap() < before);
    }

    #[test]
    fn constant_targets_fit_monotonically() {
        let pts: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 7.0]).collect();
        let mut m = GpModel::with_data(1, GpHyper::isotropic(0.01, 0.3, 1e-4), pts, vec![2.5; 8]).unwrap();
        let initial = m.nlml().unwrap();
        let mut prev = initial;
        for _ in 0..20 {
            m.fit_hypers(5, 0.1).unwrap();
            let v = m.nlml().unwrap();
            assert!(v <= prev);
            prev = v;
        }
        assert!(prev < initial);
        assert!(m.hyper().theta0 > 0.01);
    }
}

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use rand::Rng;

use super::{debug_assert_finite, Real};
use crate::error::{Error, Result};

/// Fully connected layer, `y = x·W + b` with `W` stored `in × out`.
///
/// Applied to a `(points × channels)` matrix this is exactly a kernel-1
/// convolution over the point axis: every row is transformed independently
/// with shared weights.
#[derive(Clone, Debug)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub grad_weight: Array2<T>,
    pub grad_bias: Array1<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self::from_parts(Array2::zeros((inputs, outputs)), Array1::zeros(outputs))
    }

    pub fn from_parts(weight: Array2<T>, bias: Array1<T>) -> Self {
        assert_eq!(weight.ncols(), bias.len(), "dense bias width");
        let grad_weight = Array2::zeros(weight.raw_dim());
        let grad_bias = Array1::zeros(bias.len());
        Self {
            weight,
            bias,
            grad_weight,
            grad_bias,
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weight = Array2::from_shape_fn((inputs, outputs), |_| {
            T::from_f64c(rng.random_range(-limit..limit))
        });
        Self::from_parts(weight, Array1::zeros(outputs))
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &Array2<T>) -> Result<Array2<T>> {
        if x.ncols() != self.inputs() {
            return Err(Error::shape("dense input", self.inputs(), x.ncols()));
        }
        let y = x.dot(&self.weight) + &self.bias;
        debug_assert_finite(y.iter().copied(), "dense forward");
        Ok(y)
    }

    /// Accumulates parameter gradients; returns the input gradient when asked.
    pub fn backward(&mut self, x: &Array2<T>, grad_y: &Array2<T>, need_input: bool) -> Option<Array2<T>> {
        self.grad_weight += &x.t().dot(grad_y);
        self.grad_bias += &grad_y.sum_axis(Axis(0));
        need_input.then(|| grad_y.dot(&self.weight.t()))
    }

    pub fn cast<U: Real>(&self) -> Dense<U> {
        Dense::from_parts(
            self.weight.mapv(|v| U::from(v).unwrap()),
            self.bias.mapv(|v| U::from(v).unwrap()),
        )
    }
}

/// Per-channel batch normalization over the rows of a matrix.
#[derive(Clone, Debug)]
pub struct BatchNorm<T> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    pub running_mean: Array1<T>,
    pub running_var: Array1<T>,
    pub momentum: f64,
    pub eps: f64,
    pub grad_gamma: Array1<T>,
    pub grad_beta: Array1<T>,
}

#[derive(Clone, Debug)]
pub struct BnCache<T> {
    xhat: Array2<T>,
    inv_std: Array1<T>,
}

impl<T: Real> BatchNorm<T> {
    pub const DEFAULT_MOMENTUM: f64 = 0.9;
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: Self::DEFAULT_MOMENTUM,
            eps: Self::DEFAULT_EPS,
            grad_gamma: Array1::zeros(channels),
            grad_beta: Array1::zeros(channels),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn parameter_count(&self) -> usize {
        2 * self.channels()
    }

    /// Normalizes with batch statistics and folds them into the running
    /// estimates (`running = momentum·running + (1 − momentum)·batch`).
    pub fn forward_train(&mut self, x: &Array2<T>) -> Result<(Array2<T>, BnCache<T>)> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::BatchTooSmall(n));
        }
        if x.ncols() != self.channels() {
            return Err(Error::shape("batchnorm input", self.channels(), x.ncols()));
        }
        let nf = T::from_usize(n).unwrap();
        let mean = x.sum_axis(Axis(0)) / nf;
        let centered = x - &mean;
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / nf;
        let eps = T::from_f64c(self.eps);
        let inv_std = var.mapv(|v| T::one() / (v + eps).sqrt());
        let xhat = centered * &inv_std;
        let y = &xhat * &self.gamma + &self.beta;

        let m = T::from_f64c(self.momentum);
        let unbias = nf / (nf - T::one());
        Zip::from(&mut self.running_mean)
            .and(&mean)
            .for_each(|r, &b| *r = m * *r + (T::one() - m) * b);
        Zip::from(&mut self.running_var)
            .and(&var)
            .for_each(|r, &b| *r = m * *r + (T::one() - m) * b * unbias);
        debug_assert_finite(y.iter().copied(), "batchnorm forward");
        Ok((y, BnCache { xhat, inv_std }))
    }

    pub fn forward_infer(&self, x: &Array2<T>) -> Result<Array2<T>> {
        if x.ncols() != self.channels() {
            return Err(Error::shape("batchnorm input", self.channels(), x.ncols()));
        }
        let eps = T::from_f64c(self.eps);
        let scale = Zip::from(&self.gamma)
            .and(&self.running_var)
            .map_collect(|&g, &v| g / (v + eps).sqrt());
        let shift = &self.beta - &(&self.running_mean * &scale);
        Ok(x * &scale + &shift)
    }

    pub fn backward(&mut self, cache: &BnCache<T>, grad_y: &Array2<T>) -> Array2<T> {
        let n = T::from_usize(grad_y.nrows()).unwrap();
        self.grad_gamma += &(grad_y * &cache.xhat).sum_axis(Axis(0));
        self.grad_beta += &grad_y.sum_axis(Axis(0));
        let dxhat = grad_y * &self.gamma;
        let sum_d = dxhat.sum_axis(Axis(0));
        let sum_dx = (&dxhat * &cache.xhat).sum_axis(Axis(0));
        let mut gx = dxhat * n - &sum_d - &(&cache.xhat * &sum_dx);
        gx *= &(&cache.inv_std / n);
        gx
    }

    pub fn cast<U: Real>(&self) -> BatchNorm<U> {
        let c = |a: &Array1<T>| a.mapv(|v| U::from(v).unwrap());
        BatchNorm {
            gamma: c(&self.gamma),
            beta: c(&self.beta),
            running_mean: c(&self.running_mean),
            running_var: c(&self.running_var),
            momentum: self.momentum,
            eps: self.eps,
            grad_gamma: Array1::zeros(self.channels()),
            grad_beta: Array1::zeros(self.channels()),
        }
    }
}

pub fn relu<T: Real>(mut x: Array2<T>) -> Array2<T> {
    x.mapv_inplace(|v| v.max(T::zero()));
    x
}

/// Gradient through ReLU given its output.
pub fn relu_backward<T: Real>(output: &Array2<T>, mut grad_y: Array2<T>) -> Array2<T> {
    Zip::from(&mut grad_y).and(output).for_each(|g, &o| {
        if o <= T::zero() {
            *g = T::zero();
        }
    });
    grad_y
}

/// Channel-wise max over consecutive groups of `points` rows.
///
/// Returns the pooled `(groups × channels)` matrix and, per output cell, the
/// winning input row. Ties go to the lowest row index.
pub fn maxpool_points<T: Real>(x: &Array2<T>, points: usize) -> Result<(Array2<T>, Vec<usize>)> {
    if points == 0 || x.nrows() % points != 0 {
        return Err(Error::shape("maxpool rows", format!("multiple of {points}"), x.nrows()));
    }
    let groups = x.nrows() / points;
    let channels = x.ncols();
    let mut out = Array2::zeros((groups, channels));
    let mut arg = vec![0usize; groups * channels];
    for g in 0..groups {
        let base = g * points;
        let mut best = x.row(base).to_owned();
        let winners = &mut arg[g * channels..(g + 1) * channels];
        winners.fill(base);
        for r in base + 1..base + points {
            for (c, &v) in x.row(r).iter().enumerate() {
                if v > best[c] {
                    best[c] = v;
                    winners[c] = r;
                }
            }
        }
        out.row_mut(g).assign(&best);
    }
    Ok((out, arg))
}

pub fn maxpool_points_backward<T: Real>(grad_y: &Array2<T>, winners: &[usize], rows: usize) -> Array2<T> {
    let channels = grad_y.ncols();
    let mut gx = Array2::zeros((rows, channels));
    for ((g, c), &v) in grad_y.indexed_iter() {
        gx[[winners[g * channels + c], c]] = gx[[winners[g * channels + c], c]] + v;
    }
    gx
}

pub fn log_softmax<T: Real>(logits: ArrayView1<T>) -> Array1<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
    logits.mapv(|v| v - lse)
}

pub fn softmax<T: Real>(logits: ArrayView1<T>) -> Array1<T> {
    log_softmax(logits).mapv(|v| v.exp())
}

/// Cross-entropy of one logit vector against a class index, with
/// `∂loss/∂logits = softmax − onehot`.
pub fn softmax_xent<T: Real>(logits: ArrayView1<T>, target: usize) -> Result<(T, Array1<T>)> {
    if target >= logits.len() {
        return Err(Error::shape("softmax target", format!("< {}", logits.len()), target));
    }
    let logp = log_softmax(logits);
    let loss = -logp[target];
    let mut grad = logp.mapv(|v| v.exp());
    grad[target] = grad[target] - T::one();
    Ok((loss, grad))
}

/// Mean cross-entropy over a batch; the gradient is already divided by the batch size.
pub fn softmax_xent_batch<T: Real>(logits: &Array2<T>, targets: &[usize]) -> Result<(T, Array2<T>)> {
    if logits.nrows() != targets.len() {
        return Err(Error::LengthMismatch {
            left: logits.nrows(),
            right: targets.len(),
        });
    }
    let n = T::from_usize(targets.len().max(1)).unwrap();
    let mut total = T::zero();
    let mut grad = Array2::zeros(logits.raw_dim());
    for (i, &t) in targets.iter().enumerate() {
        let (l, g) = softmax_xent(logits.row(i), t)?;
        total = total + l;
        grad.row_mut(i).assign(&(g / n));
    }
    Ok((total / n, grad))
}

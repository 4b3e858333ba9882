//! Bidirectional lightweight LSTM classifier over frame embeddings.
//!
//! The lite cell couples the input and forget gates and derives the output
//! gate from the same gate pre-activation plus a learned offset, so each
//! direction carries two weight matrices instead of four:
//!
//! ```text
//! a  = W_g·[h, x] + b_g
//! f  = σ(a),  i = 1 − f,  o = σ(a + b_o)
//! c̃  = tanh(W_c·[h, x] + b_c)
//! c' = f ⊙ c + i ⊙ c̃
//! h' = o ⊙ tanh(c')
//! ```
//!
//! The window feature is the concatenation of the final forward and backward
//! hidden states, followed by FC+BN+ReLU and the activity classification layer.

use ndarray::{concatenate, s, Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{dense_params_mut, softmax, BlockCache, Dense, HasParams, LinearBlock, ParamMut, PatternHash, Real};

fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

#[derive(Clone, Debug)]
pub struct LiteCell<T> {
    pub input_dim: usize,
    pub hidden: usize,
    /// `(hidden + input) × hidden`, rows ordered `[h, x]`.
    pub w_gate: Array2<T>,
    pub b_gate: Array1<T>,
    pub w_cand: Array2<T>,
    pub b_cand: Array1<T>,
    pub b_out: Array1<T>,
    pub grad_w_gate: Array2<T>,
    pub grad_b_gate: Array1<T>,
    pub grad_w_cand: Array2<T>,
    pub grad_b_cand: Array1<T>,
    pub grad_b_out: Array1<T>,
}

#[derive(Clone, Debug)]
pub struct StepCache<T> {
    z: Array2<T>,
    forget: Array2<T>,
    out_gate: Array2<T>,
    cand: Array2<T>,
    c_prev: Array2<T>,
    tanh_c: Array2<T>,
}

impl<T: Real> LiteCell<T> {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        let rows = hidden + input_dim;
        Self {
            input_dim,
            hidden,
            w_gate: Array2::zeros((rows, hidden)),
            b_gate: Array1::zeros(hidden),
            w_cand: Array2::zeros((rows, hidden)),
            b_cand: Array1::zeros(hidden),
            b_out: Array1::zeros(hidden),
            grad_w_gate: Array2::zeros((rows, hidden)),
            grad_b_gate: Array1::zeros(hidden),
            grad_w_cand: Array2::zeros((rows, hidden)),
            grad_b_cand: Array1::zeros(hidden),
            grad_b_out: Array1::zeros(hidden),
        }
    }

    /// Glorot-uniform weights; the gate bias starts at +1 so the cell leans
    /// toward remembering early in training.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut cell = Self::zeros(input_dim, hidden);
        let limit = (6.0 / (hidden + input_dim + hidden) as f64).sqrt();
        for w in cell.w_gate.iter_mut().chain(cell.w_cand.iter_mut()) {
            *w = T::from_f64c(rng.random_range(-limit..limit));
        }
        cell.b_gate.fill(T::one());
        cell
    }

    pub fn parameter_count(&self) -> usize {
        self.w_gate.len() + self.b_gate.len() + self.w_cand.len() + self.b_cand.len() + self.b_out.len()
    }

    fn check(&self, x: &Array2<T>, h: &Array2<T>, c: &Array2<T>) -> Result<()> {
        if x.ncols() != self.input_dim || h.ncols() != self.hidden || c.dim() != h.dim() || x.nrows() != h.nrows() {
            return Err(Error::shape(
                "lite cell",
                format!("x: B×{}, h/c: B×{}", self.input_dim, self.hidden),
                format!("x: {:?}, h: {:?}, c: {:?}", x.dim(), h.dim(), c.dim()),
            ));
        }
        Ok(())
    }

    /// One recurrence step for a batch; rows are independent sequences.
    pub fn step(&self, x: &Array2<T>, h: &Array2<T>, c: &Array2<T>) -> Result<(Array2<T>, Array2<T>)> {
        let (h2, c2, _) = self.step_cached(x, h, c)?;
        Ok((h2, c2))
    }

    fn step_cached(&self, x: &Array2<T>, h: &Array2<T>, c: &Array2<T>) -> Result<(Array2<T>, Array2<T>, StepCache<T>)> {
        self.check(x, h, c)?;
        let z = concatenate(Axis(1), &[h.view(), x.view()]).expect("rows checked");
        let a = z.dot(&self.w_gate) + &self.b_gate;
        let forget = a.mapv(sigmoid);
        let out_gate = (&a + &self.b_out).mapv(sigmoid);
        let cand = (z.dot(&self.w_cand) + &self.b_cand).mapv(|v| v.tanh());
        let mut c_next = Array2::zeros(c.raw_dim());
        Zip::from(&mut c_next)
            .and(&forget)
            .and(c)
            .and(&cand)
            .for_each(|cn, &f, &cp, &cd| *cn = f * cp + (T::one() - f) * cd);
        let tanh_c = c_next.mapv(|v| v.tanh());
        let h_next = &out_gate * &tanh_c;
        Ok((
            h_next,
            c_next,
            StepCache { z, forget, out_gate, cand, c_prev: c.clone(), tanh_c },
        ))
    }

    /// Returns `(∂h_prev, ∂c_prev, ∂x)`.
    fn step_backward(&mut self, cache: &StepCache<T>, dh: &Array2<T>, dc: &Array2<T>) -> (Array2<T>, Array2<T>, Array2<T>) {
        let one = T::one();
        let mut dc_total = dc.clone();
        Zip::from(&mut dc_total)
            .and(dh)
            .and(&cache.out_gate)
            .and(&cache.tanh_c)
            .for_each(|d, &g, &o, &tc| *d = *d + g * o * (one - tc * tc));
        let d_out_pre = Zip::from(dh)
            .and(&cache.out_gate)
            .and(&cache.tanh_c)
            .map_collect(|&g, &o, &tc| g * tc * o * (one - o));
        let mut d_gate_pre = Zip::from(&dc_total)
            .and(&cache.c_prev)
            .and(&cache.cand)
            .and(&cache.forget)
            .map_collect(|&d, &cp, &cd, &f| d * (cp - cd) * f * (one - f));
        d_gate_pre += &d_out_pre;
        let d_cand_pre = Zip::from(&dc_total)
            .and(&cache.forget)
            .and(&cache.cand)
            .map_collect(|&d, &f, &cd| d * (one - f) * (one - cd * cd));
        let dc_prev = &dc_total * &cache.forget;

        self.grad_w_gate += &cache.z.t().dot(&d_gate_pre);
        self.grad_b_gate += &d_gate_pre.sum_axis(Axis(0));
        self.grad_b_out += &d_out_pre.sum_axis(Axis(0));
        self.grad_w_cand += &cache.z.t().dot(&d_cand_pre);
        self.grad_b_cand += &d_cand_pre.sum_axis(Axis(0));

        let dz = d_gate_pre.dot(&self.w_gate.t()) + d_cand_pre.dot(&self.w_cand.t());
        let dh_prev = dz.slice(s![.., ..self.hidden]).to_owned();
        let dx = dz.slice(s![.., self.hidden..]).to_owned();
        (dh_prev, dc_prev, dx)
    }

    /// Runs the cell over `xs` (forward in time, or reversed) from zero state
    /// and returns the final hidden state.
    pub fn run(&self, xs: &[Array2<T>], reverse: bool) -> Result<Array2<T>> {
        Ok(self.run_cached(xs, reverse)?.0)
    }

    fn run_cached(&self, xs: &[Array2<T>], reverse: bool) -> Result<(Array2<T>, Vec<StepCache<T>>)> {
        let batch = xs.first().map_or(0, |x| x.nrows());
        let mut h = Array2::zeros((batch, self.hidden));
        let mut c = Array2::zeros((batch, self.hidden));
        let mut caches = Vec::with_capacity(xs.len());
        let order: Box<dyn Iterator<Item = &Array2<T>>> = if reverse {
            Box::new(xs.iter().rev())
        } else {
            Box::new(xs.iter())
        };
        for x in order {
            let (h2, c2, cache) = self.step_cached(x, &h, &c)?;
            h = h2;
            c = c2;
            caches.push(cache);
        }
        Ok((h, caches))
    }

    /// Backpropagates through a run; accumulates `∂x` into `dxs` in time order.
    fn run_backward(&mut self, caches: &[StepCache<T>], dh_final: &Array2<T>, reverse: bool, dxs: &mut [Array2<T>]) {
        let mut dh = dh_final.clone();
        let mut dc = Array2::zeros(dh.raw_dim());
        let steps = caches.len();
        for k in (0..steps).rev() {
            let (dh_prev, dc_prev, dx) = self.step_backward(&caches[k], &dh, &dc);
            let t = if reverse { steps - 1 - k } else { k };
            dxs[t] += &dx;
            dh = dh_prev;
            dc = dc_prev;
        }
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        vec![
            ParamMut { value: self.w_gate.as_slice_mut().unwrap(), grad: self.grad_w_gate.as_slice_mut().unwrap() },
            ParamMut { value: self.b_gate.as_slice_mut().unwrap(), grad: self.grad_b_gate.as_slice_mut().unwrap() },
            ParamMut { value: self.w_cand.as_slice_mut().unwrap(), grad: self.grad_w_cand.as_slice_mut().unwrap() },
            ParamMut { value: self.b_cand.as_slice_mut().unwrap(), grad: self.grad_b_cand.as_slice_mut().unwrap() },
            ParamMut { value: self.b_out.as_slice_mut().unwrap(), grad: self.grad_b_out.as_slice_mut().unwrap() },
        ]
    }

    fn cast<U: Real>(&self) -> LiteCell<U> {
        let c2 = |a: &Array2<T>| a.mapv(|v| U::from(v).unwrap());
        let c1 = |a: &Array1<T>| a.mapv(|v| U::from(v).unwrap());
        let mut out = LiteCell::zeros(self.input_dim, self.hidden);
        out.w_gate = c2(&self.w_gate);
        out.b_gate = c1(&self.b_gate);
        out.w_cand = c2(&self.w_cand);
        out.b_cand = c1(&self.b_cand);
        out.b_out = c1(&self.b_out);
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnnConfig {
    pub input_dim: usize,
    pub hidden_per_direction: usize,
    pub head_width: usize,
    pub num_classes: usize,
}

impl RnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_per_direction == 0 || self.head_width == 0 || self.num_classes < 2 {
            return Err(Error::Config("recurrent head sizes must be >= 1 and classes >= 2".into()));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        let (d, h, w, k) = (self.input_dim, self.hidden_per_direction, self.head_width, self.num_classes);
        let cell = 2 * (h + d) * h + 3 * h;
        2 * cell + (2 * h * w + w + 2 * w) + (w * k + k)
    }
}

#[derive(Clone, Debug)]
pub struct BiLiLstm<T> {
    pub config: RnnConfig,
    pub forward_cell: LiteCell<T>,
    pub backward_cell: LiteCell<T>,
    pub head: LinearBlock<T>,
    pub classifier: Dense<T>,
}

pub struct RnnCache<T> {
    forward: Vec<StepCache<T>>,
    backward: Vec<StepCache<T>>,
    head: BlockCache<T>,
    batch: usize,
}

impl<T: Real> BiLiLstm<T> {
    pub fn new<R: Rng + ?Sized>(config: RnnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (d, h) = (config.input_dim, config.hidden_per_direction);
        Ok(Self {
            forward_cell: LiteCell::new(d, h, rng),
            backward_cell: LiteCell::new(d, h, rng),
            head: LinearBlock::new(2 * h, config.head_width, rng),
            classifier: Dense::glorot(config.head_width, config.num_classes, rng),
            config,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.forward_cell.parameter_count()
            + self.backward_cell.parameter_count()
            + self.head.parameter_count()
            + self.classifier.parameter_count()
    }

    /// Concatenated final states `[h_fwd(L), h_bwd(1)]`, `B × 2H`.
    pub fn features(&self, seq: &[Array2<T>]) -> Result<Array2<T>> {
        if seq.is_empty() {
            return Err(Error::EmptyInput("sequence"));
        }
        let f = self.forward_cell.run(seq, false)?;
        let b = self.backward_cell.run(seq, true)?;
        Ok(concatenate(Axis(1), &[f.view(), b.view()]).expect("same batch"))
    }

    /// Logits for a batch of sequences; `seq[t]` is `B × D`.
    pub fn logits(&self, seq: &[Array2<T>]) -> Result<Array2<T>> {
        let feat = self.features(seq)?;
        self.classifier.forward(&self.head.forward_infer(&feat)?)
    }

    pub fn posterior(&self, embeddings: &Array2<T>) -> Result<Array1<T>> {
        let seq: Vec<Array2<T>> = embeddings.rows().into_iter().map(|r| r.to_owned().insert_axis(Axis(0))).collect();
        Ok(softmax(self.logits(&seq)?.row(0)))
    }

    pub fn forward_train(&mut self, seq: &[Array2<T>], pattern: &mut PatternHash) -> Result<(Array2<T>, RnnCache<T>)> {
        if seq.is_empty() {
            return Err(Error::EmptyInput("sequence"));
        }
        let (f, fwd) = self.forward_cell.run_cached(seq, false)?;
        let (b, bwd) = self.backward_cell.run_cached(seq, true)?;
        let feat = concatenate(Axis(1), &[f.view(), b.view()]).expect("same batch");
        let head = self.head.forward_train(feat, pattern)?;
        let logits = self.classifier.forward(head.output())?;
        let batch = logits.nrows();
        Ok((logits, RnnCache { forward: fwd, backward: bwd, head, batch }))
    }

    /// Returns `∂loss/∂seq[t]` for every step.
    pub fn backward(&mut self, cache: RnnCache<T>, grad_logits: &Array2<T>) -> Vec<Array2<T>> {
        let h = self.config.hidden_per_direction;
        let g = self.classifier.backward(cache.head.output(), grad_logits, true).unwrap();
        let g_feat = self.head.backward(&cache.head, g, true).unwrap();
        let steps = cache.forward.len();
        let mut dxs = vec![Array2::zeros((cache.batch, self.config.input_dim)); steps];
        let dh_f = g_feat.slice(s![.., ..h]).to_owned();
        let dh_b = g_feat.slice(s![.., h..]).to_owned();
        self.forward_cell.run_backward(&cache.forward, &dh_f, false, &mut dxs);
        self.backward_cell.run_backward(&cache.backward, &dh_b, true, &mut dxs);
        dxs
    }

    pub fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let mut v = self.forward_cell.params_mut();
        v.extend(self.backward_cell.params_mut());
        v.extend(self.head.params_mut());
        v.extend(dense_params_mut(&mut self.classifier));
        v
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.head.norm.running_mean.as_slice_mut().unwrap(),
            self.head.norm.running_var.as_slice_mut().unwrap(),
        ]
    }

    pub fn cast<U: Real>(&self) -> BiLiLstm<U> {
        BiLiLstm {
            config: self.config.clone(),
            forward_cell: self.forward_cell.cast(),
            backward_cell: self.backward_cell.cast(),
            head: self.head.cast(),
            classifier: self.classifier.cast(),
        }
    }
}

impl<T: Real> HasParams<T> for BiLiLstm<T> {
    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        BiLiLstm::params_mut(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use ndarray::array;

    #[test]
    fn zero_cell_is_fixed_point() {
        let cell = LiteCell::<f64>::zeros(3, 2);
        let x = array![[0.4, -1.0, 2.0]];
        let (h, c) = cell.step(&x, &Array2::zeros((1, 2)), &Array2::zeros((1, 2))).unwrap();
        assert_eq!(h, Array2::<f64>::zeros((1, 2)));
        assert_eq!(c, Array2::<f64>::zeros((1, 2)));
    }

    #[test]
    fn hidden_state_is_bounded() {
        let mut rng = rng_for(3, &[]);
        let mut cell = LiteCell::<f64>::new(4, 5, &mut rng);
        cell.w_gate.mapv_inplace(|v| v * 50.0);
        cell.w_cand.mapv_inplace(|v| v * 50.0);
        let mut h = Array2::zeros((3, 5));
        let mut c = Array2::zeros((3, 5));
        for _ in 0..20 {
            let x = Array2::from_shape_fn((3, 4), |_| rng.random_range(-100.0..100.0));
            (h, c) = cell.step(&x, &h, &c).unwrap();
            assert!(h.iter().all(|v: &f64| v.abs() < 1.0));
        }
    }

    #[test]
    fn two_step_manual_recurrence() {
        // hidden 2, input 1
        let mut cell = LiteCell::<f64>::zeros(1, 2);
        cell.w_gate = array![[0.1, -0.2], [0.3, 0.0], [0.5, -0.4]];
        cell.b_gate = array![0.2, 0.1];
        cell.w_cand = array![[0.0, 0.6], [-0.3, 0.2], [1.0, 0.7]];
        cell.b_cand = array![-0.1, 0.0];
        cell.b_out = array![0.5, -0.5];
        let inputs = [1.5, -0.8];

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (mut h, mut c) = ([0.0f64; 2], [0.0f64; 2]);
        for &x in &inputs {
            let z = [h[0], h[1], x];
            let mut hn = [0.0; 2];
            let mut cn = [0.0; 2];
            for j in 0..2 {
                let a: f64 = (0..3).map(|i| z[i] * cell.w_gate[[i, j]]).sum::<f64>() + cell.b_gate[j];
                let cand = ((0..3).map(|i| z[i] * cell.w_cand[[i, j]]).sum::<f64>() + cell.b_cand[j]).tanh();
                let f = sig(a);
                cn[j] = f * c[j] + (1.0 - f) * cand;
                hn[j] = sig(a + cell.b_out[j]) * cn[j].tanh();
            }
            h = hn;
            c = cn;
        }

        let xs: Vec<Array2<f64>> = inputs.iter().map(|&x| array![[x]]).collect();
        let out = cell.run(&xs, false).unwrap();
        assert!((out[[0, 0]] - h[0]).abs() < 1e-14);
        assert!((out[[0, 1]] - h[1]).abs() < 1e-14);
    }

    #[test]
    fn backward_direction_sees_reversed_sequence() {
        let mut rng = rng_for(8, &[]);
        let cell = LiteCell::<f64>::new(3, 4, &mut rng);
        let xs: Vec<Array2<f64>> = (0..5).map(|_| Array2::from_shape_fn((2, 3), |_| rng.random_range(-1.0..1.0))).collect();
        let reversed: Vec<Array2<f64>> = xs.iter().rev().cloned().collect();
        assert_eq!(cell.run(&xs, true).unwrap(), cell.run(&reversed, false).unwrap());
    }

    #[test]
    fn swapping_directions_swaps_feature_halves() {
        let mut rng = rng_for(9, &[]);
        let config = RnnConfig { input_dim: 3, hidden_per_direction: 4, head_width: 6, num_classes: 3 };
        let net = BiLiLstm::<f64>::new(config, &mut rng).unwrap();
        let xs: Vec<Array2<f64>> = (0..4).map(|_| Array2::from_shape_fn((1, 3), |_| rng.random_range(-1.0..1.0))).collect();
        let mut swapped = net.clone();
        std::mem::swap(&mut swapped.forward_cell, &mut swapped.backward_cell);
        let reversed: Vec<Array2<f64>> = xs.iter().rev().cloned().collect();
        let a = net.features(&xs).unwrap();
        let b = swapped.features(&reversed).unwrap();
        assert_eq!(a.slice(s![.., ..4]), b.slice(s![.., 4..]));
        assert_eq!(a.slice(s![.., 4..]), b.slice(s![.., ..4]));
    }

    #[test]
    fn single_step_sequence() {
        let mut rng = rng_for(10, &[]);
        let config = RnnConfig { input_dim: 2, hidden_per_direction: 3, head_width: 4, num_classes: 2 };
        let net = BiLiLstm::<f64>::new(config, &mut rng).unwrap();
        let x = array![[0.3, -0.6]];
        let f = net.features(std::slice::from_ref(&x)).unwrap();
        let zeros = Array2::zeros((1, 3));
        let (hf, _) = net.forward_cell.step(&x, &zeros, &zeros).unwrap();
        let (hb, _) = net.backward_cell.step(&x, &zeros, &zeros).unwrap();
        assert_eq!(f.slice(s![.., ..3]), hf);
        assert_eq!(f.slice(s![.., 3..]), hb);
    }

    #[test]
    fn posterior_on_simplex() {
        let mut rng = rng_for(11, &[]);
        let config = RnnConfig { input_dim: 4, hidden_per_direction: 5, head_width: 6, num_classes: 5 };
        let net = BiLiLstm::<f64>::new(config, &mut rng).unwrap();
        for _ in 0..20 {
            let emb = Array2::from_shape_fn((6, 4), |_| rng.random_range(-3.0..3.0));
            let p = net.posterior(&emb).unwrap();
            assert!(p.iter().all(|&v| v >= 0.0));
            assert!((p.sum() - 1.0).abs() < 1e-9);
            let seq: Vec<Array2<f64>> = emb.rows().into_iter().map(|r| r.to_owned().insert_axis(Axis(0))).collect();
            let logits = net.logits(&seq).unwrap();
            let am = |v: &mut dyn Iterator<Item = f64>| {
                v.enumerate().fold((0, f64::MIN), |b, (i, x)| if x > b.1 { (i, x) } else { b }).0
            };
            assert_eq!(am(&mut p.iter().copied()), am(&mut logits.row(0).iter().copied()));
        }
    }

    #[test]
    fn parameter_counts() {
        let d = Dense::<f64>::zeros(3, 2);
        assert_eq!(d.parameter_count(), 8);
        let config = RnnConfig { input_dim: 64, hidden_per_direction: 80, head_width: 128, num_classes: 5 };
        let net = BiLiLstm::<f64>::new(config.clone(), &mut rng_for(0, &[])).unwrap();
        assert_eq!(net.parameter_count(), config.parameter_count());
        let mut clone = net.clone();
        assert_eq!(clone.params_mut().iter().map(|p| p.value.len()).sum::<usize>(), net.parameter_count());

        // Recurrent weights scale quadratically in the hidden width.
        let rec = |h: usize| 2 * 2 * h * (h + 64);
        let ratio = rec(160) as f64 / rec(80) as f64;
        assert!(ratio > 3.0 && ratio < 4.0);
        let ratio_large = rec(2000) as f64 / rec(1000) as f64;
        assert!((ratio_large - 4.0).abs() < 0.2);
    }
}

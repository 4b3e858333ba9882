//! Light-PointNet frame embedder.
//!
//! Pipeline per frame of `AS` points:
//!
//! 1. T-Net: shared per-point MLP → max-pool → FC+BN+ReLU → FC to a 3×3
//!    matrix, initialized to output the identity.
//! 2. Every point is multiplied by that matrix.
//! 3. Shared per-point MLP (kernel-1 conv + BN + ReLU), max-pooled over points
//!    into a global feature of width `D`.
//! 4. Gate: FC+BN+ReLU on the global feature; the embedding is
//!    `gate ⊙ global`.
//!
//! Every per-point computation is row-independent and max is symmetric, so
//! the embedding does not depend on point order.

use ndarray::{s, Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    dense_params_mut, maxpool_points, maxpool_points_backward, BlockCache, Dense, LinearBlock,
    ParamMut, PatternHash, Real,
};
use crate::pcloud::AlignedFrame;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpnConfig {
    pub alignment_size: usize,
    /// Widths of the shared per-point MLP; the last one is the embedding size.
    pub point_widths: Vec<usize>,
    pub tnet_point_widths: Vec<usize>,
    pub tnet_fc_width: usize,
}

impl Default for LpnConfig {
    fn default() -> Self {
        Self {
            alignment_size: 64,
            point_widths: vec![32, 64],
            tnet_point_widths: vec![16, 32],
            tnet_fc_width: 16,
        }
    }
}

impl LpnConfig {
    pub fn embed_dim(&self) -> usize {
        self.point_widths.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let widths_ok = !self.point_widths.is_empty()
            && !self.tnet_point_widths.is_empty()
            && self.point_widths.iter().chain(&self.tnet_point_widths).all(|&w| w >= 1)
            && self.tnet_fc_width >= 1;
        if !widths_ok {
            return Err(Error::Config("embedder layer widths must be non-empty and >= 1".into()));
        }
        if self.alignment_size == 0 {
            return Err(Error::Config("alignment size must be >= 1".into()));
        }
        Ok(())
    }

    /// Closed-form trainable parameter count.
    pub fn parameter_count(&self) -> usize {
        let block = |i: usize, o: usize| i * o + o + 2 * o;
        let chain = |widths: &[usize]| {
            let mut prev = 3;
            let mut n = 0;
            for &w in widths {
                n += block(prev, w);
                prev = w;
            }
            (n, prev)
        };
        let (tnet_points, tnet_last) = chain(&self.tnet_point_widths);
        let tnet = tnet_points + block(tnet_last, self.tnet_fc_width) + self.tnet_fc_width * 9 + 9;
        let (points, d) = chain(&self.point_widths);
        tnet + points + block(d, d)
    }
}

#[derive(Clone, Debug)]
pub struct TNet<T> {
    pub point_blocks: Vec<LinearBlock<T>>,
    pub fc: LinearBlock<T>,
    pub out: Dense<T>,
}

struct TNetCache<T> {
    blocks: Vec<BlockCache<T>>,
    winners: Vec<usize>,
    fc: BlockCache<T>,
}

impl<T: Real> TNet<T> {
    fn new<R: Rng + ?Sized>(config: &LpnConfig, rng: &mut R) -> Self {
        let mut prev = 3;
        let point_blocks = config
            .tnet_point_widths
            .iter()
            .map(|&w| {
                let b = LinearBlock::new(prev, w, rng);
                prev = w;
                b
            })
            .collect();
        let fc = LinearBlock::new(prev, config.tnet_fc_width, rng);
        let mut out = Dense::zeros(config.tnet_fc_width, 9);
        out.bias = identity_flat();
        Self { point_blocks, fc, out }
    }

    /// Row `g` of the result is frame `g`'s 3×3 transform, row-major.
    pub fn forward_infer(&self, x: &Array2<T>, points: usize) -> Result<Array2<T>> {
        let mut h = x.clone();
        for b in &self.point_blocks {
            h = b.forward_infer(&h)?;
        }
        let (pooled, _) = maxpool_points(&h, points)?;
        self.out.forward(&self.fc.forward_infer(&pooled)?)
    }

    fn forward_train(
        &mut self,
        x: &Array2<T>,
        points: usize,
        pattern: &mut PatternHash,
    ) -> Result<(Array2<T>, TNetCache<T>)> {
        let mut blocks = Vec::with_capacity(self.point_blocks.len());
        let mut h = x.clone();
        for b in &mut self.point_blocks {
            let c = b.forward_train(h, pattern)?;
            h = c.output().clone();
            blocks.push(c);
        }
        let (pooled, winners) = maxpool_points(&h, points)?;
        hash_winners(pattern, &winners);
        let fc = self.fc.forward_train(pooled, pattern)?;
        let t = self.out.forward(fc.output())?;
        Ok((t, TNetCache { blocks, winners, fc }))
    }

    fn backward(&mut self, cache: TNetCache<T>, grad_t: &Array2<T>) {
        let g = self.out.backward(cache.fc.output(), grad_t, true).unwrap();
        let g = self.fc.backward(&cache.fc, g, true).unwrap();
        let rows = cache.blocks.last().map_or(0, |c| c.output().nrows());
        let mut g = maxpool_points_backward(&g, &cache.winners, rows);
        for (i, (b, c)) in self.point_blocks.iter_mut().zip(&cache.blocks).enumerate().rev() {
            match b.backward(c, g, i > 0) {
                Some(next) => g = next,
                None => break,
            }
        }
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let mut v: Vec<ParamMut<'_, T>> = self.point_blocks.iter_mut().flat_map(|b| b.params_mut()).collect();
        v.extend(self.fc.params_mut());
        v.extend(dense_params_mut(&mut self.out));
        v
    }

    fn cast<U: Real>(&self) -> TNet<U> {
        TNet {
            point_blocks: self.point_blocks.iter().map(|b| b.cast()).collect(),
            fc: self.fc.cast(),
            out: self.out.cast(),
        }
    }
}

fn identity_flat<T: Real>() -> Array1<T> {
    Array1::from_shape_fn(9, |i| if i % 4 == 0 { T::one() } else { T::zero() })
}

fn hash_winners(pattern: &mut PatternHash, winners: &[usize]) {
    for &w in winners {
        pattern.push(w as u64);
    }
}

/// Applies each frame's 3×3 transform to its block of `points` rows.
fn apply_transforms<T: Real>(x: &Array2<T>, transforms: &Array2<T>, points: usize) -> Array2<T> {
    let mut out = Array2::zeros(x.raw_dim());
    for (g, t) in transforms.rows().into_iter().enumerate() {
        for r in g * points..(g + 1) * points {
            let (px, py, pz) = (x[[r, 0]], x[[r, 1]], x[[r, 2]]);
            for c in 0..3 {
                out[[r, c]] = px * t[c] + py * t[3 + c] + pz * t[6 + c];
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct Lpn<T> {
    pub config: LpnConfig,
    pub tnet: TNet<T>,
    pub point_blocks: Vec<LinearBlock<T>>,
    pub gate: LinearBlock<T>,
}

pub struct LpnCache<T> {
    input: Array2<T>,
    tnet: TNetCache<T>,
    blocks: Vec<BlockCache<T>>,
    winners: Vec<usize>,
    pooled: Array2<T>,
    gate: BlockCache<T>,
}

impl<T: Real> Lpn<T> {
    pub fn new<R: Rng + ?Sized>(config: LpnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let tnet = TNet::new(&config, rng);
        let mut prev = 3;
        let point_blocks = config
            .point_widths
            .iter()
            .map(|&w| {
                let b = LinearBlock::new(prev, w, rng);
                prev = w;
                b
            })
            .collect();
        let gate = LinearBlock::new(prev, prev, rng);
        Ok(Self { config, tnet, point_blocks, gate })
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.tnet.point_blocks.iter().map(|b| b.parameter_count()).sum::<usize>()
            + self.tnet.fc.parameter_count()
            + self.tnet.out.parameter_count()
            + self.point_blocks.iter().map(|b| b.parameter_count()).sum::<usize>()
            + self.gate.parameter_count()
    }

    fn check_input(&self, x: &Array2<T>) -> Result<usize> {
        let p = self.config.alignment_size;
        if x.ncols() != 3 || x.nrows() % p != 0 {
            return Err(Error::shape(
                "embedder input",
                format!("(n·{p}) × 3"),
                format!("{} × {}", x.nrows(), x.ncols()),
            ));
        }
        Ok(x.nrows() / p)
    }

    /// Per-frame 3×3 transforms (row-major rows), inference mode.
    pub fn transforms(&self, x: &Array2<T>) -> Result<Array2<T>> {
        self.check_input(x)?;
        self.tnet.forward_infer(x, self.config.alignment_size)
    }

    /// Embeds `n` frames stacked as `(n·AS) × 3` rows; returns `n × D`.
    pub fn embed(&self, x: &Array2<T>) -> Result<Array2<T>> {
        self.check_input(x)?;
        let p = self.config.alignment_size;
        let t = self.tnet.forward_infer(x, p)?;
        let mut h = apply_transforms(x, &t, p);
        for b in &self.point_blocks {
            h = b.forward_infer(&h)?;
        }
        let (pooled, _) = maxpool_points(&h, p)?;
        let gate = self.gate.forward_infer(&pooled)?;
        Ok(gate * &pooled)
    }

    pub fn embed_frame(&self, frame: &AlignedFrame) -> Result<Array1<T>> {
        let x = frame_matrix(std::slice::from_ref(frame));
        Ok(self.embed(&x)?.row(0).to_owned())
    }

    pub fn forward_train(&mut self, x: &Array2<T>, pattern: &mut PatternHash) -> Result<(Array2<T>, LpnCache<T>)> {
        self.check_input(x)?;
        let p = self.config.alignment_size;
        let (t, tnet) = self.tnet.forward_train(x, p, pattern)?;
        let mut h = apply_transforms(x, &t, p);
        let mut blocks = Vec::with_capacity(self.point_blocks.len());
        for b in &mut self.point_blocks {
            let c = b.forward_train(h, pattern)?;
            h = c.output().clone();
            blocks.push(c);
        }
        let (pooled, winners) = maxpool_points(&h, p)?;
        hash_winners(pattern, &winners);
        let gate = self.gate.forward_train(pooled.clone(), pattern)?;
        let emb = gate.output() * &pooled;
        Ok((
            emb,
            LpnCache { input: x.clone(), tnet, blocks, winners, pooled, gate },
        ))
    }

    pub fn backward(&mut self, cache: LpnCache<T>, grad_emb: &Array2<T>) {
        let p = self.config.alignment_size;
        let d_gate = grad_emb * &cache.pooled;
        let mut d_pooled = grad_emb * cache.gate.output();
        d_pooled += &self.gate.backward(&cache.gate, d_gate, true).unwrap();
        let rows = cache.input.nrows();
        let mut g = maxpool_points_backward(&d_pooled, &cache.winners, rows);
        for (b, c) in self.point_blocks.iter_mut().zip(&cache.blocks).rev() {
            g = b.backward(c, g, true).unwrap();
        }
        // g is now ∂loss/∂(x·T); fold into ∂loss/∂T per frame.
        let groups = rows / p;
        let mut grad_t = Array2::zeros((groups, 9));
        for grp in 0..groups {
            let xs = cache.input.slice(s![grp * p..(grp + 1) * p, ..]);
            let gs = g.slice(s![grp * p..(grp + 1) * p, ..]);
            let dt = xs.t().dot(&gs);
            for i in 0..3 {
                for j in 0..3 {
                    grad_t[[grp, i * 3 + j]] = dt[[i, j]];
                }
            }
        }
        self.tnet.backward(cache.tnet, &grad_t);
    }

    pub fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let mut v = self.tnet.params_mut();
        v.extend(self.point_blocks.iter_mut().flat_map(|b| b.params_mut()));
        v.extend(self.gate.params_mut());
        v
    }

    /// Batch-norm running statistics in serialization order.
    pub fn buffers_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = Vec::new();
        let blocks = self
            .tnet
            .point_blocks
            .iter_mut()
            .chain(std::iter::once(&mut self.tnet.fc))
            .chain(self.point_blocks.iter_mut())
            .chain(std::iter::once(&mut self.gate));
        for b in blocks {
            v.push(b.norm.running_mean.as_slice_mut().unwrap());
            v.push(b.norm.running_var.as_slice_mut().unwrap());
        }
        v
    }

    pub fn cast<U: Real>(&self) -> Lpn<U> {
        Lpn {
            config: self.config.clone(),
            tnet: self.tnet.cast(),
            point_blocks: self.point_blocks.iter().map(|b| b.cast()).collect(),
            gate: self.gate.cast(),
        }
    }
}

/// Stacks frames into an `(n·AS) × 3` matrix.
pub fn frame_matrix<T: Real>(frames: &[AlignedFrame]) -> Array2<T> {
    let rows: usize = frames.iter().map(|f| f.points.len()).sum();
    let mut x = Array2::zeros((rows, 3));
    for (r, p) in frames.iter().flat_map(|f| f.points.iter()).enumerate() {
        x[[r, 0]] = T::from_f64c(p.x);
        x[[r, 1]] = T::from_f64c(p.y);
        x[[r, 2]] = T::from_f64c(p.z);
    }
    x
}

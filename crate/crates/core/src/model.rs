//! The full network: Light-PointNet embedder feeding the bidirectional
//! lite-LSTM classifier.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::bililstm::{BiLiLstm, RnnCache, RnnConfig};
use crate::error::{Error, Result};
use crate::lpn::{frame_matrix, Lpn, LpnCache, LpnConfig};
use crate::nn::{softmax, softmax_xent_batch, Evaluation, HasParams, ParamMut, PatternHash, Real};
use crate::pcloud::{AlignedFrame, Segment};
use crate::rng::{rng_for, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub lpn: LpnConfig,
    pub window_frames: usize,
    pub hidden_per_direction: usize,
    pub head_width: usize,
    pub num_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            lpn: LpnConfig::default(),
            window_frames: 20,
            hidden_per_direction: 80,
            head_width: 128,
            num_classes: 5,
        }
    }
}

impl ModelConfig {
    pub fn rnn(&self) -> RnnConfig {
        RnnConfig {
            input_dim: self.lpn.embed_dim(),
            hidden_per_direction: self.hidden_per_direction,
            head_width: self.head_width,
            num_classes: self.num_classes,
        }
    }

    pub fn alignment_size(&self) -> usize {
        self.lpn.alignment_size
    }

    pub fn validate(&self) -> Result<()> {
        self.lpn.validate()?;
        self.rnn().validate()?;
        if self.window_frames == 0 {
            return Err(Error::Config("window must span at least one frame".into()));
        }
        Ok(())
    }

    /// Trainable scalar count, from the layer widths alone.
    pub fn parameter_count(&self) -> usize {
        self.lpn.parameter_count() + self.rnn().parameter_count()
    }

    /// Batch-norm running statistics stored alongside the trainable weights.
    pub fn buffer_count(&self) -> usize {
        let widths = self.lpn.tnet_point_widths.iter().sum::<usize>()
            + self.lpn.tnet_fc_width
            + self.lpn.point_widths.iter().sum::<usize>()
            + self.lpn.embed_dim()
            + self.head_width;
        2 * widths
    }
}

#[derive(Clone, Debug)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub lpn: Lpn<T>,
    pub rnn: BiLiLstm<T>,
}

pub struct ModelCache<T> {
    lpn: LpnCache<T>,
    rnn: RnnCache<T>,
    batch: usize,
}

impl<T: Real> Model<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_for(seed, &[stream::INIT]);
        let lpn = Lpn::new(config.lpn.clone(), &mut rng)?;
        let rnn = BiLiLstm::new(config.rnn(), &mut rng)?;
        Ok(Self { config, lpn, rnn })
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn parameter_count(&self) -> usize {
        self.lpn.parameter_count() + self.rnn.parameter_count()
    }

    pub fn embed_frame(&self, frame: &AlignedFrame) -> Result<Array1<T>> {
        self.lpn.embed_frame(frame)
    }

    /// Embeds a batch of frames stacked `(n·AS) × 3`; returns `n × D`.
    pub fn embed_frames(&self, x: &Array2<T>) -> Result<Array2<T>> {
        self.lpn.embed(x)
    }

    /// Class posterior for one window given its `L × D` frame embeddings.
    pub fn posterior_from_embeddings(&self, embeddings: &Array2<T>) -> Result<Array1<T>> {
        self.rnn.posterior(embeddings)
    }

    pub fn classify_segment(&self, segment: &Segment) -> Result<Array1<T>> {
        let emb = self.embed_frames(&frame_matrix(&segment.frames))?;
        self.posterior_from_embeddings(&emb)
    }

    /// Logits for a batch of equally long segments in inference mode.
    pub fn logits(&self, segments: &[&Segment]) -> Result<Array2<T>> {
        let (x, batch, steps) = self.stack(segments)?;
        let emb = self.embed_frames(&x)?;
        self.rnn.logits(&split_steps(&emb, batch, steps))
    }

    pub fn posteriors(&self, segments: &[&Segment]) -> Result<Array2<T>> {
        let mut logits = self.logits(segments)?;
        for mut row in logits.rows_mut() {
            let p = softmax(row.view());
            row.assign(&p);
        }
        Ok(logits)
    }

    fn stack(&self, segments: &[&Segment]) -> Result<(Array2<T>, usize, usize)> {
        let steps = segments.first().map(|s| s.len()).ok_or(Error::EmptyInput("segment batch"))?;
        if steps == 0 || segments.iter().any(|s| s.len() != steps) {
            return Err(Error::Config("segments in a batch must share a non-zero length".into()));
        }
        let frames: Vec<AlignedFrame> = segments.iter().flat_map(|s| s.frames.iter().cloned()).collect();
        Ok((frame_matrix(&frames), segments.len(), steps))
    }

    /// Train-mode forward pass over a batch of segments.
    pub fn forward_train(&mut self, segments: &[&Segment]) -> Result<(Array2<T>, ModelCache<T>, u64)> {
        let (x, batch, steps) = self.stack(segments)?;
        self.forward_train_stacked(&x, batch, steps)
    }

    pub fn forward_train_stacked(&mut self, x: &Array2<T>, batch: usize, steps: usize) -> Result<(Array2<T>, ModelCache<T>, u64)> {
        let mut pattern = PatternHash::default();
        let (emb, lpn) = self.lpn.forward_train(x, &mut pattern)?;
        if emb.nrows() != batch * steps {
            return Err(Error::shape("frames per batch", batch * steps, emb.nrows()));
        }
        let (logits, rnn) = self.rnn.forward_train(&split_steps(&emb, batch, steps), &mut pattern)?;
        Ok((logits, ModelCache { lpn, rnn, batch }, pattern.finish()))
    }

    pub fn backward(&mut self, cache: ModelCache<T>, grad_logits: &Array2<T>) {
        let batch = cache.batch;
        let dseq = self.rnn.backward(cache.rnn, grad_logits);
        let steps = dseq.len();
        let mut demb = Array2::zeros((batch * steps, self.lpn.embed_dim()));
        for (t, d) in dseq.iter().enumerate() {
            for b in 0..batch {
                demb.row_mut(b * steps + t).assign(&d.row(b));
            }
        }
        self.lpn.backward(cache.lpn, &demb);
    }

    /// Mean cross-entropy of a stacked batch; accumulates gradients when asked.
    pub fn loss(&mut self, x: &Array2<T>, batch: usize, steps: usize, targets: &[usize], accumulate: bool) -> Result<(T, Array2<T>, u64)> {
        let (logits, cache, pattern) = self.forward_train_stacked(x, batch, steps)?;
        let (loss, grad) = softmax_xent_batch(&logits, targets)?;
        if accumulate {
            self.backward(cache, &grad);
        }
        Ok((loss, logits, pattern))
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = self.lpn.buffers_mut();
        v.extend(self.rnn.buffers_mut());
        v
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            lpn: self.lpn.cast(),
            rnn: self.rnn.cast(),
        }
    }

    /// All trainable parameters then all running statistics, in serialization order.
    pub fn scalars(&self) -> Vec<T> {
        let mut copy = self.clone();
        let mut out: Vec<T> = copy.params_mut().iter().flat_map(|p| p.value.to_vec()).collect();
        out.extend(copy.buffers_mut().iter().flat_map(|b| b.to_vec()));
        out
    }

    pub fn set_scalars(&mut self, values: &[T]) -> Result<()> {
        let expected = self.config.parameter_count() + self.config.buffer_count();
        if values.len() != expected {
            return Err(Error::shape("model scalars", expected, values.len()));
        }
        let mut it = values.iter().copied();
        for p in self.params_mut() {
            for v in p.value.iter_mut() {
                *v = it.next().unwrap();
            }
        }
        for b in self.buffers_mut() {
            for v in b.iter_mut() {
                *v = it.next().unwrap();
            }
        }
        Ok(())
    }
}

impl Model<f64> {
    /// Gradient-check objective over a fixed batch.
    pub fn evaluation(&mut self, x: &Array2<f64>, batch: usize, steps: usize, targets: &[usize], accumulate: bool) -> Result<Evaluation> {
        let (loss, _, pattern) = self.loss(x, batch, steps, targets, accumulate)?;
        Ok(Evaluation { loss, pattern })
    }
}

impl<T: Real> HasParams<T> for Model<T> {
    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let mut v = self.lpn.params_mut();
        v.extend(self.rnn.params_mut());
        v
    }
}

/// Reorders window-major embeddings (`b·L + t`) into per-step `B × D` matrices.
fn split_steps<T: Real>(emb: &Array2<T>, batch: usize, steps: usize) -> Vec<Array2<T>> {
    (0..steps)
        .map(|t| {
            let idx: Vec<usize> = (0..batch).map(|b| b * steps + t).collect();
            emb.select(Axis(0), &idx)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_budget() {
        let config = ModelConfig::default();
        let model = Model::<f64>::new(config.clone(), 0).unwrap();
        assert_eq!(model.parameter_count(), config.parameter_count());
        let n = config.parameter_count();
        assert!((60_000..=120_000).contains(&n), "{n}");
        assert_eq!(model.scalars().len(), n + config.buffer_count());
    }

    #[test]
    fn scalars_round_trip() {
        let config = ModelConfig {
            lpn: LpnConfig { alignment_size: 4, point_widths: vec![6, 8], tnet_point_widths: vec![4], tnet_fc_width: 3 },
            window_frames: 3,
            hidden_per_direction: 5,
            head_width: 6,
            num_classes: 3,
        };
        let a = Model::<f64>::new(config.clone(), 1).unwrap();
        let mut b = Model::<f64>::new(config, 2).unwrap();
        assert_ne!(a.scalars(), b.scalars());
        b.set_scalars(&a.scalars()).unwrap();
        assert_eq!(a.scalars(), b.scalars());
        assert!(b.set_scalars(&[0.0; 3]).is_err());
    }
}

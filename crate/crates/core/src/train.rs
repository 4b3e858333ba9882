//! Supervised training of the full network on labeled windows.

use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{compute_metrics, MetricsReport};
use crate::hmm::argmax;
use crate::lpn::{frame_matrix, LpnConfig};
use crate::model::{Model, ModelConfig};
use crate::nn::{AdamConfig, AdamState, HasParams, Real};
use crate::pcloud::{seconds_to_frames, window_segments, FrameAligner, Label, Recording, Segment, ACTIVITY_NAMES};
use crate::rng::{rng_for, stream};
use crate::spca::{augment, SpcaRanges};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Frame rate of the data, Hz.
    pub rate: f64,
    pub window_seconds: f64,
    pub stride_seconds: f64,
    pub alignment_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate is multiplied by `lr_decay` every `lr_decay_every` epochs.
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub augment: bool,
    pub spca: SpcaRanges,
    pub seed: u64,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub hidden_per_direction: usize,
    pub head_width: usize,
    pub num_classes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rate: 10.0,
            window_seconds: 2.0,
            stride_seconds: 0.33,
            alignment_size: 64,
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            lr_decay: 0.5,
            lr_decay_every: 20,
            augment: true,
            spca: SpcaRanges::default(),
            seed: 42,
            train_fraction: 0.7,
            validation_fraction: 0.1,
            hidden_per_direction: 80,
            head_width: 128,
            num_classes: ACTIVITY_NAMES.len(),
        }
    }
}

impl TrainConfig {
    pub fn window_frames(&self) -> usize {
        seconds_to_frames(self.window_seconds, self.rate)
    }

    pub fn stride_frames(&self) -> usize {
        seconds_to_frames(self.stride_seconds, self.rate)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::Config(format!("frame rate {} must be positive", self.rate)));
        }
        if self.window_frames() == 0 || self.stride_frames() == 0 {
            return Err(Error::Config(format!(
                "window {} s and stride {} s must each span at least one frame at {} Hz",
                self.window_seconds, self.stride_seconds, self.rate
            )));
        }
        if self.stride_seconds > self.window_seconds {
            return Err(Error::Config("stride must not exceed the window".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be >= 2 for batch norm".into()));
        }
        let fractions_ok = self.train_fraction > 0.0
            && self.validation_fraction >= 0.0
            && self.train_fraction + self.validation_fraction <= 1.0 + 1e-12;
        if !fractions_ok {
            return Err(Error::Config("split fractions must be non-negative, with train > 0 and a sum <= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.lr_decay > 0.0) || self.lr_decay_every == 0 {
            return Err(Error::Config("learning-rate schedule must be positive".into()));
        }
        self.spca.validate()?;
        self.model_config().validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            lpn: LpnConfig {
                alignment_size: self.alignment_size,
                ..LpnConfig::default()
            },
            window_frames: self.window_frames(),
            hidden_per_direction: self.hidden_per_direction,
            head_width: self.head_width,
            num_classes: self.num_classes,
        }
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi((epoch / self.lr_decay_every) as i32)
    }
}

/// Recording indices per split.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits whole recordings, stratified by each recording's majority label,
/// so overlapping windows of one recording never straddle two splits.
/// Every class with at least one recording keeps one in the training split.
pub fn split_recordings(recordings: &[Recording], train_fraction: f64, validation_fraction: f64, seed: u64) -> Split {
    let mut groups: Vec<(Option<Label>, Vec<usize>)> = Vec::new();
    for (i, r) in recordings.iter().enumerate() {
        let label = r.label();
        match groups.iter_mut().find(|(l, _)| *l == label) {
            Some((_, v)) => v.push(i),
            None => groups.push((label, vec![i])),
        }
    }
    groups.sort_by(|a, b| a.0.cmp(&b.0));
    let mut split = Split::default();
    for (g, (_, mut members)) in groups.into_iter().enumerate() {
        let mut rng = rng_for(seed, &[stream::SPLIT, g as u64]);
        members.shuffle(&mut rng);
        let n = members.len();
        let test_fraction = (1.0 - train_fraction - validation_fraction).max(0.0);
        let mut n_val = (n as f64 * validation_fraction).round() as usize;
        let mut n_test = (n as f64 * test_fraction).round() as usize;
        while n_val + n_test >= n && n_val + n_test > 0 {
            if n_val > 0 {
                n_val -= 1;
            } else {
                n_test -= 1;
            }
        }
        let n_train = n - n_val - n_test;
        split.train.extend_from_slice(&members[..n_train]);
        split.validation.extend_from_slice(&members[n_train..n_train + n_val]);
        split.test.extend_from_slice(&members[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.validation.sort_unstable();
    split.test.sort_unstable();
    split
}

/// Labeled windows ready for the network.
#[derive(Clone, Debug, Default)]
pub struct WindowSet {
    pub segments: Vec<Segment>,
    pub targets: Vec<usize>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn class_counts(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for &t in &self.targets {
            counts[t] += 1;
        }
        counts
    }
}

/// Aligns the chosen recordings and cuts them into windows. Windows whose
/// majority label is blank or missing are left out. Each recording's
/// alignment stream is keyed by its index in `recordings`.
pub fn prepare_windows(recordings: &[Recording], indices: &[usize], config: &TrainConfig) -> Result<WindowSet> {
    let (len, stride) = (config.window_frames(), config.stride_frames());
    let mut set = WindowSet::default();
    for &i in indices {
        let recording = recordings.get(i).ok_or_else(|| Error::Param(format!("recording index {i} out of range")))?;
        let aligned = FrameAligner::new(config.alignment_size, config.seed, i as u64).align_all(&recording.frames)?;
        for segment in window_segments(&aligned, len, stride) {
            if let Some(Label::Activity(c)) = segment.label {
                if c >= config.num_classes {
                    return Err(Error::Config(format!("label {c} out of range for {} classes", config.num_classes)));
                }
                set.targets.push(c);
                set.segments.push(segment);
            }
        }
    }
    Ok(set)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub learning_rate: f64,
    pub loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub seed: u64,
    pub parameter_count: usize,
    pub train_windows: usize,
    pub validation_windows: usize,
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were kept: best validation accuracy, or the
    /// last epoch without a validation set.
    pub best_epoch: usize,
}

impl TrainingLog {
    pub fn mean_epoch_seconds(&self) -> f64 {
        if self.epochs.is_empty() {
            return 0.0;
        }
        self.epochs.iter().map(|e| e.seconds).sum::<f64>() / self.epochs.len() as f64
    }
}

/// Stacks the points of equally long segments, window-major.
pub fn stack_segments<T: Real>(segments: &[&Segment]) -> Array2<T> {
    let frames: Vec<_> = segments.iter().flat_map(|s| s.frames.iter().cloned()).collect();
    frame_matrix(&frames)
}

/// Batches of shuffled indices; a trailing batch of one joins the previous
/// batch because batch norm needs two rows.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * size;
        *out.last_mut().unwrap() = &order[start..];
    }
    out
}

/// Trains a fresh model. Returns the parameters from the epoch with the best
/// validation accuracy (or the final epoch without validation data).
pub fn train(train_set: &WindowSet, validation: Option<&WindowSet>, config: &TrainConfig) -> Result<(Model<f64>, TrainingLog)> {
    config.validate()?;
    let k = config.num_classes;
    if let Some(missing) = train_set.class_counts(k).iter().position(|&n| n == 0) {
        let name = ACTIVITY_NAMES.get(missing).copied().unwrap_or("?");
        return Err(Error::Config(format!("class {missing} ({name}) has no training windows")));
    }
    if train_set.len() < 2 {
        return Err(Error::BatchTooSmall(train_set.len()));
    }
    let steps = config.window_frames();
    if let Some(s) = train_set.segments.iter().find(|s| s.len() != steps) {
        return Err(Error::shape("window frames", steps, s.len()));
    }
    let mut model = Model::<f64>::new(config.model_config(), config.seed)?;
    let mut adam = AdamState::new(AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    });
    let mut log = TrainingLog {
        seed: config.seed,
        parameter_count: model.parameter_count(),
        train_windows: train_set.len(),
        validation_windows: validation.map_or(0, |v| v.len()),
        ..TrainingLog::default()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let lr = config.learning_rate_at(epoch);
        adam.set_learning_rate(lr);
        order.sort_unstable();
        order.shuffle(&mut rng_for(config.seed, &[stream::SHUFFLE, epoch as u64]));
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in batches(&order, config.batch_size) {
            let augmented: Vec<Segment> = batch
                .iter()
                .map(|&i| {
                    let segment = &train_set.segments[i];
                    if !config.augment {
                        return Ok(segment.clone());
                    }
                    let mut rng = rng_for(config.seed, &[stream::AUGMENT, epoch as u64, i as u64]);
                    let params = config.spca.sample(&mut rng);
                    augment(segment, &params, &mut rng)
                })
                .collect::<Result<_>>()?;
            let refs: Vec<&Segment> = augmented.iter().collect();
            let targets: Vec<usize> = batch.iter().map(|&i| train_set.targets[i]).collect();
            model.zero_grad();
            let (loss, logits, _) = model.loss(&stack_segments(&refs), batch.len(), steps, &targets, true)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}")));
            }
            adam.update(&mut model);
            loss_sum += loss * batch.len() as f64;
            correct += logits
                .rows()
                .into_iter()
                .zip(&targets)
                .filter(|(row, &t)| argmax(row.as_slice().unwrap()) == t)
                .count();
        }
        let validation_accuracy = match validation {
            Some(v) if !v.is_empty() => Some(evaluate(&model, v)?.micro_accuracy),
            _ => None,
        };
        log.epochs.push(EpochLog {
            epoch,
            learning_rate: lr,
            loss: loss_sum / train_set.len() as f64,
            train_accuracy: correct as f64 / train_set.len() as f64,
            validation_accuracy,
            seconds: started.elapsed().as_secs_f64(),
        });
        let score = validation_accuracy.unwrap_or(f64::INFINITY);
        if best.as_ref().is_none_or(|(s, _)| score > *s || validation_accuracy.is_none()) {
            best = Some((score, model.scalars()));
            log.best_epoch = epoch;
        }
    }
    if let Some((_, scalars)) = best {
        model.set_scalars(&scalars)?;
    }
    Ok((model, log))
}

/// Class posteriors for every segment, batched, in inference mode.
pub fn predict<T: Real>(model: &Model<T>, segments: &[Segment]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(segments.len());
    for chunk in segments.chunks(64) {
        let refs: Vec<&Segment> = chunk.iter().collect();
        let post = model.posteriors(&refs)?;
        out.extend(post.rows().into_iter().map(|r| r.iter().map(|v| v.to_f64().unwrap()).collect::<Vec<f64>>()));
    }
    Ok(out)
}

pub fn evaluate<T: Real>(model: &Model<T>, set: &WindowSet) -> Result<MetricsReport> {
    let preds: Vec<usize> = predict(model, &set.segments)?.iter().map(|p| argmax(p)).collect();
    compute_metrics(&preds, &set.targets, model.num_classes())
}

/// One full train-and-test run on a recording-wise split.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub model: Model<f64>,
    pub log: TrainingLog,
    pub split: Split,
    pub test: Option<MetricsReport>,
}

pub fn run_experiment(recordings: &[Recording], config: &TrainConfig) -> Result<Experiment> {
    config.validate()?;
    let split = split_recordings(recordings, config.train_fraction, config.validation_fraction, config.seed);
    let train_set = prepare_windows(recordings, &split.train, config)?;
    let validation = prepare_windows(recordings, &split.validation, config)?;
    let test_set = prepare_windows(recordings, &split.test, config)?;
    let (model, log) = train(&train_set, Some(&validation), config)?;
    let test = if test_set.is_empty() { None } else { Some(evaluate(&model, &test_set)?) };
    Ok(Experiment { model, log, split, test })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    WindowSize,
    AlignmentSize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub seconds_per_epoch: f64,
    pub train_windows: usize,
    pub test_windows: u64,
}

/// Trains and tests once per value of `axis`, all else fixed.
pub fn sweep(recordings: &[Recording], base: &TrainConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    values
        .iter()
        .map(|&value| {
            let mut config = base.clone();
            match axis {
                SweepAxis::WindowSize => config.window_seconds = value,
                SweepAxis::AlignmentSize => {
                    if !(value >= 1.0 && value.fract() == 0.0) {
                        return Err(Error::Config(format!("alignment size {value} must be a positive integer")));
                    }
                    config.alignment_size = value as usize;
                }
            }
            let run = run_experiment(recordings, &config)?;
            let test = run.test.ok_or(Error::EmptyInput("sweep needs test windows"))?;
            Ok(SweepRow {
                value,
                accuracy: test.micro_accuracy,
                macro_f1: test.macro_f1,
                seconds_per_epoch: run.log.mean_epoch_seconds(),
                train_windows: run.log.train_windows,
                test_windows: test.samples,
            })
        })
        .collect()
}

//! Real-time continuous recognition.
//!
//! Each arriving frame is aligned and embedded once; its embedding goes into
//! a ring buffer of the last `L` frames. Every `stride` frames the buffered
//! window is classified, the class posterior is filtered through the HMM,
//! gated against the blank threshold and fed to the streaming collapser,
//! which emits an event whenever a run of one activity ends.

use std::collections::VecDeque;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::ctc::{blank_gate, collapse, collapse_labels, Event, LabeledStep, StreamingCollapser, DEFAULT_TAU};
use crate::error::{Error, Result};
use crate::eval::{compute_metrics, event_edit_distance, MetricsReport};
use crate::hmm::{argmax, filter_sequence, forward_filter, viterbi, HmmParams};
use crate::model::Model;
use crate::pcloud::{majority_label, seconds_to_frames, window_starts, Frame, FrameAligner, Label};
use crate::train::TrainConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoder {
    /// Causal forward filtering, as in the live pipeline.
    #[default]
    Filter,
    /// Offline most-likely path over the whole recording.
    Viterbi,
}

/// Stream-stage settings from the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamSettings {
    pub tau: f64,
    pub use_hmm: bool,
    pub decoder: Decoder,
    /// Laplace pseudo-count used when fitting the HMM.
    pub hmm_alpha: f64,
}

impl Default for StreamSettings {
    fn default() -> Self {
        Self { tau: DEFAULT_TAU, use_hmm: true, decoder: Decoder::Filter, hmm_alpha: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub rate: f64,
    pub window_seconds: f64,
    pub stride_seconds: f64,
    pub alignment_size: usize,
    pub tau: f64,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn from_train(train: &TrainConfig, tau: f64) -> Self {
        Self {
            rate: train.rate,
            window_seconds: train.window_seconds,
            stride_seconds: train.stride_seconds,
            alignment_size: train.alignment_size,
            tau,
            seed: train.seed,
        }
    }

    pub fn window_frames(&self) -> usize {
        seconds_to_frames(self.window_seconds, self.rate)
    }

    pub fn stride_frames(&self) -> usize {
        seconds_to_frames(self.stride_seconds, self.rate)
    }

    /// Duration one hop stands for, from the whole-frame stride.
    pub fn hop_seconds(&self) -> f64 {
        self.stride_frames() as f64 / self.rate
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::Config(format!("frame rate {} must be positive", self.rate)));
        }
        let (l, s) = (self.window_frames(), self.stride_frames());
        if l == 0 || s == 0 || s > l {
            return Err(Error::Config(format!("need 1 <= stride ({s} frames) <= window ({l} frames)")));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("blank threshold {} must be in (0, 1]", self.tau)));
        }
        if self.alignment_size == 0 {
            return Err(Error::Config("alignment size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of one classified window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hop {
    pub window_start: f64,
    pub window_end: f64,
    pub raw_posterior: Vec<f64>,
    /// HMM-filtered posterior, or the raw posterior without an HMM.
    pub filtered: Vec<f64>,
    pub raw_class: usize,
    /// Class chosen by the decoder before gating.
    pub decoded: usize,
    pub label: Label,
    pub confidence: f64,
    /// Majority ground-truth label of the window's frames, when labeled.
    pub truth: Option<Label>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Status {
    /// Fewer than `L` frames buffered so far.
    WarmingUp,
    /// Buffer full, but this frame is not on a hop boundary.
    Idle,
    Hop(Box<Hop>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameOutput {
    pub events: Vec<Event>,
    pub status: Status,
}

struct Buffered {
    timestamp: f64,
    label: Option<Label>,
    embedding: Array1<f32>,
}

/// One live stream. Model and HMM are shared read-only.
pub struct Pipeline<'a> {
    model: &'a Model<f32>,
    hmm: Option<&'a HmmParams>,
    config: PipelineConfig,
    aligner: FrameAligner,
    buffer: VecDeque<Buffered>,
    aligned_frames: usize,
    last_timestamp: Option<f64>,
    filtered: Option<Vec<f64>>,
    collapser: StreamingCollapser,
}

impl<'a> Pipeline<'a> {
    pub fn new(model: &'a Model<f32>, hmm: Option<&'a HmmParams>, config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        check_model(model, hmm, &config)?;
        Ok(Self {
            aligner: FrameAligner::new(config.alignment_size, config.seed, 0),
            buffer: VecDeque::with_capacity(config.window_frames() + 1),
            model,
            hmm,
            config,
            aligned_frames: 0,
            last_timestamp: None,
            filtered: None,
            collapser: StreamingCollapser::new(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn process_frame(&mut self, frame: &Frame) -> Result<FrameOutput> {
        if let Some(prev) = self.last_timestamp {
            if !(frame.timestamp > prev) {
                return Err(Error::OutOfOrder { previous: prev, got: frame.timestamp });
            }
        }
        if !frame.timestamp.is_finite() {
            return Err(Error::Param(format!("non-finite timestamp {}", frame.timestamp)));
        }
        self.last_timestamp = Some(frame.timestamp);
        let idle = |status| Ok(FrameOutput { events: Vec::new(), status });
        let Some(aligned) = self.aligner.push(frame)? else {
            return idle(Status::WarmingUp);
        };
        let embedding = self.model.embed_frame(&aligned)?;
        self.buffer.push_back(Buffered { timestamp: aligned.timestamp, label: aligned.label, embedding });
        let len = self.config.window_frames();
        if self.buffer.len() > len {
            self.buffer.pop_front();
        }
        self.aligned_frames += 1;
        if self.aligned_frames < len {
            return idle(Status::WarmingUp);
        }
        if (self.aligned_frames - len) % self.config.stride_frames() != 0 {
            return idle(Status::Idle);
        }
        let emb = stack(self.buffer.iter().map(|b| &b.embedding), self.model.lpn.embed_dim());
        let raw_posterior = to_f64(&self.model.posterior_from_embeddings(&emb)?);
        let raw_class = argmax(&raw_posterior);
        let filtered = match self.hmm {
            Some(h) => forward_filter(h, raw_class, self.filtered.as_deref())?,
            None => raw_posterior.clone(),
        };
        self.filtered = Some(filtered.clone());
        let label = blank_gate(&filtered, self.config.tau);
        let confidence = filtered[argmax(&filtered)];
        let (window_start, window_end) = (self.buffer.front().unwrap().timestamp, self.buffer.back().unwrap().timestamp);
        let step = step_for(label, window_start, window_end, confidence, self.config.hop_seconds());
        let events: Vec<Event> = self.collapser.push(step).into_iter().collect();
        let hop = Hop {
            window_start,
            window_end,
            raw_posterior,
            decoded: argmax(&filtered),
            filtered,
            raw_class,
            label,
            confidence,
            truth: majority_label(self.buffer.iter().map(|b| b.label)),
        };
        Ok(FrameOutput { events, status: Status::Hop(Box::new(hop)) })
    }

    /// Closes the open run at end of stream.
    pub fn finish(&mut self) -> Option<Event> {
        self.collapser.flush()
    }

    /// Frames currently held; never more than `L`.
    pub fn buffered_frames(&self) -> usize {
        self.buffer.len()
    }

    /// Approximate bytes of per-stream state (excluding the shared model).
    pub fn state_bytes(&self) -> usize {
        let per_frame = std::mem::size_of::<Buffered>() + self.model.lpn.embed_dim() * std::mem::size_of::<f32>();
        std::mem::size_of::<Self>() + self.buffer.capacity() * per_frame + self.filtered.as_ref().map_or(0, |f| f.capacity() * 8)
    }
}

fn check_model(model: &Model<f32>, hmm: Option<&HmmParams>, config: &PipelineConfig) -> Result<()> {
    if model.config.alignment_size() != config.alignment_size {
        return Err(Error::Config(format!(
            "pipeline alignment size {} differs from the model's {}",
            config.alignment_size,
            model.config.alignment_size()
        )));
    }
    if let Some(h) = hmm {
        if h.num_states() != model.num_classes() {
            return Err(Error::Config(format!("HMM has {} states, model has {} classes", h.num_states(), model.num_classes())));
        }
    }
    Ok(())
}

/// A window stands for the hop-length span around its center.
fn step_for(label: Label, window_start: f64, window_end: f64, confidence: f64, hop: f64) -> LabeledStep {
    let center = (window_start + window_end) / 2.0;
    LabeledStep::new(label, center - hop / 2.0, center + hop / 2.0, confidence)
}

fn stack<'b>(rows: impl Iterator<Item = &'b Array1<f32>>, dim: usize) -> Array2<f32> {
    let flat: Vec<f32> = rows.flat_map(|r| r.iter().copied()).collect();
    let n = flat.len() / dim;
    Array2::from_shape_vec((n, dim), flat).expect("embedding rows share one width")
}

fn to_f64(v: &Array1<f32>) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

/// Window-level metrics for one decoding run. Blank truth is scored as class K.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchMetrics {
    pub raw: MetricsReport,
    pub hmm: Option<MetricsReport>,
    pub gated: MetricsReport,
    pub event_edit_distance: usize,
    pub truth_events: usize,
    pub predicted_events: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BatchResult {
    pub events: Vec<Event>,
    pub hops: Vec<Hop>,
    pub metrics: Option<BatchMetrics>,
}

/// Offline evaluation of one recording: aligns and embeds every frame,
/// classifies every window, decodes with the HMM (forward filter or
/// Viterbi), gates, and collapses.
pub fn run_batch(
    frames: &[Frame],
    model: &Model<f32>,
    hmm: Option<&HmmParams>,
    config: &PipelineConfig,
    decoder: Decoder,
) -> Result<BatchResult> {
    config.validate()?;
    check_model(model, hmm, config)?;
    for w in frames.windows(2) {
        if !(w[1].timestamp > w[0].timestamp) {
            return Err(Error::OutOfOrder { previous: w[0].timestamp, got: w[1].timestamp });
        }
    }
    let aligned = FrameAligner::new(config.alignment_size, config.seed, 0).align_all(frames)?;
    let embeddings: Vec<Array1<f32>> = aligned.iter().map(|f| model.embed_frame(f)).collect::<Result<_>>()?;
    let (len, stride) = (config.window_frames(), config.stride_frames());
    let dim = model.lpn.embed_dim();
    let starts: Vec<usize> = window_starts(aligned.len(), len, stride).collect();
    let raw: Vec<Vec<f64>> = starts
        .iter()
        .map(|&s| Ok(to_f64(&model.posterior_from_embeddings(&stack(embeddings[s..s + len].iter(), dim))?)))
        .collect::<Result<_>>()?;
    let raw_classes: Vec<usize> = raw.iter().map(|p| argmax(p)).collect();
    let filtered = match hmm {
        Some(h) => filter_sequence(h, &raw_classes)?,
        None => raw.clone(),
    };
    let decoded: Vec<usize> = match (hmm, decoder) {
        (Some(h), Decoder::Viterbi) => viterbi(h, &raw_classes)?,
        _ => filtered.iter().map(|p| argmax(p)).collect(),
    };
    let mut hops = Vec::with_capacity(starts.len());
    for (w, &s) in starts.iter().enumerate() {
        let confidence = filtered[w][argmax(&filtered[w])];
        // Viterbi chooses the class; the filtered confidence still decides blank.
        let label = match blank_gate(&filtered[w], config.tau) {
            Label::Blank => Label::Blank,
            Label::Activity(_) => Label::Activity(decoded[w]),
        };
        hops.push(Hop {
            window_start: aligned[s].timestamp,
            window_end: aligned[s + len - 1].timestamp,
            raw_posterior: raw[w].clone(),
            filtered: filtered[w].clone(),
            raw_class: raw_classes[w],
            decoded: decoded[w],
            label,
            confidence,
            truth: majority_label(aligned[s..s + len].iter().map(|f| f.label)),
        });
    }
    let steps: Vec<LabeledStep> = hops
        .iter()
        .map(|h| step_for(h.label, h.window_start, h.window_end, h.confidence, config.hop_seconds()))
        .collect();
    let events = collapse(&steps);
    let metrics = batch_metrics(frames, &hops, &events, &decoded, model.num_classes(), hmm.is_some())?;
    Ok(BatchResult { events, hops, metrics })
}

fn batch_metrics(
    frames: &[Frame],
    hops: &[Hop],
    events: &[Event],
    decoded: &[usize],
    k: usize,
    with_hmm: bool,
) -> Result<Option<BatchMetrics>> {
    let scored: Vec<usize> = (0..hops.len()).filter(|&w| hops[w].truth.is_some()).collect();
    if scored.is_empty() {
        return Ok(None);
    }
    let truth: Vec<usize> = scored.iter().map(|&w| hops[w].truth.unwrap().index(k)).collect();
    let pick = |f: &dyn Fn(usize) -> usize| -> Vec<usize> { scored.iter().map(|&w| f(w)).collect() };
    let raw = compute_metrics(&pick(&|w| hops[w].raw_class), &truth, k + 1)?;
    let hmm = if with_hmm { Some(compute_metrics(&pick(&|w| decoded[w]), &truth, k + 1)?) } else { None };
    let gated = compute_metrics(&pick(&|w| hops[w].label.index(k)), &truth, k + 1)?;
    let truth_labels: Vec<Label> = frames.iter().filter_map(|f| f.label).collect();
    let truth_events = collapse_labels(&truth_labels);
    let predicted: Vec<usize> = events.iter().map(|e| e.label).collect();
    let gated = gated.with_events(&predicted, &truth_events);
    Ok(Some(BatchMetrics {
        raw,
        hmm,
        gated,
        event_edit_distance: event_edit_distance(&predicted, &truth_events),
        truth_events: truth_events.len(),
        predicted_events: predicted.len(),
    }))
}

/// Picks the blank threshold that maximizes gated window accuracy over the
/// labeled hops of `results`; ties go to the smallest candidate.
pub fn calibrate_tau(results: &[BatchResult], candidates: &[f64], num_classes: usize) -> Result<f64> {
    let hops: Vec<&Hop> = results.iter().flat_map(|r| &r.hops).filter(|h| h.truth.is_some()).collect();
    if hops.is_empty() {
        return Err(Error::EmptyInput("labeled windows for threshold calibration"));
    }
    let mut best: Option<(usize, f64)> = None;
    for &tau in candidates {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Param(format!("blank threshold {tau} outside (0, 1]")));
        }
        let correct = hops
            .iter()
            .filter(|h| {
                let label = if h.confidence >= tau { Label::Activity(h.decoded) } else { Label::Blank };
                label.index(num_classes) == h.truth.unwrap().index(num_classes)
            })
            .count();
        if best.is_none_or(|(c, t)| correct > c || (correct == c && tau < t)) {
            best = Some((correct, tau));
        }
    }
    best.map(|(_, tau)| tau).ok_or(Error::EmptyInput("threshold candidates"))
}

/// Pools window decisions from several recordings into one report per stage.
pub fn pooled_metrics(results: &[BatchResult], k: usize) -> Result<Option<BatchMetrics>> {
    let mut confusions: [Option<Vec<Vec<u64>>>; 3] = [None, None, None];
    let (mut edits, mut truth_events, mut predicted_events) = (0, 0, 0);
    let mut any = false;
    let mut has_hmm = true;
    for r in results {
        let Some(m) = &r.metrics else { continue };
        any = true;
        has_hmm &= m.hmm.is_some();
        for (slot, report) in confusions.iter_mut().zip([Some(&m.raw), m.hmm.as_ref(), Some(&m.gated)]) {
            if let Some(report) = report {
                let acc = slot.get_or_insert_with(|| vec![vec![0; k + 1]; k + 1]);
                for (a, b) in acc.iter_mut().flatten().zip(report.confusion.iter().flatten()) {
                    *a += b;
                }
            }
        }
        edits += m.event_edit_distance;
        truth_events += m.truth_events;
        predicted_events += m.predicted_events;
    }
    if !any {
        return Ok(None);
    }
    let [raw, hmm, gated] = confusions;
    let mut gated = crate::eval::from_confusion(gated.unwrap());
    gated.event_edit_distance = Some(edits);
    gated.normalized_edit_rate = Some(if truth_events > 0 { (edits as f64 / truth_events as f64).min(1.0) } else { 0.0 });
    Ok(Some(BatchMetrics {
        raw: crate::eval::from_confusion(raw.unwrap()),
        hmm: if has_hmm { hmm.map(crate::eval::from_confusion) } else { None },
        gated,
        event_edit_distance: edits,
        truth_events,
        predicted_events,
    }))
}

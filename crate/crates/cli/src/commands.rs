use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use sparse_har::ctc::Event;
use sparse_har::eval::MetricsReport;
use sparse_har::hmm::{HmmCounts, HmmParams};
use sparse_har::io::{self, SavedModel, Settings};
use sparse_har::model::Model;
use sparse_har::pcloud::{window_segments, Frame, FrameAligner, Label, Point, Recording, ACTIVITY_NAMES};
use sparse_har::rng::{rng_for, stream as tags};
use sparse_har::spca::{self, SpcaParams};
use sparse_har::stream::{calibrate_tau, pooled_metrics, run_batch, BatchResult, Decoder, Pipeline, PipelineConfig, Status};
use sparse_har::synth::PointCountProfile;
use sparse_har::train::{evaluate, prepare_windows, run_experiment, split_recordings, sweep, SweepAxis, TrainConfig};

use crate::args::*;
use crate::output::{open_output, sidecar_path, usage, write_csv, write_json, write_json_file};

pub const METRICS_SCHEMA: &str = "sparse-har/metrics/v1";
pub const CONTINUOUS_SCHEMA: &str = "sparse-har/continuous-metrics/v1";
pub const TRAIN_SCHEMA: &str = "sparse-har/train-log/v1";
pub const SWEEP_SCHEMA: &str = "sparse-har/sweep/v1";
pub const INFO_SCHEMA: &str = "sparse-har/info/v1";
pub const EVENT_SCHEMA: &str = "sparse-har/event/v1";
pub const SUMMARY_SCHEMA: &str = "sparse-har/stream-summary/v1";
pub const AUGMENT_SCHEMA: &str = "sparse-har/augment/v1";

/// Candidate blank thresholds tried during calibration. All are at least
/// 0.5, so a gated label always holds most of the smoothed mass.
const TAU_GRID: [f64; 10] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];

/// Settings after the config file and flags are applied. `tau_explicit`
/// records whether the threshold came from the user rather than a default.
pub struct Resolved {
    pub settings: Settings,
    pub tau_explicit: bool,
}

pub fn resolve(global: &GlobalArgs) -> Result<Resolved> {
    let (mut settings, mut tau_explicit) = match &global.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let settings = Settings::from_toml(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            let raw: toml::Table = text.parse().map_err(|e| usage(format!("{}: {e}", path.display())))?;
            let tau_set = raw.get("stream").and_then(|s| s.get("tau")).is_some();
            (settings, tau_set)
        }
        None => (Settings::default(), false),
    };
    apply_train_flags(&mut settings.train, global);
    if let Some(tau) = global.tau_blank {
        settings.stream.tau = tau;
        tau_explicit = true;
    }
    if !(settings.stream.tau > 0.0 && settings.stream.tau <= 1.0) {
        return Err(usage(format!("blank threshold {} must lie in (0, 1]", settings.stream.tau)));
    }
    settings.train.validate().map_err(|e| usage(e.to_string()))?;
    settings.synth.validate().map_err(|e| usage(e.to_string()))?;
    Ok(Resolved { settings, tau_explicit })
}

fn apply_train_flags(train: &mut TrainConfig, global: &GlobalArgs) {
    if let Some(seed) = global.seed {
        train.seed = seed;
    }
    if let Some(w) = global.window_seconds {
        train.window_seconds = w;
    }
    if let Some(s) = global.stride_seconds {
        train.stride_seconds = s;
    }
    if let Some(a) = global.alignment_size {
        train.alignment_size = a;
    }
}

fn model_path(global: &GlobalArgs) -> Result<&Path> {
    global.model.as_deref().ok_or_else(|| usage("--model is required"))
}

fn load_model(global: &GlobalArgs) -> Result<SavedModel> {
    let path = model_path(global)?;
    io::load_model(path).with_context(|| format!("cannot load model {}", path.display()))
}

/// Relative paths that do not exist here are looked up in the data directory.
fn data_path(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        let candidate = io::default_data_dir().join(path);
        if candidate.exists() {
            return candidate;
        }
    }
    path.to_path_buf()
}

fn load_data(path: &Path) -> Result<Vec<Recording>> {
    let data = io::load_dataset(&data_path(path))?;
    if data.is_empty() {
        bail!("{} holds no recordings", path.display());
    }
    Ok(data)
}

/// The model's own training settings, with any windowing flags on top.
fn model_train_config(saved: &SavedModel, global: &GlobalArgs) -> Result<TrainConfig> {
    let mut train = saved.metadata.train.clone();
    apply_train_flags(&mut train, global);
    train.validate().map_err(|e| usage(e.to_string()))?;
    Ok(train)
}

/// Explicit setting, else the model's calibrated value, else the default.
fn effective_tau(resolved: &Resolved, saved: &SavedModel) -> f64 {
    match (resolved.tau_explicit, saved.metadata.tau_blank) {
        (false, Some(tau)) => tau,
        _ => resolved.settings.stream.tau,
    }
}

fn decoder_for(choice: Option<DecoderChoice>, settings: &Settings) -> Decoder {
    match choice {
        Some(DecoderChoice::Filter) => Decoder::Filter,
        Some(DecoderChoice::Viterbi) => Decoder::Viterbi,
        None => settings.stream.decoder,
    }
}

pub fn synth(global: &GlobalArgs, args: &SynthArgs) -> Result<()> {
    let resolved = resolve(global)?;
    let mut config = resolved.settings.synth.clone();
    if let Some(p) = args.profile {
        config.profile = match p {
            Profile::Mmact => PointCountProfile::Mmact,
            Profile::Disc => PointCountProfile::Disc,
        };
    }
    if let Some(r) = args.rate {
        config.rate = r;
    }
    if let Some(s) = args.seconds_per_class {
        config.seconds_per_class = s;
    }
    if let Some(n) = args.scenarios {
        config.scenarios = n;
    }
    if let Some(n) = args.events {
        config.events_per_scenario = n;
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    let seed = resolved.settings.train.seed;
    let data = match args.kind {
        Kind::Discrete => config.discrete_dataset(seed),
        Kind::Continuous => config.continuous_dataset(seed),
    }
    .map_err(|e| usage(e.to_string()))?;
    let mut w = open_output(global.out.as_deref())?;
    io::write_dataset(&mut w, &data)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct AugmentRecord {
    recording_id: String,
    source: String,
    window_index: usize,
    start_time: f64,
    copy: usize,
    params: SpcaParams,
}

pub fn augment(global: &GlobalArgs, args: &AugmentArgs) -> Result<()> {
    let resolved = resolve(global)?;
    let train = &resolved.settings.train;
    let sidecar = match (&args.sidecar, &global.out) {
        (Some(p), _) => p.clone(),
        (None, Some(out)) => sidecar_path(out),
        (None, None) => return Err(usage("augment needs --out or --sidecar for the provenance file")),
    };
    let data = load_data(&args.data)?;
    let (len, stride) = (train.window_frames(), train.stride_frames());
    let mut out = Vec::new();
    let mut provenance = Vec::new();
    let mut window = 0usize;
    for (i, recording) in data.iter().enumerate() {
        let aligned = FrameAligner::new(train.alignment_size, train.seed, i as u64).align_all(&recording.frames)?;
        for (j, segment) in window_segments(&aligned, len, stride).into_iter().enumerate() {
            for copy in 0..args.copies {
                // Same stream layout as training, with the copy in the epoch slot.
                let mut rng = rng_for(train.seed, &[tags::AUGMENT, copy as u64, window as u64]);
                let params = train.spca.sample(&mut rng);
                let augmented = spca::augment(&segment, &params, &mut rng)?;
                let id = format!("{}#w{j:04}c{copy}", recording.id);
                let frames = augmented
                    .frames
                    .iter()
                    .map(|f| Frame { timestamp: f.timestamp, points: f.points.clone(), label: f.label })
                    .collect();
                provenance.push(AugmentRecord {
                    recording_id: id.clone(),
                    source: recording.id.clone(),
                    window_index: j,
                    start_time: segment.start_time(),
                    copy,
                    params,
                });
                out.push(Recording::new(id, frames));
            }
            window += 1;
        }
    }
    let mut w = open_output(global.out.as_deref())?;
    io::write_dataset(&mut w, &out)?;
    w.flush()?;
    write_json_file(
        &sidecar,
        &json!({
            "schema": AUGMENT_SCHEMA,
            "seed": train.seed,
            "source": args.data,
            "window_frames": len,
            "stride_frames": stride,
            "alignment_size": train.alignment_size,
            "segments": provenance,
        }),
    )
}

/// Window predictions and truths for each recording, in time order, with
/// blank and unlabeled windows left out.
fn hmm_counts(recordings: &[Recording], model: &Model<f32>, config: &PipelineConfig, k: usize) -> Result<(HmmCounts, usize)> {
    let mut counts = HmmCounts::new(k);
    let mut windows = 0;
    for r in recordings {
        let batch = run_batch(&r.frames, model, None, config, Decoder::Filter)?;
        let (pred, truth): (Vec<usize>, Vec<usize>) = batch
            .hops
            .iter()
            .filter_map(|h| match h.truth {
                Some(Label::Activity(c)) if c < k => Some((h.raw_class, c)),
                _ => None,
            })
            .unzip();
        windows += pred.len();
        counts.add_sequence(&pred, &truth)?;
    }
    Ok((counts, windows))
}

pub fn train(global: &GlobalArgs, args: &TrainArgs) -> Result<()> {
    let resolved = resolve(global)?;
    let model_out = model_path(global)?.to_path_buf();
    let mut config = resolved.settings.train.clone();
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if let Some(b) = args.batch_size {
        config.batch_size = b;
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    let started = Instant::now();
    let data = load_data(&args.data)?;
    let experiment = run_experiment(&data, &config)?;
    let model = experiment.model.cast::<f32>();
    let k = config.num_classes;
    let pipeline = PipelineConfig::from_train(&config, resolved.settings.stream.tau);

    let (hmm_source, hmm_recordings): (String, Vec<Recording>) = match &args.hmm_data {
        Some(path) => (path.display().to_string(), load_data(path)?),
        None => {
            let pick = if experiment.split.validation.is_empty() { &experiment.split.train } else { &experiment.split.validation };
            let name = if experiment.split.validation.is_empty() { "train" } else { "validation" };
            (name.to_string(), pick.iter().map(|&i| data[i].clone()).collect())
        }
    };
    let (counts, hmm_windows) = hmm_counts(&hmm_recordings, &model, &pipeline, k)?;
    let hmm = match counts.finish(resolved.settings.stream.hmm_alpha) {
        Ok(h) => Some(h),
        Err(e) => {
            eprintln!("warning: no HMM fitted: {e}");
            None
        }
    };
    let tau_blank = match (&hmm, &args.hmm_data, resolved.tau_explicit) {
        (_, _, true) => Some(resolved.settings.stream.tau),
        (Some(h), Some(_), false) => {
            let results: Vec<BatchResult> = hmm_recordings
                .iter()
                .map(|r| run_batch(&r.frames, &model, Some(h), &pipeline, resolved.settings.stream.decoder))
                .collect::<sparse_har::Result<_>>()?;
            Some(calibrate_tau(&results, &TAU_GRID, k)?)
        }
        _ => None,
    };
    let mut saved = SavedModel::new(model, config.clone(), hmm);
    saved.metadata.tau_blank = tau_blank;
    io::save_model(&model_out, &saved)?;

    let seconds = started.elapsed().as_secs_f64();
    match global.format {
        Format::Json => write_json(
            global.out.as_deref(),
            &json!({
                "schema": TRAIN_SCHEMA,
                "model": model_out,
                "config": config,
                "log": experiment.log,
                "mean_epoch_seconds": experiment.log.mean_epoch_seconds(),
                "split": experiment.split,
                "test": experiment.test,
                "hmm_source": hmm_source,
                "hmm_windows": hmm_windows,
                "has_hmm": saved.hmm.is_some(),
                "tau_blank": tau_blank,
                "seconds": seconds,
            }),
        ),
        Format::Csv => {
            let rows: Vec<Vec<String>> = experiment
                .log
                .epochs
                .iter()
                .map(|e| {
                    vec![
                        e.epoch.to_string(),
                        e.learning_rate.to_string(),
                        e.loss.to_string(),
                        e.train_accuracy.to_string(),
                        e.validation_accuracy.map_or_else(String::new, |v| v.to_string()),
                        e.seconds.to_string(),
                    ]
                })
                .collect();
            write_csv(
                global.out.as_deref(),
                &["epoch", "learning_rate", "loss", "train_accuracy", "validation_accuracy", "seconds"],
                &rows,
            )
        }
    }
}

fn class_names(k: usize) -> Vec<String> {
    (0..k).map(|c| io::label_name(Some(Label::Activity(c)))).chain(std::iter::once(io::label_name(Some(Label::Blank)))).collect()
}

/// Per-class precision, recall, F1 and support rows, then a macro row.
fn metrics_rows(stage: &str, m: &MetricsReport, names: &[String]) -> Vec<Vec<String>> {
    let k = m.num_classes;
    let mut rows = Vec::new();
    for c in 0..k {
        let tp = m.confusion[c][c] as f64;
        let support: u64 = m.confusion[c].iter().sum();
        let predicted: u64 = (0..k).map(|t| m.confusion[t][c]).sum();
        let p = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
        let r = if support > 0 { tp / support as f64 } else { 0.0 };
        let name = names.get(c).cloned().unwrap_or_else(|| c.to_string());
        rows.push(vec![
            stage.into(),
            name,
            p.to_string(),
            r.to_string(),
            sparse_har::eval::f1_score(p, r).to_string(),
            support.to_string(),
        ]);
    }
    rows.push(vec![
        stage.into(),
        "macro".into(),
        m.macro_precision.to_string(),
        m.macro_recall.to_string(),
        m.macro_f1.to_string(),
        m.samples.to_string(),
    ]);
    rows.push(vec![stage.into(), "micro_accuracy".into(), String::new(), String::new(), m.micro_accuracy.to_string(), m.samples.to_string()]);
    rows
}

const METRICS_HEADER: [&str; 6] = ["stage", "class", "precision", "recall", "f1", "support"];

pub fn eval(global: &GlobalArgs, args: &EvalArgs) -> Result<()> {
    let resolved = resolve(global)?;
    let saved = load_model(global)?;
    let train = model_train_config(&saved, global)?;
    let data = load_data(&args.data)?;
    let indices: Vec<usize> = match args.split {
        SplitChoice::All => (0..data.len()).collect(),
        SplitChoice::Test => split_recordings(&data, train.train_fraction, train.validation_fraction, train.seed).test,
    };
    if indices.is_empty() {
        bail!("the {:?} split of {} is empty", args.split, args.data.display());
    }
    let k = saved.model.num_classes();
    let split = format!("{:?}", args.split).to_lowercase();
    if !args.continuous {
        let set = prepare_windows(&data, &indices, &train)?;
        if set.is_empty() {
            bail!("no labeled windows to score in {}", args.data.display());
        }
        let metrics = evaluate(&saved.model, &set)?;
        return match global.format {
            Format::Json => write_json(
                global.out.as_deref(),
                &json!({
                    "schema": METRICS_SCHEMA,
                    "split": split,
                    "recordings": indices.len(),
                    "windows": set.len(),
                    "class_names": &saved.metadata.class_names,
                    "metrics": metrics,
                }),
            ),
            Format::Csv => write_csv(global.out.as_deref(), &METRICS_HEADER, &metrics_rows("raw", &metrics, &saved.metadata.class_names)),
        };
    }

    let tau = effective_tau(&resolved, &saved);
    let decoder = decoder_for(args.decoder, &resolved.settings);
    let hmm = saved.hmm.as_ref().filter(|_| resolved.settings.stream.use_hmm);
    let config = PipelineConfig::from_train(&train, tau);
    let results: Vec<BatchResult> = indices
        .iter()
        .map(|&i| run_batch(&data[i].frames, &saved.model, hmm, &config, decoder))
        .collect::<sparse_har::Result<_>>()?;
    let Some(pooled) = pooled_metrics(&results, k)? else {
        bail!("no labeled windows to score in {}", args.data.display());
    };
    let names = class_names(k);
    match global.format {
        Format::Json => write_json(
            global.out.as_deref(),
            &json!({
                "schema": CONTINUOUS_SCHEMA,
                "split": split,
                "recordings": indices.len(),
                "decoder": decoder,
                "tau_blank": tau,
                "hmm": hmm.is_some(),
                "class_names": names,
                "raw": pooled.raw,
                "smoothed": pooled.hmm,
                "gated": pooled.gated,
                "event_edit_distance": pooled.event_edit_distance,
                "truth_events": pooled.truth_events,
                "predicted_events": pooled.predicted_events,
            }),
        ),
        Format::Csv => {
            let mut rows = metrics_rows("raw", &pooled.raw, &names);
            if let Some(h) = &pooled.hmm {
                rows.extend(metrics_rows("smoothed", h, &names));
            }
            rows.extend(metrics_rows("gated", &pooled.gated, &names));
            write_csv(global.out.as_deref(), &METRICS_HEADER, &rows)
        }
    }
}

/// One frame of the line-delimited input feed.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InputFrame {
    t: f64,
    points: Vec<[f64; 3]>,
    #[serde(default)]
    label: Option<String>,
}

#[derive(Serialize)]
struct EventRecord<'a> {
    schema: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    recording_id: Option<&'a str>,
    label: String,
    class: usize,
    start: f64,
    end: f64,
    confidence: f64,
}

struct EventSink {
    writer: Box<dyn Write>,
    format: Format,
    count: usize,
}

fn csv_line<S: AsRef<[u8]>>(fields: &[S]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(fields)?;
    Ok(w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)
}

impl EventSink {
    fn new(out: Option<&Path>, format: Format, with_recording: bool) -> Result<Self> {
        let mut writer = open_output(out)?;
        if format == Format::Csv {
            let mut header = vec!["label", "class", "start_s", "end_s", "confidence"];
            if with_recording {
                header.insert(0, "recording_id");
            }
            writer.write_all(&csv_line(&header)?)?;
            writer.flush()?;
        }
        Ok(Self { writer, format, count: 0 })
    }

    fn emit(&mut self, recording: Option<&str>, e: &Event) -> Result<()> {
        let label = io::label_name(Some(Label::Activity(e.label)));
        match self.format {
            Format::Json => {
                let record = EventRecord {
                    schema: EVENT_SCHEMA,
                    recording_id: recording,
                    label,
                    class: e.label,
                    start: e.start,
                    end: e.end,
                    confidence: e.confidence,
                };
                serde_json::to_writer(&mut self.writer, &record)?;
                writeln!(self.writer)?;
            }
            Format::Csv => {
                let mut row = vec![label, e.label.to_string(), e.start.to_string(), e.end.to_string(), e.confidence.to_string()];
                if let Some(id) = recording {
                    row.insert(0, id.to_string());
                }
                self.writer.write_all(&csv_line(&row)?)?;
            }
        }
        // Live consumers read events as they happen.
        self.writer.flush()?;
        self.count += 1;
        Ok(())
    }
}

#[derive(Default)]
struct StreamStats {
    frames: usize,
    hops: usize,
    hop_micros: Vec<f64>,
    max_buffered_frames: usize,
    max_state_bytes: usize,
    blank_hops: usize,
}

impl StreamStats {
    fn record(&mut self, pipeline: &Pipeline, status: &Status, micros: f64) {
        self.frames += 1;
        if let Status::Hop(hop) = status {
            self.hops += 1;
            self.hop_micros.push(micros);
            if hop.label == Label::Blank {
                self.blank_hops += 1;
            }
        }
        self.max_buffered_frames = self.max_buffered_frames.max(pipeline.buffered_frames());
        self.max_state_bytes = self.max_state_bytes.max(pipeline.state_bytes());
    }

    fn percentile_ms(&self, q: f64) -> Option<f64> {
        if self.hop_micros.is_empty() {
            return None;
        }
        let mut v = self.hop_micros.clone();
        v.sort_by(f64::total_cmp);
        let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
        Some(v[rank - 1] / 1000.0)
    }
}

fn step(pipeline: &mut Pipeline, frame: &Frame, stats: &mut StreamStats) -> Result<Vec<Event>> {
    let started = Instant::now();
    let out = pipeline.process_frame(frame)?;
    let micros = started.elapsed().as_secs_f64() * 1e6;
    stats.record(pipeline, &out.status, micros);
    Ok(out.events)
}

pub fn stream(global: &GlobalArgs, args: &StreamArgs) -> Result<()> {
    let resolved = resolve(global)?;
    let saved = load_model(global)?;
    let train = model_train_config(&saved, global)?;
    let tau = effective_tau(&resolved, &saved);
    let mut config = PipelineConfig::from_train(&train, tau);
    if let Some(rate) = args.rate {
        config.rate = rate;
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    let hmm: Option<&HmmParams> = saved.hmm.as_ref().filter(|_| resolved.settings.stream.use_hmm && !args.no_hmm);
    let mut stats = StreamStats::default();
    let mut sink = EventSink::new(global.out.as_deref(), global.format, args.data.is_some())?;
    let started = Instant::now();
    let recordings = match &args.data {
        Some(path) => {
            let data = load_data(path)?;
            for r in &data {
                let mut pipeline = Pipeline::new(&saved.model, hmm, config.clone())?;
                for frame in &r.frames {
                    for e in step(&mut pipeline, frame, &mut stats).with_context(|| format!("recording {}", r.id))? {
                        sink.emit(Some(&r.id), &e)?;
                    }
                }
                if let Some(e) = pipeline.finish() {
                    sink.emit(Some(&r.id), &e)?;
                }
            }
            data.len()
        }
        None => {
            let mut pipeline = Pipeline::new(&saved.model, hmm, config.clone())?;
            let stdin = std::io::stdin();
            for (n, line) in stdin.lock().lines().enumerate() {
                let line = line.context("cannot read standard input")?;
                if line.trim().is_empty() {
                    continue;
                }
                let frame = parse_input_frame(&line).with_context(|| format!("stdin:{}", n + 1))?;
                for e in step(&mut pipeline, &frame, &mut stats).with_context(|| format!("stdin:{}", n + 1))? {
                    sink.emit(None, &e)?;
                }
            }
            if let Some(e) = pipeline.finish() {
                sink.emit(None, &e)?;
            }
            1
        }
    };
    if let Some(path) = &args.summary {
        write_json_file(
            path,
            &json!({
                "schema": SUMMARY_SCHEMA,
                "recordings": recordings,
                "frames": stats.frames,
                "hops": stats.hops,
                "blank_hops": stats.blank_hops,
                "events": sink.count,
                "tau_blank": tau,
                "hmm": hmm.is_some(),
                "hop_ms_p50": stats.percentile_ms(0.5),
                "hop_ms_p99": stats.percentile_ms(0.99),
                "hop_ms_max": stats.percentile_ms(1.0),
                "hop_period_ms": config.hop_seconds() * 1000.0,
                "max_buffered_frames": stats.max_buffered_frames,
                "max_state_bytes": stats.max_state_bytes,
                "seconds": started.elapsed().as_secs_f64(),
            }),
        )?;
    }
    Ok(())
}

fn parse_input_frame(line: &str) -> Result<Frame> {
    let input: InputFrame = serde_json::from_str(line)?;
    let points: Vec<Point> = input.points.iter().map(|p| Point::new(p[0], p[1], p[2])).collect();
    if !input.t.is_finite() || points.iter().any(|p| !p.is_finite()) {
        bail!("non-finite value in frame");
    }
    let mut frame = Frame::new(input.t, points);
    if let Some(label) = input.label {
        frame.label = io::parse_label(&label).map_err(anyhow::Error::msg)?;
    }
    Ok(frame)
}

pub fn sweep_cmd(global: &GlobalArgs, args: &SweepArgs) -> Result<()> {
    let resolved = resolve(global)?;
    let mut base = resolved.settings.train.clone();
    if let Some(e) = args.epochs {
        base.epochs = e;
    }
    let axis = match args.axis {
        Axis::Window => SweepAxis::WindowSize,
        Axis::Alignment => SweepAxis::AlignmentSize,
    };
    for &v in &args.values {
        let mut probe = base.clone();
        match axis {
            SweepAxis::WindowSize => probe.window_seconds = v,
            SweepAxis::AlignmentSize if v >= 1.0 && v.fract() == 0.0 => probe.alignment_size = v as usize,
            SweepAxis::AlignmentSize => return Err(usage(format!("alignment size {v} must be a positive integer"))),
        }
        probe.validate().map_err(|e| usage(format!("sweep value {v}: {e}")))?;
    }
    let data = load_data(&args.data)?;
    let rows = sweep(&data, &base, axis, &args.values)?;
    let header = ["value", "accuracy", "macro_f1", "seconds_per_epoch", "train_windows", "test_windows"];
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.value.to_string(),
                r.accuracy.to_string(),
                r.macro_f1.to_string(),
                r.seconds_per_epoch.to_string(),
                r.train_windows.to_string(),
                r.test_windows.to_string(),
            ]
        })
        .collect();
    if let Some(path) = &args.plot_data {
        write_csv(Some(path), &header, &csv_rows)?;
    }
    match global.format {
        Format::Json => write_json(
            global.out.as_deref(),
            &json!({ "schema": SWEEP_SCHEMA, "axis": axis, "epochs": base.epochs, "seed": base.seed, "rows": rows }),
        ),
        Format::Csv => write_csv(global.out.as_deref(), &header, &csv_rows),
    }
}

pub fn info(global: &GlobalArgs) -> Result<()> {
    let resolved = resolve(global)?;
    let value = match &global.model {
        Some(_) => {
            let saved = load_model(global)?;
            let m = &saved.metadata;
            json!({
                "schema": INFO_SCHEMA,
                "source": "model",
                "parameter_count": saved.model.parameter_count(),
                "buffer_count": m.buffer_count,
                "config": m.config,
                "class_names": m.class_names,
                "training_seed": m.training_seed,
                "train": m.train,
                "has_hmm": saved.hmm.is_some(),
                "tau_blank": m.tau_blank,
            })
        }
        None => {
            let train = &resolved.settings.train;
            let config = train.model_config();
            json!({
                "schema": INFO_SCHEMA,
                "source": "default",
                "parameter_count": config.parameter_count(),
                "buffer_count": config.buffer_count(),
                "config": config,
                "class_names": ACTIVITY_NAMES[..config.num_classes.min(ACTIVITY_NAMES.len())],
                "train": train,
            })
        }
    };
    match global.format {
        Format::Json => write_json(global.out.as_deref(), &value),
        Format::Csv => {
            let rows: Vec<Vec<String>> = value
                .as_object()
                .into_iter()
                .flatten()
                .map(|(k, v)| vec![k.clone(), v.as_str().map_or_else(|| v.to_string(), str::to_string)])
                .collect();
            write_csv(global.out.as_deref(), &["key", "value"], &rows)
        }
    }
}


//! Point-cloud domain types and hybrid alignment.
//!
//! Radar frames carry a variable number of points. Alignment brings every
//! frame to exactly `alignment_size` points: sparse frames are upsampled by
//! replicating random original points, dense frames are downsampled by a
//! uniform random subset. Point order carries no meaning anywhere downstream.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }
}

/// Ground-truth or decoded label: an activity class or the blank placeholder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Activity(usize),
    Blank,
}

impl Label {
    pub fn activity(self) -> Option<usize> {
        match self {
            Label::Activity(c) => Some(c),
            Label::Blank => None,
        }
    }

    /// Index in a (K+1)-class scheme where blank is scored as class `num_classes`.
    pub fn index(self, num_classes: usize) -> usize {
        match self {
            Label::Activity(c) => c,
            Label::Blank => num_classes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub timestamp: f64,
    pub points: Vec<Point>,
    pub label: Option<Label>,
}

impl Frame {
    pub fn new(timestamp: f64, points: Vec<Point>) -> Self {
        Self {
            timestamp,
            points,
            label: None,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }

    pub fn centroid(&self) -> Option<Point> {
        mean_point(self.points.iter())
    }
}

/// The five activity classes, indexed by class id.
pub const ACTIVITY_NAMES: [&str; 5] = ["walking", "falling", "standing", "rising", "lying"];

/// Label text used for the blank placeholder in files.
pub const BLANK_NAME: &str = "eps";

/// One capture session: frames in timestamp order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub id: String,
    pub frames: Vec<Frame>,
}

impl Recording {
    pub fn new(id: impl Into<String>, frames: Vec<Frame>) -> Self {
        Self { id: id.into(), frames }
    }

    /// Majority label over the recording's frames.
    pub fn label(&self) -> Option<Label> {
        majority_label(self.frames.iter().map(|f| f.label))
    }

    pub fn duration(&self) -> f64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(a), Some(b)) => b.timestamp - a.timestamp,
            _ => 0.0,
        }
    }
}

/// A frame holding exactly `alignment_size` points.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedFrame {
    pub timestamp: f64,
    pub points: Vec<Point>,
    pub label: Option<Label>,
}

/// `L` consecutive aligned frames: the unit of classification.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub frames: Vec<AlignedFrame>,
    pub label: Option<Label>,
}

impl Segment {
    pub fn new(frames: Vec<AlignedFrame>) -> Self {
        let label = majority_label(frames.iter().map(|f| f.label));
        Self { frames, label }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn alignment_size(&self) -> usize {
        self.frames.first().map_or(0, |f| f.points.len())
    }

    pub fn points(&self) -> impl Iterator<Item = &Point> {
        self.frames.iter().flat_map(|f| f.points.iter())
    }

    pub fn points_mut(&mut self) -> impl Iterator<Item = &mut Point> {
        self.frames.iter_mut().flat_map(|f| f.points.iter_mut())
    }

    /// Mean of all L·AS points.
    pub fn centroid(&self) -> Point {
        mean_point(self.points()).unwrap_or_default()
    }

    pub fn start_time(&self) -> f64 {
        self.frames.first().map_or(0.0, |f| f.timestamp)
    }

    pub fn end_time(&self) -> f64 {
        self.frames.last().map_or(0.0, |f| f.timestamp)
    }
}

fn mean_point<'a>(points: impl Iterator<Item = &'a Point>) -> Option<Point> {
    let mut n = 0usize;
    let mut acc = [0.0f64; 3];
    for p in points {
        acc[0] += p.x;
        acc[1] += p.y;
        acc[2] += p.z;
        n += 1;
    }
    (n > 0).then(|| {
        let n = n as f64;
        Point::new(acc[0] / n, acc[1] / n, acc[2] / n)
    })
}

/// Most frequent label; ties go to the smallest label (activities before blank).
/// Frames without a label are ignored.
pub fn majority_label(labels: impl Iterator<Item = Option<Label>>) -> Option<Label> {
    let mut counts: Vec<(Label, usize)> = Vec::new();
    for label in labels.flatten() {
        match counts.iter_mut().find(|(l, _)| *l == label) {
            Some((_, n)) => *n += 1,
            None => counts.push((label, 1)),
        }
    }
    counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    counts.first().map(|(l, _)| *l)
}

/// Hybrid up/down-sampling of one frame to exactly `alignment_size` points.
pub fn align_frame<R: Rng + ?Sized>(
    frame: &Frame,
    alignment_size: usize,
    rng: &mut R,
) -> Result<AlignedFrame> {
    if alignment_size == 0 {
        return Err(Error::Param("alignment size must be at least 1".into()));
    }
    let n = frame.points.len();
    if n == 0 {
        return Err(Error::EmptyFrame {
            timestamp: frame.timestamp,
        });
    }
    let points = if n < alignment_size {
        let mut pts = Vec::with_capacity(alignment_size);
        pts.extend_from_slice(&frame.points);
        for _ in n..alignment_size {
            pts.push(frame.points[rng.random_range(0..n)]);
        }
        pts
    } else if n > alignment_size {
        let mut picked = index::sample(rng, n, alignment_size).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| frame.points[i]).collect()
    } else {
        frame.points.clone()
    };
    Ok(AlignedFrame {
        timestamp: frame.timestamp,
        points,
        label: frame.label,
    })
}

/// Aligns the frames of one recording in arrival order, each with its own
/// random stream keyed by (seed, key, frame index). An empty frame becomes a
/// single point at the previous frame's centroid; empty frames before the
/// first non-empty one are dropped.
#[derive(Clone, Debug)]
pub struct FrameAligner {
    alignment_size: usize,
    seed: u64,
    key: u64,
    index: u64,
    last_centroid: Option<Point>,
}

impl FrameAligner {
    pub fn new(alignment_size: usize, seed: u64, key: u64) -> Self {
        Self {
            alignment_size,
            seed,
            key,
            index: 0,
            last_centroid: None,
        }
    }

    pub fn push(&mut self, frame: &Frame) -> Result<Option<AlignedFrame>> {
        let mut rng = crate::rng::rng_for(self.seed, &[crate::rng::stream::ALIGN, self.key, self.index]);
        self.index += 1;
        if let Some(bad) = frame.points.iter().find(|p| !p.is_finite()) {
            return Err(Error::Param(format!("non-finite point {bad:?} at t={}", frame.timestamp)));
        }
        let aligned = match (frame.centroid(), self.last_centroid) {
            (Some(c), _) => {
                self.last_centroid = Some(c);
                align_frame(frame, self.alignment_size, &mut rng)?
            }
            (None, Some(c)) => AlignedFrame {
                timestamp: frame.timestamp,
                points: vec![c; self.alignment_size],
                label: frame.label,
            },
            (None, None) => return Ok(None),
        };
        Ok(Some(aligned))
    }

    /// Aligns a whole recording.
    pub fn align_all(&mut self, frames: &[Frame]) -> Result<Vec<AlignedFrame>> {
        let mut out = Vec::with_capacity(frames.len());
        for f in frames {
            out.extend(self.push(f)?);
        }
        Ok(out)
    }
}

/// Start indices of sliding windows of `len` frames advancing by `stride`.
pub fn window_starts(n: usize, len: usize, stride: usize) -> impl Iterator<Item = usize> {
    assert!(len >= 1 && stride >= 1, "window length and stride must be >= 1");
    let count = if n >= len { (n - len) / stride + 1 } else { 0 };
    (0..count).map(move |i| i * stride)
}

pub fn window_segments(frames: &[AlignedFrame], len: usize, stride: usize) -> Vec<Segment> {
    window_starts(frames.len(), len, stride)
        .map(|s| Segment::new(frames[s..s + len].to_vec()))
        .collect()
}

/// Converts a duration to a whole number of frames at `rate` Hz.
pub fn seconds_to_frames(seconds: f64, rate: f64) -> usize {
    (seconds * rate).round().max(0.0) as usize
}

/// Default alignment size by frame rate: 25 points for 30 Hz captures, 64 for 10 Hz ones.
pub fn default_alignment_size(rate: f64) -> usize {
    if rate >= 20.0 {
        25
    } else {
        64
    }
}

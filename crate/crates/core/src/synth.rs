//! Synthetic sparse point clouds for the five activities.
//!
//! Each activity is a Gaussian blob whose center, extent and heading follow
//! a simple trajectory inside a 3.5 m × 3.5 m floor area in front of the
//! radar. Per-frame point counts come from one of two profiles: `Mmact`
//! (7–25 points, with a spike at the 25-point cap) and `Disc` (1–64 points).
//! Continuous scenarios chain events along plausible transitions and insert
//! blank-labeled gaps in which the blob drifts between the neighboring
//! events while returning fewer, more scattered points.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pcloud::{Frame, Label, Point, Recording, ACTIVITY_NAMES};
use crate::rng::{rng_for, stream};

pub const WALKING: usize = 0;
pub const FALLING: usize = 1;
pub const STANDING: usize = 2;
pub const RISING: usize = 3;
pub const LYING: usize = 4;

/// Floor area (x, y) and height range, meters, radar at the origin.
pub const AREA_X: (f64, f64) = (-1.75, 1.75);
pub const AREA_Y: (f64, f64) = (0.5, 4.0);
pub const AREA_Z: (f64, f64) = (0.0, 2.0);

pub const UPRIGHT_HEIGHT: f64 = 0.9;
pub const LYING_HEIGHT: f64 = 0.2;

/// Still activities start at least this far from the area border.
const START_MARGIN: f64 = 0.6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointCountProfile {
    Mmact,
    Disc,
}

impl PointCountProfile {
    pub fn max_points(self) -> usize {
        match self {
            PointCountProfile::Mmact => 25,
            PointCountProfile::Disc => 64,
        }
    }

    pub fn default_rate(self) -> f64 {
        match self {
            PointCountProfile::Mmact => 30.0,
            PointCountProfile::Disc => 10.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> usize {
        match self {
            PointCountProfile::Mmact => {
                if rng.random_bool(0.15) {
                    25
                } else {
                    rounded_normal(rng, 14.5, 4.0, 7, 24)
                }
            }
            PointCountProfile::Disc => rounded_normal(rng, 32.0, 12.0, 1, 64),
        }
    }
}

/// `round(N(mean, sd))`, redrawn until it lands in `[lo, hi]`.
fn rounded_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lo: usize, hi: usize) -> usize {
    let normal = Normal::new(mean, sd).expect("valid normal");
    loop {
        let v = normal.sample(rng).round();
        if v >= lo as f64 && v <= hi as f64 {
            return v as usize;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Motion {
    /// Stays in place with a small periodic sway of at most `sway` meters.
    Still { height: f64, sway: f64 },
    /// Straight-line walk at a random speed, reflecting off the area border.
    Walk { height: f64, min_speed: f64, max_speed: f64 },
    /// Height eases from `from` to `to` while the center moves `shift`
    /// meters along the heading.
    Transition { from: f64, to: f64, shift: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityModel {
    pub class: usize,
    pub motion: Motion,
    /// Blob standard deviations (along heading, across heading, vertical).
    pub extent_start: [f64; 3],
    pub extent_end: [f64; 3],
    /// Duration range of one event, seconds.
    pub duration: (f64, f64),
}

const UPRIGHT_EXTENT: [f64; 3] = [0.15, 0.15, 0.35];
const WALKING_EXTENT: [f64; 3] = [0.25, 0.2, 0.35];
const LYING_EXTENT: [f64; 3] = [0.45, 0.15, 0.08];

impl ActivityModel {
    pub fn defaults() -> Vec<ActivityModel> {
        vec![
            ActivityModel {
                class: WALKING,
                motion: Motion::Walk { height: UPRIGHT_HEIGHT, min_speed: 0.8, max_speed: 1.2 },
                extent_start: WALKING_EXTENT,
                extent_end: WALKING_EXTENT,
                duration: (3.0, 5.0),
            },
            ActivityModel {
                class: FALLING,
                motion: Motion::Transition { from: UPRIGHT_HEIGHT, to: LYING_HEIGHT, shift: 0.4 },
                extent_start: UPRIGHT_EXTENT,
                extent_end: LYING_EXTENT,
                duration: (2.5, 4.0),
            },
            ActivityModel {
                class: STANDING,
                motion: Motion::Still { height: UPRIGHT_HEIGHT, sway: 0.02 },
                extent_start: UPRIGHT_EXTENT,
                extent_end: UPRIGHT_EXTENT,
                duration: (3.0, 5.0),
            },
            ActivityModel {
                class: RISING,
                motion: Motion::Transition { from: LYING_HEIGHT, to: UPRIGHT_HEIGHT, shift: -0.4 },
                extent_start: LYING_EXTENT,
                extent_end: UPRIGHT_EXTENT,
                duration: (2.5, 4.0),
            },
            ActivityModel {
                class: LYING,
                motion: Motion::Still { height: LYING_HEIGHT, sway: 0.005 },
                extent_start: LYING_EXTENT,
                extent_end: LYING_EXTENT,
                duration: (3.0, 5.0),
            },
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.duration;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Config(format!("bad duration range {lo}..{hi} for class {}", self.class)));
        }
        if self.extent_start.iter().chain(&self.extent_end).any(|&s| !(s >= 0.0) || !s.is_finite()) {
            return Err(Error::Config(format!("bad blob extent for class {}", self.class)));
        }
        let heights_ok = |h: f64| h > AREA_Z.0 && h < AREA_Z.1;
        let ok = match self.motion {
            Motion::Still { height, sway } => heights_ok(height) && (0.0..START_MARGIN).contains(&sway),
            Motion::Walk { height, min_speed, max_speed } => heights_ok(height) && min_speed > 0.0 && max_speed >= min_speed,
            Motion::Transition { from, to, shift } => heights_ok(from) && heights_ok(to) && shift.abs() < START_MARGIN,
        };
        if !ok {
            return Err(Error::Config(format!("bad trajectory for class {}", self.class)));
        }
        Ok(())
    }

    /// Lays out one event starting at `start`.
    pub fn plan<R: Rng + ?Sized>(&self, duration: f64, start: Pose, rng: &mut R) -> Plan {
        let velocity = match self.motion {
            Motion::Walk { min_speed, max_speed, .. } => {
                let speed = rng.random_range(min_speed..=max_speed);
                let dir = rng.random_range(0.0..TAU);
                [speed * dir.cos(), speed * dir.sin()]
            }
            _ => [0.0, 0.0],
        };
        let heading = if velocity == [0.0, 0.0] { start.heading } else { velocity[1].atan2(velocity[0]) };
        let phase = [rng.random_range(0.0..TAU), rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)];
        Plan {
            model: self.clone(),
            duration,
            start: Pose { heading, ..start },
            velocity,
            phase,
        }
    }
}

/// Horizontal position and body heading carried from one event to the next.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            x: rng.random_range(AREA_X.0 + START_MARGIN..AREA_X.1 - START_MARGIN),
            y: rng.random_range(AREA_Y.0 + START_MARGIN..AREA_Y.1 - START_MARGIN),
            heading: rng.random_range(0.0..TAU),
        }
    }
}

/// Blob parameters at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlobState {
    pub center: Point,
    pub extent: [f64; 3],
    pub heading: f64,
}

impl BlobState {
    pub fn lerp(&self, other: &BlobState, s: f64) -> BlobState {
        let l = |a: f64, b: f64| a + (b - a) * s;
        // shortest angular path
        let dh = (other.heading - self.heading + PI).rem_euclid(TAU) - PI;
        BlobState {
            center: Point::new(l(self.center.x, other.center.x), l(self.center.y, other.center.y), l(self.center.z, other.center.z)),
            extent: [0, 1, 2].map(|i| l(self.extent[i], other.extent[i])),
            heading: self.heading + dh * s,
        }
    }

    pub fn sample_points<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Point> {
        let (s, c) = self.heading.sin_cos();
        (0..n)
            .map(|_| {
                let a: f64 = rng.sample::<f64, _>(StandardNormal) * self.extent[0];
                let b: f64 = rng.sample::<f64, _>(StandardNormal) * self.extent[1];
                let z: f64 = rng.sample::<f64, _>(StandardNormal) * self.extent[2];
                Point::new(self.center.x + a * c - b * s, self.center.y + a * s + b * c, self.center.z + z)
            })
            .collect()
    }
}

/// One event's trajectory, evaluated at any time in `[0, duration]`.
#[derive(Clone, Debug)]
pub struct Plan {
    model: ActivityModel,
    duration: f64,
    start: Pose,
    velocity: [f64; 2],
    phase: [f64; 3],
}

/// Sway frequency of still activities, Hz.
const SWAY_HZ: f64 = 0.3;

fn reflect(v: f64, (lo, hi): (f64, f64)) -> f64 {
    let w = hi - lo;
    let m = (v - lo).rem_euclid(2.0 * w);
    lo + if m > w { 2.0 * w - m } else { m }
}

/// Cosine ease from 0 to 1 over `u ∈ [0, 1]`, strictly increasing inside.
pub fn ease(u: f64) -> f64 {
    (1.0 - (PI * u.clamp(0.0, 1.0)).cos()) / 2.0
}

impl Plan {
    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn state(&self, t: f64) -> BlobState {
        let m = &self.model;
        let h = self.start.heading;
        match m.motion {
            Motion::Still { height, sway } => {
                let w = TAU * SWAY_HZ * t;
                BlobState {
                    center: Point::new(
                        self.start.x + sway * (w + self.phase[0]).sin(),
                        self.start.y + sway * (w + self.phase[1]).sin(),
                        height + 0.5 * sway * (w + self.phase[2]).sin(),
                    ),
                    extent: m.extent_start,
                    heading: h,
                }
            }
            Motion::Walk { height, .. } => BlobState {
                center: Point::new(
                    reflect(self.start.x + self.velocity[0] * t, AREA_X),
                    reflect(self.start.y + self.velocity[1] * t, AREA_Y),
                    height,
                ),
                extent: m.extent_start,
                heading: h,
            },
            Motion::Transition { from, to, shift } => {
                let e = ease(if self.duration > 0.0 { t / self.duration } else { 1.0 });
                let (s, c) = h.sin_cos();
                BlobState {
                    center: Point::new(self.start.x + shift * e * c, self.start.y + shift * e * s, from + (to - from) * e),
                    extent: [0, 1, 2].map(|i| m.extent_start[i] + (m.extent_end[i] - m.extent_start[i]) * e),
                    heading: h,
                }
            }
        }
    }

    pub fn end_pose(&self) -> Pose {
        let c = self.state(self.duration).center;
        Pose { x: c.x, y: c.y, heading: self.start.heading }
    }
}

fn sample_frame<R: Rng + ?Sized>(state: &BlobState, profile: PointCountProfile, rng: &mut R) -> Vec<Point> {
    let n = profile.sample(rng);
    state.sample_points(n, rng)
}

/// Frames for one independent activity of `duration` seconds at `rate` Hz,
/// all labeled with the model's class.
pub fn gen_discrete<R: Rng + ?Sized>(
    model: &ActivityModel,
    duration: f64,
    rate: f64,
    profile: PointCountProfile,
    rng: &mut R,
) -> Result<Vec<Frame>> {
    check_rate(rate)?;
    if !(duration * rate >= 1.0 - 1e-9) {
        return Err(Error::Param(format!("duration {duration} s is shorter than one frame at {rate} Hz")));
    }
    let n = crate::pcloud::seconds_to_frames(duration, rate).max(1);
    let plan = model.plan(duration, Pose::random(rng), rng);
    Ok((0..n)
        .map(|i| {
            let t = i as f64 / rate;
            Frame::new(t, sample_frame(&plan.state(t), profile, rng)).with_label(Label::Activity(model.class))
        })
        .collect())
}

fn check_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(Error::Param(format!("frame rate {rate} must be positive")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptEvent {
    pub class: usize,
    pub duration: f64,
}

/// Ordered events with blank gaps between consecutive ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub events: Vec<ScriptEvent>,
    /// Gap duration range, seconds.
    pub gap: (f64, f64),
}

/// Activities that may follow each class in a scenario.
pub fn successors(class: usize) -> &'static [usize] {
    match class {
        WALKING => &[STANDING, FALLING],
        STANDING => &[WALKING, FALLING],
        FALLING => &[LYING],
        LYING => &[RISING],
        RISING => &[STANDING, WALKING],
        _ => &[],
    }
}

impl ScenarioScript {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.gap;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Config(format!("bad gap range {lo}..{hi}")));
        }
        if self.events.iter().any(|e| !(e.duration > 0.0) || !e.duration.is_finite()) {
            return Err(Error::Config("event durations must be positive".into()));
        }
        Ok(())
    }

    /// A walk through the transition graph starting from walking or standing.
    pub fn random<R: Rng + ?Sized>(models: &[ActivityModel], events: usize, gap: (f64, f64), rng: &mut R) -> Result<Self> {
        let mut out = Vec::with_capacity(events);
        let mut class = if rng.random_bool(0.5) { WALKING } else { STANDING };
        for _ in 0..events {
            let model = find_model(models, class)?;
            let (lo, hi) = model.duration;
            out.push(ScriptEvent { class, duration: rng.random_range(lo..=hi) });
            let next = successors(class);
            class = next[rng.random_range(0..next.len())];
        }
        Ok(Self { events: out, gap })
    }

    pub fn total_duration(&self) -> f64 {
        let gaps = self.events.len().saturating_sub(1) as f64;
        self.events.iter().map(|e| e.duration).sum::<f64>() + gaps * (self.gap.0 + self.gap.1) / 2.0
    }
}

fn find_model(models: &[ActivityModel], class: usize) -> Result<&ActivityModel> {
    models
        .iter()
        .find(|m| m.class == class)
        .ok_or_else(|| Error::Config(format!("no activity model for class {class}")))
}

/// How transition gaps look: fewer points, spread wider than either
/// neighbor, around a center that wanders incoherently from frame to frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GapStyle {
    /// Multiplier on the sampled point count (at least one point is kept).
    pub point_scale: f64,
    /// Multiplier on the interpolated blob extent.
    pub spread_scale: f64,
    /// Standard deviation of the per-frame center offset, meters.
    pub jitter: f64,
}

impl Default for GapStyle {
    fn default() -> Self {
        Self { point_scale: 0.35, spread_scale: 1.8, jitter: 0.35 }
    }
}

/// Frames for a scripted scenario: each event for `round(duration·rate)`
/// frames, separated by blank-labeled gaps of `round(gap·rate)` frames.
pub fn gen_continuous<R: Rng + ?Sized>(
    script: &ScenarioScript,
    models: &[ActivityModel],
    rate: f64,
    profile: PointCountProfile,
    gap_style: GapStyle,
    rng: &mut R,
) -> Result<Vec<Frame>> {
    check_rate(rate)?;
    script.validate()?;
    let mut frames = Vec::new();
    let mut pose = Pose::random(rng);
    let mut previous: Option<BlobState> = None;
    for event in &script.events {
        let model = find_model(models, event.class)?;
        let plan = model.plan(event.duration, pose, rng);
        if let Some(prev) = previous {
            let (lo, hi) = script.gap;
            let gap = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let n_gap = crate::pcloud::seconds_to_frames(gap, rate);
            let next = plan.state(0.0);
            for j in 0..n_gap {
                let mut state = prev.lerp(&next, (j + 1) as f64 / (n_gap + 1) as f64);
                state.extent = state.extent.map(|e| e * gap_style.spread_scale);
                if gap_style.jitter > 0.0 {
                    let offset: [f64; 3] = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal) * gap_style.jitter);
                    state.center.x += offset[0];
                    state.center.y += offset[1];
                    state.center.z = (state.center.z + offset[2]).max(0.05);
                }
                let n = ((profile.sample(rng) as f64 * gap_style.point_scale).round() as usize).max(1);
                let t = frames.len() as f64 / rate;
                frames.push(Frame::new(t, state.sample_points(n, rng)).with_label(Label::Blank));
            }
        }
        let n = crate::pcloud::seconds_to_frames(event.duration, rate);
        for i in 0..n {
            let state = plan.state(i as f64 / rate);
            let t = frames.len() as f64 / rate;
            frames.push(Frame::new(t, sample_frame(&state, profile, rng)).with_label(Label::Activity(event.class)));
        }
        if n > 0 {
            previous = Some(plan.state((n - 1) as f64 / rate));
        }
        pose = plan.end_pose();
    }
    Ok(frames)
}

/// Everything the generator needs, loadable from the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub profile: PointCountProfile,
    pub rate: f64,
    /// Minimum total discrete seconds generated per class.
    pub seconds_per_class: f64,
    /// Continuous scenarios and events per scenario.
    pub scenarios: usize,
    pub events_per_scenario: usize,
    pub gap: (f64, f64),
    pub gap_style: GapStyle,
    pub activities: Vec<ActivityModel>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            profile: PointCountProfile::Disc,
            rate: 10.0,
            seconds_per_class: 60.0,
            scenarios: 4,
            events_per_scenario: 8,
            gap: (1.0, 2.5),
            gap_style: GapStyle::default(),
            activities: ActivityModel::defaults(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        check_rate(self.rate)?;
        for m in &self.activities {
            m.validate()?;
            if m.class >= ACTIVITY_NAMES.len() {
                return Err(Error::Config(format!("class id {} out of range", m.class)));
            }
        }
        Ok(())
    }

    /// Independent single-activity recordings, at least `seconds_per_class`
    /// seconds of each class.
    pub fn discrete_dataset(&self, seed: u64) -> Result<Vec<Recording>> {
        self.validate()?;
        let mut out = Vec::new();
        for model in &self.activities {
            let mut total = 0.0;
            let mut k = 0u64;
            while total < self.seconds_per_class {
                let mut rng = rng_for(seed, &[stream::SYNTH, 0, model.class as u64, k]);
                let (lo, hi) = model.duration;
                let duration = rng.random_range(lo..=hi);
                let frames = gen_discrete(model, duration, self.rate, self.profile, &mut rng)?;
                total += frames.len() as f64 / self.rate;
                out.push(Recording::new(format!("{}-{k:03}", ACTIVITY_NAMES[model.class]), frames));
                k += 1;
            }
        }
        Ok(out)
    }

    /// Random continuous scenarios with blank gaps.
    pub fn continuous_dataset(&self, seed: u64) -> Result<Vec<Recording>> {
        self.validate()?;
        (0..self.scenarios)
            .map(|k| {
                let mut rng = rng_for(seed, &[stream::SYNTH, 1, k as u64]);
                let script = ScenarioScript::random(&self.activities, self.events_per_scenario, self.gap, &mut rng)?;
                let frames = gen_continuous(&script, &self.activities, self.rate, self.profile, self.gap_style, &mut rng)?;
                Ok(Recording::new(format!("scenario-{k:03}"), frames))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF, Normal as SNormal};

    fn model(class: usize) -> ActivityModel {
        ActivityModel::defaults().into_iter().find(|m| m.class == class).unwrap()
    }

    #[test]
    fn standing_height_constant() {
        let mut rng = rng_for(1, &[]);
        let plan = model(STANDING).plan(10.0, Pose::random(&mut rng), &mut rng);
        for i in 0..100 {
            let z = plan.state(i as f64 / 10.0).center.z;
            assert!((z - 0.9).abs() <= 0.05);
        }
        // frame centroids average to the same height
        let frames = gen_discrete(&model(STANDING), 30.0, 10.0, PointCountProfile::Disc, &mut rng).unwrap();
        let mean: f64 = frames.iter().map(|f| f.centroid().unwrap().z).sum::<f64>() / frames.len() as f64;
        assert!((mean - 0.9).abs() < 0.05, "{mean}");
    }

    #[test]
    fn falling_strictly_descends() {
        let mut rng = rng_for(2, &[]);
        let plan = model(FALLING).plan(3.0, Pose::random(&mut rng), &mut rng);
        assert!((plan.state(0.0).center.z - 0.9).abs() < 1e-12);
        assert!((plan.state(3.0).center.z - 0.2).abs() < 1e-12);
        let mut last = f64::INFINITY;
        for i in 0..=30 {
            let z = plan.state(i as f64 / 10.0).center.z;
            assert!(z < last);
            last = z;
        }
    }

    #[test]
    fn trajectories_stay_in_area() {
        let mut rng = rng_for(3, &[]);
        for m in ActivityModel::defaults() {
            for _ in 0..20 {
                let plan = m.plan(20.0, Pose::random(&mut rng), &mut rng);
                for i in 0..=200 {
                    let c = plan.state(i as f64 / 10.0).center;
                    assert!(c.x >= AREA_X.0 && c.x <= AREA_X.1);
                    assert!(c.y >= AREA_Y.0 && c.y <= AREA_Y.1);
                    assert!(c.z >= AREA_Z.0 && c.z <= AREA_Z.1);
                }
            }
        }
    }

    #[test]
    fn walking_speed_in_range() {
        let mut rng = rng_for(4, &[]);
        let plan = model(WALKING).plan(1.0, Pose { x: 0.0, y: 2.25, heading: 0.0 }, &mut rng);
        let a = plan.state(0.0).center;
        let b = plan.state(0.1).center;
        let speed = a.distance(&b) / 0.1;
        assert!((0.8..=1.2).contains(&speed), "{speed}");
    }

    #[test]
    fn reflect_folds_into_interval() {
        assert_eq!(reflect(0.5, (0.0, 1.0)), 0.5);
        assert!((reflect(1.25, (0.0, 1.0)) - 0.75).abs() < 1e-12);
        assert!((reflect(-0.25, (0.0, 1.0)) - 0.25).abs() < 1e-12);
        assert!((reflect(2.25, (0.0, 1.0)) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn mmact_counts() {
        let mut rng = rng_for(5, &[]);
        let draws: Vec<usize> = (0..100_000).map(|_| PointCountProfile::Mmact.sample(&mut rng)).collect();
        assert!(draws.iter().all(|&n| (7..=25).contains(&n)));
        let capped = draws.iter().filter(|&&n| n == 25).count() as f64 / draws.len() as f64;
        assert!((capped - 0.15).abs() <= 0.02, "{capped}");
        let rest: Vec<f64> = draws.iter().filter(|&&n| n < 25).map(|&n| n as f64).collect();
        let mean = rest.iter().sum::<f64>() / rest.len() as f64;
        assert!((13.5..=15.5).contains(&mean), "{mean}");
    }

    /// Probability mass of `round(N(mean, sd))` conditioned on `[lo, hi]`.
    fn rounded_normal_pmf(mean: f64, sd: f64, lo: usize, hi: usize) -> Vec<f64> {
        let n = SNormal::new(mean, sd).unwrap();
        let raw: Vec<f64> = (lo..=hi).map(|k| n.cdf(k as f64 + 0.5) - n.cdf(k as f64 - 0.5)).collect();
        let z: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / z).collect()
    }

    #[test]
    fn disc_counts_fit_chi_square() {
        let mut rng = rng_for(6, &[]);
        let draws = 10_000;
        let mut observed = vec![0f64; 65];
        for _ in 0..draws {
            observed[PointCountProfile::Disc.sample(&mut rng)] += 1.0;
        }
        assert_eq!(observed[0], 0.0);
        let pmf = rounded_normal_pmf(32.0, 12.0, 1, 64);
        // pool sparse tail bins so every expected count is at least 5
        let mut stat = 0.0;
        let mut bins = 0;
        let (mut o_acc, mut e_acc) = (0.0, 0.0);
        for k in 1..=64 {
            o_acc += observed[k];
            e_acc += pmf[k - 1] * draws as f64;
            if e_acc >= 5.0 || k == 64 {
                stat += (o_acc - e_acc).powi(2) / e_acc;
                bins += 1;
                o_acc = 0.0;
                e_acc = 0.0;
            }
        }
        let critical = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(0.999);
        assert!(stat < critical, "chi2 {stat} over {bins} bins, critical {critical}");
        let mode = (1..=64).max_by(|&a, &b| observed[a].partial_cmp(&observed[b]).unwrap()).unwrap();
        assert!((26..=38).contains(&mode), "{mode}");
    }

    #[test]
    fn empty_script_is_empty() {
        let mut rng = rng_for(7, &[]);
        let script = ScenarioScript { events: vec![], gap: (1.0, 1.0) };
        let frames = gen_continuous(&script, &ActivityModel::defaults(), 10.0, PointCountProfile::Disc, GapStyle::default(), &mut rng).unwrap();
        assert!(frames.is_empty());
    }

    fn run_lengths(frames: &[Frame]) -> Vec<(Option<Label>, usize)> {
        let mut out: Vec<(Option<Label>, usize)> = Vec::new();
        for f in frames {
            match out.last_mut() {
                Some((l, n)) if *l == f.label => *n += 1,
                _ => out.push((f.label, 1)),
            }
        }
        out
    }

    #[test]
    fn one_second_gap_is_ten_blank_frames() {
        let mut rng = rng_for(8, &[]);
        let script = ScenarioScript {
            events: vec![ScriptEvent { class: WALKING, duration: 3.0 }, ScriptEvent { class: STANDING, duration: 2.0 }],
            gap: (1.0, 1.0),
        };
        let frames = gen_continuous(&script, &ActivityModel::defaults(), 10.0, PointCountProfile::Disc, GapStyle::default(), &mut rng).unwrap();
        assert_eq!(
            run_lengths(&frames),
            vec![(Some(Label::Activity(WALKING)), 30), (Some(Label::Blank), 10), (Some(Label::Activity(STANDING)), 20)]
        );
        for (i, f) in frames.iter().enumerate() {
            assert!((f.timestamp - i as f64 / 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn run_lengths_follow_script() {
        let mut rng = rng_for(9, &[]);
        let models = ActivityModel::defaults();
        for _ in 0..10 {
            let script = ScenarioScript::random(&models, 6, (0.0, 0.0), &mut rng).unwrap();
            let frames = gen_continuous(&script, &models, 10.0, PointCountProfile::Disc, GapStyle::default(), &mut rng).unwrap();
            let mut expected: Vec<(Option<Label>, usize)> = Vec::new();
            for e in &script.events {
                let n = (e.duration * 10.0).round() as usize;
                match expected.last_mut() {
                    Some((l, k)) if *l == Some(Label::Activity(e.class)) => *k += n,
                    _ => expected.push((Some(Label::Activity(e.class)), n)),
                }
            }
            assert_eq!(run_lengths(&frames), expected);
        }
    }

    #[test]
    fn scripts_follow_transition_graph() {
        let mut rng = rng_for(10, &[]);
        let script = ScenarioScript::random(&ActivityModel::defaults(), 50, (1.0, 2.0), &mut rng).unwrap();
        for w in script.events.windows(2) {
            assert!(successors(w[0].class).contains(&w[1].class));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig { seconds_per_class: 10.0, scenarios: 1, ..SynthConfig::default() };
        assert_eq!(cfg.discrete_dataset(3).unwrap(), cfg.discrete_dataset(3).unwrap());
        assert_eq!(cfg.continuous_dataset(3).unwrap(), cfg.continuous_dataset(3).unwrap());
        assert_ne!(cfg.discrete_dataset(3).unwrap(), cfg.discrete_dataset(4).unwrap());
    }

    #[test]
    fn dataset_covers_each_class() {
        let cfg = SynthConfig::default();
        let data = cfg.discrete_dataset(42).unwrap();
        for class in 0..5 {
            let secs: f64 = data
                .iter()
                .filter(|r| r.label() == Some(Label::Activity(class)))
                .map(|r| r.frames.len() as f64 / cfg.rate)
                .sum();
            assert!(secs >= 60.0);
        }
    }

    /// (mean height, height slope, horizontal speed) of a window's frame centroids.
    fn window_features(frames: &[Frame], rate: f64) -> [f64; 3] {
        let c: Vec<Point> = frames.iter().map(|f| f.centroid().unwrap()).collect();
        let n = c.len() as f64;
        let ts: Vec<f64> = (0..c.len()).map(|i| i as f64 / rate).collect();
        let tm = ts.iter().sum::<f64>() / n;
        let zm = c.iter().map(|p| p.z).sum::<f64>() / n;
        let cov: f64 = ts.iter().zip(&c).map(|(t, p)| (t - tm) * (p.z - zm)).sum();
        let var: f64 = ts.iter().map(|t| (t - tm).powi(2)).sum();
        let half = c.len() / 2;
        let mean = |s: &[Point]| {
            let k = s.len() as f64;
            (s.iter().map(|p| p.x).sum::<f64>() / k, s.iter().map(|p| p.y).sum::<f64>() / k)
        };
        let (ax, ay) = mean(&c[..half]);
        let (bx, by) = mean(&c[half..]);
        let speed = ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt() / (n / 2.0 / rate);
        [zm, cov / var, speed]
    }

    fn featurize(data: &[Recording], rate: f64) -> Vec<([f64; 3], usize)> {
        let mut out = Vec::new();
        for r in data {
            let class = r.label().and_then(Label::activity).unwrap();
            for s in crate::pcloud::window_starts(r.frames.len(), 20, 3) {
                out.push((window_features(&r.frames[s..s + 20], rate), class));
            }
        }
        out
    }

    #[test]
    fn nearest_centroid_baseline_separates_classes() {
        let cfg = SynthConfig::default();
        let train = featurize(&cfg.discrete_dataset(1).unwrap(), cfg.rate);
        let test = featurize(&cfg.discrete_dataset(2).unwrap(), cfg.rate);
        let mut scale = [0.0; 3];
        for d in 0..3 {
            let m = train.iter().map(|(f, _)| f[d]).sum::<f64>() / train.len() as f64;
            scale[d] = (train.iter().map(|(f, _)| (f[d] - m).powi(2)).sum::<f64>() / train.len() as f64).sqrt();
        }
        let mut centroids = [[0.0; 3]; 5];
        let mut counts = [0.0; 5];
        for (f, c) in &train {
            for d in 0..3 {
                centroids[*c][d] += f[d] / scale[d];
            }
            counts[*c] += 1.0;
        }
        for c in 0..5 {
            for d in 0..3 {
                centroids[c][d] /= counts[c];
            }
        }
        let correct = test
            .iter()
            .filter(|(f, c)| {
                let dist = |k: usize| (0..3).map(|d| (f[d] / scale[d] - centroids[k][d]).powi(2)).sum::<f64>();
                (0..5).min_by(|&a, &b| dist(a).partial_cmp(&dist(b)).unwrap()).unwrap() == *c
            })
            .count();
        let acc = correct as f64 / test.len() as f64;
        assert!(acc >= 0.9, "nearest-centroid accuracy {acc}");
    }
}

//! Segment-wise point cloud augmentation.
//!
//! One set of parameters is drawn per training segment and applied to all of
//! its frames, so motion within the window stays physically consistent:
//! rotation about the vertical axis through the segment centroid, horizontal
//! and vertical stretch, then a translation (or per-point jitter).

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pcloud::{Point, Segment};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StretchMode {
    /// Scale offsets from the segment centroid; the centroid stays put.
    #[default]
    CentroidRelative,
    /// Scale raw coordinates about the radar origin.
    OriginRelative,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PerturbMode {
    /// One translation vector for the whole segment.
    #[default]
    Translate,
    /// Independent Gaussian displacement per point.
    Jitter { sigma: f64 },
}

/// Concrete augmentation parameters for one segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpcaParams {
    pub theta: f64,
    pub stretch_horizontal: f64,
    pub stretch_vertical: f64,
    pub offset: [f64; 3],
    pub rotate: bool,
    pub stretch: bool,
    pub perturb: bool,
    pub stretch_mode: StretchMode,
    pub perturb_mode: PerturbMode,
}

impl SpcaParams {
    pub fn identity() -> Self {
        Self {
            theta: 0.0,
            stretch_horizontal: 1.0,
            stretch_vertical: 1.0,
            offset: [0.0; 3],
            rotate: false,
            stretch: false,
            perturb: false,
            stretch_mode: StretchMode::CentroidRelative,
            perturb_mode: PerturbMode::Translate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_factor(self.stretch_horizontal)?;
        check_factor(self.stretch_vertical)?;
        if !self.theta.is_finite() || self.offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::Param("augmentation parameters must be finite".into()));
        }
        if let PerturbMode::Jitter { sigma } = self.perturb_mode {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::Param(format!("jitter sigma {sigma} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Sampling ranges for per-segment parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpcaRanges {
    pub rotate: bool,
    pub stretch: bool,
    pub perturb: bool,
    pub stretch_min: f64,
    pub stretch_max: f64,
    /// Bound on each translation component, meters.
    pub perturb_bound: f64,
    pub stretch_mode: StretchMode,
    pub perturb_mode: PerturbMode,
}

impl Default for SpcaRanges {
    fn default() -> Self {
        Self {
            rotate: true,
            stretch: true,
            perturb: true,
            stretch_min: 0.8,
            stretch_max: 1.2,
            perturb_bound: 0.05,
            stretch_mode: StretchMode::CentroidRelative,
            perturb_mode: PerturbMode::Translate,
        }
    }
}

impl SpcaRanges {
    pub fn disabled() -> Self {
        Self {
            rotate: false,
            stretch: false,
            perturb: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stretch_min > 0.0 && self.stretch_min <= self.stretch_max) {
            return Err(Error::Config(format!(
                "stretch range [{}, {}] must be positive and ordered",
                self.stretch_min, self.stretch_max
            )));
        }
        if !(self.perturb_bound >= 0.0) {
            return Err(Error::Config("perturb bound must be >= 0".into()));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SpcaParams {
        // Draw every value unconditionally so toggling one transform does not
        // shift the random stream seen by the others.
        let theta = rng.random_range(0.0..TAU);
        let mut stretch = || {
            if self.stretch_max > self.stretch_min {
                rng.random_range(self.stretch_min..self.stretch_max)
            } else {
                self.stretch_min
            }
        };
        let s_h = stretch();
        let s_v = stretch();
        let b = self.perturb_bound;
        let mut offset = [0.0; 3];
        for o in &mut offset {
            *o = if b > 0.0 { rng.random_range(-b..=b) } else { 0.0 };
        }
        SpcaParams {
            theta,
            stretch_horizontal: s_h,
            stretch_vertical: s_v,
            offset,
            rotate: self.rotate,
            stretch: self.stretch,
            perturb: self.perturb,
            stretch_mode: self.stretch_mode,
            perturb_mode: self.perturb_mode,
        }
    }
}

fn check_factor(s: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::Param(format!("stretch factor {s} must be positive")))
    }
}

/// Rotates every point about the vertical axis through the segment centroid.
/// Heights are untouched.
pub fn rotate_horizontal(segment: &Segment, theta: f64) -> Segment {
    let c = segment.centroid();
    let (sin, cos) = theta.sin_cos();
    let mut out = segment.clone();
    for p in out.points_mut() {
        let dx = p.x - c.x;
        let dy = p.y - c.y;
        p.x = c.x + cos * dx - sin * dy;
        p.y = c.y + sin * dx + cos * dy;
    }
    out
}

pub fn stretch(
    segment: &Segment,
    horizontal: f64,
    vertical: f64,
    mode: StretchMode,
) -> Result<Segment> {
    check_factor(horizontal)?;
    check_factor(vertical)?;
    let anchor = match mode {
        StretchMode::CentroidRelative => segment.centroid(),
        StretchMode::OriginRelative => Point::default(),
    };
    let mut out = segment.clone();
    if horizontal == 1.0 && vertical == 1.0 {
        return Ok(out);
    }
    for p in out.points_mut() {
        p.x = anchor.x + (p.x - anchor.x) * horizontal;
        p.y = anchor.y + (p.y - anchor.y) * horizontal;
        p.z = anchor.z + (p.z - anchor.z) * vertical;
    }
    Ok(out)
}

/// Translates the whole segment by `offset`.
pub fn perturb(segment: &Segment, offset: [f64; 3]) -> Segment {
    let mut out = segment.clone();
    if offset == [0.0; 3] {
        return out;
    }
    for p in out.points_mut() {
        p.x += offset[0];
        p.y += offset[1];
        p.z += offset[2];
    }
    out
}

/// Adds independent N(0, sigma²) noise to every coordinate of every point.
pub fn jitter<R: Rng + ?Sized>(segment: &Segment, sigma: f64, rng: &mut R) -> Result<Segment> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Param(e.to_string()))?;
    let mut out = segment.clone();
    for p in out.points_mut() {
        p.x += normal.sample(rng);
        p.y += normal.sample(rng);
        p.z += normal.sample(rng);
    }
    Ok(out)
}

/// rotate → stretch → perturb, skipping disabled stages.
pub fn augment<R: Rng + ?Sized>(segment: &Segment, params: &SpcaParams, rng: &mut R) -> Result<Segment> {
    params.validate()?;
    let mut out = if params.rotate {
        rotate_horizontal(segment, params.theta)
    } else {
        segment.clone()
    };
    if params.stretch {
        out = stretch(
            &out,
            params.stretch_horizontal,
            params.stretch_vertical,
            params.stretch_mode,
        )?;
    }
    if params.perturb {
        out = match params.perturb_mode {
            PerturbMode::Translate => perturb(&out, params.offset),
            PerturbMode::Jitter { sigma } => jitter(&out, sigma, rng)?,
        };
    }
    Ok(out)
}

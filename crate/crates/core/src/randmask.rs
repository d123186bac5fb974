//! Seeded synthesis of occlusion masks: four spatial shapes animated by six
//! temporal dynamics.
//!
//! Coordinates are `[row, col]` in pixels. A clip is planned first
//! ([`plan`]: one [`Placement`] per frame) and then rasterized; the plan is
//! exposed so trajectories can be checked independently of rasterization.
//!
//! Draw order. Stream 0 of the seed carries clip parameters, always drawn in
//! this order whatever the shape or dynamics: two size fractions, the start
//! row, the start col, the interval start, the interval end, the speed, the
//! heading. Stream 1 carries per-frame draws: for `per_frame_random` two
//! size fractions, a row and a col per frame; for `per_frame_jitter` a row
//! offset and a col offset per frame. Pinned overrides replace drawn values
//! after the fact and never change the draw order.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::MaskSequence;
use crate::rng::SeededStream;

const CLIP_STREAM: u64 = 0;
const FRAME_STREAM: u64 = 1;
const KIND_STREAM: u64 = 2;

/// Steepness of the logistic used by the S-shaped trajectory.
const S_CURVE_STEEPNESS: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Rectangle,
    Circle,
    Ellipse,
    FullFrame,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Rectangle, Shape::Circle, Shape::Ellipse, Shape::FullFrame];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    FullSpan,
    Interval,
    PerFrameRandom,
    PerFrameJitter,
    ConstantSpeed,
    VariableSpeed,
}

impl Dynamics {
    pub const ALL: [Dynamics; 6] = [
        Dynamics::FullSpan,
        Dynamics::Interval,
        Dynamics::PerFrameRandom,
        Dynamics::PerFrameJitter,
        Dynamics::ConstantSpeed,
        Dynamics::VariableSpeed,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curve {
    /// Row offset grows with the square of normalized time.
    Parabolic,
    /// Row offset follows a normalized logistic of normalized time.
    SShaped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskGenSpec {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub shape: Shape,
    pub dynamics: Dynamics,
    /// Full extent of the shape as a fraction of `min(height, width)`.
    #[serde(default = "default_size_range")]
    pub size_range: [f64; 2],
    #[serde(default = "default_jitter")]
    pub jitter_amplitude: u32,
    /// Speed bounds in pixels per frame.
    #[serde(default = "default_velocity_range")]
    pub velocity_range: [f64; 2],
    #[serde(default = "default_curve")]
    pub curve: Curve,
    #[serde(default)]
    pub seed: u64,
    /// Pinned start center `[row, col]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
    /// Pinned velocity `[row, col]` in pixels per frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<[f64; 2]>,
    /// Pinned half extents `[row, col]`; a circle uses the first entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_extent: Option<[f64; 2]>,
    /// Pinned active frame range for interval dynamics, inclusive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[usize; 2]>,
}

fn default_size_range() -> [f64; 2] {
    [0.1, 0.4]
}
fn default_jitter() -> u32 {
    2
}
fn default_velocity_range() -> [f64; 2] {
    [0.5, 3.0]
}
fn default_curve() -> Curve {
    Curve::Parabolic
}

impl MaskGenSpec {
    pub fn new(frames: usize, height: usize, width: usize, shape: Shape, dynamics: Dynamics) -> Self {
        Self {
            frames,
            height,
            width,
            shape,
            dynamics,
            size_range: default_size_range(),
            jitter_amplitude: default_jitter(),
            velocity_range: default_velocity_range(),
            curve: default_curve(),
            seed: 0,
            center: None,
            velocity: None,
            half_extent: None,
            interval: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.frames == 0 || self.height == 0 || self.width == 0 {
            return cfg(format!(
                "dimensions must be >= 1, got {}x{}x{}",
                self.frames, self.height, self.width
            ));
        }
        let [lo, hi] = self.size_range;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return cfg(format!("size_range must satisfy 0 < low <= high < 1, got [{lo}, {hi}]"));
        }
        let [vlo, vhi] = self.velocity_range;
        if !(vlo.is_finite() && vhi.is_finite() && 0.0 <= vlo && vlo <= vhi) {
            return cfg(format!("velocity_range must satisfy 0 <= low <= high, got [{vlo}, {vhi}]"));
        }
        if let Some([hy, hx]) = self.half_extent {
            let hx = if self.shape == Shape::Circle { hy } else { hx };
            if !(hy >= 0.0 && hx >= 0.0) {
                return cfg(format!("half_extent must be non-negative, got [{hy}, {hx}]"));
            }
            if 2.0 * hy + 1.0 > self.height as f64 || 2.0 * hx + 1.0 > self.width as f64 {
                return cfg(format!(
                    "shape with half extents [{hy}, {hx}] does not fit a {}x{} frame",
                    self.height, self.width
                ));
            }
        }
        if let Some([cy, cx]) = self.center {
            if !(0.0..=(self.height - 1) as f64).contains(&cy) || !(0.0..=(self.width - 1) as f64).contains(&cx) {
                return cfg(format!("center [{cy}, {cx}] outside the frame"));
            }
        }
        if let Some(v) = self.velocity {
            if !v.iter().all(|c| c.is_finite()) {
                return cfg("velocity must be finite".into());
            }
        }
        if let Some([s, e]) = self.interval {
            if s > e || e >= self.frames {
                return cfg(format!("interval [{s}, {e}] invalid for {} frames", self.frames));
            }
        }
        Ok(())
    }
}

/// Shape kind, dynamics and curve drawn uniformly from the seed, for callers
/// that do not pin them.
pub fn random_kinds(seed: u64) -> (Shape, Dynamics, Curve) {
    let mut rng = SeededStream::new(seed, KIND_STREAM);
    let shape = Shape::ALL[rng.int_inclusive(0, 3) as usize];
    let dynamics = Dynamics::ALL[rng.int_inclusive(0, 5) as usize];
    let curve = if rng.bernoulli(0.5) {
        Curve::Parabolic
    } else {
        Curve::SShaped
    };
    (shape, dynamics, curve)
}

/// Where the shape sits in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub active: bool,
    /// Center before clamping to the frame.
    pub raw_center: [f64; 2],
    pub half_extent: [f64; 2],
}

impl Placement {
    pub fn center(&self, height: usize, width: usize) -> [f64; 2] {
        [
            self.raw_center[0].clamp(0.0, (height - 1) as f64),
            self.raw_center[1].clamp(0.0, (width - 1) as f64),
        ]
    }

    /// Integer pixel center the rasterizer uses.
    pub fn pixel_center(&self, height: usize, width: usize) -> [i64; 2] {
        let [cy, cx] = self.center(height, width);
        [cy.round() as i64, cx.round() as i64]
    }
}

fn half_from_fractions(spec: &MaskGenSpec, a: f64, b: f64) -> [f64; 2] {
    let base = spec.height.min(spec.width) as f64;
    let hy = (a * base / 2.0).max(0.5);
    let hx = (b * base / 2.0).max(0.5);
    match spec.shape {
        Shape::Circle => [hy, hy],
        _ => [hy, hx],
    }
}

/// Normalized time of frame `t` in `[0, 1]`.
fn unit_time(t: usize, frames: usize) -> f64 {
    if frames <= 1 {
        0.0
    } else {
        t as f64 / (frames - 1) as f64
    }
}

fn s_curve(tau: f64) -> f64 {
    let logistic = |x: f64| 1.0 / (1.0 + (-x).exp());
    let k = S_CURVE_STEEPNESS;
    let lo = logistic(-k / 2.0);
    let hi = logistic(k / 2.0);
    (logistic(k * (tau - 0.5)) - lo) / (hi - lo)
}

/// Per-frame placements for `spec`.
pub fn plan(spec: &MaskGenSpec) -> Result<Vec<Placement>> {
    spec.validate()?;
    let (f, h, w) = (spec.frames, spec.height, spec.width);
    let [lo, hi] = spec.size_range;

    let mut clip = SeededStream::new(spec.seed, CLIP_STREAM);
    let size_a = clip.uniform(lo, hi);
    let size_b = clip.uniform(lo, hi);
    let row = clip.int_inclusive(0, h as i64 - 1) as f64;
    let col = clip.int_inclusive(0, w as i64 - 1) as f64;
    let iv_start = clip.int_inclusive(0, f as i64 - 1) as usize;
    let iv_end = clip.int_inclusive(iv_start as i64, f as i64 - 1) as usize;
    let speed = clip.uniform(spec.velocity_range[0], spec.velocity_range[1]);
    let heading = clip.uniform(0.0, 2.0 * PI);

    let half = match spec.half_extent {
        Some([hy, _]) if spec.shape == Shape::Circle => [hy, hy],
        Some(he) => he,
        None => half_from_fractions(spec, size_a, size_b),
    };
    let start = spec.center.unwrap_or([row, col]);
    let velocity = spec
        .velocity
        .unwrap_or([speed * heading.sin(), speed * heading.cos()]);
    let [iv_start, iv_end] = spec.interval.unwrap_or([iv_start, iv_end]);

    let mut frame_rng = SeededStream::new(spec.seed, FRAME_STREAM);
    let jitter = spec.jitter_amplitude as i64;
    let placements = (0..f)
        .map(|t| {
            let mut p = Placement {
                active: true,
                raw_center: start,
                half_extent: half,
            };
            match spec.dynamics {
                Dynamics::FullSpan => {}
                Dynamics::Interval => p.active = (iv_start..=iv_end).contains(&t),
                Dynamics::PerFrameRandom => {
                    let a = frame_rng.uniform(lo, hi);
                    let b = frame_rng.uniform(lo, hi);
                    let r = frame_rng.int_inclusive(0, h as i64 - 1) as f64;
                    let c = frame_rng.int_inclusive(0, w as i64 - 1) as f64;
                    p.half_extent = half_from_fractions(spec, a, b);
                    p.raw_center = [r, c];
                }
                Dynamics::PerFrameJitter => {
                    let dy = frame_rng.int_inclusive(-jitter, jitter) as f64;
                    let dx = frame_rng.int_inclusive(-jitter, jitter) as f64;
                    p.raw_center = [start[0] + dy, start[1] + dx];
                }
                Dynamics::ConstantSpeed => {
                    let tf = t as f64;
                    p.raw_center = [start[0] + velocity[0] * tf, start[1] + velocity[1] * tf];
                }
                Dynamics::VariableSpeed => {
                    let tau = unit_time(t, f);
                    let span = (f.max(1) - 1) as f64;
                    let shaped = match spec.curve {
                        Curve::Parabolic => tau * tau,
                        Curve::SShaped => s_curve(tau),
                    };
                    p.raw_center = [
                        start[0] + velocity[0] * span * shaped,
                        start[1] + velocity[1] * t as f64,
                    ];
                }
            }
            p
        })
        .collect();
    Ok(placements)
}

fn covers(shape: Shape, dy: f64, dx: f64, half: [f64; 2]) -> bool {
    match shape {
        Shape::FullFrame => true,
        Shape::Rectangle => dy.abs() <= half[0] && dx.abs() <= half[1],
        Shape::Circle | Shape::Ellipse => {
            let (a, b) = (half[0].max(f64::MIN_POSITIVE), half[1].max(f64::MIN_POSITIVE));
            (dy / a).powi(2) + (dx / b).powi(2) <= 1.0
        }
    }
}

pub fn generate(spec: &MaskGenSpec) -> Result<MaskSequence> {
    let placements = plan(spec)?;
    let (h, w) = (spec.height, spec.width);
    let mut m = MaskSequence::zeros(spec.frames, h, w)?;
    for (t, p) in placements.iter().enumerate() {
        if !p.active {
            continue;
        }
        let [cy, cx] = p.pixel_center(h, w);
        let frame = m.frame_mut(t);
        for y in 0..h {
            let dy = y as f64 - cy as f64;
            if spec.shape != Shape::FullFrame && dy.abs() > p.half_extent[0] {
                continue;
            }
            for x in 0..w {
                if covers(spec.shape, dy, x as f64 - cx as f64, p.half_extent) {
                    frame[y * w + x] = 1;
                }
            }
        }
    }
    Ok(m)
}

/// Generates every spec independently; the first failure is reported with
/// its index.
pub fn generate_batch(specs: &[MaskGenSpec]) -> Result<Vec<MaskSequence>> {
    specs
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            generate(s).map_err(|e| Error::Config(format!("spec {i}: {e}")))
        })
        .collect()
}

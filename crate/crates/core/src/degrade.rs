//! Mask degradation: frame dropout, boundary morphology and bbox coarsening.
//!
//! Stages always run in the order bbox fit, morphology, dropout. With
//! `compose_random` the explicit stage settings are ignored and each stage's
//! enablement and parameters are drawn from stream 0 of the seed in this
//! order: bbox flag, morphology flag, erode-vs-dilate flag, radius, dropout
//! flag, dropout rate. Dropout frame selection uses stream 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{MaskSequence, StructuringElement};
use crate::rng::SeededStream;

pub const MAX_DROP_RATE: f64 = 0.99;

/// Dropout range used by random composition.
pub const RANDOM_DROP_RANGE: [f64; 2] = [0.20, 0.99];
/// Morphology radius range used by random composition.
pub const RANDOM_RADIUS_RANGE: [usize; 2] = [1, 3];
pub const RANDOM_BBOX_PROB: f64 = 0.3;
pub const RANDOM_MORPH_PROB: f64 = 0.5;
pub const RANDOM_DROP_PROB: f64 = 0.5;

const COMPOSE_STREAM: u64 = 0;
const DROP_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradeSpec {
    pub drop_rate: f64,
    pub erode_radius: usize,
    pub dilate_radius: usize,
    pub bbox: bool,
    pub compose_random: bool,
    /// Drop one contiguous run of frames instead of scattered frames.
    pub contiguous: bool,
    pub seed: u64,
}

impl Default for DegradeSpec {
    fn default() -> Self {
        Self {
            drop_rate: 0.0,
            erode_radius: 0,
            dilate_radius: 0,
            bbox: false,
            compose_random: false,
            contiguous: false,
            seed: 0,
        }
    }
}

/// The concrete stage settings one application ran with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolvedStages {
    pub bbox: bool,
    pub erode_radius: usize,
    pub dilate_radius: usize,
    pub drop_rate: f64,
}

impl DegradeSpec {
    pub fn validate(&self) -> Result<()> {
        check_rate(self.drop_rate)?;
        if self.erode_radius > 0 && self.dilate_radius > 0 {
            return Err(Error::Config(
                "erode_radius and dilate_radius cannot both be active".into(),
            ));
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<ResolvedStages> {
        self.validate()?;
        if !self.compose_random {
            return Ok(ResolvedStages {
                bbox: self.bbox,
                erode_radius: self.erode_radius,
                dilate_radius: self.dilate_radius,
                drop_rate: self.drop_rate,
            });
        }
        let mut rng = SeededStream::new(self.seed, COMPOSE_STREAM);
        let bbox = rng.bernoulli(RANDOM_BBOX_PROB);
        let morph = rng.bernoulli(RANDOM_MORPH_PROB);
        let erode = rng.bernoulli(0.5);
        let [rlo, rhi] = RANDOM_RADIUS_RANGE;
        let radius = rng.int_inclusive(rlo as i64, rhi as i64) as usize;
        let drop = rng.bernoulli(RANDOM_DROP_PROB);
        let rate = rng.uniform(RANDOM_DROP_RANGE[0], RANDOM_DROP_RANGE[1]);
        Ok(ResolvedStages {
            bbox,
            erode_radius: if morph && erode { radius } else { 0 },
            dilate_radius: if morph && !erode { radius } else { 0 },
            drop_rate: if drop { rate } else { 0.0 },
        })
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..=MAX_DROP_RATE).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "drop rate must lie in [0, {MAX_DROP_RATE}], got {rate}"
        )));
    }
    Ok(())
}

/// Number of frames dropout removes: `round(rate * frames)`, halves away
/// from zero.
pub fn drop_count(frames: usize, rate: f64) -> usize {
    ((rate * frames as f64).round() as usize).min(frames)
}

/// Frames that dropout zeroes, in ascending order.
pub fn dropped_frames(frames: usize, rate: f64, seed: u64, contiguous: bool) -> Result<Vec<usize>> {
    check_rate(rate)?;
    let n = drop_count(frames, rate);
    let mut rng = SeededStream::new(seed, DROP_STREAM);
    let mut idx = if contiguous {
        let start = rng.int_inclusive(0, (frames - n) as i64) as usize;
        (start..start + n).collect()
    } else {
        let mut p = rng.permutation(frames);
        p.truncate(n);
        p
    };
    idx.sort_unstable();
    Ok(idx)
}

fn zero_frames(m: &MaskSequence, frames: &[usize]) -> MaskSequence {
    let mut out = m.clone();
    for &t in frames {
        out.frame_mut(t).fill(0);
    }
    out
}

/// Zeroes exactly `round(rate * F)` frames chosen by a seeded shuffle.
pub fn drop_frames(m: &MaskSequence, rate: f64, seed: u64) -> Result<MaskSequence> {
    let idx = dropped_frames(m.frames(), rate, seed, false)?;
    Ok(zero_frames(m, &idx))
}

/// Like [`drop_frames`] but removes one contiguous run.
pub fn drop_frames_contiguous(m: &MaskSequence, rate: f64, seed: u64) -> Result<MaskSequence> {
    let idx = dropped_frames(m.frames(), rate, seed, true)?;
    Ok(zero_frames(m, &idx))
}

pub fn apply(m: &MaskSequence, spec: &DegradeSpec) -> Result<MaskSequence> {
    apply_resolved(m, spec).map(|(out, _)| out)
}

/// [`apply`], also returning the stage settings that were used.
pub fn apply_resolved(m: &MaskSequence, spec: &DegradeSpec) -> Result<(MaskSequence, ResolvedStages)> {
    let stages = spec.resolve()?;
    let mut out = if stages.bbox { m.bbox_fit() } else { m.clone() };
    if stages.erode_radius > 0 {
        out = out.erode(StructuringElement::square(stages.erode_radius)?);
    } else if stages.dilate_radius > 0 {
        out = out.dilate(StructuringElement::square(stages.dilate_radius)?);
    }
    if stages.drop_rate > 0.0 {
        let idx = dropped_frames(out.frames(), stages.drop_rate, spec.seed, spec.contiguous)?;
        out = zero_frames(&out, &idx);
    }
    Ok((out, stages))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_ones(f: usize) -> MaskSequence {
        MaskSequence::ones(f, 4, 4).unwrap()
    }

    fn zero_frame_count(m: &MaskSequence) -> usize {
        (0..m.frames()).filter(|&t| m.is_frame_empty(t)).count()
    }

    #[test]
    fn drop_examples() {
        assert_eq!(zero_frame_count(&drop_frames(&all_ones(10), 0.5, 1).unwrap()), 5);
        let m = all_ones(7);
        assert_eq!(drop_frames(&m, 0.0, 3).unwrap(), m);
        assert_eq!(zero_frame_count(&drop_frames(&all_ones(100), 0.99, 9).unwrap()), 99);
        assert!(drop_frames(&m, 1.0, 0).is_err());
        assert!(drop_frames(&m, -0.1, 0).is_err());
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(drop_count(81, 0.5), 41);
        assert_eq!(drop_count(30, 0.2), 6);
        assert_eq!(drop_count(10, 0.99), 10);
    }

    #[test]
    fn contiguous_dropout_is_one_run() {
        for seed in 0..20 {
            let idx = dropped_frames(30, 0.4, seed, true).unwrap();
            assert_eq!(idx.len(), 12);
            assert_eq!(idx[11] - idx[0], 11);
        }
    }

    #[test]
    fn apply_examples() {
        let m = MaskSequence::from_fn(5, 8, 8, |t, y, x| (t + y + x) % 3 == 0).unwrap();
        assert_eq!(apply(&m, &DegradeSpec::default()).unwrap(), m);

        let rect = MaskSequence::from_fn(3, 8, 8, |_, y, x| (2..5).contains(&y) && (1..7).contains(&x)).unwrap();
        let spec = DegradeSpec {
            bbox: true,
            ..Default::default()
        };
        assert_eq!(apply(&rect, &spec).unwrap(), rect);

        let spec = DegradeSpec {
            compose_random: true,
            seed: 99,
            ..Default::default()
        };
        assert_eq!(apply(&m, &spec).unwrap(), apply(&m, &spec).unwrap());

        let both = DegradeSpec {
            erode_radius: 1,
            dilate_radius: 1,
            ..Default::default()
        };
        assert!(matches!(apply(&m, &both), Err(Error::Config(_))));
    }

    #[test]
    fn random_composition_stays_in_ranges() {
        let mut saw = [false; 4];
        for seed in 0..300 {
            let s = DegradeSpec {
                compose_random: true,
                seed,
                ..Default::default()
            }
            .resolve()
            .unwrap();
            assert!(s.erode_radius == 0 || s.dilate_radius == 0);
            for r in [s.erode_radius, s.dilate_radius] {
                assert!(r == 0 || (1..=3).contains(&r));
            }
            assert!(s.drop_rate == 0.0 || (0.2..=0.99).contains(&s.drop_rate));
            saw[0] |= s.bbox;
            saw[1] |= s.erode_radius > 0;
            saw[2] |= s.dilate_radius > 0;
            saw[3] |= s.drop_rate > 0.0;
        }
        assert!(saw.iter().all(|&b| b));
    }

    fn arb_mask() -> impl Strategy<Value = MaskSequence> {
        (1usize..12, 1usize..8, 1usize..8).prop_flat_map(|(f, h, w)| {
            proptest::collection::vec(0u8..2, f * h * w)
                .prop_map(move |d| MaskSequence::new(f, h, w, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn dropout_zeroes_exact_count_and_keeps_survivors(m in arb_mask(), rate in 0.0f64..=0.99, seed in any::<u64>()) {
            let out = drop_frames(&m, rate, seed).unwrap();
            let idx = dropped_frames(m.frames(), rate, seed, false).unwrap();
            prop_assert_eq!(idx.len(), drop_count(m.frames(), rate));
            for t in 0..m.frames() {
                if idx.contains(&t) {
                    prop_assert!(out.is_frame_empty(t));
                } else {
                    prop_assert_eq!(out.frame(t), m.frame(t));
                }
            }
        }

        #[test]
        fn single_stage_containment(m in arb_mask(), r in 1usize..4, seed in any::<u64>()) {
            let grow = DegradeSpec { dilate_radius: r, bbox: true, seed, ..Default::default() };
            prop_assert!(m.is_subset_of(&apply(&m, &grow).unwrap()));
            let shrink = DegradeSpec { erode_radius: r, seed, ..Default::default() };
            prop_assert!(apply(&m, &shrink).unwrap().is_subset_of(&m));
        }

        #[test]
        fn apply_preserves_dims(m in arb_mask(), seed in any::<u64>()) {
            let spec = DegradeSpec { compose_random: true, seed, ..Default::default() };
            prop_assert_eq!(apply(&m, &spec).unwrap().dims(), m.dims());
        }
    }
}

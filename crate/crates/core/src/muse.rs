//! Temporal mask compression onto a latent frame grid.
//!
//! Layout (shared by every mode): latent frame 0 holds input frame 0 alone;
//! latent frame `i >= 1` covers input frames `1 + ratio*(i-1) ..= min(ratio*i, F-1)`.
//!
//! * [`compress_union`] ORs every frame of a window, so any location observed
//!   inside the window survives compression.
//! * [`compress_nearest`] keeps only the first frame of each window, the
//!   nearest-neighbor baseline that loses short-lived object positions.
//! * [`muse_preprocess`] unions, then repeats each latent frame back over its
//!   window so the result can be fed to models that expect full frame rate.

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::MaskSequence;

pub const DEFAULT_RATIO: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressionMode {
    /// First frame of each window.
    Nearest,
    Union,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompressionSpec {
    pub ratio: usize,
    pub mode: CompressionMode,
}

impl Default for CompressionSpec {
    fn default() -> Self {
        Self {
            ratio: DEFAULT_RATIO,
            mode: CompressionMode::Union,
        }
    }
}

impl CompressionSpec {
    pub fn compress(&self, m: &MaskSequence) -> Result<MaskSequence> {
        match self.mode {
            CompressionMode::Nearest => compress_nearest(m, self.ratio),
            CompressionMode::Union => compress_union(m, self.ratio),
        }
    }
}

fn check_ratio(ratio: usize) -> Result<()> {
    if ratio == 0 {
        Err(Error::InvalidArgument(
            "compression ratio must be >= 1".into(),
        ))
    } else {
        Ok(())
    }
}

/// Number of latent frames for `frames` input frames: `1 + ceil((F-1)/ratio)`.
///
/// # Panics
/// If `frames` or `ratio` is zero.
pub fn latent_len(frames: usize, ratio: usize) -> usize {
    assert!(frames >= 1 && ratio >= 1, "latent_len needs F >= 1, ratio >= 1");
    1 + (frames - 1).div_ceil(ratio)
}

/// Input frames covered by latent frame `i`.
pub fn window(i: usize, frames: usize, ratio: usize) -> RangeInclusive<usize> {
    if i == 0 {
        0..=0
    } else {
        let start = 1 + ratio * (i - 1);
        start..=(ratio * i).min(frames - 1)
    }
}

/// Latent frame whose window contains input frame `t`.
pub fn window_of(t: usize, ratio: usize) -> usize {
    if t == 0 {
        0
    } else {
        1 + (t - 1) / ratio
    }
}

pub fn windows(frames: usize, ratio: usize) -> impl Iterator<Item = RangeInclusive<usize>> {
    (0..latent_len(frames, ratio)).map(move |i| window(i, frames, ratio))
}

fn compress_with(
    m: &MaskSequence,
    ratio: usize,
    reduce: fn(&MaskSequence, RangeInclusive<usize>, &mut [u8]),
) -> Result<MaskSequence> {
    check_ratio(ratio)?;
    let (f, h, w) = m.dims();
    let n = latent_len(f, ratio);
    let plane = h * w;
    let mut data = vec![0u8; n * plane];
    data.par_chunks_mut(plane)
        .enumerate()
        .for_each(|(i, out)| reduce(m, window(i, f, ratio), out));
    MaskSequence::new(n, h, w, data)
}

pub fn compress_union(m: &MaskSequence, ratio: usize) -> Result<MaskSequence> {
    compress_with(m, ratio, |m, win, out| {
        for t in win {
            for (o, &v) in out.iter_mut().zip(m.frame(t)) {
                *o |= v;
            }
        }
    })
}

pub fn compress_nearest(m: &MaskSequence, ratio: usize) -> Result<MaskSequence> {
    compress_with(m, ratio, |m, win, out| {
        out.copy_from_slice(m.frame(*win.start()));
    })
}

/// Repeats each latent frame over the input frames of its window.
pub fn expand(latent: &MaskSequence, frames: usize, ratio: usize) -> Result<MaskSequence> {
    check_ratio(ratio)?;
    if frames == 0 || latent.frames() != latent_len(frames, ratio) {
        return Err(Error::dims(
            format!("{} latent frames", latent_len(frames.max(1), ratio)),
            format!("{} latent frames", latent.frames()),
        ));
    }
    let idx: Vec<usize> = (0..frames).map(|t| window_of(t, ratio)).collect();
    latent.select_frames(&idx)
}

pub fn muse_preprocess(m: &MaskSequence, ratio: usize) -> Result<MaskSequence> {
    let latent = compress_union(m, ratio)?;
    expand(&latent, m.frames(), ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f9_pixel_at_3() -> MaskSequence {
        let mut m = MaskSequence::zeros(9, 5, 5).unwrap();
        m.set(3, 2, 2, true);
        m
    }

    #[test]
    fn latent_len_examples() {
        assert_eq!(latent_len(81, 4), 21);
        for r in 1..6 {
            assert_eq!(latent_len(1, r), 1);
        }
        assert_eq!(latent_len(9, 4), 3);
        let w: Vec<_> = windows(9, 4).collect();
        assert_eq!(w, vec![0..=0, 1..=4, 5..=8]);
    }

    #[test]
    fn union_example() {
        let c = compress_union(&f9_pixel_at_3(), 4).unwrap();
        assert_eq!(c.frames(), 3);
        assert!(c.get(1, 2, 2));
        assert_eq!(c.count_ones(), 1);
        let z = MaskSequence::zeros(7, 3, 3).unwrap();
        assert!(compress_union(&z, 4).unwrap().is_empty());
        assert!(compress_union(&z, 0).is_err());
    }

    #[test]
    fn constant_mask_compresses_to_itself() {
        let m = MaskSequence::from_fn(10, 4, 4, |_, y, x| y == x).unwrap();
        let u = compress_union(&m, 4).unwrap();
        let n = compress_nearest(&m, 4).unwrap();
        assert_eq!(u, n);
        for i in 0..u.frames() {
            assert_eq!(u.frame(i), m.frame(0));
        }
    }

    #[test]
    fn nearest_examples() {
        assert!(compress_nearest(&f9_pixel_at_3(), 4).unwrap().is_empty());
        let mut m = MaskSequence::zeros(9, 3, 3).unwrap();
        m.set(0, 1, 1, true);
        let c = compress_nearest(&m, 4).unwrap();
        assert!(c.get(0, 1, 1));
        assert!(c.is_frame_empty(1) && c.is_frame_empty(2));
    }

    #[test]
    fn preprocess_examples() {
        let p = muse_preprocess(&f9_pixel_at_3(), 4).unwrap();
        assert_eq!(p.frames(), 9);
        for t in 0..9 {
            assert_eq!(p.get(t, 2, 2), (1..=4).contains(&t), "frame {t}");
            assert_eq!(p.frame_ones(t), (1..=4).contains(&t) as usize);
        }
        let z = MaskSequence::zeros(5, 2, 2).unwrap();
        assert_eq!(muse_preprocess(&z, 4).unwrap(), z);
    }

    #[test]
    fn expand_rejects_wrong_latent_length() {
        let latent = MaskSequence::zeros(2, 2, 2).unwrap();
        assert!(expand(&latent, 9, 4).is_err());
    }

    fn arb_mask() -> impl Strategy<Value = MaskSequence> {
        (1usize..18, 1usize..8, 1usize..8).prop_flat_map(|(f, h, w)| {
            proptest::collection::vec(prop_oneof![4 => Just(0u8), 1 => Just(1u8)], f * h * w)
                .prop_map(move |d| MaskSequence::new(f, h, w, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn nearest_subset_of_union(m in arb_mask(), ratio in 1usize..6) {
            let n = compress_nearest(&m, ratio).unwrap();
            let u = compress_union(&m, ratio).unwrap();
            prop_assert!(n.is_subset_of(&u));
        }

        #[test]
        fn every_set_pixel_is_covered(m in arb_mask(), ratio in 1usize..6) {
            let u = compress_union(&m, ratio).unwrap();
            let (f, h, w) = m.dims();
            for t in 0..f {
                for y in 0..h {
                    for x in 0..w {
                        if m.get(t, y, x) {
                            prop_assert!(u.get(window_of(t, ratio), y, x));
                        }
                    }
                }
            }
        }

        #[test]
        fn preprocess_idempotent_and_conservative(m in arb_mask(), ratio in 1usize..6) {
            let p = muse_preprocess(&m, ratio).unwrap();
            prop_assert!(m.is_subset_of(&p));
            prop_assert_eq!(muse_preprocess(&p, ratio).unwrap(), p);
        }
    }
}

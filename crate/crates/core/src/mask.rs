//! Binary mask volumes and the per-frame morphology built on them.
//!
//! A [`MaskSequence`] stores one byte per pixel (0 or 1), frame-major then
//! row-major. Every operation here is per frame: nothing leaks across time
//! except [`MaskSequence::temporal_subsample`], which only selects frames.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MaskSequence {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl fmt::Debug for MaskSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MaskSequence")
            .field("frames", &self.frames)
            .field("height", &self.height)
            .field("width", &self.width)
            .field("ones", &self.count_ones())
            .finish()
    }
}

/// Inclusive pixel bounds of a non-empty region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBox {
    pub row_min: usize,
    pub row_max: usize,
    pub col_min: usize,
    pub col_max: usize,
}

impl BBox {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row_min..=self.row_max).contains(&row) && (self.col_min..=self.col_max).contains(&col)
    }

    pub fn area(&self) -> usize {
        (self.row_max - self.row_min + 1) * (self.col_max - self.col_min + 1)
    }
}

/// Square kernel of side `2 * radius + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuringElement {
    radius: usize,
}

impl StructuringElement {
    pub fn square(radius: usize) -> Result<Self> {
        if radius == 0 {
            return Err(Error::InvalidArgument(
                "structuring element radius must be >= 1".into(),
            ));
        }
        Ok(Self { radius })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }
}

impl MaskSequence {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(frames, height, width)?;
        let expected = frames * height * width;
        if data.len() != expected {
            return Err(Error::dims(
                format!("{expected} elements ({frames}x{height}x{width})"),
                format!("{} elements", data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|&v| v > 1) {
            return Err(Error::InvalidArgument(format!(
                "mask element {pos} has value {}, expected 0 or 1",
                data[pos]
            )));
        }
        Ok(Self {
            frames,
            height,
            width,
            data,
        })
    }

    pub fn zeros(frames: usize, height: usize, width: usize) -> Result<Self> {
        check_dims(frames, height, width)?;
        Ok(Self {
            frames,
            height,
            width,
            data: vec![0; frames * height * width],
        })
    }

    pub fn ones(frames: usize, height: usize, width: usize) -> Result<Self> {
        let mut m = Self::zeros(frames, height, width)?;
        m.data.fill(1);
        Ok(m)
    }

    /// Builds a mask from a predicate over `(frame, row, col)`.
    pub fn from_fn(
        frames: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> bool,
    ) -> Result<Self> {
        let mut m = Self::zeros(frames, height, width)?;
        for t in 0..frames {
            for y in 0..height {
                for x in 0..width {
                    if f(t, y, x) {
                        m.set(t, y, x, true);
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.frames, self.height, self.width)
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.data
    }

    fn index(&self, t: usize, y: usize, x: usize) -> usize {
        debug_assert!(t < self.frames && y < self.height && x < self.width);
        (t * self.height + y) * self.width + x
    }

    pub fn get(&self, t: usize, y: usize, x: usize) -> bool {
        self.data[self.index(t, y, x)] != 0
    }

    pub fn set(&mut self, t: usize, y: usize, x: usize, value: bool) {
        let i = self.index(t, y, x);
        self.data[i] = value as u8;
    }

    pub fn frame(&self, t: usize) -> &[u8] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [u8] {
        let n = self.frame_len();
        &mut self.data[t * n..(t + 1) * n]
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn frame_ones(&self, t: usize) -> usize {
        self.frame(t).iter().filter(|&&v| v != 0).count()
    }

    pub fn is_frame_empty(&self, t: usize) -> bool {
        self.frame(t).iter().all(|&v| v == 0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn require_same_dims(&self, other: &Self) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::dims(
                format!("{:?}", self.dims()),
                format!("{:?}", other.dims()),
            ))
        }
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.same_dims(other)
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(&a, &b)| a <= b)
    }

    /// Number of pixels set in both masks.
    pub fn intersection_count(&self, other: &Self) -> Result<usize> {
        self.require_same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a & b != 0)
            .count())
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        self.require_same_dims(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a | b).collect();
        Ok(Self {
            frames: self.frames,
            height: self.height,
            width: self.width,
            data,
        })
    }

    /// Copies the given frames, in order, into a new sequence.
    pub fn select_frames(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("no frames selected".into()));
        }
        let mut data = Vec::with_capacity(indices.len() * self.frame_len());
        for &t in indices {
            if t >= self.frames {
                return Err(Error::InvalidArgument(format!(
                    "frame index {t} out of range for {} frames",
                    self.frames
                )));
            }
            data.extend_from_slice(self.frame(t));
        }
        Ok(Self {
            frames: indices.len(),
            height: self.height,
            width: self.width,
            data,
        })
    }

    /// Keeps frames `0, k, 2k, ...`.
    pub fn temporal_subsample(&self, k: usize) -> Result<Self> {
        let idx = subsample_indices(self.frames, k)?;
        self.select_frames(&idx)
    }

    /// Tight bounding box of the set pixels of frame `t`.
    pub fn frame_bbox(&self, t: usize) -> Option<BBox> {
        let mut bb: Option<BBox> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.get(t, y, x) {
                    continue;
                }
                bb = Some(match bb {
                    None => BBox {
                        row_min: y,
                        row_max: y,
                        col_min: x,
                        col_max: x,
                    },
                    Some(b) => BBox {
                        row_min: b.row_min.min(y),
                        row_max: b.row_max.max(y),
                        col_min: b.col_min.min(x),
                        col_max: b.col_max.max(x),
                    },
                });
            }
        }
        bb
    }

    /// Fills each frame's tight bounding box; empty frames stay empty.
    pub fn bbox_fit(&self) -> Self {
        let mut out = self.clone();
        for t in 0..self.frames {
            if let Some(b) = self.frame_bbox(t) {
                for y in b.row_min..=b.row_max {
                    for x in b.col_min..=b.col_max {
                        out.set(t, y, x, true);
                    }
                }
            }
        }
        out
    }

    /// Keeps a pixel only when its full square neighborhood lies inside the
    /// frame and is set.
    pub fn erode(&self, se: StructuringElement) -> Self {
        self.morph(se, Morph::Erode)
    }

    /// Sets a pixel when any pixel of its square neighborhood is set.
    pub fn dilate(&self, se: StructuringElement) -> Self {
        self.morph(se, Morph::Dilate)
    }

    // The square kernel is separable: a row pass followed by a column pass.
    // Out-of-frame neighbors read as 0 in both passes.
    fn morph(&self, se: StructuringElement, op: Morph) -> Self {
        let (h, w, r) = (self.height, self.width, se.radius);
        let mut out = self.clone();
        let mut tmp = vec![0u8; h * w];
        for t in 0..self.frames {
            let src = self.frame(t);
            for y in 0..h {
                let row = &src[y * w..(y + 1) * w];
                for x in 0..w {
                    tmp[y * w + x] = op.reduce(x, r, w, |i| row[i]);
                }
            }
            let dst = out.frame_mut(t);
            for x in 0..w {
                for y in 0..h {
                    dst[y * w + x] = op.reduce(y, r, h, |i| tmp[i * w + x]);
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy)]
enum Morph {
    Erode,
    Dilate,
}

impl Morph {
    fn reduce(self, center: usize, r: usize, len: usize, at: impl Fn(usize) -> u8) -> u8 {
        let lo = center as isize - r as isize;
        let hi = center + r;
        match self {
            Morph::Erode => {
                if lo < 0 || hi >= len {
                    return 0;
                }
                (lo as usize..=hi).all(|i| at(i) != 0) as u8
            }
            Morph::Dilate => {
                let lo = lo.max(0) as usize;
                let hi = hi.min(len - 1);
                (lo..=hi).any(|i| at(i) != 0) as u8
            }
        }
    }
}

/// Frame indices `0, k, 2k, ...` below `frames`.
pub fn subsample_indices(frames: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "subsampling factor k must be >= 1".into(),
        ));
    }
    Ok((0..frames).step_by(k).collect())
}

fn check_dims(frames: usize, height: usize, width: usize) -> Result<()> {
    if frames == 0 || height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!(
            "mask dimensions must be >= 1, got {frames}x{height}x{width}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(f: usize, h: usize, w: usize, at: (usize, usize, usize)) -> MaskSequence {
        let mut m = MaskSequence::zeros(f, h, w).unwrap();
        m.set(at.0, at.1, at.2, true);
        m
    }

    fn se(r: usize) -> StructuringElement {
        StructuringElement::square(r).unwrap()
    }

    #[test]
    fn rejects_non_binary_and_wrong_length() {
        assert!(matches!(
            MaskSequence::new(1, 1, 2, vec![0, 2]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            MaskSequence::new(1, 2, 2, vec![0; 3]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(MaskSequence::zeros(0, 1, 1).is_err());
        assert!(StructuringElement::square(0).is_err());
    }

    #[test]
    fn union_examples() {
        let m = single(1, 3, 3, (0, 1, 1));
        let z = MaskSequence::zeros(1, 3, 3).unwrap();
        assert_eq!(z.union(&m).unwrap(), m);
        assert_eq!(m.union(&m).unwrap(), m);

        let a = single(1, 3, 3, (0, 1, 1));
        let b = single(1, 3, 3, (0, 2, 2));
        let u = a.union(&b).unwrap();
        for y in 0..3 {
            for x in 0..3 {
                assert_eq!(u.get(0, y, x), (y, x) == (1, 1) || (y, x) == (2, 2));
            }
        }
        let other = MaskSequence::zeros(2, 3, 3).unwrap();
        assert!(matches!(
            a.union(&other),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn erode_examples() {
        assert!(single(1, 5, 5, (0, 2, 2)).erode(se(1)).is_empty());

        let full = MaskSequence::ones(1, 5, 5).unwrap();
        let e = full.erode(se(1));
        for y in 0..5 {
            for x in 0..5 {
                assert_eq!(e.get(0, y, x), (1..=3).contains(&y) && (1..=3).contains(&x));
            }
        }
        let z = MaskSequence::zeros(2, 4, 4).unwrap();
        assert_eq!(z.erode(se(2)), z);
    }

    #[test]
    fn dilate_examples() {
        let d = single(1, 5, 5, (0, 2, 2)).dilate(se(1));
        for y in 0..5 {
            for x in 0..5 {
                assert_eq!(d.get(0, y, x), (1..=3).contains(&y) && (1..=3).contains(&x));
            }
        }
        let z = MaskSequence::zeros(1, 4, 4).unwrap();
        assert_eq!(z.dilate(se(1)), z);
        let full = MaskSequence::ones(2, 4, 6).unwrap();
        assert_eq!(full.dilate(se(3)), full);
    }

    #[test]
    fn dilate_does_not_leak_across_frames() {
        let m = single(3, 5, 5, (1, 2, 2));
        let d = m.dilate(se(2));
        assert!(d.is_frame_empty(0));
        assert!(d.is_frame_empty(2));
        assert_eq!(d.frame_ones(1), 25);
    }

    #[test]
    fn bbox_examples() {
        let mut m = MaskSequence::zeros(2, 5, 6).unwrap();
        m.set(0, 1, 1, true);
        m.set(0, 3, 4, true);
        let b = m.bbox_fit();
        for y in 0..5 {
            for x in 0..6 {
                assert_eq!(b.get(0, y, x), (1..=3).contains(&y) && (1..=4).contains(&x));
            }
        }
        assert!(b.is_frame_empty(1));
        assert_eq!(b.bbox_fit(), b);
        assert_eq!(
            m.frame_bbox(0),
            Some(BBox {
                row_min: 1,
                row_max: 3,
                col_min: 1,
                col_max: 4
            })
        );
        assert_eq!(m.frame_bbox(1), None);
    }

    #[test]
    fn subsample_examples() {
        let m = MaskSequence::from_fn(10, 2, 2, |t, _, _| t % 2 == 1).unwrap();
        assert_eq!(subsample_indices(10, 2).unwrap(), vec![0, 2, 4, 6, 8]);
        assert_eq!(m.temporal_subsample(2).unwrap().frames(), 5);
        assert_eq!(m.temporal_subsample(1).unwrap(), m);
        assert_eq!(subsample_indices(9, 4).unwrap(), vec![0, 4, 8]);
        assert!(m.temporal_subsample(0).is_err());
    }

    fn arb_mask() -> impl Strategy<Value = MaskSequence> {
        (1usize..4, 1usize..10, 1usize..10).prop_flat_map(|(f, h, w)| {
            proptest::collection::vec(prop_oneof![3 => Just(0u8), 2 => Just(1u8)], f * h * w)
                .prop_map(move |d| MaskSequence::new(f, h, w, d).unwrap())
        })
    }

    fn brute_erode(m: &MaskSequence, r: usize) -> MaskSequence {
        let (f, h, w) = m.dims();
        MaskSequence::from_fn(f, h, w, |t, y, x| {
            let r = r as isize;
            (-r..=r).all(|dy| {
                (-r..=r).all(|dx| {
                    let (yy, xx) = (y as isize + dy, x as isize + dx);
                    yy >= 0
                        && xx >= 0
                        && (yy as usize) < h
                        && (xx as usize) < w
                        && m.get(t, yy as usize, xx as usize)
                })
            })
        })
        .unwrap()
    }

    fn brute_dilate(m: &MaskSequence, r: usize) -> MaskSequence {
        let (f, h, w) = m.dims();
        MaskSequence::from_fn(f, h, w, |t, y, x| {
            let r = r as isize;
            (-r..=r).any(|dy| {
                (-r..=r).any(|dx| {
                    let (yy, xx) = (y as isize + dy, x as isize + dx);
                    yy >= 0
                        && xx >= 0
                        && (yy as usize) < h
                        && (xx as usize) < w
                        && m.get(t, yy as usize, xx as usize)
                })
            })
        })
        .unwrap()
    }

    proptest! {
        #[test]
        fn morphology_matches_brute_force(m in arb_mask(), r in 1usize..4) {
            prop_assert_eq!(m.erode(se(r)), brute_erode(&m, r));
            prop_assert_eq!(m.dilate(se(r)), brute_dilate(&m, r));
        }

        #[test]
        fn containment_chain(m in arb_mask(), r in 1usize..4) {
            let e = m.erode(se(r));
            let d = m.dilate(se(r));
            prop_assert!(e.is_subset_of(&m));
            prop_assert!(m.is_subset_of(&d));
            prop_assert!(e.dilate(se(r)).is_subset_of(&m));
            prop_assert!(m.is_subset_of(&d.erode(se(r))) || closing_hits_border(&m, r));
        }

        #[test]
        fn bbox_fit_superset_and_idempotent(m in arb_mask()) {
            let b = m.bbox_fit();
            prop_assert!(m.is_subset_of(&b));
            prop_assert_eq!(b.bbox_fit(), b);
        }

        #[test]
        fn union_laws(
            (a, b, c) in (1usize..3, 1usize..6, 1usize..6).prop_flat_map(|(f, h, w)| {
                let v = move || proptest::collection::vec(0u8..2, f * h * w)
                    .prop_map(move |d| MaskSequence::new(f, h, w, d).unwrap());
                (v(), v(), v())
            })
        ) {
            let ab = a.union(&b).unwrap();
            prop_assert_eq!(&ab, &b.union(&a).unwrap());
            prop_assert_eq!(ab.union(&c).unwrap(), a.union(&b.union(&c).unwrap()).unwrap());
            prop_assert_eq!(&a.union(&a).unwrap(), &a);
            for i in 0..a.as_slice().len() {
                prop_assert_eq!(ab.as_slice()[i], a.as_slice()[i] | b.as_slice()[i]);
            }
        }
    }

    // With out-of-frame neighbors read as 0, closing can strip set pixels
    // within `r` of the frame edge, so m ⊆ close(m) is only guaranteed away
    // from the border.
    fn closing_hits_border(m: &MaskSequence, r: usize) -> bool {
        let closed = m.dilate(se(r)).erode(se(r));
        let (f, h, w) = m.dims();
        for t in 0..f {
            for y in 0..h {
                for x in 0..w {
                    if m.get(t, y, x) && !closed.get(t, y, x) {
                        let interior = y >= r && x >= r && y + r < h && x + r < w;
                        if interior {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

//! Removal-quality metrics over 8-bit frame sequences.
//!
//! Region arguments are exclusion masks: pixels where the mask is set are
//! left out, so passing the removal mask yields the background-only
//! (`mpsnr` / `mssim`) variants. Per-frame values are averaged arithmetically.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::mask::{MaskSequence, StructuringElement};

/// Reported PSNR for zero error, in dB.
pub const PSNR_CAP: f64 = 100.0;
/// Reported SSIM for a frame with nothing to evaluate.
pub const SSIM_CAP: f64 = 1.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

pub const PATCH_SIZE: usize = 8;
pub const ORIENTATION_BINS: usize = 8;
/// Intensity units per descriptor unit for patch mean and deviation.
pub const DESCRIPTOR_INTENSITY_SCALE: f64 = 64.0;

#[derive(Clone, PartialEq, Eq)]
pub struct FrameSequence {
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for FrameSequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "FrameSequence({}x{}x{}x{})",
            self.frames, self.height, self.width, self.channels
        )
    }
}

impl FrameSequence {
    pub fn new(frames: usize, height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "frame dimensions must be >= 1, got {frames}x{height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        let expected = frames * height * width * channels;
        if data.len() != expected {
            return Err(Error::dims(
                format!("{expected} samples"),
                format!("{} samples", data.len()),
            ));
        }
        Ok(Self {
            frames,
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(frames: usize, height: usize, width: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(
            frames,
            height,
            width,
            channels,
            vec![value; frames * height * width * channels],
        )
    }

    /// Builds frames from `f(frame, row, col, channel)`.
    pub fn from_fn(
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(frames * height * width * channels);
        for t in 0..frames {
            for y in 0..height {
                for x in 0..width {
                    for c in 0..channels {
                        data.push(f(t, y, x, c));
                    }
                }
            }
        }
        Self::new(frames, height, width, channels, data)
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
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn frame(&self, t: usize) -> &[u8] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn get(&self, t: usize, y: usize, x: usize, c: usize) -> u8 {
        self.data[((t * self.height + y) * self.width + x) * self.channels + c]
    }

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
        Self::new(indices.len(), self.height, self.width, self.channels, data)
    }

    /// Keeps frames `0, k, 2k, ...`.
    pub fn temporal_subsample(&self, k: usize) -> Result<Self> {
        let idx = crate::mask::subsample_indices(self.frames, k)?;
        self.select_frames(&idx)
    }

    pub fn reversed(&self) -> Self {
        let idx: Vec<usize> = (0..self.frames).rev().collect();
        self.select_frames(&idx).expect("non-empty")
    }

    /// Repeats a single frame `count` times.
    pub fn repeat_frame(&self, t: usize, count: usize) -> Result<Self> {
        self.select_frames(&vec![t; count])
    }

    pub fn same_dims(&self, other: &Self) -> Result<()> {
        let a = (self.frames, self.height, self.width, self.channels);
        let b = (other.frames, other.height, other.width, other.channels);
        if a != b {
            return Err(Error::dims(format!("{a:?}"), format!("{b:?}")));
        }
        Ok(())
    }

    fn check_region(&self, region: Option<&MaskSequence>) -> Result<()> {
        if let Some(m) = region {
            let a = (self.frames, self.height, self.width);
            if m.dims() != a {
                return Err(Error::dims(format!("mask {a:?}"), format!("mask {:?}", m.dims())));
            }
        }
        Ok(())
    }

    /// Per-pixel channel mean of frame `t`.
    fn luma(&self, t: usize) -> Vec<f64> {
        let c = self.channels;
        self.frame(t)
            .chunks_exact(c)
            .map(|px| px.iter().map(|&v| v as f64).sum::<f64>() / c as f64)
            .collect()
    }
}

/// Per-frame scores with their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameScores {
    pub per_frame: Vec<f64>,
    pub mean: f64,
    /// Frames (or frame pairs) whose evaluation region was empty and that
    /// report the cap value.
    pub empty_frames: Vec<usize>,
}

impl FrameScores {
    fn from_parts(parts: Vec<(f64, bool)>) -> Self {
        let per_frame: Vec<f64> = parts.iter().map(|p| p.0).collect();
        let empty_frames = parts
            .iter()
            .enumerate()
            .filter(|(_, p)| p.1)
            .map(|(i, _)| i)
            .collect();
        let mean = per_frame.iter().sum::<f64>() / per_frame.len() as f64;
        Self {
            per_frame,
            mean,
            empty_frames,
        }
    }
}

fn excluded(region: Option<&MaskSequence>, t: usize, pixel: usize) -> bool {
    region.is_some_and(|m| m.frame(t)[pixel] != 0)
}

/// Mean squared error over the unexcluded pixels of frame `t`, or `None` when
/// every pixel is excluded.
pub fn frame_mse(a: &FrameSequence, b: &FrameSequence, t: usize, region: Option<&MaskSequence>) -> Option<f64> {
    let c = a.channels;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, (pa, pb)) in a.frame(t).chunks_exact(c).zip(b.frame(t).chunks_exact(c)).enumerate() {
        if excluded(region, t, p) {
            continue;
        }
        for (&u, &v) in pa.iter().zip(pb) {
            let d = u as f64 - v as f64;
            sum += d * d;
        }
        n += c;
    }
    (n > 0).then(|| sum / n as f64)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP)
    }
}

pub fn psnr(a: &FrameSequence, b: &FrameSequence, region: Option<&MaskSequence>) -> Result<FrameScores> {
    a.same_dims(b)?;
    a.check_region(region)?;
    let parts = (0..a.frames)
        .into_par_iter()
        .map(|t| match frame_mse(a, b, t, region) {
            Some(mse) => (psnr_from_mse(mse), false),
            None => (PSNR_CAP, true),
        })
        .collect();
    Ok(FrameScores::from_parts(parts))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable "valid" Gaussian filter: output is `(h - 10) x (w - 10)`.
fn blur_valid(plane: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// SSIM map of one channel plane; entry `(y, x)` is centered on pixel
/// `(y + 5, x + 5)`.
fn ssim_map(a: &[f64], b: &[f64], h: usize, w: usize) -> Vec<f64> {
    let k = gaussian_kernel();
    let mul = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mu_a = blur_valid(a, h, w, &k);
    let mu_b = blur_valid(b, h, w, &k);
    let e_aa = blur_valid(&mul(a, a), h, w, &k);
    let e_bb = blur_valid(&mul(b, b), h, w, &k);
    let e_ab = blur_valid(&mul(a, b), h, w, &k);
    (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2))
        })
        .collect()
}

fn frame_ssim(a: &FrameSequence, b: &FrameSequence, t: usize, region: Option<&MaskSequence>) -> Option<f64> {
    let (h, w, ch) = (a.height, a.width, a.channels);
    let half = SSIM_WINDOW / 2;
    let ow = w + 1 - SSIM_WINDOW;
    let plane = |s: &FrameSequence, c: usize| -> Vec<f64> {
        s.frame(t).iter().skip(c).step_by(ch).map(|&v| v as f64).collect()
    };
    let mut total = 0.0;
    for c in 0..ch {
        let map = ssim_map(&plane(a, c), &plane(b, c), h, w);
        let mut sum = 0.0;
        let mut n = 0usize;
        for (i, v) in map.iter().enumerate() {
            let (y, x) = (i / ow + half, i % ow + half);
            if excluded(region, t, y * w + x) {
                continue;
            }
            sum += v;
            n += 1;
        }
        if n == 0 {
            return None;
        }
        total += sum / n as f64;
    }
    Some(total / ch as f64)
}

pub fn ssim(a: &FrameSequence, b: &FrameSequence, region: Option<&MaskSequence>) -> Result<FrameScores> {
    a.same_dims(b)?;
    a.check_region(region)?;
    if a.height < SSIM_WINDOW || a.width < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "SSIM needs frames of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            a.height, a.width
        )));
    }
    let parts = (0..a.frames)
        .into_par_iter()
        .map(|t| match frame_ssim(a, b, t, region) {
            Some(v) => (v, false),
            None => (SSIM_CAP, true),
        })
        .collect();
    Ok(FrameScores::from_parts(parts))
}

/// Mean absolute consecutive-frame difference, normalized to [0, 1].
///
/// A pixel of pair `(t, t + 1)` counts only when it is excluded in neither
/// frame. Pairs with nothing to evaluate report 0.
pub fn temporal_flicker(v: &FrameSequence, region: Option<&MaskSequence>) -> Result<FrameScores> {
    v.check_region(region)?;
    if v.frames < 2 {
        return Err(Error::InvalidArgument(
            "temporal flicker needs at least 2 frames".into(),
        ));
    }
    let c = v.channels;
    let parts = (0..v.frames - 1)
        .into_par_iter()
        .map(|t| {
            let mut sum = 0.0;
            let mut n = 0usize;
            let pairs = v.frame(t).chunks_exact(c).zip(v.frame(t + 1).chunks_exact(c));
            for (p, (pa, pb)) in pairs.enumerate() {
                if excluded(region, t, p) || excluded(region, t + 1, p) {
                    continue;
                }
                sum += pa.iter().zip(pb).map(|(&x, &y)| (x as f64 - y as f64).abs()).sum::<f64>();
                n += c;
            }
            if n == 0 {
                (0.0, true)
            } else {
                (sum / n as f64 / 255.0, false)
            }
        })
        .collect();
    Ok(FrameScores::from_parts(parts))
}

/// Patch descriptor: scaled mean, scaled deviation, orientation histogram.
fn patch_descriptor(luma: &[f64], h: usize, w: usize, y0: usize, x0: usize) -> [f64; 2 + ORIENTATION_BINS] {
    let (y1, x1) = ((y0 + PATCH_SIZE).min(h), (x0 + PATCH_SIZE).min(w));
    let n = ((y1 - y0) * (x1 - x0)) as f64;
    let mut sum = 0.0;
    let mut sq = 0.0;
    let mut hist = [0.0; ORIENTATION_BINS];
    let at = |y: usize, x: usize| luma[y * w + x];
    for y in y0..y1 {
        for x in x0..x1 {
            let v = at(y, x);
            sum += v;
            sq += v * v;
            let gx = at(y, (x + 1).min(w - 1)) - at(y, x.saturating_sub(1));
            let gy = at((y + 1).min(h - 1), x) - at(y.saturating_sub(1), x);
            let mag = gx.hypot(gy);
            if mag > 0.0 {
                let theta = gy.atan2(gx) + std::f64::consts::PI;
                let bin = ((theta / (2.0 * std::f64::consts::PI) * ORIENTATION_BINS as f64) as usize)
                    % ORIENTATION_BINS;
                hist[bin] += mag;
            }
        }
    }
    let mean = sum / n;
    let std = (sq / n - mean * mean).max(0.0).sqrt();
    let total: f64 = hist.iter().sum();
    let mut d = [0.0; 2 + ORIENTATION_BINS];
    d[0] = mean / DESCRIPTOR_INTENSITY_SCALE;
    d[1] = std / DESCRIPTOR_INTENSITY_SCALE;
    if total > 0.0 {
        for (o, hv) in d[2..].iter_mut().zip(hist) {
            *o = hv / total;
        }
    }
    d
}

fn descriptor_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean_nearest(from: &[[f64; 2 + ORIENTATION_BINS]], to: &[[f64; 2 + ORIENTATION_BINS]]) -> f64 {
    from.iter()
        .map(|p| to.iter().map(|q| descriptor_distance(p, q)).fold(f64::INFINITY, f64::min))
        .sum::<f64>()
        / from.len() as f64
}

/// Reference-free consistency of frame `t`: `1 / (1 + d)`, `None` when the
/// frame has no target or no background patch.
fn frame_region_consistency(v: &FrameSequence, target: &MaskSequence, t: usize) -> Option<f64> {
    let (h, w) = (v.height, v.width);
    let luma = v.luma(t);
    let mask = target.frame(t);
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for y0 in (0..h).step_by(PATCH_SIZE) {
        for x0 in (0..w).step_by(PATCH_SIZE) {
            let hit = (y0..(y0 + PATCH_SIZE).min(h))
                .any(|y| (x0..(x0 + PATCH_SIZE).min(w)).any(|x| mask[y * w + x] != 0));
            let d = patch_descriptor(&luma, h, w, y0, x0);
            if hit {
                inside.push(d);
            } else {
                outside.push(d);
            }
        }
    }
    if inside.is_empty() || outside.is_empty() {
        return None;
    }
    let d = 0.5 * (mean_nearest(&inside, &outside) + mean_nearest(&outside, &inside));
    Some(1.0 / (1.0 + d))
}

/// Per-frame consistency values (`None` where not evaluable) and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionScores {
    pub per_frame: Vec<Option<f64>>,
    pub mean: f64,
}

/// Compares patch statistics of the target region against the background.
///
/// Each frame is tiled into 8x8 patches; a patch touching the target belongs
/// to the target side, every other patch to the background side. The score
/// is `1 / (1 + d)` with `d` the symmetric mean nearest-descriptor distance,
/// averaged over frames that have both sides.
pub fn region_consistency(v: &FrameSequence, target: &MaskSequence) -> Result<RegionScores> {
    v.check_region(Some(target))?;
    if target.is_empty() {
        return Err(Error::EmptyRegion("target mask is empty in every frame".into()));
    }
    let per_frame: Vec<Option<f64>> = (0..v.frames)
        .into_par_iter()
        .map(|t| frame_region_consistency(v, target, t))
        .collect();
    let vals: Vec<f64> = per_frame.iter().flatten().copied().collect();
    if vals.is_empty() {
        return Err(Error::EmptyRegion(
            "no frame has both target and background patches".into(),
        ));
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    Ok(RegionScores { per_frame, mean })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalFlags {
    /// Extra exclusion band around the mask for masked metrics, in pixels.
    #[serde(default)]
    pub exclusion_dilation: usize,
    /// Fail instead of leaving paired metrics empty when no ground truth is given.
    #[serde(default)]
    pub require_paired: bool,
}

/// Aggregate metric values; `None` serializes as `null`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub mpsnr: Option<f64>,
    pub mssim: Option<f64>,
    pub temporal_flicker: Option<f64>,
    pub remove_proxy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metrics: Metrics,
    pub per_frame: BTreeMap<String, Vec<Option<f64>>>,
    pub metadata: BTreeMap<String, Value>,
}

fn some_all(v: &[f64]) -> Vec<Option<f64>> {
    v.iter().copied().map(Some).collect()
}

pub fn evaluate(
    pred: &FrameSequence,
    gt: Option<&FrameSequence>,
    mask: &MaskSequence,
    flags: &EvalFlags,
) -> Result<MetricsReport> {
    evaluate_with_source(pred, gt, None, mask, flags)
}

/// Full evaluation of one prediction.
///
/// Paired metrics (`psnr`, `ssim`) need `gt`. Masked metrics compare against
/// `gt` when present, otherwise against `source` (the unedited input, whose
/// background should be preserved). Flicker and the region-consistency proxy
/// need only `pred`.
pub fn evaluate_with_source(
    pred: &FrameSequence,
    gt: Option<&FrameSequence>,
    source: Option<&FrameSequence>,
    mask: &MaskSequence,
    flags: &EvalFlags,
) -> Result<MetricsReport> {
    pred.check_region(Some(mask))?;
    if flags.require_paired && gt.is_none() {
        return Err(Error::InvalidArgument(
            "paired metrics requested but no ground truth given".into(),
        ));
    }
    for other in gt.iter().chain(source.iter()) {
        pred.same_dims(other)?;
    }

    let mut report = MetricsReport::default();
    let md = &mut report.metadata;
    md.insert("tool".into(), json!("vomask"));
    md.insert("version".into(), json!(crate::VERSION));
    md.insert("mask_sha256".into(), json!(crate::seqio::mask_sha256(mask)));
    md.insert(
        "mode".into(),
        json!(if gt.is_some() { "paired" } else { "unpaired" }),
    );
    md.insert("psnr_cap_db".into(), json!(PSNR_CAP));
    md.insert("exclusion_dilation".into(), json!(flags.exclusion_dilation));
    md.insert(
        "temporal_flicker_definition".into(),
        json!("mean consecutive-frame absolute difference / 255, lower is better"),
    );
    md.insert(
        "remove_proxy_definition".into(),
        json!("patch-statistics target-vs-background consistency 1/(1+d); not the learned-feature score"),
    );

    let ssim_ok = pred.height >= SSIM_WINDOW && pred.width >= SSIM_WINDOW;
    if let Some(gt) = gt {
        let p = psnr(pred, gt, None)?;
        report.metrics.psnr = Some(p.mean);
        report.per_frame.insert("psnr".into(), some_all(&p.per_frame));
        if ssim_ok {
            let s = ssim(pred, gt, None)?;
            report.metrics.ssim = Some(s.mean);
            report.per_frame.insert("ssim".into(), some_all(&s.per_frame));
        }
    }

    let exclusion = if flags.exclusion_dilation > 0 {
        mask.dilate(StructuringElement::square(flags.exclusion_dilation)?)
    } else {
        mask.clone()
    };
    let reference = gt.or(source);
    if let Some(r) = reference {
        md.insert(
            "masked_reference".into(),
            json!(if gt.is_some() { "gt" } else { "source" }),
        );
        let p = psnr(pred, r, Some(&exclusion))?;
        report.metrics.mpsnr = Some(p.mean);
        report.per_frame.insert("mpsnr".into(), some_all(&p.per_frame));
        md.insert("mpsnr_empty_frames".into(), json!(p.empty_frames));
        if ssim_ok {
            let s = ssim(pred, r, Some(&exclusion))?;
            report.metrics.mssim = Some(s.mean);
            report.per_frame.insert("mssim".into(), some_all(&s.per_frame));
            md.insert("mssim_empty_frames".into(), json!(s.empty_frames));
        }
    }
    if !ssim_ok {
        md.insert("ssim_skipped".into(), json!("frames smaller than the SSIM window"));
    }

    if pred.frames >= 2 {
        let tf = temporal_flicker(pred, None)?;
        report.metrics.temporal_flicker = Some(tf.mean);
        report.per_frame.insert("temporal_flicker".into(), some_all(&tf.per_frame));
    }

    match region_consistency(pred, mask) {
        Ok(rc) => {
            report.metrics.remove_proxy = Some(rc.mean);
            report.per_frame.insert("remove_proxy".into(), rc.per_frame);
        }
        Err(Error::EmptyRegion(why)) => {
            md.insert("remove_proxy_skipped".into(), json!(why));
        }
        Err(e) => return Err(e),
    }
    Ok(report)
}

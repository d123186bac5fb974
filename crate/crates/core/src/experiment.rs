//! Desk-scale protocol harnesses: skip-frame coverage of the mask
//! compression modes, and the mask-drop degradation curve.
//!
//! Both measure mask-pipeline quantities, not model output quality. Cells are
//! evaluated in parallel and merged in sorted key order, so output bytes
//! depend only on the configuration.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::degrade;
use crate::error::{Error, Result};
use crate::mask::MaskSequence;
use crate::metrics::{self, FrameSequence};
use crate::muse::{self, CompressionMode};
use crate::rng::SeededStream;
use crate::seqio::json_number;

pub const LABEL: &str = "pipeline-level (mask quantities), not model-level";
pub const MAX_EXPERIMENT_DROP_RATE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Temporal subsampling factors; 1 keeps every frame.
    pub skip_factors: Vec<usize>,
    /// Per-original-frame displacement of the square, in pixels.
    pub jumps: Vec<usize>,
    pub box_size: usize,
    /// Frames after subsampling.
    pub clip_frames: usize,
    pub drop_rates: Vec<f64>,
    pub ratio: usize,
    pub seeds: Vec<u64>,
    /// Synthetic clip size for the mask-drop curve.
    pub video_frames: usize,
    pub video_size: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            skip_factors: vec![1, 2, 4],
            jumps: vec![0, 2, 4, 6, 9],
            box_size: 6,
            clip_frames: 21,
            drop_rates: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            ratio: muse::DEFAULT_RATIO,
            seeds: vec![0],
            video_frames: 33,
            video_size: 48,
        }
    }
}

impl ExperimentConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = vec![seed];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.skip_factors.is_empty() || self.skip_factors.contains(&0) {
            return bad("skip_factors must be a nonempty list of k >= 1".into());
        }
        if self.jumps.is_empty() {
            return bad("jumps must be nonempty".into());
        }
        if self.drop_rates.is_empty() {
            return bad("drop_rates must be nonempty".into());
        }
        if let Some(r) = self
            .drop_rates
            .iter()
            .find(|r| !(0.0..=MAX_EXPERIMENT_DROP_RATE).contains(*r))
        {
            return bad(format!("drop rate {r} outside [0, {MAX_EXPERIMENT_DROP_RATE}]"));
        }
        if self.seeds.is_empty() {
            return bad("seeds must be nonempty".into());
        }
        if self.ratio == 0 || self.box_size == 0 || self.clip_frames == 0 {
            return bad("ratio, box_size and clip_frames must be >= 1".into());
        }
        if self.video_frames < 2 || self.video_size < 16 {
            return bad("video_frames must be >= 2 and video_size >= 16".into());
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

const MARGIN: usize = 2;
const SQUARE_HEIGHT_PAD: usize = 8;

/// Square of side `box_size` sliding right by `jump` pixels per frame, over
/// `frames` frames; the seed picks the row.
pub fn jumping_square(frames: usize, box_size: usize, jump: usize, seed: u64) -> Result<MaskSequence> {
    let h = box_size + SQUARE_HEIGHT_PAD + 2 * MARGIN;
    let w = box_size + jump * frames.saturating_sub(1) + 2 * MARGIN;
    let mut rng = SeededStream::new(seed, 0);
    let row = rng.int_inclusive(MARGIN as i64, (h - MARGIN - box_size) as i64) as usize;
    MaskSequence::from_fn(frames, h, w, |t, y, x| {
        let col = MARGIN + jump * t;
        (row..row + box_size).contains(&y) && (col..col + box_size).contains(&x)
    })
}

/// `|expanded ∩ original| / |original|`, 1.0 for an empty original.
pub fn coverage(expanded: &MaskSequence, original: &MaskSequence) -> Result<f64> {
    let total = original.count_ones();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(expanded.intersection_count(original)? as f64 / total as f64)
}

/// Compresses with `mode`, expands back and measures coverage.
pub fn mode_coverage(m: &MaskSequence, mode: CompressionMode, ratio: usize) -> Result<f64> {
    let latent = match mode {
        CompressionMode::Union => muse::compress_union(m, ratio)?,
        CompressionMode::Nearest => muse::compress_nearest(m, ratio)?,
    };
    coverage(&muse::expand(&latent, m.frames(), ratio)?, m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipFrameRow {
    pub seed: u64,
    pub jump: usize,
    pub k: usize,
    pub mode: CompressionMode,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipFrameTable {
    pub experiment: String,
    pub label: String,
    pub config: ExperimentConfig,
    pub rows: Vec<SkipFrameRow>,
}

fn mode_key(m: CompressionMode) -> u8 {
    match m {
        CompressionMode::Nearest => 0,
        CompressionMode::Union => 1,
    }
}

/// The original clip has `k * (clip - 1) + 1` frames so every subsampled
/// clip has the same length.
pub fn experiment_skipframe(cfg: &ExperimentConfig) -> Result<SkipFrameTable> {
    cfg.validate()?;
    let cells: Vec<(u64, usize, usize)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| cfg.jumps.iter().flat_map(move |&j| cfg.skip_factors.iter().map(move |&k| (s, j, k))))
        .collect();
    let mut rows: Vec<SkipFrameRow> = cells
        .par_iter()
        .map(|&(seed, jump, k)| -> Result<Vec<SkipFrameRow>> {
            let original = jumping_square(k * (cfg.clip_frames - 1) + 1, cfg.box_size, jump, seed)?;
            let sub = original.temporal_subsample(k)?;
            [CompressionMode::Nearest, CompressionMode::Union]
                .into_iter()
                .map(|mode| {
                    Ok(SkipFrameRow {
                        seed,
                        jump,
                        k,
                        mode,
                        coverage: mode_coverage(&sub, mode, cfg.ratio)?,
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    rows.sort_by_key(|r| (r.seed, r.jump, r.k, mode_key(r.mode)));
    Ok(SkipFrameTable {
        experiment: "skipframe".into(),
        label: LABEL.into(),
        config: cfg.clone(),
        rows,
    })
}

impl SkipFrameTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,jump,k,mode,coverage\n");
        for r in &self.rows {
            let mode = match r.mode {
                CompressionMode::Nearest => "nearest",
                CompressionMode::Union => "union",
            };
            let _ = writeln!(s, "{},{},{},{},{}", r.seed, r.jump, r.k, mode, json_number(Some(r.coverage)));
        }
        s
    }

    pub fn coverage(&self, seed: u64, jump: usize, k: usize, mode: CompressionMode) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.seed == seed && r.jump == jump && r.k == k && r.mode == mode)
            .map(|r| r.coverage)
    }
}

/// Video, ground-truth mask and optional fixed prediction for the mask-drop
/// curve.
#[derive(Debug, Clone)]
pub struct MaskDropData {
    pub video: FrameSequence,
    pub mask: MaskSequence,
    pub prediction: Option<FrameSequence>,
}

/// Textured gray clip with a bright square drifting diagonally.
pub fn synthetic_clip(frames: usize, size: usize, seed: u64) -> Result<(FrameSequence, MaskSequence)> {
    let side = size / 3;
    let mut rng = SeededStream::new(seed, 1);
    let (r0, c0) = (rng.int_inclusive(0, 3) as usize, rng.int_inclusive(0, 3) as usize);
    let travel = size - side - 4;
    let pos = |t: usize| -> (usize, usize) {
        let s = t * travel / (frames - 1).max(1);
        (r0 + s / 2, c0 + s)
    };
    let mask = MaskSequence::from_fn(frames, size, size, |t, y, x| {
        let (r, c) = pos(t);
        (r..r + side).contains(&y) && (c..c + side).contains(&x)
    })?;
    let video = FrameSequence::from_fn(frames, size, size, 1, |t, y, x, _| {
        if mask.get(t, y, x) {
            200 + ((y + x) % 4) as u8 * 12
        } else {
            (60 + (y * 3 + x * 5) % 48 + ((x / 4 + y / 4) % 2) * 20) as u8
        }
    })?;
    Ok((video, mask))
}

/// Mean-fill baseline: masked pixels take the mean of the frame's unmasked
/// pixels, per channel.
pub fn mean_fill(video: &FrameSequence, mask: &MaskSequence) -> Result<FrameSequence> {
    let (f, h, w, c) = (video.frames(), video.height(), video.width(), video.channels());
    let mut data = video.as_slice().to_vec();
    for t in 0..f {
        let frame = video.frame(t);
        let m = mask.frame(t);
        let mut sum = vec![0.0; c];
        let mut n = 0usize;
        for (p, px) in frame.chunks_exact(c).enumerate() {
            if m[p] == 0 {
                px.iter().zip(sum.iter_mut()).for_each(|(&v, s)| *s += v as f64);
                n += 1;
            }
        }
        if n == 0 {
            continue;
        }
        let fill: Vec<u8> = sum.iter().map(|s| (s / n as f64).round() as u8).collect();
        let out = &mut data[t * h * w * c..(t + 1) * h * w * c];
        for (p, px) in out.chunks_exact_mut(c).enumerate() {
            if m[p] != 0 {
                px.copy_from_slice(&fill);
            }
        }
    }
    FrameSequence::new(f, h, w, c, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskDropRow {
    pub seed: u64,
    pub rate: f64,
    pub frames: usize,
    pub dropped: usize,
    /// Fraction of ground-truth mask pixels still covered after dropout and
    /// preprocessing.
    pub coverage: f64,
    /// Region consistency of the prediction over the preprocessed mask.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskDropCurve {
    pub experiment: String,
    pub label: String,
    /// `mean_fill` or `supplied`.
    pub predictor: String,
    pub config: ExperimentConfig,
    /// Score of the undegraded pipeline per seed, for comparison with the
    /// rate-0 rows.
    pub undegraded: Vec<(u64, f64)>,
    pub rows: Vec<MaskDropRow>,
}

struct Scored {
    coverage: f64,
    score: f64,
}

fn run_pipeline(video: &FrameSequence, gt: &MaskSequence, mask: &MaskSequence, fixed: Option<&FrameSequence>, ratio: usize) -> Result<Scored> {
    let pre = muse::muse_preprocess(mask, ratio)?;
    let pred = match fixed {
        Some(p) => p.clone(),
        None => mean_fill(video, &pre)?,
    };
    Ok(Scored {
        coverage: coverage(&pre, gt)?,
        score: metrics::region_consistency(&pred, &pre)?.mean,
    })
}

/// For each rate: drop mask frames, preprocess, and score the prediction.
/// Without `data`, each seed gets its own synthetic clip.
pub fn experiment_maskdrop(cfg: &ExperimentConfig, data: Option<&MaskDropData>) -> Result<MaskDropCurve> {
    cfg.validate()?;
    if let Some(d) = data {
        if d.mask.dims() != (d.video.frames(), d.video.height(), d.video.width()) {
            return Err(Error::dims(
                format!("mask {:?}", (d.video.frames(), d.video.height(), d.video.width())),
                format!("{:?}", d.mask.dims()),
            ));
        }
        if let Some(p) = &d.prediction {
            d.video.same_dims(p)?;
        }
    }
    let clip = |seed: u64| -> Result<(FrameSequence, MaskSequence, Option<FrameSequence>)> {
        match data {
            Some(d) => Ok((d.video.clone(), d.mask.clone(), d.prediction.clone())),
            None => {
                let (v, m) = synthetic_clip(cfg.video_frames, cfg.video_size, seed)?;
                Ok((v, m, None))
            }
        }
    };

    let undegraded: Vec<(u64, f64)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let (v, m, p) = clip(seed)?;
            Ok((seed, run_pipeline(&v, &m, &m, p.as_ref(), cfg.ratio)?.score))
        })
        .collect::<Result<_>>()?;

    let cells: Vec<(u64, usize)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| (0..cfg.drop_rates.len()).map(move |i| (s, i)))
        .collect();
    let mut rows: Vec<(usize, MaskDropRow)> = cells
        .par_iter()
        .map(|&(seed, i)| {
            let rate = cfg.drop_rates[i];
            let (v, m, p) = clip(seed)?;
            let dropped_idx = degrade::dropped_frames(m.frames(), rate, seed, false)?;
            let degraded = degrade::drop_frames(&m, rate, seed)?;
            let s = run_pipeline(&v, &m, &degraded, p.as_ref(), cfg.ratio)?;
            Ok((
                i,
                MaskDropRow {
                    seed,
                    rate,
                    frames: m.frames(),
                    dropped: dropped_idx.len(),
                    coverage: s.coverage,
                    score: s.score,
                },
            ))
        })
        .collect::<Result<_>>()?;
    rows.sort_by_key(|(i, r)| (r.seed, *i));
    Ok(MaskDropCurve {
        experiment: "maskdrop".into(),
        label: LABEL.into(),
        predictor: if data.is_some_and(|d| d.prediction.is_some()) { "supplied" } else { "mean_fill" }.into(),
        config: cfg.clone(),
        undegraded,
        rows: rows.into_iter().map(|(_, r)| r).collect(),
    })
}

impl MaskDropCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,rate,frames,dropped,coverage,score\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.seed,
                json_number(Some(r.rate)),
                r.frames,
                r.dropped,
                json_number(Some(r.coverage)),
                json_number(Some(r.score))
            );
        }
        s
    }
}

/// Writes `<name>.json` and `<name>.csv` into `dir`.
pub fn write_outputs<T: Serialize>(dir: &Path, name: &str, value: &T, csv: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    std::fs::write(dir.join(format!("{name}.json")), json)?;
    std::fs::write(dir.join(format!("{name}.csv")), csv)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            seeds: vec![3],
            video_frames: 17,
            video_size: 32,
            ..Default::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = [
            ExperimentConfig { skip_factors: vec![0], ..Default::default() },
            ExperimentConfig { drop_rates: vec![0.6], ..Default::default() },
            ExperimentConfig { seeds: vec![], ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))));
        }
        let err = serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#);
        assert!(err.is_err());
    }

    #[test]
    fn static_square_is_fully_covered() {
        let m = jumping_square(21, 6, 0, 1).unwrap();
        for mode in [CompressionMode::Nearest, CompressionMode::Union] {
            for k in [1, 2, 4] {
                let sub = jumping_square(4 * 20 + 1, 6, 0, 1).unwrap().temporal_subsample(k).unwrap();
                assert_eq!(mode_coverage(&sub, mode, 4).unwrap(), 1.0);
            }
            assert_eq!(mode_coverage(&m, mode, 4).unwrap(), 1.0);
        }
    }

    #[test]
    fn nearest_coverage_matches_overlap_formula() {
        // displacement d per clip frame; in-window offset o keeps (box - o*d)+ columns
        let (boxs, clip, ratio) = (6usize, 21usize, 4usize);
        for (jump, k) in [(1, 1), (1, 2), (2, 2), (1, 4), (3, 1)] {
            let sub = jumping_square(k * (clip - 1) + 1, boxs, jump, 0).unwrap().temporal_subsample(k).unwrap();
            let d = jump * k;
            let kept: usize = (0..clip)
                .map(|t| {
                    let start = *muse::window(muse::window_of(t, ratio), clip, ratio).start();
                    boxs.saturating_sub((t - start) * d)
                })
                .sum();
            let expected = kept as f64 / (clip * boxs) as f64;
            let got = mode_coverage(&sub, CompressionMode::Nearest, ratio).unwrap();
            assert!((got - expected).abs() < 1e-12, "jump {jump} k {k}: {got} vs {expected}");
        }
    }

    #[test]
    fn skipframe_table_shape() {
        let t = experiment_skipframe(&small()).unwrap();
        assert_eq!(t.rows.len(), 5 * 3 * 2);
        for r in &t.rows {
            if r.mode == CompressionMode::Union {
                assert_eq!(r.coverage, 1.0);
            }
        }
        let near = |j, k| t.coverage(3, j, k, CompressionMode::Nearest).unwrap();
        assert!(near(6, 4) < 1.0);
        for j in [0, 2, 4, 6, 9] {
            assert!(near(j, 1) >= near(j, 2) && near(j, 2) >= near(j, 4));
        }
        assert_eq!(t.to_csv().lines().count(), t.rows.len() + 1);
    }

    #[test]
    fn maskdrop_curve() {
        let cfg = small();
        let c = experiment_maskdrop(&cfg, None).unwrap();
        assert_eq!(c.rows.len(), cfg.drop_rates.len());
        assert_eq!(c.rows[0].score, c.undegraded[0].1);
        assert_eq!(c.rows[0].coverage, 1.0);
        for r in &c.rows {
            assert_eq!(r.dropped, degrade::drop_count(r.frames, r.rate));
        }
        assert_eq!(experiment_maskdrop(&cfg, None).unwrap(), c);
    }

    #[test]
    fn maskdrop_with_supplied_prediction() {
        let (v, m) = synthetic_clip(9, 32, 0).unwrap();
        let data = MaskDropData {
            video: v.clone(),
            mask: m,
            prediction: Some(v),
        };
        let cfg = ExperimentConfig { drop_rates: vec![0.0, 0.5], ..small() };
        let c = experiment_maskdrop(&cfg, Some(&data)).unwrap();
        assert_eq!(c.predictor, "supplied");
        assert_eq!(c.rows[1].dropped, 5);
    }

    #[test]
    fn mean_fill_only_touches_mask() {
        let (v, m) = synthetic_clip(5, 32, 1).unwrap();
        let f = mean_fill(&v, &m).unwrap();
        for t in 0..5 {
            for y in 0..32 {
                for x in 0..32 {
                    if !m.get(t, y, x) {
                        assert_eq!(f.get(t, y, x, 0), v.get(t, y, x, 0));
                    }
                }
            }
        }
    }
}

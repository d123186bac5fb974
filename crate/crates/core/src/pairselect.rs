//! Paired-benchmark construction: rank candidate clips by how well a single
//! clean background image, repeated over the clip, matches the clip outside
//! the object mask.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::MaskSequence;
use crate::metrics::{frame_mse, psnr_from_mse, FrameSequence};
use crate::seqio;

pub const DEFAULT_MIN_FRAMES: usize = 30;
pub const DEFAULT_TOP_K: usize = 50;

#[derive(Debug, Clone)]
pub struct PairCandidate {
    pub id: String,
    pub video: FrameSequence,
    /// Single clean frame.
    pub background: FrameSequence,
    pub mask: MaskSequence,
    pub min_frames: usize,
}

impl PairCandidate {
    pub fn validate(&self) -> Result<()> {
        let v = &self.video;
        if v.frames() < self.min_frames {
            return Err(Error::InvalidArgument(format!(
                "candidate {}: {} frames, need at least {}",
                self.id,
                v.frames(),
                self.min_frames
            )));
        }
        let b = &self.background;
        if b.frames() != 1 {
            return Err(Error::InvalidArgument(format!(
                "candidate {}: background must be a single frame, got {}",
                self.id,
                b.frames()
            )));
        }
        if (b.height(), b.width(), b.channels()) != (v.height(), v.width(), v.channels()) {
            return Err(Error::dims(
                format!("background {}x{}x{}", v.height(), v.width(), v.channels()),
                format!("{}x{}x{}", b.height(), b.width(), b.channels()),
            ));
        }
        if self.mask.dims() != (v.frames(), v.height(), v.width()) {
            return Err(Error::dims(
                format!("mask {:?}", (v.frames(), v.height(), v.width())),
                format!("{:?}", self.mask.dims()),
            ));
        }
        Ok(())
    }
}

/// Mean per-frame PSNR between the clip and its repeated background, over
/// pixels outside the mask. Frames fully covered by the mask are skipped.
pub fn background_consistency(c: &PairCandidate) -> Result<f64> {
    c.validate()?;
    let reference = c.background.repeat_frame(0, c.video.frames())?;
    let scores: Vec<f64> = (0..c.video.frames())
        .filter_map(|t| frame_mse(&c.video, &reference, t, Some(&c.mask)))
        .map(psnr_from_mse)
        .collect();
    if scores.is_empty() {
        return Err(Error::EmptyRegion(format!(
            "candidate {}: mask covers every frame entirely",
            c.id
        )));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPair {
    pub rank: usize,
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub k: usize,
    /// How per-frame PSNR values are pooled into one score.
    pub score_aggregation: String,
    pub selected: Vec<RankedPair>,
    pub excluded: Vec<Excluded>,
}

/// Descending score, ties by id.
fn rank_order(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

/// Keeps the `k` best-scoring candidates. Candidates that fail validation are
/// excluded with a reason instead of failing the batch.
pub fn select_top(candidates: &[PairCandidate], k: usize) -> Result<Selection> {
    let scored: Vec<(String, Result<f64>)> = candidates
        .par_iter()
        .map(|c| (c.id.clone(), background_consistency(c)))
        .collect();
    let mut valid = Vec::new();
    let mut excluded = Vec::new();
    for (id, r) in scored {
        match r {
            Ok(s) => valid.push((id, s)),
            Err(e) => {
                log::warn!("excluding candidate {id}: {e}");
                excluded.push(Excluded {
                    id,
                    reason: e.to_string(),
                })
            }
        }
    }
    rank_scores(valid, k, excluded)
}

/// Ranks precomputed `(id, score)` pairs.
pub fn rank_scores(mut scored: Vec<(String, f64)>, k: usize, excluded: Vec<Excluded>) -> Result<Selection> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if k > scored.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {} valid candidates ({} excluded)",
            scored.len(),
            excluded.len()
        )));
    }
    scored.sort_by(rank_order);
    let selected = scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (id, score))| RankedPair { rank: i + 1, id, score })
        .collect();
    Ok(Selection {
        k,
        score_aggregation: "mean of per-frame psnr".into(),
        selected,
        excluded,
    })
}

/// One manifest entry. Relative paths resolve against the manifest's folder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// Frame directory.
    pub video: PathBuf,
    /// PGM/PPM file or one-frame directory.
    pub background: PathBuf,
    /// `.mseq` file.
    pub mask: PathBuf,
    #[serde(default)]
    pub min_frames: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairManifest {
    pub candidates: Vec<ManifestEntry>,
}

impl PairManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    /// Loads every candidate's media; entries that fail to load are returned
    /// as exclusions.
    pub fn load_candidates(&self, base: &Path, min_frames: usize) -> (Vec<PairCandidate>, Vec<Excluded>) {
        let mut ok = Vec::new();
        let mut bad = Vec::new();
        for e in &self.candidates {
            let load = || -> Result<PairCandidate> {
                Ok(PairCandidate {
                    id: e.id.clone(),
                    video: seqio::load_frames(base.join(&e.video))?,
                    background: seqio::load_frames(base.join(&e.background))?,
                    mask: seqio::load_mseq(base.join(&e.mask))?,
                    min_frames: e.min_frames.unwrap_or(min_frames),
                })
            };
            match load() {
                Ok(c) => ok.push(c),
                Err(err) => {
                    log::warn!("excluding candidate {}: {err}", e.id);
                    bad.push(Excluded {
                        id: e.id.clone(),
                        reason: err.to_string(),
                    })
                }
            }
        }
        (ok, bad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn candidate(id: &str, drift: u8, frames: usize) -> PairCandidate {
        let (h, w) = (12, 12);
        let bg = FrameSequence::from_fn(1, h, w, 1, |_, y, x, _| (40 + y * 5 + x * 3) as u8).unwrap();
        let mask = MaskSequence::from_fn(frames, h, w, |t, y, x| (4..8).contains(&y) && (t..t + 3).contains(&x)).unwrap();
        let video = FrameSequence::from_fn(frames, h, w, 1, |t, y, x, _| {
            if mask.get(t, y, x) {
                250
            } else {
                bg.get(0, y, x, 0) + drift
            }
        })
        .unwrap();
        PairCandidate {
            id: id.into(),
            video,
            background: bg,
            mask,
            min_frames: 3,
        }
    }

    #[test]
    fn consistency_examples() {
        assert_eq!(background_consistency(&candidate("a", 0, 4)).unwrap(), 100.0);
        let s = background_consistency(&candidate("b", 10, 4)).unwrap();
        assert!((s - 28.1308).abs() < 1e-3, "{s}");
        let small = background_consistency(&candidate("c", 3, 4)).unwrap();
        let large = background_consistency(&candidate("d", 12, 4)).unwrap();
        assert!(large < small);
    }

    #[test]
    fn full_mask_is_rejected() {
        let mut c = candidate("a", 0, 4);
        c.mask = MaskSequence::ones(4, 12, 12).unwrap();
        assert!(matches!(background_consistency(&c), Err(Error::EmptyRegion(_))));
    }

    #[test]
    fn select_examples() {
        let cands: Vec<_> = (0..6).map(|i| candidate(&format!("c{i}"), (6 - i) as u8 * 4, 4)).collect();
        let all = select_top(&cands, 6).unwrap();
        assert_eq!(all.selected.len(), 6);
        let ids: Vec<_> = all.selected.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["c5", "c4", "c3", "c2", "c1", "c0"]);
        assert!(all.selected.windows(2).all(|w| w[0].score >= w[1].score));

        let tie = vec![candidate("b", 5, 4), candidate("a", 5, 4)];
        let s = select_top(&tie, 2).unwrap();
        assert_eq!(s.selected[0].id, "a");
        assert_eq!(s.selected[1].rank, 2);

        assert!(select_top(&tie, 3).unwrap_err().to_string().contains("2 valid"));
        assert!(select_top(&tie, 0).is_err());
    }

    #[test]
    fn short_clips_are_excluded_not_fatal() {
        let mut cands = vec![candidate("ok1", 1, 4), candidate("ok2", 2, 4)];
        let mut short = candidate("short", 0, 2);
        short.min_frames = 3;
        cands.push(short);
        let s = select_top(&cands, 2).unwrap();
        assert_eq!(s.excluded.len(), 1);
        assert_eq!(s.excluded[0].id, "short");
    }

    #[test]
    fn reselection_is_stable_and_order_free() {
        let cands: Vec<_> = (0..8).map(|i| candidate(&format!("x{i}"), (i * 7 % 5) as u8, 4)).collect();
        let s = select_top(&cands, 4).unwrap();
        let kept: Vec<_> = cands
            .iter()
            .filter(|c| s.selected.iter().any(|r| r.id == c.id))
            .cloned()
            .collect();
        assert_eq!(select_top(&kept, 4).unwrap().selected, s.selected);
        let mut rev = cands.clone();
        rev.reverse();
        assert_eq!(select_top(&rev, 4).unwrap().selected, s.selected);
    }
}

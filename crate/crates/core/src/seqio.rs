//! On-disk formats.
//!
//! `.mseq` layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "MSEQ"
//! 4       1     version = 1
//! 5       4     frames  (u32)
//! 9       4     height  (u32)
//! 13      4     width   (u32)
//! 17      ...   payload: per frame, per row, `width` bits MSB-first,
//!               each row zero-padded to a byte boundary
//! ```
//!
//! Frame directories hold `frame_000000.pgm` (P5) or `.ppm` (P6) files with
//! maxval 255 next to a `manifest.json` of `{width, height, count, channels, fps}`.

use std::fs;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mask::MaskSequence;
use crate::metrics::{FrameSequence, MetricsReport};

pub const MSEQ_MAGIC: [u8; 4] = *b"MSEQ";
pub const MSEQ_VERSION: u8 = 1;
pub const MSEQ_HEADER_LEN: usize = 17;

fn row_bytes(width: usize) -> usize {
    width.div_ceil(8)
}

pub fn payload_len(frames: usize, height: usize, width: usize) -> usize {
    frames * height * row_bytes(width)
}

pub fn encode_mseq(m: &MaskSequence) -> Vec<u8> {
    let (f, h, w) = m.dims();
    let mut out = Vec::with_capacity(MSEQ_HEADER_LEN + payload_len(f, h, w));
    out.extend_from_slice(&MSEQ_MAGIC);
    out.push(MSEQ_VERSION);
    for d in [f, h, w] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for row in m.as_slice().chunks_exact(w) {
        for bits in row.chunks(8) {
            let mut byte = 0u8;
            for (i, &b) in bits.iter().enumerate() {
                byte |= b << (7 - i);
            }
            out.push(byte);
        }
    }
    out
}

/// Writes `m` and returns the number of bytes written.
pub fn write_mseq<W: Write>(m: &MaskSequence, mut sink: W) -> Result<u64> {
    let bytes = encode_mseq(m);
    let mut offset = 0usize;
    while offset < bytes.len() {
        match sink.write(&bytes[offset..]) {
            Ok(0) => {
                return Err(Error::Write {
                    offset: offset as u64,
                    source: io::ErrorKind::WriteZero.into(),
                })
            }
            Ok(n) => offset += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(source) => {
                return Err(Error::Write {
                    offset: offset as u64,
                    source,
                })
            }
        }
    }
    sink.flush().map_err(|source| Error::Write {
        offset: offset as u64,
        source,
    })?;
    Ok(offset as u64)
}

pub fn decode_mseq(bytes: &[u8]) -> Result<MaskSequence> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            expected: MSEQ_HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MSEQ_MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    if bytes.len() < MSEQ_HEADER_LEN {
        return Err(Error::Truncated {
            expected: MSEQ_HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    if bytes[4] != MSEQ_VERSION {
        return Err(Error::BadVersion(bytes[4]));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (f, h, w) = (dim(5), dim(9), dim(13));
    if f == 0 || h == 0 || w == 0 {
        return Err(Error::InvalidArgument(format!(
            "mseq header has zero dimension {f}x{h}x{w}"
        )));
    }
    let rb = row_bytes(w);
    let expected = MSEQ_HEADER_LEN as u64 + (f as u64) * (h as u64) * (rb as u64);
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(Error::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(Error::TrailingBytes(actual - expected));
    }
    let mut data = Vec::with_capacity(f * h * w);
    let pad_mask: u8 = if w % 8 == 0 { 0 } else { 0xFF >> (w % 8) };
    for (r, row) in bytes[MSEQ_HEADER_LEN..].chunks_exact(rb).enumerate() {
        if row[rb - 1] & pad_mask != 0 {
            return Err(Error::DirtyPadding {
                frame: (r / h) as u32,
                row: (r % h) as u32,
            });
        }
        data.extend((0..w).map(|x| (row[x / 8] >> (7 - x % 8)) & 1));
    }
    MaskSequence::new(f, h, w, data)
}

pub fn read_mseq<R: Read>(mut source: R) -> Result<MaskSequence> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    decode_mseq(&bytes)
}

pub fn load_mseq(path: impl AsRef<Path>) -> Result<MaskSequence> {
    read_mseq(BufReader::new(fs::File::open(path)?))
}

pub fn save_mseq(m: &MaskSequence, path: impl AsRef<Path>) -> Result<u64> {
    let f = fs::File::create(path)?;
    write_mseq(m, io::BufWriter::new(f))
}

/// Hex SHA-256 of the canonical `.mseq` encoding.
pub fn mask_sha256(m: &MaskSequence) -> String {
    let digest = Sha256::digest(encode_mseq(m));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameManifest {
    pub width: usize,
    pub height: usize,
    pub count: usize,
    pub channels: usize,
    pub fps: f64,
}

pub const MANIFEST_NAME: &str = "manifest.json";
pub const DEFAULT_FPS: f64 = 24.0;

fn pnm_ext(channels: usize) -> &'static str {
    if channels == 3 {
        "ppm"
    } else {
        "pgm"
    }
}

pub fn frame_path(dir: &Path, index: usize, channels: usize) -> PathBuf {
    dir.join(format!("frame_{index:06}.{}", pnm_ext(channels)))
}

pub fn encode_pnm(width: usize, height: usize, channels: usize, pixels: &[u8]) -> Vec<u8> {
    let magic = if channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Parsed binary PGM/PPM: `(width, height, channels, pixels)`.
pub fn decode_pnm(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bad = |reason: &str| Error::Image {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut pos = 0usize;
    let mut token = || -> Option<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let channels = match token().as_deref() {
        Some("P5") => 1,
        Some("P6") => 3,
        _ => return Err(bad("not a binary PGM (P5) or PPM (P6)")),
    };
    let mut num = || -> Option<usize> { token()?.parse().ok() };
    let (w, h, maxval) = match (num(), num(), num()) {
        (Some(w), Some(h), Some(m)) => (w, h, m),
        _ => return Err(bad("malformed header")),
    };
    if maxval != 255 {
        return Err(bad(&format!("maxval {maxval}, only 8-bit (255) is supported")));
    }
    if w == 0 || h == 0 {
        return Err(bad("zero dimension"));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let need = w * h * channels;
    if bytes.len() < start + need {
        return Err(bad(&format!(
            "raster truncated: need {need} bytes, have {}",
            bytes.len().saturating_sub(start)
        )));
    }
    Ok((w, h, channels, bytes[start..start + need].to_vec()))
}

pub fn read_pnm(path: impl AsRef<Path>) -> Result<FrameSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let (w, h, c, px) = decode_pnm(&bytes, path)?;
    FrameSequence::new(1, h, w, c, px)
}

pub fn write_pnm(frames: &FrameSequence, t: usize, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_pnm(frames.width(), frames.height(), frames.channels(), frames.frame(t));
    fs::write(path, bytes)?;
    Ok(())
}

pub fn write_frames(dir: impl AsRef<Path>, frames: &FrameSequence, fps: f64) -> Result<FrameManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for t in 0..frames.frames() {
        write_pnm(frames, t, frame_path(dir, t, frames.channels()))?;
    }
    let manifest = FrameManifest {
        width: frames.width(),
        height: frames.height(),
        count: frames.frames(),
        channels: frames.channels(),
        fps,
    };
    fs::write(dir.join(MANIFEST_NAME), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_frames(dir: impl AsRef<Path>) -> Result<(FrameSequence, FrameManifest)> {
    let dir = dir.as_ref();
    let manifest: FrameManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_NAME))?)?;
    if manifest.count == 0 {
        return Err(Error::Manifest("count is zero".into()));
    }
    if manifest.channels != 1 && manifest.channels != 3 {
        return Err(Error::Manifest(format!(
            "channels must be 1 or 3, got {}",
            manifest.channels
        )));
    }
    let mut data = Vec::with_capacity(manifest.count * manifest.width * manifest.height * manifest.channels);
    for index in 0..manifest.count {
        let path = frame_path(dir, index, manifest.channels);
        if !path.exists() {
            return Err(Error::MissingFrame { index, path });
        }
        let bytes = fs::read(&path)?;
        let (w, h, c, px) = decode_pnm(&bytes, &path)?;
        if (w, h, c) != (manifest.width, manifest.height, manifest.channels) {
            return Err(Error::Manifest(format!(
                "frame {index} is {w}x{h}x{c}, manifest says {}x{}x{}",
                manifest.width, manifest.height, manifest.channels
            )));
        }
        data.extend_from_slice(&px);
    }
    let seq = FrameSequence::new(manifest.count, manifest.height, manifest.width, manifest.channels, data)?;
    Ok((seq, manifest))
}

/// Loads a frame directory, or a single PGM/PPM file as a one-frame sequence.
pub fn load_frames(path: impl AsRef<Path>) -> Result<FrameSequence> {
    let path = path.as_ref();
    if path.is_dir() {
        read_frames(path).map(|(f, _)| f)
    } else {
        read_pnm(path)
    }
}

pub fn write_report_json(report: &MetricsReport, sink: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(sink, report)?;
    Ok(())
}

pub fn read_report_json(source: impl Read) -> Result<MetricsReport> {
    Ok(serde_json::from_reader(source)?)
}

/// Formats a number exactly as the JSON writer does, so CSV and JSON
/// emissions of one run carry identical digits.
pub fn json_number(v: Option<f64>) -> String {
    match v {
        Some(x) => serde_json::to_string(&x).unwrap_or_default(),
        None => String::new(),
    }
}

/// `metric,value` rows for the aggregate metrics.
pub fn report_csv(report: &MetricsReport) -> String {
    let m = &report.metrics;
    let rows = [
        ("psnr", m.psnr),
        ("ssim", m.ssim),
        ("mpsnr", m.mpsnr),
        ("mssim", m.mssim),
        ("temporal_flicker", m.temporal_flicker),
        ("remove_proxy", m.remove_proxy),
    ];
    let mut out = String::from("metric,value\n");
    for (name, v) in rows {
        out.push_str(&format!("{name},{}\n", json_number(v)));
    }
    out
}

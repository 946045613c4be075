//! Frame sequences on disk, per-second temporal sampling, and synthetic clips.

mod ppm;
mod synth;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ppm::{decode_ppm, encode_ppm};
pub use synth::{synth_video, SynthKind, SynthSpec};

/// Frames sampled per second of video.
pub const SAMPLES_PER_SECOND: usize = 10;

pub const MANIFEST_FILE: &str = "manifest.json";

/// A single RGB8 image, row-major, three bytes per pixel.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("frame extent {width}x{height} must be positive")));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::Dimension(format!(
                "frame {width}x{height} needs {} bytes, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(Frame { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Frame::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Bilinear resample to `width`×`height`.
    pub fn resize(&self, width: usize, height: usize) -> Result<Frame> {
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        if width == 0 || height == 0 {
            return Err(Error::Dimension("resize target must be positive".into()));
        }
        let sx = self.width as f32 / width as f32;
        let sy = self.height as f32 / height as f32;
        let mut out = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f32);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f32;
            for x in 0..width {
                let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f32);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f32;
                let (a, b, c, d) = (self.pixel(y0, x0), self.pixel(y0, x1), self.pixel(y1, x0), self.pixel(y1, x1));
                for ch in 0..3 {
                    let top = a[ch] as f32 * (1.0 - wx) + b[ch] as f32 * wx;
                    let bottom = c[ch] as f32 * (1.0 - wx) + d[ch] as f32 * wx;
                    out.push((top * (1.0 - wy) + bottom * wy).round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        Frame::new(width, height, out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Flame,
    Nonflame,
    Unlabeled,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Flame => "flame",
            Label::Nonflame => "nonflame",
            Label::Unlabeled => "unlabeled",
        })
    }
}

/// An ordered clip of equally sized frames.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoSequence {
    frames: Vec<Frame>,
    fps: f64,
    pub label: Label,
    pub source_id: String,
}

impl VideoSequence {
    pub fn new(frames: Vec<Frame>, fps: f64, label: Label, source_id: impl Into<String>) -> Result<Self> {
        if !(fps >= SAMPLES_PER_SECOND as f64) || !fps.is_finite() {
            return Err(Error::Param(format!("fps {fps} must be at least {SAMPLES_PER_SECOND}")));
        }
        if let Some(first) = frames.first() {
            let (w, h) = (first.width, first.height);
            if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.width != w || f.height != h) {
                return Err(Error::Format(format!(
                    "frame {i} is {}x{}, expected {w}x{h}",
                    f.width, f.height
                )));
            }
        }
        Ok(VideoSequence { frames, fps, label, source_id: source_id.into() })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }

    /// (width, height) of the frames, if any.
    pub fn dimensions(&self) -> Option<(usize, usize)> {
        self.frames.first().map(|f| (f.width, f.height))
    }
}

/// On-disk manifest sitting next to the frame files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub fps: f64,
    pub label: Label,
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
}

pub fn frame_file_name(index: usize) -> String {
    format!("{:06}.ppm", index + 1)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::Manifest { path: path.clone(), reason: e.to_string() })?;
    serde_json::from_str(&text).map_err(|e| Error::Manifest { path, reason: e.to_string() })
}

/// Numbered frame files of `dir` in index order.
pub fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut numbered: Vec<(u64, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.file_name().and_then(|n| n.to_str()) == Some(MANIFEST_FILE) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        if let Ok(n) = stem.parse::<u64>() {
            numbered.push((n, path));
        }
    }
    numbered.sort();
    Ok(numbered.into_iter().map(|(_, p)| p).collect())
}

/// Decode one frame file and check it against the manifest's dimensions.
pub fn read_frame_file(path: &Path, manifest: &Manifest) -> Result<Frame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let frame = decode_ppm(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })?;
    if frame.width != manifest.width || frame.height != manifest.height {
        return Err(Error::Format(format!(
            "{} is {}x{}, manifest says {}x{}",
            path.display(),
            frame.width,
            frame.height,
            manifest.width,
            manifest.height
        )));
    }
    Ok(frame)
}

/// Check that the manifest's frame count matches the files present.
pub fn check_frame_count(dir: &Path, manifest: &Manifest, found: usize) -> Result<()> {
    if found != manifest.frame_count {
        return Err(Error::Manifest {
            path: dir.join(MANIFEST_FILE),
            reason: format!("frame_count {} but {found} frame files found", manifest.frame_count),
        });
    }
    Ok(())
}

pub fn source_id_of(dir: &Path) -> String {
    dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string()
}

/// Read a directory of P6 frames plus `manifest.json`.
pub fn read_frame_sequence(dir: &Path) -> Result<VideoSequence> {
    let manifest = read_manifest(dir)?;
    let files = frame_files(dir)?;
    check_frame_count(dir, &manifest, files.len())?;
    let frames = files.iter().map(|p| read_frame_file(p, &manifest)).collect::<Result<Vec<_>>>()?;
    VideoSequence::new(frames, manifest.fps, manifest.label, source_id_of(dir))
}

/// Write `seq` as zero-padded P6 files and a manifest. Creates `dir` if needed.
pub fn write_frame_sequence(seq: &VideoSequence, dir: &Path) -> Result<()> {
    let Some((width, height)) = seq.dimensions() else {
        return Err(Error::EmptyInput("cannot write an empty sequence".into()));
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, frame) in seq.frames.iter().enumerate() {
        let path = dir.join(frame_file_name(i));
        fs::write(&path, encode_ppm(frame)).map_err(|e| Error::io(&path, e))?;
    }
    let manifest = Manifest { fps: seq.fps, label: seq.label, width, height, frame_count: seq.len() };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

/// Source indices picked by [`temporal_sample`].
///
/// Every whole second `s` contributes `floor(s·fps) + round_half_up(k·fps/10)`
/// for `k = 0..10`. A trailing partial second contributes only the indices
/// that fall inside the clip.
pub fn temporal_sample_indices(frame_count: usize, fps: f64) -> Result<Vec<usize>> {
    if !(fps >= SAMPLES_PER_SECOND as f64) {
        return Err(Error::Param(format!("fps {fps} must be at least {SAMPLES_PER_SECOND}")));
    }
    if (frame_count as f64) < fps {
        return Err(Error::EmptyInput(format!(
            "clip of {frame_count} frames at {fps} fps is shorter than one second"
        )));
    }
    let seconds = (frame_count as f64 / fps).ceil() as usize;
    let mut out = Vec::with_capacity(seconds * SAMPLES_PER_SECOND);
    for s in 0..seconds {
        let base = (s as f64 * fps).floor() as usize;
        for k in 0..SAMPLES_PER_SECOND {
            let offset = (k as f64 * fps / SAMPLES_PER_SECOND as f64 + 0.5).floor() as usize;
            let idx = base + offset;
            if idx < frame_count {
                out.push(idx);
            }
        }
    }
    Ok(out)
}

/// Per-second sampling of ten equally spaced frames, in chronological order.
pub fn temporal_sample(seq: &VideoSequence) -> Result<Vec<&Frame>> {
    let idx = temporal_sample_indices(seq.len(), seq.fps)?;
    Ok(idx.into_iter().map(|i| &seq.frames[i]).collect())
}

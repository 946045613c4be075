//! Streaming detection: blocks are cut from a frame stream on one thread and
//! scored on another, with one event per completed block in stream order.

use std::path::Path;
use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan::{classify, Discriminator};
use crate::slicing::{build_cube, normalize_cube, Block};
use crate::video_io::{
    check_frame_count, frame_files, read_frame_file, read_manifest, source_id_of, temporal_sample_indices, Frame,
    Label, VideoSequence, SAMPLES_PER_SECOND,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub source_id: String,
    pub start_time_s: f64,
    pub score: f32,
    pub decision: Label,
    pub latency_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectSummary {
    pub blocks: usize,
    pub flame_blocks: usize,
    /// Stream time covered by the emitted blocks.
    pub stream_seconds: f64,
    pub wall_seconds: f64,
    pub max_latency_ms: f64,
}

impl DetectSummary {
    /// Decisions per second of stream time the detector could sustain.
    pub fn realtime_factor(&self) -> f64 {
        if self.wall_seconds > 0.0 {
            self.stream_seconds / self.wall_seconds
        } else {
            f64::INFINITY
        }
    }
}

/// Sampled frames of a frame directory, read one file at a time.
fn dir_stream(dir: &Path) -> Result<(String, impl Iterator<Item = Result<Frame>>)> {
    let manifest = read_manifest(dir)?;
    let files = frame_files(dir)?;
    check_frame_count(dir, &manifest, files.len())?;
    let indices = temporal_sample_indices(files.len(), manifest.fps)?;
    let iter = indices.into_iter().map(move |i| read_frame_file(&files[i], &manifest));
    Ok((source_id_of(dir), iter))
}

/// Score a sampled frame stream block by block.
pub fn detect_stream<I>(
    frames: I,
    source_id: &str,
    disc: &Discriminator,
    threshold: f32,
    mut on_event: impl FnMut(&DetectionEvent) -> Result<()>,
) -> Result<DetectSummary>
where
    I: Iterator<Item = Result<Frame>> + Send,
{
    let (t, s) = disc.spec().cube_dims().ok_or_else(|| {
        Error::Config(format!("model input {:?} is not a slice cube", disc.spec().input_shape))
    })?;
    let started = Instant::now();
    let mut summary = DetectSummary::default();
    let (tx, rx) = mpsc::sync_channel::<Result<(Block, Instant)>>(2);

    std::thread::scope(|scope| -> Result<()> {
        scope.spawn(move || {
            let mut pending = Vec::with_capacity(t);
            let mut emitted = 0usize;
            for frame in frames {
                let frame = match frame.and_then(|f| if f.width() == s && f.height() == s { Ok(f) } else { f.resize(s, s) }) {
                    Ok(f) => f,
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        return;
                    }
                };
                pending.push(frame);
                if pending.len() == t {
                    let start = (emitted * t) as f64 / SAMPLES_PER_SECOND as f64;
                    let block = Block::new(std::mem::take(&mut pending), start, source_id);
                    emitted += 1;
                    if tx.send(block.map(|b| (b, Instant::now()))).is_err() {
                        return;
                    }
                }
            }
        });
        for msg in rx {
            let (block, ready) = msg?;
            let cube = normalize_cube(&build_cube(&block))?;
            let c = classify(disc, &cube, threshold)?;
            let event = DetectionEvent {
                source_id: block.source_id.clone(),
                start_time_s: block.start_time_s,
                score: c.score,
                decision: c.label,
                latency_ms: ready.elapsed().as_secs_f64() * 1e3,
            };
            summary.blocks += 1;
            summary.flame_blocks += usize::from(c.label == Label::Flame);
            summary.max_latency_ms = summary.max_latency_ms.max(event.latency_ms);
            on_event(&event)?;
        }
        Ok(())
    })?;

    summary.stream_seconds = (summary.blocks * t) as f64 / SAMPLES_PER_SECOND as f64;
    summary.wall_seconds = started.elapsed().as_secs_f64();
    Ok(summary)
}

/// Detection over a frame directory (`manifest.json` plus numbered PPM files).
pub fn detect_dir(
    dir: &Path,
    disc: &Discriminator,
    threshold: f32,
    on_event: impl FnMut(&DetectionEvent) -> Result<()>,
) -> Result<DetectSummary> {
    let (source_id, frames) = dir_stream(dir)?;
    detect_stream(frames, &source_id, disc, threshold, on_event)
}

/// Detection over an in-memory clip.
pub fn detect_sequence(
    seq: &VideoSequence,
    disc: &Discriminator,
    threshold: f32,
    on_event: impl FnMut(&DetectionEvent) -> Result<()>,
) -> Result<DetectSummary> {
    let indices = temporal_sample_indices(seq.len(), seq.fps())?;
    let frames = indices.into_iter().map(|i| Ok(seq.frames()[i].clone()));
    detect_stream(frames, &seq.source_id, disc, threshold, on_event)
}

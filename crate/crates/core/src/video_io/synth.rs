//! Deterministic synthetic clips for desk-scale experiments.
//!
//! `FlickerBlob` is the positive class: an irregular flame-hued region whose
//! shape and per-pixel intensity follow band-limited random processes. The
//! other kinds are negatives that exercise common false-alarm sources.

use std::f32::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Frame, Label, VideoSequence, SAMPLES_PER_SECOND};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    FlickerBlob,
    StaticScene,
    MovingObject,
    PeriodicLight,
}

impl SynthKind {
    pub fn label(self) -> Label {
        match self {
            SynthKind::FlickerBlob => Label::Flame,
            _ => Label::Nonflame,
        }
    }
}

impl std::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flicker_blob" => Ok(SynthKind::FlickerBlob),
            "static_scene" => Ok(SynthKind::StaticScene),
            "moving_object" => Ok(SynthKind::MovingObject),
            "periodic_light" => Ok(SynthKind::PeriodicLight),
            other => Err(Error::Param(format!("unknown synth kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub duration_s: f64,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub flicker_band_hz: f64,
    pub seed: u64,
    /// Periodic lights render a static flame-hued region modulated by the
    /// same sinusoid, so single frames look like flame.
    #[serde(default)]
    pub mimic_flame: bool,
}

impl SynthSpec {
    pub fn new(kind: SynthKind, seed: u64) -> Self {
        SynthSpec {
            kind,
            duration_s: 10.0,
            fps: 30.0,
            width: 128,
            height: 128,
            flicker_band_hz: 10.0,
            seed,
            mimic_flame: false,
        }
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.fps).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Param("synthetic frame size must be positive".into()));
        }
        if !(self.fps >= SAMPLES_PER_SECOND as f64) {
            return Err(Error::Param(format!("fps {} below {SAMPLES_PER_SECOND}", self.fps)));
        }
        if !(self.flicker_band_hz > 0.0 && self.flicker_band_hz <= self.fps / 2.0) {
            return Err(Error::Param(format!(
                "flicker band {} Hz must be in (0, fps/2 = {}]",
                self.flicker_band_hz,
                self.fps / 2.0
            )));
        }
        if (self.frame_count() as f64) < self.fps {
            return Err(Error::Param("synthetic clip must last at least one second".into()));
        }
        Ok(())
    }

    /// `validate` plus the requirement that sampling yields at least one block of `block_len` frames.
    pub fn validate_for_block(&self, block_len: usize) -> Result<()> {
        self.validate()?;
        let sampled = super::temporal_sample_indices(self.frame_count(), self.fps)?.len();
        if sampled < block_len {
            return Err(Error::Param(format!(
                "{} s clip samples to {sampled} frames, fewer than one {block_len}-frame block",
                self.duration_s
            )));
        }
        Ok(())
    }
}

/// Sum of sinusoids with frequencies drawn below the cutoff, normalized to unit RMS.
struct BandLimited {
    comps: Vec<(f32, f32, f32)>,
}

impl BandLimited {
    fn new(rng: &mut ChaCha8Rng, cutoff_hz: f32, components: usize) -> Self {
        let lo = (0.3f32).min(cutoff_hz * 0.5);
        let mut comps: Vec<(f32, f32, f32)> = (0..components)
            .map(|_| (rng.gen_range(0.5..1.0), rng.gen_range(lo..cutoff_hz), rng.gen_range(0.0..TAU)))
            .collect();
        let power: f32 = comps.iter().map(|c| c.0 * c.0 / 2.0).sum();
        let norm = power.sqrt();
        comps.iter_mut().for_each(|c| c.0 /= norm);
        BandLimited { comps }
    }

    fn at(&self, t: f32) -> f32 {
        self.comps.iter().map(|&(a, f, p)| a * (TAU * f * t + p).sin()).sum()
    }
}

/// Smooth random field in roughly [-1, 1].
struct Field {
    waves: Vec<(f32, f32, f32)>,
}

impl Field {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let waves = (0..3)
            .map(|_| (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(0.0..TAU)))
            .collect();
        Field { waves }
    }

    /// `u`, `v` are normalized coordinates in [0, 1].
    fn at(&self, u: f32, v: f32) -> f32 {
        self.waves.iter().map(|&(a, b, p)| (TAU * (a * u + b * v) + p).sin()).sum::<f32>() / 3.0
    }
}

struct Background {
    pixels: Vec<f32>,
}

impl Background {
    fn new(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Self {
        let base: [f32; 3] = [rng.gen_range(50.0..150.0), rng.gen_range(50.0..150.0), rng.gen_range(50.0..150.0)];
        let tint: [f32; 3] = [rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0)];
        let texture = Field::new(rng);
        let mut pixels = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                let (u, v) = (x as f32 / w as f32, y as f32 / h as f32);
                let tx = 12.0 * texture.at(u, v);
                for c in 0..3 {
                    pixels.push(base[c] + tint[c] * v + tx);
                }
            }
        }
        Background { pixels }
    }
}

/// Irregular region: polar radius perturbed by low harmonics.
struct Blob {
    cx: f32,
    cy: f32,
    radius: f32,
    harmonics: Vec<(f32, f32)>,
    tex_a: Field,
    tex_b: Field,
}

impl Blob {
    fn new(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Self {
        let size = w.min(h) as f32;
        Blob {
            cx: rng.gen_range(0.35..0.65) * w as f32,
            cy: rng.gen_range(0.4..0.65) * h as f32,
            radius: rng.gen_range(0.18..0.28) * size,
            harmonics: (2..5).map(|_| (rng.gen_range(0.04..0.12), rng.gen_range(0.0..TAU))).collect(),
            tex_a: Field::new(rng),
            tex_b: Field::new(rng),
        }
    }

    /// Normalized distance (<1 inside) of pixel centre `(x, y)`, with the
    /// boundary scaled by `scale` and harmonic phases advanced by `twist`.
    fn distance(&self, x: usize, y: usize, scale: f32, twist: f32) -> f32 {
        let dx = x as f32 + 0.5 - self.cx;
        // flames are taller than wide
        let dy = (y as f32 + 0.5 - self.cy) * 0.75;
        let theta = dy.atan2(dx);
        let mut r = 1.0;
        for (k, &(a, p)) in self.harmonics.iter().enumerate() {
            r += a * ((k as f32 + 2.0) * theta + p + twist * (k as f32 + 1.0)).cos();
        }
        (dx * dx + dy * dy).sqrt() / (self.radius * scale * r)
    }
}

/// Flame palette with R ≥ 180 and R ≥ G ≥ B for intensity `v` in [0, 1].
pub(crate) fn flame_rgb(v: f32) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let r = 180.0 + 75.0 * v;
    let g = r * (0.3 + 0.6 * v);
    let b = g * (0.1 + 0.5 * v * v);
    [r.round() as u8, g.round() as u8, b.round() as u8]
}

const SENSOR_NOISE_STD: f32 = 2.0;

/// Render a clip. Pure function of `spec`.
pub fn synth_video(spec: &SynthSpec) -> Result<VideoSequence> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let n = spec.frame_count();
    let fps = spec.fps as f32;
    let band = spec.flicker_band_hz as f32;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let background = Background::new(&mut rng, w, h);
    let noise = Normal::new(0.0f32, SENSOR_NOISE_STD).expect("valid std");

    let render: Box<dyn Fn(f32, &mut [f32])> = match spec.kind {
        SynthKind::FlickerBlob => {
            let blob = Blob::new(&mut rng, w, h);
            let size = BandLimited::new(&mut rng, band, 6);
            let twist = BandLimited::new(&mut rng, band, 6);
            let shimmer_a = BandLimited::new(&mut rng, band, 6);
            let shimmer_b = BandLimited::new(&mut rng, band, 6);
            Box::new(move |t, buf| {
                let scale = (1.0 + 0.2 * size.at(t)).clamp(0.6, 1.4);
                let tw = 0.6 * twist.at(t);
                let (pa, pb) = (shimmer_a.at(t), shimmer_b.at(t));
                paint_blob(&blob, buf, w, h, scale, tw, |u, v, d| {
                    let core = 1.0 - 0.6 * d * d;
                    core * (0.7 + 0.15 * (blob.tex_a.at(u, v) * pa + blob.tex_b.at(u, v) * pb))
                });
            })
        }
        SynthKind::StaticScene => {
            let blob = Blob::new(&mut rng, w, h);
            let color: [f32; 3] = [rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0)];
            let scale = rng.gen_range(0.7..1.2);
            Box::new(move |_, buf| {
                for y in 0..h {
                    for x in 0..w {
                        if blob.distance(x, y, scale, 0.0) < 1.0 {
                            buf[(y * w + x) * 3..][..3].copy_from_slice(&color);
                        }
                    }
                }
            })
        }
        SynthKind::MovingObject => {
            let pw = (rng.gen_range(0.15..0.3) * w as f32).max(1.0) as usize;
            let ph = (rng.gen_range(0.15..0.3) * h as f32).max(1.0) as usize;
            let color: [f32; 3] = [rng.gen_range(150.0..255.0), rng.gen_range(60.0..255.0), rng.gen_range(0.0..255.0)];
            let crossing_s: f32 = rng.gen_range(2.0..6.0);
            let dir = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let vx = dir * w as f32 / crossing_s;
            let vy = rng.gen_range(-0.2..0.2) * h as f32 / crossing_s;
            let (x0, y0) = (rng.gen_range(0.0..w as f32), rng.gen_range(0.0..h as f32));
            Box::new(move |t, buf| {
                let px = (x0 + vx * t).rem_euclid(w as f32) as usize;
                let py = (y0 + vy * t).rem_euclid(h as f32) as usize;
                for dy in 0..ph {
                    for dx in 0..pw {
                        let (x, y) = ((px + dx) % w, (py + dy) % h);
                        buf[(y * w + x) * 3..][..3].copy_from_slice(&color);
                    }
                }
            })
        }
        SynthKind::PeriodicLight => {
            let hi = (band * 0.5).min(2.0);
            let freq = rng.gen_range((hi * 0.25)..hi);
            let phase = rng.gen_range(0.0..TAU);
            let depth = rng.gen_range(0.2..0.35);
            let blob = Blob::new(&mut rng, w, h);
            let scale = rng.gen_range(0.8..1.2);
            let mimic = spec.mimic_flame;
            Box::new(move |t, buf| {
                let s = (TAU * freq * t + phase).sin();
                let gain = 1.0 + depth * s;
                buf.iter_mut().for_each(|p| *p *= gain);
                if mimic {
                    let c = (TAU * freq * t + phase).cos();
                    paint_blob(&blob, buf, w, h, scale, 0.0, |u, v, d| {
                        let core = 1.0 - 0.6 * d * d;
                        core * (0.7 + 0.15 * (blob.tex_a.at(u, v) * s + blob.tex_b.at(u, v) * c) * 1.4)
                    });
                }
            })
        }
    };

    let mut frames = Vec::with_capacity(n);
    let mut buf = vec![0f32; w * h * 3];
    for i in 0..n {
        let t = i as f32 / fps;
        buf.copy_from_slice(&background.pixels);
        render(t, &mut buf);
        buf.iter_mut().for_each(|p| *p += noise.sample(&mut rng));
        let pixels = buf.iter().map(|&p| p.round().clamp(0.0, 255.0) as u8).collect();
        frames.push(Frame::new(w, h, pixels)?);
    }
    let id = format!("{:?}-{}", spec.kind, spec.seed).to_lowercase();
    VideoSequence::new(frames, spec.fps, spec.kind.label(), id)
}

/// Overwrite blob pixels with flame colours; `intensity(u, v, d)` maps
/// normalized position and blob distance to a palette index.
fn paint_blob(
    blob: &Blob,
    buf: &mut [f32],
    w: usize,
    h: usize,
    scale: f32,
    twist: f32,
    intensity: impl Fn(f32, f32, f32) -> f32,
) {
    for y in 0..h {
        for x in 0..w {
            let d = blob.distance(x, y, scale, twist);
            if d < 1.0 {
                let rgb = flame_rgb(intensity(x as f32 / w as f32, y as f32 / h as f32, d));
                buf[(y * w + x) * 3..][..3].copy_from_slice(&rgb.map(f32::from));
            }
        }
    }
}

//! Blocks of sampled frames and their temporal-slice cubes.
//!
//! A cube has shape `T × S × 3S` with axis order `(t, y, 3x + c)`: for every
//! image column `x` the `S × T` temporal slice of that column is stored in the
//! channel group `3x..3x+3`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::parallel;
use crate::video_io::{Frame, SAMPLES_PER_SECOND};

pub const FULL_BLOCK_LEN: usize = 64;
pub const FULL_FRAME_SIZE: usize = 128;

const CUBE_MAGIC: &[u8; 4] = b"SCUB";

/// `T` consecutive frames of the sampled stream, each `S × S`.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    frames: Vec<Frame>,
    pub start_time_s: f64,
    pub source_id: String,
}

impl Block {
    pub fn new(frames: Vec<Frame>, start_time_s: f64, source_id: impl Into<String>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::EmptyInput("a block needs at least one frame".into()));
        };
        let s = first.width();
        if let Some(f) = frames.iter().find(|f| f.width() != s || f.height() != s) {
            return Err(Error::Dimension(format!("block frames must be {s}x{s}, got {}x{}", f.width(), f.height())));
        }
        Ok(Block { frames, start_time_s, source_id: source_id.into() })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    /// Number of frames `T`.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frame edge length `S`.
    pub fn size(&self) -> usize {
        self.frames[0].width()
    }

    pub fn middle_frame(&self) -> &Frame {
        &self.frames[self.frames.len() / 2]
    }
}

/// Split a sampled stream into consecutive non-overlapping blocks of `t`
/// frames. A trailing remainder shorter than `t` is dropped.
pub fn assemble_blocks<'a, I>(stream: I, t: usize, s: usize, source_id: &str) -> Result<Vec<Block>>
where
    I: IntoIterator<Item = &'a Frame>,
{
    if t == 0 || s == 0 {
        return Err(Error::Param("block length and frame size must be positive".into()));
    }
    let period = 1.0 / SAMPLES_PER_SECOND as f64;
    let mut blocks = Vec::new();
    let mut pending = Vec::with_capacity(t);
    for frame in stream {
        if frame.width() != s || frame.height() != s {
            return Err(Error::Dimension(format!(
                "stream frame is {}x{}, blocks need {s}x{s}",
                frame.width(),
                frame.height()
            )));
        }
        pending.push(frame.clone());
        if pending.len() == t {
            let start = (blocks.len() * t) as f64 * period;
            blocks.push(Block { frames: std::mem::take(&mut pending), start_time_s: start, source_id: source_id.into() });
        }
    }
    Ok(blocks)
}

#[derive(Clone, Debug, PartialEq)]
pub enum CubeData {
    Raw(Vec<u8>),
    Normalized(Vec<f32>),
}

/// Stack of all temporal slices of a block.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceCube {
    t: usize,
    s: usize,
    data: CubeData,
}

impl SliceCube {
    pub fn from_raw(t: usize, s: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != t * s * s * 3 {
            return Err(Error::Dimension(format!("cube {t}x{s}x{} needs {} bytes, got {}", 3 * s, t * s * s * 3, data.len())));
        }
        Ok(SliceCube { t, s, data: CubeData::Raw(data) })
    }

    pub fn block_len(&self) -> usize {
        self.t
    }

    pub fn frame_size(&self) -> usize {
        self.s
    }

    /// `[T, S, 3S]`
    pub fn shape(&self) -> [usize; 3] {
        [self.t, self.s, 3 * self.s]
    }

    pub fn data(&self) -> &CubeData {
        &self.data
    }

    pub fn is_normalized(&self) -> bool {
        matches!(self.data, CubeData::Normalized(_))
    }

    #[inline]
    pub fn index(&self, t: usize, y: usize, x: usize, c: usize) -> usize {
        (t * self.s + y) * 3 * self.s + 3 * x + c
    }

    pub fn raw(&self) -> Result<&[u8]> {
        match &self.data {
            CubeData::Raw(d) => Ok(d),
            CubeData::Normalized(_) => Err(Error::State("cube is normalized, raw bytes unavailable".into())),
        }
    }

    /// Network input tensor of shape `[T, S, 3S]`.
    pub fn to_tensor(&self) -> Result<Tensor> {
        match &self.data {
            CubeData::Normalized(d) => Tensor::from_vec(vec![self.t, self.s, 3 * self.s], d.clone()),
            CubeData::Raw(_) => Err(Error::State("cube must be normalized before inference".into())),
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let raw = self.raw()?;
        let io = |e| Error::io("<cube stream>", e);
        w.write_all(CUBE_MAGIC).map_err(io)?;
        w.write_all(&(self.t as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.s as u32).to_le_bytes()).map_err(io)?;
        w.write_all(raw).map_err(io)
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut header = [0u8; 12];
        r.read_exact(&mut header).map_err(|_| Error::Format("truncated cube header".into()))?;
        if &header[..4] != CUBE_MAGIC {
            return Err(Error::Format("bad cube magic".into()));
        }
        let t = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let s = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let mut data = vec![0u8; t * s * s * 3];
        r.read_exact(&mut data).map_err(|_| Error::Format("truncated cube payload".into()))?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| Error::io("<cube stream>", e))? != 0 {
            return Err(Error::Format("trailing bytes after cube payload".into()));
        }
        SliceCube::from_raw(t, s, data)
    }
}

/// Stack the `S` temporal slices of `block` into a raw cube.
///
/// Because the channel index is `3x + c`, the row `(t, y)` of the cube is
/// exactly row `y` of frame `t`, so this is a straight copy.
pub fn build_cube(block: &Block) -> SliceCube {
    let (t, s) = (block.len(), block.size());
    let row = 3 * s * s;
    let mut data = vec![0u8; t * row];
    parallel::for_each_chunk_mut(&mut data, row, |i, out| out.copy_from_slice(block.frames[i].pixels()));
    SliceCube { t, s, data: CubeData::Raw(data) }
}

#[inline]
pub fn normalize_value(v: u8) -> f32 {
    v as f32 / 127.5 - 1.0
}

#[inline]
pub fn denormalize_value(v: f32) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// Map raw bytes to `v / 127.5 - 1`.
pub fn normalize_cube(cube: &SliceCube) -> Result<SliceCube> {
    let raw = match &cube.data {
        CubeData::Raw(d) => d,
        CubeData::Normalized(_) => return Err(Error::State("cube is already normalized".into())),
    };
    let mut out = vec![0f32; raw.len()];
    const CHUNK: usize = 1 << 16;
    parallel::for_each_chunk_mut(&mut out, CHUNK, |i, dst| {
        let src = &raw[i * CHUNK..i * CHUNK + dst.len()];
        dst.iter_mut().zip(src).for_each(|(d, &s)| *d = normalize_value(s));
    });
    Ok(SliceCube { t: cube.t, s: cube.s, data: CubeData::Normalized(out) })
}

pub fn denormalize_cube(cube: &SliceCube) -> Result<SliceCube> {
    match &cube.data {
        CubeData::Normalized(d) => Ok(SliceCube { t: cube.t, s: cube.s, data: CubeData::Raw(d.iter().map(|&v| denormalize_value(v)).collect()) }),
        CubeData::Raw(_) => Err(Error::State("cube is not normalized".into())),
    }
}

/// The `S × T` image of column `x` across the block, stored `(y, t, c)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SliceImage {
    pub column: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl SliceImage {
    pub fn pixel(&self, y: usize, t: usize) -> [u8; 3] {
        let i = (y * self.cols + t) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn to_frame(&self) -> Frame {
        Frame::new(self.cols, self.rows, self.pixels.clone()).expect("slice dimensions are consistent")
    }
}

pub fn extract_slice(block: &Block, x: usize) -> Result<SliceImage> {
    let (t, s) = (block.len(), block.size());
    if x >= s {
        return Err(Error::Index { index: x, len: s });
    }
    let mut pixels = Vec::with_capacity(s * t * 3);
    for y in 0..s {
        for frame in &block.frames {
            pixels.extend_from_slice(&frame.pixel(y, x));
        }
    }
    Ok(SliceImage { column: x, rows: s, cols: t, pixels })
}

/// Slice a whole clip: sample, block, build and normalize cubes.
pub fn clip_blocks(seq: &crate::video_io::VideoSequence, t: usize, s: usize) -> Result<Vec<Block>> {
    let sampled = crate::video_io::temporal_sample(seq)?;
    let resized: Vec<Frame>;
    let stream: Vec<&Frame> = match seq.dimensions() {
        Some((w, h)) if w != s || h != s => {
            resized = sampled.iter().map(|f| f.resize(s, s)).collect::<Result<_>>()?;
            resized.iter().collect()
        }
        _ => sampled,
    };
    assemble_blocks(stream, t, s, &seq.source_id)
}

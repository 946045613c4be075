use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Rng, Tensor};
use crate::parallel;
use crate::slicing::{build_cube, clip_blocks, normalize_cube, normalize_value, Block};
use crate::video_io::{read_frame_sequence, synth_video, Label, SynthKind, SynthSpec, MANIFEST_FILE};

/// What the network sees of a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// Normalized `T × S × 3S` slice cube.
    Slices,
    /// The block's middle frame as a normalized `S × S × 3` image.
    Frames,
}

/// One labelled clip and the blocks it was cut into.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipEntry {
    pub source_id: String,
    pub label: Label,
    pub blocks: Vec<Block>,
}

/// A network input together with its clip label and the number of video
/// frames its decision stands for.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Tensor,
    pub label: Label,
    pub frames: usize,
    pub source_id: String,
}

pub fn block_input(block: &Block, repr: Representation) -> Result<Tensor> {
    match repr {
        Representation::Slices => normalize_cube(&build_cube(block))?.to_tensor(),
        Representation::Frames => {
            let f = block.middle_frame();
            let data = f.pixels().iter().map(|&v| normalize_value(v)).collect();
            Tensor::from_vec(vec![f.height(), f.width(), 3], data)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetManifest {
    pub clips: Vec<ClipEntry>,
}

impl DatasetManifest {
    pub fn new(clips: Vec<ClipEntry>) -> Result<Self> {
        if let Some(c) = clips.iter().find(|c| c.label == Label::Unlabeled) {
            return Err(Error::Config(format!("clip {} has no flame/nonflame label", c.source_id)));
        }
        Ok(DatasetManifest { clips })
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn clip_count(&self, label: Label) -> usize {
        self.clips.iter().filter(|c| c.label == label).count()
    }

    pub fn block_count(&self, label: Label) -> usize {
        self.clips.iter().filter(|c| c.label == label).map(|c| c.blocks.len()).sum()
    }

    /// `(T, S)` shared by every block, if the manifest has any.
    pub fn block_dims(&self) -> Result<Option<(usize, usize)>> {
        let mut dims = None;
        for b in self.clips.iter().flat_map(|c| &c.blocks) {
            let d = (b.len(), b.size());
            match dims {
                None => dims = Some(d),
                Some(prev) if prev != d => {
                    return Err(Error::Dimension(format!("blocks of {prev:?} and {d:?} in one dataset")))
                }
                _ => {}
            }
        }
        Ok(dims)
    }

    /// Every block turned into a network input, in clip order.
    pub fn samples(&self, repr: Representation) -> Result<Vec<Sample>> {
        let refs: Vec<(&ClipEntry, &Block)> = self.clips.iter().flat_map(|c| c.blocks.iter().map(move |b| (c, b))).collect();
        parallel::map_indexed(refs.len(), |i| {
            let (clip, block) = refs[i];
            Ok(Sample {
                input: block_input(block, repr)?,
                label: clip.label,
                frames: block.len(),
                source_id: clip.source_id.clone(),
            })
        })
        .into_iter()
        .collect()
    }

    /// Network inputs of one label.
    pub fn inputs(&self, label: Label, repr: Representation) -> Result<Vec<Tensor>> {
        let subset = DatasetManifest { clips: self.clips.iter().filter(|c| c.label == label).cloned().collect() };
        Ok(subset.samples(repr)?.into_iter().map(|s| s.input).collect())
    }

    /// Load every sub-directory of `root` holding a frame-sequence manifest.
    /// Directories are visited in name order.
    pub fn from_dir(root: &Path, t: usize, s: usize) -> Result<Self> {
        let mut dirs: Vec<_> = std::fs::read_dir(root)
            .map_err(|e| Error::io(root, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(MANIFEST_FILE).is_file())
            .collect();
        dirs.sort();
        if dirs.is_empty() {
            return Err(Error::EmptyInput(format!("no clip directories under {}", root.display())));
        }
        let clips = dirs
            .iter()
            .map(|d| {
                let seq = read_frame_sequence(d)?;
                let blocks = clip_blocks(&seq, t, s)?;
                Ok(ClipEntry { source_id: seq.source_id.clone(), label: seq.label, blocks })
            })
            .collect::<Result<Vec<_>>>()?;
        DatasetManifest::new(clips)
    }
}

/// Train:validation:test ratios and the shuffling seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(ratios: [f64; 3], seed: u64) -> Result<Self> {
        if !ratios.iter().all(|r| r.is_finite() && *r > 0.0) {
            return Err(Error::Config(format!("split ratios {ratios:?} must be positive")));
        }
        let total: f64 = ratios.iter().sum();
        Ok(SplitSpec { ratios: ratios.map(|r| r / total), seed })
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::new([3.0, 1.0, 1.0], 0).expect("default ratios are valid")
    }
}

/// Largest-remainder apportionment of `n` items, then at least one item per
/// partition.
pub fn partition_sizes(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let quotas = ratios.map(|r| r * n as f64);
    let mut sizes = quotas.map(|q| q.floor() as usize);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    let left = n - sizes.iter().sum::<usize>();
    for &i in order.iter().take(left) {
        sizes[i] += 1;
    }
    for i in 0..3 {
        if sizes[i] == 0 {
            let donor = (0..3).max_by_key(|&j| (sizes[j], std::cmp::Reverse(j))).unwrap();
            sizes[donor] -= 1;
            sizes[i] += 1;
        }
    }
    sizes
}

/// Split by clip, separately per label, into train / validation / test.
pub fn split_dataset(manifest: &DatasetManifest, spec: &SplitSpec) -> Result<[DatasetManifest; 3]> {
    if manifest.is_empty() {
        return Err(Error::EmptyInput("nothing to split".into()));
    }
    let mut parts: [Vec<ClipEntry>; 3] = Default::default();
    for (k, label) in [Label::Flame, Label::Nonflame].into_iter().enumerate() {
        let mut clips: Vec<&ClipEntry> = manifest.clips.iter().filter(|c| c.label == label).collect();
        if clips.is_empty() {
            continue;
        }
        if clips.len() < 3 {
            return Err(Error::Split(format!("{} {label} clips cannot fill three partitions", clips.len())));
        }
        Rng::seed(spec.seed.wrapping_add(k as u64)).shuffle(&mut clips);
        let sizes = partition_sizes(clips.len(), &spec.ratios);
        let mut rest = clips.as_slice();
        for (part, n) in parts.iter_mut().zip(sizes) {
            let (head, tail) = rest.split_at(n);
            part.extend(head.iter().map(|&c| c.clone()));
            rest = tail;
        }
    }
    Ok(parts.map(|clips| DatasetManifest { clips }))
}

/// Recipe for a synthetic labelled dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub flame_clips: usize,
    pub nonflame_clips: usize,
    /// Non-flame kinds, assigned round-robin.
    pub nonflame_kinds: Vec<SynthKind>,
    pub mimic_flame: bool,
    pub duration_s: f64,
    pub fps: f64,
    pub frame_size: usize,
    pub block_len: usize,
    pub seed: u64,
}

impl SyntheticDataset {
    /// 120 flicker-blob clips and 80 non-flame clips of static, moving and
    /// periodic kinds, cut into 16-frame blocks of 32×32 px.
    pub fn toy(seed: u64) -> Self {
        SyntheticDataset {
            flame_clips: 120,
            nonflame_clips: 80,
            nonflame_kinds: vec![SynthKind::StaticScene, SynthKind::MovingObject, SynthKind::PeriodicLight],
            mimic_flame: false,
            duration_s: 4.8,
            fps: 30.0,
            frame_size: 32,
            block_len: 16,
            seed,
        }
    }

    /// Flame clips against periodic lights that share the flame palette, so
    /// single frames are ambiguous and only the temporal pattern differs.
    pub fn chromatic(seed: u64) -> Self {
        SyntheticDataset {
            flame_clips: 60,
            nonflame_clips: 60,
            nonflame_kinds: vec![SynthKind::PeriodicLight],
            mimic_flame: true,
            ..SyntheticDataset::toy(seed)
        }
    }

    pub fn clip_spec(&self, index: usize) -> SynthSpec {
        let (kind, salt) = if index < self.flame_clips {
            (SynthKind::FlickerBlob, index)
        } else {
            let j = index - self.flame_clips;
            (self.nonflame_kinds[j % self.nonflame_kinds.len()], index)
        };
        let seed = self.seed.wrapping_mul(1_000_003).wrapping_add(salt as u64);
        SynthSpec {
            duration_s: self.duration_s,
            fps: self.fps,
            width: self.frame_size,
            height: self.frame_size,
            mimic_flame: self.mimic_flame,
            ..SynthSpec::new(kind, seed)
        }
    }

    pub fn build(&self) -> Result<DatasetManifest> {
        if self.nonflame_clips > 0 && self.nonflame_kinds.is_empty() {
            return Err(Error::Config("non-flame clips requested without any kind".into()));
        }
        let n = self.flame_clips + self.nonflame_clips;
        let clips = parallel::map_indexed(n, |i| {
            let spec = self.clip_spec(i);
            spec.validate_for_block(self.block_len)?;
            let seq = synth_video(&spec)?;
            let blocks = clip_blocks(&seq, self.block_len, self.frame_size)?;
            Ok(ClipEntry { source_id: seq.source_id.clone(), label: seq.label, blocks })
        });
        DatasetManifest::new(clips.into_iter().collect::<Result<_>>()?)
    }
}

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::AdamConfig;

/// Architecture of both networks. The generator is one dense layer followed
/// by `gen_channels.len()` stride-2 transposed convolutions; the
/// discriminator is `disc_channels.len()` stride-2 convolutions followed by a
/// dense probability head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    /// Network input `[H, W, C]`; `[T, S, 3S]` for slice cubes.
    pub input_shape: [usize; 3],
    pub z_dim: usize,
    /// Channels of the dense layer's reshaped output and of every transposed
    /// convolution except the last, which emits `input_shape[2]` channels.
    pub gen_channels: Vec<usize>,
    pub gen_kernel: usize,
    pub disc_channels: Vec<usize>,
    pub disc_kernel: usize,
    pub leaky_slope: f64,
}

impl NetSpec {
    /// Full-size cubes: 64 frames of 128×128 px, input 64×128×384.
    pub fn full_scale() -> Self {
        NetSpec {
            input_shape: [64, 128, 384],
            z_dim: 100,
            gen_channels: vec![512, 512, 256, 128, 64],
            gen_kernel: 4,
            disc_channels: vec![64, 128, 256, 512, 512],
            disc_kernel: 5,
            leaky_slope: 0.2,
        }
    }

    /// Desk-scale cubes: 16 frames of 32×32 px, input 16×32×96.
    pub fn toy() -> Self {
        NetSpec {
            input_shape: [16, 32, 96],
            z_dim: 32,
            gen_channels: vec![32, 32, 16, 8],
            gen_kernel: 4,
            disc_channels: vec![8, 16, 32, 32],
            disc_kernel: 4,
            leaky_slope: 0.2,
        }
    }

    /// Single `size × size` RGB frames with the toy channel plan.
    pub fn toy_frames(size: usize) -> Self {
        NetSpec { input_shape: [size, size, 3], ..NetSpec::toy() }
    }

    /// Cube input for blocks of `t` frames of `s × s` px, keeping the rest of `self`.
    pub fn with_cube(&self, t: usize, s: usize) -> Self {
        NetSpec { input_shape: [t, s, 3 * s], ..self.clone() }
    }

    /// Spatial extent of the generator's dense output.
    pub fn gen_base(&self) -> Result<(usize, usize)> {
        let n = self.gen_channels.len();
        if n == 0 {
            return Err(Error::Spec("generator needs at least one transposed convolution".into()));
        }
        if self.gen_kernel < 2 || self.gen_kernel % 2 != 0 {
            return Err(Error::Spec(format!("generator kernel {} must be even to double extents", self.gen_kernel)));
        }
        let f = 1usize << n;
        let [h, w, _] = self.input_shape;
        if h % f != 0 || w % f != 0 {
            return Err(Error::Spec(format!("{n} doubling layers cannot reach {h}x{w} from an integer base")));
        }
        Ok((h / f, w / f))
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_shape.iter().any(|&d| d == 0) || self.z_dim == 0 {
            return Err(Error::Spec("input shape and z_dim must be positive".into()));
        }
        if self.gen_channels.iter().chain(&self.disc_channels).any(|&c| c == 0) {
            return Err(Error::Spec("channel counts must be positive".into()));
        }
        if self.disc_channels.is_empty() || self.disc_kernel == 0 {
            return Err(Error::Spec("discriminator needs at least one convolution".into()));
        }
        self.gen_base()?;
        Ok(())
    }

    /// `[T, S]` when the input is a slice cube.
    pub fn cube_dims(&self) -> Option<(usize, usize)> {
        let [t, s, c] = self.input_shape;
        (c == 3 * s).then_some((t, s))
    }
}

/// Regularizer and normalization settings shared by both networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub gen_dropout: f64,
    pub disc_dropout: f64,
    /// Std of Gaussian noise added to discriminator inputs in [−1, 1] units.
    pub input_noise_std: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization { gen_dropout: 0.3, disc_dropout: 0.4, input_noise_std: 0.05, bn_momentum: 0.99, bn_eps: 1e-5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Flame cubes per stage-1 step (`M`).
    pub batch_size: usize,
    /// Non-flame cubes per stage-2 step (`L`), paired with as many flame cubes.
    pub refine_batch_size: usize,
    pub stage1_steps: usize,
    pub stage2_steps: usize,
    pub adam: AdamConfig,
    pub refine_adam: AdamConfig,
    pub regularization: Regularization,
    /// Disable dropout and input noise during training.
    pub deterministic: bool,
    /// Randomly mirror training inputs left-right and, for slice cubes,
    /// reverse them in time.
    pub augment: bool,
    /// Validation interval (in stage-2 steps) for picking the refined
    /// discriminator; 0 keeps the final parameters.
    pub validate_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            refine_batch_size: 8,
            stage1_steps: 300,
            stage2_steps: 600,
            adam: AdamConfig::default(),
            refine_adam: AdamConfig::default(),
            regularization: Regularization::default(),
            deterministic: false,
            augment: true,
            validate_every: 25,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch size M = {} must be at least 2", self.batch_size)));
        }
        if self.refine_batch_size < 1 {
            return Err(Error::Config("refinement batch size L must be at least 1".into()));
        }
        let r = &self.regularization;
        if !(0.0..1.0).contains(&r.gen_dropout) || !(0.0..1.0).contains(&r.disc_dropout) {
            return Err(Error::Config("dropout rates must be in [0, 1)".into()));
        }
        if !(r.input_noise_std >= 0.0) {
            return Err(Error::Config("input noise std must be non-negative".into()));
        }
        Ok(())
    }
}

/// Short stable hash of any serializable configuration.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("configuration serializes");
    Sha256::digest(json).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

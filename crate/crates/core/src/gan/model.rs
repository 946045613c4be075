//! Model files: a checkpoint holding `gen.*` and `disc.*` tensors plus a JSON
//! sidecar (`<checkpoint>.json`) with the spec and training configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{NetSpec, TrainConfig};
use super::networks::{build_discriminator, build_generator, Discriminator, Generator};
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{AdamState, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingStage {
    /// Adversarial training only.
    Stage1,
    /// Stage 1 followed by discriminator refinement.
    Refined,
    /// Discriminator trained directly on labelled cubes.
    Supervised,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub spec: NetSpec,
    pub config: TrainConfig,
    pub stage: TrainingStage,
    /// Digest of the checkpoint bytes written alongside.
    pub checkpoint_sha256: String,
}

#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub config: TrainConfig,
    pub stage: TrainingStage,
    pub disc: Discriminator,
    pub gen: Option<Generator>,
    /// Optimizer state for resuming, `(generator, discriminator)`.
    pub optimizers: Option<(AdamState, AdamState)>,
}

impl ModelBundle {
    pub fn spec(&self) -> &NetSpec {
        self.disc.spec()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        if let Some(g) = &self.gen {
            c.extend_scoped("gen", &g.to_checkpoint());
        }
        c.extend_scoped("disc", &self.disc.to_checkpoint());
        if let Some((g, d)) = &self.optimizers {
            c.extend_scoped("gen_adam", &g.to_checkpoint());
            c.extend_scoped("disc_adam", &d.to_checkpoint());
        }
        c
    }
}

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn save_model(path: &Path, model: &ModelBundle) -> Result<()> {
    let ckpt = model.checkpoint();
    let sidecar = ModelSidecar {
        spec: model.spec().clone(),
        config: model.config.clone(),
        stage: model.stage,
        checkpoint_sha256: ckpt.digest(),
    };
    ckpt.save(path)?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&side, json).map_err(|e| Error::io(side, e))
}

pub fn read_sidecar(path: &Path) -> Result<ModelSidecar> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Manifest { path: side, reason: e.to_string() })
}

/// Rebuild both networks from the sidecar and load the stored tensors. The
/// generator is present only if the checkpoint has `gen.*` entries.
pub fn load_model(path: &Path) -> Result<ModelBundle> {
    let sidecar = read_sidecar(path)?;
    let ckpt = Checkpoint::load(path)?;
    let reg = &sidecar.config.regularization;
    let mut rng = Rng::seed(0);
    let mut disc: Discriminator = build_discriminator(&sidecar.spec, reg, &mut rng)?;
    disc.load_checkpoint(&ckpt.scoped("disc"))?;
    let gen_part = ckpt.scoped("gen");
    let gen = if gen_part.is_empty() {
        None
    } else {
        let mut g: Generator = build_generator(&sidecar.spec, reg, &mut rng)?;
        g.load_checkpoint(&gen_part)?;
        Some(g)
    };
    let optimizers = match &gen {
        Some(g) if !ckpt.scoped("gen_adam").is_empty() => {
            let mut go = AdamState::new(sidecar.config.adam, &g.network().params());
            go.load_checkpoint(&ckpt.scoped("gen_adam"))?;
            let mut dopt = AdamState::new(sidecar.config.adam, &disc.network().params());
            dopt.load_checkpoint(&ckpt.scoped("disc_adam"))?;
            Some((go, dopt))
        }
        _ => None,
    };
    Ok(ModelBundle { config: sidecar.config, stage: sidecar.stage, disc, gen, optimizers })
}

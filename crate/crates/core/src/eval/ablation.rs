use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dataset::{DatasetManifest, Representation, Sample};
use super::metrics::{evaluate, Accounting, MetricsRow};
use crate::error::{Error, Result};
use crate::gan::{
    config_hash, train_stage1, train_stage2, train_supervised, Discriminator, ModelBundle, NetSpec, TrainConfig,
    TrainingStage,
};
use crate::nn::Tensor;
use crate::video_io::Label;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    DcganSlices,
    CnnSlices,
    DcganFrames,
    DcganNorefine,
}

impl AblationMode {
    pub const ALL: [AblationMode; 4] =
        [AblationMode::DcganSlices, AblationMode::CnnSlices, AblationMode::DcganFrames, AblationMode::DcganNorefine];

    pub fn name(self) -> &'static str {
        match self {
            AblationMode::DcganSlices => "dcgan_slices",
            AblationMode::CnnSlices => "cnn_slices",
            AblationMode::DcganFrames => "dcgan_frames",
            AblationMode::DcganNorefine => "dcgan_norefine",
        }
    }

    pub fn representation(self) -> Representation {
        match self {
            AblationMode::DcganFrames => Representation::Frames,
            _ => Representation::Slices,
        }
    }

    /// Network spec for this mode given the slice-cube spec.
    pub fn spec(self, slices: &NetSpec) -> Result<NetSpec> {
        let (_, s) = slices
            .cube_dims()
            .ok_or_else(|| Error::Config(format!("input {:?} is not a slice cube", slices.input_shape)))?;
        Ok(match self.representation() {
            Representation::Slices => slices.clone(),
            Representation::Frames => NetSpec { input_shape: [s, s, 3], ..slices.clone() },
        })
    }
}

impl std::fmt::Display for AblationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation mode {s:?}")))
    }
}

/// Train / validation / test partitions.
#[derive(Clone, Debug, PartialEq)]
pub struct Datasets {
    pub train: DatasetManifest,
    pub val: DatasetManifest,
    pub test: DatasetManifest,
}

impl Datasets {
    fn check_dims(&self, spec: &NetSpec) -> Result<()> {
        let want = spec
            .cube_dims()
            .ok_or_else(|| Error::Config(format!("input {:?} is not a slice cube", spec.input_shape)))?;
        for part in [&self.train, &self.val, &self.test] {
            if let Some(dims) = part.block_dims()? {
                if dims != want {
                    return Err(Error::Config(format!("dataset blocks are {dims:?}, network expects {want:?}")));
                }
            }
        }
        Ok(())
    }
}

/// Network inputs of one representation, built once and shared by modes.
struct Prepared {
    flame: Vec<Tensor>,
    nonflame: Vec<Tensor>,
    val_flame: Vec<Tensor>,
    val_nonflame: Vec<Tensor>,
    test: Vec<Sample>,
}

impl Prepared {
    fn new(data: &Datasets, repr: Representation) -> Result<Self> {
        Ok(Prepared {
            flame: data.train.inputs(Label::Flame, repr)?,
            nonflame: data.train.inputs(Label::Nonflame, repr)?,
            val_flame: data.val.inputs(Label::Flame, repr)?,
            val_nonflame: data.val.inputs(Label::Nonflame, repr)?,
            test: data.test.samples(repr)?,
        })
    }

    fn validation(&self) -> Option<(&[Tensor], &[Tensor])> {
        Some((&self.val_flame, &self.val_nonflame))
    }
}

fn bundle(config: &TrainConfig, stage: TrainingStage, disc: Discriminator, gen: Option<crate::gan::Generator>) -> ModelBundle {
    ModelBundle { config: config.clone(), stage, disc, gen, optimizers: None }
}

/// Train the model an ablation mode calls for. `spec` describes slice cubes;
/// frame mode derives its own input shape from it.
pub fn train_for_mode(mode: AblationMode, data: &Datasets, spec: &NetSpec, config: &TrainConfig) -> Result<ModelBundle> {
    data.check_dims(spec)?;
    let prepared = Prepared::new(data, mode.representation())?;
    train_prepared(mode, &prepared, &mode.spec(spec)?, config)
}

fn train_prepared(mode: AblationMode, p: &Prepared, spec: &NetSpec, config: &TrainConfig) -> Result<ModelBundle> {
    match mode {
        AblationMode::CnnSlices => {
            let out = train_supervised(spec, &p.flame, &p.nonflame, config, p.validation())?;
            Ok(bundle(config, TrainingStage::Supervised, out.disc, None))
        }
        AblationMode::DcganNorefine => {
            let s1 = train_stage1(&p.flame, spec, config)?;
            Ok(bundle(config, TrainingStage::Stage1, s1.disc, Some(s1.gen)))
        }
        AblationMode::DcganSlices | AblationMode::DcganFrames => {
            let s1 = train_stage1(&p.flame, spec, config)?;
            let s2 = train_stage2(s1.disc, &p.flame, &p.nonflame, config, p.validation())?;
            Ok(bundle(config, TrainingStage::Refined, s2.disc, Some(s1.gen)))
        }
    }
}

fn row(mode: AblationMode, model: &ModelBundle, test: &[Sample], threshold: f32, accounting: Accounting) -> Result<MetricsRow> {
    let counts = evaluate(&model.disc, test, threshold, accounting)?;
    let hash = config_hash(&(mode, model.spec(), &model.config));
    Ok(MetricsRow::new(mode.name(), threshold, counts, model.config.seed, hash))
}

/// Train for `mode` and evaluate on the test partition.
pub fn run_ablation(
    mode: AblationMode,
    data: &Datasets,
    spec: &NetSpec,
    config: &TrainConfig,
    threshold: f32,
    accounting: Accounting,
) -> Result<MetricsRow> {
    data.check_dims(spec)?;
    let prepared = Prepared::new(data, mode.representation())?;
    let model = train_prepared(mode, &prepared, &mode.spec(spec)?, config)?;
    row(mode, &model, &prepared.test, threshold, accounting)
}

/// A trained model and its test-set row.
#[derive(Clone, Debug)]
pub struct AblationRun {
    pub row: MetricsRow,
    pub model: ModelBundle,
}

/// Train and evaluate each requested mode, in the order given. The refined
/// and unrefined slice models share one stage-1 run, and inputs of each
/// representation are built once.
pub fn run_modes(
    modes: &[AblationMode],
    data: &Datasets,
    spec: &NetSpec,
    config: &TrainConfig,
    threshold: f32,
    accounting: Accounting,
) -> Result<Vec<AblationRun>> {
    data.check_dims(spec)?;
    let mut prepared: Vec<(Representation, Prepared)> = Vec::new();
    let mut shared_stage1: Option<crate::gan::Stage1Outcome> = None;
    let mut runs = Vec::with_capacity(modes.len());
    for &mode in modes {
        let repr = mode.representation();
        if !prepared.iter().any(|(r, _)| *r == repr) {
            prepared.push((repr, Prepared::new(data, repr)?));
        }
        let p = &prepared.iter().find(|(r, _)| *r == repr).expect("prepared above").1;
        let mode_spec = mode.spec(spec)?;
        let model = match mode {
            AblationMode::DcganSlices | AblationMode::DcganNorefine => {
                if shared_stage1.is_none() {
                    shared_stage1 = Some(train_stage1(&p.flame, &mode_spec, config)?);
                }
                let s1 = shared_stage1.as_ref().expect("trained above");
                if mode == AblationMode::DcganNorefine {
                    bundle(config, TrainingStage::Stage1, s1.disc.clone(), Some(s1.gen.clone()))
                } else {
                    let s2 = train_stage2(s1.disc.clone(), &p.flame, &p.nonflame, config, p.validation())?;
                    bundle(config, TrainingStage::Refined, s2.disc, Some(s1.gen.clone()))
                }
            }
            _ => train_prepared(mode, p, &mode_spec, config)?,
        };
        runs.push(AblationRun { row: row(mode, &model, &p.test, threshold, accounting)?, model });
    }
    Ok(runs)
}

/// All four modes, in `AblationMode::ALL` order.
pub fn run_table(
    data: &Datasets,
    spec: &NetSpec,
    config: &TrainConfig,
    threshold: f32,
    accounting: Accounting,
) -> Result<Vec<MetricsRow>> {
    let runs = run_modes(&AblationMode::ALL, data, spec, config, threshold, accounting)?;
    Ok(runs.into_iter().map(|r| r.row).collect())
}

//! DCGAN over slice cubes: architectures, adversarial training on flame cubes,
//! discriminator refinement with real non-flame cubes, and classification.

mod config;
mod model;
mod networks;
mod train;

pub use config::{NetSpec, Regularization, TrainConfig};
pub use config::config_hash;
pub use model::{load_model, read_sidecar, save_model, sidecar_path, ModelBundle, ModelSidecar, TrainingStage};
pub use networks::{build_discriminator, build_generator, Discriminator, Generator};
pub use train::{mirror, reverse_time, 
    classify, gen_step, sample_noise, sg1_step, train_stage1, train_stage2, train_supervised, Classification,
    Sg1Losses, Stage1Outcome, Stage1Record, Stage2Outcome, Stage2Record, Trainer,
};

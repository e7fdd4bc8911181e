//! Training regimes, the optimizer, checkpoints and metrics logs.

pub mod checkpoint;
pub mod config;
pub mod engine;
pub mod log;
pub mod optim;
pub mod regimes;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Regime};
pub use config::{BackendConfig, BackendKind, RunConfig, SceneSampling, TrainConfig};
pub use engine::{EvalProtocol, GradientMask, MapperState, Models};
pub use optim::{AdamW, AdamWConfig};
pub use regimes::{
    finetune_nvs, oracle_free_embedding, pretrain_multi_scene, train_single_scene, OracleLosses,
    TrainOutcome,
};

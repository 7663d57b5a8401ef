//! Two-stage training: contrastive alignment, then supervised fine-tuning.

mod checkpoint;
mod config;
mod metrics;
mod model;
mod optim;
mod pipeline;
mod stages;

pub use checkpoint::{Checkpoint, Normalizer, Stage};
pub use config::{StageConfig, TrainConfig};
pub use metrics::EvalMetrics;
pub use model::{Embeddings, Model, Sample, COMPONENTS};
pub use optim::AdamW;
pub use pipeline::*;
pub use stages::{evaluate, init_model, logits, stage1_cpa, stage2_supervised, StageReport, TrainLog};

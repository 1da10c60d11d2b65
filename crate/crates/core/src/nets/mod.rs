//! Surrogate and evaluation networks, optimizers and training loops.

pub mod checkpoint;
mod model;
mod optim;
mod train;

pub use model::{
    features, forward, linear, task_logits, user_logits, Extractor, ExtractorConfig, ForwardOutput,
    Linear, ModelVars, SurrogateModels, Trainable, UserHead, USER_HIDDEN,
};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use train::{
    argmax_rows, features_of, predict, predict_task, predict_users_from_features, train_joint,
    train_task_only, train_two_stage, train_two_stage_observed, Objective, Stage, TrainConfig,
    Trained, Trainer, TwoStageOutcome,
};

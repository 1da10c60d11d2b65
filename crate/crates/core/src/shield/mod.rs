//! Perturbation generators: bounded per-trial deltas and per-user templates.

mod sample;
mod user;

pub use sample::{
    generate_sample_wise, generate_sample_wise_observed, perturbation_gradient, perturbation_loss,
    pgd_batch, pgd_update, MseTarget, RoundState, SampleHyper, SampleOutcome,
};
pub use user::{
    extend_user_wise, generate_user_wise, user_loss, user_loss_gradient, UserHyper, UserOutcome,
};

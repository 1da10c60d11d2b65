//! Dataset container, synthetic generator, file formats, splitting and
//! perturbation application.

mod dataset;
pub mod format;
mod perturbation;
mod split;
mod synth;

pub use dataset::{Dataset, Dims};
pub use format::{read_dataset, read_perturbation, write_dataset, write_perturbation};
pub use perturbation::{apply_perturbation, PerturbationMode, PerturbationSet};
pub use split::{loso_indices, split_by_index, split_loso, FoldIndices};
pub use synth::{synth_generate, SynthConfig};

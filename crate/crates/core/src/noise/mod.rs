//! Synthetic datasets, label corruption, partitioning and file formats.

mod csvio;
mod dataset;
mod idx;
mod transition;

pub use csvio::{export_dataset, import_dataset, write_dataset_csv};
pub use dataset::{
    make_blobs, make_two_moons, partition, DatasetView, LabeledInstance, NoisyDataset, Provenance, TrainerView,
};
pub use idx::{load_idx, IMAGES_MAGIC, LABELS_MAGIC};
pub use transition::{
    asymmetric_transition, inject_noise, pairwise_transition, symmetric_transition, NoiseSpec, TransitionMatrix,
};

//! Photonic neural network trained in software on a Gaussian classification
//! task and evaluated on imperfect meshes.

pub mod dataset;
pub mod model;
pub mod photonic;

pub use dataset::{generate_gaussian_dataset, DatasetSpec, GaussianDataset};
pub use model::{train, train_new, Optimizer, PnnModel, TrainConfig, TrainReport};
pub use photonic::{accuracy_sweep, infer, svd_map, AccuracyReport, PhotonicLayer, PhotonicNetwork, SweepConfig};

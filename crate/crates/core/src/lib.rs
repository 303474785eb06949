//! Coalition discovery in top-k responsive hedonic games over MLP neurons,
//! with synergy metrics, cross-layer tracking and macro-feature evaluation.

pub mod ablation;
pub mod affinity;
pub mod baselines;
pub mod config;
pub mod container;
pub mod error;
pub mod eval;
pub mod files;
pub mod game;
pub mod layer;
pub mod rng;
pub mod sampler;
pub mod synth;
pub mod topcover;
pub mod tracking;

pub use error::{ContainerError, Error, Result};
pub use game::{AffinityMatrix, Coalition, NeuronId, Partition, PartitionMethod, UtilityParams};
pub use layer::LayerTensors;
pub use topcover::{pac_top_cover, TopCoverConfig};

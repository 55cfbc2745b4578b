//! The fusion network, its configuration, feature cache and checkpoints.

pub mod cache;
pub mod checkpoint;
pub mod config;
pub mod network;

pub use cache::{FeatureCache, PreparedPost};
pub use checkpoint::{Checkpoint, Precision};
pub use config::{halving_sizes, Branch, BranchSpec, FeatureToggles, ModelConfig, FULL_HEAD_SIZES};
pub use network::{loss_mse, loss_mse_grad, mix_seed, ForwardTrace, Model};

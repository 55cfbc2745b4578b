//! Multimodal popularity regression for social-media posts.

pub mod attention;
pub mod data;
pub mod encoders;
pub mod error;
pub mod features;
pub mod graph;
pub mod model;
pub mod nn;
pub mod providers;
pub mod synth;
pub mod train;

pub use error::{Error, Result};

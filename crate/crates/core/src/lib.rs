//! Egocentric hand and body pose estimation at desk scale.
//!
//! Metrics, synthetic data, three model families (dual-pathway hand pose,
//! multimodal body pose, proficiency classification), their training loop,
//! flip test-time augmentation and ensembling.

pub mod body;
pub mod clip;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod hand;
pub mod image;
pub mod io;
pub mod metrics;
pub mod pose;
pub mod proficiency;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
pub use image::ImageTensor;
pub use pose::{JointSet, Pose3D, PoseSequence, Unit};

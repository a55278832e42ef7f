//! Scene-object 4D sequence generation and 3D/4D contrastive pre-training.
//!
//! The pipeline: [`seqgen`] composites a moving object into a static scan and
//! records exact per-point correspondences; [`nets`] encodes the frames with a
//! sparse 3D U-Net and the whole sequence with a sparse 4D U-Net; [`losses`]
//! ties corresponding features together; [`trainer`] runs SGD over it.

pub mod config;
pub mod error;
pub mod geom;
pub mod gradcheck;
pub mod losses;
pub mod nets;
pub mod seqgen;
pub mod synth;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};

//! Unsupervised change detection between co-registered images from different
//! sensors by separating per-pixel content from global style.

pub mod autograd;
pub mod data_io;
pub mod detector;
pub mod error;
pub mod losses;
pub mod map;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod ops;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use map::{BinaryMap, ChangeMap, ChangeMask, DifferenceImage, ScalarMap};
pub use model::{ArchConfig, ContentCode, Domain, ModelParameters, Patch, StyleCode};
pub use tensor::{Real, Tensor};

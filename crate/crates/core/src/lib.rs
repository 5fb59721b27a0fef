//! Siamese and baseline convolutional verification of installed components.
pub mod container;
pub mod data;
pub mod error;
pub mod model;
pub mod seed;
pub mod tensor;
pub mod train;
pub mod voting;

pub use error::{Error, Result};

pub mod app;
pub mod autodiff;
pub mod camera;
pub mod checkpoint;
pub mod dataset;
pub mod encoding;
pub mod error;
pub mod experiments;
pub mod field;
pub mod metrics;
pub mod render;
pub mod sampling;
pub mod training;

pub use error::{Error, Result};

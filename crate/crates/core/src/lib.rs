pub mod augmentor;
pub mod classifier;
pub mod corpus;
pub mod emotionmap;
pub mod error;
pub mod exec;
pub mod features;
pub mod generators;
pub mod metrics;
pub mod nn;
pub mod pipeline;

pub use error::{Error, Result};

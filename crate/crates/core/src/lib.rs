pub mod datasets;
pub mod error;
pub mod math;
pub mod seed;

pub use error::{Error, Result};
pub mod gateway;
pub mod prompts;
pub mod elicitation;
pub mod sampler;
pub mod bayes;
pub mod icl;
pub mod memorisation;
pub mod scripted;
pub mod selection;
pub mod harness;

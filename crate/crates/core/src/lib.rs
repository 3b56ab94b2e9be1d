pub mod autograd;
pub mod baselines;
pub mod error;
pub mod harness;
pub mod imaging;
pub mod metrics;
pub mod network;
pub mod loss;
pub mod phantom;
pub mod sampling;
pub mod series;
pub mod velocity;

pub use error::{Error, Result};

pub mod baseline;
pub mod env;
pub mod error;
pub mod experiment;
pub mod layout;
pub mod morl;
pub mod nn;
pub mod oracle;
pub mod ppo;
pub mod report;
pub mod sim;
pub mod stochastic;

pub use error::{Error, Result};

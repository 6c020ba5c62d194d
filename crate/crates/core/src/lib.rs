//! Delay-optimal trajectory design for a UAV relaying uplink requests in a
//! circular cell under an average-power budget.

pub mod cli;
pub mod comm;
pub mod config;
pub mod dual;
pub mod error;
pub mod geometry;
pub mod heuristics;
pub mod inner;
pub mod optim;
pub mod output;
pub mod power;
pub mod sim;
pub mod smdp;

pub use config::SystemConfig;
pub use error::{Error, Result};

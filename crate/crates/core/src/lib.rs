pub mod backends;
pub mod binfmt;
pub mod cluster;
pub mod corpus;
pub mod error;
pub mod gpl;
pub mod metrics;
pub mod naming;
pub mod reduce;
pub mod runner;
pub mod synthetic;
pub mod text;
pub mod topics;

pub use error::{Error, Result};

//! Uplink outage analysis and outage-masked federated learning for
//! cellular-connected UAV networks.

pub mod analysis;
pub mod data;
pub mod error;
pub mod fl;
pub mod geometry;
pub mod nn;
pub mod quadrature;
pub mod seed;

pub use error::{Error, Result};

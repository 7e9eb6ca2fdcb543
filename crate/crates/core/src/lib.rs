//! Cluster-aggregated adversarial generation of appliance load traces.
//!
//! Devices are routed into continuous and intermittent classes; intermittent
//! devices are segmented, clustered by shape and modelled with one GAN per
//! cluster, while continuous devices are compressed and modelled with a
//! recurrent GAN (or a square-wave / spike variant). The [`pipeline`] module
//! ties the stages together and [`metrics`] scores generated traces.

pub mod atomic;
pub mod cluster;
pub mod config;
pub mod error;
pub mod features;
pub mod fixtures;
pub mod gan;
pub mod hybrid;
pub mod metrics;
pub mod pipeline;
pub mod plots;
pub mod resample;
pub mod router;
pub mod seed;
pub mod spectrum;
pub mod trace;

pub use error::{CoreError, Result};

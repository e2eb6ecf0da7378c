//! Two-stage BLE proximity classification.
//!
//! Stage 1 predicts the receiver's facing angle from attitude and magnetic
//! field with a gradient-boosted tree ensemble. Stage 2 classifies every
//! forward-filled sensor row into one of four distance classes with a dense
//! network and takes the per-event mode. The [`scorer`] turns distance
//! estimates into contact decisions and reports miss / false-alarm rates and
//! nDCF.

pub mod angle;
pub mod config;
pub mod distance;
pub mod domain;
pub mod error;
pub mod fsio;
pub mod ingest;
pub mod pathloss;
pub mod pipeline;
pub mod scorer;
pub mod sidecar;
pub mod synthgen;

pub use domain::{
    quantize_distance, CarryLocation, Channel, DistanceClass, EventFile, EventMetadata, Grain,
    Look, Pose, SensorReading,
};
pub use error::{Error, Result};
pub use pathloss::{attenuation, expected_distance, PathLossParams};

//! Weather-robust LiDAR place recognition on range images.
//!
//! A restoration network cleans weather-degraded range images and a
//! descriptor network turns them into unit-norm global descriptors for
//! retrieval. The two are trained alternately so that restoration is
//! supervised by what the descriptor network needs.

pub mod checkpoint;
pub mod config;
pub mod corruption;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod inference;
pub mod io;
pub mod ldr;
pub mod losses;
pub mod lpr;
pub mod nn;
pub mod pairing;
pub mod plot;
pub mod range_image;
pub mod trainer;
pub mod synth;

pub use error::{Error, Result};

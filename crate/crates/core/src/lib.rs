//! Detection of GAN-generated fingerprint images from two cues: the
//! spectrum of grayscale values sampled along ridges, and generation
//! artifacts in the 2-D image spectrum.

pub mod antiforensic;
pub mod data;
pub mod enhance;
pub mod error;
pub mod features;
pub mod imgproc;
pub mod io;
pub mod nn;
pub mod par;
pub mod ridge;
pub mod spectrum;

pub use error::{Error, Result};

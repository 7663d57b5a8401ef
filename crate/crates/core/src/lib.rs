//! Speech-emotion recognition from a physiology-motivated STFT quartet.

pub mod align;
pub mod container;
pub mod corpus;
pub mod dsp;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod kv;
pub mod latent;
pub mod nn;
pub mod par;
pub mod params;
pub mod qnn;
pub mod quaternion;
pub mod rng;
pub mod seq;
pub mod train;

pub use error::{Error, Result};

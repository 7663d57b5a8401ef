//! The latent speech branch: frame embeddings from an external encoder (or
//! a deterministic filterbank stand-in) and the trainable transform applied
//! on top of them.

mod io;
mod stub;
mod transform;

pub use io::{load_latents, save_latents};
pub use stub::{mel_filterbank, stub_latents, StubConfig};
pub use transform::LatentTransform;

/// Frame embeddings with their validity mask.
pub type LatentSequence = crate::seq::FrameSeq;

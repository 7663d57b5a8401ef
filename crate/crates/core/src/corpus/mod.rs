//! Audio files, manifests, deterministic splits and the synthetic corpus.

mod manifest;
mod split;
mod synth;
mod wav;

pub use manifest::{Manifest, ManifestEntry};
pub use split::{split_dataset, Part, Split};
pub use synth::{render, synth_corpus, synth_items, ClassSpec, SynthItem, SyntheticSpec, UtteranceDraw};
pub use wav::{read_wav, write_wav};

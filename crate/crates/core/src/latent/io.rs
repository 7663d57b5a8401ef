use std::path::Path;

use ndarray::Array2;

use super::LatentSequence;
use crate::container::ArrayStore;
use crate::error::{Error, Result};

/// Writes `latents` (`[frames, dim]`, f64) and `mask` (u8) to one container file.
pub fn save_latents(seq: &LatentSequence, path: &Path) -> Result<()> {
    let mut store = ArrayStore::default();
    store.insert_f64("latents", &[seq.frames(), seq.dim()], seq.values.iter().copied().collect())?;
    store.insert_u8("mask", &[seq.frames()], seq.mask.iter().map(|&m| m as u8).collect())?;
    store.save(path)
}

pub fn load_latents(path: &Path) -> Result<LatentSequence> {
    let store = ArrayStore::load(path)?;
    let latents = store
        .get("latents")
        .ok_or_else(|| Error::Format("latent file has no `latents` array".into()))?;
    let mask = store
        .get("mask")
        .ok_or_else(|| Error::Format("latent file has no `mask` array".into()))?;
    if latents.dims.len() != 2 {
        return Err(Error::Format(format!("`latents` has rank {}, expected 2", latents.dims.len())));
    }
    let (frames, dim) = (latents.dims[0], latents.dims[1]);
    if mask.dims != [frames] {
        return Err(Error::Format(format!(
            "mask shape {:?} does not match {frames} frames",
            mask.dims
        )));
    }
    let values = Array2::from_shape_vec((frames, dim), latents.to_f64_vec())
        .map_err(|e| Error::Format(e.to_string()))?;
    let mask = mask.to_f64_vec().into_iter().map(|m| m != 0.0).collect();
    LatentSequence::new(values, mask)
}

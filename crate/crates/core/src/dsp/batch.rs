use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array4};

use super::QuartetField;
use crate::error::{Error, Result};

/// One plane of the quartet, in quaternion component order (r, i, j, k).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Channel {
    M,
    Rho,
    Finst,
    TauG,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::M, Channel::Rho, Channel::Finst, Channel::TauG];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Array name used in feature dumps.
    pub fn array_name(self) -> &'static str {
        match self {
            Channel::M => "M",
            Channel::Rho => "rho",
            Channel::Finst => "f_inst",
            Channel::TauG => "tau_g",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::M => "M",
            Channel::Rho => "rho",
            Channel::Finst => "finst",
            Channel::TauG => "taug",
        })
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "M" | "m" => Ok(Channel::M),
            "rho" => Ok(Channel::Rho),
            "finst" | "f_inst" => Ok(Channel::Finst),
            "taug" | "tau_g" => Ok(Channel::TauG),
            other => Err(Error::InvalidConfig(format!(
                "unknown channel `{other}` (expected M, rho, finst or taug)"
            ))),
        }
    }
}

/// Zero-padded batch of quartets: `planes` is `[batch, 4, frames, bins]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuartetBatch {
    pub planes: Array4<f64>,
    pub masks: Vec<Vec<bool>>,
    pub valid_frames: Vec<usize>,
}

impl QuartetBatch {
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn frames(&self) -> usize {
        self.planes.dim().2
    }
}

/// Pads every field to the longest valid length in the batch.
pub fn pad_and_mask(fields: &[QuartetField]) -> Result<QuartetBatch> {
    let first = fields
        .first()
        .ok_or_else(|| Error::ShapeMismatch("cannot batch an empty list".into()))?;
    let bins = first.bins();
    if let Some(bad) = fields.iter().find(|f| f.bins() != bins) {
        return Err(Error::InconsistentBinCount {
            expected: bins,
            found: bad.bins(),
        });
    }
    let valid: Vec<usize> = fields.iter().map(QuartetField::valid_frames).collect();
    let frames = valid.iter().copied().max().unwrap_or(0);
    let mut planes = Array4::zeros((fields.len(), 4, frames, bins));
    for (b, field) in fields.iter().enumerate() {
        let n = valid[b];
        for ch in Channel::ALL {
            planes
                .slice_mut(s![b, ch.index(), ..n, ..])
                .assign(&field.plane(ch).slice(s![..n, ..]));
        }
    }
    let masks = valid.iter().map(|&n| (0..frames).map(|t| t < n).collect()).collect();
    Ok(QuartetBatch {
        planes,
        masks,
        valid_frames: valid,
    })
}

/// Per-channel standardisation statistics over valid frames.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStats {
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

impl Default for ChannelStats {
    fn default() -> Self {
        ChannelStats {
            mean: [0.0; 4],
            std: [1.0; 4],
        }
    }
}

impl ChannelStats {
    const MIN_STD: f64 = 1e-12;

    pub fn fit<'a>(fields: impl IntoIterator<Item = &'a QuartetField> + Clone) -> Result<Self> {
        let mut count = 0usize;
        let mut sum = [0.0f64; 4];
        for f in fields.clone() {
            let n = f.valid_frames();
            count += n * f.bins();
            for ch in Channel::ALL {
                sum[ch.index()] += f.plane(ch).slice(s![..n, ..]).iter().sum::<f64>();
            }
        }
        if count == 0 {
            return Err(Error::EmptyDataset);
        }
        let mean = sum.map(|s| s / count as f64);
        let mut sq = [0.0f64; 4];
        for f in fields {
            let n = f.valid_frames();
            for ch in Channel::ALL {
                let mu = mean[ch.index()];
                sq[ch.index()] += f
                    .plane(ch)
                    .slice(s![..n, ..])
                    .iter()
                    .map(|v| (v - mu) * (v - mu))
                    .sum::<f64>();
            }
        }
        let std = sq.map(|s| {
            let sd = (s / count as f64).sqrt();
            if sd < Self::MIN_STD {
                1.0
            } else {
                sd
            }
        });
        Ok(ChannelStats { mean, std })
    }

    /// Standardised copy of `field`; masked frames stay exactly zero.
    pub fn apply(&self, field: &QuartetField) -> QuartetField {
        let mut out = field.clone();
        for ch in Channel::ALL {
            let (mu, sd) = (self.mean[ch.index()], self.std[ch.index()]);
            let plane = out.plane_mut(ch);
            for (t, mut row) in plane.rows_mut().into_iter().enumerate() {
                if field.mask[t] {
                    row.mapv_inplace(|v| (v - mu) / sd);
                } else {
                    row.fill(0.0);
                }
            }
        }
        out
    }
}

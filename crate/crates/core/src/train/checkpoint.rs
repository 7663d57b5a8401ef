use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Model, Sample, TrainConfig};
use crate::container::ArrayStore;
use crate::dsp::{Channel, ChannelStats, QuartetField};
use crate::error::{Error, Result};
use crate::params::{export, import};
use crate::qnn::QTensor;
use crate::seq::FrameSeq;

/// Input standardisation fitted on the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub quartet: ChannelStats,
    pub latent_mean: Vec<f64>,
    pub latent_std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(quartets: &[&QuartetField], latents: &[&FrameSeq]) -> Result<Self> {
        let quartet = ChannelStats::fit(quartets.iter().copied())?;
        let dim = latents.first().ok_or(Error::EmptyDataset)?.dim();
        let mut count = 0usize;
        let mut sum = vec![0.0; dim];
        for seq in latents {
            if seq.dim() != dim {
                return Err(Error::ShapeMismatch(format!("latent width {} != {dim}", seq.dim())));
            }
            for (row, _) in seq.values.rows().into_iter().zip(&seq.mask).filter(|(_, &m)| m) {
                sum.iter_mut().zip(row).for_each(|(s, v)| *s += v);
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::EmptyDataset);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0; dim];
        for seq in latents {
            for (row, _) in seq.values.rows().into_iter().zip(&seq.mask).filter(|(_, &m)| m) {
                sq.iter_mut()
                    .zip(row)
                    .zip(&mean)
                    .for_each(|((s, v), mu)| *s += (v - mu) * (v - mu));
            }
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = (s / count as f64).sqrt();
                if sd < 1e-12 {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Normalizer {
            quartet,
            latent_mean: mean,
            latent_std: std,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_mean.len()
    }

    /// Standardises one utterance and zeroes the `zero_channel` plane.
    pub fn prepare(&self, quartet: &QuartetField, latent: &FrameSeq, label: usize, zero_channel: Option<Channel>) -> Result<Sample> {
        if latent.dim() != self.latent_dim() {
            return Err(Error::ShapeMismatch(format!(
                "latent width {} != {}",
                latent.dim(),
                self.latent_dim()
            )));
        }
        let mut q = self.quartet.apply(quartet);
        if let Some(ch) = zero_channel {
            q.plane_mut(ch).fill(0.0);
        }
        let mut values = latent.values.clone();
        for mut row in values.rows_mut() {
            row.iter_mut()
                .zip(self.latent_mean.iter().zip(&self.latent_std))
                .for_each(|(v, (mu, sd))| *v = (*v - mu) / sd);
        }
        Ok(Sample {
            x: QTensor::from_quartet(&q),
            latent: FrameSeq::new(values, latent.mask.clone())?,
            label,
        })
    }
}

/// Which training stage produced a checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Init,
    Pretrained,
    Finetuned,
}

impl Stage {
    fn code(self) -> &'static str {
        match self {
            Stage::Init => "init",
            Stage::Pretrained => "cpa",
            Stage::Finetuned => "supervised",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "init" => Ok(Stage::Init),
            "cpa" => Ok(Stage::Pretrained),
            "supervised" => Ok(Stage::Finetuned),
            other => Err(Error::Format(format!("unknown stage `{other}`"))),
        }
    }
}

/// A model together with everything needed to run it on raw audio.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub labels: Vec<String>,
    pub norm: Normalizer,
    pub model: Model,
    pub stage: Stage,
    pub epoch: usize,
}

impl Checkpoint {
    pub fn to_store(&self) -> Result<ArrayStore> {
        let mut s = ArrayStore::new();
        export(&self.model, "", &mut s)?;
        s.insert_f64("norm.quartet.mean", &[4], self.norm.quartet.mean.to_vec())?;
        s.insert_f64("norm.quartet.std", &[4], self.norm.quartet.std.to_vec())?;
        let d = self.norm.latent_dim();
        s.insert_f64("norm.latent.mean", &[d], self.norm.latent_mean.clone())?;
        s.insert_f64("norm.latent.std", &[d], self.norm.latent_std.clone())?;
        s.insert_text("meta.config", &self.config.to_text());
        s.insert_text("meta.config_hash", &format!("{:08x}", self.config.hash()));
        s.insert_text("meta.labels", &self.labels.join("\n"));
        s.insert_text("meta.stage", self.stage.code());
        s.insert_text("meta.epoch", &self.epoch.to_string());
        s.insert_text("meta.seed", &self.config.seed.to_string());
        Ok(s)
    }

    pub fn from_store(s: &ArrayStore) -> Result<Self> {
        let config = TrainConfig::from_text(&s.get_text("meta.config")?)?;
        let hash = s.get_text("meta.config_hash")?;
        if hash != format!("{:08x}", config.hash()) {
            return Err(Error::CorruptFile("configuration hash does not match".into()));
        }
        let labels: Vec<String> = s.get_text("meta.labels")?.lines().map(str::to_string).collect();
        let four = |name: &str| -> Result<[f64; 4]> {
            s.get_array(name)?
                .iter()
                .copied()
                .collect::<Vec<_>>()
                .try_into()
                .map_err(|_| Error::Format(format!("`{name}` must hold 4 values")))
        };
        let vec = |name: &str| -> Result<Vec<f64>> { Ok(s.get_array(name)?.iter().copied().collect()) };
        let norm = Normalizer {
            quartet: ChannelStats {
                mean: four("norm.quartet.mean")?,
                std: four("norm.quartet.std")?,
            },
            latent_mean: vec("norm.latent.mean")?,
            latent_std: vec("norm.latent.std")?,
        };
        if norm.latent_std.len() != norm.latent_dim() {
            return Err(Error::Format("latent statistics differ in length".into()));
        }
        // Structure only; every value is overwritten by the import below.
        let mut model = Model::init(&config, norm.latent_dim(), labels.len(), &mut ChaCha8Rng::seed_from_u64(0))?;
        import(&mut model, "", s)?;
        let epoch = s
            .get_text("meta.epoch")?
            .parse()
            .map_err(|_| Error::Format("bad epoch".into()))?;
        Ok(Checkpoint {
            config,
            labels,
            norm,
            model,
            stage: Stage::parse(&s.get_text("meta.stage")?)?,
            epoch,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_store()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_store(&ArrayStore::load(path)?)
    }

    pub fn label_index(&self, name: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| Error::UnknownLabel(name.to_string()))
    }
}


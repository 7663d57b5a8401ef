//! Feature extraction and the end-to-end training run over a labelled corpus.

use crate::corpus::{read_wav, split_dataset, Manifest, Split, SynthItem};
use crate::dsp::{extract_quartet, QuartetField, Waveform};
use crate::error::{Error, Result};
use crate::latent::{load_latents, stub_latents, LatentSequence};
use crate::par;

use super::{
    evaluate, init_model, stage1_cpa, stage2_supervised, Checkpoint, EvalMetrics, Normalizer, Sample, Stage, StageReport,
    TrainConfig, TrainLog,
};

/// Raw (unstandardised) inputs of a labelled corpus.
#[derive(Clone, Debug)]
pub struct Features {
    pub ids: Vec<String>,
    /// Class index into `label_names`.
    pub labels: Vec<usize>,
    pub label_names: Vec<String>,
    pub quartets: Vec<QuartetField>,
    pub latents: Vec<LatentSequence>,
}

impl Features {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn split(&self, cfg: &TrainConfig) -> Result<Split> {
        let names: Vec<String> = self.labels.iter().map(|&l| self.label_names[l].clone()).collect();
        split_dataset(&self.ids, &names, cfg.split, cfg.seed)
    }

    /// Standardised samples for the items at `indices`.
    pub fn samples(&self, indices: &[usize], norm: &Normalizer, cfg: &TrainConfig) -> Result<Vec<Sample>> {
        par::try_map(indices, |&i| norm.prepare(&self.quartets[i], &self.latents[i], self.labels[i], cfg.zero_channel))
    }

    pub fn fit_normalizer(&self, indices: &[usize]) -> Result<Normalizer> {
        let q: Vec<&QuartetField> = indices.iter().map(|&i| &self.quartets[i]).collect();
        let l: Vec<&LatentSequence> = indices.iter().map(|&i| &self.latents[i]).collect();
        Normalizer::fit(&q, &l)
    }
}

/// Quartet and stub latents of one waveform.
pub fn extract_features(w: &Waveform, cfg: &TrainConfig) -> Result<(QuartetField, LatentSequence)> {
    let q = extract_quartet(w, &cfg.stft)?;
    let l = stub_latents(w, &cfg.stft, &cfg.stub)?;
    Ok((q, l))
}

fn class_indices(names: &[String]) -> (Vec<String>, Vec<usize>) {
    let mut label_names: Vec<String> = names.to_vec();
    label_names.sort();
    label_names.dedup();
    let labels = names
        .iter()
        .map(|n| label_names.binary_search(n).expect("label present"))
        .collect();
    (label_names, labels)
}

pub fn features_from_items(items: &[SynthItem], cfg: &TrainConfig) -> Result<Features> {
    if items.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let extracted = par::try_map(items, |it| extract_features(&it.waveform, cfg))?;
    let (quartets, latents) = extracted.into_iter().unzip();
    let names: Vec<String> = items.iter().map(|it| it.label.clone()).collect();
    let (label_names, labels) = class_indices(&names);
    Ok(Features {
        ids: items.iter().map(|it| it.id.clone()).collect(),
        labels,
        label_names,
        quartets,
        latents,
    })
}

/// Reads every manifest entry. Latents come from `latent_path` when given
/// and from the filterbank stand-in otherwise.
pub fn features_from_manifest(m: &Manifest, cfg: &TrainConfig) -> Result<Features> {
    if m.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let extracted = par::try_map(&m.entries, |e| {
        let w = read_wav(&e.path)?;
        let q = extract_quartet(&w, &cfg.stft)?;
        let l = match &e.latent_path {
            Some(p) => load_latents(p)?,
            None => stub_latents(&w, &cfg.stft, &cfg.stub)?,
        };
        Ok::<_, Error>((q, l))
    })?;
    let (quartets, latents) = extracted.into_iter().unzip();
    let names: Vec<String> = m.entries.iter().map(|e| e.label.clone()).collect();
    let (label_names, labels) = class_indices(&names);
    Ok(Features {
        ids: m.entries.iter().map(|e| e.id.clone()).collect(),
        labels,
        label_names,
        quartets,
        latents,
    })
}

/// Everything a training run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub checkpoint: Checkpoint,
    pub log: TrainLog,
    pub split: Split,
    pub stage1: Option<StageReport>,
    pub stage2: Option<StageReport>,
    /// Test-split metrics after stage 2 (absent for pretraining only or an empty test split).
    pub test: Option<EvalMetrics>,
}

struct Prepared {
    split: Split,
    norm: Normalizer,
    train: Vec<Sample>,
    val: Vec<Sample>,
}

fn prepare(features: &Features, cfg: &TrainConfig, norm: Option<&Normalizer>) -> Result<Prepared> {
    cfg.validate()?;
    let split = features.split(cfg)?;
    let norm = match norm {
        Some(n) => n.clone(),
        None => features.fit_normalizer(&split.train)?,
    };
    let train = features.samples(&split.train, &norm, cfg)?;
    let val = features.samples(&split.val, &norm, cfg)?;
    Ok(Prepared { split, norm, train, val })
}

/// Stage 1 only.
pub fn pretrain(features: &Features, cfg: &TrainConfig) -> Result<RunOutput> {
    let p = prepare(features, cfg, None)?;
    let mut model = init_model(cfg, p.norm.latent_dim(), features.label_names.len())?;
    let mut log = TrainLog::default();
    let report = stage1_cpa(&mut model, &p.train, &p.val, cfg, &mut log)?;
    Ok(RunOutput {
        checkpoint: Checkpoint {
            config: cfg.clone(),
            labels: features.label_names.clone(),
            norm: p.norm,
            model,
            stage: Stage::Pretrained,
            epoch: report.best_epoch,
        },
        log,
        split: p.split,
        stage1: Some(report),
        stage2: None,
        test: None,
    })
}

/// Stage 2, starting from `start` (a stage-1 checkpoint) or, without one,
/// from stage 1 run here (or a fresh model when `cfg.no_cpa` is set).
pub fn train(features: &Features, cfg: &TrainConfig, start: Option<Checkpoint>) -> Result<RunOutput> {
    let mut log = TrainLog::default();
    let (mut model, norm, stage1) = match start {
        Some(ck) => {
            if ck.labels != features.label_names {
                return Err(Error::Format("checkpoint labels differ from the corpus labels".into()));
            }
            (ck.model, Some(ck.norm), None)
        }
        None => (init_model(cfg, 1, 1)?, None, None),
    };
    let p = prepare(features, cfg, norm.as_ref())?;
    let mut stage1: Option<StageReport> = stage1;
    if norm.is_none() {
        model = init_model(cfg, p.norm.latent_dim(), features.label_names.len())?;
        if !cfg.no_cpa {
            stage1 = Some(stage1_cpa(&mut model, &p.train, &p.val, cfg, &mut log)?);
        }
    }
    let report = stage2_supervised(&mut model, &p.train, &p.val, cfg, &mut log)?;
    let test = if p.split.test.is_empty() {
        None
    } else {
        let test_samples = features.samples(&p.split.test, &p.norm, cfg)?;
        Some(evaluate(&model, &test_samples, cfg.batch_size)?)
    };
    Ok(RunOutput {
        checkpoint: Checkpoint {
            config: cfg.clone(),
            labels: features.label_names.clone(),
            norm: p.norm,
            model,
            stage: Stage::Finetuned,
            epoch: report.best_epoch,
        },
        log,
        split: p.split,
        stage1,
        stage2: Some(report),
        test,
    })
}

/// Metrics of a checkpoint on the items at `indices`.
pub fn evaluate_checkpoint(ck: &Checkpoint, features: &Features, indices: &[usize]) -> Result<EvalMetrics> {
    if indices.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let samples = features.samples(indices, &ck.norm, &ck.config)?;
    evaluate(&ck.model, &samples, ck.config.batch_size)
}

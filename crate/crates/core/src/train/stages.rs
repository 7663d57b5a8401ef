use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::{AdamW, EvalMetrics, Model, Sample, StageConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::fusion::cross_entropy;
use crate::nn::argmax;
use crate::qnn::Mode;
use crate::rng::{stream_rng, STREAM_INIT, STREAM_STAGE1, STREAM_STAGE2};


/// Tab-separated `stage epoch step loss lr` lines, one per optimiser step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    text: String,
}

impl TrainLog {
    pub fn record(&mut self, stage: &str, epoch: usize, step: u64, loss: f64, lr: f64) {
        let _ = writeln!(self.text, "{stage}\t{epoch}\t{step}\t{loss}\t{lr}");
        log::debug!("{stage} epoch {epoch} step {step} loss {loss:.6}");
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

/// Per-epoch trajectory of one stage and the epoch that was kept.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageReport {
    /// Mean training loss of every epoch.
    pub train_loss: Vec<f64>,
    /// Validation criterion of every epoch (L_CPA or WA).
    pub val_score: Vec<f64>,
    /// 1-based epoch whose weights were restored; 0 for none.
    pub best_epoch: usize,
}

fn batches(n: usize, size: usize, rng: &mut ChaCha8Rng, min: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(size)
        .filter(|c| c.len() >= min)
        .map(<[usize]>::to_vec)
        .collect()
}

fn stage1_trainable(name: &str) -> bool {
    ["qse.", "vocal_pool.", "latent_transform.", "latent_pool.", "vocal_head.", "latent_head."]
        .iter()
        .any(|p| name.starts_with(p))
}

/// Contrastive pretraining of both branches and projection heads. Keeps
/// the epoch with the lowest validation alignment loss (the last epoch
/// when fewer than two validation items exist).
pub fn stage1_cpa(model: &mut Model, train: &[Sample], val: &[Sample], cfg: &TrainConfig, log: &mut TrainLog) -> Result<StageReport> {
    cfg.validate()?;
    if cfg.batch_size < 2 {
        return Err(Error::InvalidConfig("contrastive pretraining needs batch_size >= 2".into()));
    }
    if train.len() < 2 {
        return Err(Error::EmptyDataset);
    }
    let StageConfig { epochs, lr, weight_decay } = cfg.stage1.clone();
    let mut rng = stream_rng(cfg.seed, STREAM_STAGE1);
    let mut opt = AdamW::default();
    let mut report = StageReport::default();
    let mut best: Option<(f64, Model)> = None;
    let val_refs: Vec<&Sample> = val.iter().collect();
    for epoch in 1..=epochs {
        let mut total = 0.0;
        let mut steps = 0;
        for idx in batches(train.len(), cfg.batch_size, &mut rng, 2) {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &train[i]).collect();
            let (loss, grads, trace) = model.cpa_step(&batch)?;
            opt.step(model, &grads, lr, weight_decay, &stage1_trainable)?;
            model.qse.commit(&trace);
            log.record("cpa", epoch, opt.steps(), loss, lr);
            total += loss;
            steps += 1;
        }
        report.train_loss.push(total / steps.max(1) as f64);
        if val_refs.len() >= 2 {
            let score = model.cpa_loss(&val_refs)?;
            report.val_score.push(score);
            if best.as_ref().is_none_or(|(b, _)| score < *b) {
                best = Some((score, model.clone()));
                report.best_epoch = epoch;
            }
        } else {
            report.best_epoch = epoch;
        }
    }
    if let Some((_, m)) = best {
        *model = m;
    }
    Ok(report)
}

/// Logits of `data` in eval mode, in chunks of `chunk`.
pub fn logits(model: &Model, data: &[Sample], chunk: usize) -> Result<Vec<Vec<f64>>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut out = Vec::with_capacity(data.len());
    for part in data.chunks(chunk.max(1)) {
        let refs: Vec<&Sample> = part.iter().collect();
        out.extend(model.logits(&refs)?.rows().into_iter().map(|r| r.to_vec()));
    }
    Ok(out)
}

/// Confusion-matrix metrics of argmax predictions over `data`.
pub fn evaluate(model: &Model, data: &[Sample], chunk: usize) -> Result<EvalMetrics> {
    let all = logits(model, data, chunk)?;
    let pred: Vec<usize> = all.iter().map(|l| argmax(l)).collect();
    let truth: Vec<usize> = data.iter().map(|s| s.label).collect();
    EvalMetrics::from_predictions(&truth, &pred, model.classes())
}

/// `(WA, mean CE)` over `data`.
fn validate(model: &Model, data: &[Sample], chunk: usize) -> Result<(f64, f64)> {
    let all = logits(model, data, chunk)?;
    let mut correct = 0usize;
    let mut ce = 0.0;
    for (l, s) in all.iter().zip(data) {
        correct += usize::from(argmax(l) == s.label);
        ce += cross_entropy(l, s.label)?;
    }
    Ok((correct as f64 / data.len() as f64, ce / data.len() as f64))
}

/// Supervised fine-tuning with cross-entropy. Keeps the epoch with the best
/// validation WA (lower validation cross-entropy breaks ties) and stops after
/// `patience` epochs without improvement.
pub fn stage2_supervised(model: &mut Model, train: &[Sample], val: &[Sample], cfg: &TrainConfig, log: &mut TrainLog) -> Result<StageReport> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for s in train.iter().chain(val) {
        if s.label >= model.classes() {
            return Err(Error::LabelOutOfRange {
                label: s.label,
                classes: model.classes(),
            });
        }
    }
    let StageConfig { epochs, lr, weight_decay } = cfg.stage2.clone();
    let freeze = cfg.freeze_vocal_stage2;
    let trainable = move |name: &str| {
        if name.starts_with("vocal_head.") || name.starts_with("latent_head.") {
            return false;
        }
        !(freeze && (name.starts_with("qse.") || name.starts_with("vocal_pool.")))
    };
    let vocal_mode = if freeze { Mode::Eval } else { Mode::Train };
    let mut rng = stream_rng(cfg.seed, STREAM_STAGE2);
    let mut opt = AdamW::default();
    let mut report = StageReport::default();
    let mut best: Option<((f64, f64), Model)> = None;
    let mut stale = 0;
    for epoch in 1..=epochs {
        let mut total = 0.0;
        let mut steps = 0;
        for idx in batches(train.len(), cfg.batch_size, &mut rng, 1) {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &train[i]).collect();
            let (loss, grads, trace) = model.ce_step(&batch, vocal_mode)?;
            opt.step(model, &grads, lr, weight_decay, &trainable)?;
            if vocal_mode == Mode::Train {
                model.qse.commit(&trace);
            }
            log.record("supervised", epoch, opt.steps(), loss, lr);
            total += loss;
            steps += 1;
        }
        report.train_loss.push(total / steps.max(1) as f64);
        if val.is_empty() {
            report.best_epoch = epoch;
            continue;
        }
        let (wa, ce) = validate(model, val, cfg.batch_size)?;
        report.val_score.push(wa);
        let improved = best
            .as_ref()
            .is_none_or(|((bw, bc), _)| wa > *bw || (wa == *bw && ce < *bc));
        if improved {
            best = Some(((wa, ce), model.clone()));
            report.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                log::info!("early stop after epoch {epoch}");
                break;
            }
        }
    }
    if let Some((_, m)) = best {
        *model = m;
    }
    Ok(report)
}

/// Fresh model with the run's initialisation stream.
pub fn init_model(cfg: &TrainConfig, latent_dim: usize, classes: usize) -> Result<Model> {
    Model::init(cfg, latent_dim, classes, &mut stream_rng(cfg.seed, STREAM_INIT))
}

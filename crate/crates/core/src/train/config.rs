use std::fmt::Write as _;

use crate::align::CpaConfig;
use crate::dsp::{Channel, StftConfig};
use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::kv::KvMap;
use crate::latent::StubConfig;
use crate::qnn::{FreqPadding, QseConfig};

/// Optimiser schedule of one training stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StageConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
}

/// Everything a training run depends on. Serialises to `key=value` text.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    /// Stage-2 epochs without a validation WA improvement before stopping.
    pub patience: usize,
    pub cpa: CpaConfig,
    pub qse: QseConfig,
    pub fusion: FusionConfig,
    pub stft: StftConfig,
    pub stub: StubConfig,
    /// train : val : test
    pub split: [f64; 3],
    /// Plane set to zero at the encoder input.
    pub zero_channel: Option<Channel>,
    /// Skip stage 1 and fine-tune from random initialisation.
    pub no_cpa: bool,
    /// Keep the vocal encoder and its pool fixed during stage 2.
    pub freeze_vocal_stage2: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 1,
            batch_size: 32,
            stage1: StageConfig {
                epochs: 30,
                lr: 1e-3,
                weight_decay: 1e-4,
            },
            stage2: StageConfig {
                epochs: 50,
                lr: 5e-4,
                weight_decay: 1e-4,
            },
            patience: 10,
            cpa: CpaConfig::default(),
            qse: QseConfig::default(),
            fusion: FusionConfig::default(),
            stft: StftConfig::default(),
            stub: StubConfig::default(),
            split: [0.7, 0.1, 0.2],
            zero_channel: None,
            no_cpa: false,
            freeze_vocal_stage2: false,
        }
    }
}

fn padding_name(p: FreqPadding) -> &'static str {
    match p {
        FreqPadding::Same => "same",
        FreqPadding::Valid => "valid",
    }
}

fn parse_padding(s: &str, line: usize) -> Result<FreqPadding> {
    match s {
        "same" => Ok(FreqPadding::Same),
        "valid" => Ok(FreqPadding::Valid),
        _ => Err(Error::Parse {
            line,
            msg: format!("padding must be `same` or `valid`, got `{s}`"),
        }),
    }
}

fn join_list<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

const KEYS: &[&str] = &[
    "seed",
    "batch_size",
    "stage1.epochs",
    "stage1.lr",
    "stage1.weight_decay",
    "stage2.epochs",
    "stage2.lr",
    "stage2.weight_decay",
    "stage2.patience",
    "cpa.temperature",
    "cpa.d_align",
    "cpa.hidden",
    "qse.channels",
    "qse.kernel",
    "qse.pool_win",
    "qse.pool_stride",
    "qse.relu_eps",
    "qse.relu_theta",
    "qse.bn_eps",
    "qse.bn_momentum",
    "qse.later_padding",
    "fusion.d_model",
    "fusion.heads",
    "fusion.layers",
    "fusion.ffn_mult",
    "fusion.ln_eps",
    "fusion.classifier_hidden",
    "stft.sample_rate",
    "stft.win_length",
    "stft.hop_length",
    "stft.fft_size",
    "stft.mag_floor",
    "stft.tau_clip",
    "stub.bands",
    "stub.dim",
    "stub.seed",
    "stub.floor",
    "split",
    "zero_channel",
    "no_cpa",
    "freeze_vocal_stage2",
];

impl TrainConfig {
    /// A reduced model that trains the synthetic corpus in about three
    /// minutes per run on one core.
    pub fn compact() -> Self {
        TrainConfig {
            batch_size: 8,
            stage1: StageConfig {
                epochs: 4,
                lr: 2e-3,
                weight_decay: 1e-4,
            },
            stage2: StageConfig {
                epochs: 20,
                lr: 1e-3,
                weight_decay: 1e-4,
            },
            patience: 10,
            cpa: CpaConfig {
                temperature: 0.25,
                d_align: 32,
                hidden: 64,
            },
            qse: QseConfig {
                channels: vec![2, 4],
                pool_win: 4,
                pool_stride: 4,
                ..QseConfig::default()
            },
            fusion: FusionConfig {
                d_model: 32,
                heads: 4,
                layers: 1,
                ffn_mult: 2,
                ln_eps: 1e-5,
                classifier_hidden: 32,
            },
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !self.no_cpa && self.batch_size < 2 {
            return bad("contrastive pretraining needs batch_size >= 2 for in-batch negatives");
        }
        if self.split.iter().any(|r| !(*r >= 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("split ratios must be non-negative and sum to 1");
        }
        if !(self.cpa.temperature > 0.0) {
            return Err(Error::TemperatureNonPositive(self.cpa.temperature));
        }
        if self.cpa.d_align == 0 || self.cpa.hidden == 0 {
            return bad("projection widths must be positive");
        }
        for s in [&self.stage1, &self.stage2] {
            if !(s.lr > 0.0) || !(s.weight_decay >= 0.0) {
                return bad("learning rates must be positive and weight decay non-negative");
            }
        }
        let f = &self.fusion;
        if f.d_model == 0 || f.heads == 0 || f.d_model % f.heads != 0 {
            return bad("fusion.d_model must be a positive multiple of fusion.heads");
        }
        if f.ffn_mult == 0 || f.classifier_hidden == 0 {
            return bad("fusion widths must be positive");
        }
        if self.stub.bands == 0 || self.stub.dim == 0 || !(self.stub.floor > 0.0) {
            return bad("stub bands, dim and floor must be positive");
        }
        self.qse.validate()?;
        self.stft.validate()?;
        self.qse.output_bins(self.stft.fft_size / 2 + 1)?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        put("seed", self.seed.to_string());
        put("batch_size", self.batch_size.to_string());
        for (name, st) in [("stage1", &self.stage1), ("stage2", &self.stage2)] {
            put(&format!("{name}.epochs"), st.epochs.to_string());
            put(&format!("{name}.lr"), st.lr.to_string());
            put(&format!("{name}.weight_decay"), st.weight_decay.to_string());
        }
        put("stage2.patience", self.patience.to_string());
        put("cpa.temperature", self.cpa.temperature.to_string());
        put("cpa.d_align", self.cpa.d_align.to_string());
        put("cpa.hidden", self.cpa.hidden.to_string());
        let q = &self.qse;
        put("qse.channels", join_list(&q.channels));
        put("qse.kernel", format!("{}x{}", q.kernel.0, q.kernel.1));
        put("qse.pool_win", q.pool_win.to_string());
        put("qse.pool_stride", q.pool_stride.to_string());
        put("qse.relu_eps", q.relu_eps.to_string());
        put("qse.relu_theta", q.relu_theta.to_string());
        put("qse.bn_eps", q.bn_eps.to_string());
        put("qse.bn_momentum", q.bn_momentum.to_string());
        put("qse.later_padding", padding_name(q.later_padding).to_string());
        let f = &self.fusion;
        put("fusion.d_model", f.d_model.to_string());
        put("fusion.heads", f.heads.to_string());
        put("fusion.layers", f.layers.to_string());
        put("fusion.ffn_mult", f.ffn_mult.to_string());
        put("fusion.ln_eps", f.ln_eps.to_string());
        put("fusion.classifier_hidden", f.classifier_hidden.to_string());
        let st = &self.stft;
        put("stft.sample_rate", st.sample_rate.to_string());
        put("stft.win_length", st.win_length.to_string());
        put("stft.hop_length", st.hop_length.to_string());
        put("stft.fft_size", st.fft_size.to_string());
        put("stft.mag_floor", st.mag_floor.to_string());
        put("stft.tau_clip", st.tau_clip.to_string());
        put("stub.bands", self.stub.bands.to_string());
        put("stub.dim", self.stub.dim.to_string());
        put("stub.seed", self.stub.seed.to_string());
        put("stub.floor", self.stub.floor.to_string());
        put("split", join_list(&self.split));
        put(
            "zero_channel",
            self.zero_channel.map_or("none".to_string(), |c| c.to_string()),
        );
        put("no_cpa", self.no_cpa.to_string());
        put("freeze_vocal_stage2", self.freeze_vocal_stage2.to_string());
        s
    }

    /// Starts from the defaults and overrides every key present in `text`.
    pub fn from_text(text: &str) -> Result<Self> {
        Self::default().with_overrides(text)
    }

    /// Overrides the keys present in `text`, leaving the rest unchanged.
    pub fn with_overrides(mut self, text: &str) -> Result<Self> {
        let kv = KvMap::parse(text)?;
        kv.reject_unknown(|k| KEYS.contains(&k))?;
        kv.set("seed", &mut self.seed)?;
        kv.set("batch_size", &mut self.batch_size)?;
        for (name, st) in [("stage1", &mut self.stage1), ("stage2", &mut self.stage2)] {
            kv.set(&format!("{name}.epochs"), &mut st.epochs)?;
            kv.set(&format!("{name}.lr"), &mut st.lr)?;
            kv.set(&format!("{name}.weight_decay"), &mut st.weight_decay)?;
        }
        kv.set("stage2.patience", &mut self.patience)?;
        kv.set("cpa.temperature", &mut self.cpa.temperature)?;
        kv.set("cpa.d_align", &mut self.cpa.d_align)?;
        kv.set("cpa.hidden", &mut self.cpa.hidden)?;
        let q = &mut self.qse;
        if let Some(ch) = kv.list("qse.channels")? {
            q.channels = ch;
        }
        if let Some(k) = kv.raw("qse.kernel") {
            let parsed = k
                .split_once('x')
                .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
            q.kernel = parsed.ok_or_else(|| Error::Parse {
                line: kv.line("qse.kernel"),
                msg: format!("kernel must look like `3x3`, got `{k}`"),
            })?;
        }
        kv.set("qse.pool_win", &mut q.pool_win)?;
        kv.set("qse.pool_stride", &mut q.pool_stride)?;
        kv.set("qse.relu_eps", &mut q.relu_eps)?;
        kv.set("qse.relu_theta", &mut q.relu_theta)?;
        kv.set("qse.bn_eps", &mut q.bn_eps)?;
        kv.set("qse.bn_momentum", &mut q.bn_momentum)?;
        if let Some(p) = kv.raw("qse.later_padding") {
            q.later_padding = parse_padding(p, kv.line("qse.later_padding"))?;
        }
        let f = &mut self.fusion;
        kv.set("fusion.d_model", &mut f.d_model)?;
        kv.set("fusion.heads", &mut f.heads)?;
        kv.set("fusion.layers", &mut f.layers)?;
        kv.set("fusion.ffn_mult", &mut f.ffn_mult)?;
        kv.set("fusion.ln_eps", &mut f.ln_eps)?;
        kv.set("fusion.classifier_hidden", &mut f.classifier_hidden)?;
        let st = &mut self.stft;
        kv.set("stft.sample_rate", &mut st.sample_rate)?;
        kv.set("stft.win_length", &mut st.win_length)?;
        kv.set("stft.hop_length", &mut st.hop_length)?;
        kv.set("stft.fft_size", &mut st.fft_size)?;
        kv.set("stft.mag_floor", &mut st.mag_floor)?;
        kv.set("stft.tau_clip", &mut st.tau_clip)?;
        kv.set("stub.bands", &mut self.stub.bands)?;
        kv.set("stub.dim", &mut self.stub.dim)?;
        kv.set("stub.seed", &mut self.stub.seed)?;
        kv.set("stub.floor", &mut self.stub.floor)?;
        if let Some(r) = kv.list::<f64>("split")? {
            self.split = r.try_into().map_err(|_| Error::Parse {
                line: kv.line("split"),
                msg: "split needs three ratios".into(),
            })?;
        }
        if let Some(c) = kv.raw("zero_channel") {
            self.zero_channel = match c {
                "none" => None,
                other => Some(other.parse()?),
            };
        }
        kv.set("no_cpa", &mut self.no_cpa)?;
        kv.set("freeze_vocal_stage2", &mut self.freeze_vocal_stage2)?;
        Ok(self)
    }

    /// CRC32 of the canonical text form.
    pub fn hash(&self) -> u32 {
        crc32fast::hash(self.to_text().as_bytes())
    }

    /// Number of frequency bins the STFT produces.
    pub fn bins(&self) -> usize {
        self.stft.fft_size / 2 + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = TrainConfig::compact();
        cfg.zero_channel = Some(Channel::TauG);
        cfg.stage1.lr = 0.1 + 0.2;
        cfg.qse.later_padding = FreqPadding::Valid;
        let back = TrainConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(TrainConfig::from_text("").unwrap(), TrainConfig::default());
    }

    #[test]
    fn validation() {
        TrainConfig::default().validate().unwrap();
        TrainConfig::compact().validate().unwrap();
        let mut c = TrainConfig::default();
        c.batch_size = 1;
        assert!(c.validate().is_err());
        c.no_cpa = true;
        c.validate().unwrap();
        let mut c = TrainConfig::default();
        c.split = [0.7, 0.1, 0.1];
        assert!(c.validate().is_err());
        assert!(matches!(
            TrainConfig::from_text("unknown=1"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(TrainConfig::from_text("qse.kernel=3").is_err());
    }
}

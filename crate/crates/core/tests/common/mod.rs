//! Small corpus and model shared by the integration tests.
#![allow(dead_code)]

use qser::corpus::{synth_items, SyntheticSpec};
use qser::train::{features_from_items, Features, TrainConfig};

/// The default four classes, `per_class` short utterances each.
pub fn small_spec(per_class: usize) -> SyntheticSpec {
    let mut spec = SyntheticSpec::default_corpus();
    spec.duration = (0.3, 0.5);
    for c in spec.classes.iter_mut() {
        c.count = per_class;
    }
    spec
}

/// A coarse analysis and a narrow network that train in seconds.
pub fn small_config() -> TrainConfig {
    let mut cfg = TrainConfig::compact();
    cfg.stft.win_length = 256;
    cfg.stft.hop_length = 128;
    cfg.stft.fft_size = 256;
    cfg.stub.bands = 20;
    cfg.stub.dim = 16;
    cfg.qse.channels = vec![1, 2];
    cfg.cpa.d_align = 8;
    cfg.cpa.hidden = 16;
    cfg.fusion.d_model = 8;
    cfg.fusion.heads = 2;
    cfg.fusion.classifier_hidden = 8;
    cfg.batch_size = 8;
    cfg.stage1.epochs = 5;
    cfg.stage2.epochs = 4;
    cfg
}

pub fn small_features(per_class: usize, cfg: &TrainConfig) -> Features {
    let items = synth_items(&small_spec(per_class)).unwrap();
    features_from_items(&items, cfg).unwrap()
}

mod common;

use common::{small_config, small_features, small_spec};
use qser::corpus::{write_wav, Manifest, ManifestEntry, synth_items};
use qser::latent::save_latents;
use qser::train::{extract_features, features_from_manifest, pretrain, train};
use qser::Error;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn stage1_loss_does_not_rise_over_first_epochs() {
    let cfg = small_config();
    let features = small_features(12, &cfg);
    let out = pretrain(&features, &cfg).unwrap();
    let loss = &out.stage1.unwrap().train_loss;
    assert_eq!(loss.len(), 5);
    for w in loss.windows(2) {
        assert!(w[1] <= w[0] * 1.05, "stage-1 loss rose: {loss:?}");
    }
    assert!(loss[4] < loss[0], "{loss:?}");
}

#[test]
fn batch_of_one_is_rejected() {
    let mut cfg = small_config();
    cfg.batch_size = 1;
    assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    let features = small_features(3, &small_config());
    assert!(matches!(pretrain(&features, &cfg), Err(Error::InvalidConfig(_))));
}

#[test]
fn seeded_runs_replay_exactly() {
    let cfg = small_config();
    let features = small_features(8, &cfg);
    let a = train(&features, &cfg, None).unwrap();
    let b = train(&features, &cfg, None).unwrap();
    assert!(!a.log.as_str().is_empty());
    assert_eq!(a.log.as_str(), b.log.as_str());
    assert_eq!(a.checkpoint.to_store().unwrap().to_bytes(), b.checkpoint.to_store().unwrap().to_bytes());
    let mut other = cfg.clone();
    other.seed += 1;
    let c = train(&features, &other, None).unwrap();
    assert_ne!(a.log.as_str(), c.log.as_str());
}

#[test]
fn log_lines_have_five_tab_separated_fields() {
    let cfg = small_config();
    let features = small_features(6, &cfg);
    let out = train(&features, &cfg, None).unwrap();
    let mut stages = std::collections::BTreeSet::new();
    for line in out.log.as_str().lines() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 5, "{line}");
        stages.insert(fields[0].to_string());
        fields[1].parse::<usize>().unwrap();
        fields[2].parse::<u64>().unwrap();
        assert!(fields[3].parse::<f64>().unwrap().is_finite());
        fields[4].parse::<f64>().unwrap();
    }
    assert_eq!(stages.len(), 2);
}

#[test]
fn shuffled_labels_stay_near_chance() {
    let mut cfg = small_config();
    cfg.stage2.epochs = 6;
    let base = small_features(40, &cfg);
    let mut total = 0.0;
    let seeds = [1u64, 2, 3];
    for &seed in &seeds {
        let mut features = base.clone();
        features.labels.shuffle(&mut ChaCha8Rng::seed_from_u64(100 + seed));
        cfg.seed = seed;
        total += train(&features, &cfg, None).unwrap().test.unwrap().wa;
    }
    let wa = total / seeds.len() as f64;
    assert!((wa - 0.25).abs() <= 0.1, "shuffled-label WA {wa}");
}

#[test]
fn stage1_leaves_latent_files_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let items = synth_items(&small_spec(6)).unwrap();
    let mut entries = Vec::new();
    for it in &items {
        let wav = dir.path().join(format!("{}.wav", it.id));
        write_wav(&wav, &it.waveform).unwrap();
        let (_, latent) = extract_features(&it.waveform, &cfg).unwrap();
        let lat = dir.path().join(format!("{}.lat", it.id));
        save_latents(&latent, &lat).unwrap();
        entries.push(ManifestEntry {
            id: it.id.clone(),
            path: wav,
            label: it.label.clone(),
            latent_path: Some(lat),
        });
    }
    let manifest = Manifest::new(entries).unwrap();
    let read_all = || -> Vec<Vec<u8>> {
        manifest
            .entries
            .iter()
            .map(|e| std::fs::read(e.latent_path.as_ref().unwrap()).unwrap())
            .collect()
    };
    let before = read_all();
    let features = features_from_manifest(&manifest, &cfg).unwrap();
    let latents = features.latents.clone();
    let out = pretrain(&features, &cfg).unwrap();
    assert!(out.stage1.unwrap().best_epoch >= 1);
    assert_eq!(read_all(), before);
    assert_eq!(features.latents, latents);
}

//! `qser` command-line driver.
//!
//! Exit codes: 0 on success, 1 on a usage error, 2 on a data or runtime error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use qser::container::ArrayStore;
use qser::corpus::{read_wav, synth_corpus, Manifest, Part, SyntheticSpec};
use qser::dsp::Channel;
use qser::latent::save_latents;
use qser::train::{
    evaluate_checkpoint, extract_features, features_from_manifest, pretrain, train, Checkpoint, EvalMetrics, Features,
    RunOutput, TrainConfig,
};

#[derive(Parser, Debug)]
#[command(name = "qser", version, about = "Quaternion spectrotemporal speech-emotion pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic labelled corpus (WAV files plus manifest.csv).
    Synth {
        /// Spec file; the built-in 4-class corpus when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Built-in spec to use when no file is given: default or phase.
        #[arg(long, default_value = "default")]
        preset: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump quartet features and stub latents for every manifest entry.
    Extract {
        manifest: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Contrastive alignment only (stage 1).
    Pretrain {
        manifest: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Supervised fine-tuning (stage 2), after stage 1 or from `--checkpoint`.
    Train {
        manifest: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Stage-1 checkpoint to start from.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Print WA, UA, macro-F1 and the confusion matrix on one split.
    Eval {
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: Part,
        /// Zero one quartet channel at inference time.
        #[arg(long)]
        zero_channel: Option<Channel>,
    },
    /// Classify a single WAV file.
    Infer {
        wav: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Write utterance-level vectors of one split to an array container.
    DumpEmbeddings {
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: Part,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Training configuration file (key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Zero one quartet channel in every input (retrain-per-variant ablation).
    #[arg(long)]
    zero_channel: Option<Channel>,
    /// Skip contrastive pretraining.
    #[arg(long)]
    no_cpa: bool,
    /// Keep the vocal encoder fixed during stage 2.
    #[arg(long)]
    freeze_vocal_stage2: bool,
}

impl RunArgs {
    fn config(&self) -> anyhow::Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                TrainConfig::from_text(&text)?
            }
            None => TrainConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.zero_channel.is_some() {
            cfg.zero_channel = self.zero_channel;
        }
        cfg.no_cpa |= self.no_cpa;
        cfg.freeze_vocal_stage2 |= self.freeze_vocal_stage2;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Synth { spec, preset, seed, out } => {
            let mut spec = match spec {
                Some(p) => SyntheticSpec::from_text(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?,
                None => match preset.as_str() {
                    "default" => SyntheticSpec::default_corpus(),
                    "phase" => SyntheticSpec::phase_corpus(),
                    other => bail!("unknown preset `{other}` (expected default or phase)"),
                },
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let m = synth_corpus(&spec, &out)?;
            println!("wrote {} utterances to {}", m.len(), out.display());
        }
        Command::Extract { manifest, run } => {
            let cfg = run.config()?;
            let m = Manifest::load(&manifest)?;
            extract(&m, &cfg, &run.out)?;
        }
        Command::Pretrain { manifest, run } => {
            let cfg = run.config()?;
            let features = load_features(&manifest, &cfg)?;
            let output = pretrain(&features, &cfg)?;
            write_run(&output, &run.out, "pretrained.ckpt")?;
            if let Some(r) = &output.stage1 {
                println!("stage 1 best epoch {} (val loss {:.4})", r.best_epoch, r.val_score[r.best_epoch - 1]);
            }
        }
        Command::Train { manifest, run, checkpoint } => {
            let cfg = run.config()?;
            let start = checkpoint.map(Checkpoint::load).transpose()?;
            let features = load_features(&manifest, &cfg)?;
            let output = train(&features, &cfg, start)?;
            write_run(&output, &run.out, "model.ckpt")?;
            if let Some(m) = &output.test {
                println!("test");
                print_metrics(m, &output.checkpoint.labels);
            }
        }
        Command::Eval {
            manifest,
            checkpoint,
            split,
            zero_channel,
        } => {
            let mut ck = Checkpoint::load(&checkpoint)?;
            if zero_channel.is_some() {
                ck.config.zero_channel = zero_channel;
            }
            let features = load_features(&manifest, &ck.config)?;
            check_labels(&ck, &features)?;
            let parts = features.split(&ck.config)?;
            let m = evaluate_checkpoint(&ck, &features, parts.part(split))?;
            print_metrics(&m, &ck.labels);
        }
        Command::Infer { wav, checkpoint } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let w = read_wav(&wav)?;
            let (q, l) = extract_features(&w, &ck.config)?;
            let sample = ck.norm.prepare(&q, &l, 0, ck.config.zero_channel)?;
            let pred = ck.model.predict(&[&sample])?.remove(0);
            println!("{}", ck.labels[pred.label]);
            for (name, p) in ck.labels.iter().zip(&pred.probabilities) {
                println!("{name}\t{p:.6}");
            }
        }
        Command::DumpEmbeddings {
            manifest,
            checkpoint,
            split,
            out,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let features = load_features(&manifest, &ck.config)?;
            check_labels(&ck, &features)?;
            let parts = features.split(&ck.config)?;
            let store = dump_embeddings(&ck, &features, parts.part(split))?;
            store.save(&out)?;
            println!("wrote {} embeddings to {}", parts.part(split).len(), out.display());
        }
    }
    Ok(())
}

fn load_features(manifest: &Path, cfg: &TrainConfig) -> anyhow::Result<Features> {
    let m = Manifest::load(manifest)?;
    log::info!("extracting features for {} utterances", m.len());
    Ok(features_from_manifest(&m, cfg)?)
}

fn check_labels(ck: &Checkpoint, features: &Features) -> anyhow::Result<()> {
    if ck.labels != features.label_names {
        bail!(
            "checkpoint labels {:?} differ from the manifest labels {:?}",
            ck.labels,
            features.label_names
        );
    }
    Ok(())
}

fn write_run(output: &RunOutput, out: &Path, name: &str) -> anyhow::Result<()> {
    fs::create_dir_all(out)?;
    output.checkpoint.save(out.join(name))?;
    fs::write(out.join("train_log.tsv"), output.log.as_str())?;
    fs::write(out.join("config.txt"), output.checkpoint.config.to_text())?;
    let mut split = String::new();
    for part in [Part::Train, Part::Val, Part::Test] {
        split.push_str(&format!("{part}:"));
        for &i in output.split.part(part) {
            split.push(' ');
            split.push_str(&i.to_string());
        }
        split.push('\n');
    }
    fs::write(out.join("split.txt"), split)?;
    log::info!("wrote {}", out.join(name).display());
    Ok(())
}

fn print_metrics(m: &EvalMetrics, labels: &[String]) {
    println!("WA {:.4}", m.wa);
    println!("UA {:.4}", m.ua);
    println!("macroF1 {:.4}", m.macro_f1);
    println!("confusion (rows = truth, columns = prediction)");
    println!("\t{}", labels.join("\t"));
    for (name, row) in labels.iter().zip(m.confusion.rows()) {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        println!("{name}\t{}", cells.join("\t"));
    }
}

/// Writes `quartet/<id>.qarr` and `latent/<id>.lat` per entry and a manifest
/// pointing at the dumped latents.
fn extract(m: &Manifest, cfg: &TrainConfig, out: &Path) -> anyhow::Result<()> {
    let qdir = out.join("quartet");
    let ldir = out.join("latent");
    fs::create_dir_all(&qdir)?;
    fs::create_dir_all(&ldir)?;
    let mut entries = Vec::with_capacity(m.len());
    for e in &m.entries {
        let w = read_wav(&e.path)?;
        let (q, l) = extract_features(&w, cfg)?;
        let mut store = ArrayStore::new();
        let dims = [q.frames(), q.bins()];
        for ch in Channel::ALL {
            store.insert_f64(ch.array_name(), &dims, q.plane(ch).iter().copied().collect())?;
        }
        store.insert_u8("mask", &[q.frames()], q.mask.iter().map(|&v| v as u8).collect())?;
        store.save(qdir.join(format!("{}.qarr", e.id)))?;
        let lpath = ldir.join(format!("{}.lat", e.id));
        save_latents(&l, &lpath)?;
        let mut entry = e.clone();
        entry.latent_path = Some(lpath);
        entries.push(entry);
    }
    Manifest::new(entries)?.save(out.join("manifest.csv"))?;
    println!("extracted {} utterances to {}", m.len(), out.display());
    Ok(())
}

fn dump_embeddings(ck: &Checkpoint, features: &Features, indices: &[usize]) -> anyhow::Result<ArrayStore> {
    if indices.is_empty() {
        bail!("the requested split is empty");
    }
    let samples = features.samples(indices, &ck.norm, &ck.config)?;
    let mut parts = Vec::new();
    for chunk in samples.chunks(ck.config.batch_size.max(1)) {
        let refs: Vec<_> = chunk.iter().collect();
        parts.push(ck.model.embeddings(&refs)?);
    }
    let mut store = ArrayStore::new();
    let fields: [(&str, fn(&qser::train::Embeddings) -> &ndarray::Array2<f64>); 6] = [
        ("z_vocal", |e| &e.z_vocal),
        ("z_latent", |e| &e.z_latent),
        ("u", |e| &e.u),
        ("v", |e| &e.v),
        ("fused", |e| &e.fused),
        ("logits", |e| &e.logits),
    ];
    for (name, get) in fields {
        let width = get(&parts[0]).ncols();
        let data: Vec<f64> = parts.iter().flat_map(|p| get(p).iter().copied()).collect();
        store.insert_f64(name, &[indices.len(), width], data)?;
    }
    let ids: Vec<&str> = indices.iter().map(|&i| features.ids[i].as_str()).collect();
    store.insert_text("ids", &ids.join("\n"));
    let labels: Vec<f64> = indices.iter().map(|&i| features.labels[i] as f64).collect();
    store.insert_f64("labels", &[indices.len()], labels)?;
    store.insert_text("label_names", &ck.labels.join("\n"));
    Ok(store)
}

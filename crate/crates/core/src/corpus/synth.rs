use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{write_wav, Manifest, ManifestEntry};
use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::par;
use crate::rng::{stream_rng, STREAM_SYNTH};

/// Generator parameters of one class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassSpec {
    pub name: String,
    /// Hz
    pub f0_start: f64,
    /// Hz per second
    pub f0_slope: f64,
    /// Hz
    pub am_rate: f64,
    /// In [0, 1].
    pub am_depth: f64,
    /// In [0, 1); quadratic harmonic phase that disperses each pulse.
    pub pulse_asymmetry: f64,
    pub count: usize,
}

/// A corpus of harmonic pulse trains with class-specific pitch movement,
/// amplitude modulation and pulse shape.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub classes: Vec<ClassSpec>,
    /// Seconds, drawn uniformly per utterance.
    pub duration: (f64, f64),
    /// Standard deviation of the additive Gaussian noise.
    pub noise_floor: f64,
    /// Relative per-utterance jitter of `f0_start`.
    pub f0_jitter: f64,
    /// Harmonics are kept below this frequency.
    pub max_harmonic_hz: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

fn class(name: &str, f0_start: f64, f0_slope: f64, am_rate: f64, pulse_asymmetry: f64, count: usize) -> ClassSpec {
    ClassSpec {
        name: name.into(),
        f0_start,
        f0_slope,
        am_rate,
        am_depth: 0.6,
        pulse_asymmetry,
        count,
    }
}

impl SyntheticSpec {
    /// Rising and falling pitch crossed with fast and slow modulation; the
    /// pulse shape differs between the rising and falling pairs.
    pub fn default_corpus() -> Self {
        SyntheticSpec {
            classes: vec![
                class("rise_fast", 150.0, 80.0, 8.0, 0.1, 72),
                class("rise_slow", 150.0, 80.0, 2.0, 0.1, 72),
                class("fall_fast", 250.0, -80.0, 8.0, 0.6, 72),
                class("fall_slow", 250.0, -80.0, 2.0, 0.6, 72),
            ],
            duration: (0.8, 2.0),
            noise_floor: 0.003,
            f0_jitter: 0.08,
            max_harmonic_hz: 4000.0,
            sample_rate: 16_000,
            seed: 7,
        }
    }

    /// Classes share modulation and pitch register and differ only in pitch
    /// direction and pulse shape. The low register leaves neighbouring
    /// harmonics unresolved by the analysis window, so pulse dispersion shows
    /// up in the group delay; rising and falling classes sweep the same pitch
    /// range over a typical utterance, and harmonics run up to near Nyquist so
    /// no band edge moves with the pitch.
    pub fn phase_corpus() -> Self {
        SyntheticSpec {
            classes: vec![
                class("rise_sharp", 61.0, 20.0, 4.0, 0.0, 72),
                class("rise_skewed", 61.0, 20.0, 4.0, 0.8, 72),
                class("fall_sharp", 89.0, -20.0, 4.0, 0.0, 72),
                class("fall_skewed", 89.0, -20.0, 4.0, 0.8, 72),
            ],
            max_harmonic_hz: 7900.0,
            ..Self::default_corpus()
        }
    }

    pub fn total(&self) -> usize {
        self.classes.iter().map(|c| c.count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.classes.is_empty() {
            return bad("at least one class is required".into());
        }
        let (lo, hi) = self.duration;
        if !(lo > 0.0) || !(hi >= lo) {
            return bad(format!("duration range ({lo}, {hi}) must be positive and ordered"));
        }
        if !(self.noise_floor >= 0.0) || !(0.0..1.0).contains(&self.f0_jitter) || self.sample_rate == 0 {
            return bad("noise_floor >= 0, f0_jitter in [0, 1) and a positive sample rate are required".into());
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.name.is_empty() || c.name.contains(['/', ',', '\n']) {
                return bad(format!("class {i} needs a plain, non-empty name"));
            }
            if !(0.0..1.0).contains(&c.pulse_asymmetry) || !(0.0..=1.0).contains(&c.am_depth) || !(c.am_rate >= 0.0) {
                return bad(format!("class {i}: pulse_asymmetry in [0, 1), am_depth in [0, 1], am_rate >= 0"));
            }
            let lowest = c.f0_start * (1.0 - self.f0_jitter) + (c.f0_slope * hi).min(0.0);
            if !(lowest > 20.0) || c.f0_start * (1.0 + self.f0_jitter) + c.f0_slope.max(0.0) * hi >= self.max_harmonic_hz {
                return bad(format!("class {i}: f0 leaves the (20 Hz, max_harmonic_hz) range"));
            }
            if c.count == 0 {
                return bad(format!("class {i} has zero utterances"));
            }
            for (j, d) in self.classes.iter().enumerate().take(i) {
                if d.name == c.name {
                    return bad(format!("classes {j} and {i} share a name"));
                }
                let same = (d.f0_start, d.f0_slope, d.am_rate, d.am_depth, d.pulse_asymmetry)
                    == (c.f0_start, c.f0_slope, c.am_rate, c.am_depth, c.pulse_asymmetry);
                if same {
                    return bad(format!("classes {j} and {i} have identical generator parameters"));
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "sample_rate={}", self.sample_rate);
        let _ = writeln!(s, "duration_min={}", self.duration.0);
        let _ = writeln!(s, "duration_max={}", self.duration.1);
        let _ = writeln!(s, "noise_floor={}", self.noise_floor);
        let _ = writeln!(s, "f0_jitter={}", self.f0_jitter);
        let _ = writeln!(s, "max_harmonic_hz={}", self.max_harmonic_hz);
        for (i, c) in self.classes.iter().enumerate() {
            let _ = writeln!(s, "class.{i}.name={}", c.name);
            let _ = writeln!(s, "class.{i}.f0_start={}", c.f0_start);
            let _ = writeln!(s, "class.{i}.f0_slope={}", c.f0_slope);
            let _ = writeln!(s, "class.{i}.am_rate={}", c.am_rate);
            let _ = writeln!(s, "class.{i}.am_depth={}", c.am_depth);
            let _ = writeln!(s, "class.{i}.pulse_asymmetry={}", c.pulse_asymmetry);
            let _ = writeln!(s, "class.{i}.count={}", c.count);
        }
        s
    }

    /// Parses spec text. Global keys default to [`SyntheticSpec::default_corpus`];
    /// when any `class.N.*` key is present the classes come entirely from the
    /// file, numbered from 0 without gaps, and every class parameter must be given.
    pub fn from_text(text: &str) -> Result<Self> {
        let kv = KvMap::parse(text)?;
        const GLOBAL: [&str; 7] = [
            "seed",
            "sample_rate",
            "duration_min",
            "duration_max",
            "noise_floor",
            "f0_jitter",
            "max_harmonic_hz",
        ];
        const PARAMS: [&str; 7] = ["name", "f0_start", "f0_slope", "am_rate", "am_depth", "pulse_asymmetry", "count"];
        let class_key = |k: &str| -> Option<(usize, String)> {
            let rest = k.strip_prefix("class.")?;
            let (n, p) = rest.split_once('.')?;
            Some((n.parse().ok()?, p.to_string()))
        };
        kv.reject_unknown(|k| GLOBAL.contains(&k) || class_key(k).is_some_and(|(_, p)| PARAMS.contains(&p.as_str())))?;
        let mut spec = Self::default_corpus();
        kv.set("seed", &mut spec.seed)?;
        kv.set("sample_rate", &mut spec.sample_rate)?;
        kv.set("duration_min", &mut spec.duration.0)?;
        kv.set("duration_max", &mut spec.duration.1)?;
        kv.set("noise_floor", &mut spec.noise_floor)?;
        kv.set("f0_jitter", &mut spec.f0_jitter)?;
        kv.set("max_harmonic_hz", &mut spec.max_harmonic_hz)?;
        let n_classes = kv.keys().filter_map(class_key).map(|(n, _)| n + 1).max().unwrap_or(0);
        if n_classes > 0 {
            spec.classes = (0..n_classes)
                .map(|i| {
                    let req = |p: &str| -> Result<String> {
                        kv.raw(&format!("class.{i}.{p}"))
                            .map(str::to_string)
                            .ok_or_else(|| Error::Parse {
                                line: 0,
                                msg: format!("missing class.{i}.{p}"),
                            })
                    };
                    let num = |p: &str| -> Result<f64> {
                        req(p)?;
                        Ok(kv.get(&format!("class.{i}.{p}"))?.expect("present"))
                    };
                    Ok(ClassSpec {
                        name: req("name")?,
                        f0_start: num("f0_start")?,
                        f0_slope: num("f0_slope")?,
                        am_rate: num("am_rate")?,
                        am_depth: num("am_depth")?,
                        pulse_asymmetry: num("pulse_asymmetry")?,
                        count: {
                            req("count")?;
                            kv.get(&format!("class.{i}.count"))?.expect("present")
                        },
                    })
                })
                .collect::<Result<Vec<_>>>()?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Per-utterance draws that vary within a class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UtteranceDraw {
    pub duration: f64,
    pub f0_scale: f64,
    pub am_phase: f64,
}

/// Raised-cosine roll-off over the top quarter of the band, so harmonics fade
/// out smoothly as the pitch moves instead of switching off at `max_hz`.
fn taper(f: f64, max_hz: f64) -> f64 {
    let knee = 0.75 * max_hz;
    if f <= knee {
        1.0
    } else if f >= max_hz {
        0.0
    } else {
        0.5 * (1.0 + (PI * (f - knee) / (max_hz - knee)).cos())
    }
}

/// Renders one utterance of class `c`. Harmonic `k` of `K` carries amplitude
/// `1/k` (tapered near the band edge) and phase `-pi * asymmetry * k^2 / K`,
/// which spreads the pulse so that higher harmonics arrive later within each
/// period.
pub fn render<R: Rng + ?Sized>(spec: &SyntheticSpec, c: &ClassSpec, draw: UtteranceDraw, rng: &mut R) -> Result<Waveform> {
    let sr = spec.sample_rate as f64;
    let n = (draw.duration * sr).round() as usize;
    let f0_start = c.f0_start * draw.f0_scale;
    let f0_peak = f0_start.max(f0_start + c.f0_slope * draw.duration);
    let harmonics = ((spec.max_harmonic_hz / f0_peak).floor() as usize).max(1);
    let phase_offsets: Vec<f64> = (1..=harmonics)
        .map(|k| -PI * c.pulse_asymmetry * (k * k) as f64 / harmonics as f64)
        .collect();
    let noise = Normal::new(0.0, spec.noise_floor).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let gain = 0.5 / ((1..=harmonics).map(|k| 1.0 / k as f64).sum::<f64>() * (1.0 + c.am_depth));
    let ramp = (0.01 * sr) as usize;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / sr;
        let theta = 2.0 * PI * (f0_start * t + 0.5 * c.f0_slope * t * t);
        let f0 = f0_start + c.f0_slope * t;
        let mut s = 0.0;
        for (k, phi) in phase_offsets.iter().enumerate() {
            let k1 = (k + 1) as f64;
            s += taper(k1 * f0, spec.max_harmonic_hz) * (k1 * theta + phi).cos() / k1;
        }
        let am = 1.0 + c.am_depth * (2.0 * PI * c.am_rate * t + draw.am_phase).sin();
        let edge = (i.min(n - 1 - i) as f64 / ramp as f64).min(1.0);
        out.push(gain * am * edge * s + noise.sample(rng));
    }
    Waveform::new(out, spec.sample_rate)
}

/// One generated utterance.
#[derive(Clone, Debug)]
pub struct SynthItem {
    pub id: String,
    pub label: String,
    pub class: usize,
    pub waveform: Waveform,
}

/// Generates the corpus in memory. Each utterance draws from its own seeded
/// stream, so the output does not depend on thread scheduling.
pub fn synth_items(spec: &SyntheticSpec) -> Result<Vec<SynthItem>> {
    spec.validate()?;
    let mut jobs = Vec::with_capacity(spec.total());
    for (ci, c) in spec.classes.iter().enumerate() {
        for i in 0..c.count {
            jobs.push((ci, i, jobs.len() as u64));
        }
    }
    par::try_map(&jobs, |&(ci, i, index)| {
        let c = &spec.classes[ci];
        let mut rng = stream_rng(spec.seed, (STREAM_SYNTH << 32) | index);
        let draw = UtteranceDraw {
            duration: rng.random_range(spec.duration.0..=spec.duration.1),
            f0_scale: 1.0 + spec.f0_jitter * rng.random_range(-1.0..=1.0),
            am_phase: rng.random_range(0.0..2.0 * PI),
        };
        Ok(SynthItem {
            id: format!("{}_{i:03}", c.name),
            label: c.name.clone(),
            class: ci,
            waveform: render(spec, c, draw, &mut rng)?,
        })
    })
}

/// Writes `wav/<id>.wav`, `manifest.csv` and `spec.txt` under `out_dir`
/// and returns the manifest (paths relative to `out_dir`).
pub fn synth_corpus(spec: &SyntheticSpec, out_dir: &Path) -> Result<Manifest> {
    let items = synth_items(spec)?;
    let wav_dir = out_dir.join("wav");
    std::fs::create_dir_all(&wav_dir)?;
    par::try_map(&items, |it| write_wav(wav_dir.join(format!("{}.wav", it.id)), &it.waveform))?;
    let manifest = Manifest::new(
        items
            .iter()
            .map(|it| ManifestEntry {
                id: it.id.clone(),
                path: PathBuf::from("wav").join(format!("{}.wav", it.id)),
                label: it.label.clone(),
                latent_path: None,
            })
            .collect(),
    )?;
    manifest.save(out_dir.join("manifest.csv"))?;
    std::fs::write(out_dir.join("spec.txt"), spec.to_text())?;
    Ok(manifest)
}

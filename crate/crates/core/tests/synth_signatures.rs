//! The generator's class parameters show up in the quartet with the intended
//! signs: pitch direction in the instantaneous frequency, modulation rate in
//! the log-magnitude rate and pulse dispersion in the group delay.

use qser::corpus::{synth_items, ClassSpec, SyntheticSpec};
use qser::dsp::{extract_quartet, QuartetField, StftConfig};

/// Frame-wise peak-normalised energy weights.
fn weights(q: &QuartetField, t: usize) -> Vec<f64> {
    let row = q.m.row(t);
    let top = row.iter().copied().fold(f64::MIN, f64::max);
    row.iter().map(|m| (2.0 * (m - top)).exp()).collect()
}

/// Energy-weighted mean of the frame-to-frame change of f_inst, Hz/s.
fn finst_drift(q: &QuartetField, cfg: &StftConfig) -> f64 {
    let (mut s, mut n) = (0.0, 0.0);
    for t in 2..q.frames() {
        if !(q.mask[t] && q.mask[t - 1]) {
            continue;
        }
        let (a, b) = (weights(q, t), weights(q, t - 1));
        for k in 1..q.bins() - 1 {
            let w = (a[k] * b[k]).sqrt();
            s += w * (q.f_inst[[t, k]] - q.f_inst[[t - 1, k]]) / cfg.hop_seconds();
            n += w;
        }
    }
    s / n
}

/// Mean f_inst change along the strongest bin between 50 and 600 Hz.
fn fundamental_drift(q: &QuartetField, cfg: &StftConfig) -> f64 {
    let lo = (50.0 / cfg.bin_frequency(1)).ceil() as usize;
    let hi = (600.0 / cfg.bin_frequency(1)).floor() as usize;
    let track: Vec<f64> = (0..q.frames())
        .filter(|&t| q.mask[t] && t > 0)
        .map(|t| {
            let k = (lo..=hi).max_by(|&a, &b| q.m[[t, a]].total_cmp(&q.m[[t, b]])).unwrap();
            q.f_inst[[t, k]]
        })
        .collect();
    let d: Vec<f64> = track.windows(2).map(|w| (w[1] - w[0]) / cfg.hop_seconds()).collect();
    d.iter().sum::<f64>() / d.len() as f64
}

/// Energy-weighted mean |rho|.
fn mean_abs_rho(q: &QuartetField) -> f64 {
    let (mut s, mut n) = (0.0, 0.0);
    for t in 1..q.frames() {
        if !q.mask[t] {
            continue;
        }
        for (k, w) in weights(q, t).into_iter().enumerate() {
            s += w * q.rho[[t, k]].abs();
            n += w;
        }
    }
    s / n
}

/// Mean over frames of the energy-weighted regression slope of tau_g on
/// frequency, s/Hz. Later arrival of high harmonics raises it.
fn tau_skew(q: &QuartetField, cfg: &StftConfig) -> f64 {
    let mut slopes = Vec::new();
    for t in 0..q.frames() {
        if !q.mask[t] {
            continue;
        }
        let w = weights(q, t);
        let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for k in 1..q.bins() - 1 {
            let (x, y) = (cfg.bin_frequency(k), q.tau_g[[t, k]]);
            sw += w[k];
            sx += w[k] * x;
            sy += w[k] * y;
            sxx += w[k] * x * x;
            sxy += w[k] * x * y;
        }
        let var = sxx / sw - (sx / sw).powi(2);
        if var > 0.0 {
            slopes.push((sxy / sw - sx * sy / (sw * sw)) / var);
        }
    }
    slopes.iter().sum::<f64>() / slopes.len() as f64
}

fn per_class(spec: &SyntheticSpec, stat: impl Fn(&QuartetField) -> f64) -> Vec<f64> {
    let cfg = StftConfig::default();
    let items = synth_items(spec).unwrap();
    (0..spec.classes.len())
        .map(|c| {
            let v: Vec<f64> = items
                .iter()
                .filter(|it| it.class == c)
                .map(|it| stat(&extract_quartet(&it.waveform, &cfg).unwrap()))
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect()
}

fn with_count(mut spec: SyntheticSpec, n: usize) -> SyntheticSpec {
    spec.classes.iter_mut().for_each(|c| c.count = n);
    spec
}

#[test]
fn pitch_direction_sets_the_finst_drift_sign() {
    let spec = with_count(SyntheticSpec::default_corpus(), 50);
    let cfg = StftConfig::default();
    let drift = per_class(&spec, |q| finst_drift(q, &cfg));
    for (c, d) in spec.classes.iter().zip(&drift) {
        assert_eq!(c.f0_slope.signum(), d.signum(), "{}: drift {d}", c.name);
    }
}

#[test]
fn fundamental_track_follows_a_steep_chirp() {
    let cfg = StftConfig::default();
    let mut spec = SyntheticSpec::default_corpus();
    spec.duration = (0.8, 1.2);
    let chirp = |name: &str, f0_start, f0_slope| ClassSpec {
        name: name.into(),
        f0_start,
        f0_slope,
        am_rate: 0.0,
        am_depth: 0.0,
        pulse_asymmetry: 0.0,
        count: 6,
    };
    spec.classes = vec![chirp("up", 150.0, 200.0), chirp("down", 450.0, -200.0)];
    let drift = per_class(&spec, |q| fundamental_drift(q, &cfg));
    assert!(drift[0] > 0.0 && drift[1] < 0.0, "{drift:?}");
}

#[test]
fn faster_modulation_raises_mean_abs_rho() {
    let spec = with_count(SyntheticSpec::default_corpus(), 50);
    let rho = per_class(&spec, mean_abs_rho);
    let by_name = |n: &str| rho[spec.classes.iter().position(|c| c.name == n).unwrap()];
    assert!(by_name("rise_fast") > by_name("rise_slow"), "{rho:?}");
    assert!(by_name("fall_fast") > by_name("fall_slow"), "{rho:?}");
}

#[test]
fn pulse_asymmetry_raises_the_group_delay_slope() {
    let spec = with_count(SyntheticSpec::phase_corpus(), 50);
    let cfg = StftConfig::default();
    let skew = per_class(&spec, |q| tau_skew(q, &cfg));
    let by_name = |n: &str| skew[spec.classes.iter().position(|c| c.name == n).unwrap()];
    assert!(by_name("rise_skewed") > by_name("rise_sharp"), "{skew:?}");
    assert!(by_name("fall_skewed") > by_name("fall_sharp"), "{skew:?}");
}

use std::path::Path;

use crate::dsp::{Waveform, ANALYSIS_RATE};
use crate::error::{Error, Result};

const SCALE: f64 = 32768.0;

fn map_hound(e: hound::Error, path: &Path, reading: bool) -> Error {
    match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        // Short reads surface as I/O errors from the decoder.
        hound::Error::IoError(io) if reading => Error::CorruptHeader(format!("{}: {io}", path.display())),
        hound::Error::IoError(io) => Error::Io(io),
        hound::Error::Unsupported => Error::UnsupportedFormat(format!("{}: unsupported WAV encoding", path.display())),
        other => Error::CorruptHeader(format!("{}: {other}", path.display())),
    }
}

/// Reads a 16-bit PCM mono WAV, scales samples by 1/32768 and resamples to
/// the analysis rate.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(e, path, true))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {} channels, expected mono",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {}-bit {:?}, expected 16-bit PCM",
            path.display(),
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| map_hound(e, path, true))?;
    Ok(Waveform::new(samples, spec.sample_rate)?.resampled(ANALYSIS_RATE))
}

/// Writes 16-bit PCM mono, rounding and clipping to the i16 range.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(e, path, false))?;
    for &s in w.samples() {
        let q = (s * SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        writer.write_sample(q).map_err(|e| map_hound(e, path, false))?;
    }
    writer.finalize().map_err(|e| map_hound(e, path, false))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(path: &Path, channels: u16, bits: u16, rate: u32, samples: &[i32]) {
        let spec = hound::WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: bits,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for &s in samples {
            if bits == 16 {
                w.write_sample(s as i16).unwrap();
            } else {
                w.write_sample(s).unwrap();
            }
        }
        w.finalize().unwrap();
    }

    #[test]
    fn scale_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("half.wav");
        write_raw(&p, 1, 16, 16_000, &[16384]);
        assert_eq!(read_wav(&p).unwrap().samples(), &[0.5]);

        let samples: Vec<f64> = (0..800).map(|i| (i as f64 * 0.01).sin() * 0.9).collect();
        let w = Waveform::new(samples.clone(), 16_000).unwrap();
        let p = dir.path().join("rt.wav");
        write_wav(&p, &w).unwrap();
        let back = read_wav(&p).unwrap();
        assert_eq!(back.sample_rate(), 16_000);
        for (a, b) in samples.iter().zip(back.samples()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn rejects_unsupported_and_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stereo.wav");
        write_raw(&p, 2, 16, 16_000, &[1, 2]);
        assert!(matches!(read_wav(&p), Err(Error::UnsupportedFormat(_))));
        let p = dir.path().join("24.wav");
        write_raw(&p, 1, 24, 16_000, &[1]);
        assert!(matches!(read_wav(&p), Err(Error::UnsupportedFormat(_))));
        let p = dir.path().join("junk.wav");
        std::fs::write(&p, b"RIFF\x04\x00\x00\x00WAVEjunk").unwrap();
        let r = read_wav(&p);
        assert!(matches!(r, Err(Error::CorruptHeader(_))), "{r:?}");
        assert!(matches!(read_wav(dir.path().join("missing.wav")), Err(Error::FileNotFound(_))));
    }

    #[test]
    fn resamples_to_analysis_rate() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("8k.wav");
        write_raw(&p, 1, 16, 8_000, &vec![1000; 800]);
        let w = read_wav(&p).unwrap();
        assert_eq!(w.sample_rate(), ANALYSIS_RATE);
        assert_eq!(w.len(), 1600);
    }
}

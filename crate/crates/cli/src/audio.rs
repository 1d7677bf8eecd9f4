use std::path::Path;

use anyhow::{bail, Context, Result};
use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::output::atomic_write;

/// Decoded mono audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

/// Reads integer PCM or 32-bit float WAV. Multichannel files keep the first
/// channel.
pub fn read_wav(path: &Path) -> Result<Audio> {
    let mut reader = WavReader::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    if channels == 0 {
        bail!("{} declares zero channels", path.display());
    }
    if channels > 1 {
        log::warn!("{}: {channels} channels, using the first", path.display());
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()?,
        (SampleFormat::Int, bits @ 1..=32) => {
            let scale = 1.0 / f64::from(1u32 << (bits - 1));
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) * scale))
                .collect::<Result<_, _>>()?
        }
        (format, bits) => bail!("{}: unsupported sample format {format:?}/{bits}", path.display()),
    };
    let samples = interleaved.into_iter().step_by(channels).collect();
    Ok(Audio {
        samples,
        sample_rate: spec.sample_rate,
    })
}

/// Writes mono 32-bit float WAV via a temporary file and rename.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    atomic_write(path, |file| {
        let mut writer = WavWriter::new(std::io::BufWriter::new(file), spec)?;
        for &s in samples {
            writer.write_sample(s as f32)?;
        }
        writer.finalize()?;
        Ok(())
    })
}

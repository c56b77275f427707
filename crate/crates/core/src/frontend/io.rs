//! WAV input/output and the binary feature container.
//!
//! Feature files are little-endian: the 8-byte magic `LPCCFEAT`, a `u32`
//! format version, `u32` frame count `T`, `u32` dimension, then `T × dim`
//! `f64` values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{AudioBuffer, ObservationSequence, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};
use crate::FORMAT_VERSION;

const FEATURE_MAGIC: &[u8; 8] = b"LPCCFEAT";

/// Reads a mono 16-bit PCM WAV file and normalizes samples to `[-1, 1]`.
pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Format(format!(
            "{}: expected mono 16-bit PCM, found {} channel(s), {} bits",
            path.display(),
            spec.channels,
            spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<Result<Vec<_>, _>>()?;
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Writes mono 16-bit PCM; samples are scaled by 32767 and rounded.
pub fn write_wav(path: &Path, audio: &AudioBuffer) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE_HZ,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::new(BufWriter::new(File::create(path)?), spec)?;
    for &s in audio.samples() {
        writer.write_sample((s * 32767.0).round().clamp(-32768.0, 32767.0) as i16)?;
    }
    writer.finalize()?;
    Ok(())
}

pub fn write_features<W: Write>(mut w: W, obs: &ObservationSequence) -> Result<()> {
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(obs.len() as u32).to_le_bytes())?;
    w.write_all(&(obs.dim() as u32).to_le_bytes())?;
    for v in obs.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_features<R: Read>(mut r: R) -> Result<ObservationSequence> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != FEATURE_MAGIC {
        return Err(Error::Format("not a feature file".into()));
    }
    let mut word = [0u8; 4];
    let mut next_u32 = |r: &mut R| -> Result<u32> {
        r.read_exact(&mut word)?;
        Ok(u32::from_le_bytes(word))
    };
    let version = next_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported feature file version {version}")));
    }
    let frames = next_u32(&mut r)? as usize;
    let dim = next_u32(&mut r)? as usize;
    let mut data = Vec::with_capacity(frames * dim);
    let mut value = [0u8; 8];
    for _ in 0..frames * dim {
        r.read_exact(&mut value)?;
        data.push(f64::from_le_bytes(value));
    }
    ObservationSequence::new(dim, data)
}

pub fn save_features(path: &Path, obs: &ObservationSequence) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_features(&mut w, obs)?;
    w.flush()?;
    Ok(())
}

pub fn load_features(path: &Path) -> Result<ObservationSequence> {
    read_features(BufReader::new(File::open(path)?))
}

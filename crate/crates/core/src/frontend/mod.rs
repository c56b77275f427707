//! Acoustic and prosodic feature extraction.
//!
//! Audio is cut into 30 ms Hamming-windowed frames every 5 ms. Each frame is
//! reduced to a 12th-order LPC polynomial by the autocorrelation method and
//! converted to 12 cepstral coefficients (c1..c12, no c0). A parallel pass
//! over the same frames produces an F0/log-energy track for the prosodic layer.

mod framing;
pub mod io;
mod lpc;
mod pitch;

pub use framing::{frame_signal, frame_count, hamming_window, hop_length, window_length, Frame};
pub use lpc::{autocorrelate, levinson_durbin, lpc_to_lpcc, Lpc};
pub use pitch::{extract_prosody, ProsodyConfig, ProsodyFrame};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample rate every input must use; there is no resampler.
pub const SAMPLE_RATE_HZ: u32 = 12_000;
/// LPC analysis order and LPCC dimension.
pub const LPC_ORDER: usize = 12;
pub const WINDOW_SECONDS: f64 = 0.030;
pub const HOP_SECONDS: f64 = 0.005;

/// Mono audio normalized to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz != SAMPLE_RATE_HZ {
            return Err(Error::UnsupportedSampleRate {
                found: sample_rate_hz,
                expected: SAMPLE_RATE_HZ,
            });
        }
        if samples.iter().any(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::InvalidAudio);
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }
}

/// One LPCC vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; LPC_ORDER]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// A `T × dim` row-major observation matrix.
///
/// LPCC sequences use `dim = 12`; the HMM code accepts any dimension so the
/// same type carries the 3-d prosodic segment streams and small test data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSequence {
    dim: usize,
    data: Vec<f64>,
}

impl ObservationSequence {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if data.is_empty() {
            return Err(Error::Empty("observation sequence"));
        }
        if data.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: data.len() % dim,
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation sequence"));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    pub fn from_features(frames: &[FeatureVector]) -> Result<Self> {
        Self::new(LPC_ORDER, frames.iter().flat_map(|f| f.0).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of frames `T`.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Per-dimension mean over all frames.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for row in self.rows() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        let n = self.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

/// Prosodic summary of one supra-state segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProsodicVector {
    /// Mean voiced F0 in Hz, `0` when the whole segment is unvoiced.
    pub f0_hz: f64,
    /// Mean natural-log frame energy.
    pub log_energy: f64,
    pub duration_frames: u32,
    /// Frames of the segment that carried an F0 estimate.
    pub voiced_frames: u32,
}

impl ProsodicVector {
    pub const DIM: usize = 3;

    pub fn to_array(&self) -> [f64; 3] {
        [self.f0_hz, self.log_energy, f64::from(self.duration_frames)]
    }
}

/// LPCC analysis result with bookkeeping about which frames survived.
#[derive(Debug, Clone)]
pub struct FeatureExtraction {
    pub observations: ObservationSequence,
    /// Indices (into the full frame grid) of the frames kept in `observations`.
    pub kept_frames: Vec<usize>,
    pub total_frames: usize,
}

impl FeatureExtraction {
    pub fn dropped(&self) -> usize {
        self.total_frames - self.kept_frames.len()
    }
}

/// Full LPCC pipeline. Silent and unstable frames are dropped.
pub fn extract_features(audio: &AudioBuffer) -> Result<FeatureExtraction> {
    let frames = frame_signal(audio)?;
    let total_frames = frames.len();
    let mut kept_frames = Vec::with_capacity(total_frames);
    let mut data = Vec::with_capacity(total_frames * LPC_ORDER);
    for (index, frame) in frames.iter().enumerate() {
        let r = autocorrelate(&frame.values, LPC_ORDER);
        let lpc = match levinson_durbin(&r, LPC_ORDER) {
            Ok(lpc) => lpc,
            Err(Error::SilentFrame | Error::UnstableFrame { .. }) => continue,
            Err(e) => return Err(e),
        };
        let cep = lpc_to_lpcc(&lpc.coeffs);
        if cep.0.iter().any(|c| !c.is_finite()) {
            continue;
        }
        kept_frames.push(index);
        data.extend_from_slice(&cep.0);
    }
    if kept_frames.is_empty() {
        return Err(Error::NoUsableFrames);
    }
    Ok(FeatureExtraction {
        observations: ObservationSequence::new(LPC_ORDER, data)?,
        kept_frames,
        total_frames,
    })
}

/// Acoustic observations plus the frame-aligned prosody track of one utterance.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub observations: ObservationSequence,
    pub prosody: Vec<ProsodyFrame>,
    pub dropped_frames: usize,
}

impl Utterance {
    /// Runs both analyses and keeps prosody only for frames that survived LPC analysis.
    pub fn analyze(audio: &AudioBuffer, prosody_config: &ProsodyConfig) -> Result<Self> {
        let features = extract_features(audio)?;
        let track = extract_prosody(audio, prosody_config)?;
        let prosody = features.kept_frames.iter().map(|&i| track[i]).collect();
        Ok(Self {
            dropped_frames: features.dropped(),
            observations: features.observations,
            prosody,
        })
    }
}

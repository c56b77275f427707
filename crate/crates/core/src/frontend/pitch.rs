//! Frame-synchronous F0 and energy tracking.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{autocorrelate, frame_signal, levinson_durbin, AudioBuffer, LPC_ORDER};
use crate::error::Result;

/// Floor added to frame energy before taking the log.
pub const ENERGY_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProsodyConfig {
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    /// Minimum normalized autocorrelation peak for a frame to count as voiced.
    pub voicing_threshold: f64,
    /// Frames crossing zero on more than this fraction of sample pairs are
    /// treated as unvoiced (fricative noise); 1 disables the check.
    pub max_zero_crossing_rate: f64,
    /// Length of the running median applied to the F0 track (unvoiced frames
    /// count as 0); 1 disables smoothing.
    pub median_frames: usize,
}

impl Default for ProsodyConfig {
    fn default() -> Self {
        Self {
            f0_min_hz: 50.0,
            f0_max_hz: 500.0,
            voicing_threshold: 0.3,
            max_zero_crossing_rate: 0.25,
            median_frames: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProsodyFrame {
    /// 0 for unvoiced frames.
    pub f0_hz: f64,
    pub log_energy: f64,
}

impl ProsodyFrame {
    pub fn is_voiced(&self) -> bool {
        self.f0_hz > 0.0
    }
}

/// Per-frame F0 by autocorrelation peak picking, plus `ln(r[0] + ε)`.
///
/// Uses the same 30 ms / 5 ms Hamming frames as the LPC analysis so the two
/// streams line up index for index. Energy comes from the windowed frame;
/// the pitch autocorrelation is taken on the LPC residual of the unwindowed
/// samples, so formant ringing does not masquerade as pitch.
pub fn extract_prosody(audio: &AudioBuffer, config: &ProsodyConfig) -> Result<Vec<ProsodyFrame>> {
    let frames = frame_signal(audio)?;
    let sr = f64::from(audio.sample_rate_hz());
    let min_lag = (sr / config.f0_max_hz).floor().max(1.0) as usize;
    let max_lag = (sr / config.f0_min_hz).ceil() as usize;
    let window = frames[0].values.len();
    let fft_len = (window + max_lag + 1).next_power_of_two();

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(fft_len);
    let inverse = planner.plan_fft_inverse(fft_len);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_len];
    let mut scratch = vec![Complex::new(0.0, 0.0); forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len())];

    let mut out = Vec::with_capacity(frames.len());
    for frame in &frames {
        let segment = &audio.samples()[frame.start_index..frame.start_index + window];
        let residual = lpc_residual(&frame.values, segment);
        for (b, &x) in buf.iter_mut().zip(residual.iter().chain(std::iter::repeat(&0.0))) {
            *b = Complex::new(x, 0.0);
        }
        forward.process_with_scratch(&mut buf, &mut scratch);
        for b in buf.iter_mut() {
            *b = Complex::new(b.norm_sqr(), 0.0);
        }
        inverse.process_with_scratch(&mut buf, &mut scratch);
        let scale = 1.0 / fft_len as f64;
        let r0: f64 = frame.values.iter().map(|x| x * x).sum();
        let e0: f64 = residual.iter().map(|x| x * x).sum();
        let r = |lag: usize| buf[lag].re * scale;

        let log_energy = (r0 + ENERGY_EPSILON).ln();
        let mut f0_hz = 0.0;
        if e0 > 0.0 && zero_crossing_rate(segment) <= config.max_zero_crossing_rate {
            let upper = max_lag.min(window - 1);
            let mut best_lag = min_lag;
            let mut best = f64::NEG_INFINITY;
            for lag in min_lag..=upper {
                let v = r(lag);
                if v > best {
                    best = v;
                    best_lag = lag;
                }
            }
            if best / e0 >= config.voicing_threshold {
                let mut period = best_lag as f64;
                if best_lag > min_lag && best_lag < upper {
                    let (y0, y1, y2) = (r(best_lag - 1), best, r(best_lag + 1));
                    let denom = y0 - 2.0 * y1 + y2;
                    if denom < 0.0 {
                        period += (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5);
                    }
                }
                f0_hz = (sr / period).clamp(config.f0_min_hz, config.f0_max_hz);
            }
        }
        out.push(ProsodyFrame { f0_hz, log_energy });
    }
    median_smooth(&mut out, config.median_frames);
    Ok(out)
}

/// Running median of the F0 track. Removes isolated spurious voicing and
/// fills single-frame dropouts inside voiced runs.
fn median_smooth(track: &mut [ProsodyFrame], width: usize) {
    if width <= 1 {
        return;
    }
    let half = width / 2;
    let raw: Vec<f64> = track.iter().map(|f| f.f0_hz).collect();
    let mut window = Vec::with_capacity(width);
    for (t, frame) in track.iter_mut().enumerate() {
        window.clear();
        window.extend_from_slice(&raw[t.saturating_sub(half)..(t + half + 1).min(raw.len())]);
        window.sort_by(f64::total_cmp);
        frame.f0_hz = window[window.len() / 2];
    }
}

fn zero_crossing_rate(segment: &[f64]) -> f64 {
    let crossings = segment.windows(2).filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0)).count();
    crossings as f64 / (segment.len() - 1) as f64
}

/// Raised-cosine low-pass kernel applied to the residual; spreads each
/// excitation pulse over a few samples so non-integer periods still line up.
const SMOOTHING_TAPS: usize = 5;

/// Inverse-filters the unwindowed `segment` with the LPC polynomial of its
/// windowed version, then low-passes the residual. The residual keeps the
/// excitation pulses at full height across the frame while the formant
/// ringing is removed. Segments whose LPC fit fails are returned unchanged.
fn lpc_residual(windowed: &[f64], segment: &[f64]) -> Vec<f64> {
    let Ok(lpc) = levinson_durbin(&autocorrelate(windowed, LPC_ORDER), LPC_ORDER) else {
        return segment.to_vec();
    };
    let residual: Vec<f64> = (LPC_ORDER..segment.len())
        .map(|n| segment[n] + lpc.coeffs.iter().enumerate().map(|(i, a)| a * segment[n - 1 - i]).sum::<f64>())
        .collect();
    let kernel: Vec<f64> = (0..SMOOTHING_TAPS)
        .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * (k + 1) as f64 / (SMOOTHING_TAPS + 1) as f64).cos())
        .collect();
    let half = SMOOTHING_TAPS / 2;
    (0..residual.len())
        .map(|n| {
            kernel
                .iter()
                .enumerate()
                .filter_map(|(k, w)| (n + k).checked_sub(half).and_then(|i| residual.get(i)).map(|x| w * x))
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::SAMPLE_RATE_HZ;

    fn pulse_train(f0: f64, len: usize, amp: f64) -> AudioBuffer {
        let period = f64::from(SAMPLE_RATE_HZ) / f0;
        let mut x = vec![0.0; len];
        let mut t = 0.0;
        while (t as usize) < len {
            x[t as usize] = amp;
            t += period;
        }
        AudioBuffer::new(x, SAMPLE_RATE_HZ).unwrap()
    }

    #[test]
    fn pulse_train_at_100_hz() {
        let track = extract_prosody(&pulse_train(100.0, 12_000, 0.5), &ProsodyConfig::default()).unwrap();
        let voiced: Vec<_> = track.iter().filter(|f| f.is_voiced()).collect();
        assert!(voiced.len() > track.len() / 2);
        for f in voiced {
            assert!((f.f0_hz - 100.0).abs() <= 2.0, "{}", f.f0_hz);
        }
    }

    /// Pulse train smoothed by a short raised-cosine bump, closer to a glottal source.
    fn smooth_pulses(f0: f64, len: usize) -> AudioBuffer {
        let raw = pulse_train(f0, len, 1.0);
        let bump: Vec<f64> = (0..9).map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / 8.0).cos()).collect();
        let mut y = vec![0.0; len];
        for (n, &x) in raw.samples().iter().enumerate() {
            if x != 0.0 {
                for (k, b) in bump.iter().enumerate() {
                    if n + k < len {
                        y[n + k] += 0.2 * b;
                    }
                }
            }
        }
        AudioBuffer::new(y, SAMPLE_RATE_HZ).unwrap()
    }

    #[test]
    fn non_integer_period_is_interpolated() {
        let track = extract_prosody(&smooth_pulses(173.0, 12_000), &ProsodyConfig::default()).unwrap();
        let voiced: Vec<f64> = track.iter().filter(|f| f.is_voiced()).map(|f| f.f0_hz).collect();
        let mean = voiced.iter().sum::<f64>() / voiced.len() as f64;
        assert!((mean - 173.0).abs() < 3.0, "{mean} {voiced:?}");
    }

    #[test]
    fn silence_is_unvoiced_with_floor_energy() {
        let audio = AudioBuffer::new(vec![0.0; 3000], SAMPLE_RATE_HZ).unwrap();
        let track = extract_prosody(&audio, &ProsodyConfig::default()).unwrap();
        for f in track {
            assert_eq!(f.f0_hz, 0.0);
            assert_eq!(f.log_energy, ENERGY_EPSILON.ln());
        }
    }

    #[test]
    fn doubling_amplitude_shifts_energy_only() {
        let cfg = ProsodyConfig::default();
        let a = extract_prosody(&pulse_train(140.0, 6000, 0.25), &cfg).unwrap();
        let b = extract_prosody(&pulse_train(140.0, 6000, 0.5), &cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.f0_hz, y.f0_hz);
            assert!((y.log_energy - x.log_energy - 4f64.ln()).abs() < 1e-6);
        }
    }

    #[test]
    fn white_noise_is_mostly_unvoiced() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let x = (0..12_000).map(|_| rng.random_range(-0.5..0.5)).collect();
        let audio = AudioBuffer::new(x, SAMPLE_RATE_HZ).unwrap();
        let track = extract_prosody(&audio, &ProsodyConfig::default()).unwrap();
        let voiced = track.iter().filter(|f| f.is_voiced()).count();
        assert!(voiced < track.len() / 10, "{voiced}");
    }
}

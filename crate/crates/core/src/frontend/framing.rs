use std::f64::consts::PI;

use super::{AudioBuffer, HOP_SECONDS, WINDOW_SECONDS};
use crate::error::{Error, Result};

/// A Hamming-windowed analysis frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub start_index: usize,
    pub values: Vec<f64>,
}

pub fn window_length(sample_rate_hz: u32) -> usize {
    (WINDOW_SECONDS * f64::from(sample_rate_hz)).round() as usize
}

pub fn hop_length(sample_rate_hz: u32) -> usize {
    (HOP_SECONDS * f64::from(sample_rate_hz)).round() as usize
}

/// `floor((len - window) / hop) + 1`, or 0 when the signal is shorter than a window.
pub fn frame_count(len: usize, window: usize, hop: usize) -> usize {
    if len < window {
        0
    } else {
        (len - window) / hop + 1
    }
}

/// `w[n] = 0.54 - 0.46 cos(2πn / (L - 1))`.
pub fn hamming_window(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / denom).cos())
        .collect()
}

/// Cuts the signal into windowed frames. A trailing partial window is dropped.
pub fn frame_signal(audio: &AudioBuffer) -> Result<Vec<Frame>> {
    let window = window_length(audio.sample_rate_hz());
    let hop = hop_length(audio.sample_rate_hz());
    let samples = audio.samples();
    let count = frame_count(samples.len(), window, hop);
    if count == 0 {
        return Err(Error::UtteranceTooShort {
            samples: samples.len(),
            window,
        });
    }
    let w = hamming_window(window);
    Ok((0..count)
        .map(|f| {
            let start = f * hop;
            let values = samples[start..start + window]
                .iter()
                .zip(&w)
                .map(|(x, w)| x * w)
                .collect();
            Frame {
                start_index: start,
                values,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::SAMPLE_RATE_HZ;
    use proptest::prelude::*;

    fn buffer(samples: Vec<f64>) -> AudioBuffer {
        AudioBuffer::new(samples, SAMPLE_RATE_HZ).unwrap()
    }

    #[test]
    fn window_and_hop_at_12k() {
        assert_eq!(window_length(SAMPLE_RATE_HZ), 360);
        assert_eq!(hop_length(SAMPLE_RATE_HZ), 60);
    }

    #[test]
    fn one_second_gives_195_frames() {
        let frames = frame_signal(&buffer(vec![0.1; 12_000])).unwrap();
        assert_eq!(frames.len(), 195);
        assert!(frames.iter().all(|f| f.values.len() == 360));
        assert_eq!(frames[194].start_index, 194 * 60);
    }

    #[test]
    fn zeros_stay_zero() {
        let frames = frame_signal(&buffer(vec![0.0; 1000])).unwrap();
        assert!(frames.iter().all(|f| f.values.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn impulse_lands_on_window_endpoint() {
        let mut samples = vec![0.0; 1000];
        samples[0] = 1.0;
        let frames = frame_signal(&buffer(samples)).unwrap();
        assert!((frames[0].values[0] - 0.08).abs() < 1e-15);
        assert!(frames[0].values[1..].iter().all(|&v| v == 0.0));
        assert!(frames[1..].iter().all(|f| f.values.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn short_signal_is_rejected() {
        assert!(matches!(
            frame_signal(&buffer(vec![0.0; 359])),
            Err(Error::UtteranceTooShort { samples: 359, window: 360 })
        ));
    }

    #[test]
    fn hamming_is_symmetric_with_unit_peak() {
        let w = hamming_window(361);
        assert!((w[180] - 1.0).abs() < 1e-15);
        for n in 0..361 {
            assert!((w[n] - w[360 - n]).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn frame_count_matches_hop_arithmetic(len in 360usize..5000) {
            let frames = frame_signal(&buffer(vec![0.0; len])).unwrap();
            prop_assert_eq!(frames.len(), (len - 360) / 60 + 1);
        }
    }
}

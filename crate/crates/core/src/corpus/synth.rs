//! Source-filter speech synthesizer used as a stand-in corpus.
//!
//! Each speaker has a vocal-tract length factor, per-phone formant offsets,
//! a glottal tilt, a base F0, a speaking rate and a level. Sentences are fixed
//! phone strings; repetitions differ by small seeded perturbations.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{write_manifest, CorpusManifest, UtteranceRecord};
use super::{Condition, Gender, Session, MAX_SENTENCES, TEST_REPETITIONS, TRAIN_REPETITIONS};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::frontend::io::write_wav;
use crate::frontend::{AudioBuffer, SAMPLE_RATE_HZ};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phone {
    pub name: &'static str,
    pub voiced: bool,
    /// Reference formant frequencies in Hz.
    pub formants: [f64; 4],
    pub gain: f64,
    pub duration_ms: f64,
}

const fn vowel(name: &'static str, f1: f64, f2: f64, f3: f64) -> Phone {
    Phone { name, voiced: true, formants: [f1, f2, f3, 3500.0], gain: 1.0, duration_ms: 110.0 }
}

pub const PHONES: [Phone; 13] = [
    vowel("a", 730.0, 1090.0, 2440.0),
    vowel("i", 270.0, 2290.0, 3010.0),
    vowel("u", 300.0, 870.0, 2240.0),
    vowel("e", 530.0, 1840.0, 2480.0),
    vowel("o", 570.0, 840.0, 2410.0),
    vowel("ae", 660.0, 1720.0, 2410.0),
    vowel("er", 490.0, 1350.0, 1690.0),
    Phone { name: "m", voiced: true, formants: [250.0, 1100.0, 2300.0, 3300.0], gain: 0.4, duration_ms: 70.0 },
    Phone { name: "l", voiced: true, formants: [360.0, 1300.0, 2700.0, 3400.0], gain: 0.6, duration_ms: 70.0 },
    Phone { name: "s", voiced: false, formants: [1800.0, 3800.0, 4600.0, 5300.0], gain: 0.25, duration_ms: 90.0 },
    Phone { name: "sh", voiced: false, formants: [1600.0, 2500.0, 3400.0, 4400.0], gain: 0.3, duration_ms: 90.0 },
    Phone { name: "f", voiced: false, formants: [1200.0, 2400.0, 3800.0, 5000.0], gain: 0.15, duration_ms: 80.0 },
    Phone { name: "h", voiced: false, formants: [700.0, 1700.0, 2600.0, 3600.0], gain: 0.2, duration_ms: 70.0 },
];

const VOWELS: std::ops::Range<usize> = 0..7;
const CONSONANTS: std::ops::Range<usize> = 7..13;
const BANDWIDTHS_HZ: [f64; 4] = [70.0, 100.0, 140.0, 200.0];
/// Highest formant allowed, safely below Nyquist.
const MAX_FORMANT_HZ: f64 = 5600.0;
const EDGE_SILENCE_SECONDS: f64 = 0.05;
const NOISE_FLOOR_DB: f64 = -45.0;
const TRANSITION_SECONDS: f64 = 0.02;
const BLOCK: usize = 60;

/// One phone of a sentence and whether it carries a pitch accent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SentencePhone {
    pub phone: usize,
    pub stressed: bool,
}

/// Fixed phone string of a sentence: consonant-vowel syllables, 5 or 6 of them.
pub fn sentence_phones(sentence_id: u32) -> Vec<SentencePhone> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0x5E47_E4CE, &[u64::from(sentence_id)]));
    let syllables = rng.random_range(5..=6);
    let mut out = Vec::with_capacity(2 * syllables);
    for s in 0..syllables {
        out.push(SentencePhone {
            phone: rng.random_range(CONSONANTS),
            stressed: false,
        });
        out.push(SentencePhone {
            phone: rng.random_range(VOWELS),
            stressed: s == 1 || rng.random_bool(0.25),
        });
    }
    out
}

/// Parameters of the shouted-speech transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShoutParams {
    pub f0_ratio: f64,
    pub gain_db: f64,
    /// Multiplies the glottal low-pass pole radius; below 1 flattens the spectrum.
    pub tilt_factor: f64,
    pub duration_ratio: f64,
}

impl Default for ShoutParams {
    fn default() -> Self {
        Self {
            f0_ratio: 1.5,
            gain_db: 10.0,
            tilt_factor: 0.85,
            duration_ratio: 0.85,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpeakerProfile {
    pub seed: u64,
    pub gender: Gender,
    pub base_f0_hz: f64,
    /// Per phone, `(frequency, bandwidth)` of each formant pole pair in Hz.
    pub vocal_tract: Vec<Vec<(f64, f64)>>,
    /// Glottal low-pass pole radius.
    pub glottal_pole: f64,
    /// Neutral RMS level in dB relative to full scale.
    pub energy_db: f64,
    /// Phone duration multiplier.
    pub tempo: f64,
    /// F0 multiplier on stressed vowels.
    pub accent_f0: f64,
    /// Level multiplier on stressed vowels.
    pub accent_level: f64,
    /// Total relative F0 fall from the start to the end of an utterance.
    pub declination: f64,
    /// Extra duration multiplier on vowels, setting the speaker's rhythm.
    pub vowel_length: f64,
}

impl SynthSpeakerProfile {
    /// Draws a speaker. `separation` scales how far speakers' vocal tracts
    /// spread around the gender reference.
    pub fn generate(seed: u64, gender: Gender, separation: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f0_range, length_center) = match gender {
            Gender::Male => (90.0..150.0, 1.0),
            Gender::Female => (165.0..250.0, 1.15),
        };
        let base_f0_hz = rng.random_range(f0_range);
        let length_factor = length_center * (1.0 + separation * rng.random_range(-0.08..0.08));
        let bandwidth_factor = rng.random_range(0.8..1.25);
        let offset = Normal::new(0.0, 0.04 * separation).expect("finite spread");
        let vocal_tract = PHONES
            .iter()
            .map(|phone| {
                phone
                    .formants
                    .iter()
                    .zip(BANDWIDTHS_HZ)
                    .map(|(&f, bw)| {
                        let freq = (f * length_factor * (1.0 + offset.sample(&mut rng))).clamp(150.0, MAX_FORMANT_HZ);
                        (freq, bw * bandwidth_factor)
                    })
                    .collect()
            })
            .collect();
        Self {
            seed,
            gender,
            base_f0_hz,
            vocal_tract,
            glottal_pole: rng.random_range(0.86..0.96),
            energy_db: rng.random_range(-38.0..-30.0),
            tempo: rng.random_range(0.85..1.15),
            accent_f0: rng.random_range(1.04..1.25),
            accent_level: rng.random_range(1.1..1.6),
            declination: rng.random_range(0.04..0.24),
            vowel_length: rng.random_range(0.8..1.25),
        }
    }
}

/// Two-pole resonator with unit DC gain.
#[derive(Debug, Clone, Copy, Default)]
struct Resonator {
    a1: f64,
    a2: f64,
    gain: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn tune(&mut self, freq: f64, bandwidth: f64) {
        let sr = f64::from(SAMPLE_RATE_HZ);
        let r = (-std::f64::consts::PI * bandwidth / sr).exp();
        let theta = 2.0 * std::f64::consts::PI * freq / sr;
        self.a1 = -2.0 * r * theta.cos();
        self.a2 = r * r;
        self.gain = 1.0 + self.a1 + self.a2;
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.gain * x - self.a1 * self.y1 - self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Runs `x` through the time-varying resonator cascade, then a DC blocker.
fn vocal_tract_filter(x: &[f64], coefficients: &[(usize, [Resonator; 4])]) -> Vec<f64> {
    let mut bank = [Resonator::default(); 4];
    let mut next = 0;
    let mut dc = (0.0, 0.0);
    let mut out = Vec::with_capacity(x.len());
    for (n, &v) in x.iter().enumerate() {
        while next < coefficients.len() && coefficients[next].0 == n {
            for (r, c) in bank.iter_mut().zip(&coefficients[next].1) {
                r.a1 = c.a1;
                r.a2 = c.a2;
                r.gain = c.gain;
            }
            next += 1;
        }
        let mut y = v;
        for r in bank.iter_mut() {
            y = r.step(y);
        }
        let blocked = y - dc.0 + 0.995 * dc.1;
        dc = (y, blocked);
        out.push(blocked);
    }
    out
}

/// Renders one utterance with the default shout parameters.
pub fn synth_utterance(profile: &SynthSpeakerProfile, sentence_id: u32, condition: Condition, repetition_seed: u64) -> AudioBuffer {
    synth_utterance_with(profile, sentence_id, condition, repetition_seed, &ShoutParams::default())
}

/// Renders one utterance. Deterministic in all arguments; the shouted
/// rendering of a repetition seed shares every random draw with the neutral one.
pub fn synth_utterance_with(
    profile: &SynthSpeakerProfile,
    sentence_id: u32,
    condition: Condition,
    repetition_seed: u64,
    shout: &ShoutParams,
) -> AudioBuffer {
    let sr = f64::from(SAMPLE_RATE_HZ);
    let shouted = condition == Condition::Shouted;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(profile.seed, &[repetition_seed, u64::from(sentence_id)]));

    let f0_scale = if shouted { shout.f0_ratio } else { 1.0 };
    let dur_scale = profile.tempo * if shouted { shout.duration_ratio } else { 1.0 };
    let gain_db = profile.energy_db + rng.random_range(-1.5..1.5) + if shouted { shout.gain_db } else { 0.0 };
    let pole = profile.glottal_pole * if shouted { shout.tilt_factor } else { 1.0 };
    let f0_base = profile.base_f0_hz * (1.0 + 0.03 * rng.sample::<f64, _>(StandardNormal)) * f0_scale;

    let phones = sentence_phones(sentence_id);
    let durations: Vec<usize> = phones
        .iter()
        .map(|p| {
            let phone = &PHONES[p.phone];
            let rhythm = if VOWELS.contains(&p.phone) { profile.vowel_length } else { 1.0 };
            let ms = phone.duration_ms * rhythm * dur_scale * rng.random_range(0.92..1.08);
            (ms / 1000.0 * sr).round() as usize
        })
        .collect();
    let speech_len: usize = durations.iter().sum();
    let edge = (EDGE_SILENCE_SECONDS * sr) as usize;

    // Excitation of each phone on its own track; the vocal tract is linear, so
    // every track can be filtered separately and mixed at its phone's level.
    let mut starts = Vec::with_capacity(phones.len());
    let mut tracks = Vec::with_capacity(phones.len());
    let mut phase = 0.0f64;
    let mut t0 = 0;
    for (p, &len) in phones.iter().zip(&durations) {
        let phone = &PHONES[p.phone];
        let accent = if p.stressed { profile.accent_f0 } else { 1.0 };
        let mut track = vec![0.0; speech_len];
        let mut glottal = (0.0f64, 0.0f64);
        for (n, x) in track[t0..t0 + len].iter_mut().enumerate() {
            *x = if phone.voiced {
                let progress = (t0 + n) as f64 / speech_len as f64;
                let f0 = f0_base * accent * (1.0 + profile.declination * (0.5 - progress));
                phase += f0 / sr;
                let pulse = if phase >= 1.0 {
                    phase -= 1.0;
                    1.0
                } else {
                    0.0
                };
                let g = pulse + 2.0 * pole * glottal.0 - pole * pole * glottal.1;
                glottal = (g, glottal.0);
                g
            } else {
                rng.sample::<f64, _>(StandardNormal)
            };
        }
        starts.push(t0);
        tracks.push(track);
        t0 += len;
    }

    // Formant trajectory: each phone's targets, approached linearly from the
    // previous phone's over the first 20 ms, updated every block.
    let transition = (TRANSITION_SECONDS * sr) as usize;
    let mut coefficients = Vec::with_capacity(speech_len / BLOCK + phones.len());
    for (i, p) in phones.iter().enumerate() {
        let tract = &profile.vocal_tract[p.phone];
        let prev = &profile.vocal_tract[phones[i.saturating_sub(1)].phone];
        for n in (0..durations[i]).step_by(BLOCK) {
            let w = (n as f64 / transition as f64).min(1.0);
            let mut bank = [Resonator::default(); 4];
            for (r, (a, b)) in bank.iter_mut().zip(prev.iter().zip(tract)) {
                r.tune(a.0 + w * (b.0 - a.0), a.1 + w * (b.1 - a.1));
            }
            coefficients.push((starts[i] + n, bank));
        }
    }

    let mut speech = vec![0.0; speech_len];
    for ((p, track), (&start, &len)) in phones.iter().zip(tracks).zip(starts.iter().zip(&durations)) {
        let filtered = vocal_tract_filter(&track, &coefficients);
        let rms = (filtered[start..start + len].iter().map(|x| x * x).sum::<f64>() / len.max(1) as f64).sqrt();
        if rms > 0.0 {
            let stress = if p.stressed { profile.accent_level } else { 1.0 };
            let level = PHONES[p.phone].gain * stress / rms;
            for (y, x) in speech.iter_mut().zip(&filtered) {
                *y += level * x;
            }
        }
    }

    let rms = (speech.iter().map(|x| x * x).sum::<f64>() / speech.len() as f64).sqrt();
    let target = 10f64.powf(gain_db / 20.0);
    let scale = if rms > 0.0 { target / rms } else { 0.0 };
    let noise = target * 10f64.powf(NOISE_FLOOR_DB / 20.0);

    let mut samples = Vec::with_capacity(speech_len + 2 * edge);
    samples.resize(edge, 0.0);
    samples.extend(speech.iter().map(|x| x * scale));
    samples.resize(speech_len + 2 * edge, 0.0);
    for x in samples.iter_mut() {
        *x = (*x + noise * rng.sample::<f64, _>(StandardNormal)).clamp(-0.999, 0.999);
    }
    AudioBuffer::new(samples, SAMPLE_RATE_HZ).expect("synthesized samples are finite and in range")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_speakers: u32,
    pub sentences: u32,
    pub seed: u64,
    pub separation: f64,
    pub include_shouted: bool,
    pub shout: ShoutParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_speakers: 30,
            sentences: MAX_SENTENCES,
            seed: 1,
            separation: 1.0,
            include_shouted: true,
            shout: ShoutParams::default(),
        }
    }
}

impl SynthConfig {
    /// Odd speaker ids are male, even ids female.
    pub fn speaker(&self, speaker_id: u32) -> SynthSpeakerProfile {
        let gender = if speaker_id % 2 == 1 { Gender::Male } else { Gender::Female };
        SynthSpeakerProfile::generate(derive_seed(self.seed, &[u64::from(speaker_id)]), gender, self.separation)
    }

    /// Seed shared by the neutral and shouted renderings of one test repetition.
    pub fn repetition_seed(&self, session: Session, repetition: u32) -> u64 {
        derive_seed(self.seed, &[session as u64, u64::from(repetition)])
    }

    /// Every record of the protocol, in manifest order.
    pub fn records(&self) -> Vec<UtteranceRecord> {
        let conditions: &[Condition] = if self.include_shouted { Condition::ALL } else { &[Condition::Neutral] };
        let mut out = Vec::new();
        for speaker_id in 1..=self.n_speakers {
            let gender = self.speaker(speaker_id).gender;
            for sentence_id in 1..=self.sentences {
                let mut push = |session: Session, condition: Condition, repetition: u32| {
                    out.push(UtteranceRecord {
                        path: PathBuf::from(format!(
                            "wav/spk{speaker_id:02}/s{sentence_id}_{session}_{condition}_r{repetition}.wav"
                        )),
                        speaker_id,
                        gender,
                        sentence_id,
                        session,
                        condition,
                        repetition,
                    });
                };
                for r in 1..=TRAIN_REPETITIONS {
                    push(Session::Train, Condition::Neutral, r);
                }
                for &c in conditions {
                    for r in 1..=TEST_REPETITIONS {
                        push(Session::Test, c, r);
                    }
                }
            }
        }
        out
    }

    pub fn render(&self, record: &UtteranceRecord) -> AudioBuffer {
        let profile = self.speaker(record.speaker_id);
        synth_utterance_with(
            &profile,
            record.sentence_id,
            record.condition,
            self.repetition_seed(record.session, record.repetition),
            &self.shout,
        )
    }
}

/// Writes every utterance under `out_dir` plus `out_dir/manifest.tsv`.
pub fn synth_corpus(config: &SynthConfig, out_dir: &Path) -> Result<CorpusManifest> {
    if config.n_speakers == 0 || !(1..=MAX_SENTENCES).contains(&config.sentences) {
        return Err(Error::Protocol(format!(
            "need at least one speaker and 1..{MAX_SENTENCES} sentences"
        )));
    }
    let records = config.records();
    records.par_iter().try_for_each(|record| -> Result<()> {
        let path = out_dir.join(&record.path);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        write_wav(&path, &config.render(record))
    })?;
    let manifest = CorpusManifest::new(out_dir.to_path_buf(), records)?;
    write_manifest(&out_dir.join("manifest.tsv"), &manifest)?;
    log::info!(
        "synthesized {} utterances for {} speakers into {}",
        manifest.records.len(),
        config.n_speakers,
        out_dir.display()
    );
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{extract_features, extract_prosody, ProsodyConfig};

    fn mean_voiced_f0(audio: &AudioBuffer) -> f64 {
        let track = extract_prosody(audio, &ProsodyConfig::default()).unwrap();
        let voiced: Vec<f64> = track.iter().filter(|f| f.is_voiced()).map(|f| f.f0_hz).collect();
        voiced.iter().sum::<f64>() / voiced.len() as f64
    }

    #[test]
    fn sentences_are_fixed_and_distinct() {
        assert_eq!(sentence_phones(3), sentence_phones(3));
        let all: Vec<_> = (1..=8).map(sentence_phones).collect();
        for i in 0..8 {
            for j in i + 1..8 {
                assert_ne!(all[i], all[j]);
            }
        }
    }

    #[test]
    fn profiles_respect_ranges() {
        let config = SynthConfig::default();
        for id in 1..=30 {
            let p = config.speaker(id);
            assert!((90.0..=250.0).contains(&p.base_f0_hz));
            for tract in &p.vocal_tract {
                for &(f, bw) in tract {
                    let r = (-std::f64::consts::PI * bw / f64::from(SAMPLE_RATE_HZ)).exp();
                    assert!(r < 1.0 && f > 0.0 && f < 6000.0);
                }
            }
        }
        assert_ne!(config.speaker(1), config.speaker(3));
    }

    #[test]
    fn rendering_is_deterministic() {
        let p = SynthConfig::default().speaker(4);
        let a = synth_utterance(&p, 2, Condition::Shouted, 7);
        let b = synth_utterance(&p, 2, Condition::Shouted, 7);
        assert_eq!(a.samples(), b.samples());
        let c = synth_utterance(&p, 2, Condition::Shouted, 8);
        assert_ne!(a.samples(), c.samples());
    }

    #[test]
    fn shouting_raises_pitch_and_level() {
        let config = SynthConfig::default();
        for id in [1, 2, 7, 12] {
            let p = config.speaker(id);
            for rep in 0..3 {
                let neutral = synth_utterance(&p, 1 + rep as u32, Condition::Neutral, rep);
                let shouted = synth_utterance(&p, 1 + rep as u32, Condition::Shouted, rep);
                let ratio = mean_voiced_f0(&shouted) / mean_voiced_f0(&neutral);
                assert!(ratio > 1.35 && ratio < 1.65, "speaker {id}: ratio {ratio}");
                let energy = |a: &AudioBuffer| a.samples().iter().map(|x| x * x).sum::<f64>() / a.len() as f64;
                let gain_db = 10.0 * (energy(&shouted) / energy(&neutral)).log10();
                // neutral and shouted also differ in length, edge silence weighs differently
                assert!(gain_db > 8.0 && gain_db < 12.0, "{gain_db}");
                assert!(shouted.len() < neutral.len());
            }
        }
    }

    #[test]
    fn speakers_are_separated_in_lpcc_space() {
        let config = SynthConfig::default();
        let means: Vec<Vec<f64>> = (1..=6)
            .map(|id| {
                let audio = synth_utterance(&config.speaker(id), 1, Condition::Neutral, 0);
                extract_features(&audio).unwrap().observations.mean()
            })
            .collect();
        for i in 0..means.len() {
            for j in i + 1..means.len() {
                let d: f64 = means[i].iter().zip(&means[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(d >= 0.05, "speakers {} and {}: {d}", i + 1, j + 1);
            }
        }
    }

    #[test]
    fn protocol_records() {
        let config = SynthConfig::default();
        let records = config.records();
        assert_eq!(records.iter().filter(|r| r.session == Session::Train).count(), 1200);
        assert_eq!(records.iter().filter(|r| r.session == Session::Test).count(), 1920);
    }
}

//! Suprasegmental layer: supra-state mapping, prosodic segment sequences,
//! the ergodic supra model and score fusion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{ObservationSequence, ProsodicVector, ProsodyFrame};
use crate::hmm::{emissions_from_groups, init_ergodic, viterbi2, Chmm1Model, Chmm2Model, TrainConfig, TrainReport};
use crate::hmm::chmm1::train_chmm1;

/// Default number of supra-states.
pub const SUPRA_STATES: usize = 3;

/// Partition of acoustic states into supra-states. Group `p` holds the
/// acoustic states summarized by supra-state `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupraMapping {
    groups: Vec<Vec<usize>>,
}

impl Default for SupraMapping {
    /// `{0,1,2}`, `{3,4,5}`, `{6,7,8}`.
    fn default() -> Self {
        Self::contiguous(9, SUPRA_STATES).expect("9 states split into 3 groups")
    }
}

impl SupraMapping {
    /// Validates that `groups` partition `0..n_states`.
    pub fn new(groups: Vec<Vec<usize>>, n_states: usize) -> Result<Self> {
        let mapping = Self { groups };
        mapping.validate(n_states)?;
        Ok(mapping)
    }

    /// Splits `0..n_states` into `n_supra` consecutive, near-equal runs.
    pub fn contiguous(n_states: usize, n_supra: usize) -> Result<Self> {
        if n_supra == 0 || n_supra > n_states {
            return Err(Error::InvalidModel(format!(
                "cannot split {n_states} acoustic states into {n_supra} supra-states"
            )));
        }
        let groups = (0..n_supra)
            .map(|p| (p * n_states / n_supra..(p + 1) * n_states / n_supra).collect())
            .collect();
        Self::new(groups, n_states)
    }

    pub fn validate(&self, n_states: usize) -> Result<()> {
        let mut seen = vec![false; n_states];
        for group in &self.groups {
            if group.is_empty() {
                return Err(Error::InvalidModel("empty supra-state group".into()));
            }
            for &s in group {
                if s >= n_states || seen[s] {
                    return Err(Error::InvalidModel(format!(
                        "supra mapping is not a partition of {n_states} states (state {s})"
                    )));
                }
                seen[s] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::InvalidModel(format!("state {missing} is in no supra-state group")));
        }
        Ok(())
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn n_supra(&self) -> usize {
        self.groups.len()
    }

    pub fn n_states(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Supra-state of acoustic state `state`.
    pub fn supra_of(&self, state: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&state))
    }

    fn lookup(&self) -> Vec<usize> {
        let mut table = vec![0; self.n_states()];
        for (p, group) in self.groups.iter().enumerate() {
            for &s in group {
                table[s] = p;
            }
        }
        table
    }
}

/// One maximal run of a constant supra-state in an aligned utterance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupraSegment {
    pub supra_state: usize,
    pub start_frame: usize,
    pub vector: ProsodicVector,
}

/// Collapses an acoustic state path into supra segments and summarizes the
/// prosody of each one.
pub fn segments_from_path(path: &[usize], mapping: &SupraMapping, prosody: &[ProsodyFrame]) -> Result<Vec<SupraSegment>> {
    if path.len() != prosody.len() {
        return Err(Error::LengthMismatch {
            what: "state path vs prosody frames",
            left: path.len(),
            right: prosody.len(),
        });
    }
    let lookup = mapping.lookup();
    let mut segments = Vec::new();
    let mut start = 0;
    while start < path.len() {
        let supra = *lookup
            .get(path[start])
            .ok_or_else(|| Error::InvalidModel(format!("state {} outside the supra mapping", path[start])))?;
        let mut end = start + 1;
        while end < path.len() && lookup.get(path[end]) == Some(&supra) {
            end += 1;
        }
        segments.push(SupraSegment {
            supra_state: supra,
            start_frame: start,
            vector: summarize(&prosody[start..end]),
        });
        start = end;
    }
    Ok(segments)
}

fn summarize(frames: &[ProsodyFrame]) -> ProsodicVector {
    let voiced: Vec<f64> = frames.iter().filter(|f| f.is_voiced()).map(|f| f.f0_hz).collect();
    let f0_hz = if voiced.is_empty() {
        0.0
    } else {
        voiced.iter().sum::<f64>() / voiced.len() as f64
    };
    let log_energy = frames.iter().map(|f| f.log_energy).sum::<f64>() / frames.len() as f64;
    ProsodicVector {
        f0_hz,
        log_energy,
        duration_frames: frames.len() as u32,
        voiced_frames: voiced.len() as u32,
    }
}

/// Aligns `obs` with the acoustic model and turns the best path into supra segments.
pub fn align_to_supra(
    model: &Chmm2Model,
    mapping: &SupraMapping,
    obs: &ObservationSequence,
    prosody: &[ProsodyFrame],
) -> Result<Vec<SupraSegment>> {
    if obs.len() != prosody.len() {
        return Err(Error::LengthMismatch {
            what: "observations vs prosody frames",
            left: obs.len(),
            right: prosody.len(),
        });
    }
    mapping.validate(model.n_states())?;
    let (path, _) = viterbi2(model, obs)?;
    segments_from_path(&path, mapping, prosody)
}

/// How segment summaries become supra observation vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupraFeatures {
    /// `(f0 Hz, log energy, duration frames)` as measured.
    Raw,
    /// F0 in semitones relative to the utterance's mean voiced F0 (0 for
    /// unvoiced segments), energy in dB relative to the utterance's mean frame
    /// energy, and duration as a percentage of the utterance. Global pitch,
    /// level and tempo changes cancel out.
    #[default]
    UtteranceRelative,
}

impl SupraFeatures {
    pub fn as_str(self) -> &'static str {
        match self {
            SupraFeatures::Raw => "raw",
            SupraFeatures::UtteranceRelative => "utterance_relative",
        }
    }

    /// One observation row per segment of a single utterance.
    pub fn observations(self, segments: &[ProsodicVector]) -> Result<ObservationSequence> {
        if segments.is_empty() {
            return Err(Error::Empty("supra segment sequence"));
        }
        let rows: Vec<[f64; 3]> = match self {
            SupraFeatures::Raw => segments.iter().map(ProsodicVector::to_array).collect(),
            SupraFeatures::UtteranceRelative => {
                let frames: f64 = segments.iter().map(|s| f64::from(s.duration_frames)).sum();
                let voiced: f64 = segments.iter().map(|s| f64::from(s.voiced_frames)).sum();
                let mean_f0 = segments.iter().map(|s| s.f0_hz * f64::from(s.voiced_frames)).sum::<f64>() / voiced;
                let mean_energy =
                    segments.iter().map(|s| s.log_energy * f64::from(s.duration_frames)).sum::<f64>() / frames;
                segments
                    .iter()
                    .map(|s| {
                        let pitch = if s.voiced_frames == 0 || voiced == 0.0 {
                            0.0
                        } else {
                            12.0 * (s.f0_hz / mean_f0).log2()
                        };
                        let level = 10.0 * std::f64::consts::LOG10_E * (s.log_energy - mean_energy);
                        [pitch, level, 100.0 * f64::from(s.duration_frames) / frames]
                    })
                    .collect()
            }
        };
        ObservationSequence::from_rows(&rows)
    }
}

pub fn segment_observations(segments: &[SupraSegment], features: SupraFeatures) -> Result<ObservationSequence> {
    let vectors: Vec<ProsodicVector> = segments.iter().map(|s| s.vector).collect();
    features.observations(&vectors)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupraConfig {
    pub n_supra: usize,
    pub mixtures: usize,
    pub features: SupraFeatures,
    pub train: TrainConfig,
}

impl Default for SupraConfig {
    fn default() -> Self {
        Self {
            n_supra: SUPRA_STATES,
            mixtures: 10,
            features: SupraFeatures::default(),
            train: TrainConfig {
                variance_floor: SUPRA_VARIANCE_FLOOR,
                ..TrainConfig::default()
            },
        }
    }
}

/// Variance floor for supra observation vectors, in their own units.
/// Segment statistics come in small numbers per model, so the floor keeps
/// mixture components from collapsing onto single segments.
pub const SUPRA_VARIANCE_FLOOR: f64 = 1.0;

/// Ergodic first-order HMM over prosodic segment vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupraModel {
    base: Chmm1Model,
    features: SupraFeatures,
}

impl SupraModel {
    /// Uniform ergodic start: every `b_ij = 1/n`, emissions undefined until trained.
    pub fn initial(n_supra: usize, mixtures: usize, features: SupraFeatures) -> Result<Self> {
        Ok(Self {
            base: init_ergodic(n_supra, mixtures, ProsodicVector::DIM)?,
            features,
        })
    }

    pub fn from_base(base: Chmm1Model, features: SupraFeatures) -> Result<Self> {
        if base.dim() != ProsodicVector::DIM {
            return Err(Error::DimensionMismatch {
                expected: ProsodicVector::DIM,
                found: base.dim(),
            });
        }
        if base.support().iter().any(|&s| !s) {
            return Err(Error::InvalidModel("supra model must be fully connected".into()));
        }
        Ok(Self { base, features })
    }

    pub fn base(&self) -> &Chmm1Model {
        &self.base
    }

    pub fn features(&self) -> SupraFeatures {
        self.features
    }

    pub fn n_supra(&self) -> usize {
        self.base.n_states()
    }

    /// Row-stochastic `b_ij`.
    pub fn supra_trans(&self) -> &[f64] {
        self.base.transitions()
    }

    pub fn log_likelihood(&self, segments: &[ProsodicVector]) -> Result<f64> {
        self.base.log_likelihood(&self.features.observations(segments)?)
    }
}

/// Trains a supra model from aligned segment sequences. Emissions are seeded
/// from the segments grouped by their supra-state label, then refined by
/// Baum-Welch from the uniform ergodic transition matrix.
pub fn train_supra(sequences: &[Vec<SupraSegment>], config: &SupraConfig, seed: u64) -> Result<(SupraModel, TrainReport)> {
    let sequences: Vec<&Vec<SupraSegment>> = sequences.iter().filter(|s| !s.is_empty()).collect();
    if sequences.is_empty() {
        return Err(Error::Empty("supra training sequences"));
    }
    let data = sequences
        .iter()
        .map(|s| segment_observations(s, config.features))
        .collect::<Result<Vec<_>>>()?;
    let mut groups: Vec<Vec<&[f64]>> = vec![Vec::new(); config.n_supra];
    for (seq, obs) in sequences.iter().zip(&data) {
        for (segment, row) in seq.iter().zip(obs.rows()) {
            let group = groups.get_mut(segment.supra_state).ok_or_else(|| {
                Error::InvalidModel(format!("segment labeled with supra-state {}", segment.supra_state))
            })?;
            group.push(row);
        }
    }
    let emissions = emissions_from_groups(&groups, config.mixtures, seed, config.train.variance_floor)?;
    let init = init_ergodic(config.n_supra, config.mixtures, ProsodicVector::DIM)?.with_emissions(emissions)?;
    let (base, report) = train_chmm1(&init, &data, &config.train)?;
    Ok((
        SupraModel {
            base,
            features: config.features,
        },
        report,
    ))
}

pub fn supra_log_likelihood(model: &SupraModel, segments: &[ProsodicVector]) -> Result<f64> {
    model.log_likelihood(segments)
}

/// Weight `α` of the supra score in the fused score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FusionWeight(f64);

impl FusionWeight {
    pub fn new(alpha: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&alpha) {
            Ok(Self(alpha))
        } else {
            Err(Error::InvalidFusionWeight(alpha))
        }
    }

    pub fn alpha(self) -> f64 {
        self.0
    }
}

impl Default for FusionWeight {
    fn default() -> Self {
        Self(0.5)
    }
}

impl TryFrom<f64> for FusionWeight {
    type Error = Error;

    fn try_from(alpha: f64) -> Result<Self> {
        Self::new(alpha)
    }
}

impl From<FusionWeight> for f64 {
    fn from(w: FusionWeight) -> f64 {
        w.0
    }
}

/// `(1 - α)·acoustic + α·supra`. The endpoints return one input unchanged.
pub fn fuse_scores(acoustic_ll: f64, supra_ll: f64, w: FusionWeight) -> Result<f64> {
    if !acoustic_ll.is_finite() {
        return Err(Error::NonFinite("acoustic score"));
    }
    if !supra_ll.is_finite() {
        return Err(Error::NonFinite("supra score"));
    }
    Ok(match w.0 {
        a if a == 0.0 => acoustic_ll,
        a if a == 1.0 => supra_ll,
        a => (1.0 - a) * acoustic_ll + a * supra_ll,
    })
}

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::frontend::{ObservationSequence, ProsodicVector, ProsodyFrame, Utterance};
use crate::hmm::{init_chmm2, likelihood2, train_chmm2, Chmm2Model, EmissionInit, TrainConfig};
use crate::logmath::argmax;
use crate::sphmm::{align_to_supra, fuse_scores, train_supra, FusionWeight, SupraConfig, SupraMapping, SupraModel};
use crate::FORMAT_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnrollConfig {
    pub n_states: usize,
    pub mixtures: usize,
    pub train: TrainConfig,
    pub emission_init: EmissionInit,
    pub supra: SupraConfig,
    /// Master seed; each (speaker, sentence) model derives its own.
    pub seed: u64,
}

impl Default for EnrollConfig {
    fn default() -> Self {
        Self {
            n_states: 9,
            mixtures: 5,
            train: TrainConfig::default(),
            emission_init: EmissionInit::default(),
            supra: SupraConfig::default(),
            seed: 1,
        }
    }
}

/// Everything enrolled for one speaker and sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub version: u32,
    pub speaker_id: u32,
    pub sentence_id: u32,
    pub training_utterances: usize,
    pub acoustic: Chmm2Model,
    pub supra: SupraModel,
    pub mapping: SupraMapping,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrollSummary {
    pub acoustic_log_likelihoods: Vec<f64>,
    pub supra_log_likelihoods: Vec<f64>,
    pub replaced: bool,
}

/// Scores of one enrolled speaker for one test utterance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeakerScore {
    pub speaker_id: u32,
    pub acoustic: f64,
    /// `None` when the supra layer was not evaluated or alignment failed.
    pub supra: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    pub speaker_id: u32,
    /// Decision scores in speaker-id order (acoustic or fused).
    pub scores: Vec<(u32, f64)>,
}

/// Index of the winning speaker. Without supra scores this is the acoustic
/// argmax; otherwise speakers lacking a supra score are excluded and the rest
/// are ranked by the fused score. Ties go to the lowest index.
pub fn decide(acoustic: &[f64], supra: Option<&[Option<f64>]>, w: FusionWeight) -> Result<Option<usize>> {
    let fused = fused_scores(acoustic, supra, w)?;
    Ok(pick(&fused))
}

fn fused_scores(acoustic: &[f64], supra: Option<&[Option<f64>]>, w: FusionWeight) -> Result<Vec<f64>> {
    match supra {
        None => Ok(acoustic.to_vec()),
        Some(supra) => acoustic
            .iter()
            .zip(supra)
            .map(|(&a, s)| match s {
                Some(s) => fuse_scores(a, *s, w),
                None => Ok(f64::NEG_INFINITY),
            })
            .collect(),
    }
}

fn pick(scores: &[f64]) -> Option<usize> {
    let best = argmax(scores)?;
    if scores[best] == f64::NEG_INFINITY {
        return None;
    }
    let ties = scores.iter().filter(|&&s| s == scores[best]).count();
    if ties > 1 {
        log::warn!("{ties} speakers tie at score {}; choosing the lowest id", scores[best]);
    }
    Some(best)
}

/// Closed set of enrolled (speaker, sentence) models.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpeakerRegistry {
    entries: BTreeMap<(u32, u32), ModelBundle>,
}

impl SpeakerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, speaker_id: u32, sentence_id: u32) -> Option<&ModelBundle> {
        self.entries.get(&(speaker_id, sentence_id))
    }

    pub fn bundles(&self) -> impl Iterator<Item = &ModelBundle> {
        self.entries.values()
    }

    /// Distinct speaker ids in ascending order.
    pub fn speakers(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.entries.keys().map(|k| k.0).collect();
        ids.dedup();
        ids
    }

    /// Adds a trained bundle, replacing (with a warning) any existing one for the same key.
    pub fn insert(&mut self, bundle: ModelBundle) -> Result<bool> {
        if bundle.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "model bundle version {} (expected {FORMAT_VERSION})",
                bundle.version
            )));
        }
        bundle.acoustic.validate()?;
        bundle.supra.base().validate()?;
        SupraModel::from_base(bundle.supra.base().clone(), bundle.supra.features())?;
        bundle.mapping.validate(bundle.acoustic.n_states())?;
        let key = (bundle.speaker_id, bundle.sentence_id);
        let replaced = self.entries.insert(key, bundle).is_some();
        if replaced {
            log::warn!("re-enrolled speaker {} sentence {}; previous models replaced", key.0, key.1);
        }
        Ok(replaced)
    }

    /// Trains the acoustic model on the training utterances, aligns them to
    /// supra segments, trains the supra model and stores both.
    pub fn enroll(
        &mut self,
        speaker_id: u32,
        sentence_id: u32,
        utterances: &[Utterance],
        config: &EnrollConfig,
    ) -> Result<EnrollSummary> {
        let (bundle, summary) = train_bundle(speaker_id, sentence_id, utterances, config)?;
        let replaced = self.insert(bundle)?;
        Ok(EnrollSummary { replaced, ..summary })
    }

    /// Models of `sentence` in speaker-id order; every enrolled speaker must have one.
    fn sentence_models(&self, sentence_id: u32) -> Result<Vec<&ModelBundle>> {
        let speakers = self.speakers();
        let models: Vec<&ModelBundle> = speakers.iter().filter_map(|&s| self.get(s, sentence_id)).collect();
        if models.is_empty() || models.len() != speakers.len() {
            return Err(Error::UnknownSentence(sentence_id));
        }
        Ok(models)
    }

    /// Acoustic scores for every speaker, plus supra scores when `prosody` is given.
    pub fn score(&self, sentence_id: u32, obs: &ObservationSequence, prosody: Option<&[ProsodyFrame]>) -> Result<Vec<SpeakerScore>> {
        if let Some(p) = prosody {
            if p.len() != obs.len() {
                return Err(Error::LengthMismatch {
                    what: "observations vs prosody frames",
                    left: obs.len(),
                    right: p.len(),
                });
            }
        }
        let models = self.sentence_models(sentence_id)?;
        models
            .par_iter()
            .map(|bundle| {
                let acoustic = likelihood2(&bundle.acoustic, obs)?;
                let supra = match prosody {
                    None => None,
                    Some(p) => match supra_score(bundle, obs, p) {
                        Ok(s) if s.is_finite() => Some(s),
                        Ok(_) | Err(_) => {
                            log::warn!(
                                "supra scoring failed for speaker {} sentence {sentence_id}; speaker excluded",
                                bundle.speaker_id
                            );
                            None
                        }
                    },
                };
                Ok(SpeakerScore {
                    speaker_id: bundle.speaker_id,
                    acoustic,
                    supra,
                })
            })
            .collect()
    }

    /// Acoustic-only identification.
    pub fn identify_chmm2(&self, sentence_id: u32, obs: &ObservationSequence) -> Result<Identification> {
        let scores = self.score(sentence_id, obs, None)?;
        identification(&scores, None)
    }

    /// Identification on fused acoustic and supra scores.
    pub fn identify_sphmm(
        &self,
        sentence_id: u32,
        obs: &ObservationSequence,
        prosody: &[ProsodyFrame],
        w: FusionWeight,
    ) -> Result<Identification> {
        // At alpha = 0 the supra layer cannot change the decision, so it is skipped.
        let prosody = (w.alpha() > 0.0).then_some(prosody);
        let scores = self.score(sentence_id, obs, prosody)?;
        identification(&scores, Some(w))
    }
}

/// Turns per-speaker scores into a decision. `None` means acoustic only.
pub(crate) fn identification(scores: &[SpeakerScore], w: Option<FusionWeight>) -> Result<Identification> {
    let acoustic: Vec<f64> = scores.iter().map(|s| s.acoustic).collect();
    let supra: Vec<Option<f64>> = scores.iter().map(|s| s.supra).collect();
    let fused = match w {
        Some(w) if w.alpha() > 0.0 => fused_scores(&acoustic, Some(&supra), w)?,
        _ => acoustic.clone(),
    };
    let best = pick(&fused).ok_or(Error::Empty("scorable speakers"))?;
    Ok(Identification {
        speaker_id: scores[best].speaker_id,
        scores: scores.iter().zip(fused).map(|(s, f)| (s.speaker_id, f)).collect(),
    })
}

fn supra_score(bundle: &ModelBundle, obs: &ObservationSequence, prosody: &[ProsodyFrame]) -> Result<f64> {
    let segments = align_to_supra(&bundle.acoustic, &bundle.mapping, obs, prosody)?;
    let vectors: Vec<ProsodicVector> = segments.iter().map(|s| s.vector).collect();
    bundle.supra.log_likelihood(&vectors)
}

pub(crate) fn train_bundle(
    speaker_id: u32,
    sentence_id: u32,
    utterances: &[Utterance],
    config: &EnrollConfig,
) -> Result<(ModelBundle, EnrollSummary)> {
    if utterances.is_empty() {
        return Err(Error::Empty("enrollment utterances"));
    }
    let seed = derive_seed(config.seed, &[u64::from(speaker_id), u64::from(sentence_id)]);
    let data: Vec<ObservationSequence> = utterances.iter().map(|u| u.observations.clone()).collect();
    let dim = data[0].dim();
    let mut init = init_chmm2(config.n_states, config.mixtures, dim)?;
    init.initialize_emissions(&data, config.emission_init, seed, config.train.variance_floor)?;
    let (acoustic, acoustic_report) = train_chmm2(&init, &data, &config.train)?;

    let mapping = SupraMapping::contiguous(config.n_states, config.supra.n_supra)?;
    let segments = utterances
        .iter()
        .map(|u| align_to_supra(&acoustic, &mapping, &u.observations, &u.prosody))
        .collect::<Result<Vec<_>>>()?;
    let (supra, supra_report) = train_supra(&segments, &config.supra, derive_seed(seed, &[1]))?;
    log::debug!(
        "speaker {speaker_id} sentence {sentence_id}: acoustic ll {:.3} after {} iterations, supra ll {:.3}",
        acoustic_report.final_log_likelihood(),
        acoustic_report.iterations(),
        supra_report.final_log_likelihood()
    );
    Ok((
        ModelBundle {
            version: FORMAT_VERSION,
            speaker_id,
            sentence_id,
            training_utterances: utterances.len(),
            acoustic,
            supra,
            mapping,
        },
        EnrollSummary {
            acoustic_log_likelihoods: acoustic_report.log_likelihoods,
            supra_log_likelihoods: supra_report.log_likelihoods,
            replaced: false,
        },
    ))
}

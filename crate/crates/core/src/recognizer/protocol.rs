use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use super::registry::{train_bundle, EnrollConfig, EnrollSummary, SpeakerRegistry};
use super::report::TestItem;
use crate::corpus::{CorpusManifest, UtteranceRecord};
use crate::error::{Error, Result};
use crate::frontend::io::read_wav;
use crate::frontend::{ProsodyConfig, Utterance};

/// Reads a WAV file and runs both feature analyses on it.
pub fn load_utterance(path: &Path, prosody: &ProsodyConfig) -> Result<Utterance> {
    let audio = read_wav(path)?;
    Utterance::analyze(&audio, prosody).map_err(|e| match e {
        Error::NoUsableFrames => Error::Format(format!("{}: no usable frames", path.display())),
        other => other,
    })
}

fn load_records(manifest: &CorpusManifest, records: &[&UtteranceRecord], prosody: &ProsodyConfig) -> Result<Vec<Utterance>> {
    records
        .par_iter()
        .map(|r| load_utterance(&manifest.resolve(r), prosody))
        .collect()
}

/// Per-model training outcome, in (speaker, sentence) order.
#[derive(Debug, Clone, PartialEq)]
pub struct EnrolledModel {
    pub speaker_id: u32,
    pub sentence_id: u32,
    pub summary: EnrollSummary,
}

/// Enrolls every (speaker, sentence) pair of the manifest's training session.
/// Models are trained in parallel; each one is seeded independently.
pub fn enroll_manifest(
    manifest: &CorpusManifest,
    config: &EnrollConfig,
    prosody: &ProsodyConfig,
) -> Result<(SpeakerRegistry, Vec<EnrolledModel>)> {
    let mut groups: BTreeMap<(u32, u32), Vec<&UtteranceRecord>> = BTreeMap::new();
    for r in manifest.training() {
        groups.entry((r.speaker_id, r.sentence_id)).or_default().push(r);
    }
    if groups.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let groups: Vec<((u32, u32), Vec<&UtteranceRecord>)> = groups.into_iter().collect();
    let trained = groups
        .par_iter()
        .map(|((speaker, sentence), records)| {
            let mut records = records.clone();
            records.sort_by_key(|r| r.repetition);
            let utterances = load_records(manifest, &records, prosody)?;
            train_bundle(*speaker, *sentence, &utterances, config)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut registry = SpeakerRegistry::new();
    let mut models = Vec::with_capacity(trained.len());
    for (bundle, summary) in trained {
        let (speaker_id, sentence_id) = (bundle.speaker_id, bundle.sentence_id);
        registry.insert(bundle)?;
        models.push(EnrolledModel {
            speaker_id,
            sentence_id,
            summary,
        });
    }
    Ok((registry, models))
}

/// Loads the manifest's test session in manifest order.
pub fn load_test_items(manifest: &CorpusManifest, prosody: &ProsodyConfig) -> Result<Vec<TestItem>> {
    let records: Vec<&UtteranceRecord> = manifest.testing().collect();
    if records.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let utterances = load_records(manifest, &records, prosody)?;
    Ok(records
        .into_iter()
        .zip(utterances)
        .map(|(r, utterance)| TestItem {
            speaker_id: r.speaker_id,
            gender: r.gender,
            sentence_id: r.sentence_id,
            condition: r.condition,
            utterance,
        })
        .collect())
}

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::registry::{identification, SpeakerRegistry};
use crate::corpus::{Condition, Gender};
use crate::error::{Error, Result};
use crate::frontend::Utterance;
use crate::sphmm::FusionWeight;
use crate::FORMAT_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Chmm2,
    Sphmm,
}

impl ModelKind {
    pub const ALL: &'static [ModelKind] = &[ModelKind::Chmm2, ModelKind::Sphmm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Chmm2 => "chmm2",
            ModelKind::Sphmm => "sphmm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "chmm2" => Ok(ModelKind::Chmm2),
            "sphmm" => Ok(ModelKind::Sphmm),
            other => Err(format!("unknown model '{other}' (expected chmm2 or sphmm)")),
        }
    }
}

/// One labelled test utterance.
#[derive(Debug, Clone)]
pub struct TestItem {
    pub speaker_id: u32,
    pub gender: Gender,
    pub sentence_id: u32,
    pub condition: Condition,
    pub utterance: Utterance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenderResult {
    pub gender: Gender,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: Condition,
    pub total: usize,
    pub correct: usize,
    /// Percent; always `100 * trace(confusion) / total`.
    pub accuracy: f64,
    pub genders: Vec<GenderResult>,
    /// Rows are true speakers, columns decided speakers, both in `speakers` order.
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub model: ModelKind,
    pub conditions: Vec<ConditionResult>,
}

impl ModelResult {
    pub fn condition(&self, condition: Condition) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.condition == condition)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub version: u32,
    pub alpha: f64,
    pub speakers: Vec<u32>,
    pub test_utterances: usize,
    pub models: Vec<ModelResult>,
}

fn percent(correct: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * correct as f64 / total as f64
    }
}

impl EvaluationReport {
    pub fn model(&self, model: ModelKind) -> Option<&ModelResult> {
        self.models.iter().find(|m| m.model == model)
    }

    pub fn accuracy(&self, model: ModelKind, condition: Condition) -> Option<f64> {
        self.model(model)?.condition(condition).map(|c| c.accuracy)
    }

    /// Accuracy table: one row per model and gender, one column per condition.
    pub fn to_table(&self) -> String {
        let conditions: Vec<Condition> = self
            .models
            .first()
            .map(|m| m.conditions.iter().map(|c| c.condition).collect())
            .unwrap_or_default();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Speaker identification accuracy (%), {} speakers, {} test utterances, alpha = {}",
            self.speakers.len(),
            self.test_utterances,
            self.alpha
        );
        let _ = write!(out, "{:<8}{:<8}", "model", "gender");
        for c in &conditions {
            let _ = write!(out, "{:>10}", c.as_str());
        }
        out.push('\n');
        for m in &self.models {
            let mut rows: Vec<(String, Vec<f64>)> = Gender::ALL
                .iter()
                .map(|&g| {
                    let cells = m
                        .conditions
                        .iter()
                        .map(|c| c.genders.iter().find(|r| r.gender == g).map_or(f64::NAN, |r| r.accuracy))
                        .collect();
                    (g.as_str().to_string(), cells)
                })
                .collect();
            rows.push(("all".to_string(), m.conditions.iter().map(|c| c.accuracy).collect()));
            for (label, cells) in rows {
                let _ = write!(out, "{:<8}{:<8}", m.model.as_str(), label);
                for v in cells {
                    let _ = write!(out, "{v:>10.2}");
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Runs every requested identifier over every test item. Each utterance is
/// scored once; both decisions come from the same per-speaker likelihoods.
pub fn evaluate(
    registry: &SpeakerRegistry,
    items: &[TestItem],
    models: &[ModelKind],
    weight: FusionWeight,
) -> Result<EvaluationReport> {
    if items.is_empty() {
        return Err(Error::Empty("test set"));
    }
    if models.is_empty() {
        return Err(Error::Empty("model selection"));
    }
    let speakers = registry.speakers();
    let index: BTreeMap<u32, usize> = speakers.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    for item in items {
        if !index.contains_key(&item.speaker_id) {
            return Err(Error::Protocol(format!("test speaker {} is not enrolled", item.speaker_id)));
        }
    }
    let need_supra = models.contains(&ModelKind::Sphmm);
    let decisions: Vec<Vec<u32>> = items
        .par_iter()
        .map(|item| {
            let u = &item.utterance;
            let scores = registry.score(item.sentence_id, &u.observations, need_supra.then_some(u.prosody.as_slice()))?;
            models
                .iter()
                .map(|m| {
                    let w = match m {
                        ModelKind::Chmm2 => None,
                        ModelKind::Sphmm => Some(weight),
                    };
                    identification(&scores, w).map(|id| id.speaker_id)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut conditions: Vec<Condition> = items.iter().map(|i| i.condition).collect();
    conditions.sort();
    conditions.dedup();
    let v = speakers.len();
    let results = models
        .iter()
        .enumerate()
        .map(|(mi, &model)| {
            let conditions = conditions
                .iter()
                .map(|&condition| {
                    let mut confusion = vec![vec![0usize; v]; v];
                    let mut by_gender: BTreeMap<Gender, (usize, usize)> = BTreeMap::new();
                    for (item, decided) in items.iter().zip(&decisions) {
                        if item.condition != condition {
                            continue;
                        }
                        let truth = index[&item.speaker_id];
                        let guess = index[&decided[mi]];
                        confusion[truth][guess] += 1;
                        let entry = by_gender.entry(item.gender).or_default();
                        entry.0 += usize::from(truth == guess);
                        entry.1 += 1;
                    }
                    let total: usize = confusion.iter().flatten().sum();
                    let correct: usize = (0..v).map(|i| confusion[i][i]).sum();
                    ConditionResult {
                        condition,
                        total,
                        correct,
                        accuracy: percent(correct, total),
                        genders: by_gender
                            .into_iter()
                            .map(|(gender, (correct, total))| GenderResult {
                                gender,
                                total,
                                correct,
                                accuracy: percent(correct, total),
                            })
                            .collect(),
                        confusion,
                    }
                })
                .collect();
            ModelResult { model, conditions }
        })
        .collect();
    Ok(EvaluationReport {
        version: FORMAT_VERSION,
        alpha: weight.alpha(),
        speakers,
        test_utterances: items.len(),
        models: results,
    })
}

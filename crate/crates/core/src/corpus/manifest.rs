use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{Condition, Gender, Session, MAX_SENTENCES, TEST_REPETITIONS, TRAIN_REPETITIONS};
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: &str = "path\tspeaker_id\tgender\tsentence_id\tsession\tcondition\trepetition";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct UtteranceRecord {
    /// As written in the manifest; relative paths are resolved against the manifest directory.
    pub path: PathBuf,
    pub speaker_id: u32,
    pub gender: Gender,
    pub sentence_id: u32,
    pub session: Session,
    pub condition: Condition,
    pub repetition: u32,
}

impl UtteranceRecord {
    fn key(&self) -> (u32, u32, Session, Condition, u32) {
        (self.speaker_id, self.sentence_id, self.session, self.condition, self.repetition)
    }

    fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.path.display(),
            self.speaker_id,
            self.gender,
            self.sentence_id,
            self.session,
            self.condition,
            self.repetition
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub base_dir: PathBuf,
    pub records: Vec<UtteranceRecord>,
}

impl CorpusManifest {
    /// Builds a manifest from records, applying the same checks as [`load_manifest`].
    pub fn new(base_dir: PathBuf, records: Vec<UtteranceRecord>) -> Result<Self> {
        let manifest = Self { base_dir, records };
        manifest.validate().map_err(|(line, message)| Error::Manifest {
            path: manifest.base_dir.clone(),
            line,
            message,
        })?;
        Ok(manifest)
    }

    pub fn resolve(&self, record: &UtteranceRecord) -> PathBuf {
        if record.path.is_absolute() {
            record.path.clone()
        } else {
            self.base_dir.join(&record.path)
        }
    }

    pub fn training(&self) -> impl Iterator<Item = &UtteranceRecord> {
        self.records.iter().filter(|r| r.session == Session::Train)
    }

    pub fn testing(&self) -> impl Iterator<Item = &UtteranceRecord> {
        self.records.iter().filter(|r| r.session == Session::Test)
    }

    pub fn speakers(&self) -> BTreeMap<u32, Gender> {
        self.records.iter().map(|r| (r.speaker_id, r.gender)).collect()
    }

    pub fn sentences(&self) -> BTreeSet<u32> {
        self.records.iter().map(|r| r.sentence_id).collect()
    }

    /// Checks that every speaker has all 5 training repetitions of every
    /// sentence, and 4 test repetitions per condition present in the test data.
    pub fn check_complete(&self) -> Result<()> {
        let mut counts: BTreeMap<(u32, u32, Session, Condition), u32> = BTreeMap::new();
        for r in &self.records {
            *counts.entry((r.speaker_id, r.sentence_id, r.session, r.condition)).or_default() += 1;
        }
        let conditions: BTreeSet<Condition> = self.testing().map(|r| r.condition).collect();
        for &speaker in self.speakers().keys() {
            for &sentence in &self.sentences() {
                let train = counts.get(&(speaker, sentence, Session::Train, Condition::Neutral)).copied().unwrap_or(0);
                if train != TRAIN_REPETITIONS {
                    return Err(Error::Protocol(format!(
                        "speaker {speaker} sentence {sentence}: {train} training utterances, expected {TRAIN_REPETITIONS}"
                    )));
                }
                for &condition in &conditions {
                    let test = counts.get(&(speaker, sentence, Session::Test, condition)).copied().unwrap_or(0);
                    if test != TEST_REPETITIONS {
                        return Err(Error::Protocol(format!(
                            "speaker {speaker} sentence {sentence} {condition}: {test} test utterances, expected {TEST_REPETITIONS}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Returns the offending 1-based line (header is line 1) and a message.
    fn validate(&self) -> std::result::Result<(), (usize, String)> {
        if self.records.is_empty() {
            return Err((1, "manifest has no records".into()));
        }
        let mut keys = BTreeMap::new();
        let mut genders: BTreeMap<u32, Gender> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            let line = i + 2;
            if r.speaker_id == 0 {
                return Err((line, "speaker ids start at 1".into()));
            }
            if !(1..=MAX_SENTENCES).contains(&r.sentence_id) {
                return Err((line, format!("sentence id {} outside 1..{MAX_SENTENCES}", r.sentence_id)));
            }
            let max_rep = match r.session {
                Session::Train => {
                    if r.condition != Condition::Neutral {
                        return Err((line, "training utterances must be neutral".into()));
                    }
                    TRAIN_REPETITIONS
                }
                Session::Test => TEST_REPETITIONS,
            };
            if !(1..=max_rep).contains(&r.repetition) {
                return Err((line, format!("{} repetition {} outside 1..{max_rep}", r.session, r.repetition)));
            }
            if let Some(first) = keys.insert(r.key(), line) {
                return Err((line, format!("duplicate of line {first}")));
            }
            if let Some(g) = genders.insert(r.speaker_id, r.gender) {
                if g != r.gender {
                    return Err((line, format!("speaker {} listed as both {g} and {}", r.speaker_id, r.gender)));
                }
            }
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(MANIFEST_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(out, "{}", r.to_line());
        }
        out
    }
}

fn field<T: std::str::FromStr>(value: &str, name: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("bad {name} '{value}'"))
}

fn parse_line(line: &str) -> std::result::Result<UtteranceRecord, String> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 7 {
        return Err(format!("expected 7 tab-separated fields, found {}", cols.len()));
    }
    if cols[0].is_empty() {
        return Err("empty path".into());
    }
    Ok(UtteranceRecord {
        path: PathBuf::from(cols[0]),
        speaker_id: field(cols[1], "speaker_id")?,
        gender: cols[2].parse()?,
        sentence_id: field(cols[3], "sentence_id")?,
        session: cols[4].parse()?,
        condition: cols[5].parse()?,
        repetition: field(cols[6], "repetition")?,
    })
}

/// Parses manifest text. `origin` is used for error messages and as the base directory.
pub fn parse_manifest(text: &str, origin: &Path) -> Result<CorpusManifest> {
    let err = |line: usize, message: String| Error::Manifest {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines();
    match lines.next() {
        None => return Err(err(1, "empty manifest".into())),
        Some(h) if h.trim_end_matches('\r') != MANIFEST_HEADER => {
            return Err(err(1, format!("header must be '{}'", MANIFEST_HEADER.replace('\t', " "))))
        }
        Some(_) => {}
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_line(line).map_err(|m| err(line_no, m))?);
    }
    let base_dir = origin.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = CorpusManifest { base_dir, records };
    manifest.validate().map_err(|(line, message)| err(line, message))?;
    Ok(manifest)
}

pub fn load_manifest(path: &Path) -> Result<CorpusManifest> {
    let text = std::fs::read_to_string(path)?;
    parse_manifest(&text, path)
}

pub fn write_manifest(path: &Path, manifest: &CorpusManifest) -> Result<()> {
    std::fs::write(path, manifest.to_tsv())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(speaker: u32, sentence: u32, session: Session, condition: Condition, rep: u32) -> UtteranceRecord {
        UtteranceRecord {
            path: PathBuf::from(format!("s{speaker}_{sentence}_{session}_{condition}_{rep}.wav")),
            speaker_id: speaker,
            gender: if speaker % 2 == 1 { Gender::Male } else { Gender::Female },
            sentence_id: sentence,
            session,
            condition,
            repetition: rep,
        }
    }

    fn full(speakers: u32, sentences: u32) -> Vec<UtteranceRecord> {
        let mut out = Vec::new();
        for s in 1..=speakers {
            for k in 1..=sentences {
                for r in 1..=5 {
                    out.push(record(s, k, Session::Train, Condition::Neutral, r));
                }
                for c in Condition::ALL {
                    for r in 1..=4 {
                        out.push(record(s, k, Session::Test, *c, r));
                    }
                }
            }
        }
        out
    }

    fn text_of(records: &[UtteranceRecord]) -> String {
        CorpusManifest {
            base_dir: PathBuf::new(),
            records: records.to_vec(),
        }
        .to_tsv()
    }

    #[test]
    fn full_protocol_round_trips() {
        let records = full(30, 8);
        assert_eq!(records.len(), 30 * 8 * (5 + 4 * 2));
        let m = parse_manifest(&text_of(&records), Path::new("/data/manifest.tsv")).unwrap();
        assert_eq!(m.records, records);
        assert_eq!(m.training().count(), 1200);
        assert_eq!(m.testing().count(), 1920);
        assert_eq!(m.base_dir, PathBuf::from("/data"));
        m.check_complete().unwrap();
    }

    #[test]
    fn empty_and_header_only_are_rejected() {
        assert!(matches!(parse_manifest("", Path::new("m.tsv")), Err(Error::Manifest { line: 1, .. })));
        let header_only = format!("{MANIFEST_HEADER}\n");
        assert!(matches!(parse_manifest(&header_only, Path::new("m.tsv")), Err(Error::Manifest { .. })));
        assert!(matches!(
            parse_manifest("path speaker\n", Path::new("m.tsv")),
            Err(Error::Manifest { line: 1, .. })
        ));
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let mut text = text_of(&full(1, 1));
        text.push_str("x.wav\t1\tmale\tone\ttrain\tneutral\t1\n");
        match parse_manifest(&text, Path::new("m.tsv")) {
            Err(Error::Manifest { line, message, .. }) => {
                assert_eq!(line, 15);
                assert!(message.contains("sentence_id"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn protocol_violations_are_rejected() {
        let mut sixth = full(1, 1);
        sixth.push(record(1, 1, Session::Train, Condition::Neutral, 6));
        assert!(parse_manifest(&text_of(&sixth), Path::new("m.tsv")).is_err());

        let mut dup = full(1, 1);
        dup.push(record(1, 1, Session::Test, Condition::Shouted, 2));
        match parse_manifest(&text_of(&dup), Path::new("m.tsv")) {
            Err(Error::Manifest { message, .. }) => assert!(message.contains("duplicate")),
            other => panic!("{other:?}"),
        }

        let shouted_train = vec![record(1, 1, Session::Train, Condition::Shouted, 1)];
        assert!(parse_manifest(&text_of(&shouted_train), Path::new("m.tsv")).is_err());

        let bad_sentence = vec![record(1, 9, Session::Train, Condition::Neutral, 1)];
        assert!(parse_manifest(&text_of(&bad_sentence), Path::new("m.tsv")).is_err());

        let mut gender = full(1, 1);
        gender[3].gender = Gender::Female;
        assert!(parse_manifest(&text_of(&gender), Path::new("m.tsv")).is_err());
    }

    #[test]
    fn incomplete_protocol_is_detected() {
        let mut records = full(2, 2);
        records.retain(|r| !(r.speaker_id == 2 && r.session == Session::Train && r.repetition == 5 && r.sentence_id == 1));
        let m = parse_manifest(&text_of(&records), Path::new("m.tsv")).unwrap();
        assert!(matches!(m.check_complete(), Err(Error::Protocol(_))));
    }

    #[test]
    fn crlf_lines_are_accepted() {
        let text = text_of(&full(1, 1)).replace('\n', "\r\n");
        assert_eq!(parse_manifest(&text, Path::new("m.tsv")).unwrap().records.len(), 13);
    }
}

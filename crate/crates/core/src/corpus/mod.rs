//! Utterance manifests and the seeded synthetic corpus.

mod manifest;
pub mod synth;

pub use manifest::{load_manifest, parse_manifest, write_manifest, CorpusManifest, UtteranceRecord, MANIFEST_HEADER};
pub use synth::{
    sentence_phones, synth_corpus, synth_utterance, ShoutParams, SynthConfig, SynthSpeakerProfile, PHONES,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Number of training repetitions per speaker and sentence.
pub const TRAIN_REPETITIONS: u32 = 5;
/// Number of test repetitions per speaker, sentence and condition.
pub const TEST_REPETITIONS: u32 = 4;
/// Sentence ids run from 1 to this value.
pub const MAX_SENTENCES: u32 = 8;

macro_rules! text_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!("unknown {} '{s}'", stringify!($name).to_lowercase())),
                }
            }
        }
    };
}

text_enum!(Gender { Male => "male", Female => "female" });
text_enum!(Session { Train => "train", Test => "test" });
text_enum!(Condition { Neutral => "neutral", Shouted => "shouted" });

//! Text-dependent, closed-set speaker identification built on second-order
//! circular hidden Markov models and a suprasegmental (prosodic) layer.
//!
//! The crate is split along the processing pipeline:
//!
//! - [`frontend`]: framing, LPC/LPCC analysis and prosody tracking.
//! - [`hmm`]: diagonal GMM emissions, first- and second-order circular HMMs.
//! - [`sphmm`]: supra-state mapping, prosodic segment models and score fusion.
//! - [`recognizer`]: enrollment, identification and evaluation reports.
//! - [`corpus`]: manifests and the seeded synthetic speech corpus.

pub mod corpus;
pub mod error;
pub mod frontend;
pub mod hmm;
pub mod logmath;
pub mod recognizer;
pub mod sphmm;

pub use error::{Error, Result};

/// Version tag written into every serialized artifact (features, models, reports).
pub const FORMAT_VERSION: u32 = 1;

/// SplitMix64 mixing over a sequence of words. Derives independent child
/// seeds (per speaker, per model, per utterance) from one master seed.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut z = master;
    for &p in parts {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

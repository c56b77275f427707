use sphmm_core::corpus::{load_manifest, synth_corpus, synth_utterance, Condition, SynthConfig};
use sphmm_core::frontend::{extract_prosody, ProsodyConfig};

#[test]
fn shouted_pitch_ratio_survives_the_tracker() {
    let config = SynthConfig::default();
    let prosody = ProsodyConfig::default();
    let mut sums = [(0.0, 0usize); 2];
    for speaker in 1..=6 {
        let profile = config.speaker(speaker);
        for sentence in 1..=8 {
            let rep = u64::from(speaker * 10 + sentence);
            for (slot, condition) in [Condition::Neutral, Condition::Shouted].into_iter().enumerate() {
                let audio = synth_utterance(&profile, sentence, condition, rep);
                for f in extract_prosody(&audio, &prosody).unwrap() {
                    if f.is_voiced() {
                        sums[slot].0 += f.f0_hz;
                        sums[slot].1 += 1;
                    }
                }
            }
        }
    }
    let mean = |(s, n): (f64, usize)| s / n as f64;
    let ratio = mean(sums[1]) / mean(sums[0]);
    assert!((ratio - 1.5).abs() <= 0.05, "pooled shouted/neutral f0 ratio {ratio}");
}

#[test]
fn written_manifest_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let config = SynthConfig {
        n_speakers: 2,
        sentences: 2,
        ..SynthConfig::default()
    };
    let written = synth_corpus(&config, dir.path()).unwrap();
    assert_eq!(written.records.len(), 2 * 2 * (5 + 4 * 2));
    assert_eq!(written.training().count(), 20);
    assert_eq!(written.testing().count(), 32);
    let read = load_manifest(&dir.path().join("manifest.tsv")).unwrap();
    assert_eq!(read.records, written.records);
    read.check_complete().unwrap();
    for r in &read.records {
        assert!(read.resolve(r).is_file(), "{}", r.path.display());
    }
}

#[test]
fn corpus_is_a_function_of_the_seed() {
    let render = |seed| {
        let config = SynthConfig {
            n_speakers: 2,
            sentences: 1,
            seed,
            ..SynthConfig::default()
        };
        config.records().iter().map(|r| config.render(r)).collect::<Vec<_>>()
    };
    let a = render(4);
    assert_eq!(a, render(4));
    let b = render(5);
    assert_eq!(a.len(), b.len());
    assert!(a.iter().zip(&b).all(|(x, y)| x != y));
}

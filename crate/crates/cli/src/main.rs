mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sphmm_core::corpus::{load_manifest, synth_corpus, SynthConfig};
use sphmm_core::frontend::io::read_wav;
use sphmm_core::frontend::{extract_features, extract_prosody, ProsodyConfig};
use sphmm_core::recognizer::{
    enroll_manifest, evaluate, load_registry, load_test_items, save_registry, EnrollConfig,
};
use sphmm_core::sphmm::{FusionWeight, SupraConfig};

use config::{
    check_alpha, pick, FeatureChoice, FileConfig, ModelChoice, DEFAULT_ALPHA, DEFAULT_MIXTURES, DEFAULT_SEED,
    DEFAULT_SENTENCES, DEFAULT_SEPARATION, DEFAULT_SPEAKERS, DEFAULT_STATES, DEFAULT_SUPRA_MIXTURES,
};

/// Text-dependent speaker identification with second-order circular and
/// suprasegmental HMMs.
#[derive(Debug, Parser)]
#[command(name = "sphmm", version)]
struct Cli {
    /// TOML file with default settings; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Master seed for all randomness [default: 1]
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic corpus and its manifest.
    Synth(SynthArgs),
    /// Enroll every (speaker, sentence) pair of a manifest's training session.
    Train(TrainArgs),
    /// Identify every test utterance and report accuracies.
    Evaluate(EvaluateArgs),
    /// Print the frame analysis of one WAV file.
    Features(FeaturesArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory for audio and manifest.tsv.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,

    /// Number of speakers [default: 30]
    #[arg(long)]
    speakers: Option<u32>,

    /// Number of sentences per speaker [default: 8]
    #[arg(long)]
    sentences: Option<u32>,

    /// Spread of speaker vocal tracts around the gender reference [default: 1.0]
    #[arg(long)]
    separation: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Corpus manifest.
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,

    /// Model store directory to write.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,

    /// Acoustic states per model [default: 9]
    #[arg(long)]
    states: Option<usize>,

    /// Mixture components per acoustic state [default: 5]
    #[arg(long)]
    mixtures: Option<usize>,

    /// Mixture components per supra-state [default: 10]
    #[arg(long)]
    supra_mixtures: Option<usize>,

    /// Supra observation features [default: relative]
    #[arg(long, value_enum)]
    supra_features: Option<FeatureChoice>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Corpus manifest.
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,

    /// Model store directory written by `train`.
    #[arg(long, value_name = "DIR")]
    models: PathBuf,

    /// Identifiers to run [default: both]
    #[arg(long, value_enum)]
    model: Option<ModelChoice>,

    /// Weight of the supra score in the fused score [default: 0.5]
    #[arg(long)]
    alpha: Option<f64>,

    /// Directory for report.txt and report.json; the table is always printed.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    /// Mono 16-bit 12 kHz WAV file.
    wav: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let seed = pick(cli.seed, file.seed, DEFAULT_SEED);
    match cli.command {
        Command::Synth(args) => cmd_synth(&args, &file, seed),
        Command::Train(args) => cmd_train(&args, &file, seed),
        Command::Evaluate(args) => cmd_evaluate(&args, &file),
        Command::Features(args) => cmd_features(&args.wav),
    }
}

fn cmd_synth(args: &SynthArgs, file: &FileConfig, seed: u64) -> Result<()> {
    let config = SynthConfig {
        n_speakers: pick(args.speakers, file.speakers, DEFAULT_SPEAKERS),
        sentences: pick(args.sentences, file.sentences, DEFAULT_SENTENCES),
        separation: pick(args.separation, file.separation, DEFAULT_SEPARATION),
        seed,
        ..SynthConfig::default()
    };
    let manifest = synth_corpus(&config, &args.out).with_context(|| format!("writing corpus to {}", args.out.display()))?;
    println!(
        "wrote {} training and {} test utterances for {} speakers to {}",
        manifest.training().count(),
        manifest.testing().count(),
        manifest.speakers().len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs, file: &FileConfig, seed: u64) -> Result<()> {
    let config = EnrollConfig {
        n_states: pick(args.states, file.states, DEFAULT_STATES),
        mixtures: pick(args.mixtures, file.mixtures, DEFAULT_MIXTURES),
        supra: SupraConfig {
            mixtures: pick(args.supra_mixtures, file.supra_mixtures, DEFAULT_SUPRA_MIXTURES),
            features: pick(args.supra_features, file.supra_features, FeatureChoice::Relative).into(),
            ..SupraConfig::default()
        },
        seed,
        ..EnrollConfig::default()
    };
    let manifest = load_manifest(&args.manifest)?;
    let (registry, models) = enroll_manifest(&manifest, &config, &ProsodyConfig::default())?;
    save_registry(&args.out, &registry).with_context(|| format!("writing models to {}", args.out.display()))?;
    let mut stdout = std::io::stdout().lock();
    for m in &models {
        let acoustic = &m.summary.acoustic_log_likelihoods;
        let supra = &m.summary.supra_log_likelihoods;
        writeln!(
            stdout,
            "speaker {:>2} sentence {}: acoustic ll {:.3} ({} iterations), supra ll {:.3} ({} iterations)",
            m.speaker_id,
            m.sentence_id,
            acoustic.last().copied().unwrap_or(f64::NAN),
            acoustic.len().saturating_sub(1),
            supra.last().copied().unwrap_or(f64::NAN),
            supra.len().saturating_sub(1),
        )?;
    }
    writeln!(
        stdout,
        "trained {} model bundles from {} training utterances",
        registry.len(),
        manifest.training().count()
    )?;
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs, file: &FileConfig) -> Result<()> {
    let alpha = check_alpha(pick(args.alpha, file.alpha, DEFAULT_ALPHA))?;
    let model = pick(args.model, file.model, ModelChoice::Both);
    let manifest = load_manifest(&args.manifest)?;
    let registry = load_registry(&args.models).with_context(|| format!("loading models from {}", args.models.display()))?;
    let items = load_test_items(&manifest, &ProsodyConfig::default())?;
    let report = evaluate(&registry, &items, model.kinds(), FusionWeight::new(alpha)?)?;
    let table = report.to_table();
    print!("{table}");
    if let Some(dir) = &args.out {
        write_report(dir, &table, &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn write_report(dir: &Path, table: &str, json: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("report.txt"), table)?;
    fs::write(dir.join("report.json"), format!("{json}\n"))?;
    Ok(())
}

fn cmd_features(path: &Path) -> Result<()> {
    let audio = read_wav(path).with_context(|| format!("reading {}", path.display()))?;
    let features = extract_features(&audio)?;
    let prosody = extract_prosody(&audio, &ProsodyConfig::default())?;
    let kept: Vec<_> = features.kept_frames.iter().map(|&i| prosody[i]).collect();
    let voiced: Vec<f64> = kept.iter().filter(|p| p.is_voiced()).map(|p| p.f0_hz).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let energy: Vec<f64> = kept.iter().map(|p| p.log_energy).collect();
    println!("file            {}", path.display());
    println!("duration        {:.3} s", audio.duration_seconds());
    println!("frames          {}", features.total_frames);
    println!("kept (T)        {}", features.observations.len());
    println!("dropped         {}", features.dropped());
    println!("dimension       {}", features.observations.dim());
    println!("voiced frames   {}", voiced.len());
    if voiced.is_empty() {
        println!("f0              none");
    } else {
        let lo = voiced.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = voiced.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        println!("f0 mean         {:.1} Hz (range {lo:.1} to {hi:.1})", mean(&voiced));
    }
    println!("log energy mean {:.3}", mean(&energy));
    Ok(())
}

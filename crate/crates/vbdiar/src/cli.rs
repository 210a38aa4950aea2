//! Command-line pipeline: `synth` → `train-plda` → `diarize` → `score`.
//!
//! Every command is deterministic given its `--seed`; no wall-clock or OS
//! entropy enters any code path. Exit codes: 0 success, 1 usage error,
//! 2 data/format error, 3 numerical failure. Failures print a single
//! `error: ...` line to stderr.

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::baseline;
use crate::der::{self, DerReport, TurnList};
use crate::error::Error;
use crate::init::{self, InitStrategy, PairMetric};
use crate::plda::{self, SpeakerPrior, TwoCovPlda};
use crate::seed::subseed;
use crate::synth::{self, CorpusSpec, CountDistribution, DurationDistribution, TrainingSetConfig};
use crate::vb::{self, AnnealSchedule, ConvergenceConfig, VbInit};

/// Sub-seed stream reserved for the bundled PLDA training set; conversation
/// streams use their index and can never collide with it.
const TRAIN_SEED_STREAM: u64 = u64::MAX;

#[derive(Parser)]
#[command(
    name = "vbdiar",
    version,
    about = "Variational-Bayes speaker diarization over segment embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-speaker corpus with ground truth.
    Synth(SynthArgs),
    /// Train a two-covariance PLDA model from a JSONL training set.
    TrainPlda(TrainArgs),
    /// Diarize a corpus into hypothesis RTTMs (plus VB trace files).
    Diarize(DiarizeArgs),
    /// Score hypothesis RTTMs against reference RTTMs.
    Score(ScoreArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output corpus directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of conversations.
    #[arg(long, default_value_t = 10)]
    conversations: usize,
    /// Speakers per conversation.
    #[arg(long, default_value_t = 2)]
    speakers: usize,
    /// Embedding dimension.
    #[arg(long, default_value_t = 8)]
    dim: usize,
    /// Fixed segment count per conversation (overrides the min/max range).
    #[arg(long)]
    segments: Option<usize>,
    /// Minimum segments per conversation.
    #[arg(long, default_value_t = 20)]
    segments_min: usize,
    /// Maximum segments per conversation.
    #[arg(long, default_value_t = 60)]
    segments_max: usize,
    /// Minimum segment duration in seconds.
    #[arg(long, default_value_t = 1.0)]
    duration_min: f64,
    /// Maximum segment duration in seconds.
    #[arg(long, default_value_t = 5.0)]
    duration_max: f64,
    /// Expected speaking-time share of the dominant speaker, in [0.5, 1).
    #[arg(long, default_value_t = 0.5)]
    dominance: f64,
    /// Between-speaker variance relative to the residual variance.
    #[arg(long, default_value_t = 10.0)]
    separation: f64,
    /// Scale each segment's residual by duration (short segments noisier),
    /// leaving the stored model mismatched on purpose.
    #[arg(long)]
    duration_noise: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Speakers in the bundled PLDA training set.
    #[arg(long, default_value_t = 200)]
    train_speakers: usize,
    /// Cuts per speaker in the bundled PLDA training set.
    #[arg(long, default_value_t = 10)]
    train_cuts: usize,
    /// Overwrite an existing non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Training data: JSON Lines with fields `speaker` and `vector`.
    #[arg(long)]
    data: PathBuf,
    /// Output model JSON path.
    #[arg(long)]
    out: PathBuf,
    /// EM iterations.
    #[arg(long, default_value_t = 20)]
    iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// Plain variational Bayes.
    Vb,
    /// Deterministic-annealing variational Bayes.
    VbDa,
    /// PCA at 50% energy plus cosine k-means.
    KmeansPca,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum InitArg {
    /// Random segment posteriors.
    Random,
    /// Three-speaker heuristic, cosine metric.
    Cos,
    /// Three-speaker heuristic, PLDA-LLR metric.
    Llr,
}

#[derive(Args)]
struct DiarizeArgs {
    /// Corpus directory produced by `synth`.
    #[arg(long)]
    corpus: PathBuf,
    /// PLDA model JSON; defaults to `<corpus>/model.json`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// VB initialization (ignored by kmeans-pca).
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    /// Number of speakers to infer.
    #[arg(long, default_value_t = 2)]
    speakers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for hypothesis RTTMs and traces.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-6)]
    q_tolerance: f64,
    #[arg(long, default_value_t = 0.2)]
    beta_init: f64,
    #[arg(long, default_value_t = 1.05)]
    beta_factor: f64,
    #[arg(long, default_value_t = 1.0)]
    beta_max: f64,
    /// Overwrite an existing non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ScoreArgs {
    /// Directory with reference RTTM files.
    #[arg(long)]
    reference: PathBuf,
    /// Directory with hypothesis RTTM files (matched by file stem).
    #[arg(long)]
    hypothesis: PathBuf,
    /// No-score collar half-width in seconds.
    #[arg(long, default_value_t = der::DEFAULT_COLLAR)]
    collar: f64,
    /// Emit the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
    /// Write the report to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

/// Parses arguments, runs the command, and maps failures to exit codes.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let line = e.to_string();
            eprintln!("{}", line.lines().next().unwrap_or("error: bad arguments"));
            return 1;
        }
    };
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::TrainPlda(args) => cmd_train_plda(args),
        Command::Diarize(args) => cmd_diarize(args),
        Command::Score(args) => cmd_score(args),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            1
        }
        Err(CliError::Lib(error)) => {
            eprintln!("error: {error}");
            match error {
                Error::Numerical(_) | Error::NotPositiveDefinite(_) => 3,
                _ => 2,
            }
        }
    }
}

fn ensure_output_dir(dir: &Path, force: bool) -> CliResult<()> {
    if dir.exists() {
        let occupied = std::fs::read_dir(dir)
            .map_err(Error::from)?
            .next()
            .is_some();
        if occupied && !force {
            return Err(CliError::Lib(Error::InvalidInput(format!(
                "output directory {} is not empty (use --force to overwrite)",
                dir.display()
            ))));
        }
    }
    std::fs::create_dir_all(dir).map_err(Error::from)?;
    Ok(())
}

/// Writes via a temporary file in the same directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> crate::error::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> CliResult<()> {
    if !(0.5..1.0).contains(&args.dominance) {
        return Err(usage(format!(
            "--dominance must be in [0.5, 1), got {}",
            args.dominance
        )));
    }
    if args.separation.is_nan() || args.separation <= 0.0 {
        return Err(usage(format!(
            "--separation must be positive, got {}",
            args.separation
        )));
    }
    if args.duration_min <= 0.0 || args.duration_max < args.duration_min {
        return Err(usage("--duration-min/--duration-max must satisfy 0 < min <= max"));
    }
    if args.segments.is_none() && (args.segments_min == 0 || args.segments_max < args.segments_min)
    {
        return Err(usage("--segments-min/--segments-max must satisfy 1 <= min <= max"));
    }
    if args.train_speakers < 2 {
        return Err(usage("--train-speakers must be at least 2"));
    }
    if args.train_cuts < 2 {
        return Err(usage("--train-cuts must be at least 2"));
    }

    let spec = CorpusSpec {
        num_conversations: args.conversations,
        num_speakers_per_conversation: args.speakers,
        dim: args.dim,
        segments_per_conversation: match args.segments {
            Some(n) => CountDistribution::Fixed(n),
            None => CountDistribution::Uniform {
                lo: args.segments_min,
                hi: args.segments_max,
            },
        },
        segment_duration_seconds: DurationDistribution::UniformSeconds {
            lo: args.duration_min,
            hi: args.duration_max,
        },
        dominance: args.dominance,
        separation: args.separation,
        duration_residual_scaling: args.duration_noise,
        seed: args.seed,
    };
    spec.validate()?;
    ensure_output_dir(&args.out, args.force)?;

    let base = TwoCovPlda::isotropic(spec.dim, 1.0, 1.0)?;
    let model = synth::generation_model(&spec, &base)?;
    let conversations = synth::generate_corpus(&spec, &base)?;
    let train = synth::generate_plda_training_set(
        &model,
        &TrainingSetConfig::new(
            args.train_speakers,
            args.train_cuts,
            subseed(spec.seed, TRAIN_SEED_STREAM),
        ),
    )?;
    synth::write_corpus(&args.out, &spec, &model, &conversations, Some(&train))?;
    println!(
        "wrote {} conversations to {}",
        conversations.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train_plda(args: TrainArgs) -> CliResult<()> {
    if args.iterations == 0 {
        return Err(usage("--iterations must be at least 1"));
    }
    let data = plda::read_training_jsonl(&args.data)?;
    let outcome = plda::train_em(&data, args.iterations)?;
    if outcome.ridged {
        eprintln!("warning: a degenerate scatter matrix needed the diagonal ridge");
    }
    outcome.model.save(&args.out)?;
    println!(
        "trained dim-{} model on {} vectors; final log-likelihood {:.6}",
        outcome.model.dim(),
        data.len(),
        outcome.log_likelihood.last().expect("non-empty trajectory")
    );
    Ok(())
}

fn cmd_diarize(args: DiarizeArgs) -> CliResult<()> {
    if args.speakers == 0 {
        return Err(usage("--speakers must be at least 1"));
    }
    let init_arg = args.init.unwrap_or(InitArg::Random);
    if args.method == MethodArg::KmeansPca && args.init.is_some() {
        eprintln!("warning: --init is ignored for method kmeans-pca");
    }
    if init_arg != InitArg::Random && args.speakers != 2 {
        return Err(usage("--init cos/llr requires --speakers 2"));
    }
    let config = ConvergenceConfig {
        max_iterations: args.max_iterations,
        q_tolerance: args.q_tolerance,
    };
    config.validate()?;
    let schedule = match args.method {
        MethodArg::VbDa => Some(AnnealSchedule::new(
            args.beta_init,
            args.beta_factor,
            args.beta_max,
        )?),
        _ => None,
    };

    let model_path = args
        .model
        .clone()
        .unwrap_or_else(|| args.corpus.join("model.json"));
    let model = TwoCovPlda::load(&model_path)?;
    let conversations = synth::list_conversations(&args.corpus)?;
    ensure_output_dir(&args.out, args.force)?;

    let prior = SpeakerPrior::uniform(args.speakers);
    let results: Vec<crate::error::Result<()>> = conversations
        .par_iter()
        .enumerate()
        .map(|(index, (recording_id, path))| {
            diarize_one(
                &args,
                &model,
                &prior,
                schedule.as_ref(),
                &config,
                index,
                recording_id,
                path,
            )
        })
        .collect();
    for result in results {
        result?;
    }
    println!(
        "diarized {} conversations into {}",
        conversations.len(),
        args.out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn diarize_one(
    args: &DiarizeArgs,
    model: &TwoCovPlda,
    prior: &SpeakerPrior,
    schedule: Option<&AnnealSchedule>,
    config: &ConvergenceConfig,
    index: usize,
    recording_id: &str,
    path: &Path,
) -> crate::error::Result<()> {
    let conversation = synth::load_conversation(path, recording_id)?;
    let embeddings = conversation.embeddings();
    let conv_seed = subseed(args.seed, index as u64);

    let (labels, trace) = match args.method {
        MethodArg::KmeansPca => {
            let projected = baseline::pca_project_half_energy(&embeddings)?;
            let labels = baseline::kmeans_cosine(&projected, args.speakers, conv_seed, 10)?;
            (labels, None)
        }
        MethodArg::Vb | MethodArg::VbDa => {
            let init = match args.init.unwrap_or(InitArg::Random) {
                InitArg::Random => VbInit::SegmentPosteriors(init::random_init(
                    embeddings.len(),
                    args.speakers,
                    conv_seed,
                )),
                InitArg::Cos => init::heuristic_pair_init(
                    model,
                    &embeddings,
                    &InitStrategy::heuristic(PairMetric::Cosine, conv_seed),
                )?
                .into_vb_init(),
                InitArg::Llr => init::heuristic_pair_init(
                    model,
                    &embeddings,
                    &InitStrategy::heuristic(PairMetric::PldaLlr, conv_seed),
                )?
                .into_vb_init(),
            };
            let run = vb::run_vb(model, prior, &embeddings, init, schedule, config)?;
            (vb::map_assignment(&run.state), Some(run.trace))
        }
    };

    let turns = conversation.turns_for_labels(&labels)?;
    write_atomic(
        &args.out.join(format!("{recording_id}.rttm")),
        der::rttm_to_string(&turns).as_bytes(),
    )?;
    if let Some(trace) = trace {
        let mut lines = String::new();
        for entry in &trace {
            lines.push_str(&serde_json::to_string(&entry)?);
            lines.push('\n');
        }
        write_atomic(
            &args.out.join(format!("{recording_id}.trace.jsonl")),
            lines.as_bytes(),
        )?;
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct ConversationScore {
    recording: String,
    scored_time: f64,
    miss_time: f64,
    false_alarm_time: f64,
    speaker_error_time: f64,
    der: f64,
}

#[derive(serde::Serialize)]
struct ScoreSummary {
    format_version: String,
    collar: f64,
    num_conversations: usize,
    mean_der: f64,
    sigma_der: f64,
    conversations: Vec<ConversationScore>,
}

fn read_rttm_dir(dir: &Path) -> crate::error::Result<BTreeMap<String, TurnList>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", dir.display())))?
    {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "rttm") {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::Format(format!("bad file name {}", path.display())))?
                .to_string();
            out.insert(stem, der::read_rttm(&path)?);
        }
    }
    if out.is_empty() {
        return Err(Error::Format(format!("no .rttm files in {}", dir.display())));
    }
    Ok(out)
}

fn cmd_score(args: ScoreArgs) -> CliResult<()> {
    if args.collar.is_nan() || args.collar < 0.0 {
        return Err(usage(format!("--collar must be >= 0, got {}", args.collar)));
    }
    let references = read_rttm_dir(&args.reference)?;
    let hypotheses = read_rttm_dir(&args.hypothesis)?;

    let mut scores = Vec::new();
    for (stem, reference) in &references {
        let hypothesis = hypotheses.get(stem).ok_or_else(|| {
            Error::Format(format!(
                "no hypothesis for {stem:?} under {}",
                args.hypothesis.display()
            ))
        })?;
        let report: DerReport = der::compute_der(reference, hypothesis, args.collar)?;
        scores.push(ConversationScore {
            recording: stem.clone(),
            scored_time: report.scored_time,
            miss_time: report.miss_time,
            false_alarm_time: report.false_alarm_time,
            speaker_error_time: report.speaker_error_time,
            der: report.der,
        });
    }

    let n = scores.len() as f64;
    let mean = scores.iter().map(|s| s.der).sum::<f64>() / n;
    // population standard deviation across conversations
    let sigma = (scores.iter().map(|s| (s.der - mean).powi(2)).sum::<f64>() / n).sqrt();

    let rendered = if args.json {
        let summary = ScoreSummary {
            format_version: "1".to_string(),
            collar: args.collar,
            num_conversations: scores.len(),
            mean_der: mean,
            sigma_der: sigma,
            conversations: scores,
        };
        let mut text = serde_json::to_string_pretty(&summary).map_err(Error::from)?;
        text.push('\n');
        text
    } else {
        let mut text = format!(
            "{:<12} {:>10} {:>8} {:>8} {:>8} {:>8}\n",
            "recording", "scored(s)", "miss%", "fa%", "spkerr%", "DER%"
        );
        for s in &scores {
            text.push_str(&format!(
                "{:<12} {:>10.3} {:>8.2} {:>8.2} {:>8.2} {:>8.2}\n",
                s.recording,
                s.scored_time,
                100.0 * s.miss_time / s.scored_time,
                100.0 * s.false_alarm_time / s.scored_time,
                100.0 * s.speaker_error_time / s.scored_time,
                100.0 * s.der,
            ));
        }
        text.push_str(&format!(
            "mean DER {:.2}%  sigma {:.2}%  ({} conversations)\n",
            100.0 * mean,
            100.0 * sigma,
            scores.len()
        ));
        text
    };

    match &args.out {
        Some(path) => write_atomic(path, rendered.as_bytes())?,
        None => {
            std::io::stdout()
                .write_all(rendered.as_bytes())
                .map_err(Error::from)?;
        }
    }
    Ok(())
}

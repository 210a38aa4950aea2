//! Synthetic corpus generation with ground truth.
//!
//! Conversations follow the generative story of the model: per-conversation
//! speaker vectors, per-segment labels from a dominance-controlled prior,
//! and fresh residuals. Segment timings are drawn on a millisecond grid and
//! placed back to back, so reference speech regions tile the recording and
//! a hypothesis built on the same segments can never produce miss or false
//! alarm time. The module also builds PLDA training sets mimicking
//! random-cut training data, with an optional duration-dependent residual
//! scale.
//!
//! On-disk corpus layout:
//!
//! ```text
//! corpus/
//!   metadata.json            corpus spec + format version
//!   model.json               the effective generating model
//!   train.jsonl              PLDA training set drawn from the same model
//!   embeddings/<id>.jsonl    {segment_index, start, end, vector} per line
//!   rttm/<id>.rttm           reference turns
//! ```

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use crate::der::TurnList;
use crate::error::{Error, Result};
use crate::plda::{sample_residual, sample_speaker_vector, SpeakerPrior, TwoCovPlda};
use crate::seed::{rng_from_seed, subseed};

/// On-disk corpus format revision.
pub const CORPUS_FORMAT_VERSION: &str = "1";

/// Reference duration for the residual scale: cuts of this length keep the
/// model's residual covariance unchanged.
pub const REFERENCE_CUT_SECONDS: f64 = 5.0;

/// Segment count per conversation.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub enum CountDistribution {
    Fixed(usize),
    /// Uniform over `lo..=hi`.
    Uniform { lo: usize, hi: usize },
}

impl CountDistribution {
    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        match *self {
            Self::Fixed(n) => n,
            Self::Uniform { lo, hi } => rng.random_range(lo..=hi),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Fixed(n) => n >= 1,
            Self::Uniform { lo, hi } => lo >= 1 && hi >= lo,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("bad segment-count distribution {self:?}")))
        }
    }
}

/// Segment durations, drawn on a 1 ms grid.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub enum DurationDistribution {
    FixedSeconds(f64),
    /// Uniform over the millisecond grid between `lo` and `hi` seconds.
    UniformSeconds { lo: f64, hi: f64 },
}

impl DurationDistribution {
    fn sample_ms<R: Rng>(&self, rng: &mut R) -> u64 {
        match *self {
            Self::FixedSeconds(d) => (d * 1000.0).round() as u64,
            Self::UniformSeconds { lo, hi } => {
                let lo_ms = (lo * 1000.0).round() as u64;
                let hi_ms = (hi * 1000.0).round() as u64;
                rng.random_range(lo_ms..=hi_ms)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::FixedSeconds(d) => d > 0.0,
            Self::UniformSeconds { lo, hi } => lo > 0.0 && hi >= lo,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("bad duration distribution {self:?}")))
        }
    }
}

/// Everything needed to generate a corpus deterministically.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CorpusSpec {
    pub num_conversations: usize,
    pub num_speakers_per_conversation: usize,
    pub dim: usize,
    pub segments_per_conversation: CountDistribution,
    pub segment_duration_seconds: DurationDistribution,
    /// Expected speaking-time share of the dominant speaker, in [0.5, 1).
    pub dominance: f64,
    /// Between-speaker covariance scale relative to the residual covariance.
    pub separation: f64,
    /// When true, a segment of duration T observes its residual scaled to
    /// covariance `(REFERENCE_CUT_SECONDS / T) · 𝓛⁻¹`: short segments get
    /// noisier embeddings than the (unscaled) model claims. Off by default,
    /// so oracle tests run in the model-matched regime.
    #[serde(default)]
    pub duration_residual_scaling: bool,
    pub seed: u64,
}

impl CorpusSpec {
    /// Two-speaker spec with balanced speakers, 1–5 s segments and unit
    /// separation.
    pub fn new(num_conversations: usize, dim: usize, seed: u64) -> Self {
        Self {
            num_conversations,
            num_speakers_per_conversation: 2,
            dim,
            segments_per_conversation: CountDistribution::Uniform { lo: 20, hi: 60 },
            segment_duration_seconds: DurationDistribution::UniformSeconds { lo: 1.0, hi: 5.0 },
            dominance: 0.5,
            separation: 1.0,
            duration_residual_scaling: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_conversations == 0 {
            return Err(Error::InvalidInput("num_conversations must be positive".into()));
        }
        if self.num_speakers_per_conversation == 0 {
            return Err(Error::InvalidInput("need at least one speaker".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidInput("dim must be positive".into()));
        }
        if !(0.5..1.0).contains(&self.dominance) {
            return Err(Error::InvalidInput(format!(
                "dominance must be in [0.5, 1), got {}",
                self.dominance
            )));
        }
        if self.separation.is_nan() || self.separation <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "separation must be positive, got {}",
                self.separation
            )));
        }
        self.segments_per_conversation.validate()?;
        self.segment_duration_seconds.validate()?;
        Ok(())
    }

    /// Speaker prior used per conversation: `(dominance, 1 − dominance)`
    /// for two speakers, uniform otherwise.
    pub fn prior(&self) -> SpeakerPrior {
        if self.num_speakers_per_conversation == 2 {
            SpeakerPrior::new(vec![self.dominance, 1.0 - self.dominance])
                .expect("dominance in [0.5, 1) is a valid prior")
        } else {
            SpeakerPrior::uniform(self.num_speakers_per_conversation)
        }
    }
}

/// One timed segment with its embedding; the speaker label is present for
/// synthetic data and absent for corpora loaded from disk.
#[derive(Clone, Debug)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub speaker: Option<usize>,
    pub embedding: DVector<f64>,
}

/// An ordered list of segments for one recording.
#[derive(Clone, Debug)]
pub struct Conversation {
    pub recording_id: String,
    pub segments: Vec<Segment>,
}

impl Conversation {
    pub fn embeddings(&self) -> Vec<DVector<f64>> {
        self.segments.iter().map(|s| s.embedding.clone()).collect()
    }

    /// Ground-truth turns; requires speaker labels on every segment.
    pub fn reference_turns(&self) -> Result<TurnList> {
        let labels: Option<Vec<usize>> = self.segments.iter().map(|s| s.speaker).collect();
        let labels = labels.ok_or_else(|| {
            Error::InvalidInput(format!(
                "conversation {} has unlabeled segments",
                self.recording_id
            ))
        })?;
        self.turns_for_labels(&labels)
    }

    /// Builds a turn list from per-segment labels, merging consecutive
    /// segments with the same speaker. Speaker `s` is named `spk{s}`.
    pub fn turns_for_labels(&self, labels: &[usize]) -> Result<TurnList> {
        if labels.len() != self.segments.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} segments",
                labels.len(),
                self.segments.len()
            )));
        }
        let mut turns: Vec<crate::der::Turn> = Vec::new();
        for (segment, &label) in self.segments.iter().zip(labels) {
            let name = format!("spk{label}");
            match turns.last_mut() {
                Some(last) if last.speaker == name && segment.start <= last.end + 1e-9 => {
                    last.end = segment.end;
                }
                _ => turns.push(crate::der::Turn::new(segment.start, segment.end, name)),
            }
        }
        TurnList::new(self.recording_id.clone(), turns)
    }
}

/// The model the corpus is actually drawn from: the base model with its
/// between-speaker covariance scaled by `spec.separation`.
pub fn generation_model(spec: &CorpusSpec, base: &TwoCovPlda) -> Result<TwoCovPlda> {
    if base.dim() != spec.dim {
        return Err(Error::DimensionMismatch(format!(
            "model dim {} vs corpus dim {}",
            base.dim(),
            spec.dim
        )));
    }
    base.with_between_covariance_scaled(spec.separation)
}

/// Generates the corpus. Each conversation runs on its own sub-seed stream,
/// so generation is deterministic and order-independent.
pub fn generate_corpus(spec: &CorpusSpec, base: &TwoCovPlda) -> Result<Vec<Conversation>> {
    spec.validate()?;
    let model = generation_model(spec, base)?;
    let prior = spec.prior();
    (0..spec.num_conversations)
        .map(|idx| generate_conversation(spec, &model, &prior, idx))
        .collect()
}

fn generate_conversation(
    spec: &CorpusSpec,
    model: &TwoCovPlda,
    prior: &SpeakerPrior,
    index: usize,
) -> Result<Conversation> {
    let conv_seed = subseed(spec.seed, index as u64);
    let num_segments = spec
        .segments_per_conversation
        .sample(&mut rng_from_seed(subseed(conv_seed, 0)));

    let mut duration_rng = rng_from_seed(subseed(conv_seed, 2));
    let durations_ms: Vec<u64> = (0..num_segments)
        .map(|_| spec.segment_duration_seconds.sample_ms(&mut duration_rng))
        .collect();
    let scales: Vec<f64> = durations_ms
        .iter()
        .map(|&ms| {
            if spec.duration_residual_scaling {
                (REFERENCE_CUT_SECONDS / (ms as f64 / 1000.0)).sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let (embeddings, labels) =
        crate::plda::sample_conversation_scaled(model, prior, &scales, subseed(conv_seed, 1))?;

    let mut cursor_ms: u64 = 0;
    let mut segments = Vec::with_capacity(num_segments);
    for ((embedding, label), duration_ms) in embeddings.into_iter().zip(labels).zip(durations_ms) {
        let start = cursor_ms as f64 / 1000.0;
        cursor_ms += duration_ms;
        let end = cursor_ms as f64 / 1000.0;
        segments.push(Segment {
            start,
            end,
            speaker: Some(label),
            embedding,
        });
    }
    Ok(Conversation {
        recording_id: format!("conv{index:05}"),
        segments,
    })
}

/// Configuration for [`generate_plda_training_set`].
#[derive(Clone, Debug)]
pub struct TrainingSetConfig {
    pub num_speakers: usize,
    pub cuts_per_speaker: usize,
    pub seed: u64,
    /// When set, each cut draws a duration T from this distribution and its
    /// residual covariance is scaled by `REFERENCE_CUT_SECONDS / T`, so
    /// shorter cuts yield noisier vectors. Off by default.
    pub duration_scaling: Option<DurationDistribution>,
}

impl TrainingSetConfig {
    pub fn new(num_speakers: usize, cuts_per_speaker: usize, seed: u64) -> Self {
        Self {
            num_speakers,
            cuts_per_speaker,
            seed,
            duration_scaling: None,
        }
    }
}

/// Draws a labelled training set: one speaker vector per speaker, then
/// `cuts_per_speaker` observations of it. Deterministic given the seed.
pub fn generate_plda_training_set(
    model: &TwoCovPlda,
    config: &TrainingSetConfig,
) -> Result<Vec<(String, DVector<f64>)>> {
    if config.num_speakers < 2 {
        return Err(Error::InvalidInput(format!(
            "training set needs at least 2 speakers, got {}",
            config.num_speakers
        )));
    }
    if config.cuts_per_speaker == 0 {
        return Err(Error::InvalidInput("cuts_per_speaker must be positive".into()));
    }
    if let Some(d) = &config.duration_scaling {
        d.validate()?;
    }
    let mut data = Vec::with_capacity(config.num_speakers * config.cuts_per_speaker);
    for s in 0..config.num_speakers {
        let mut rng = rng_from_seed(subseed(config.seed, s as u64));
        let speaker_vector = sample_speaker_vector(model, &mut rng);
        let speaker_id = format!("spk{s:05}");
        for _ in 0..config.cuts_per_speaker {
            let mut residual = sample_residual(model, &mut rng);
            if let Some(dist) = &config.duration_scaling {
                let duration = dist.sample_ms(&mut rng) as f64 / 1000.0;
                residual *= (REFERENCE_CUT_SECONDS / duration).sqrt();
            }
            data.push((speaker_id.clone(), &speaker_vector + residual));
        }
    }
    Ok(data)
}

#[derive(Serialize, Deserialize)]
struct SegmentRecord {
    segment_index: usize,
    start: f64,
    end: f64,
    vector: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CorpusMetadata {
    format_version: String,
    spec: CorpusSpec,
}

/// Writes the corpus directory layout described in the module docs.
/// `train` is an optional PLDA training set to store alongside.
pub fn write_corpus(
    dir: &Path,
    spec: &CorpusSpec,
    model: &TwoCovPlda,
    conversations: &[Conversation],
    train: Option<&[(String, DVector<f64>)]>,
) -> Result<()> {
    let embeddings_dir = dir.join("embeddings");
    let rttm_dir = dir.join("rttm");
    std::fs::create_dir_all(&embeddings_dir)?;
    std::fs::create_dir_all(&rttm_dir)?;

    let metadata = CorpusMetadata {
        format_version: CORPUS_FORMAT_VERSION.to_string(),
        spec: spec.clone(),
    };
    std::fs::write(
        dir.join("metadata.json"),
        serde_json::to_string_pretty(&metadata)?,
    )?;
    model.save(&dir.join("model.json"))?;
    if let Some(train) = train {
        crate::plda::write_training_jsonl(&dir.join("train.jsonl"), train)?;
    }

    for conversation in conversations {
        let mut out = std::io::BufWriter::new(std::fs::File::create(
            embeddings_dir.join(format!("{}.jsonl", conversation.recording_id)),
        )?);
        for (i, segment) in conversation.segments.iter().enumerate() {
            let record = SegmentRecord {
                segment_index: i,
                start: segment.start,
                end: segment.end,
                vector: segment.embedding.iter().copied().collect(),
            };
            writeln!(out, "{}", serde_json::to_string(&record)?)?;
        }
        crate::der::write_rttm(
            &rttm_dir.join(format!("{}.rttm", conversation.recording_id)),
            &conversation.reference_turns()?,
        )?;
    }
    Ok(())
}

/// Reads the corpus spec back from `metadata.json`.
pub fn read_corpus_spec(dir: &Path) -> Result<CorpusSpec> {
    let text = std::fs::read_to_string(dir.join("metadata.json"))?;
    let metadata: CorpusMetadata = serde_json::from_str(&text)?;
    if metadata.format_version != CORPUS_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported corpus format_version {:?}",
            metadata.format_version
        )));
    }
    Ok(metadata.spec)
}

/// Lists `(recording_id, embeddings path)` pairs of a corpus, sorted by id.
pub fn list_conversations(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let embeddings_dir = dir.join("embeddings");
    let mut out = Vec::new();
    for entry in std::fs::read_dir(&embeddings_dir).map_err(|e| {
        Error::Format(format!("not a corpus directory ({}): {e}", embeddings_dir.display()))
    })? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "jsonl") {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::Format(format!("bad file name {}", path.display())))?;
            out.push((stem.to_string(), path.clone()));
        }
    }
    if out.is_empty() {
        return Err(Error::Format(format!(
            "no conversations found under {}",
            embeddings_dir.display()
        )));
    }
    out.sort();
    Ok(out)
}

/// Loads one conversation from its embeddings file. Speaker labels are not
/// stored there, so segments come back unlabeled.
pub fn load_conversation(path: &Path, recording_id: &str) -> Result<Conversation> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut records: Vec<SegmentRecord> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SegmentRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::Format(format!("{}: no segments", path.display())));
    }
    records.sort_by_key(|r| r.segment_index);
    let segments = records
        .into_iter()
        .map(|r| Segment {
            start: r.start,
            end: r.end,
            speaker: None,
            embedding: DVector::from_vec(r.vector),
        })
        .collect();
    Ok(Conversation {
        recording_id: recording_id.to_string(),
        segments,
    })
}

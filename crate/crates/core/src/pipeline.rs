//! Command-level workflows: synthesize, train, evaluate, predict.
//!
//! Each `run_*` function leaves its artifacts in an output directory and
//! returns what the caller needs to finish the run record. The record itself
//! ([`RunManifest`]) is written last by [`write_run_manifest`], so that any
//! extra files a caller adds (plots, panels) are covered by its output hash.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baselines::{
    extrapolation_forecast, persistence_forecast, BaselineError, BlockMatching,
};
use crate::blender::{blend, rescale_probabilities, BlendError};
use crate::config::{ConfigError, KeyValues};
use crate::forecast::ForecastBundle;
use crate::grid_store::{
    samples_from_frames, window_samples, write_grid, DatasetManifest, GridError, SequenceSample,
    Split, SplitScheme, Timestamp, FRAME_MINUTES, FRAMES_PER_HOUR, HORIZON_HOURS, INPUT_FRAMES,
};
use crate::metrics::{perf_csv, report_csv, MetricError, VerificationReport, Verifier, DEFAULT_THRESHOLDS};
use crate::net::{classify_rain, load_checkpoint, ModelState, NetError, Variant};
use crate::synthetic::{sample_corpus, CorpusConfig, SceneError};
use crate::trainer::{self, RunLedger, TrainConfig, TrainError};

pub const RUN_MANIFEST: &str = "run_manifest.json";
pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const CONFIG_ECHO: &str = "config.cfg";
pub const REPORT_CSV: &str = "report.csv";
pub const PERF_CSV: &str = "perf.csv";
pub const REPORT_JSON: &str = "report.json";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Overrides the seed of any command's config.
pub const SEED_ENV: &str = "NOWCAST_SEED";

/// Files that legitimately differ between identical runs and are left out
/// of output hashes.
const UNHASHED: &[&str] = &[RUN_MANIFEST, trainer::TIMING_FILE];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Blend(#[from] BlendError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("no frame at {0} for the requested sample")]
    MissingFrame(Timestamp),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Json { path: String, msg: String },
}

/// Coarse failure class, mapped to process exit codes by the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureKind {
    Usage,
    Data,
    Numeric,
}

impl PipelineError {
    pub fn kind(&self) -> FailureKind {
        match self {
            PipelineError::Usage(_) | PipelineError::Config(_) => FailureKind::Usage,
            PipelineError::Scene(SceneError::Config(_)) => FailureKind::Usage,
            PipelineError::Train(TrainError::Config(_)) => FailureKind::Usage,
            PipelineError::Train(TrainError::NaNLoss { .. }) => FailureKind::Numeric,
            PipelineError::Train(TrainError::Net(e)) | PipelineError::Net(e) => net_kind(e),
            _ => FailureKind::Data,
        }
    }
}

fn net_kind(e: &NetError) -> FailureKind {
    match e {
        NetError::NonFinite(_) => FailureKind::Numeric,
        NetError::UnknownVariant(_) | NetError::InvalidConfig(_) => FailureKind::Usage,
        _ => FailureKind::Data,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Record of one command invocation, stored as `run_manifest.json` in the
/// artifact directory it produced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub output_dir: String,
    pub seed: u64,
    pub tool_version: String,
    /// Hash of everything the command read: effective config and input files.
    pub input_hash: String,
    /// Hash of the artifact directory, excluding this file and timing data.
    pub output_hash: String,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let path = dir.join(RUN_MANIFEST);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Json {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }
}

/// Inputs of a run, gathered by the `run_*` functions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunInputs {
    pub command: &'static str,
    pub seed: u64,
    pub input_hash: String,
}

/// Hash the finished output directory and write its single `run_manifest.json`.
pub fn write_run_manifest(
    inputs: &RunInputs,
    config_path: Option<&Path>,
    out: &Path,
) -> Result<RunManifest, PipelineError> {
    let manifest = RunManifest {
        command: inputs.command.to_string(),
        config_path: config_path.map(|p| p.display().to_string()),
        output_dir: out.display().to_string(),
        seed: inputs.seed,
        tool_version: TOOL_VERSION.to_string(),
        input_hash: inputs.input_hash.clone(),
        output_hash: content_hash(out)?,
    };
    let path = out.join(RUN_MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(manifest)
}

/// Tree hash of a directory: SHA-256 over every file's relative path and
/// content, in sorted path order. Run records and timing files are skipped.
pub fn content_hash(dir: &Path) -> Result<String, PipelineError> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for rel in files {
        let path = dir.join(&rel);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let blob = Sha256::digest(&bytes);
        h.update(rel.to_string_lossy().replace('\\', "/").as_bytes());
        h.update([0]);
        h.update(blob);
    }
    Ok(hex(&h.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), PipelineError> {
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let name = entry.file_name();
            if UNHASHED.iter().any(|u| name == *u) {
                continue;
            }
            out.push(path.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

fn hash_parts(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Apply the seed precedence: explicit value, then `NOWCAST_SEED`, then
/// whatever the config said.
pub fn resolve_seed(explicit: Option<u64>, from_config: u64) -> Result<u64, PipelineError> {
    if let Some(s) = explicit {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| PipelineError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(from_config),
    }
}

/// Parse a config file if given, else start from an empty one.
pub fn load_config(path: Option<&Path>) -> Result<KeyValues, PipelineError> {
    match path {
        None => Ok(KeyValues::default()),
        Some(p) if !p.is_file() => Err(PipelineError::Usage(format!("config file {} not found", p.display()))),
        Some(p) => Ok(KeyValues::load(p)?),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

/// Load `manifest.tsv` from a corpus directory.
pub fn open_corpus(dir: &Path) -> Result<DatasetManifest, PipelineError> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(PipelineError::Usage(format!("{} is not a corpus (no {MANIFEST_FILE})", dir.display())));
    }
    Ok(DatasetManifest::load(path)?)
}

/// Generate a synthetic corpus into `out`.
pub fn run_synth(cfg: &CorpusConfig, out: &Path) -> Result<(DatasetManifest, RunInputs), PipelineError> {
    // Frames from an earlier synth run in the same place would otherwise
    // survive a config change and pollute the output hash.
    let frames = out.join("frames");
    if frames.is_dir() && RunManifest::load(out).is_ok_and(|m| m.command == "synth") {
        fs::remove_dir_all(&frames).map_err(io_err(&frames))?;
    }
    create_dir(out)?;
    let text = cfg.to_kv().to_text();
    write_text(&out.join(CONFIG_ECHO), &text)?;
    let manifest = sample_corpus(cfg, out)?;
    Ok((
        manifest,
        RunInputs {
            command: "synth",
            seed: cfg.seed,
            input_hash: hash_parts(&[text.as_bytes()]),
        },
    ))
}

/// Train `cfg.variant` on a corpus; checkpoints and the ledger go to `out`.
pub fn run_train(
    cfg: &TrainConfig,
    corpus: &Path,
    out: &Path,
) -> Result<(ModelState, RunLedger, RunInputs), PipelineError> {
    let manifest = open_corpus(corpus)?;
    create_dir(out)?;
    let cfg = TrainConfig {
        checkpoint_dir: out.to_path_buf(),
        ..cfg.clone()
    };
    let text = cfg.to_kv().to_text();
    write_text(&out.join(CONFIG_ECHO), &text)?;
    let (state, ledger) = if cfg.variant == Variant::Classifier {
        trainer::train_classifier(&cfg, &manifest)?
    } else {
        trainer::train(&cfg, &manifest)?
    };
    let corpus_hash = content_hash(corpus)?;
    Ok((
        state,
        ledger,
        RunInputs {
            command: "train",
            seed: cfg.seed,
            input_hash: hash_parts(&[text.as_bytes(), corpus_hash.as_bytes()]),
        },
    ))
}

/// Evaluation settings, readable from the `[eval]` section of a config.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub split: Split,
    pub thresholds: Vec<f64>,
    pub hours: Vec<usize>,
    pub with_baselines: bool,
    /// Classifier checkpoint; when set, a blended model is scored too.
    pub classifier: Option<PathBuf>,
    pub scheme: SplitScheme,
    pub block_matching: BlockMatching,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            split: Split::Test,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            hours: (0..HORIZON_HOURS).collect(),
            with_baselines: false,
            classifier: None,
            scheme: SplitScheme::default(),
            block_matching: BlockMatching::default(),
        }
    }
}

const EVAL_KEYS: &[&str] = &[
    "eval.split",
    "eval.thresholds",
    "eval.hours",
    "eval.with_baselines",
    "eval.classifier",
    "data.eval_year",
    "data.val_last_day",
    "baseline.block",
    "baseline.radius",
    "baseline.energy_floor",
];

impl EvalConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self, ConfigError> {
        kv.reject_unknown(EVAL_KEYS)?;
        let mut c = EvalConfig::default();
        if let Some(s) = kv.raw("eval.split") {
            c.split = Split::parse(s).ok_or_else(|| kv.invalid("eval.split", format!("{s:?}: expected train, val or test")))?;
        }
        if let Some(t) = kv.get_list::<f64>("eval.thresholds")? {
            c.thresholds = t;
        }
        if let Some(h) = kv.get_list::<usize>("eval.hours")? {
            c.hours = h;
        }
        if let Some(b) = kv.get("eval.with_baselines")? {
            c.with_baselines = b;
        }
        c.classifier = kv.raw("eval.classifier").map(PathBuf::from);
        if let Some(v) = kv.get("data.eval_year")? {
            c.scheme.eval_year = v;
        }
        if let Some(v) = kv.get("data.val_last_day")? {
            c.scheme.val_last_day = v;
        }
        if let Some(v) = kv.get("baseline.block")? {
            c.block_matching.block = v;
        }
        if let Some(v) = kv.get("baseline.radius")? {
            c.block_matching.radius = v;
        }
        if let Some(v) = kv.get("baseline.energy_floor")? {
            c.block_matching.energy_floor = v;
        }
        c.validate().map_err(|(key, msg)| kv.invalid(key, msg))?;
        Ok(c)
    }

    pub fn to_kv(&self) -> KeyValues {
        let join = |v: Vec<String>| v.join(", ");
        let mut kv = KeyValues::default();
        kv.set("eval.split", self.split);
        kv.set("eval.thresholds", join(self.thresholds.iter().map(f64::to_string).collect()));
        kv.set("eval.hours", join(self.hours.iter().map(usize::to_string).collect()));
        kv.set("eval.with_baselines", self.with_baselines);
        if let Some(c) = &self.classifier {
            kv.set("eval.classifier", c.display());
        }
        kv.set("data.eval_year", self.scheme.eval_year);
        kv.set("data.val_last_day", self.scheme.val_last_day);
        kv.set("baseline.block", self.block_matching.block);
        kv.set("baseline.radius", self.block_matching.radius);
        kv.set("baseline.energy_floor", self.block_matching.energy_floor);
        kv
    }

    /// `Err((key, message))` for the first bad field.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.thresholds.is_empty() || self.thresholds.iter().any(|t| !t.is_finite()) {
            return Err(("eval.thresholds", "need at least one finite threshold".into()));
        }
        if self.hours.is_empty() {
            return Err(("eval.hours", "need at least one hour".into()));
        }
        if let Some(h) = self.hours.iter().find(|&&h| h >= HORIZON_HOURS) {
            return Err(("eval.hours", format!("hour {h} is beyond the {HORIZON_HOURS}-hour horizon")));
        }
        Ok(())
    }
}

/// Load every complete window of a split, in anchor order.
pub fn split_samples(
    manifest: &DatasetManifest,
    scheme: &SplitScheme,
    split: Split,
) -> Result<Vec<SequenceSample>, PipelineError> {
    let part = manifest.split(scheme, split);
    let samples = window_samples(&part).collect::<Result<Vec<_>, _>>()?;
    if samples.is_empty() {
        return Err(TrainError::EmptySplit(split).into());
    }
    Ok(samples)
}

/// Forecast every sample, spreading the work over the available cores.
/// Output order matches `samples`, so downstream sums are reproducible.
pub fn forecast_all<F>(samples: &[SequenceSample], forecaster: F) -> Result<Vec<ForecastBundle>, PipelineError>
where
    F: Fn(&SequenceSample) -> Result<ForecastBundle, PipelineError> + Sync,
{
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(samples.len().max(1));
    if workers <= 1 {
        return samples.iter().map(&forecaster).collect();
    }
    let chunk = samples.len().div_ceil(workers);
    let f = &forecaster;
    let parts: Vec<Result<Vec<ForecastBundle>, PipelineError>> = std::thread::scope(|s| {
        let handles: Vec<_> = samples
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(f).collect::<Result<Vec<_>, _>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("forecast worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(samples.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn score(
    samples: &[SequenceSample],
    forecasts: &[ForecastBundle],
    cfg: &EvalConfig,
    name: &str,
) -> Result<VerificationReport, PipelineError> {
    let mut v = Verifier::new(&cfg.thresholds, &cfg.hours);
    for (s, f) in samples.iter().zip(forecasts) {
        v.add(s, f)?;
    }
    Ok(v.finish(name, cfg.split)?)
}

/// Name under which a blended model is reported.
pub fn blend_name(model: &str) -> String {
    format!("Blend({model})")
}

/// Score a checkpoint on a split, plus baselines and a blend when asked.
/// Writes `report.csv`, `perf.csv` and `report.json` to `out`.
pub fn run_eval(
    checkpoint: &Path,
    corpus: &Path,
    cfg: &EvalConfig,
    out: &Path,
) -> Result<(Vec<VerificationReport>, RunInputs), PipelineError> {
    cfg.validate().map_err(|(k, m)| PipelineError::Usage(format!("{k}: {m}")))?;
    let state = load_checkpoint(checkpoint)?;
    let manifest = open_corpus(corpus)?;
    let samples = split_samples(&manifest, &cfg.scheme, cfg.split)?;
    create_dir(out)?;
    let text = cfg.to_kv().to_text();
    write_text(&out.join(CONFIG_ECHO), &text)?;

    let predictions = forecast_all(&samples, |s| Ok(state.predict(s)?))?;
    let mut reports = vec![score(&samples, &predictions, cfg, state.variant.tag())?];
    let persistence = forecast_all(&samples, |s| Ok(persistence_forecast(s, FRAME_MINUTES)?))?;
    if cfg.with_baselines {
        reports.push(score(&samples, &persistence, cfg, &persistence[0].source)?);
        let older = forecast_all(&samples, |s| Ok(persistence_forecast(s, 2 * FRAME_MINUTES)?))?;
        reports.push(score(&samples, &older, cfg, &older[0].source)?);
        let extrap = forecast_all(&samples, |s| Ok(extrapolation_forecast(s, &cfg.block_matching)?))?;
        reports.push(score(&samples, &extrap, cfg, &extrap[0].source)?);
    }
    let mut classifier_bytes = Vec::new();
    if let Some(path) = &cfg.classifier {
        classifier_bytes = fs::read(path).map_err(io_err(path))?;
        let clf = load_checkpoint(path)?;
        if clf.variant != Variant::Classifier {
            return Err(PipelineError::Usage(format!(
                "{} holds a {} model, not a classifier",
                path.display(),
                clf.variant
            )));
        }
        let blended: Vec<ForecastBundle> = samples
            .iter()
            .zip(predictions.iter().zip(&persistence))
            .map(|(s, (m, p))| {
                let w = rescale_probabilities(&classify_rain(&clf, s)?)?;
                let mut b = blend(&w, m, p)?;
                b.source = blend_name(&m.source);
                Ok(b)
            })
            .collect::<Result<_, PipelineError>>()?;
        reports.push(score(&samples, &blended, cfg, &blend_name(state.variant.tag()))?);
    }

    write_reports(&reports, out)?;
    let ckpt_bytes = fs::read(checkpoint).map_err(io_err(checkpoint))?;
    let corpus_hash = content_hash(corpus)?;
    Ok((
        reports,
        RunInputs {
            command: "eval",
            seed: state.seed,
            input_hash: hash_parts(&[text.as_bytes(), &ckpt_bytes, &classifier_bytes, corpus_hash.as_bytes()]),
        },
    ))
}

/// Write the CSV tables and the JSON form of a set of reports.
pub fn write_reports(reports: &[VerificationReport], out: &Path) -> Result<(), PipelineError> {
    write_text(&out.join(REPORT_CSV), &report_csv(reports))?;
    write_text(&out.join(PERF_CSV), &perf_csv(reports))?;
    let json = serde_json::to_string_pretty(reports).expect("reports serialize");
    write_text(&out.join(REPORT_JSON), &(json + "\n"))
}

/// Read reports written by [`write_reports`].
pub fn read_reports(dir: &Path) -> Result<Vec<VerificationReport>, PipelineError> {
    let path = dir.join(REPORT_JSON);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Json {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

/// The sample anchored at `anchor`, or [`PipelineError::MissingFrame`] for
/// the first of its 24 frames absent from the corpus.
pub fn sample_at(manifest: &DatasetManifest, anchor: Timestamp) -> Result<SequenceSample, PipelineError> {
    let first = anchor.offset(-(INPUT_FRAMES as i64) * FRAME_MINUTES);
    let total = INPUT_FRAMES + HORIZON_HOURS * FRAMES_PER_HOUR;
    let mut frames = Vec::with_capacity(total);
    for k in 0..total as i64 {
        let ts = first.offset(k * FRAME_MINUTES);
        let entry = manifest
            .entries
            .iter()
            .find(|e| e.timestamp == ts)
            .ok_or(PipelineError::MissingFrame(ts))?;
        frames.push(manifest.load_frame(entry)?);
    }
    let mut samples = samples_from_frames(&frames)?;
    Ok(samples.remove(0))
}

/// What `run_predict` produced.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub sample: SequenceSample,
    pub forecast: ForecastBundle,
    pub files: Vec<PathBuf>,
}

/// Forecast one sample and write `pred_h{h}.nwg` (plus `attn_h{h}.nwg` for
/// attention models) into `out`. Without an anchor, the first complete
/// test-split sample is used.
pub fn run_predict(
    checkpoint: &Path,
    corpus: &Path,
    anchor: Option<Timestamp>,
    scheme: &SplitScheme,
    out: &Path,
) -> Result<(Prediction, RunInputs), PipelineError> {
    let state = load_checkpoint(checkpoint)?;
    let manifest = open_corpus(corpus)?;
    let sample = match anchor {
        Some(a) => sample_at(&manifest, a)?,
        None => {
            let part = manifest.split(scheme, Split::Test);
            window_samples(&part)
                .next()
                .ok_or(TrainError::EmptySplit(Split::Test))??
        }
    };
    let forecast = state.predict(&sample)?;
    create_dir(out)?;
    let mut files = Vec::new();
    for h in 0..forecast.hours() {
        let p = out.join(format!("pred_h{h}.nwg"));
        write_grid(&p, &forecast.prediction_grid(h)?)?;
        files.push(p);
        if let Some(a) = forecast.attention_grid(h) {
            let p = out.join(format!("attn_h{h}.nwg"));
            write_grid(&p, &a?)?;
            files.push(p);
        }
    }
    let ckpt_bytes = fs::read(checkpoint).map_err(io_err(checkpoint))?;
    let anchor_text = sample.anchor.0.to_string();
    let mut frame_bytes = Vec::new();
    for g in sample.rain_in.iter().chain(&sample.radar_in) {
        frame_bytes.extend(g.values().iter().flat_map(|v| v.to_le_bytes()));
    }
    let inputs = RunInputs {
        command: "predict",
        seed: state.seed,
        input_hash: hash_parts(&[&ckpt_bytes, anchor_text.as_bytes(), &frame_bytes]),
    };
    Ok((Prediction { sample, forecast, files }, inputs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_hash_ignores_run_records_and_order() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        fs::create_dir(a.path().join("sub")).unwrap();
        fs::create_dir(b.path().join("sub")).unwrap();
        fs::write(a.path().join("x"), b"1").unwrap();
        fs::write(a.path().join("sub/y"), b"2").unwrap();
        fs::write(b.path().join("sub/y"), b"2").unwrap();
        fs::write(b.path().join("x"), b"1").unwrap();
        fs::write(b.path().join(RUN_MANIFEST), b"{}").unwrap();
        fs::write(b.path().join(trainer::TIMING_FILE), b"0.3").unwrap();
        assert_eq!(content_hash(a.path()).unwrap(), content_hash(b.path()).unwrap());
        fs::write(b.path().join("x"), b"2").unwrap();
        assert_ne!(content_hash(a.path()).unwrap(), content_hash(b.path()).unwrap());
    }

    #[test]
    fn eval_config_round_trip_and_errors() {
        let kv = KeyValues::parse("[eval]\nsplit = val\nhours = 0, 2\nthresholds = 1, 5\n").unwrap();
        let c = EvalConfig::from_kv(&kv).unwrap();
        assert_eq!(c.split, Split::Val);
        assert_eq!(c.hours, vec![0, 2]);
        assert_eq!(EvalConfig::from_kv(&c.to_kv()).unwrap(), c);
        let bad = KeyValues::parse("\n[eval]\nhours = 0, 3\n").unwrap();
        assert!(matches!(EvalConfig::from_kv(&bad), Err(ConfigError::Invalid { line: 3, .. })));
    }

    #[test]
    fn failure_kinds() {
        assert_eq!(PipelineError::Usage("x".into()).kind(), FailureKind::Usage);
        assert_eq!(PipelineError::MissingFrame(Timestamp(0)).kind(), FailureKind::Data);
        let nan = TrainError::NaNLoss {
            what: "training loss",
            epoch: 0,
            batch: 0,
            last_checkpoint: None,
        };
        assert_eq!(PipelineError::from(nan).kind(), FailureKind::Numeric);
    }
}

//! Training loop, run ledger, and split evaluation.
//!
//! Each batch runs one discriminator step and then one predictor step when
//! the variant is adversarial, otherwise a single predictor step. Gradients
//! are clipped to a global norm before every Adam update. The returned model
//! is the epoch with the lowest validation prediction loss, read back from
//! its checkpoint so that in-memory and on-disk weights agree exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use autograd::{Adam, Graph, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::forecast::ForecastBundle;
use crate::grid_store::{
    fit_norm_stats, window_samples, DatasetManifest, GridError, NormStats, SequenceSample, Split, SplitScheme,
};
use crate::losses::{self, graph as lg, BaseLoss, LossError, LossSpec, BALANCED_CUTOFF};
use crate::metrics::{MetricError, VerificationReport, Verifier, DEFAULT_THRESHOLDS};
use crate::net::{self, discriminate, load_checkpoint, save_checkpoint, Head, ModelState, NetConfig, NetError, Variant};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("split {0:?} has no complete samples")]
    EmptySplit(Split),
    #[error("non-finite {what} at epoch {epoch}, batch {batch}; last good checkpoint: {}", last_checkpoint.as_ref().map_or("none".to_string(), |p| p.display().to_string()))]
    NaNLoss {
        what: &'static str,
        epoch: usize,
        batch: usize,
        last_checkpoint: Option<PathBuf>,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub clip_norm: f64,
    pub loss: LossSpec,
    pub seed: u64,
    pub checkpoint_dir: PathBuf,
    /// Encoder stage widths.
    pub channels: Vec<usize>,
    /// Keep every `sample_stride`-th window of a split.
    pub sample_stride: usize,
    pub max_train_samples: Option<usize>,
    pub max_val_samples: Option<usize>,
    pub split: SplitScheme,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::GruWmae,
            lr: 1e-4,
            batch_size: 4,
            epochs: 15,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: 1.0,
            loss: LossSpec::default(),
            seed: 0,
            checkpoint_dir: PathBuf::from("checkpoints"),
            channels: vec![32, 64, 96],
            sample_stride: 1,
            max_train_samples: None,
            max_val_samples: None,
            split: SplitScheme::default(),
        }
    }
}

pub const DEFAULT_W_ADV: f64 = 0.05;
pub const DEFAULT_W_BAL: f64 = 0.01;

const KEYS: &[&str] = &[
    "seed",
    "train.variant",
    "train.lr",
    "train.batch_size",
    "train.epochs",
    "train.beta1",
    "train.beta2",
    "train.adam_eps",
    "train.clip_norm",
    "train.checkpoint_dir",
    "loss.base",
    "loss.threshold",
    "loss.w_adv",
    "loss.w_bal",
    "net.channels",
    "data.sample_stride",
    "data.max_train",
    "data.max_val",
    "data.eval_year",
    "data.val_last_day",
];

impl TrainConfig {
    /// Defaults for `variant`, including its loss mix.
    pub fn for_variant(variant: Variant) -> Self {
        let mut c = TrainConfig {
            variant,
            ..Self::default()
        };
        c.loss = Self::loss_for(variant, None, None, BaseLoss::Wmae, losses::DEFAULT_THRESHOLD);
        c
    }

    fn loss_for(variant: Variant, w_adv: Option<f64>, w_bal: Option<f64>, base: BaseLoss, threshold: f64) -> LossSpec {
        LossSpec {
            base,
            threshold,
            w_adv: if variant.has_discriminator() {
                w_adv.unwrap_or(DEFAULT_W_ADV)
            } else {
                w_adv.unwrap_or(0.0)
            },
            w_bal: if variant.has_balanced() {
                w_bal.unwrap_or(DEFAULT_W_BAL)
            } else {
                w_bal.unwrap_or(0.0)
            },
        }
    }

    /// Read from a key-value file. Unknown keys and bad values are errors
    /// carrying the offending line.
    pub fn from_kv(kv: &KeyValues) -> Result<Self, ConfigError> {
        kv.reject_unknown(KEYS)?;
        let mut c = TrainConfig::default();
        if let Some(v) = kv.raw("train.variant") {
            c.variant = v
                .parse()
                .map_err(|e: NetError| kv.invalid("train.variant", e.to_string()))?;
        }
        macro_rules! set {
            ($field:expr, $key:literal) => {
                if let Some(v) = kv.get($key)? {
                    $field = v;
                }
            };
        }
        set!(c.seed, "seed");
        set!(c.lr, "train.lr");
        set!(c.batch_size, "train.batch_size");
        set!(c.epochs, "train.epochs");
        set!(c.beta1, "train.beta1");
        set!(c.beta2, "train.beta2");
        set!(c.adam_eps, "train.adam_eps");
        set!(c.clip_norm, "train.clip_norm");
        set!(c.sample_stride, "data.sample_stride");
        set!(c.split.eval_year, "data.eval_year");
        set!(c.split.val_last_day, "data.val_last_day");
        if let Some(p) = kv.raw("train.checkpoint_dir") {
            c.checkpoint_dir = PathBuf::from(p);
        }
        if let Some(ch) = kv.get_list("net.channels")? {
            c.channels = ch;
        }
        c.max_train_samples = kv.get("data.max_train")?;
        c.max_val_samples = kv.get("data.max_val")?;
        let base = match kv.raw("loss.base") {
            None | Some("wmae") => BaseLoss::Wmae,
            Some("wmse") => BaseLoss::Wmse,
            Some(other) => return Err(kv.invalid("loss.base", format!("{other:?}: expected wmae or wmse"))),
        };
        let threshold = kv.get("loss.threshold")?.unwrap_or(losses::DEFAULT_THRESHOLD);
        c.loss = Self::loss_for(c.variant, kv.get("loss.w_adv")?, kv.get("loss.w_bal")?, base, threshold);
        c.validate().map_err(|msg| {
            let key = KEYS
                .iter()
                .find(|k| msg.starts_with(**k))
                .copied()
                .unwrap_or("train.variant");
            kv.invalid(key, msg)
        })?;
        Ok(c)
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("seed", self.seed);
        kv.set("train.variant", self.variant);
        kv.set("train.lr", self.lr);
        kv.set("train.batch_size", self.batch_size);
        kv.set("train.epochs", self.epochs);
        kv.set("train.beta1", self.beta1);
        kv.set("train.beta2", self.beta2);
        kv.set("train.adam_eps", self.adam_eps);
        kv.set("train.clip_norm", self.clip_norm);
        kv.set("train.checkpoint_dir", self.checkpoint_dir.display());
        kv.set(
            "loss.base",
            match self.loss.base {
                BaseLoss::Wmae => "wmae",
                BaseLoss::Wmse => "wmse",
            },
        );
        kv.set("loss.threshold", self.loss.threshold);
        kv.set("loss.w_adv", self.loss.w_adv);
        kv.set("loss.w_bal", self.loss.w_bal);
        kv.set(
            "net.channels",
            self.channels.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", "),
        );
        kv.set("data.sample_stride", self.sample_stride);
        if let Some(m) = self.max_train_samples {
            kv.set("data.max_train", m);
        }
        if let Some(m) = self.max_val_samples {
            kv.set("data.max_val", m);
        }
        kv.set("data.eval_year", self.split.eval_year);
        kv.set("data.val_last_day", self.split.val_last_day);
        kv
    }

    /// Messages start with the key at fault.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(format!("train.lr must be > 0, got {}", self.lr));
        }
        if self.epochs == 0 {
            return Err("train.epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return Err("train.batch_size must be >= 1".into());
        }
        if self.sample_stride == 0 {
            return Err("data.sample_stride must be >= 1".into());
        }
        if !(self.clip_norm > 0.0) {
            return Err("train.clip_norm must be > 0".into());
        }
        if let Err(e) = self.loss.validate() {
            return Err(format!("loss.w_adv / loss.w_bal: {e}"));
        }
        if self.variant.has_discriminator() != self.loss.uses_adv() {
            return Err(format!(
                "loss.w_adv must be > 0 exactly when the variant has a discriminator ({})",
                self.variant
            ));
        }
        if self.variant.has_balanced() != self.loss.uses_bal() {
            return Err(format!(
                "loss.w_bal must be > 0 exactly for the balanced variant ({})",
                self.variant
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_lpred: f64,
    pub d_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLedger {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Index of the first minimum.
pub fn best_epoch(val_losses: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in val_losses.iter().enumerate() {
        if v < val_losses[best] {
            best = i;
        }
    }
    best
}

impl RunLedger {
    fn push(&mut self, r: EpochRecord) {
        self.epochs.push(r);
        let vals: Vec<f64> = self.epochs.iter().map(|e| e.val_lpred).collect();
        self.best_epoch = best_epoch(&vals);
    }

    pub fn val_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val_lpred).collect()
    }

    /// Loss columns only, so equal runs give equal files.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_lpred,d_loss,best\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.epoch,
                e.train_loss,
                e.val_lpred,
                e.d_loss.map_or("NA".to_string(), |d| d.to_string()),
                (e.epoch == self.best_epoch) as u8
            );
        }
        out
    }

    /// Wall-clock seconds per epoch.
    pub fn timing_csv(&self) -> String {
        let mut out = String::from("epoch,seconds\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{:.3}", e.epoch, e.seconds);
        }
        out
    }

    /// Same records with timings zeroed, for comparing runs.
    pub fn without_timing(&self) -> RunLedger {
        let mut l = self.clone();
        l.epochs.iter_mut().for_each(|e| e.seconds = 0.0);
        l
    }
}

/// Complete samples of one split, thinned by `stride` and capped at `max`.
pub fn load_split(
    manifest: &DatasetManifest,
    scheme: &SplitScheme,
    split: Split,
    stride: usize,
    max: Option<usize>,
) -> Result<Vec<SequenceSample>, TrainError> {
    let part = manifest.split(scheme, split);
    let mut out = Vec::new();
    for (i, s) in window_samples(&part).enumerate() {
        if i % stride.max(1) != 0 {
            continue;
        }
        if max.is_some_and(|m| out.len() >= m) {
            break;
        }
        out.push(s?);
    }
    if out.is_empty() {
        return Err(TrainError::EmptySplit(split));
    }
    Ok(out)
}

/// Normalization fitted on every frame of the training split.
pub fn fit_training_norm(manifest: &DatasetManifest, scheme: &SplitScheme) -> Result<NormStats, TrainError> {
    let part = manifest.split(scheme, Split::Train);
    let frames = part
        .entries
        .iter()
        .map(|e| part.load_frame(e))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(fit_norm_stats(frames.iter().map(|f| &f.0), frames.iter().map(|f| &f.1))?)
}

/// Targets of a batch as `[N, T, H, W]` in mm/hr.
fn target_tensor(samples: &[&SequenceSample]) -> Tensor {
    let (h, w) = (samples[0].height(), samples[0].width());
    let t = samples[0].targets.len();
    let mut data = Vec::with_capacity(samples.len() * t * h * w);
    for s in samples {
        for tg in &s.targets {
            data.extend_from_slice(&tg.values);
        }
    }
    Tensor::from_vec(&[samples.len(), t, h, w], data)
}

fn stack_hours(g: &mut Graph, maps: &[Var]) -> Var {
    g.concat_channels(maps)
}

struct StepOutcome {
    g_loss: f64,
    d_loss: Option<f64>,
}

fn train_step(
    state: &mut ModelState,
    cfg: &TrainConfig,
    batch: &[&SequenceSample],
    opt_g: &mut Adam,
    opt_d: &mut Adam,
) -> Result<StepOutcome, TrainError> {
    let n = batch.len();
    let targets = target_tensor(batch);
    let mut g = Graph::new();
    g.freeze_prefix("disc.");
    let out = state.generate(&mut g, batch)?;
    let pred_norm = stack_hours(&mut g, &out.scaled);

    let g_loss = match state.config.head {
        Head::Probability => {
            let labels = targets.map(|y| (y >= BALANCED_CUTOFF) as u8 as f64);
            lg::bce(&mut g, pred_norm, &labels)
        }
        Head::Rain => {
            let pred = g.scale(pred_norm, state.norm.rain_q95);
            let l_pred = lg::l_pred(&mut g, &cfg.loss, &targets, pred);
            if cfg.loss.uses_bal() {
                let l_bal = lg::balanced(&mut g, &targets, pred);
                lg::mix(&mut g, l_pred, l_bal, cfg.loss.w_bal)
            } else {
                l_pred
            }
        }
    };

    let mut d_loss = None;
    let total = if cfg.loss.uses_adv() {
        // Discriminator step on detached predictions.
        let fake = g.value(pred_norm).clone();
        let real = targets.map(|y| y / state.norm.rain_q95);
        let mut gd = Graph::new();
        gd.freeze_prefix("pred.");
        gd.freeze_prefix("attn.");
        let (r, f) = (gd.constant(real), gd.constant(fake));
        let dr = discriminate(&mut gd, state, r)?;
        let df = discriminate(&mut gd, state, f)?;
        let ld = lg::d_loss(&mut gd, dr, df, n);
        let dl = gd.value(ld).item();
        if !dl.is_finite() {
            return Ok(StepOutcome {
                g_loss: f64::NAN,
                d_loss: Some(dl),
            });
        }
        let grads = gd.backward(ld);
        opt_d.step(&mut state.params, &grads.params());
        d_loss = Some(dl);

        // Predictor step against the updated discriminator, which the graph
        // binds only now and keeps frozen.
        let scores = discriminate(&mut g, state, pred_norm)?;
        let l_gd = lg::g_adv(&mut g, scores, n);
        lg::mix(&mut g, g_loss, l_gd, cfg.loss.w_adv)
    } else {
        g_loss
    };
    let value = g.value(total).item();
    if value.is_finite() {
        let grads = g.backward(total);
        opt_g.step(&mut state.params, &grads.params());
    }
    Ok(StepOutcome { g_loss: value, d_loss })
}

/// Mean per-sample validation loss: `L_Pred` in mm/hr for rain models, BCE
/// for the classifier.
pub fn validation_loss(state: &ModelState, loss: &LossSpec, samples: &[SequenceSample]) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for s in samples {
        let f = state.predict(s)?;
        let y: Vec<f64> = s.targets.iter().flat_map(|t| t.values.iter().copied()).collect();
        let p: Vec<f64> = f.predictions.concat();
        total += match state.config.head {
            Head::Rain => loss.l_pred(&y, &p)?,
            Head::Probability => bce(&y, &p),
        };
    }
    Ok(total / samples.len() as f64)
}

fn bce(targets: &[f64], probs: &[f64]) -> f64 {
    let s: f64 = targets
        .iter()
        .zip(probs)
        .map(|(&y, &p)| {
            let p = p.clamp(losses::LOG_EPS, 1.0 - losses::LOG_EPS);
            if y >= BALANCED_CUTOFF {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    s / targets.len() as f64
}

fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch_{epoch:02}.nwck"))
}

pub const BEST_CHECKPOINT: &str = "best.nwck";
pub const LEDGER_FILE: &str = "ledger.csv";
pub const TIMING_FILE: &str = "timing.csv";

/// Train on the manifest's training split, selecting the best epoch on the
/// validation split. Writes per-epoch checkpoints, `best.nwck`,
/// `ledger.csv` and `timing.csv` into `cfg.checkpoint_dir`.
pub fn train(cfg: &TrainConfig, manifest: &DatasetManifest) -> Result<(ModelState, RunLedger), TrainError> {
    cfg.validate()
        .map_err(|m| TrainError::Config(ConfigError::Invalid { line: 0, key: "train".into(), msg: m }))?;
    let train_set = load_split(manifest, &cfg.split, Split::Train, cfg.sample_stride, cfg.max_train_samples)?;
    let val_set = load_split(manifest, &cfg.split, Split::Val, cfg.sample_stride, cfg.max_val_samples)?;
    let norm = fit_training_norm(manifest, &cfg.split)?;
    let (h, w) = (train_set[0].height(), train_set[0].width());
    let state = ModelState::init(NetConfig::new(h, w, &cfg.channels), cfg.variant, norm, cfg.seed)?;
    train_model(cfg, state, &train_set, &val_set)
}

/// Classifier for the blend weights; same loop, pixelwise BCE against
/// `target >= 0.5 mm/hr` labels.
pub fn train_classifier(cfg: &TrainConfig, manifest: &DatasetManifest) -> Result<(ModelState, RunLedger), TrainError> {
    let cfg = TrainConfig {
        variant: Variant::Classifier,
        loss: LossSpec {
            w_adv: 0.0,
            w_bal: 0.0,
            ..cfg.loss
        },
        ..cfg.clone()
    };
    train(&cfg, manifest)
}

/// The loop itself, on preloaded samples and an initialized model.
pub fn train_model(
    cfg: &TrainConfig,
    mut state: ModelState,
    train_set: &[SequenceSample],
    val_set: &[SequenceSample],
) -> Result<(ModelState, RunLedger), TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit(Split::Train));
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptySplit(Split::Val));
    }
    let dir = &cfg.checkpoint_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let adam = |lr| {
        let mut a = Adam::new(lr).with_clip_norm(cfg.clip_norm);
        a.beta1 = cfg.beta1;
        a.beta2 = cfg.beta2;
        a.eps = cfg.adam_eps;
        a
    };
    let (mut opt_g, mut opt_d) = (adam(cfg.lr), adam(cfg.lr));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ledger = RunLedger::default();
    let mut last_good: Option<PathBuf> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let (mut g_sum, mut d_sum, mut batches) = (0.0, 0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&SequenceSample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let step = train_step(&mut state, cfg, &batch, &mut opt_g, &mut opt_d)?;
            let nan = |what| TrainError::NaNLoss {
                what,
                epoch,
                batch: b,
                last_checkpoint: last_good.clone(),
            };
            if step.d_loss.is_some_and(|d| !d.is_finite()) {
                fs::write(dir.join(LEDGER_FILE), ledger.to_csv()).map_err(io_err(dir))?;
                return Err(nan("discriminator loss"));
            }
            if !step.g_loss.is_finite() {
                fs::write(dir.join(LEDGER_FILE), ledger.to_csv()).map_err(io_err(dir))?;
                return Err(nan("training loss"));
            }
            if state.check_finite().is_err() {
                fs::write(dir.join(LEDGER_FILE), ledger.to_csv()).map_err(io_err(dir))?;
                return Err(nan("parameters"));
            }
            g_sum += step.g_loss;
            d_sum += step.d_loss.unwrap_or(0.0);
            batches += 1;
        }
        let path = checkpoint_path(dir, epoch);
        save_checkpoint(&state, &path)?;
        let saved = load_checkpoint(&path)?;
        let val = validation_loss(&saved, &cfg.loss, val_set)?;
        if !val.is_finite() {
            return Err(TrainError::NaNLoss {
                what: "validation loss",
                epoch,
                batch: batches,
                last_checkpoint: last_good,
            });
        }
        last_good = Some(path);
        ledger.push(EpochRecord {
            epoch,
            train_loss: g_sum / batches as f64,
            val_lpred: val,
            d_loss: cfg.loss.uses_adv().then(|| d_sum / batches as f64),
            seconds: started.elapsed().as_secs_f64(),
        });
        fs::write(dir.join(LEDGER_FILE), ledger.to_csv()).map_err(io_err(dir))?;
        fs::write(dir.join(TIMING_FILE), ledger.timing_csv()).map_err(io_err(dir))?;
    }
    let best = checkpoint_path(dir, ledger.best_epoch);
    let best_file = dir.join(BEST_CHECKPOINT);
    fs::copy(&best, &best_file).map_err(io_err(&best_file))?;
    Ok((load_checkpoint(&best_file)?, ledger))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub thresholds: Vec<f64>,
    pub hours: Vec<usize>,
    pub scheme: SplitScheme,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            hours: vec![0, 1, 2],
            scheme: SplitScheme::default(),
        }
    }
}

/// Score any forecaster over every complete sample of a split.
pub fn evaluate_with<F>(
    manifest: &DatasetManifest,
    split: Split,
    opts: &EvalOptions,
    name: &str,
    mut forecaster: F,
) -> Result<VerificationReport, TrainError>
where
    F: FnMut(&SequenceSample) -> Result<ForecastBundle, TrainError>,
{
    let part = manifest.split(&opts.scheme, split);
    let mut verifier = Verifier::new(&opts.thresholds, &opts.hours);
    let mut any = false;
    for s in window_samples(&part) {
        let s = s?;
        let f = forecaster(&s)?;
        verifier.add(&s, &f)?;
        any = true;
    }
    if !any {
        return Err(TrainError::EmptySplit(split));
    }
    Ok(verifier.finish(name, split)?)
}

pub fn evaluate_model(
    state: &ModelState,
    manifest: &DatasetManifest,
    split: Split,
    opts: &EvalOptions,
) -> Result<VerificationReport, TrainError> {
    evaluate_with(manifest, split, opts, state.variant.tag(), |s| Ok(state.predict(s)?))
}

/// Load a checkpoint file and score it.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    manifest: &DatasetManifest,
    split: Split,
    opts: &EvalOptions,
) -> Result<VerificationReport, TrainError> {
    let state = net::load_checkpoint(checkpoint)?;
    evaluate_model(&state, manifest, split, opts)
}

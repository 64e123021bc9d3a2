//! The learnable model: ConvGRU encoder and forecaster, the chained
//! attention module, the dense discriminator, and the rain/no-rain
//! classifier used for blending.
//!
//! Parameters live in one [`ParamStore`] with name prefixes `pred.`,
//! `attn.` and `disc.`, so a training step can freeze whole submodules.

mod checkpoint;
mod layers;

use std::fmt;
use std::str::FromStr;

use autograd::{Graph, ParamStore, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::ForecastBundle;
use crate::grid_store::{NormStats, SequenceSample, HORIZON_HOURS, INPUT_FRAMES};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use layers::{attention_step, classify_rain, convgru_step, discriminate, encode, forecast, GateOverride};

pub const ATTENTION_CHANNELS: [usize; 5] = [16, 32, 32, 32, 1];
pub const STAGES: usize = 3;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("unknown variant {0:?}; valid tags: {tags}", tags = Variant::TAGS.join(", "))]
    UnknownVariant(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersionMismatch { found: u32, expected: u32 },
    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("non-finite parameters in {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which model a run trains. The tag strings follow the ablation naming.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    GruWmae,
    GruWmaeBal,
    GruWmaeAdv,
    GruWmaeAtn,
    GruWmaeAdvAtn,
    Classifier,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::GruWmae,
        Variant::GruWmaeBal,
        Variant::GruWmaeAdv,
        Variant::GruWmaeAtn,
        Variant::GruWmaeAdvAtn,
        Variant::Classifier,
    ];
    pub const TAGS: [&'static str; 6] = [
        "GRU+WMAE",
        "GRU+WMAE+Bal",
        "GRU+WMAE+Adv",
        "GRU+WMAE+Atn",
        "GRU+WMAE+Adv+Atn",
        "classifier",
    ];

    pub fn tag(self) -> &'static str {
        Self::TAGS[Self::ALL.iter().position(|&v| v == self).unwrap()]
    }

    pub fn has_attention(self) -> bool {
        matches!(self, Variant::GruWmaeAtn | Variant::GruWmaeAdvAtn)
    }

    pub fn has_discriminator(self) -> bool {
        matches!(self, Variant::GruWmaeAdv | Variant::GruWmaeAdvAtn)
    }

    pub fn has_balanced(self) -> bool {
        self == Variant::GruWmaeBal
    }

    pub fn head(self) -> Head {
        if self == Variant::Classifier {
            Head::Probability
        } else {
            Head::Rain
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, NetError> {
        Self::TAGS
            .iter()
            .position(|t| *t == s.trim())
            .map(|i| Self::ALL[i])
            .ok_or_else(|| NetError::UnknownVariant(s.to_string()))
    }
}

/// Final activation of the forecaster's output convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    /// ReLU: non-negative normalized rain.
    Rain,
    /// Sigmoid: probability that hourly rain reaches 0.5 mm/hr.
    Probability,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub in_channels: usize,
    pub enc_channels: Vec<usize>,
    pub stride: usize,
    pub gru_kernel: usize,
    pub attn_channels: Vec<usize>,
    pub attn_kernel: usize,
    pub attn_padding: usize,
    pub leaky_slope: f64,
    pub height: usize,
    pub width: usize,
    pub input_frames: usize,
    pub horizon: usize,
    pub disc_hidden: usize,
    /// Average-pool factor in front of the discriminator's first dense layer.
    pub disc_pool: usize,
    pub attention: bool,
    pub discriminator: bool,
    pub head: Head,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig::new(64, 64, &[32, 64, 96])
    }
}

impl NetConfig {
    /// Defaults for an `height x width` grid. The discriminator pools 8x only
    /// above 64x64 pixels.
    pub fn new(height: usize, width: usize, enc_channels: &[usize]) -> Self {
        NetConfig {
            in_channels: 2,
            enc_channels: enc_channels.to_vec(),
            stride: 2,
            gru_kernel: 3,
            attn_channels: ATTENTION_CHANNELS.to_vec(),
            attn_kernel: 5,
            attn_padding: 2,
            leaky_slope: 0.01,
            height,
            width,
            input_frames: INPUT_FRAMES,
            horizon: HORIZON_HOURS,
            disc_hidden: 128,
            disc_pool: if height * width > 64 * 64 { 8 } else { 1 },
            attention: false,
            discriminator: false,
            head: Head::Rain,
        }
    }

    pub fn for_variant(mut self, variant: Variant) -> Self {
        self.attention = variant.has_attention();
        self.discriminator = variant.has_discriminator();
        self.head = variant.head();
        self
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::InvalidConfig(m));
        if self.enc_channels.len() != STAGES {
            return bad(format!("need {STAGES} encoder stages, got {}", self.enc_channels.len()));
        }
        if self.enc_channels.contains(&0) || self.in_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.attn_channels != ATTENTION_CHANNELS {
            return bad(format!("attention channels must be {ATTENTION_CHANNELS:?}"));
        }
        if self.gru_kernel % 2 == 0 || self.attn_kernel != 2 * self.attn_padding + 1 {
            return bad("kernels must be odd and size-preserving".into());
        }
        if self.stride != 2 {
            return bad("stride must be 2 so the transposed convolutions undo it".into());
        }
        let div = self.stride.pow(STAGES as u32 - 1);
        if self.height == 0 || self.width == 0 || self.height % div != 0 || self.width % div != 0 {
            return bad(format!("grid {}x{} must be a positive multiple of {div}", self.height, self.width));
        }
        if self.disc_pool == 0 || self.height % self.disc_pool != 0 || self.width % self.disc_pool != 0 {
            return bad(format!("discriminator pool {} must divide the grid", self.disc_pool));
        }
        if self.input_frames == 0 || self.horizon == 0 {
            return bad("input_frames and horizon must be positive".into());
        }
        if self.head == Head::Probability && (self.attention || self.discriminator) {
            return bad("the classifier has neither attention nor a discriminator".into());
        }
        Ok(())
    }

    /// Spatial size of encoder stage `i`.
    pub fn stage_size(&self, i: usize) -> (usize, usize) {
        let f = self.stride.pow(i as u32);
        (self.height / f, self.width / f)
    }

    fn disc_inputs(&self) -> usize {
        (self.height / self.disc_pool) * (self.width / self.disc_pool)
    }
}

/// Every learnable tensor of one model plus what is needed to use it.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub config: NetConfig,
    pub params: ParamStore,
    pub norm: NormStats,
    pub seed: u64,
    pub variant: Variant,
}

impl ModelState {
    /// Deterministic initialization. Weights are `U(+-1/sqrt(fan_in))`, biases
    /// zero, and the last attention layer is all zero so attention starts as
    /// the identity.
    pub fn init(config: NetConfig, variant: Variant, norm: NormStats, seed: u64) -> Result<Self, NetError> {
        let config = config.for_variant(variant);
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let c = &config.enc_channels;
        let k = config.gru_kernel;
        let conv = |p: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, cout: usize, cin: usize, k: usize| {
            p.insert_uniform(&format!("{name}.w"), &[cout, cin, k, k], cin * k * k, rng);
            p.insert(&format!("{name}.b"), Tensor::zeros(&[cout]));
        };
        let gru = |p: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, cx: usize, ch: usize| {
            conv(p, rng, &format!("{name}.gates"), 2 * ch, cx + ch, k);
            conv(p, rng, &format!("{name}.cand"), ch, cx + ch, k);
        };
        for i in 0..STAGES {
            let cin = if i == 0 { config.in_channels } else { c[i - 1] };
            conv(&mut p, &mut rng, &format!("pred.enc{i}.down"), c[i], cin, 3);
            gru(&mut p, &mut rng, &format!("pred.enc{i}.gru"), c[i], c[i]);
        }
        for i in (0..STAGES).rev() {
            let cx = if i == STAGES - 1 { 0 } else { c[i] };
            gru(&mut p, &mut rng, &format!("pred.fc{i}.gru"), cx, c[i]);
            if i > 0 {
                // Transposed weights are [Cin, Cout, k, k]; each output pixel
                // sees Cin * (k / stride)^2 inputs.
                let (cin, cout) = (c[i], c[i - 1]);
                p.insert_uniform(&format!("pred.fc{i}.up.w"), &[cin, cout, 4, 4], cin * 4, &mut rng);
                p.insert(&format!("pred.fc{i}.up.b"), Tensor::zeros(&[cout]));
            }
        }
        conv(&mut p, &mut rng, "pred.head", 1, c[0], 3);
        if config.attention {
            let ak = config.attn_kernel;
            let mut cin = 2;
            let last = config.attn_channels.len() - 1;
            for (j, &cout) in config.attn_channels.iter().enumerate() {
                let name = format!("attn.conv{j}");
                if j == last {
                    p.insert(&format!("{name}.w"), Tensor::zeros(&[cout, cin, ak, ak]));
                    p.insert(&format!("{name}.b"), Tensor::zeros(&[cout]));
                } else {
                    conv(&mut p, &mut rng, &name, cout, cin, ak);
                }
                cin = cout;
            }
        }
        if config.discriminator {
            let dims = [config.disc_inputs(), config.disc_hidden, config.disc_hidden, 1];
            for j in 0..3 {
                p.insert_uniform(&format!("disc.fc{j}.w"), &[dims[j + 1], dims[j]], dims[j], &mut rng);
                p.insert(&format!("disc.fc{j}.b"), Tensor::zeros(&[dims[j + 1]]));
            }
        }
        Ok(ModelState {
            config,
            params: p,
            norm,
            seed,
            variant,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.numel()
    }

    pub fn check_finite(&self) -> Result<(), NetError> {
        for (_, name, t) in self.params.iter() {
            if !t.all_finite() {
                return Err(NetError::NonFinite(name.to_string()));
            }
        }
        Ok(())
    }

    /// Bind a named parameter into `g`.
    pub fn bind(&self, g: &mut Graph, name: &str) -> Var {
        let id = self
            .params
            .id(name)
            .unwrap_or_else(|| panic!("model has no parameter {name}"));
        g.param(&self.params, id)
    }

    /// Stack normalized inputs: one `[N, 2, H, W]` tensor per input frame
    /// (rain, radar), plus the latest normalized rain map `[N, 1, H, W]`.
    pub fn inputs(&self, samples: &[&SequenceSample]) -> Result<(Vec<Tensor>, Tensor), NetError> {
        let (h, w) = (self.config.height, self.config.width);
        let n = samples.len();
        let plane = h * w;
        let frames = self.config.input_frames;
        let mut out = vec![vec![0.0; n * 2 * plane]; frames];
        let mut latest = vec![0.0; n * plane];
        for (i, s) in samples.iter().enumerate() {
            if s.height() != h || s.width() != w || s.rain_in.len() != frames || s.radar_in.len() != frames {
                return Err(NetError::ShapeMismatch(format!(
                    "sample {}x{} with {} frames, model expects {h}x{w} with {frames}",
                    s.height(),
                    s.width(),
                    s.rain_in.len()
                )));
            }
            for t in 0..frames {
                let rain = self.norm.normalized_values(&s.rain_in[t]);
                let radar = self.norm.normalized_values(&s.radar_in[t]);
                let base = i * 2 * plane;
                out[t][base..base + plane].copy_from_slice(&rain);
                out[t][base + plane..base + 2 * plane].copy_from_slice(&radar);
                if t == frames - 1 {
                    latest[i * plane..(i + 1) * plane].copy_from_slice(&rain);
                }
            }
        }
        let frames = out.into_iter().map(|d| Tensor::from_vec(&[n, 2, h, w], d)).collect();
        Ok((frames, Tensor::from_vec(&[n, 1, h, w], latest)))
    }

    /// Build the full generator forward pass in `g`.
    pub fn generate(&self, g: &mut Graph, samples: &[&SequenceSample]) -> Result<Generated, NetError> {
        let (frames, latest) = self.inputs(samples)?;
        let frames: Vec<Var> = frames.into_iter().map(|t| g.constant(t)).collect();
        let states = encode(g, self, &frames)?;
        let raw = forecast(g, self, states)?;
        if !self.config.attention {
            return Ok(Generated {
                scaled: raw.clone(),
                raw,
                attention: Vec::new(),
            });
        }
        let l = g.constant(latest);
        let mut a_prev = g.sigmoid(l);
        let mut scaled = Vec::new();
        let mut attention = Vec::new();
        for &p in &raw {
            let a = attention_step(g, self, a_prev, p)?;
            let two_a = g.scale(a, 2.0);
            scaled.push(g.mul(p, two_a));
            attention.push(a);
            a_prev = a;
        }
        Ok(Generated { raw, scaled, attention })
    }

    /// Forecast one sample in physical units.
    pub fn predict(&self, sample: &SequenceSample) -> Result<ForecastBundle, NetError> {
        let mut g = Graph::new();
        let out = self.generate(&mut g, &[sample])?;
        let scale = match self.config.head {
            Head::Rain => self.norm.rain_q95,
            Head::Probability => 1.0,
        };
        let predictions = out
            .scaled
            .iter()
            .map(|&v| g.value(v).data().iter().map(|x| x * scale).collect())
            .collect();
        let attention = out.attention.iter().map(|&v| g.value(v).data().to_vec()).collect();
        Ok(ForecastBundle {
            anchor: sample.anchor,
            height: self.config.height,
            width: self.config.width,
            predictions,
            attention,
            source: self.variant.tag().to_string(),
        })
    }
}

/// Graph handles of one generator pass, all `[N, 1, H, W]` in normalized units.
#[derive(Clone, Debug)]
pub struct Generated {
    /// Forecaster output after the head activation.
    pub raw: Vec<Var>,
    /// `raw * 2a` with attention, otherwise `raw`.
    pub scaled: Vec<Var>,
    pub attention: Vec<Var>,
}

//! Seeded advecting-storm simulator.
//!
//! Rain is a sum of Gaussian cells carried by a shared velocity that follows
//! an Ornstein-Uhlenbeck process, with exponential per-cell growth or decay.
//! Reflectivity follows the Marshall-Palmer relation `Z = 200 R^1.6`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::grid_store::{
    write_grid, DatasetManifest, Grid, GridError, ManifestEntry, Split, SplitScheme, Timestamp,
    FRAME_MINUTES, RADAR_MISSING,
};

/// Rain rates at or below this produce no radar echo.
pub const RADAR_MIN_RAIN: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cell {0}: amplitude must be finite and >= 0")]
    BadAmplitude(usize),
    #[error("cell {0}: radius must be > 0")]
    BadRadius(usize),
    #[error("velocity track has {got} entries, need {need}")]
    VelocityLength { got: usize, need: usize },
    #[error("shift ({dx}, {dy}) must satisfy |d| < grid/4 on a {height}x{width} grid")]
    ShiftTooLarge {
        dx: i64,
        dy: i64,
        height: usize,
        width: usize,
    },
    #[error("too many {split} scenes ({count}) for the calendar slots available")]
    TooManyScenes { split: Split, count: usize },
    #[error("scene timestamp {0} not aligned to 10 minutes")]
    Misaligned(i64),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StormCell {
    /// Column of the center at frame 0, px.
    pub x: f64,
    /// Row of the center at frame 0, px.
    pub y: f64,
    /// Peak rain rate at frame 0, mm/hr.
    pub amplitude: f64,
    /// Gaussian standard deviation, px.
    pub radius: f64,
    /// Log-growth per frame; amplitude at frame k is `amplitude * exp(growth * k)`.
    pub growth: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StormScene {
    pub cells: Vec<StormCell>,
    /// Displacement `(u, v)` applied between frame k and k+1: u along columns,
    /// v along rows, px per frame. Length `frames - 1`.
    pub velocity: Vec<(f64, f64)>,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub start: Timestamp,
    /// Rain below this is set to exactly zero, mm/hr.
    pub dry_floor: f64,
    /// Standard deviation of additive reflectivity noise, dBZ.
    pub radar_noise_db: f64,
    pub seed: u64,
}

impl StormScene {
    pub fn validate(&self) -> Result<(), SceneError> {
        for (i, c) in self.cells.iter().enumerate() {
            if !(c.amplitude.is_finite() && c.amplitude >= 0.0) {
                return Err(SceneError::BadAmplitude(i));
            }
            if !(c.radius > 0.0) {
                return Err(SceneError::BadRadius(i));
            }
        }
        let need = self.frames.saturating_sub(1);
        if self.velocity.len() != need {
            return Err(SceneError::VelocityLength {
                got: self.velocity.len(),
                need,
            });
        }
        if !self.start.is_aligned() {
            return Err(SceneError::Misaligned(self.start.0));
        }
        Ok(())
    }

    /// Cumulative displacement of every cell at frame `k`.
    pub fn offset_at(&self, k: usize) -> (f64, f64) {
        self.velocity[..k]
            .iter()
            .fold((0.0, 0.0), |(x, y), &(u, v)| (x + u, y + v))
    }

    /// Noise-free rain field at frame `k`, before the dry floor.
    pub fn rain_field(&self, k: usize) -> Vec<f64> {
        let (ox, oy) = self.offset_at(k);
        let mut out = vec![0.0; self.height * self.width];
        for c in &self.cells {
            let amp = c.amplitude * (c.growth * k as f64).exp();
            let (cx, cy) = (c.x + ox, c.y + oy);
            let inv = 1.0 / (2.0 * c.radius * c.radius);
            // Beyond 6 sigma the contribution is below 1.6e-8 of the peak.
            let reach = 6.0 * c.radius;
            let r0 = ((cy - reach).floor().max(0.0)) as usize;
            let r1 = ((cy + reach).ceil().min(self.height as f64 - 1.0)).max(-1.0);
            let c0 = ((cx - reach).floor().max(0.0)) as usize;
            let c1 = ((cx + reach).ceil().min(self.width as f64 - 1.0)).max(-1.0);
            if r1 < 0.0 || c1 < 0.0 {
                continue;
            }
            for r in r0..=r1 as usize {
                let dy = r as f64 - cy;
                for col in c0..=c1 as usize {
                    let dx = col as f64 - cx;
                    out[r * self.width + col] += amp * (-(dx * dx + dy * dy) * inv).exp();
                }
            }
        }
        out
    }
}

/// Noise-free reflectivity for a rain rate, dBZ, or `None` below the echo floor.
pub fn marshall_palmer_dbz(rain: f64) -> Option<f64> {
    (rain > RADAR_MIN_RAIN).then(|| 10.0 * (200.0 * rain.powf(1.6)).log10())
}

fn frame_rng(seed: u64, frame: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame as u64 + 1);
    rng
}

/// Render every frame as a (rain, radar) pair.
pub fn render_scene(scene: &StormScene) -> Result<Vec<(Grid, Grid)>, SceneError> {
    scene.validate()?;
    (0..scene.frames)
        .map(|k| {
            let ts = scene.start.offset(k as i64 * FRAME_MINUTES);
            let rain: Vec<f32> = scene
                .rain_field(k)
                .into_iter()
                .map(|v| if v < scene.dry_floor { 0.0 } else { v as f32 })
                .collect();
            let mut rng = frame_rng(scene.seed, k);
            let radar: Vec<f32> = rain
                .iter()
                .map(|&r| match marshall_palmer_dbz(r as f64) {
                    Some(dbz) => {
                        let n: f64 = StandardNormal.sample(&mut rng);
                        (dbz + scene.radar_noise_db * n) as f32
                    }
                    None => RADAR_MISSING,
                })
                .collect();
            Ok((
                Grid::rain(ts, scene.height, scene.width, rain)?,
                Grid::radar(ts, scene.height, scene.width, radar)?,
            ))
        })
        .collect()
}

/// Pure translation by `(dx, dy)` px per frame of a field of cells scattered
/// over a domain wide enough that rain keeps flowing into view.
pub fn make_translation_scene(
    height: usize,
    width: usize,
    dx: i64,
    dy: i64,
    frames: usize,
    seed: u64,
) -> Result<StormScene, SceneError> {
    if 4 * dx.unsigned_abs() as usize >= width || 4 * dy.unsigned_abs() as usize >= height {
        return Err(SceneError::ShiftTooLarge {
            dx,
            dy,
            height,
            width,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let travel_x = (dx.unsigned_abs() as usize * frames) as f64;
    let travel_y = (dy.unsigned_abs() as usize * frames) as f64;
    let (h, w) = (height as f64, width as f64);
    let area = (w + travel_x) * (h + travel_y);
    let count = (area / 250.0).ceil() as usize;
    let cells = (0..count)
        .map(|_| StormCell {
            // Spread upstream so cells enter the frame as the field moves.
            x: rng.random_range(0.0..w + travel_x) - if dx > 0 { travel_x } else { 0.0 },
            y: rng.random_range(0.0..h + travel_y) - if dy > 0 { travel_y } else { 0.0 },
            amplitude: rng.random_range(2.0..25.0),
            radius: rng.random_range(1.5..4.0),
            growth: 0.0,
        })
        .collect();
    let scene = StormScene {
        cells,
        velocity: vec![(dx as f64, dy as f64); frames.saturating_sub(1)],
        frames,
        height,
        width,
        start: Timestamp::from_ymd_hm(2018, 5, 7, 0, 0).expect("valid date"),
        dry_floor: 0.05,
        radar_noise_db: 0.0,
        seed,
    };
    scene.validate()?;
    Ok(scene)
}

/// Relative weights of the three rain regimes a scene is drawn from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegimeMix {
    /// At most a faint drizzle cell.
    pub dry: f64,
    /// Broad, weak cells.
    pub stratiform: f64,
    /// Small, intense, growing or decaying cells.
    pub convective: f64,
}

impl Default for RegimeMix {
    fn default() -> Self {
        RegimeMix {
            dry: 0.2,
            stratiform: 0.45,
            convective: 0.35,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusConfig {
    pub scenes: usize,
    pub frames_per_scene: usize,
    pub height: usize,
    pub width: usize,
    pub mix: RegimeMix,
    /// Fractions of scenes placed in validation / test calendar slots.
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub dry_floor: f64,
    pub radar_noise_db: f64,
    /// Mean speed scale of the shared velocity, px per frame.
    pub max_speed: f64,
    pub ou_theta: f64,
    pub ou_sigma: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            scenes: 40,
            frames_per_scene: 30,
            height: 64,
            width: 64,
            mix: RegimeMix::default(),
            val_fraction: 0.15,
            test_fraction: 0.15,
            dry_floor: 0.05,
            radar_noise_db: 1.0,
            max_speed: 2.0,
            ou_theta: 0.2,
            ou_sigma: 0.15,
            seed: 1,
        }
    }
}

const CORPUS_KEYS: &[&str] = &[
    "seed",
    "corpus.scenes",
    "corpus.frames_per_scene",
    "corpus.height",
    "corpus.width",
    "corpus.val_fraction",
    "corpus.test_fraction",
    "corpus.dry_floor",
    "corpus.radar_noise_db",
    "corpus.max_speed",
    "corpus.ou_theta",
    "corpus.ou_sigma",
    "mix.dry",
    "mix.stratiform",
    "mix.convective",
];

impl CorpusConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self, ConfigError> {
        kv.reject_unknown(CORPUS_KEYS)?;
        let d = CorpusConfig::default();
        let c = CorpusConfig {
            scenes: kv.get("corpus.scenes")?.unwrap_or(d.scenes),
            frames_per_scene: kv.get("corpus.frames_per_scene")?.unwrap_or(d.frames_per_scene),
            height: kv.get("corpus.height")?.unwrap_or(d.height),
            width: kv.get("corpus.width")?.unwrap_or(d.width),
            mix: RegimeMix {
                dry: kv.get("mix.dry")?.unwrap_or(d.mix.dry),
                stratiform: kv.get("mix.stratiform")?.unwrap_or(d.mix.stratiform),
                convective: kv.get("mix.convective")?.unwrap_or(d.mix.convective),
            },
            val_fraction: kv.get("corpus.val_fraction")?.unwrap_or(d.val_fraction),
            test_fraction: kv.get("corpus.test_fraction")?.unwrap_or(d.test_fraction),
            dry_floor: kv.get("corpus.dry_floor")?.unwrap_or(d.dry_floor),
            radar_noise_db: kv.get("corpus.radar_noise_db")?.unwrap_or(d.radar_noise_db),
            max_speed: kv.get("corpus.max_speed")?.unwrap_or(d.max_speed),
            ou_theta: kv.get("corpus.ou_theta")?.unwrap_or(d.ou_theta),
            ou_sigma: kv.get("corpus.ou_sigma")?.unwrap_or(d.ou_sigma),
            seed: kv.get("seed")?.unwrap_or(d.seed),
        };
        if c.height == 0 || c.width == 0 {
            return Err(kv.invalid("corpus.height", "grid must be non-empty"));
        }
        let m = c.mix;
        if [m.dry, m.stratiform, m.convective].iter().any(|w| *w < 0.0)
            || m.dry + m.stratiform + m.convective <= 0.0
        {
            return Err(kv.invalid("mix.dry", "mixture weights must be >= 0 with a positive sum"));
        }
        if !(0.0..=1.0).contains(&(c.val_fraction + c.test_fraction)) {
            return Err(kv.invalid("corpus.val_fraction", "val + test fractions must be in [0, 1]"));
        }
        Ok(c)
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("seed", self.seed);
        kv.set("corpus.scenes", self.scenes);
        kv.set("corpus.frames_per_scene", self.frames_per_scene);
        kv.set("corpus.height", self.height);
        kv.set("corpus.width", self.width);
        kv.set("corpus.val_fraction", self.val_fraction);
        kv.set("corpus.test_fraction", self.test_fraction);
        kv.set("corpus.dry_floor", self.dry_floor);
        kv.set("corpus.radar_noise_db", self.radar_noise_db);
        kv.set("corpus.max_speed", self.max_speed);
        kv.set("corpus.ou_theta", self.ou_theta);
        kv.set("corpus.ou_sigma", self.ou_sigma);
        kv.set("mix.dry", self.mix.dry);
        kv.set("mix.stratiform", self.mix.stratiform);
        kv.set("mix.convective", self.mix.convective);
        kv
    }
}

/// Six-hour slots per day; a scene must fit inside one.
const SLOTS_PER_DAY: usize = 4;

fn scene_start(split: Split, index: usize, scheme: &SplitScheme) -> Option<Timestamp> {
    let (day_slot, slot) = (index / SLOTS_PER_DAY, index % SLOTS_PER_DAY);
    let hour = (slot * 24 / SLOTS_PER_DAY) as u32;
    match split {
        Split::Train => {
            let base = Timestamp::from_ymd_hm(scheme.eval_year - 3, 1, 1, hour, 0)?;
            let ts = base.offset(day_slot as i64 * 24 * 60);
            (ts.date() < chrono::NaiveDate::from_ymd_opt(scheme.eval_year, 1, 1)?).then_some(ts)
        }
        Split::Val | Split::Test => {
            let month = (day_slot % 12) as u32 + 1;
            let k = (day_slot / 12) as u32;
            let (first, days) = match split {
                Split::Val => (1, scheme.val_last_day),
                _ => (scheme.val_last_day + 1, 28 - scheme.val_last_day),
            };
            (k < days).then(|| Timestamp::from_ymd_hm(scheme.eval_year, month, first + k, hour, 0))?
        }
    }
}

fn draw_scene(config: &CorpusConfig, index: usize, start: Timestamp) -> StormScene {
    let scene_seed = config
        .seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
    let (h, w) = (config.height as f64, config.width as f64);
    let scale = h.min(w) / 64.0;
    let m = config.mix;
    let pick = rng.random_range(0.0..m.dry + m.stratiform + m.convective);

    let frames = config.frames_per_scene;
    let speed = config.max_speed;
    let mean = (rng.random_range(-speed..speed), rng.random_range(-speed..speed));

    let cell = |rng: &mut ChaCha8Rng, amp: (f64, f64), radius: (f64, f64), growth: f64| {
        StormCell {
            x: rng.random_range(-0.25 * w..1.25 * w) - mean.0 * frames as f64 * 0.5,
            y: rng.random_range(-0.25 * h..1.25 * h) - mean.1 * frames as f64 * 0.5,
            amplitude: rng.random_range(amp.0..amp.1),
            radius: rng.random_range(radius.0..radius.1) * scale,
            growth: if growth > 0.0 {
                rng.random_range(-growth..growth)
            } else {
                0.0
            },
        }
    };
    let cells: Vec<StormCell> = if pick < m.dry {
        let n = rng.random_range(0..=1);
        (0..n).map(|_| cell(&mut rng, (0.2, 0.9), (3.0, 6.0), 0.0)).collect()
    } else if pick < m.dry + m.stratiform {
        let n = rng.random_range(2..=3);
        (0..n).map(|_| cell(&mut rng, (0.6, 3.0), (5.0, 10.0), 0.01)).collect()
    } else {
        let n = rng.random_range(2..=4);
        (0..n).map(|_| cell(&mut rng, (4.0, 45.0), (1.5, 3.5), 0.04)).collect()
    };

    let mut velocity = Vec::with_capacity(frames.saturating_sub(1));
    let mut v = mean;
    for _ in 1..frames {
        velocity.push(v);
        let nu: f64 = StandardNormal.sample(&mut rng);
        let nv: f64 = StandardNormal.sample(&mut rng);
        v.0 += config.ou_theta * (mean.0 - v.0) + config.ou_sigma * nu;
        v.1 += config.ou_theta * (mean.1 - v.1) + config.ou_sigma * nv;
    }
    StormScene {
        cells,
        velocity,
        frames,
        height: config.height,
        width: config.width,
        start,
        dry_floor: config.dry_floor,
        radar_noise_db: config.radar_noise_db,
        seed: scene_seed,
    }
}

/// Assign each scene a split and a calendar slot. Evaluation scenes are
/// spread evenly through the sequence, alternating validation and test.
pub fn plan_scenes(config: &CorpusConfig, scheme: &SplitScheme) -> Result<Vec<(Split, Timestamp)>, SceneError> {
    let n = config.scenes;
    let n_val = ((n as f64 * config.val_fraction).round() as usize).min(n);
    let n_test = ((n as f64 * config.test_fraction).round() as usize).min(n - n_val);
    let n_eval = n_val + n_test;
    let (mut used_val, mut used_test, mut used_train) = (0, 0, 0);
    (0..n)
        .map(|i| {
            let is_eval = (i + 1) * n_eval / n > i * n_eval / n;
            let (split, slot) = if !is_eval {
                used_train += 1;
                (Split::Train, used_train - 1)
            } else if used_test >= n_test || (used_val <= used_test && used_val < n_val) {
                used_val += 1;
                (Split::Val, used_val - 1)
            } else {
                used_test += 1;
                (Split::Test, used_test - 1)
            };
            let start = scene_start(split, slot, scheme).ok_or(SceneError::TooManyScenes {
                split,
                count: slot + 1,
            })?;
            Ok((split, start))
        })
        .collect()
}

/// Generate a corpus under `out_dir`: NWG1 frames in `frames/` plus
/// `manifest.tsv`. Returns the manifest.
pub fn sample_corpus(config: &CorpusConfig, out_dir: &Path) -> Result<DatasetManifest, SceneError> {
    let frames_per_slot = (24 * 60 / SLOTS_PER_DAY as i64 / FRAME_MINUTES) as usize;
    if config.frames_per_scene > frames_per_slot {
        return Err(SceneError::VelocityLength {
            got: config.frames_per_scene,
            need: frames_per_slot,
        });
    }
    let frame_dir = out_dir.join("frames");
    fs::create_dir_all(&frame_dir).map_err(|e| GridError::io(&frame_dir, e))?;
    let mut manifest = DatasetManifest::new(out_dir);
    let plan = plan_scenes(config, &SplitScheme::default())?;
    for (i, (_, start)) in plan.into_iter().enumerate() {
        let scene = draw_scene(config, i, start);
        for (rain, radar) in render_scene(&scene)? {
            let ts = rain.timestamp().0;
            let rp = PathBuf::from("frames").join(format!("rain_{ts}.nwg"));
            let dp = PathBuf::from("frames").join(format!("radar_{ts}.nwg"));
            write_grid(out_dir.join(&rp), &rain)?;
            write_grid(out_dir.join(&dp), &radar)?;
            manifest.entries.push(ManifestEntry {
                timestamp: rain.timestamp(),
                rain: rp,
                radar: dp,
            });
        }
    }
    manifest.entries.sort_by_key(|e| e.timestamp);
    manifest.save(out_dir.join("manifest.tsv"))?;
    Ok(manifest)
}

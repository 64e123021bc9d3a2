//! Rain and radar grids: the on-disk format, dataset manifests, time-based
//! splits, preprocessing, and windowing into training samples.

mod format;
mod manifest;
mod preprocess;
mod window;

use std::fmt;
use std::path::PathBuf;

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use format::{decode_grid, encode_grid, read_grid, write_grid, HEADER_LEN, MAGIC};
pub use manifest::{DatasetManifest, ManifestEntry};
pub use preprocess::{
    center_crop, column_max_reduce, crop_offsets, denormalize, fit_norm_stats, hourly_average,
    normalize, quantile_type7, NormStats, RADAR_LEVELS,
};
pub use window::{samples_from_frames, window_samples, GapReport, SampleWindows};

/// Input frames per sample (one hour of 10-minute data).
pub const INPUT_FRAMES: usize = 6;
/// Forecast horizon in hours.
pub const HORIZON_HOURS: usize = 3;
/// Native frame spacing in minutes.
pub const FRAME_MINUTES: i64 = 10;
/// Frames averaged into one hourly target.
pub const FRAMES_PER_HOUR: usize = 6;
/// Missing-reflectivity marker, dBZ.
pub const RADAR_MISSING: f32 = -999.0;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("{path}: bad magic {found:?}, expected \"NWG1\"")]
    BadMagic { path: String, found: [u8; 4] },
    #[error("{path}: truncated file ({len} bytes, need {need})")]
    TruncatedFile { path: String, len: usize, need: usize },
    #[error("{path}: {extra} bytes beyond the declared {height}x{width} payload")]
    DimensionMismatch {
        path: String,
        height: u32,
        width: u32,
        extra: usize,
    },
    #[error("unknown channel kind byte {0}")]
    BadKind(u8),
    #[error("grid shape {height}x{width} does not match {len} values")]
    ShapeMismatch {
        height: usize,
        width: usize,
        len: usize,
    },
    #[error("invalid {kind} value {value} at index {index}")]
    InvalidValue {
        kind: ChannelKind,
        index: usize,
        value: f32,
    },
    #[error("timestamp {0} is not a multiple of 10 minutes")]
    Misaligned(i64),
    #[error("expected {expected} frames, got {got}")]
    WrongFrameCount { expected: usize, got: usize },
    #[error("frames are not consecutive at 10-minute spacing (at {0})")]
    NonConsecutive(Timestamp),
    #[error("cannot crop {out_h}x{out_w} from {height}x{width}")]
    CropTooLarge {
        height: usize,
        width: usize,
        out_h: usize,
        out_w: usize,
    },
    #[error("expected {expected} radar levels, got {got}")]
    WrongLevelCount { expected: usize, got: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("{0} 95th percentile is zero")]
    DegenerateQuantile(ChannelKind),
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl GridError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GridError::Io {
            path: path.into().display().to_string(),
            source,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelKind {
    Rain,
    Radar,
}

impl ChannelKind {
    pub fn code(self) -> u8 {
        match self {
            ChannelKind::Rain => 0,
            ChannelKind::Radar => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, GridError> {
        match code {
            0 => Ok(ChannelKind::Rain),
            1 => Ok(ChannelKind::Radar),
            other => Err(GridError::BadKind(other)),
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelKind::Rain => "rain",
            ChannelKind::Radar => "radar",
        })
    }
}

/// Minutes since the Unix epoch, UTC.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn from_ymd_hm(year: i32, month: u32, day: u32, hour: u32, minute: u32) -> Option<Self> {
        let dt = NaiveDate::from_ymd_opt(year, month, day)?.and_hms_opt(hour, minute, 0)?;
        Some(Timestamp(dt.and_utc().timestamp() / 60))
    }

    pub fn minutes(self) -> i64 {
        self.0
    }

    pub fn offset(self, minutes: i64) -> Self {
        Timestamp(self.0 + minutes)
    }

    pub fn datetime(self) -> DateTime<Utc> {
        DateTime::from_timestamp(self.0 * 60, 0).expect("timestamp within chrono range")
    }

    pub fn date(self) -> NaiveDate {
        self.datetime().date_naive()
    }

    /// Day index since the epoch; used as the aggregation unit for standard errors.
    pub fn day_number(self) -> i64 {
        self.0.div_euclid(24 * 60)
    }

    pub fn is_aligned(self) -> bool {
        self.0.rem_euclid(FRAME_MINUTES) == 0
    }
}

impl std::str::FromStr for Timestamp {
    type Err = String;

    /// Accepts `YYYY-MM-DD HH:MM` or `YYYY-MM-DDTHH:MM`, UTC.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        ["%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M"]
            .iter()
            .find_map(|f| chrono::NaiveDateTime::parse_from_str(s, f).ok())
            .map(|dt| Timestamp(dt.and_utc().timestamp() / 60))
            .ok_or_else(|| format!("expected YYYY-MM-DD HH:MM, got {s:?}"))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.datetime().format("%Y-%m-%d %H:%M"))
    }
}

/// Single-timestamp 2D field: rain rate in mm/hr or column-max reflectivity in dBZ.
///
/// Rain grids are finite and non-negative. Radar grids are finite, with
/// missing cells set to [`RADAR_MISSING`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    kind: ChannelKind,
    timestamp: Timestamp,
    height: usize,
    width: usize,
    values: Vec<f32>,
}

pub type RainGrid = Grid;
pub type RadarGrid = Grid;

impl Grid {
    pub fn new(
        kind: ChannelKind,
        timestamp: Timestamp,
        height: usize,
        width: usize,
        values: Vec<f32>,
    ) -> Result<Self, GridError> {
        if values.len() != height * width {
            return Err(GridError::ShapeMismatch {
                height,
                width,
                len: values.len(),
            });
        }
        if !timestamp.is_aligned() {
            return Err(GridError::Misaligned(timestamp.0));
        }
        let bad = values.iter().position(|&v| match kind {
            ChannelKind::Rain => !(v.is_finite() && v >= 0.0),
            ChannelKind::Radar => !v.is_finite(),
        });
        if let Some(index) = bad {
            return Err(GridError::InvalidValue {
                kind,
                index,
                value: values[index],
            });
        }
        Ok(Grid {
            kind,
            timestamp,
            height,
            width,
            values,
        })
    }

    pub fn rain(ts: Timestamp, height: usize, width: usize, values: Vec<f32>) -> Result<Self, GridError> {
        Self::new(ChannelKind::Rain, ts, height, width, values)
    }

    pub fn radar(ts: Timestamp, height: usize, width: usize, values: Vec<f32>) -> Result<Self, GridError> {
        Self::new(ChannelKind::Radar, ts, height, width, values)
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn timestamp(&self) -> Timestamp {
        self.timestamp
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }
}

/// Mean of the six 10-minute rain grids starting at `base_timestamp + 60 * hour_index`.
#[derive(Clone, Debug, PartialEq)]
pub struct HourlyTarget {
    pub hour_index: usize,
    pub base_timestamp: Timestamp,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

/// One training/evaluation example anchored at `anchor` (the forecast time t).
///
/// `rain_in` / `radar_in` hold the frames at t-60 ... t-10, oldest first, so
/// the last element is the latest observation. `targets` are the hourly
/// means for [t, t+60), [t+60, t+120), [t+120, t+180).
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSample {
    pub anchor: Timestamp,
    pub rain_in: Vec<RainGrid>,
    pub radar_in: Vec<RadarGrid>,
    pub targets: Vec<HourlyTarget>,
}

impl SequenceSample {
    pub fn height(&self) -> usize {
        self.rain_in[0].height()
    }

    pub fn width(&self) -> usize {
        self.rain_in[0].width()
    }

    /// The rain frame `lag` minutes before the anchor.
    pub fn rain_at_lag(&self, lag_minutes: i64) -> Option<&RainGrid> {
        let ts = self.anchor.offset(-lag_minutes);
        self.rain_in.iter().find(|g| g.timestamp() == ts)
    }

    pub fn latest_rain(&self) -> &RainGrid {
        self.rain_in.last().expect("sample has input frames")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Time-based partition: years before `eval_year` train; from `eval_year`
/// on, days 1..=`val_last_day` of each month validate and the rest test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitScheme {
    pub eval_year: i32,
    pub val_last_day: u32,
}

impl Default for SplitScheme {
    fn default() -> Self {
        SplitScheme {
            eval_year: 2018,
            val_last_day: 15,
        }
    }
}

impl SplitScheme {
    pub fn split(&self, ts: Timestamp) -> Split {
        let date = ts.date();
        if date.year() < self.eval_year {
            Split::Train
        } else if date.day() <= self.val_last_day {
            Split::Val
        } else {
            Split::Test
        }
    }
}

/// Split under the default scheme.
pub fn split_by_time(ts: Timestamp) -> Split {
    SplitScheme::default().split(ts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_examples() {
        let ts = |y, m, d| Timestamp::from_ymd_hm(y, m, d, 12, 0).unwrap();
        assert_eq!(split_by_time(ts(2016, 6, 10)), Split::Train);
        assert_eq!(split_by_time(ts(2018, 3, 7)), Split::Val);
        assert_eq!(split_by_time(ts(2018, 3, 25)), Split::Test);
        assert_eq!(split_by_time(ts(2018, 3, 15)), Split::Val);
        assert_eq!(split_by_time(ts(2018, 3, 16)), Split::Test);
    }

    #[test]
    fn rain_grid_rejects_negative_and_misaligned() {
        let ts = Timestamp(10);
        assert!(matches!(
            Grid::rain(ts, 1, 2, vec![0.0, -1.0]),
            Err(GridError::InvalidValue { index: 1, .. })
        ));
        assert!(matches!(
            Grid::rain(Timestamp(7), 1, 1, vec![0.0]),
            Err(GridError::Misaligned(7))
        ));
        assert!(Grid::radar(ts, 1, 1, vec![RADAR_MISSING]).is_ok());
        assert!(Grid::radar(ts, 1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn timestamp_calendar_round_trip() {
        let ts = Timestamp::from_ymd_hm(2018, 8, 31, 23, 50).unwrap();
        assert_eq!(ts.to_string(), "2018-08-31 23:50");
        assert!(ts.is_aligned());
    }
}

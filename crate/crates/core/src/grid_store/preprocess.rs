use serde::{Deserialize, Serialize};

use super::{
    ChannelKind, Grid, GridError, HourlyTarget, FRAMES_PER_HOUR, FRAME_MINUTES, RADAR_MISSING,
};

/// Vertical levels in a reflectivity volume.
pub const RADAR_LEVELS: usize = 21;

/// Pixelwise mean of six consecutive 10-minute rain grids.
pub fn hourly_average(frames: &[Grid], hour_index: usize) -> Result<HourlyTarget, GridError> {
    if frames.len() != FRAMES_PER_HOUR {
        return Err(GridError::WrongFrameCount {
            expected: FRAMES_PER_HOUR,
            got: frames.len(),
        });
    }
    let (h, w) = (frames[0].height(), frames[0].width());
    for pair in frames.windows(2) {
        if pair[1].timestamp().0 - pair[0].timestamp().0 != FRAME_MINUTES {
            return Err(GridError::NonConsecutive(pair[1].timestamp()));
        }
    }
    if let Some(f) = frames.iter().find(|f| (f.height(), f.width()) != (h, w)) {
        return Err(GridError::ShapeMismatch {
            height: h,
            width: w,
            len: f.values().len(),
        });
    }
    let mut values = vec![0.0f64; h * w];
    for f in frames {
        for (acc, &v) in values.iter_mut().zip(f.values()) {
            *acc += v as f64;
        }
    }
    let n = FRAMES_PER_HOUR as f64;
    values.iter_mut().for_each(|v| *v /= n);
    Ok(HourlyTarget {
        hour_index,
        base_timestamp: frames[0].timestamp().offset(-(hour_index as i64) * 60),
        height: h,
        width: w,
        values,
    })
}

/// Row and column offsets of a floor-centered crop.
pub fn crop_offsets(height: usize, width: usize, out_h: usize, out_w: usize) -> Option<(usize, usize)> {
    (out_h <= height && out_w <= width).then(|| ((height - out_h) / 2, (width - out_w) / 2))
}

pub fn center_crop(grid: &Grid, out_h: usize, out_w: usize) -> Result<Grid, GridError> {
    let (r0, c0) = crop_offsets(grid.height(), grid.width(), out_h, out_w).ok_or(
        GridError::CropTooLarge {
            height: grid.height(),
            width: grid.width(),
            out_h,
            out_w,
        },
    )?;
    let mut values = Vec::with_capacity(out_h * out_w);
    for r in r0..r0 + out_h {
        let start = r * grid.width() + c0;
        values.extend_from_slice(&grid.values()[start..start + out_w]);
    }
    Grid::new(grid.kind(), grid.timestamp(), out_h, out_w, values)
}

/// Pixelwise maximum over a `levels x height x width` reflectivity volume.
pub fn column_max_reduce(
    volume: &[f32],
    levels: usize,
    height: usize,
    width: usize,
    timestamp: super::Timestamp,
) -> Result<Grid, GridError> {
    if levels != RADAR_LEVELS {
        return Err(GridError::WrongLevelCount {
            expected: RADAR_LEVELS,
            got: levels,
        });
    }
    let plane = height * width;
    if volume.len() != levels * plane {
        return Err(GridError::ShapeMismatch {
            height,
            width,
            len: volume.len() / levels.max(1),
        });
    }
    let mut out = volume[..plane].to_vec();
    for level in volume.chunks_exact(plane).skip(1) {
        for (o, &v) in out.iter_mut().zip(level) {
            *o = o.max(v);
        }
    }
    Grid::radar(timestamp, height, width, out)
}

/// Linear-interpolation ("type 7") quantile. Reorders `values`.
pub fn quantile_type7(values: &mut [f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let h = (values.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let (_, &mut lo_val, rest) = values.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 || rest.is_empty() {
        return Some(lo_val);
    }
    let hi_val = rest.iter().copied().fold(f64::INFINITY, f64::min);
    Some(lo_val + frac * (hi_val - lo_val))
}

/// Per-channel scale factors: the 95th percentiles of the training pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub rain_q95: f64,
    pub radar_q95: f64,
}

impl NormStats {
    pub fn new(rain_q95: f64, radar_q95: f64) -> Result<Self, GridError> {
        if !(rain_q95 > 0.0 && rain_q95.is_finite()) {
            return Err(GridError::DegenerateQuantile(ChannelKind::Rain));
        }
        if !(radar_q95 > 0.0 && radar_q95.is_finite()) {
            return Err(GridError::DegenerateQuantile(ChannelKind::Radar));
        }
        Ok(NormStats { rain_q95, radar_q95 })
    }

    pub fn scale(&self, kind: ChannelKind) -> f64 {
        match kind {
            ChannelKind::Rain => self.rain_q95,
            ChannelKind::Radar => self.radar_q95,
        }
    }

    /// Normalized values as f64; missing radar cells become 0.
    pub fn normalized_values(&self, grid: &Grid) -> Vec<f64> {
        let s = self.scale(grid.kind());
        grid.values()
            .iter()
            .map(|&v| {
                if grid.kind() == ChannelKind::Radar && v == RADAR_MISSING {
                    0.0
                } else {
                    v as f64 / s
                }
            })
            .collect()
    }
}

/// Fit both 95th percentiles over every pixel of the training grids.
/// Missing radar cells are excluded.
pub fn fit_norm_stats<'a>(
    rain: impl IntoIterator<Item = &'a Grid>,
    radar: impl IntoIterator<Item = &'a Grid>,
) -> Result<NormStats, GridError> {
    let mut rain_vals: Vec<f64> = rain
        .into_iter()
        .flat_map(|g| g.values().iter().map(|&v| v as f64))
        .collect();
    let mut radar_vals: Vec<f64> = radar
        .into_iter()
        .flat_map(|g| g.values().iter().copied())
        .filter(|&v| v != RADAR_MISSING)
        .map(|v| v as f64)
        .collect();
    if rain_vals.is_empty() {
        return Err(GridError::EmptyTrainingSet);
    }
    let rq = quantile_type7(&mut rain_vals, 0.95).unwrap_or(0.0);
    let dq = quantile_type7(&mut radar_vals, 0.95).unwrap_or(0.0);
    NormStats::new(rq, dq)
}

pub fn normalize(grid: &Grid, stats: &NormStats) -> Result<Grid, GridError> {
    let values = stats
        .normalized_values(grid)
        .into_iter()
        .map(|v| v as f32)
        .collect();
    Grid::new(grid.kind(), grid.timestamp(), grid.height(), grid.width(), values)
}

pub fn denormalize(grid: &Grid, stats: &NormStats) -> Result<Grid, GridError> {
    let s = stats.scale(grid.kind());
    let values = grid.values().iter().map(|&v| (v as f64 * s) as f32).collect();
    Grid::new(grid.kind(), grid.timestamp(), grid.height(), grid.width(), values)
}

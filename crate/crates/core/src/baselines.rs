//! Reference forecasters that learn nothing: persistence of the latest rain
//! map, and block-matching motion with semi-Lagrangian extrapolation.
//!
//! The block matcher stands in for the operational cell-tracking scheme,
//! whose segmentation and smoothing details are not public.

use thiserror::Error;

use crate::forecast::ForecastBundle;
use crate::grid_store::{Grid, SequenceSample, FRAMES_PER_HOUR, FRAME_MINUTES, HORIZON_HOURS};

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("sample has no rain frame {0} minutes before the anchor")]
    MissingFrame(i64),
    #[error("shape mismatch: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("invalid block-matching parameters: {0}")]
    BadParams(String),
}

/// Persist the rain frame `lag_minutes` before the anchor into every hour.
pub fn persistence_forecast(sample: &SequenceSample, lag_minutes: i64) -> Result<ForecastBundle, BaselineError> {
    let frame = sample
        .rain_at_lag(lag_minutes)
        .ok_or(BaselineError::MissingFrame(lag_minutes))?;
    let map = frame.to_f64();
    Ok(ForecastBundle {
        anchor: sample.anchor,
        height: frame.height(),
        width: frame.width(),
        predictions: vec![map; HORIZON_HOURS],
        attention: Vec::new(),
        source: format!("Last {lag_minutes}min"),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockMatching {
    pub block: usize,
    pub radius: usize,
    /// Blocks whose reflectivity variance (dBZ^2) is below this are not matched.
    pub energy_floor: f64,
}

impl Default for BlockMatching {
    fn default() -> Self {
        BlockMatching {
            block: 16,
            radius: 8,
            energy_floor: 1.0,
        }
    }
}

/// Per-block displacement in px per 10-minute frame. `u` moves along columns,
/// `v` along rows; content at `(row, col)` in the earlier frame appears at
/// `(row + v, col + u)` in the later one.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionField {
    pub block: usize,
    pub radius: usize,
    pub blocks_y: usize,
    pub blocks_x: usize,
    pub u: Vec<i32>,
    pub v: Vec<i32>,
    /// Blocks that were matched rather than filled with the median.
    pub valid: Vec<bool>,
    /// No block had enough texture; the field is all zero.
    pub degenerate: bool,
}

impl MotionField {
    pub fn zero(height: usize, width: usize, params: &BlockMatching) -> Self {
        let by = height.div_ceil(params.block);
        let bx = width.div_ceil(params.block);
        MotionField {
            block: params.block,
            radius: params.radius,
            blocks_y: by,
            blocks_x: bx,
            u: vec![0; by * bx],
            v: vec![0; by * bx],
            valid: vec![false; by * bx],
            degenerate: false,
        }
    }

    /// Displacement of the block containing pixel `(row, col)`.
    pub fn at_pixel(&self, row: usize, col: usize) -> (f64, f64) {
        let by = (row / self.block).min(self.blocks_y - 1);
        let bx = (col / self.block).min(self.blocks_x - 1);
        let i = by * self.blocks_x + bx;
        (self.u[i] as f64, self.v[i] as f64)
    }
}

/// Reflectivity with the missing sentinel (and anything negative) read as 0 dBZ.
fn echo(grid: &Grid) -> Vec<f64> {
    grid.values().iter().map(|&v| (v as f64).max(0.0)).collect()
}

/// Normalized cross-correlation between the block at `(r0, c0)` in `curr`
/// and the block displaced by `-(du, dv)` in `prev`, over pixels where both
/// exist. `None` if either side is flat or the overlap is under half a block.
#[allow(clippy::too_many_arguments)]
fn ncc(
    prev: &[f64],
    curr: &[f64],
    h: usize,
    w: usize,
    r0: usize,
    c0: usize,
    size: usize,
    du: i64,
    dv: i64,
) -> Option<f64> {
    let (mut n, mut sa, mut sb, mut saa, mut sbb, mut sab) = (0usize, 0.0, 0.0, 0.0, 0.0, 0.0);
    for r in r0..(r0 + size).min(h) {
        let pr = r as i64 - dv;
        if pr < 0 || pr >= h as i64 {
            continue;
        }
        for c in c0..(c0 + size).min(w) {
            let pc = c as i64 - du;
            if pc < 0 || pc >= w as i64 {
                continue;
            }
            let a = curr[r * w + c];
            let b = prev[pr as usize * w + pc as usize];
            n += 1;
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
        }
    }
    if 2 * n < size * size {
        return None;
    }
    let nf = n as f64;
    let va = saa - sa * sa / nf;
    let vb = sbb - sb * sb / nf;
    if va <= 1e-12 * nf || vb <= 1e-12 * nf {
        return None;
    }
    Some((sab - sa * sb / nf) / (va * vb).sqrt())
}

fn median(v: &mut [i32]) -> i32 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        // Round the midpoint toward zero to stay an integer displacement.
        (v[n / 2 - 1] + v[n / 2]) / 2
    }
}

/// Integer block motion from `prev` to `curr` by exhaustive NCC search.
pub fn estimate_motion(prev: &Grid, curr: &Grid, params: &BlockMatching) -> Result<MotionField, BaselineError> {
    let (h, w) = (curr.height(), curr.width());
    if prev.height() != h || prev.width() != w {
        return Err(BaselineError::ShapeMismatch(prev.height(), prev.width(), h, w));
    }
    if params.block == 0 {
        return Err(BaselineError::BadParams("block size must be positive".into()));
    }
    let (a, b) = (echo(prev), echo(curr));
    let mut field = MotionField::zero(h, w, params);
    let r = params.radius as i64;
    for by in 0..field.blocks_y {
        for bx in 0..field.blocks_x {
            let (r0, c0) = (by * params.block, bx * params.block);
            let idx = by * field.blocks_x + bx;
            let vals: Vec<f64> = (r0..(r0 + params.block).min(h))
                .flat_map(|row| b[row * w + c0..row * w + (c0 + params.block).min(w)].iter().copied())
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            if var < params.energy_floor {
                continue;
            }
            let mut best: Option<(f64, i64, i64)> = None;
            for dv in -r..=r {
                for du in -r..=r {
                    let Some(score) = ncc(&a, &b, h, w, r0, c0, params.block, du, dv) else {
                        continue;
                    };
                    let better = match best {
                        None => true,
                        Some((s, bu, bv)) => {
                            score > s + 1e-12
                                || (score > s - 1e-12 && du * du + dv * dv < bu * bu + bv * bv)
                        }
                    };
                    if better {
                        best = Some((score, du, dv));
                    }
                }
            }
            if let Some((_, du, dv)) = best {
                field.u[idx] = du as i32;
                field.v[idx] = dv as i32;
                field.valid[idx] = true;
            }
        }
    }
    let mut us: Vec<i32> = field.u.iter().zip(&field.valid).filter(|(_, &ok)| ok).map(|(&u, _)| u).collect();
    let mut vs: Vec<i32> = field.v.iter().zip(&field.valid).filter(|(_, &ok)| ok).map(|(&v, _)| v).collect();
    if us.is_empty() {
        field.degenerate = true;
        return Ok(field);
    }
    let (mu, mv) = (median(&mut us), median(&mut vs));
    for i in 0..field.valid.len() {
        if !field.valid[i] {
            field.u[i] = mu;
            field.v[i] = mv;
        }
    }
    Ok(field)
}

/// Bilinear sample of `map` at fractional `(y, x)`; zero outside the grid.
fn bilinear(map: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let at = |r: f64, c: f64| -> f64 {
        if r < 0.0 || c < 0.0 || r >= h as f64 || c >= w as f64 {
            0.0
        } else {
            map[r as usize * w + c as usize]
        }
    };
    let top = if fx == 0.0 {
        at(y0, x0)
    } else {
        at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1.0) * fx
    };
    if fy == 0.0 {
        return top;
    }
    let bottom = if fx == 0.0 {
        at(y0 + 1.0, x0)
    } else {
        at(y0 + 1.0, x0) * (1.0 - fx) + at(y0 + 1.0, x0 + 1.0) * fx
    };
    top * (1.0 - fy) + bottom * fy
}

/// Advect the latest rain frame along `motion` for six 10-minute steps and
/// average them into the first-hour forecast, reused for every later hour.
pub fn extrapolate(sample: &SequenceSample, motion: &MotionField) -> ForecastBundle {
    let last = sample.latest_rain();
    let (h, w) = (last.height(), last.width());
    let src = last.to_f64();
    let mut acc = vec![0.0; h * w];
    for step in 1..=FRAMES_PER_HOUR {
        let s = step as f64;
        for r in 0..h {
            for c in 0..w {
                let (u, v) = motion.at_pixel(r, c);
                acc[r * w + c] += bilinear(&src, h, w, r as f64 - s * v, c as f64 - s * u);
            }
        }
    }
    let hour0: Vec<f64> = acc.iter().map(|x| x / FRAMES_PER_HOUR as f64).collect();
    ForecastBundle {
        anchor: sample.anchor,
        height: h,
        width: w,
        predictions: vec![hour0; HORIZON_HOURS],
        attention: Vec::new(),
        source: "Extrapolation".to_string(),
    }
}

/// Motion from the last two radar frames, then [`extrapolate`].
pub fn extrapolation_forecast(sample: &SequenceSample, params: &BlockMatching) -> Result<ForecastBundle, BaselineError> {
    let n = sample.radar_in.len();
    if n < 2 {
        return Err(BaselineError::MissingFrame(2 * FRAME_MINUTES));
    }
    let motion = estimate_motion(&sample.radar_in[n - 2], &sample.radar_in[n - 1], params)?;
    Ok(extrapolate(sample, &motion))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_store::Timestamp;

    fn shifted(base: &[f32], h: usize, w: usize, du: i64, dv: i64) -> Vec<f32> {
        let mut out = vec![0.0; h * w];
        for r in 0..h as i64 {
            for c in 0..w as i64 {
                let (pr, pc) = (r - dv, c - du);
                if pr >= 0 && pc >= 0 && pr < h as i64 && pc < w as i64 {
                    out[(r * w as i64 + c) as usize] = base[(pr * w as i64 + pc) as usize];
                }
            }
        }
        out
    }

    fn texture(h: usize, w: usize) -> Vec<f32> {
        (0..h * w)
            .map(|i| {
                let (r, c) = ((i / w) as f32, (i % w) as f32);
                20.0 + 15.0 * (0.37 * r).sin() * (0.23 * c + 1.0).cos() + 5.0 * (0.11 * r * c).sin()
            })
            .collect()
    }

    #[test]
    fn recovers_pure_translation() {
        let (h, w) = (48, 48);
        let base = texture(h, w);
        let prev = Grid::radar(Timestamp(0), h, w, base.clone()).unwrap();
        let curr = Grid::radar(Timestamp(10), h, w, shifted(&base, h, w, 3, -2)).unwrap();
        let m = estimate_motion(&prev, &curr, &BlockMatching::default()).unwrap();
        assert!(!m.degenerate);
        for i in 0..m.u.len() {
            assert!(m.valid[i]);
            assert_eq!((m.u[i], m.v[i]), (3, -2), "block {i}");
        }
        let still = estimate_motion(&prev, &prev, &BlockMatching::default()).unwrap();
        assert!(still.u.iter().chain(&still.v).all(|&x| x == 0));
    }

    #[test]
    fn flat_input_is_degenerate() {
        let z = Grid::radar(Timestamp(0), 32, 32, vec![0.0; 1024]).unwrap();
        let m = estimate_motion(&z, &z, &BlockMatching::default()).unwrap();
        assert!(m.degenerate);
        assert!(m.u.iter().chain(&m.v).all(|&x| x == 0));
    }

    #[test]
    fn bilinear_is_exact_on_integers_and_zero_outside() {
        let map = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(bilinear(&map, 2, 2, 1.0, 0.0), 3.0);
        assert_eq!(bilinear(&map, 2, 2, 0.5, 0.5), 2.5);
        assert_eq!(bilinear(&map, 2, 2, -1.0, 0.0), 0.0);
        assert_eq!(bilinear(&map, 2, 2, 1.0, 1.5), 2.0);
    }
}

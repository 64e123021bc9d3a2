//! Blend a learned forecast with persistence using rain-probability maps.

use thiserror::Error;

use crate::forecast::ForecastBundle;
use crate::grid_store::quantile_type7;

/// Quantile used to equalize later-hour probability maps against hour 0.
pub const RESCALE_QUANTILE: f64 = 0.99;

#[derive(Debug, Error, PartialEq)]
pub enum BlendError {
    #[error("probability map for hour {0} has a zero {RESCALE_QUANTILE} quantile")]
    DegenerateMap(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no probability maps")]
    Empty,
}

/// Per-hour blend weights in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct BlendWeights {
    pub maps: Vec<Vec<f64>>,
    /// Factor each hour was multiplied by before clipping; 1 for hour 0.
    pub factors: Vec<f64>,
}

pub fn rescale_probabilities(prob_maps: &[Vec<f64>]) -> Result<BlendWeights, BlendError> {
    let first = prob_maps.first().ok_or(BlendError::Empty)?;
    let q = |h: usize, m: &[f64]| -> Result<f64, BlendError> {
        let mut v = m.to_vec();
        match quantile_type7(&mut v, RESCALE_QUANTILE) {
            Some(q) if q > 0.0 && q.is_finite() => Ok(q),
            _ => Err(BlendError::DegenerateMap(h)),
        }
    };
    let q0 = q(0, first)?;
    let mut maps = Vec::with_capacity(prob_maps.len());
    let mut factors = Vec::with_capacity(prob_maps.len());
    for (h, m) in prob_maps.iter().enumerate() {
        if m.len() != first.len() {
            return Err(BlendError::ShapeMismatch(format!(
                "hour {h} has {} pixels, hour 0 has {}",
                m.len(),
                first.len()
            )));
        }
        let f = if h == 0 { 1.0 } else { q0 / q(h, m)? };
        maps.push(m.iter().map(|&p| (p * f).clamp(0.0, 1.0)).collect());
        factors.push(f);
    }
    Ok(BlendWeights { maps, factors })
}

/// Pixelwise `W * model + (1 - W) * persistence`.
pub fn blend(
    weights: &BlendWeights,
    model: &ForecastBundle,
    persistence: &ForecastBundle,
) -> Result<ForecastBundle, BlendError> {
    if model.predictions.len() != persistence.predictions.len()
        || weights.maps.len() != model.predictions.len()
    {
        return Err(BlendError::ShapeMismatch(format!(
            "hours: weights {}, model {}, persistence {}",
            weights.maps.len(),
            model.predictions.len(),
            persistence.predictions.len()
        )));
    }
    let mut predictions = Vec::with_capacity(model.predictions.len());
    for ((w, m), p) in weights.maps.iter().zip(&model.predictions).zip(&persistence.predictions) {
        if w.len() != m.len() || m.len() != p.len() {
            return Err(BlendError::ShapeMismatch(format!(
                "pixels: weights {}, model {}, persistence {}",
                w.len(),
                m.len(),
                p.len()
            )));
        }
        predictions.push(
            w.iter()
                .zip(m)
                .zip(p)
                .map(|((&w, &m), &p)| mix(w, m, p))
                .collect(),
        );
    }
    Ok(ForecastBundle {
        anchor: model.anchor,
        height: model.height,
        width: model.width,
        predictions,
        attention: Vec::new(),
        source: format!("Blend({}, {})", model.source, persistence.source),
    })
}

/// Exact at the endpoints so that W = 0 and W = 1 reproduce an input bit for bit.
fn mix(w: f64, m: f64, p: f64) -> f64 {
    if w >= 1.0 {
        m
    } else if w <= 0.0 {
        p
    } else {
        (w * m + (1.0 - w) * p).clamp(m.min(p), m.max(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_store::Timestamp;

    fn bundle(v: f64, n: usize) -> ForecastBundle {
        ForecastBundle {
            anchor: Timestamp(0),
            height: 1,
            width: n,
            predictions: vec![vec![v; n]; 3],
            attention: vec![],
            source: "x".into(),
        }
    }

    #[test]
    fn rescale_examples() {
        let m: Vec<f64> = (0..100).map(|i| i as f64 / 200.0).collect();
        let w = rescale_probabilities(&[m.clone(), m.clone(), m.clone()]).unwrap();
        assert_eq!(w.maps[2], m);
        let half: Vec<f64> = m.iter().map(|x| x * 0.5).collect();
        let w = rescale_probabilities(&[m.clone(), half]).unwrap();
        assert!((w.factors[1] - 2.0).abs() < 1e-12);
        for (a, b) in w.maps[1].iter().zip(&m) {
            assert!((a - b).abs() < 1e-12);
        }
        let big: Vec<f64> = m.iter().map(|x| x * 2.0 + 0.3).collect();
        let w = rescale_probabilities(&[big, m.clone()]).unwrap();
        assert!(w.maps[1].iter().any(|&x| x == 1.0));
        assert!(w.maps.iter().flatten().all(|&x| (0.0..=1.0).contains(&x)));
        assert_eq!(
            rescale_probabilities(&[m, vec![0.0; 100]]),
            Err(BlendError::DegenerateMap(1))
        );
    }

    #[test]
    fn blend_examples() {
        let (m, p) = (bundle(4.0, 2), bundle(2.0, 2));
        let at = |w: f64| BlendWeights {
            maps: vec![vec![w; 2]; 3],
            factors: vec![1.0; 3],
        };
        assert_eq!(blend(&at(1.0), &m, &p).unwrap().predictions, m.predictions);
        assert_eq!(blend(&at(0.0), &m, &p).unwrap().predictions, p.predictions);
        assert_eq!(blend(&at(0.5), &m, &p).unwrap().predictions[0][0], 3.0);
        assert!(blend(&at(0.5), &m, &bundle(2.0, 3)).is_err());
    }
}

//! Training objectives on plain slices, plus graph builders for the same
//! objectives so the trainer can differentiate them.
//!
//! Rain arguments are in mm/hr. Weights depend on targets only.

use autograd::{Graph, Tensor, Var};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floor inside every logarithm.
pub const LOG_EPS: f64 = 1e-7;
/// Default weight threshold, mm/hr.
pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Pixels with target below this enter the balanced loss.
pub const BALANCED_CUTOFF: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("shape mismatch: {0} vs {1} values")]
    ShapeMismatch(usize, usize),
    #[error("score {0} outside [0, 1]")]
    DomainError(f64),
    #[error("adversarial and balanced terms cannot both be active")]
    ConflictingSpec,
    #[error("{name} weight {value} must lie in [0, 1)")]
    BadWeight { name: &'static str, value: f64 },
    #[error("empty input")]
    Empty,
}

/// Piecewise loss weight for a target rain rate `x` with ignore threshold `th`.
pub fn weight(x: f64, th: f64) -> f64 {
    if x < th {
        0.0
    } else if x < 2.0 {
        1.0
    } else if x < 5.0 {
        2.0
    } else if x < 10.0 {
        5.0
    } else if x < 30.0 {
        10.0
    } else {
        30.0
    }
}

fn check(y: &[f64], yhat: &[f64]) -> Result<(), LossError> {
    if y.len() != yhat.len() {
        return Err(LossError::ShapeMismatch(y.len(), yhat.len()));
    }
    if y.is_empty() {
        return Err(LossError::Empty);
    }
    Ok(())
}

/// Weighted mean absolute error over all `T x H x W` values.
pub fn wmae(y: &[f64], yhat: &[f64], th: f64) -> Result<f64, LossError> {
    check(y, yhat)?;
    let s: f64 = y
        .iter()
        .zip(yhat)
        .map(|(&t, &p)| weight(t, th) * (t - p).abs())
        .sum();
    Ok(s / y.len() as f64)
}

/// Weighted mean squared error.
pub fn wmse(y: &[f64], yhat: &[f64], th: f64) -> Result<f64, LossError> {
    check(y, yhat)?;
    let s: f64 = y
        .iter()
        .zip(yhat)
        .map(|(&t, &p)| weight(t, th) * (t - p) * (t - p))
        .sum();
    Ok(s / y.len() as f64)
}

/// Mean absolute error restricted to targets below [`BALANCED_CUTOFF`],
/// normalized by the full pixel count.
pub fn balanced_loss(y: &[f64], yhat: &[f64]) -> Result<f64, LossError> {
    check(y, yhat)?;
    let s: f64 = y
        .iter()
        .zip(yhat)
        .filter(|(&t, _)| t < BALANCED_CUTOFF)
        .map(|(&t, &p)| (t - p).abs())
        .sum();
    Ok(s / y.len() as f64)
}

fn clamp_score(p: f64) -> Result<f64, LossError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(LossError::DomainError(p));
    }
    Ok(p.clamp(LOG_EPS, 1.0 - LOG_EPS))
}

/// Discriminator cross-entropy summed over hours:
/// `-sum_t [ln D(Y_t) + ln(1 - D(Yhat_t))]`.
pub fn d_loss(real_scores: &[f64], fake_scores: &[f64]) -> Result<f64, LossError> {
    let mut s = 0.0;
    for &r in real_scores {
        s -= clamp_score(r)?.ln();
    }
    for &f in fake_scores {
        s -= (1.0 - clamp_score(f)?).ln();
    }
    Ok(s)
}

/// Generator adversarial term `-sum_t ln D(Yhat_t)`.
pub fn g_adv_loss(fake_scores: &[f64]) -> Result<f64, LossError> {
    let mut s = 0.0;
    for &f in fake_scores {
        s -= clamp_score(f)?.ln();
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseLoss {
    Wmae,
    Wmse,
}

/// Which objective terms are active and how they mix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub base: BaseLoss,
    pub threshold: f64,
    pub w_bal: f64,
    pub w_adv: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec {
            base: BaseLoss::Wmae,
            threshold: DEFAULT_THRESHOLD,
            w_bal: 0.0,
            w_adv: 0.0,
        }
    }
}

impl LossSpec {
    pub fn adversarial(w_adv: f64) -> Self {
        LossSpec {
            w_adv,
            ..Self::default()
        }
    }

    pub fn balanced(w_bal: f64) -> Self {
        LossSpec {
            w_bal,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        for (name, value) in [("w_adv", self.w_adv), ("w_bal", self.w_bal)] {
            if !(0.0..1.0).contains(&value) {
                return Err(LossError::BadWeight { name, value });
            }
        }
        if self.w_adv > 0.0 && self.w_bal > 0.0 {
            return Err(LossError::ConflictingSpec);
        }
        Ok(())
    }

    pub fn uses_adv(&self) -> bool {
        self.w_adv > 0.0
    }

    pub fn uses_bal(&self) -> bool {
        self.w_bal > 0.0
    }

    /// Prediction loss with the configured base and threshold.
    pub fn l_pred(&self, y: &[f64], yhat: &[f64]) -> Result<f64, LossError> {
        match self.base {
            BaseLoss::Wmae => wmae(y, yhat, self.threshold),
            BaseLoss::Wmse => wmse(y, yhat, self.threshold),
        }
    }
}

/// Mix the prediction loss with the adversarial or balanced term. `extra`
/// is `L_GD` when adversarial, `L_Bal` when balanced, ignored otherwise.
pub fn composite_loss(spec: &LossSpec, l_pred: f64, extra: f64) -> Result<f64, LossError> {
    spec.validate()?;
    Ok(if spec.uses_adv() {
        (1.0 - spec.w_adv) * l_pred + spec.w_adv * extra
    } else if spec.uses_bal() {
        (1.0 - spec.w_bal) * l_pred + spec.w_bal * extra
    } else {
        l_pred
    })
}

/// Graph builders. `target` is a constant tensor in mm/hr shaped like `pred`.
pub mod graph {
    use super::*;

    fn weights(target: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
        target.map(f)
    }

    /// `mean(W(Y) * |Y - Yhat|)` (or squared error for WMSE).
    pub fn l_pred(g: &mut Graph, spec: &LossSpec, target: &Tensor, pred: Var) -> Var {
        let w = g.constant(weights(target, |y| weight(y, spec.threshold)));
        weighted_error(g, spec.base, target, pred, w)
    }

    pub fn balanced(g: &mut Graph, target: &Tensor, pred: Var) -> Var {
        let w = g.constant(weights(target, |y| (y < BALANCED_CUTOFF) as u8 as f64));
        weighted_error(g, BaseLoss::Wmae, target, pred, w)
    }

    fn weighted_error(g: &mut Graph, base: BaseLoss, target: &Tensor, pred: Var, w: Var) -> Var {
        let y = g.constant(target.clone());
        let diff = g.sub(pred, y);
        let err = match base {
            BaseLoss::Wmae => g.abs(diff),
            BaseLoss::Wmse => g.square(diff),
        };
        let weighted = g.mul(err, w);
        g.mean(weighted)
    }

    /// `-(sum ln real + sum ln(1 - fake)) / batch`.
    pub fn d_loss(g: &mut Graph, real: Var, fake: Var, batch: usize) -> Var {
        let lr = g.clamped_ln(real, LOG_EPS);
        let one_minus = g.one_minus(fake);
        let lf = g.clamped_ln(one_minus, LOG_EPS);
        let sr = g.sum(lr);
        let sf = g.sum(lf);
        let total = g.add(sr, sf);
        g.scale(total, -1.0 / batch as f64)
    }

    /// `-sum ln fake / batch`.
    pub fn g_adv(g: &mut Graph, fake: Var, batch: usize) -> Var {
        let lf = g.clamped_ln(fake, LOG_EPS);
        let s = g.sum(lf);
        g.scale(s, -1.0 / batch as f64)
    }

    /// `(1 - w) * a + w * b`.
    pub fn mix(g: &mut Graph, a: Var, b: Var, w: f64) -> Var {
        let a = g.scale(a, 1.0 - w);
        let b = g.scale(b, w);
        g.add(a, b)
    }

    /// Pixelwise binary cross-entropy, mean over all pixels.
    pub fn bce(g: &mut Graph, prob: Var, labels: &Tensor) -> Var {
        let pos = g.constant(labels.clone());
        let neg = g.constant(labels.map(|l| 1.0 - l));
        let lp = g.clamped_ln(prob, LOG_EPS);
        let q = g.one_minus(prob);
        let lq = g.clamped_ln(q, LOG_EPS);
        let a = g.mul(lp, pos);
        let b = g.mul(lq, neg);
        let s = g.add(a, b);
        let m = g.mean(s);
        g.scale(m, -1.0)
    }
}

//! Central finite-difference gradient checking.

use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Worst-case agreement between analytic and numeric gradients.
#[derive(Clone, Copy, Debug)]
pub struct CheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    /// Coordinates whose `±step` stencil crossed a kink of a piecewise op.
    /// Central differences are meaningless there, so they are not compared.
    pub skipped: usize,
}

impl CheckReport {
    fn new() -> Self {
        CheckReport {
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            checked: 0,
            skipped: 0,
        }
    }

    fn record(&mut self, analytic: f64, numeric: f64, floor: f64) {
        self.max_rel_error = self.max_rel_error.max(relative_error(analytic, numeric, floor));
        self.max_abs_error = self.max_abs_error.max((analytic - numeric).abs());
        self.checked += 1;
    }

    /// Fold another report into this one.
    pub fn merge(&mut self, other: &CheckReport) {
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
        self.checked += other.checked;
        self.skipped += other.skipped;
    }
}

/// `|a - n| / max(|a|, |n|, floor)`. The floor keeps entries whose true
/// gradient is ~0 from dominating through round-off.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Check `d loss / d inputs` for a scalar function built by `build`.
///
/// `build` receives a fresh graph plus one leaf per input and returns the
/// scalar loss node. Every coordinate of every input is perturbed by `±step`.
pub fn check_gradients<F>(inputs: &[Tensor], step: f64, floor: f64, build: F) -> CheckReport
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let eval = |vals: &[Tensor]| -> (f64, Vec<bool>) {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.leaf(t.clone())).collect();
        let loss = build(&mut g, &vars);
        (g.value(loss).item(), g.branch_pattern())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = build(&mut g, &vars);
    let grads = g.backward(loss);
    let pattern = g.branch_pattern();

    let mut report = CheckReport::new();
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads
            .get(*v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[i].shape()));
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + step;
            let (up, pu) = eval(&work);
            work[i].data_mut()[j] = orig - step;
            let (down, pd) = eval(&work);
            work[i].data_mut()[j] = orig;
            if pu != pattern || pd != pattern {
                report.skipped += 1;
                continue;
            }
            report.record(analytic.data()[j], (up - down) / (2.0 * step), floor);
        }
    }
    report
}

/// Check `d loss / d params` for every tensor in `store` whose name passes
/// `select`, one report per parameter name.
///
/// `build` binds parameters itself (through [`Graph::param`]) and returns the
/// scalar loss. Tensors with more than `max_per_tensor` entries are checked
/// on that many evenly spaced coordinates.
pub fn check_param_gradients<F>(
    store: &ParamStore,
    step: f64,
    floor: f64,
    max_per_tensor: usize,
    select: impl Fn(&str) -> bool,
    build: F,
) -> Vec<(String, CheckReport)>
where
    F: Fn(&mut Graph, &ParamStore) -> Var,
{
    let eval = |s: &ParamStore| -> (f64, Vec<bool>) {
        let mut g = Graph::new();
        let loss = build(&mut g, s);
        (g.value(loss).item(), g.branch_pattern())
    };
    let mut g = Graph::new();
    let loss = build(&mut g, store);
    let grads = g.backward(loss);
    let pattern = g.branch_pattern();
    let analytic: Vec<(ParamId, Tensor)> = grads.params().into_iter().map(|(id, t)| (id, t.clone())).collect();

    let mut work = store.clone();
    let mut out = Vec::new();
    for (id, name, t) in store.iter() {
        if !select(name) {
            continue;
        }
        let grad = analytic
            .iter()
            .find(|(i, _)| *i == id)
            .map(|(_, t)| t.clone())
            .unwrap_or_else(|| Tensor::zeros(t.shape()));
        let n = t.len();
        let picks = max_per_tensor.max(1).min(n);
        let mut report = CheckReport::new();
        for p in 0..picks {
            let j = p * n / picks;
            let orig = t.data()[j];
            work.get_mut(id).data_mut()[j] = orig + step;
            let (up, pu) = eval(&work);
            work.get_mut(id).data_mut()[j] = orig - step;
            let (down, pd) = eval(&work);
            work.get_mut(id).data_mut()[j] = orig;
            if pu != pattern || pd != pattern {
                report.skipped += 1;
                continue;
            }
            report.record(grad.data()[j], (up - down) / (2.0 * step), floor);
        }
        out.push((name.to_string(), report));
    }
    out
}

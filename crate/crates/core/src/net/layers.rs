use autograd::{Graph, Tensor, Var};

use super::{Head, ModelState, NetError, STAGES};
use crate::grid_store::SequenceSample;

/// Test hook for [`convgru_step`]: replace the update-gate bias with a
/// constant, e.g. a large negative value to close the gate.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GateOverride {
    pub update_bias: Option<f64>,
}

fn mismatch(msg: String) -> NetError {
    NetError::ShapeMismatch(msg)
}

/// One ConvGRU update:
/// `z, r = sigmoid(conv([x, h]))`, `c = tanh(conv([x, r * h]))`,
/// `h' = (1 - z) * h + z * c`. With `x = None` the convolutions see `h` only.
pub fn convgru_step(
    g: &mut Graph,
    state: &ModelState,
    prefix: &str,
    h_prev: Var,
    x: Option<Var>,
    gate: GateOverride,
) -> Result<Var, NetError> {
    let gw = state.bind(g, &format!("{prefix}.gates.w"));
    let cw = state.bind(g, &format!("{prefix}.cand.w"));
    let cb = state.bind(g, &format!("{prefix}.cand.b"));
    let gb = match gate.update_bias {
        None => state.bind(g, &format!("{prefix}.gates.b")),
        Some(v) => {
            let id = state.params.id(&format!("{prefix}.gates.b")).expect("gate bias");
            let mut b = state.params.get(id).clone();
            let half = b.len() / 2;
            b.data_mut()[..half].iter_mut().for_each(|x| *x = v);
            g.constant(b)
        }
    };
    let (gout, gin, k, _) = g.value(gw).dims4();
    let ch = gout / 2;
    let hs = g.value(h_prev).shape().to_vec();
    if hs.len() != 4 || hs[1] != ch {
        return Err(mismatch(format!("{prefix}: state {hs:?} but cell has {ch} channels")));
    }
    let cx = gin - ch;
    let inputs = match x {
        Some(x) => {
            let xs = g.value(x).shape();
            if xs.len() != 4 || xs[0] != hs[0] || xs[1] != cx || xs[2] != hs[2] || xs[3] != hs[3] {
                return Err(mismatch(format!("{prefix}: input {xs:?} vs state {hs:?}, {cx} input channels")));
            }
            Some(x)
        }
        None if cx == 0 => None,
        None => return Err(mismatch(format!("{prefix}: cell expects {cx} input channels"))),
    };
    let pad = k / 2;
    let xh = match inputs {
        Some(x) => g.concat_channels(&[x, h_prev]),
        None => h_prev,
    };
    let pre = g.conv2d(xh, gw, Some(gb), 1, pad);
    let gates = g.sigmoid(pre);
    let z = g.slice_channels(gates, 0, ch);
    let r = g.slice_channels(gates, ch, ch);
    let rh = g.mul(r, h_prev);
    let xrh = match inputs {
        Some(x) => g.concat_channels(&[x, rh]),
        None => rh,
    };
    let cpre = g.conv2d(xrh, cw, Some(cb), 1, pad);
    let cand = g.tanh(cpre);
    let keep = g.one_minus(z);
    let kept = g.mul(keep, h_prev);
    let fresh = g.mul(z, cand);
    Ok(g.add(kept, fresh))
}

/// Run the input frames, oldest first, through `[conv down, ConvGRU] x 3`
/// and return the last hidden state of each stage.
pub fn encode(g: &mut Graph, state: &ModelState, frames: &[Var]) -> Result<Vec<Var>, NetError> {
    let cfg = &state.config;
    if frames.len() != cfg.input_frames {
        return Err(mismatch(format!("{} frames, expected {}", frames.len(), cfg.input_frames)));
    }
    let n = {
        let s = g.value(frames[0]).shape();
        if s.len() != 4 || s[1] != cfg.in_channels || s[2] != cfg.height || s[3] != cfg.width {
            return Err(mismatch(format!(
                "frame {s:?}, expected [N, {}, {}, {}]",
                cfg.in_channels, cfg.height, cfg.width
            )));
        }
        s[0]
    };
    let mut h: Vec<Var> = (0..STAGES)
        .map(|i| {
            let (sh, sw) = cfg.stage_size(i);
            g.constant(Tensor::zeros(&[n, cfg.enc_channels[i], sh, sw]))
        })
        .collect();
    for &frame in frames {
        if g.value(frame).shape() != g.value(frames[0]).shape() {
            return Err(mismatch("input frames differ in shape".into()));
        }
        let mut x = frame;
        for (i, hi) in h.iter_mut().enumerate() {
            let w = state.bind(g, &format!("pred.enc{i}.down.w"));
            let b = state.bind(g, &format!("pred.enc{i}.down.b"));
            let stride = if i == 0 { 1 } else { cfg.stride };
            let d = g.conv2d(x, w, Some(b), stride, 1);
            let d = g.leaky_relu(d, cfg.leaky_slope);
            *hi = convgru_step(g, state, &format!("pred.enc{i}.gru"), *hi, Some(d), GateOverride::default())?;
            x = *hi;
        }
    }
    Ok(h)
}

/// Unroll the forecaster from the encoder states, deepest stage first,
/// emitting one `[N, 1, H, W]` map per hour after the head activation.
pub fn forecast(g: &mut Graph, state: &ModelState, states: Vec<Var>) -> Result<Vec<Var>, NetError> {
    let cfg = &state.config;
    if states.len() != STAGES {
        return Err(mismatch(format!("{} states, expected {STAGES}", states.len())));
    }
    let mut h = states;
    let mut out = Vec::with_capacity(cfg.horizon);
    for _ in 0..cfg.horizon {
        let mut x: Option<Var> = None;
        for i in (0..STAGES).rev() {
            h[i] = convgru_step(g, state, &format!("pred.fc{i}.gru"), h[i], x, GateOverride::default())?;
            if i > 0 {
                let w = state.bind(g, &format!("pred.fc{i}.up.w"));
                let b = state.bind(g, &format!("pred.fc{i}.up.b"));
                let u = g.conv_transpose2d(h[i], w, Some(b), cfg.stride, 1);
                x = Some(g.leaky_relu(u, cfg.leaky_slope));
            }
        }
        let w = state.bind(g, "pred.head.w");
        let b = state.bind(g, "pred.head.b");
        let y = g.conv2d(h[0], w, Some(b), 1, 1);
        out.push(match cfg.head {
            Head::Rain => g.relu(y),
            Head::Probability => g.sigmoid(y),
        });
    }
    Ok(out)
}

/// Next attention map from the previous one and the current raw prediction.
pub fn attention_step(g: &mut Graph, state: &ModelState, a_prev: Var, p: Var) -> Result<Var, NetError> {
    let cfg = &state.config;
    if !cfg.attention {
        return Err(mismatch("model has no attention module".into()));
    }
    let (sa, sp) = (g.value(a_prev).shape(), g.value(p).shape());
    if sa != sp || sa.len() != 4 || sa[1] != 1 {
        return Err(mismatch(format!("attention inputs {sa:?} and {sp:?}")));
    }
    let mut x = g.concat_channels(&[a_prev, p]);
    let last = cfg.attn_channels.len() - 1;
    for j in 0..=last {
        let w = state.bind(g, &format!("attn.conv{j}.w"));
        let b = state.bind(g, &format!("attn.conv{j}.b"));
        x = g.conv2d(x, w, Some(b), 1, cfg.attn_padding);
        if j < last {
            x = g.leaky_relu(x, cfg.leaky_slope);
        }
    }
    Ok(g.sigmoid(x))
}

/// Score each channel of `maps` (`[N, C, H, W]`, normalized rain) as a
/// separate map. Returns `[N * C, 1]` probabilities of being real.
pub fn discriminate(g: &mut Graph, state: &ModelState, maps: Var) -> Result<Var, NetError> {
    let cfg = &state.config;
    if !cfg.discriminator {
        return Err(mismatch("model has no discriminator".into()));
    }
    let s = g.value(maps).shape().to_vec();
    if s.len() != 4 || s[2] != cfg.height || s[3] != cfg.width {
        return Err(mismatch(format!("discriminator input {s:?}, grid {}x{}", cfg.height, cfg.width)));
    }
    let pooled = if cfg.disc_pool > 1 {
        g.avg_pool2d(maps, cfg.disc_pool)
    } else {
        maps
    };
    let features = (cfg.height / cfg.disc_pool) * (cfg.width / cfg.disc_pool);
    let mut x = g.reshape(pooled, &[s[0] * s[1], features]);
    for j in 0..3 {
        let w = state.bind(g, &format!("disc.fc{j}.w"));
        let b = state.bind(g, &format!("disc.fc{j}.b"));
        x = g.linear(x, w, Some(b));
        if j < 2 {
            x = g.leaky_relu(x, cfg.leaky_slope);
        }
    }
    Ok(g.sigmoid(x))
}

/// Per-hour probability that hourly rain reaches 0.5 mm/hr.
pub fn classify_rain(state: &ModelState, sample: &SequenceSample) -> Result<Vec<Vec<f64>>, NetError> {
    if state.config.head != Head::Probability {
        return Err(NetError::InvalidConfig("not a classifier model".into()));
    }
    Ok(state.predict(sample)?.predictions)
}

use std::collections::HashMap;

use crate::kernels::{col2im, gemm, im2col, Window};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq)]
enum Unary {
    Sigmoid,
    Tanh,
    Relu,
    LeakyRelu(f64),
    Abs,
    Square,
    /// `ln(max(x, eps))`; zero gradient on the clamped side.
    ClampedLn(f64),
    Scale(f64),
    AddScalar(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Unary(Unary, Var),
    Binary(Binary, Var, Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    ConcatChannels(Vec<Var>),
    SliceChannels {
        x: Var,
        start: usize,
    },
    Reshape(Var),
    AvgPool2d {
        x: Var,
        k: usize,
    },
    Sum(Var),
    Mean(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Append-only computation tape. Build the forward pass with the op methods,
/// then call [`Graph::backward`] on a scalar node.
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    frozen: Vec<String>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: HashMap::new(),
            frozen: Vec::new(),
        }
    }

    /// Parameters whose name starts with `prefix` are bound as constants.
    pub fn freeze_prefix(&mut self, prefix: &str) {
        self.frozen.push(prefix.to_string());
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Differentiable leaf.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Bind a stored parameter. Repeated binds of the same id return the same
    /// node, so recurrent weights share one gradient accumulator.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let name = store.name(id);
        let trainable = !self.frozen.iter().any(|p| name.starts_with(p.as_str()));
        let v = self.push(store.get(id).clone(), Op::Leaf, trainable);
        self.params.insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn unary(&mut self, kind: Unary, x: Var) -> Var {
        let f: Box<dyn Fn(f64) -> f64> = match kind {
            Unary::Sigmoid => Box::new(sigmoid),
            Unary::Tanh => Box::new(f64::tanh),
            Unary::Relu => Box::new(|v| if v > 0.0 { v } else { 0.0 }),
            Unary::LeakyRelu(s) => Box::new(move |v| if v > 0.0 { v } else { s * v }),
            Unary::Abs => Box::new(f64::abs),
            Unary::Square => Box::new(|v| v * v),
            Unary::ClampedLn(eps) => Box::new(move |v: f64| v.max(eps).ln()),
            Unary::Scale(a) => Box::new(move |v| a * v),
            Unary::AddScalar(a) => Box::new(move |v| v + a),
        };
        let value = self.value(x).map(f);
        let needs = self.needs(x);
        self.push(value, Op::Unary(kind, x), needs)
    }

    /// Which side of its kink every input to a piecewise op (ReLU, leaky
    /// ReLU, abs, clamped log) lies on, in node order. Two evaluations with
    /// equal patterns lie in the same smooth piece.
    pub fn branch_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::Unary(kind, x) = node.op {
                let input = self.value(x).data();
                match kind {
                    Unary::Relu | Unary::LeakyRelu(_) => out.extend(input.iter().map(|&v| v > 0.0)),
                    Unary::Abs => out.extend(input.iter().map(|&v| v >= 0.0)),
                    Unary::ClampedLn(eps) => out.extend(input.iter().map(|&v| v > eps)),
                    _ => {}
                }
            }
        }
        out
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(Unary::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(Unary::Tanh, x)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(Unary::Relu, x)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(Unary::LeakyRelu(slope), x)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(Unary::Abs, x)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(Unary::Square, x)
    }

    pub fn clamped_ln(&mut self, x: Var, eps: f64) -> Var {
        self.unary(Unary::ClampedLn(eps), x)
    }

    pub fn scale(&mut self, x: Var, a: f64) -> Var {
        self.unary(Unary::Scale(a), x)
    }

    pub fn add_scalar(&mut self, x: Var, a: f64) -> Var {
        self.unary(Unary::AddScalar(a), x)
    }

    /// `1 - x`
    pub fn one_minus(&mut self, x: Var) -> Var {
        let neg = self.scale(x, -1.0);
        self.add_scalar(neg, 1.0)
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(
            ta.shape(),
            tb.shape(),
            "{kind:?}: shape mismatch {:?} vs {:?}",
            ta.shape(),
            tb.shape()
        );
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| match kind {
                Binary::Add => x + y,
                Binary::Sub => x - y,
                Binary::Mul => x * y,
            })
            .collect();
        let value = Tensor::from_vec(ta.shape(), data);
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Binary(kind, a, b), needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Mul, a, b)
    }

    /// 2-D convolution. `x`: `[N, Cin, H, W]`, `w`: `[Cout, Cin, k, k]`,
    /// `b`: `[Cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Var {
        let (n, cin, h, wd) = self.value(x).dims4();
        let (cout, wcin, k, k2) = self.value(w).dims4();
        assert_eq!(cin, wcin, "conv2d: input has {cin} channels, weight expects {wcin}");
        assert_eq!(k, k2, "conv2d: square kernels only");
        assert!(stride > 0);
        assert!(h + 2 * padding >= k && wd + 2 * padding >= k, "conv2d: kernel larger than input");
        let win = Window {
            channels: cin,
            height: h,
            width: wd,
            kernel: k,
            stride,
            padding,
            out_height: (h + 2 * padding - k) / stride + 1,
            out_width: (wd + 2 * padding - k) / stride + 1,
        };
        let mut out = Tensor::zeros(&[n, cout, win.out_height, win.out_width]);
        let mut cols = vec![0.0; win.rows() * win.cols()];
        let xin = self.value(x).data();
        let wt = self.value(w).data();
        let in_stride = cin * h * wd;
        let out_stride = cout * win.cols();
        for s in 0..n {
            im2col(&xin[s * in_stride..(s + 1) * in_stride], &win, &mut cols);
            let dst = &mut out.data_mut()[s * out_stride..(s + 1) * out_stride];
            gemm(false, false, cout, win.rows(), win.cols(), 1.0, wt, &cols, 0.0, dst);
        }
        if let Some(b) = b {
            add_channel_bias(&mut out, self.value(b));
        }
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(
            out,
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                padding,
            },
            needs,
        )
    }

    /// Transposed 2-D convolution. `w`: `[Cin, Cout, k, k]`. Output size is
    /// `(H - 1) * stride - 2 * padding + k`.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Var {
        let (n, cin, h, wd) = self.value(x).dims4();
        let (wcin, cout, k, k2) = self.value(w).dims4();
        assert_eq!(cin, wcin, "conv_transpose2d: input has {cin} channels, weight expects {wcin}");
        assert_eq!(k, k2, "conv_transpose2d: square kernels only");
        let oh = (h - 1) * stride + k - 2 * padding;
        let ow = (wd - 1) * stride + k - 2 * padding;
        let win = transpose_window(cout, oh, ow, k, stride, padding, h, wd);
        let mut out = Tensor::zeros(&[n, cout, oh, ow]);
        let mut cols = vec![0.0; win.rows() * win.cols()];
        let xin = self.value(x).data();
        let wt = self.value(w).data();
        let in_stride = cin * h * wd;
        let out_stride = cout * oh * ow;
        for s in 0..n {
            gemm(
                true,
                false,
                win.rows(),
                cin,
                win.cols(),
                1.0,
                wt,
                &xin[s * in_stride..(s + 1) * in_stride],
                0.0,
                &mut cols,
            );
            col2im(&cols, &win, &mut out.data_mut()[s * out_stride..(s + 1) * out_stride]);
        }
        if let Some(b) = b {
            add_channel_bias(&mut out, self.value(b));
        }
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(
            out,
            Op::ConvTranspose2d {
                x,
                w,
                b,
                stride,
                padding,
            },
            needs,
        )
    }

    /// Dense layer. `x`: `[N, in]`, `w`: `[out, in]`, `b`: `[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let xs = self.value(x).shape();
        let ws = self.value(w).shape();
        assert_eq!(xs.len(), 2, "linear: expected [N, in], got {xs:?}");
        assert_eq!(xs[1], ws[1], "linear: input width {} vs weight {:?}", xs[1], ws);
        let (n, fin, fout) = (xs[0], xs[1], ws[0]);
        let mut out = Tensor::zeros(&[n, fout]);
        gemm(
            false,
            true,
            n,
            fin,
            fout,
            1.0,
            self.value(x).data(),
            self.value(w).data(),
            0.0,
            out.data_mut(),
        );
        if let Some(b) = b {
            let bias = self.value(b).data();
            assert_eq!(bias.len(), fout);
            for row in out.data_mut().chunks_mut(fout) {
                for (o, bb) in row.iter_mut().zip(bias) {
                    *o += bb;
                }
            }
        }
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(out, Op::Linear { x, w, b }, needs)
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let (n, _, h, w) = self.value(parts[0]).dims4();
        let chans: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (pn, pc, ph, pw) = self.value(p).dims4();
                assert_eq!((pn, ph, pw), (n, h, w), "concat_channels: mismatched parts");
                pc
            })
            .collect();
        let total: usize = chans.iter().sum();
        let plane = h * w;
        let mut data = Vec::with_capacity(n * total * plane);
        for s in 0..n {
            for (&p, &c) in parts.iter().zip(&chans) {
                let src = self.value(p).data();
                data.extend_from_slice(&src[s * c * plane..(s + 1) * c * plane]);
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(
            Tensor::from_vec(&[n, total, h, w], data),
            Op::ConcatChannels(parts.to_vec()),
            needs,
        )
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        assert!(start + len <= c, "slice_channels: {start}+{len} > {c}");
        let plane = h * w;
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(n * len * plane);
        for s in 0..n {
            let base = (s * c + start) * plane;
            data.extend_from_slice(&src[base..base + len * plane]);
        }
        let needs = self.needs(x);
        self.push(
            Tensor::from_vec(&[n, len, h, w], data),
            Op::SliceChannels { x, start },
            needs,
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let value = self.value(x).clone().reshape(shape);
        let needs = self.needs(x);
        self.push(value, Op::Reshape(x), needs)
    }

    /// Non-overlapping `k x k` mean pooling; H and W must be multiples of `k`.
    pub fn avg_pool2d(&mut self, x: Var, k: usize) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        assert!(k > 0 && h % k == 0 && w % k == 0, "avg_pool2d: {h}x{w} not divisible by {k}");
        let (oh, ow) = (h / k, w / k);
        let src = self.value(x).data();
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        let norm = 1.0 / (k * k) as f64;
        let dst = out.data_mut();
        for p in 0..n * c {
            for i in 0..h {
                for j in 0..w {
                    dst[(p * oh + i / k) * ow + j / k] += src[(p * h + i) * w + j] * norm;
                }
            }
        }
        let needs = self.needs(x);
        self.push(out, Op::AvgPool2d { x, k }, needs)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).sum());
        let needs = self.needs(x);
        self.push(v, Op::Sum(x), needs)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let v = Tensor::scalar(t.sum() / t.len() as f64);
        let needs = self.needs(x);
        self.push(v, Op::Mean(x), needs)
    }

    /// Reverse sweep from a single-element node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &gout, &mut grads);
            grads[idx] = Some(gout);
        }
        Gradients {
            grads,
            params: self.params.clone(),
        }
    }

    fn propagate(&self, node: &Node, gout: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, g: Tensor| {
            if !self.needs(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Unary(kind, x) => {
                let xin = self.value(*x).data();
                let y = node.value.data();
                let g: Vec<f64> = gout
                    .data()
                    .iter()
                    .zip(xin.iter().zip(y))
                    .map(|(&go, (&xv, &yv))| {
                        go * match *kind {
                            Unary::Sigmoid => yv * (1.0 - yv),
                            Unary::Tanh => 1.0 - yv * yv,
                            Unary::Relu => (xv > 0.0) as u8 as f64,
                            Unary::LeakyRelu(s) => {
                                if xv > 0.0 {
                                    1.0
                                } else {
                                    s
                                }
                            }
                            Unary::Abs => {
                                if xv > 0.0 {
                                    1.0
                                } else if xv < 0.0 {
                                    -1.0
                                } else {
                                    0.0
                                }
                            }
                            Unary::Square => 2.0 * xv,
                            Unary::ClampedLn(eps) => {
                                if xv > eps {
                                    1.0 / xv
                                } else {
                                    0.0
                                }
                            }
                            Unary::Scale(a) => a,
                            Unary::AddScalar(_) => 1.0,
                        }
                    })
                    .collect();
                acc(*x, Tensor::from_vec(gout.shape(), g));
            }
            Op::Binary(kind, a, b) => match kind {
                Binary::Add => {
                    acc(*a, gout.clone());
                    acc(*b, gout.clone());
                }
                Binary::Sub => {
                    acc(*a, gout.clone());
                    acc(*b, gout.map(|v| -v));
                }
                Binary::Mul => {
                    if self.needs(*a) {
                        acc(*a, elementwise(gout, self.value(*b), |g, y| g * y));
                    }
                    if self.needs(*b) {
                        acc(*b, elementwise(gout, self.value(*a), |g, y| g * y));
                    }
                }
            },
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                padding,
            } => {
                let xt = self.value(*x);
                let wt = self.value(*w);
                let (n, cin, h, wd) = xt.dims4();
                let (cout, _, k, _) = wt.dims4();
                let (_, _, oh, ow) = gout.dims4();
                let win = Window {
                    channels: cin,
                    height: h,
                    width: wd,
                    kernel: k,
                    stride: *stride,
                    padding: *padding,
                    out_height: oh,
                    out_width: ow,
                };
                let mut cols = vec![0.0; win.rows() * win.cols()];
                let in_stride = cin * h * wd;
                let out_stride = cout * oh * ow;
                if self.needs(*w) {
                    let mut dw = Tensor::zeros(wt.shape());
                    for s in 0..n {
                        im2col(&xt.data()[s * in_stride..(s + 1) * in_stride], &win, &mut cols);
                        gemm(
                            false,
                            true,
                            cout,
                            win.cols(),
                            win.rows(),
                            1.0,
                            &gout.data()[s * out_stride..(s + 1) * out_stride],
                            &cols,
                            1.0,
                            dw.data_mut(),
                        );
                    }
                    acc(*w, dw);
                }
                if self.needs(*x) {
                    let mut dx = Tensor::zeros(xt.shape());
                    for s in 0..n {
                        gemm(
                            true,
                            false,
                            win.rows(),
                            cout,
                            win.cols(),
                            1.0,
                            wt.data(),
                            &gout.data()[s * out_stride..(s + 1) * out_stride],
                            0.0,
                            &mut cols,
                        );
                        col2im(&cols, &win, &mut dx.data_mut()[s * in_stride..(s + 1) * in_stride]);
                    }
                    acc(*x, dx);
                }
                if let Some(b) = b {
                    if self.needs(*b) {
                        acc(*b, channel_sums(gout));
                    }
                }
            }
            Op::ConvTranspose2d {
                x,
                w,
                b,
                stride,
                padding,
            } => {
                let xt = self.value(*x);
                let wt = self.value(*w);
                let (n, cin, h, wd) = xt.dims4();
                let (_, cout, k, _) = wt.dims4();
                let (_, _, oh, ow) = gout.dims4();
                let win = transpose_window(cout, oh, ow, k, *stride, *padding, h, wd);
                let mut cols = vec![0.0; win.rows() * win.cols()];
                let in_stride = cin * h * wd;
                let out_stride = cout * oh * ow;
                let mut dw = self.needs(*w).then(|| Tensor::zeros(wt.shape()));
                let mut dx = self.needs(*x).then(|| Tensor::zeros(xt.shape()));
                for s in 0..n {
                    im2col(&gout.data()[s * out_stride..(s + 1) * out_stride], &win, &mut cols);
                    if let Some(dw) = dw.as_mut() {
                        gemm(
                            false,
                            true,
                            cin,
                            win.cols(),
                            win.rows(),
                            1.0,
                            &xt.data()[s * in_stride..(s + 1) * in_stride],
                            &cols,
                            1.0,
                            dw.data_mut(),
                        );
                    }
                    if let Some(dx) = dx.as_mut() {
                        gemm(
                            false,
                            false,
                            cin,
                            win.rows(),
                            win.cols(),
                            1.0,
                            wt.data(),
                            &cols,
                            0.0,
                            &mut dx.data_mut()[s * in_stride..(s + 1) * in_stride],
                        );
                    }
                }
                if let Some(dw) = dw {
                    acc(*w, dw);
                }
                if let Some(dx) = dx {
                    acc(*x, dx);
                }
                if let Some(b) = b {
                    if self.needs(*b) {
                        acc(*b, channel_sums(gout));
                    }
                }
            }
            Op::Linear { x, w, b } => {
                let xt = self.value(*x);
                let wt = self.value(*w);
                let (n, fin) = (xt.shape()[0], xt.shape()[1]);
                let fout = wt.shape()[0];
                if self.needs(*x) {
                    let mut dx = Tensor::zeros(xt.shape());
                    gemm(false, false, n, fout, fin, 1.0, gout.data(), wt.data(), 0.0, dx.data_mut());
                    acc(*x, dx);
                }
                if self.needs(*w) {
                    let mut dw = Tensor::zeros(wt.shape());
                    gemm(true, false, fout, n, fin, 1.0, gout.data(), xt.data(), 0.0, dw.data_mut());
                    acc(*w, dw);
                }
                if let Some(b) = b {
                    if self.needs(*b) {
                        let mut db = Tensor::zeros(&[fout]);
                        for row in gout.data().chunks(fout) {
                            for (d, g) in db.data_mut().iter_mut().zip(row) {
                                *d += g;
                            }
                        }
                        acc(*b, db);
                    }
                }
            }
            Op::ConcatChannels(parts) => {
                let (n, total, h, w) = gout.dims4();
                let plane = h * w;
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).shape()[1];
                    if self.needs(p) {
                        let mut data = Vec::with_capacity(n * c * plane);
                        for s in 0..n {
                            let base = (s * total + offset) * plane;
                            data.extend_from_slice(&gout.data()[base..base + c * plane]);
                        }
                        acc(p, Tensor::from_vec(&[n, c, h, w], data));
                    }
                    offset += c;
                }
            }
            Op::SliceChannels { x, start } => {
                let (n, c, h, w) = self.value(*x).dims4();
                let len = gout.shape()[1];
                let plane = h * w;
                let mut dx = Tensor::zeros(&[n, c, h, w]);
                for s in 0..n {
                    let dst = (s * c + start) * plane;
                    let src = s * len * plane;
                    dx.data_mut()[dst..dst + len * plane]
                        .copy_from_slice(&gout.data()[src..src + len * plane]);
                }
                acc(*x, dx);
            }
            Op::Reshape(x) => {
                acc(*x, gout.clone().reshape(self.value(*x).shape()));
            }
            Op::AvgPool2d { x, k } => {
                let (n, c, h, w) = self.value(*x).dims4();
                let (oh, ow) = (h / k, w / k);
                let norm = 1.0 / (k * k) as f64;
                let mut dx = Tensor::zeros(&[n, c, h, w]);
                let g = gout.data();
                let dst = dx.data_mut();
                for p in 0..n * c {
                    for i in 0..h {
                        for j in 0..w {
                            dst[(p * h + i) * w + j] = g[(p * oh + i / k) * ow + j / k] * norm;
                        }
                    }
                }
                acc(*x, dx);
            }
            Op::Sum(x) => {
                acc(*x, Tensor::full(self.value(*x).shape(), gout.item()));
            }
            Op::Mean(x) => {
                let t = self.value(*x);
                acc(*x, Tensor::full(t.shape(), gout.item() / t.len() as f64));
            }
        }
    }
}

/// Result of a reverse sweep.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: HashMap<ParamId, Var>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradients of every bound, trainable parameter that was reached,
    /// ordered by parameter id.
    pub fn params(&self) -> Vec<(ParamId, &Tensor)> {
        let mut out: Vec<(ParamId, &Tensor)> = self
            .params
            .iter()
            .filter_map(|(&id, &v)| self.get(v).map(|g| (id, g)))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.shape(), data)
}

fn add_channel_bias(out: &mut Tensor, bias: &Tensor) {
    let (n, c, h, w) = out.dims4();
    assert_eq!(bias.len(), c, "bias length {} vs {c} channels", bias.len());
    let plane = h * w;
    let b = bias.data();
    for (i, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
        let bv = b[i % c];
        for v in chunk {
            *v += bv;
        }
    }
    debug_assert_eq!(n * c * plane, out.len());
}

fn channel_sums(g: &Tensor) -> Tensor {
    let (_, c, h, w) = g.dims4();
    let mut out = vec![0.0; c];
    for (i, chunk) in g.data().chunks(h * w).enumerate() {
        out[i % c] += chunk.iter().sum::<f64>();
    }
    Tensor::from_vec(&[c], out)
}

/// The window of the forward convolution whose adjoint is the transposed
/// convolution: it slides over the (large) output and lands on the input grid.
#[allow(clippy::too_many_arguments)]
fn transpose_window(
    cout: usize,
    oh: usize,
    ow: usize,
    k: usize,
    stride: usize,
    padding: usize,
    h: usize,
    w: usize,
) -> Window {
    Window {
        channels: cout,
        height: oh,
        width: ow,
        kernel: k,
        stride,
        padding,
        out_height: h,
        out_width: w,
    }
}

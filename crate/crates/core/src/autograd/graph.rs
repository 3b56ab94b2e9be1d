use std::collections::BTreeMap;

use super::tensor::{Scalar, Tensor};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Input,
    Param(usize),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    MaxPool2 {
        x: Var,
        argmax: Vec<u32>,
    },
    Upsample2 {
        x: Var,
    },
    InstanceNorm {
        x: Var,
        inv_std: Vec<T>,
    },
    ChannelAffine {
        x: Var,
        gamma: Var,
        beta: Var,
    },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Add(Var, Var),
    MulGate {
        x: Var,
        gate: Var,
    },
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Reverse-mode tape. Every operation appends a node; [`Graph::backward`]
/// walks the tape once in reverse.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Parameter gradients keyed by parameter id.
pub type ParamGrads<T> = BTreeMap<usize, Tensor<T>>;

fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, k: usize, cols: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    let out = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize) as usize;
                    out[..x0].fill(T::zero());
                    out[x1..].fill(T::zero());
                    let s0 = (x0 as isize + dx) as usize;
                    out[x0..x1].copy_from_slice(&src[s0..s0 + (x1 - x0)]);
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, k: usize, dx_out: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx_out[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize) as usize;
                    let s0 = (x0 as isize + dx) as usize;
                    let dst = &mut plane[sy as usize * w + s0..sy as usize * w + s0 + (x1 - x0)];
                    for (d, &v) in dst.iter_mut().zip(&src[y * w + x0..y * w + x1]) {
                        *d = *d + v;
                    }
                }
            }
        }
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}

impl<T: Scalar> Graph<T> {
    pub const NORM_EPS: f64 = 1e-6;

    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
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

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Constant leaf; gradients are not propagated into it.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Input, false)
    }

    /// Trainable leaf identified by `id` in the caller's parameter store.
    pub fn param(&mut self, id: usize, t: Tensor<T>) -> Var {
        self.push(t, Op::Param(id), true)
    }

    /// Stride-1 "same" convolution with an odd square kernel.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let [n, c, h, wd] = self.value(x).shape();
        let [o, ci, k, k2] = self.value(w).shape();
        assert_eq!(ci, c, "conv2d input channels");
        assert!(k == k2 && k % 2 == 1, "conv2d kernel must be odd and square");
        let hw = h * wd;
        let ckk = c * k * k;
        let mut out = Tensor::zeros([n, o, h, wd]);
        let mut cols = if k == 1 { Vec::new() } else { vec![T::zero(); ckk * hw] };
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            let od = out.data_mut();
            for i in 0..n {
                let xn = &xv[i * c * hw..(i + 1) * c * hw];
                let src: &[T] = if k == 1 {
                    xn
                } else {
                    im2col(xn, c, h, wd, k, &mut cols);
                    &cols
                };
                let dst = &mut od[i * o * hw..(i + 1) * o * hw];
                T::gemm(o, ckk, hw, wv, ckk as isize, 1, src, hw as isize, 1, T::zero(), dst);
            }
        }
        if let Some(b) = b {
            let bv = self.value(b).data().to_vec();
            assert_eq!(bv.len(), o, "conv2d bias length");
            let od = out.data_mut();
            for i in 0..n {
                for (oc, &bias) in bv.iter().enumerate() {
                    let base = (i * o + oc) * hw;
                    for v in &mut od[base..base + hw] {
                        *v = *v + bias;
                    }
                }
            }
        }
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(out, Op::Conv2d { x, w, b }, needs)
    }

    pub fn max_pool2(&mut self, x: Var) -> Var {
        let [n, c, h, w] = self.value(x).shape();
        assert!(h % 2 == 0 && w % 2 == 0, "max_pool2 requires even spatial size");
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Tensor::zeros([n, c, oh, ow]);
        let mut argmax = vec![0u32; n * c * oh * ow];
        let xv = self.value(x).data();
        let od = out.data_mut();
        for p in 0..n * c {
            let plane = &xv[p * h * w..(p + 1) * h * w];
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = 2 * y * w + 2 * xx;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = (2 * y + dy) * w + 2 * xx + dx;
                        if plane[idx] > plane[best] {
                            best = idx;
                        }
                    }
                    let o = p * oh * ow + y * ow + xx;
                    od[o] = plane[best];
                    argmax[o] = best as u32;
                }
            }
        }
        let needs = self.needs(x);
        self.push(out, Op::MaxPool2 { x, argmax }, needs)
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample2(&mut self, x: Var) -> Var {
        let [n, c, h, w] = self.value(x).shape();
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = Tensor::zeros([n, c, oh, ow]);
        let xv = self.value(x).data();
        let od = out.data_mut();
        for p in 0..n * c {
            for y in 0..oh {
                let src = &xv[p * h * w + (y / 2) * w..p * h * w + (y / 2 + 1) * w];
                let dst = &mut od[p * oh * ow + y * ow..p * oh * ow + (y + 1) * ow];
                for (xx, d) in dst.iter_mut().enumerate() {
                    *d = src[xx / 2];
                }
            }
        }
        let needs = self.needs(x);
        self.push(out, Op::Upsample2 { x }, needs)
    }

    /// Per-sample, per-channel standardisation (no affine part).
    pub fn instance_norm(&mut self, x: Var) -> Var {
        let xt = self.value(x);
        let [n, c, _, _] = xt.shape();
        let plane = xt.plane();
        let eps = Self::NORM_EPS;
        let mut out = Tensor::zeros(xt.shape());
        let mut inv_std = Vec::with_capacity(n * c);
        let xv = xt.data();
        let od = out.data_mut();
        for p in 0..n * c {
            let src = &xv[p * plane..(p + 1) * plane];
            let mean = src.iter().map(|v| v.as_f64()).sum::<f64>() / plane as f64;
            let var = src
                .iter()
                .map(|v| (v.as_f64() - mean).powi(2))
                .sum::<f64>()
                / plane as f64;
            let is = 1.0 / (var + eps).sqrt();
            for (d, s) in od[p * plane..(p + 1) * plane].iter_mut().zip(src) {
                *d = T::of_f64((s.as_f64() - mean) * is);
            }
            inv_std.push(T::of_f64(is));
        }
        let needs = self.needs(x);
        self.push(out, Op::InstanceNorm { x, inv_std }, needs)
    }

    /// `gamma[c] * x + beta[c]` with `gamma`, `beta` shaped `[1, C, 1, 1]`.
    pub fn channel_affine(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xt = self.value(x);
        let [n, c, _, _] = xt.shape();
        let plane = xt.plane();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        assert!(g.len() == c && b.len() == c, "channel_affine parameter length");
        let mut out = xt.clone();
        for (p, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
            let ch = p % c;
            for v in chunk {
                *v = g[ch] * *v + b[ch];
            }
        }
        debug_assert_eq!(out.numel(), n * c * plane);
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(out, Op::ChannelAffine { x, gamma, beta }, needs)
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v = f(*v);
        }
        let needs = self.needs(x);
        self.push(out, op, needs)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(T::zero()), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, |v| T::one() / (T::one() + (-v).exp()), Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.tanh(), Op::Tanh(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let needs = self.needs(a) || self.needs(b);
        self.push(out, Op::Add(a, b), needs)
    }

    /// Broadcast a single-channel gate `[N, 1, H, W]` over the channels of `x`.
    pub fn mul_gate(&mut self, x: Var, gate: Var) -> Var {
        let xt = self.value(x);
        let [n, c, h, w] = xt.shape();
        assert_eq!(self.value(gate).shape(), [n, 1, h, w], "gate shape");
        let plane = h * w;
        let gv = self.value(gate).data();
        let mut out = xt.clone();
        for (p, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
            let gp = &gv[(p / c) * plane..(p / c + 1) * plane];
            for (v, &g) in chunk.iter_mut().zip(gp) {
                *v = *v * g;
            }
        }
        let needs = self.needs(x) || self.needs(gate);
        self.push(out, Op::MulGate { x, gate }, needs)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        if parts.len() == 1 {
            return parts[0];
        }
        let [n, _, h, w] = self.value(parts[0]).shape();
        let plane = h * w;
        let total: usize = parts
            .iter()
            .map(|&p| {
                let s = self.value(p).shape();
                assert!(s[0] == n && s[2] == h && s[3] == w, "concat shape mismatch");
                s[1]
            })
            .sum();
        let mut data = Vec::with_capacity(n * total * plane);
        for i in 0..n {
            for &p in parts {
                let t = self.value(p);
                let c = t.shape()[1];
                data.extend_from_slice(&t.data()[i * c * plane..(i + 1) * c * plane]);
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(
            Tensor::from_vec([n, total, h, w], data),
            Op::Concat(parts.to_vec()),
            needs,
        )
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Var {
        let out = self.value(x).channels(start, len);
        let needs = self.needs(x);
        self.push(out, Op::Slice { x, start }, needs)
    }

    /// Outputs of every instance-norm node, in recording order.
    pub fn instance_norm_outputs(&self) -> Vec<&Tensor<T>> {
        self.nodes
            .iter()
            .filter(|n| matches!(n.op, Op::InstanceNorm { .. }))
            .map(|n| &n.value)
            .collect()
    }

    /// Inputs of every instance-norm node, in recording order.
    pub fn instance_norm_inputs(&self) -> Vec<&Tensor<T>> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::InstanceNorm { x, .. } => Some(self.value(x)),
                _ => None,
            })
            .collect()
    }

    /// Back-propagates the given output gradients and returns parameter gradients.
    pub fn backward(&self, seeds: Vec<(Var, Tensor<T>)>) -> ParamGrads<T> {
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        for (v, g) in seeds {
            assert_eq!(self.value(v).shape(), g.shape(), "seed gradient shape");
            accumulate(&mut grads, v, g);
        }
        let mut out = ParamGrads::new();
        for idx in (0..self.nodes.len()).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Param(id) => match out.get_mut(id) {
                    Some(g) => g.add_assign(&dy),
                    None => {
                        out.insert(*id, dy);
                    }
                },
                Op::Conv2d { x, w, b } => self.conv_backward(&mut grads, *x, *w, *b, &dy),
                Op::MaxPool2 { x, argmax } => {
                    if self.needs(*x) {
                        let xs = self.value(*x).shape();
                        let in_plane = xs[2] * xs[3];
                        let out_plane = dy.plane();
                        let mut dx = Tensor::zeros(xs);
                        let dd = dx.data_mut();
                        for (o, (&g, &a)) in dy.data().iter().zip(argmax).enumerate() {
                            let p = o / out_plane;
                            let i = p * in_plane + a as usize;
                            dd[i] = dd[i] + g;
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Upsample2 { x } => {
                    if self.needs(*x) {
                        let xs = self.value(*x).shape();
                        let [n, c, h, w] = xs;
                        let ow = 2 * w;
                        let mut dx = Tensor::zeros(xs);
                        let dd = dx.data_mut();
                        let dyv = dy.data();
                        for p in 0..n * c {
                            for y in 0..2 * h {
                                for xx in 0..ow {
                                    let i = p * h * w + (y / 2) * w + xx / 2;
                                    dd[i] = dd[i] + dyv[p * 4 * h * w + y * ow + xx];
                                }
                            }
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::InstanceNorm { x, inv_std } => {
                    if self.needs(*x) {
                        let y = &node.value;
                        let plane = y.plane();
                        let mut dx = Tensor::zeros(y.shape());
                        let inv_n = 1.0 / plane as f64;
                        for (p, &is) in inv_std.iter().enumerate() {
                            let range = p * plane..(p + 1) * plane;
                            let yv = &y.data()[range.clone()];
                            let gv = &dy.data()[range.clone()];
                            let mean_g = gv.iter().map(|v| v.as_f64()).sum::<f64>() * inv_n;
                            let mean_gy = gv
                                .iter()
                                .zip(yv)
                                .map(|(g, y)| g.as_f64() * y.as_f64())
                                .sum::<f64>()
                                * inv_n;
                            let is = is.as_f64();
                            for ((d, g), yy) in dx.data_mut()[range].iter_mut().zip(gv).zip(yv) {
                                *d = T::of_f64(
                                    is * (g.as_f64() - mean_g - yy.as_f64() * mean_gy),
                                );
                            }
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::ChannelAffine { x, gamma, beta } => {
                    let xt = self.value(*x);
                    let c = xt.shape()[1];
                    let plane = xt.plane();
                    let gv = self.value(*gamma).data();
                    if self.needs(*gamma) || self.needs(*beta) {
                        let mut dg = vec![0.0f64; c];
                        let mut db = vec![0.0f64; c];
                        for (p, (gc, xc)) in dy
                            .data()
                            .chunks(plane)
                            .zip(xt.data().chunks(plane))
                            .enumerate()
                        {
                            let ch = p % c;
                            for (g, xx) in gc.iter().zip(xc) {
                                dg[ch] += g.as_f64() * xx.as_f64();
                                db[ch] += g.as_f64();
                            }
                        }
                        let to_t = |v: Vec<f64>| {
                            Tensor::from_vec([1, c, 1, 1], v.into_iter().map(T::of_f64).collect())
                        };
                        if self.needs(*gamma) {
                            accumulate(&mut grads, *gamma, to_t(dg));
                        }
                        if self.needs(*beta) {
                            accumulate(&mut grads, *beta, to_t(db));
                        }
                    }
                    if self.needs(*x) {
                        let mut dx = dy.clone();
                        for (p, chunk) in dx.data_mut().chunks_mut(plane).enumerate() {
                            let g = gv[p % c];
                            for v in chunk {
                                *v = *v * g;
                            }
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Relu(x) | Op::Sigmoid(x) | Op::Tanh(x) => {
                    if self.needs(*x) {
                        let y = node.value.data();
                        let mut dx = dy;
                        let one = T::one();
                        match node.op {
                            Op::Relu(_) => {
                                for (d, &v) in dx.data_mut().iter_mut().zip(y) {
                                    if v <= T::zero() {
                                        *d = T::zero();
                                    }
                                }
                            }
                            Op::Sigmoid(_) => {
                                for (d, &v) in dx.data_mut().iter_mut().zip(y) {
                                    *d = *d * v * (one - v);
                                }
                            }
                            _ => {
                                for (d, &v) in dx.data_mut().iter_mut().zip(y) {
                                    *d = *d * (one - v * v);
                                }
                            }
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, dy.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, dy);
                    }
                }
                Op::MulGate { x, gate } => {
                    let xt = self.value(*x);
                    let [n, c, h, w] = xt.shape();
                    let plane = h * w;
                    let gv = self.value(*gate).data();
                    if self.needs(*gate) {
                        let mut dg = Tensor::zeros([n, 1, h, w]);
                        let dgd = dg.data_mut();
                        for (p, (gc, xc)) in dy
                            .data()
                            .chunks(plane)
                            .zip(xt.data().chunks(plane))
                            .enumerate()
                        {
                            let dst = &mut dgd[(p / c) * plane..(p / c + 1) * plane];
                            for ((d, &g), &xx) in dst.iter_mut().zip(gc).zip(xc) {
                                *d = *d + g * xx;
                            }
                        }
                        accumulate(&mut grads, *gate, dg);
                    }
                    if self.needs(*x) {
                        let mut dx = dy;
                        for (p, chunk) in dx.data_mut().chunks_mut(plane).enumerate() {
                            let gp = &gv[(p / c) * plane..(p / c + 1) * plane];
                            for (v, &g) in chunk.iter_mut().zip(gp) {
                                *v = *v * g;
                            }
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let c = self.value(p).shape()[1];
                        if self.needs(p) {
                            accumulate(&mut grads, p, dy.channels(offset, c));
                        }
                        offset += c;
                    }
                }
                Op::Slice { x, start } => {
                    if self.needs(*x) {
                        let xs = self.value(*x).shape();
                        let [n, c, h, w] = xs;
                        let plane = h * w;
                        let len = dy.shape()[1];
                        let mut dx = Tensor::zeros(xs);
                        for i in 0..n {
                            let dst = (i * c + start) * plane;
                            dx.data_mut()[dst..dst + len * plane].copy_from_slice(
                                &dy.data()[i * len * plane..(i + 1) * len * plane],
                            );
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                }
            }
        }
        out
    }

    fn conv_backward(
        &self,
        grads: &mut [Option<Tensor<T>>],
        x: Var,
        w: Var,
        b: Option<Var>,
        dy: &Tensor<T>,
    ) {
        let xt = self.value(x);
        let wt = self.value(w);
        let [n, c, h, wd] = xt.shape();
        let [o, _, k, _] = wt.shape();
        let hw = h * wd;
        let ckk = c * k * k;
        let dyv = dy.data();

        if let Some(b) = b.filter(|b| self.needs(*b)) {
            let mut db = vec![0.0f64; o];
            for i in 0..n {
                for (oc, acc) in db.iter_mut().enumerate() {
                    let base = (i * o + oc) * hw;
                    *acc += dyv[base..base + hw].iter().map(|v| v.as_f64()).sum::<f64>();
                }
            }
            let db = Tensor::from_vec([1, o, 1, 1], db.into_iter().map(T::of_f64).collect());
            accumulate(grads, b, db);
        }

        let need_w = self.needs(w);
        let need_x = self.needs(x);
        let mut cols = if k == 1 { Vec::new() } else { vec![T::zero(); ckk * hw] };
        if need_w {
            let mut dw = Tensor::zeros(wt.shape());
            for i in 0..n {
                let xn = &xt.data()[i * c * hw..(i + 1) * c * hw];
                let src: &[T] = if k == 1 {
                    xn
                } else {
                    im2col(xn, c, h, wd, k, &mut cols);
                    &cols
                };
                let dyn_ = &dyv[i * o * hw..(i + 1) * o * hw];
                T::gemm(
                    o,
                    hw,
                    ckk,
                    dyn_,
                    hw as isize,
                    1,
                    src,
                    1,
                    hw as isize,
                    T::one(),
                    dw.data_mut(),
                );
            }
            accumulate(grads, w, dw);
        }
        if need_x {
            let mut dx = Tensor::zeros(xt.shape());
            for i in 0..n {
                let dyn_ = &dyv[i * o * hw..(i + 1) * o * hw];
                let dxn = &mut dx.data_mut()[i * c * hw..(i + 1) * c * hw];
                if k == 1 {
                    T::gemm(
                        c,
                        o,
                        hw,
                        wt.data(),
                        1,
                        ckk as isize,
                        dyn_,
                        hw as isize,
                        1,
                        T::zero(),
                        dxn,
                    );
                } else {
                    T::gemm(
                        ckk,
                        o,
                        hw,
                        wt.data(),
                        1,
                        ckk as isize,
                        dyn_,
                        hw as isize,
                        1,
                        T::zero(),
                        &mut cols,
                    );
                    col2im(&cols, c, h, wd, k, dxn);
                }
            }
            accumulate(grads, x, dx);
        }
    }
}

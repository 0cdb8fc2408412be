//! Tape-based reverse-mode automatic differentiation.
//!
//! Every op appends a node whose inputs all have smaller indices, so the tape
//! order is a topological order and the reverse sweep is a single backward scan.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::kernels::{conv, norm, pool, resize, softmax};
use crate::label::ClassSet;
use crate::nn::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One pixel term of a [`Graph::set_nll`] loss: `−ln Σ_{c∈set} softmax(z)[c]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelTarget {
    /// Flat `n·H·W + y·W + x` index.
    pub pixel: u32,
    pub set: ClassSet,
}

/// Batch statistics produced by a training-mode batch norm, to be folded into running stats.
#[derive(Clone, Debug)]
pub struct StatUpdate {
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub momentum: f32,
    pub batch_mean: Vec<f32>,
    /// Unbiased estimate.
    pub batch_var: Vec<f32>,
}

enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        win: conv::Window,
        cout: usize,
    },
    Deconv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        win: conv::Window,
        cin: usize,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        stats: norm::BatchStats,
    },
    ChannelAffine {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<f32>,
        inv_std: Vec<f32>,
    },
    Relu(Var),
    Add(Var, Var),
    MaxPool {
        x: Var,
        argmax: Vec<u32>,
    },
    Bilinear(Var),
    Softmax(Var),
    Sum(Var),
    Mean(Var),
    Dot {
        x: Var,
        weights: Vec<f32>,
    },
    SetNll {
        logits: Var,
        targets: Vec<PixelTarget>,
        /// Per-target `ln Σ_{c∈set} exp z_c`, kept for the backward pass.
        lse_set: Vec<f32>,
        denom: f32,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Wall-clock time spent in forward kernels, grouped by scope label.
#[derive(Clone, Debug, Default)]
pub struct Profile {
    pub entries: Vec<(String, Duration)>,
}

impl Profile {
    fn add(&mut self, scope: &str, d: Duration) {
        match self.entries.iter_mut().find(|(s, _)| s == scope) {
            Some((_, acc)) => *acc += d,
            None => self.entries.push((scope.to_string(), d)),
        }
    }

    pub fn merge(&mut self, other: &Profile) {
        for (s, d) in &other.entries {
            self.add(s, *d);
        }
    }

    pub fn total(&self) -> Duration {
        self.entries.iter().map(|(_, d)| *d).sum()
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
    stat_updates: Vec<StatUpdate>,
    no_grad: bool,
    profile: Option<Profile>,
    scope: String,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Graph that never records gradients (inference).
    pub fn inference() -> Self {
        Graph {
            no_grad: true,
            ..Self::default()
        }
    }

    pub fn enable_profiling(&mut self) {
        self.profile = Some(Profile::default());
    }

    pub fn profile(&self) -> Option<&Profile> {
        self.profile.as_ref()
    }

    /// Label attributed to subsequent ops in the profile.
    pub fn set_scope(&mut self, scope: impl Into<String>) {
        self.scope = scope.into();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, t: Tensor) -> Var {
        let rg = t.requires_grad() && !self.no_grad;
        self.push(t, Op::Leaf, rg)
    }

    /// Leaf for a stored parameter. Repeated calls return the same node, so a
    /// parameter used twice accumulates both contributions into one gradient.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let rg = store.is_trainable(id) && !self.no_grad;
        let v = self.push(store.tensor(id).clone(), Op::Leaf, rg);
        self.nodes[v.0].param = Some(id);
        self.param_vars.insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[f32]> {
        self.nodes[v.0].value.grad()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradients of every parameter leaf touched by this graph, in first-use order.
    pub fn param_grads(&self) -> Vec<(ParamId, &[f32])> {
        let mut out: Vec<(ParamId, Var)> = self.param_vars.iter().map(|(&p, &v)| (p, v)).collect();
        out.sort_by_key(|&(_, v)| v);
        out.into_iter()
            .filter_map(|(p, v)| self.grad(v).map(|g| (p, g)))
            .collect()
    }

    /// Sign of every ReLU input and the winner of every max-pool window, in
    /// graph order. Evaluations with equal patterns lie in the same piece of
    /// the piecewise-smooth function.
    pub fn activation_pattern(&self) -> Vec<u32> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => out.extend(self.value(*x).data().iter().map(|&v| (v > 0.0) as u32)),
                Op::MaxPool { argmax, .. } => out.extend_from_slice(argmax),
                _ => {}
            }
        }
        out
    }

    pub fn take_stat_updates(&mut self) -> Vec<StatUpdate> {
        std::mem::take(&mut self.stat_updates)
    }

    pub(crate) fn push_stat_update(&mut self, u: StatUpdate) {
        self.stat_updates.push(u);
    }

    pub fn zero_grad(&mut self) {
        self.nodes.iter_mut().for_each(|n| n.value.zero_grad());
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Option<Var>]) -> bool {
        !self.no_grad && vars.iter().flatten().any(|v| self.nodes[v.0].requires_grad)
    }

    fn timed<T>(&mut self, f: impl FnOnce(&Self) -> T) -> T {
        if self.profile.is_none() {
            return f(self);
        }
        let t0 = Instant::now();
        let out = f(self);
        let d = t0.elapsed();
        let scope = self.scope.clone();
        if let Some(p) = self.profile.as_mut() {
            p.add(&scope, d);
        }
        out
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (n, cin, h, wd) = self.value(x).dims4()?;
        let (cout, wcin, kh, kw) = self.value(w).dims4()?;
        if cin != wcin {
            return Err(Error::shape("conv2d", "in_channels", format!("input has {cin}, weight expects {wcin}")));
        }
        if let Some(b) = b {
            if self.value(b).numel() != cout {
                return Err(Error::shape("conv2d", "bias", format!("expected {cout} values")));
            }
        }
        let win = conv::Window::conv(cin, h, wd, kh, kw, stride, pad).ok_or_else(|| {
            Error::shape("conv2d", "spatial", format!("kernel {kh}x{kw} (pad {pad}, stride {stride}) does not fit {h}x{wd}"))
        })?;
        let out = self.timed(|g| {
            conv::conv2d_forward(
                g.value(x).data(),
                n,
                g.value(w).data(),
                b.map(|b| g.value(b).data()),
                cout,
                &win,
            )
        });
        let rg = self.any_grad(&[Some(x), Some(w), b]);
        let t = Tensor::from_parts(vec![n, cout, win.oh, win.ow], out);
        Ok(self.push(t, Op::Conv2d { x, w, b, win, cout }, rg))
    }

    /// Transposed convolution; `w` is `[in_ch, out_ch, kh, kw]`.
    pub fn deconv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (n, cin, h, wd) = self.value(x).dims4()?;
        let (wcin, cout, kh, kw) = self.value(w).dims4()?;
        if cin != wcin {
            return Err(Error::shape("deconv2d", "in_channels", format!("input has {cin}, weight expects {wcin}")));
        }
        if stride == 0 || (h - 1) * stride + kh < 2 * pad + 1 || (wd - 1) * stride + kw < 2 * pad + 1 {
            return Err(Error::shape("deconv2d", "spatial", "geometry yields an empty output"));
        }
        let oh = (h - 1) * stride + kh - 2 * pad;
        let ow = (wd - 1) * stride + kw - 2 * pad;
        let win = conv::Window::conv(cout, oh, ow, kh, kw, stride, pad)
            .filter(|win| win.oh == h && win.ow == wd)
            .ok_or_else(|| Error::shape("deconv2d", "spatial", "inconsistent transposed geometry"))?;
        if let Some(b) = b {
            if self.value(b).numel() != cout {
                return Err(Error::shape("deconv2d", "bias", format!("expected {cout} values")));
            }
        }
        let out = self.timed(|g| {
            conv::deconv2d_forward(g.value(x).data(), n, cin, g.value(w).data(), b.map(|b| g.value(b).data()), &win)
        });
        let rg = self.any_grad(&[Some(x), Some(w), b]);
        let t = Tensor::from_parts(vec![n, cout, oh, ow], out);
        Ok(self.push(t, Op::Deconv2d { x, w, b, win, cin }, rg))
    }

    /// Training-mode batch norm. Returns the output and the batch statistics
    /// (mean, biased variance).
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f32) -> Result<(Var, Vec<f32>, Vec<f32>)> {
        let (n, c, h, w) = self.value(x).dims4()?;
        self.check_channels("batch_norm", c, &[gamma, beta])?;
        if n * h * w < 2 {
            return Err(Error::shape("batch_norm", "batch", "training mode needs more than one value per channel"));
        }
        let (y, stats) = self.timed(|g| {
            norm::batch_norm_train(g.value(x).data(), n, c, h * w, g.value(gamma).data(), g.value(beta).data(), eps)
        });
        let (mean, var) = (stats.mean.clone(), stats.var.clone());
        let rg = self.any_grad(&[Some(x), Some(gamma), Some(beta)]);
        let t = Tensor::from_parts(vec![n, c, h, w], y);
        let v = self.push(t, Op::BatchNorm { x, gamma, beta, stats }, rg);
        Ok((v, mean, var))
    }

    /// Per-channel `gamma·(x − mean)/sqrt(var + eps) + beta` with fixed statistics.
    pub fn batch_norm_eval(&mut self, x: Var, gamma: Var, beta: Var, mean: &[f32], var: &[f32], eps: f32) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        self.check_channels("batch_norm", c, &[gamma, beta])?;
        if mean.len() != c || var.len() != c {
            return Err(Error::shape("batch_norm", "running stats", format!("expected {c} channels")));
        }
        let inv_std: Vec<f32> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
        let y = self.timed(|g| {
            norm::channel_affine(g.value(x).data(), n, c, h * w, g.value(gamma).data(), g.value(beta).data(), mean, &inv_std)
        });
        let rg = self.any_grad(&[Some(x), Some(gamma), Some(beta)]);
        let t = Tensor::from_parts(vec![n, c, h, w], y);
        Ok(self.push(
            t,
            Op::ChannelAffine {
                x,
                gamma,
                beta,
                mean: mean.to_vec(),
                inv_std,
            },
            rg,
        ))
    }

    fn check_channels(&self, op: &'static str, c: usize, vars: &[Var]) -> Result<()> {
        for &v in vars {
            if self.value(v).numel() != c {
                return Err(Error::shape(op, "channels", format!("input has {c}, parameter has {}", self.value(v).numel())));
            }
        }
        Ok(())
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.timed(|g| {
            let v = g.value(x);
            Tensor::from_parts(v.shape().to_vec(), v.data().iter().map(|&a| if a < 0.0 { 0.0 } else { a }).collect())
        });
        let rg = self.any_grad(&[Some(x)]);
        self.push(t, Op::Relu(x), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("add", "operands", format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let t = self.timed(|g| {
            let (va, vb) = (g.value(a), g.value(b));
            Tensor::from_parts(va.shape().to_vec(), va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect())
        });
        let rg = self.any_grad(&[Some(a), Some(b)]);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    /// Max-pool without padding.
    pub fn maxpool2d(&mut self, x: Var, k: usize, stride: usize) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if k == 0 || stride == 0 || k > h || k > w {
            return Err(Error::shape("maxpool2d", "kernel", format!("kernel {k} larger than input {h}x{w}")));
        }
        let (out, argmax, oh, ow) = self.timed(|g| pool::maxpool_valid(g.value(x).data(), n * c, h, w, k, stride));
        let rg = self.any_grad(&[Some(x)]);
        Ok(self.push(Tensor::from_parts(vec![n, c, oh, ow], out), Op::MaxPool { x, argmax }, rg))
    }

    /// Stride-1 max-pool with replication padding; output keeps the input size.
    pub fn maxpool2d_same(&mut self, x: Var, k: usize) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if k.is_multiple_of(2) {
            return Err(Error::shape("maxpool2d_same", "kernel", format!("kernel must be odd, got {k}")));
        }
        let (out, argmax) = self.timed(|g| pool::maxpool_same(g.value(x).data(), n * c, h, w, k));
        let rg = self.any_grad(&[Some(x)]);
        Ok(self.push(Tensor::from_parts(vec![n, c, h, w], out), Op::MaxPool { x, argmax }, rg))
    }

    /// Half-pixel-centered bilinear resize of the spatial axes.
    pub fn bilinear_resize(&mut self, x: Var, oh: usize, ow: usize) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if oh == 0 || ow == 0 {
            return Err(Error::shape("bilinear_resize", "output", "empty output size"));
        }
        let out = self.timed(|g| resize::bilinear_forward(g.value(x).data(), n * c, h, w, oh, ow));
        let rg = self.any_grad(&[Some(x)]);
        Ok(self.push(Tensor::from_parts(vec![n, c, oh, ow], out), Op::Bilinear(x), rg))
    }

    pub fn softmax_channels(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let out = self.timed(|g| softmax::softmax_channels(g.value(x).data(), n, c, h * w));
        let rg = self.any_grad(&[Some(x)]);
        Ok(self.push(Tensor::from_parts(vec![n, c, h, w], out), Op::Softmax(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f32 = self.value(x).data().iter().sum();
        let rg = self.any_grad(&[Some(x)]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.data().iter().sum::<f32>() / v.numel() as f32;
        let rg = self.any_grad(&[Some(x)]);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// `Σ x ⊙ weights` for a constant weight buffer.
    pub fn dot(&mut self, x: Var, weights: Vec<f32>) -> Result<Var> {
        if weights.len() != self.value(x).numel() {
            return Err(Error::shape("dot", "length", format!("{} vs {}", weights.len(), self.value(x).numel())));
        }
        let s: f32 = self.value(x).data().iter().zip(&weights).map(|(a, b)| a * b).sum();
        let rg = self.any_grad(&[Some(x)]);
        Ok(self.push(Tensor::scalar(s), Op::Dot { x, weights }, rg))
    }

    /// `(1/denom) · Σ_targets −ln Σ_{c∈set} softmax(logits)[c]` over `[N, C, H, W]` logits.
    pub fn set_nll(&mut self, logits: Var, targets: Vec<PixelTarget>, denom: f32) -> Result<Var> {
        let (n, c, h, w) = self.value(logits).dims4()?;
        let plane = h * w;
        if denom <= 0.0 {
            return Err(Error::Invalid("set_nll: non-positive normalizer".into()));
        }
        for t in &targets {
            if t.pixel as usize >= n * plane || t.set.is_empty() || t.set.iter().any(|k| k >= c) {
                return Err(Error::shape("set_nll", "target", format!("bad pixel target {t:?}")));
            }
        }
        let z = self.value(logits).data();
        let mut lse_set = Vec::with_capacity(targets.len());
        let mut total = 0.0f64;
        for t in &targets {
            let base = (t.pixel as usize / plane) * c * plane + t.pixel as usize % plane;
            let all = softmax::log_sum_exp(z, base, c, plane, |_| true);
            let sel = softmax::log_sum_exp(z, base, c, plane, |k| t.set.contains(k));
            lse_set.push(sel);
            total += (all - sel) as f64;
        }
        let value = (total / denom as f64) as f32;
        let rg = self.any_grad(&[Some(logits)]);
        Ok(self.push(
            Tensor::scalar(value),
            Op::SetNll {
                logits,
                targets,
                lse_set,
                denom,
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar. Leaf gradients accumulate across calls;
    /// intermediate gradients hold the most recent sweep.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::shape("backward", "loss", format!("expected a scalar, got {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Vec<f32>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            let node = &mut self.nodes[i];
            match node.op {
                Op::Leaf => node.value.accumulate_grad(&g),
                _ => node.value.set_grad(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        let node = &self.nodes[i];
        let mut send = |v: Var, d: Vec<f32>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.iter_mut().zip(&d).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(d),
            }
        };
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, win, cout } => {
                let n = self.value(*x).shape()[0];
                let r = conv::conv2d_backward(self.value(*x).data(), n, self.value(*w).data(), g, *cout, win, needs(*x));
                if let Some(dx) = r.dx {
                    send(*x, dx);
                }
                send(*w, r.dw);
                if let Some(b) = b {
                    send(*b, r.db);
                }
            }
            Op::Deconv2d { x, w, b, win, cin } => {
                let n = self.value(*x).shape()[0];
                let r = conv::deconv2d_backward(self.value(*x).data(), n, *cin, self.value(*w).data(), g, win, needs(*x));
                if let Some(dx) = r.dx {
                    send(*x, dx);
                }
                send(*w, r.dw);
                if let Some(b) = b {
                    send(*b, r.db);
                }
            }
            Op::BatchNorm { x, gamma, beta, stats } => {
                let (n, c, h, w) = dims(self.value(*x));
                let r = norm::batch_norm_train_backward(self.value(*x).data(), g, n, c, h * w, self.value(*gamma).data(), stats);
                send(*x, r.dx);
                send(*gamma, r.dgamma);
                send(*beta, r.dbeta);
            }
            Op::ChannelAffine {
                x,
                gamma,
                beta,
                mean,
                inv_std,
            } => {
                let (n, c, h, w) = dims(self.value(*x));
                let plane = h * w;
                let xd = self.value(*x).data();
                let gm = self.value(*gamma).data();
                let mut dx = vec![0.0f32; xd.len()];
                let mut dgamma = vec![0.0f32; c];
                for b in 0..n {
                    for ch in 0..c {
                        let off = (b * c + ch) * plane;
                        let scale = gm[ch] * inv_std[ch];
                        for k in off..off + plane {
                            dx[k] = g[k] * scale;
                            dgamma[ch] += g[k] * (xd[k] - mean[ch]) * inv_std[ch];
                        }
                    }
                }
                send(*x, dx);
                send(*gamma, dgamma);
                send(*beta, conv::channel_sums(g, n, c, plane));
            }
            Op::Relu(x) => {
                let xd = self.value(*x).data();
                send(*x, g.iter().zip(xd).map(|(&d, &v)| if v > 0.0 { d } else { 0.0 }).collect());
            }
            Op::Add(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.to_vec());
            }
            Op::MaxPool { x, argmax } => {
                send(*x, pool::maxpool_backward(g, argmax, self.value(*x).numel()));
            }
            Op::Bilinear(x) => {
                let (n, c, h, w) = dims(self.value(*x));
                let (oh, ow) = (node.value.shape()[2], node.value.shape()[3]);
                send(*x, resize::bilinear_backward(g, n * c, h, w, oh, ow));
            }
            Op::Softmax(x) => {
                let (n, c, h, w) = dims(&node.value);
                send(*x, softmax::softmax_channels_backward(node.value.data(), g, n, c, h * w));
            }
            Op::Sum(x) => send(*x, vec![g[0]; self.value(*x).numel()]),
            Op::Mean(x) => {
                let len = self.value(*x).numel();
                send(*x, vec![g[0] / len as f32; len]);
            }
            Op::Dot { x, weights } => send(*x, weights.iter().map(|w| w * g[0]).collect()),
            Op::SetNll {
                logits,
                targets,
                lse_set,
                denom,
            } => {
                let (_, c, h, w) = dims(self.value(*logits));
                let plane = h * w;
                let z = self.value(*logits).data();
                let scale = g[0] / denom;
                let mut dz = vec![0.0f32; z.len()];
                for (t, &sel) in targets.iter().zip(lse_set) {
                    let base = (t.pixel as usize / plane) * c * plane + t.pixel as usize % plane;
                    let all = softmax::log_sum_exp(z, base, c, plane, |_| true);
                    for k in 0..c {
                        let idx = base + k * plane;
                        let p = (z[idx] - all).exp();
                        let q = if t.set.contains(k) { (z[idx] - sel).exp() } else { 0.0 };
                        dz[idx] += scale * (p - q);
                    }
                }
                send(*logits, dz);
            }
        }
    }
}

fn dims(t: &Tensor) -> (usize, usize, usize, usize) {
    let s = t.shape();
    (s[0], s[1], s[2], s[3])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap().with_requires_grad(true)
    }

    #[test]
    fn sum_grad_is_ones() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[3], &[1.0, -2.0, 5.0]));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn relu_subgradient() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2], &[-1.0, 2.0]));
        let r = g.relu(x);
        assert_eq!(g.value(r).data(), &[0.0, 2.0]);
        let s = g.sum(r);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn relu_derivative_at_zero_is_zero() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[1], &[0.0]));
        let r = g.relu(x);
        let s = g.sum(r);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0.0]);
    }

    #[test]
    fn relu_propagates_nan() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2], &[f32::NAN, -1.0]));
        let r = g.relu(x);
        assert!(g.value(r).data()[0].is_nan());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0]));
        let r = g.relu(x);
        assert!(matches!(g.backward(r), Err(Error::Shape { .. })));
    }

    #[test]
    fn repeated_backward_accumulates_on_leaves() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0]));
        let r = g.relu(x);
        let s = g.sum(r);
        g.backward(s).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, 2.0]);
        g.zero_grad();
        assert!(g.grad(x).is_none());
    }

    #[test]
    fn reused_leaf_accumulates_both_paths() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0]));
        let y = g.add(x, x).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn inference_graph_records_no_grad() {
        let mut g = Graph::inference();
        let x = g.leaf(t(&[2], &[1.0, 2.0]));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert!(g.grad(x).is_none());
    }

    #[test]
    fn softmax_uniform_logits() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[1, 4, 1, 1], &[0.7; 4]));
        let y = g.softmax_channels(x).unwrap();
        for &p in g.value(y).data() {
            assert!((p - 0.25).abs() < 1e-7);
        }
    }

    #[test]
    fn maxpool_rejects_oversized_kernel() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[1, 1, 2, 2], &[0.0; 4]));
        assert!(g.maxpool2d(x, 3, 1).is_err());
        assert!(g.maxpool2d_same(x, 2).is_err());
    }

    #[test]
    fn maxpool_gradient_goes_to_first_maximum() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[1, 1, 2, 2], &[1.0, 3.0, 3.0, 0.0]));
        let y = g.maxpool2d(x, 2, 2).unwrap();
        assert_eq!(g.value(y).data(), &[3.0]);
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0.0, 1.0, 0.0, 0.0]);
    }
}

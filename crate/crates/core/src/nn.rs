//! Parameter storage and the basic layers built on [`Graph`] ops.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{Graph, StatUpdate, Var};
use crate::tensor::Tensor;

pub const BN_EPS: f32 = 1e-5;
pub const BN_MOMENTUM: f32 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    /// Registration position within its store.
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Trainable,
    /// Running statistics; saved in checkpoints, never optimized.
    Buffer,
}

#[derive(Clone, Debug)]
struct Param {
    name: String,
    tensor: Tensor,
    kind: ParamKind,
}

/// Named parameter tensors in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor, kind: ParamKind) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter name {name}");
        self.params.push(Param { name, tensor, kind });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn kind(&self, id: ParamId) -> ParamKind {
        self.params[id.0].kind
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.params[id.0].kind == ParamKind::Trainable
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].tensor
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].tensor
    }

    /// Total element count of trainable tensors.
    pub fn trainable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.kind == ParamKind::Trainable)
            .map(|p| p.tensor.numel())
            .sum()
    }

    pub fn apply_stat_updates(&mut self, updates: &[StatUpdate]) {
        for u in updates {
            let m = u.momentum;
            let rm = self.tensor_mut(u.running_mean).data_mut();
            rm.iter_mut().zip(&u.batch_mean).for_each(|(r, b)| *r = (1.0 - m) * *r + m * b);
            let rv = self.tensor_mut(u.running_var).data_mut();
            rv.iter_mut().zip(&u.batch_var).for_each(|(r, b)| *r = (1.0 - m) * *r + m * b);
        }
    }
}

/// Kaiming-normal initializer for ReLU networks.
pub fn kaiming(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize) -> Tensor {
    let std = (2.0 / fan_in.max(1) as f32).sqrt();
    let normal = Normal::new(0.0f32, std).expect("finite std");
    let n = shape.iter().product();
    let data = (0..n).map(|_| normal.sample(rng)).collect();
    Tensor::from_parts(shape, data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// 2-D convolution; weight `[out_ch, in_ch, k, k]`.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Result<Self> {
        if in_ch == 0 || out_ch == 0 || kernel == 0 || stride == 0 {
            return Err(Error::config(name, "conv channels, kernel and stride must be positive"));
        }
        let w = kaiming(rng, vec![out_ch, in_ch, kernel, kernel], in_ch * kernel * kernel);
        let weight = store.add(format!("{name}.weight"), w, ParamKind::Trainable);
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(vec![out_ch]), ParamKind::Trainable));
        Ok(Conv2d {
            weight,
            bias,
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = self.bias.map(|b| g.param(store, b));
        g.conv2d(x, w, b, self.stride, self.padding)
    }

    pub fn param_count(&self) -> usize {
        conv_param_count(self.in_ch, self.out_ch, self.kernel, self.bias.is_some())
    }
}

pub fn conv_param_count(in_ch: usize, out_ch: usize, kernel: usize, bias: bool) -> usize {
    in_ch * out_ch * kernel * kernel + if bias { out_ch } else { 0 }
}

/// Transposed convolution that exactly doubles spatial size; weight `[in_ch, out_ch, k, k]`.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub padding: usize,
}

pub const UPSAMPLE_STRIDE: usize = 2;

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        padding: usize,
        bias: bool,
    ) -> Result<Self> {
        check_doubling(kernel, padding).map_err(|m| Error::config(name, m))?;
        if in_ch == 0 || out_ch == 0 {
            return Err(Error::config(name, "channels must be positive"));
        }
        // Each output pixel receives in_ch·(k/stride)² taps.
        let fan_in = in_ch * kernel * kernel / (UPSAMPLE_STRIDE * UPSAMPLE_STRIDE);
        let w = kaiming(rng, vec![in_ch, out_ch, kernel, kernel], fan_in);
        let weight = store.add(format!("{name}.weight"), w, ParamKind::Trainable);
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(vec![out_ch]), ParamKind::Trainable));
        Ok(ConvTranspose2d {
            weight,
            bias,
            in_ch,
            out_ch,
            kernel,
            padding,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = self.bias.map(|b| g.param(store, b));
        g.deconv2d(x, w, b, UPSAMPLE_STRIDE, self.padding)
    }

    pub fn param_count(&self) -> usize {
        conv_param_count(self.in_ch, self.out_ch, self.kernel, self.bias.is_some())
    }
}

/// Output of a stride-2 transposed convolution is `2H − 2 − 2p + k`; exact doubling needs `k = 2 + 2p`.
pub fn check_doubling(kernel: usize, padding: usize) -> std::result::Result<(), String> {
    if kernel == UPSAMPLE_STRIDE + 2 * padding {
        Ok(())
    } else {
        Err(format!(
            "kernel {kernel} with padding {padding} does not double the input (need kernel = 2 + 2*padding)"
        ))
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub channels: usize,
    pub momentum: f32,
    pub eps: f32,
}

impl BatchNorm2d {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        let c = channels;
        BatchNorm2d {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(vec![c], 1.0), ParamKind::Trainable),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(vec![c]), ParamKind::Trainable),
            running_mean: store.add(format!("{name}.running_mean"), Tensor::zeros(vec![c]), ParamKind::Buffer),
            running_var: store.add(format!("{name}.running_var"), Tensor::full(vec![c], 1.0), ParamKind::Buffer),
            channels,
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    /// Training mode normalizes with batch statistics and queues a running-stat
    /// update on the graph; eval mode uses the stored running statistics.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        match mode {
            Mode::Train => {
                let (y, mean, var) = g.batch_norm_train(x, gamma, beta, self.eps)?;
                let s = g.shape(x);
                let m = (s[0] * s[2] * s[3]) as f32;
                g.push_stat_update(StatUpdate {
                    running_mean: self.running_mean,
                    running_var: self.running_var,
                    momentum: self.momentum,
                    batch_mean: mean,
                    batch_var: var.iter().map(|v| v * m / (m - 1.0)).collect(),
                });
                Ok(y)
            }
            Mode::Eval => {
                let mean = store.tensor(self.running_mean).data();
                let var = store.tensor(self.running_var).data();
                g.batch_norm_eval(x, gamma, beta, mean, var, self.eps)
            }
        }
    }

    pub fn param_count(&self) -> usize {
        2 * self.channels
    }
}

/// Random tensor with entries uniform in `[-scale, scale]`.
pub fn uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f32) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-scale..=scale)).collect();
    Tensor::from_parts(shape, data)
}

//! Network structure: residual encoder, per-level transfer functions, the
//! adaptor that fuses neighboring levels, shared-weight decoder blocks, and the
//! 1×1 segmentation head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::label::MAX_CLASSES;
use crate::nn::{check_doubling, conv_param_count, BatchNorm2d, Conv2d, ConvTranspose2d, Mode, ParamId, ParamKind, ParamStore};
use crate::tensor::Tensor;

/// Structural description of a network, sufficient to rebuild it exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub num_levels: usize,
    pub encoder_channels: Vec<usize>,
    /// Encoder-to-adaptor channel reduction of the transfer functions.
    pub reduction_factor: usize,
    pub num_classes: usize,
    pub enable_adaptor_downsample: bool,
    pub encoder_blocks_per_level: usize,
    pub in_channels: usize,
    pub upsample_kernel: usize,
    pub upsample_padding: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig::desk(4)
    }
}

impl NetworkConfig {
    /// Small CPU-friendly layout.
    pub fn desk(num_classes: usize) -> Self {
        NetworkConfig {
            num_levels: 4,
            encoder_channels: vec![16, 32, 64, 128],
            reduction_factor: 4,
            num_classes,
            enable_adaptor_downsample: true,
            encoder_blocks_per_level: 2,
            in_channels: 3,
            upsample_kernel: 2,
            upsample_padding: 0,
        }
    }

    /// ResNet-scale channel layout (1/4 … 1/32 at 256 … 2048 channels).
    pub fn paper(num_classes: usize) -> Self {
        NetworkConfig {
            encoder_channels: vec![256, 512, 1024, 2048],
            ..Self::desk(num_classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_levels == 0 {
            return Err(Error::config("network.num_levels", "must be at least 1"));
        }
        if self.encoder_channels.len() != self.num_levels {
            return Err(Error::config(
                "network.encoder_channels",
                format!("expected {} entries, got {}", self.num_levels, self.encoder_channels.len()),
            ));
        }
        if self.reduction_factor == 0 {
            return Err(Error::config("network.reduction_factor", "must be positive"));
        }
        for (i, &c) in self.encoder_channels.iter().enumerate() {
            if c == 0 || c % self.reduction_factor != 0 {
                return Err(Error::config(
                    "network.encoder_channels",
                    format!("level {i} has {c} channels, not a positive multiple of {}", self.reduction_factor),
                ));
            }
        }
        if self.num_classes == 0 || self.num_classes > MAX_CLASSES {
            return Err(Error::config("network.num_classes", format!("must be in 1..={MAX_CLASSES}")));
        }
        if self.encoder_blocks_per_level == 0 {
            return Err(Error::config("network.encoder_blocks_per_level", "must be at least 1"));
        }
        if self.in_channels == 0 {
            return Err(Error::config("network.in_channels", "must be positive"));
        }
        check_doubling(self.upsample_kernel, self.upsample_padding).map_err(|m| Error::config("network.upsample_kernel", m))
    }

    /// Spatial stride of level `s` relative to the input.
    pub fn level_stride(&self, s: usize) -> usize {
        1 << (s + 2)
    }

    /// Input sides must be multiples of the deepest stride.
    pub fn required_multiple(&self) -> usize {
        self.level_stride(self.num_levels - 1)
    }

    pub fn adaptor_channels(&self, s: usize) -> usize {
        self.encoder_channels[s] / self.reduction_factor
    }

    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let m = self.required_multiple();
        if h == 0 || w == 0 || !h.is_multiple_of(m) || !w.is_multiple_of(m) {
            return Err(Error::shape(
                "rgpnet",
                "input size",
                format!("{h}x{w} must be a positive multiple of {m} in both dimensions"),
            ));
        }
        Ok(())
    }

    /// `[C, H, W]` of each encoder level for an `h×w` input.
    pub fn level_shapes(&self, h: usize, w: usize) -> Result<Vec<[usize; 3]>> {
        self.validate()?;
        self.check_input(h, w)?;
        Ok((0..self.num_levels)
            .map(|s| [self.encoder_channels[s], h / self.level_stride(s), w / self.level_stride(s)])
            .collect())
    }

    /// Logit shape for an `[n, _, h, w]` input.
    pub fn output_shape(&self, n: usize, h: usize, w: usize) -> Result<[usize; 4]> {
        self.level_shapes(h, w)?;
        Ok([n, self.num_classes, h, w])
    }
}

/// Conv (no bias) + batch norm, optionally followed by ReLU.
#[derive(Clone, Debug)]
struct ConvBn {
    conv: Conv2d,
    bn: BatchNorm2d,
}

impl ConvBn {
    #[allow(clippy::too_many_arguments)]
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, cin: usize, cout: usize, k: usize, stride: usize) -> Result<Self> {
        Ok(ConvBn {
            conv: Conv2d::new(store, rng, &format!("{name}.conv"), cin, cout, k, stride, k / 2, false)?,
            bn: BatchNorm2d::new(store, &format!("{name}.bn"), cout),
        })
    }

    fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, mode: Mode, relu: bool) -> Result<Var> {
        let y = self.conv.forward(g, store, x)?;
        let y = self.bn.forward(g, store, y, mode)?;
        Ok(if relu { g.relu(y) } else { y })
    }
}

#[derive(Clone, Debug)]
struct ResBlock {
    a: ConvBn,
    b: ConvBn,
    shortcut: Option<ConvBn>,
}

impl ResBlock {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, cin: usize, cout: usize, stride: usize) -> Result<Self> {
        let shortcut = if stride != 1 || cin != cout {
            Some(ConvBn::new(store, rng, &format!("{name}.shortcut"), cin, cout, 1, stride)?)
        } else {
            None
        };
        Ok(ResBlock {
            a: ConvBn::new(store, rng, &format!("{name}.a"), cin, cout, 3, stride)?,
            b: ConvBn::new(store, rng, &format!("{name}.b"), cout, cout, 3, 1)?,
            shortcut,
        })
    }

    fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let y = self.a.forward(g, store, x, mode, true)?;
        let y = self.b.forward(g, store, y, mode, false)?;
        let skip = match &self.shortcut {
            Some(sc) => sc.forward(g, store, x, mode, false)?,
            None => x,
        };
        let s = g.add(y, skip)?;
        Ok(g.relu(s))
    }
}

/// Residual encoder: a stride-4 stem, then one stage per level with a
/// stride-2 entry block at every level after the first.
#[derive(Clone, Debug)]
pub struct Encoder {
    stem: [ConvBn; 2],
    levels: Vec<Vec<ResBlock>>,
}

impl Encoder {
    fn new(cfg: &NetworkConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        let c0 = cfg.encoder_channels[0];
        let stem = [
            ConvBn::new(store, rng, "encoder.stem0", cfg.in_channels, c0, 3, 2)?,
            ConvBn::new(store, rng, "encoder.stem1", c0, c0, 3, 2)?,
        ];
        let mut levels = Vec::with_capacity(cfg.num_levels);
        for s in 0..cfg.num_levels {
            let cout = cfg.encoder_channels[s];
            let mut blocks = Vec::with_capacity(cfg.encoder_blocks_per_level);
            for b in 0..cfg.encoder_blocks_per_level {
                let (cin, stride) = match (s, b) {
                    (0, _) | (_, 1..) => (cout, 1),
                    (_, 0) => (cfg.encoder_channels[s - 1], 2),
                };
                blocks.push(ResBlock::new(store, rng, &format!("encoder.level{s}.block{b}"), cin, cout, stride)?);
            }
            levels.push(blocks);
        }
        Ok(Encoder { stem, levels })
    }

    /// One feature map per level, at strides 4, 8, 16, …
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, image: Var, mode: Mode) -> Result<Vec<Var>> {
        g.set_scope("encoder.stem");
        let mut x = self.stem[0].forward(g, store, image, mode, true)?;
        x = self.stem[1].forward(g, store, x, mode, true)?;
        let mut outs = Vec::with_capacity(self.levels.len());
        for (s, blocks) in self.levels.iter().enumerate() {
            g.set_scope(format!("encoder.level{s}"));
            for blk in blocks {
                x = blk.forward(g, store, x, mode)?;
            }
            outs.push(x);
        }
        Ok(outs)
    }
}

/// `σ(BN(ω ⊗ x + b))` with a 1×1 convolution reducing channels.
#[derive(Clone, Debug)]
pub struct Transfer {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
}

impl Transfer {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, cin: usize, cout: usize) -> Result<Self> {
        Ok(Transfer {
            conv: Conv2d::new(store, rng, &format!("{name}.conv"), cin, cout, 1, 1, 0, true)?,
            bn: BatchNorm2d::new(store, &format!("{name}.bn"), cout),
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let c = g.shape(x)[1];
        if c != self.conv.in_ch {
            return Err(Error::shape("transfer", "channels", format!("expected {}, got {c}", self.conv.in_ch)));
        }
        let y = self.conv.forward(g, store, x)?;
        let y = self.bn.forward(g, store, y, mode)?;
        Ok(g.relu(y))
    }

    pub fn param_count(&self) -> usize {
        self.conv.param_count() + self.bn.param_count()
    }
}

/// One adaptor level: transfer `T`, downsampling `D` from the shallower level,
/// and upsampling `U` from the deeper decoder output.
#[derive(Clone, Debug)]
pub struct AdaptorLevel {
    pub level: usize,
    pub transfer: Transfer,
    pub down: Option<Conv2d>,
    pub up: Option<ConvTranspose2d>,
}

impl AdaptorLevel {
    /// `D(t_prev) + t_cur + U(d_next)`. A term is included when both its module
    /// and its input are present. All branch outputs must share `t_cur`'s shape.
    pub fn fuse(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        t_prev: Option<Var>,
        t_cur: Option<Var>,
        d_next: Option<Var>,
    ) -> Result<Var> {
        let t_cur = t_cur.ok_or_else(|| Error::Invalid(format!("adaptor level {}: the current-level transfer is required", self.level)))?;
        let mut acc = t_cur;
        if let (Some(down), Some(tp)) = (&self.down, t_prev) {
            let d = down.forward(g, store, tp)?;
            check_branch(g, "D", d, t_cur)?;
            acc = g.add(d, acc)?;
        }
        if let (Some(up), Some(dn)) = (&self.up, d_next) {
            let u = up.forward(g, store, dn)?;
            check_branch(g, "U", u, t_cur)?;
            acc = g.add(acc, u)?;
        }
        Ok(acc)
    }
}

fn check_branch(g: &Graph, which: &str, branch: Var, t_cur: Var) -> Result<()> {
    if g.shape(branch) != g.shape(t_cur) {
        return Err(Error::shape(
            "adaptor",
            "branch shape",
            format!("{which} branch {:?} vs transfer {:?}", g.shape(branch), g.shape(t_cur)),
        ));
    }
    Ok(())
}

/// Residual block whose two 3×3 convolutions use one weight tensor:
/// `ReLU(x + BN2(W ⊗ ReLU(BN1(W ⊗ x))))`.
#[derive(Clone, Debug)]
pub struct DecoderBlock {
    pub weight: ParamId,
    pub bn1: BatchNorm2d,
    pub bn2: BatchNorm2d,
    pub channels: usize,
}

impl DecoderBlock {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, in_ch: usize, out_ch: usize) -> Result<Self> {
        if in_ch != out_ch {
            return Err(Error::config(
                name,
                format!("shared-weight block needs equal in/out channels, got {in_ch} -> {out_ch}"),
            ));
        }
        let c = in_ch;
        let w = crate::nn::kaiming(rng, vec![c, c, 3, 3], c * 9);
        Ok(DecoderBlock {
            weight: store.add(format!("{name}.weight"), w, ParamKind::Trainable),
            bn1: BatchNorm2d::new(store, &format!("{name}.bn1"), c),
            bn2: BatchNorm2d::new(store, &format!("{name}.bn2"), c),
            channels: c,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let c = g.shape(x)[1];
        if c != self.channels {
            return Err(Error::shape("decoder block", "channels", format!("expected {}, got {c}", self.channels)));
        }
        let w = g.param(store, self.weight);
        let y = g.conv2d(x, w, None, 1, 1)?;
        let y = self.bn1.forward(g, store, y, mode)?;
        let y = g.relu(y);
        let y = g.conv2d(y, w, None, 1, 1)?;
        let y = self.bn2.forward(g, store, y, mode)?;
        let s = g.add(x, y)?;
        Ok(g.relu(s))
    }

    /// Convolution parameters with the weight shared between both applications.
    pub fn conv_param_count(channels: usize) -> usize {
        conv_param_count(channels, channels, 3, false)
    }

    /// Convolution parameters of the same block with two independent weights.
    pub fn unshared_conv_param_count(channels: usize) -> usize {
        2 * conv_param_count(channels, channels, 3, false)
    }

    pub fn param_count(&self) -> usize {
        Self::conv_param_count(self.channels) + self.bn1.param_count() + self.bn2.param_count()
    }
}

/// How the adaptor connects levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wiring {
    /// `D` and `U` branches as configured.
    Full,
    /// Each level sees only its own transfer; only the shallowest level reaches the head.
    TransferOnly,
}

/// Intermediate tensors of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub encoder: Vec<Var>,
    pub transfers: Vec<Var>,
    pub decoded: Vec<Option<Var>>,
    /// Head output at stride 4.
    pub head: Var,
    /// Logits at input resolution.
    pub logits: Var,
}

#[derive(Clone, Debug)]
pub struct RgpNet {
    cfg: NetworkConfig,
    pub encoder: Encoder,
    pub adaptors: Vec<AdaptorLevel>,
    pub decoders: Vec<DecoderBlock>,
    pub head: Conv2d,
}

impl RgpNet {
    /// Registers every parameter in `store`. Registration order, and therefore
    /// the checkpoint layout, is a pure function of `cfg`.
    pub fn build(cfg: &NetworkConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        // Downsampling connections draw from their own stream, so toggling
        // them leaves every other initial weight unchanged.
        let mut side = ChaCha8Rng::from_seed(rng.get_seed());
        side.set_stream(rng.get_stream().wrapping_add(1));
        let encoder = Encoder::new(cfg, store, rng)?;
        let l = cfg.num_levels;
        let mut adaptors = Vec::with_capacity(l);
        let mut decoders = Vec::with_capacity(l);
        for s in 0..l {
            let r = cfg.adaptor_channels(s);
            let transfer = Transfer::new(store, rng, &format!("adaptor{s}.transfer"), cfg.encoder_channels[s], r)?;
            let down = if s > 0 && cfg.enable_adaptor_downsample {
                Some(Conv2d::new(store, &mut side, &format!("adaptor{s}.down"), cfg.adaptor_channels(s - 1), r, 3, 2, 1, true)?)
            } else {
                None
            };
            let up = if s + 1 < l {
                Some(ConvTranspose2d::new(
                    store,
                    rng,
                    &format!("adaptor{s}.up"),
                    cfg.adaptor_channels(s + 1),
                    r,
                    cfg.upsample_kernel,
                    cfg.upsample_padding,
                    true,
                )?)
            } else {
                None
            };
            adaptors.push(AdaptorLevel { level: s, transfer, down, up });
            decoders.push(DecoderBlock::new(store, rng, &format!("decoder{s}"), r, r)?);
        }
        let head = Conv2d::new(store, rng, "head", cfg.adaptor_channels(0), cfg.num_classes, 1, 1, 0, true)?;
        Ok(RgpNet {
            cfg: cfg.clone(),
            encoder,
            adaptors,
            decoders,
            head,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, image: Var, mode: Mode) -> Result<Var> {
        Ok(self.forward_traced(g, store, image, mode, Wiring::Full)?.logits)
    }

    pub fn forward_traced(&self, g: &mut Graph, store: &ParamStore, image: Var, mode: Mode, wiring: Wiring) -> Result<ForwardTrace> {
        let (_, c, h, w) = g.value(image).dims4()?;
        if c != self.cfg.in_channels {
            return Err(Error::shape("rgpnet", "input channels", format!("expected {}, got {c}", self.cfg.in_channels)));
        }
        self.cfg.check_input(h, w)?;
        let encoder = self.encoder.forward(g, store, image, mode)?;
        let l = self.cfg.num_levels;
        let mut transfers = Vec::with_capacity(l);
        for (s, (ad, &x)) in self.adaptors.iter().zip(&encoder).enumerate() {
            if wiring == Wiring::TransferOnly && s > 0 {
                break;
            }
            g.set_scope(format!("transfer{s}"));
            transfers.push(ad.transfer.forward(g, store, x, mode)?);
        }
        let mut decoded: Vec<Option<Var>> = vec![None; l];
        let top = match wiring {
            Wiring::Full => l - 1,
            Wiring::TransferOnly => 0,
        };
        for s in (0..=top).rev() {
            g.set_scope(format!("adaptor{s}"));
            let fused = match wiring {
                Wiring::Full => {
                    let t_prev = s.checked_sub(1).map(|p| transfers[p]);
                    let d_next = decoded.get(s + 1).copied().flatten();
                    self.adaptors[s].fuse(g, store, t_prev, Some(transfers[s]), d_next)?
                }
                Wiring::TransferOnly => transfers[s],
            };
            g.set_scope(format!("decoder{s}"));
            decoded[s] = Some(self.decoders[s].forward(g, store, fused, mode)?);
        }
        g.set_scope("head");
        let d0 = decoded[0].expect("shallowest level decoded");
        let head = self.head.forward(g, store, d0)?;
        g.set_scope("upsample");
        let logits = g.bilinear_resize(head, h, w)?;
        Ok(ForwardTrace {
            encoder,
            transfers,
            decoded,
            head,
            logits,
        })
    }
}

/// Closed-form trainable parameter count; decoder convolutions counted once.
pub fn count_parameters(cfg: &NetworkConfig) -> Result<usize> {
    cfg.validate()?;
    let bn = |c: usize| 2 * c;
    let cb = |cin: usize, cout: usize, k: usize| conv_param_count(cin, cout, k, false) + bn(cout);
    let ch = &cfg.encoder_channels;
    let mut total = cb(cfg.in_channels, ch[0], 3) + cb(ch[0], ch[0], 3);
    for s in 0..cfg.num_levels {
        for b in 0..cfg.encoder_blocks_per_level {
            total += if s > 0 && b == 0 {
                cb(ch[s - 1], ch[s], 3) + cb(ch[s], ch[s], 3) + cb(ch[s - 1], ch[s], 1)
            } else {
                2 * cb(ch[s], ch[s], 3)
            };
        }
        let r = cfg.adaptor_channels(s);
        total += conv_param_count(ch[s], r, 1, true) + bn(r);
        if s > 0 && cfg.enable_adaptor_downsample {
            total += conv_param_count(cfg.adaptor_channels(s - 1), r, 3, true);
        }
        if s + 1 < cfg.num_levels {
            total += conv_param_count(cfg.adaptor_channels(s + 1), r, cfg.upsample_kernel, true);
        }
        total += DecoderBlock::conv_param_count(r) + 2 * bn(r);
    }
    total += conv_param_count(cfg.adaptor_channels(0), cfg.num_classes, 1, true);
    Ok(total)
}

/// A network together with its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    pub net: RgpNet,
    pub store: ParamStore,
}

impl Model {
    pub fn new(cfg: &NetworkConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let net = RgpNet::build(cfg, &mut store, &mut rng)?;
        Ok(Model { net, store })
    }

    pub fn config(&self) -> &NetworkConfig {
        self.net.config()
    }

    pub fn forward(&self, g: &mut Graph, image: Var, mode: Mode) -> Result<Var> {
        self.net.forward(g, &self.store, image, mode)
    }

    /// Inference-mode logits for a `[N, C, H, W]` batch.
    pub fn predict_logits(&self, image: &Tensor) -> Result<Tensor> {
        let mut g = Graph::inference();
        let x = g.leaf(image.clone());
        let y = self.forward(&mut g, x, Mode::Eval)?;
        Ok(g.value(y).clone())
    }

    pub fn num_parameters(&self) -> usize {
        self.store.trainable_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_level_shapes() {
        let cfg = NetworkConfig::desk(3);
        let shapes = cfg.level_shapes(64, 64).unwrap();
        assert_eq!(shapes, vec![[16, 16, 16], [32, 8, 8], [64, 4, 4], [128, 2, 2]]);
    }

    #[test]
    fn paper_level_shapes_and_output() {
        let cfg = NetworkConfig::paper(19);
        let shapes = cfg.level_shapes(1024, 2048).unwrap();
        let channels: Vec<usize> = shapes.iter().map(|s| s[0]).collect();
        assert_eq!(channels, vec![256, 512, 1024, 2048]);
        assert_eq!(shapes[0][1..], [256, 512]);
        assert_eq!(shapes[3][1..], [32, 64]);
        assert_eq!(cfg.output_shape(1, 1024, 2048).unwrap(), [1, 19, 1024, 2048]);
        assert_eq!(cfg.adaptor_channels(3), 512);
    }

    #[test]
    fn rejects_indivisible_input() {
        let cfg = NetworkConfig::desk(3);
        let err = cfg.check_input(64, 48).unwrap_err().to_string();
        assert!(err.contains("multiple of 32"), "{err}");
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = NetworkConfig::desk(3);
        cfg.num_levels = 0;
        cfg.encoder_channels.clear();
        assert!(count_parameters(&cfg).is_err());
        let mut cfg = NetworkConfig::desk(3);
        cfg.encoder_channels[1] = 30;
        assert!(cfg.validate().is_err());
        let mut cfg = NetworkConfig::desk(3);
        cfg.upsample_kernel = 3;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn decoder_block_rejects_channel_change() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(DecoderBlock::new(&mut store, &mut rng, "d", 8, 16).is_err());
    }

    #[test]
    fn shared_decoder_halves_conv_params() {
        assert_eq!(DecoderBlock::conv_param_count(8), 576);
        assert_eq!(DecoderBlock::unshared_conv_param_count(8), 1152);
    }

    #[test]
    fn closed_form_count_matches_built_model() {
        for cfg in [NetworkConfig::desk(3), {
            let mut c = NetworkConfig::desk(5);
            c.enable_adaptor_downsample = false;
            c.encoder_blocks_per_level = 1;
            c
        }] {
            let m = Model::new(&cfg, 0).unwrap();
            assert_eq!(m.num_parameters(), count_parameters(&cfg).unwrap());
        }
    }
}

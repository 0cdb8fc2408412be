//! Segmentation losses over `[N, C, H, W]` logits and per-image label maps.
//!
//! All three losses reduce to one primitive: for every counted pixel, the
//! negative log of the total softmax probability of a target class set. Plain
//! cross-entropy uses the ground-truth singleton; label relaxation widens the
//! set to every class seen in the pixel's window when that window straddles a
//! border.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, PixelTarget, Var};
use crate::kernels::{pool, softmax};
pub use crate::label::{ClassSet, LabelMap, IGNORE};
use crate::label::MAX_CLASSES;

pub const DEFAULT_BORDER_KERNEL: usize = 3;

/// Border pixels of a label map and the class set seen in each pixel's window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BorderMask {
    height: usize,
    width: usize,
    border: Vec<bool>,
    sets: Vec<ClassSet>,
}

impl BorderMask {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_border(&self, y: usize, x: usize) -> bool {
        self.border[y * self.width + x]
    }

    pub fn border_plane(&self) -> &[bool] {
        &self.border
    }

    /// Classes present in the pixel's window (ignore excluded).
    pub fn window_set(&self, y: usize, x: usize) -> ClassSet {
        self.sets[y * self.width + x]
    }

    pub(crate) fn window_set_flat(&self, i: usize) -> ClassSet {
        self.sets[i]
    }

    pub fn border_count(&self) -> usize {
        self.border.iter().filter(|&&b| b).count()
    }

    pub fn pixel_count(&self) -> usize {
        self.border.len()
    }

    pub fn fraction(&self) -> f64 {
        self.border_count() as f64 / self.pixel_count() as f64
    }
}

/// One-hot encodes the label map, dilates every class plane with a stride-1
/// `k×k` max-pool (replication padded), and reads the resulting multi-hot
/// vectors: a pixel is a border pixel when more than one class is hot.
pub fn detect_borders(lm: &LabelMap, k: usize, num_classes: usize) -> Result<BorderMask> {
    if k < 3 || k.is_multiple_of(2) {
        return Err(Error::config("label_relaxation.kernel", format!("kernel must be odd and at least 3, got {k}")));
    }
    if num_classes == 0 || num_classes > MAX_CLASSES {
        return Err(Error::config("num_classes", format!("must be in 1..={MAX_CLASSES}")));
    }
    lm.validate(num_classes)?;
    let (h, w) = (lm.height(), lm.width());
    let plane = h * w;
    let mut onehot = vec![0.0f32; num_classes * plane];
    for (i, &l) in lm.labels().iter().enumerate() {
        if l != IGNORE {
            onehot[l as usize * plane + i] = 1.0;
        }
    }
    let (dilated, _) = pool::maxpool_same(&onehot, num_classes, h, w, k);
    let mut sets = vec![ClassSet::empty(); plane];
    for c in 0..num_classes {
        for (i, set) in sets.iter_mut().enumerate() {
            if dilated[c * plane + i] > 0.5 {
                set.insert(c);
            }
        }
    }
    let border = sets.iter().map(|s| s.len() > 1).collect();
    Ok(BorderMask {
        height: h,
        width: w,
        border,
        sets,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OhemConfig {
    /// Pixels whose target probability is below this are hard.
    pub theta: f32,
    /// Minimum number of pixels kept per batch.
    pub min_kept: usize,
}

impl Default for OhemConfig {
    fn default() -> Self {
        OhemConfig {
            theta: 0.6,
            min_kept: 5000,
        }
    }
}

impl OhemConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::config("ohem.theta", format!("must lie strictly between 0 and 1, got {}", self.theta)));
        }
        if self.min_kept == 0 {
            return Err(Error::config("ohem.min_kept", "must be positive"));
        }
        Ok(())
    }
}

/// Indices (ascending) of the pixels OHEM keeps given each candidate's target
/// probability: every pixel below `theta`, topped up with the next-lowest
/// probabilities to reach `min(min_kept, len)`. Ties break by index.
pub fn ohem_keep_set(target_probs: &[f32], cfg: &OhemConfig) -> Vec<usize> {
    let mut order: Vec<usize> = (0..target_probs.len()).collect();
    order.sort_by(|&a, &b| target_probs[a].total_cmp(&target_probs[b]).then(a.cmp(&b)));
    let below = target_probs.iter().filter(|&&p| p < cfg.theta).count();
    let keep = below.max(cfg.min_kept).min(target_probs.len());
    let mut kept = order[..keep].to_vec();
    kept.sort_unstable();
    kept
}

/// Which loss terms are active.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossSpec {
    pub ohem: Option<OhemConfig>,
    /// Window size for label relaxation; `None` disables it.
    pub relax_kernel: Option<usize>,
}

impl LossSpec {
    pub fn cross_entropy() -> Self {
        LossSpec {
            ohem: None,
            relax_kernel: None,
        }
    }
}

/// `−ln Σ_{c∈set} softmax(z)[c]` for one pixel's logit vector.
pub fn pixel_set_nll(logits: &[f32], set: ClassSet) -> f32 {
    let c = logits.len();
    let all = softmax::log_sum_exp(logits, 0, c, 1, |_| true);
    let sel = softmax::log_sum_exp(logits, 0, c, 1, |k| set.contains(k));
    all - sel
}

fn check_batch(g: &Graph, logits: Var, labels: &[LabelMap]) -> Result<(usize, usize, usize, usize)> {
    let (n, c, h, w) = g.value(logits).dims4()?;
    if labels.len() != n {
        return Err(Error::shape("loss", "batch", format!("{n} logit maps, {} label maps", labels.len())));
    }
    for lm in labels {
        if lm.height() != h || lm.width() != w {
            return Err(Error::shape(
                "loss",
                "spatial",
                format!("logits {h}x{w}, labels {}x{}", lm.height(), lm.width()),
            ));
        }
        lm.validate(c)?;
    }
    Ok((n, c, h, w))
}

/// Per-pixel targets for every non-ignore pixel, in flat order.
fn pixel_targets(labels: &[LabelMap], masks: Option<&[BorderMask]>) -> Vec<PixelTarget> {
    let mut out = Vec::new();
    for (b, lm) in labels.iter().enumerate() {
        let plane = lm.height() * lm.width();
        for (i, &l) in lm.labels().iter().enumerate() {
            if l == IGNORE {
                continue;
            }
            let set = match masks {
                Some(m) if m[b].border[i] => m[b].window_set_flat(i),
                _ => ClassSet::singleton(l as usize),
            };
            out.push(PixelTarget {
                pixel: (b * plane + i) as u32,
                set,
            });
        }
    }
    out
}

/// Probability mass the logits assign to each target's class set.
pub fn target_probabilities(g: &Graph, logits: Var, targets: &[PixelTarget]) -> Vec<f32> {
    let t = g.value(logits);
    let (_, c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2], t.shape()[3]);
    let plane = h * w;
    let z = t.data();
    targets
        .iter()
        .map(|tg| {
            let base = (tg.pixel as usize / plane) * c * plane + tg.pixel as usize % plane;
            let all = softmax::log_sum_exp(z, base, c, plane, |_| true);
            let sel = softmax::log_sum_exp(z, base, c, plane, |k| tg.set.contains(k));
            (sel - all).exp()
        })
        .collect()
}

/// Combined loss: optional label relaxation on border pixels, optional OHEM
/// selection on the resulting per-pixel targets, mean over counted pixels.
pub fn segmentation_loss(g: &mut Graph, logits: Var, labels: &[LabelMap], spec: &LossSpec) -> Result<Var> {
    let (_, c, _, _) = check_batch(g, logits, labels)?;
    let masks = match spec.relax_kernel {
        Some(k) => Some(labels.iter().map(|lm| detect_borders(lm, k, c)).collect::<Result<Vec<_>>>()?),
        None => None,
    };
    let mut targets = pixel_targets(labels, masks.as_deref());
    if targets.is_empty() {
        return Err(Error::Invalid("loss: no valid (non-ignore) pixels".into()));
    }
    if let Some(ohem) = &spec.ohem {
        ohem.validate()?;
        let probs = target_probabilities(g, logits, &targets);
        let keep = ohem_keep_set(&probs, ohem);
        targets = keep.into_iter().map(|i| targets[i]).collect();
    }
    let denom = targets.len() as f32;
    g.set_nll(logits, targets, denom)
}

/// Mean cross-entropy over non-ignore pixels.
pub fn cross_entropy(g: &mut Graph, logits: Var, labels: &[LabelMap]) -> Result<Var> {
    segmentation_loss(g, logits, labels, &LossSpec::cross_entropy())
}

/// Cross-entropy with relaxed targets on border pixels; masks are precomputed per image.
pub fn label_relaxation_loss(g: &mut Graph, logits: Var, labels: &[LabelMap], masks: &[BorderMask]) -> Result<Var> {
    check_batch(g, logits, labels)?;
    if masks.len() != labels.len() || masks.iter().zip(labels).any(|(m, l)| m.height != l.height() || m.width != l.width()) {
        return Err(Error::shape("label_relaxation_loss", "mask", "one border mask per label map, same size"));
    }
    let targets = pixel_targets(labels, Some(masks));
    if targets.is_empty() {
        return Err(Error::Invalid("loss: no valid (non-ignore) pixels".into()));
    }
    let denom = targets.len() as f32;
    g.set_nll(logits, targets, denom)
}

pub fn ohem_cross_entropy(g: &mut Graph, logits: Var, labels: &[LabelMap], cfg: &OhemConfig) -> Result<Var> {
    segmentation_loss(
        g,
        logits,
        labels,
        &LossSpec {
            ohem: Some(*cfg),
            relax_kernel: None,
        },
    )
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::resize::bilinear_forward;
use crate::label::{LabelMap, IGNORE};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Side of the square random crop.
    pub crop_size: usize,
    /// Long side the image is rescaled to before the random scale is applied.
    pub base_size: usize,
    /// Random scale drawn uniformly from this closed interval.
    pub scale_range: [f64; 2],
    pub hflip_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            crop_size: 128,
            base_size: 128,
            scale_range: [0.5, 2.0],
            hflip_prob: 0.5,
        }
    }
}

impl AugmentConfig {
    /// Crop of the whole image with no rescaling or flipping.
    pub fn identity(size: usize) -> Self {
        AugmentConfig {
            crop_size: size,
            base_size: size,
            scale_range: [1.0, 1.0],
            hflip_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.crop_size == 0 || self.base_size == 0 {
            return Err(Error::config("augmentation.crop_size", "crop and base sizes must be positive"));
        }
        let [lo, hi] = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::config("augmentation.scale_range", format!("need 0 < min <= max, got [{lo}, {hi}]")));
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::config("augmentation.hflip_prob", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Resize an image `[1, C, H, W]` bilinearly and its label map by
/// nearest-neighbor (center-aligned) to `round(H·factor) × round(W·factor)`.
pub fn resize_pair(image: &Tensor, labels: &LabelMap, factor: f64) -> Result<(Tensor, LabelMap)> {
    let (_, _, h, w) = image.dims4()?;
    let oh = (h as f64 * factor).round() as usize;
    let ow = (w as f64 * factor).round() as usize;
    resize_pair_to(image, labels, oh, ow)
}

pub fn resize_pair_to(image: &Tensor, labels: &LabelMap, oh: usize, ow: usize) -> Result<(Tensor, LabelMap)> {
    let (n, c, h, w) = image.dims4()?;
    if n != 1 || labels.height() != h || labels.width() != w {
        return Err(Error::shape("resize_pair", "image", format!("image {:?} with labels {}x{}", image.shape(), labels.height(), labels.width())));
    }
    if oh == 0 || ow == 0 {
        return Err(Error::Invalid(format!("resize_pair: output {oh}x{ow} is empty")));
    }
    let img = Tensor::new(vec![1, c, oh, ow], bilinear_forward(image.data(), c, h, w, oh, ow))?;
    Ok((img, resize_labels(labels, oh, ow)?))
}

pub fn resize_labels(labels: &LabelMap, oh: usize, ow: usize) -> Result<LabelMap> {
    let (h, w) = (labels.height(), labels.width());
    let src = |o: usize, out: usize, len: usize| (((o as f64 + 0.5) * len as f64 / out as f64).floor() as usize).min(len - 1);
    let cols: Vec<usize> = (0..ow).map(|x| src(x, ow, w)).collect();
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        let sy = src(y, oh, h);
        out.extend(cols.iter().map(|&sx| labels.get(sy, sx)));
    }
    LabelMap::new(oh, ow, out)
}

/// Random scale, pad-and-crop to `crop_size`, and horizontal flip.
/// Padding is zero in the image and ignore in the labels.
pub fn augment<R: Rng>(image: &Tensor, labels: &LabelMap, cfg: &AugmentConfig, rng: &mut R) -> Result<(Tensor, LabelMap)> {
    let (_, c, h, w) = image.dims4()?;
    let [lo, hi] = cfg.scale_range;
    let scale = if lo == hi { lo } else { rng.random_range(lo..=hi) };
    let factor = cfg.base_size as f64 * scale / h.max(w) as f64;
    let (img, lm) = resize_pair(image, labels, factor)?;
    let (_, _, rh, rw) = img.dims4()?;
    let k = cfg.crop_size;
    let (ph, pw) = (rh.max(k), rw.max(k));
    let y0 = rng.random_range(0..=ph - k);
    let x0 = rng.random_range(0..=pw - k);
    let flip = rng.random_bool(cfg.hflip_prob);

    let mut data = vec![0.0f32; c * k * k];
    let mut lab = vec![IGNORE; k * k];
    for y in 0..k {
        let sy = y0 + y;
        if sy >= rh {
            continue;
        }
        for x in 0..k {
            let sx = x0 + x;
            if sx >= rw {
                continue;
            }
            let dx = if flip { k - 1 - x } else { x };
            for ch in 0..c {
                data[(ch * k + y) * k + dx] = img.data()[(ch * rh + sy) * rw + sx];
            }
            lab[y * k + dx] = lm.get(sy, sx);
        }
    }
    Ok((Tensor::new(vec![1, c, k, k], data)?, LabelMap::new(k, k, lab)?))
}

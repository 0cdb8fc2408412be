//! Confusion-matrix metrics, prediction entropy and multi-scale evaluation.

use image::{Rgb, RgbImage};

use crate::arch::Model;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::resize::bilinear_forward;
use crate::kernels::softmax::softmax_channels;
use crate::label::{LabelMap, IGNORE};
use crate::tensor::Tensor;

/// Rows are ground truth, columns predictions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn count(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    /// Add one image; ground-truth ignore pixels are skipped.
    pub fn accumulate(&mut self, truth: &LabelMap, pred: &[u8]) -> Result<()> {
        if pred.len() != truth.labels().len() {
            return Err(Error::shape("confusion", "pixels", format!("{} predictions for {} labels", pred.len(), truth.labels().len())));
        }
        for (&t, &p) in truth.labels().iter().zip(pred) {
            if t == IGNORE {
                continue;
            }
            let (t, p) = (t as usize, p as usize);
            if t >= self.classes || p >= self.classes {
                return Err(Error::Invalid(format!("confusion: class {} out of range for {} classes", t.max(p), self.classes)));
            }
            self.counts[t * self.classes + p] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
    }

    /// IoU per class; `None` when a class is absent from both truth and predictions.
    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|c| {
                let tp = self.count(c, c);
                let row: u64 = (0..self.classes).map(|p| self.count(c, p)).sum();
                let col: u64 = (0..self.classes).map(|t| self.count(t, c)).sum();
                let union = row + col - tp;
                (union > 0).then(|| tp as f64 / union as f64)
            })
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Mean IoU over the classes present in truth or predictions.
    pub fn miou(&self) -> Result<f64> {
        let ious: Vec<f64> = self.per_class_iou().into_iter().flatten().collect();
        if ious.is_empty() {
            return Err(Error::Invalid("miou: confusion matrix is empty".into()));
        }
        Ok(ious.iter().sum::<f64>() / ious.len() as f64)
    }

    pub fn pixel_accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::Invalid("pixel accuracy: confusion matrix is empty".into()));
        }
        let correct: u64 = (0..self.classes).map(|c| self.count(c, c)).sum();
        Ok(correct as f64 / total as f64)
    }
}

/// Per-image argmax over channels of an `[N, C, H, W]` tensor; ties go to the lowest class.
pub fn argmax_channels(t: &Tensor) -> Result<Vec<Vec<u8>>> {
    let (n, c, h, w) = t.dims4()?;
    let plane = h * w;
    Ok((0..n)
        .map(|b| {
            let base = b * c * plane;
            (0..plane)
                .map(|p| {
                    let mut best = 0;
                    for ch in 1..c {
                        if t.data()[base + ch * plane + p] > t.data()[base + best * plane + p] {
                            best = ch;
                        }
                    }
                    best as u8
                })
                .collect()
        })
        .collect())
}

pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = logits.dims4()?;
    Tensor::new(vec![n, c, h, w], softmax_channels(logits.data(), n, c, h * w))
}

/// Per-pixel Shannon entropy (nats) of the softmax of `[N, C, H, W]` logits, laid out `[N, H, W]`.
pub fn entropy_map(logits: &Tensor) -> Result<Vec<f32>> {
    probability_entropy(&softmax(logits)?)
}

pub fn probability_entropy(probs: &Tensor) -> Result<Vec<f32>> {
    let (n, c, h, w) = probs.dims4()?;
    let plane = h * w;
    let mut out = vec![0.0f32; n * plane];
    for b in 0..n {
        for p in 0..plane {
            out[b * plane + p] = (0..c)
                .map(|ch| probs.data()[(b * c + ch) * plane + p])
                .filter(|&q| q > 0.0)
                .map(|q| -q * q.ln())
                .sum();
        }
    }
    Ok(out)
}

/// `entropy(a) − entropy(b)` per pixel, from logits.
pub fn entropy_diff(a: &Tensor, b: &Tensor) -> Result<Vec<f32>> {
    if a.shape() != b.shape() {
        return Err(Error::shape("entropy_diff", "logits", format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let (ea, eb) = (entropy_map(a)?, entropy_map(b)?);
    Ok(ea.iter().zip(&eb).map(|(x, y)| x - y).collect())
}

/// Diverging colormap: blue for negative, white for zero, red for positive,
/// saturating at `±scale`.
pub fn signed_colormap(values: &[f32], height: usize, width: usize, scale: f32) -> RgbImage {
    let scale = if scale > 0.0 { scale } else { 1.0 };
    RgbImage::from_fn(width as u32, height as u32, |x, y| {
        let v = (values[y as usize * width + x as usize] / scale).clamp(-1.0, 1.0);
        let fade = (255.0 * (1.0 - v.abs())).round() as u8;
        if v >= 0.0 {
            Rgb([255, fade, fade])
        } else {
            Rgb([fade, fade, 255])
        }
    })
}

/// Anything that maps a normalized `[1, 3, H, W]` image to class probabilities of the same size.
pub trait Predictor {
    fn num_classes(&self) -> usize;

    /// Input sides must be multiples of this.
    fn size_multiple(&self) -> usize {
        1
    }

    fn predict_probs(&self, image: &Tensor) -> Result<Tensor>;
}

impl Predictor for Model {
    fn num_classes(&self) -> usize {
        self.config().num_classes
    }

    fn size_multiple(&self) -> usize {
        self.config().required_multiple()
    }

    fn predict_probs(&self, image: &Tensor) -> Result<Tensor> {
        softmax(&self.predict_logits(image)?)
    }
}

/// Round `len · scale` to the nearest positive multiple of `multiple`.
pub fn scaled_len(len: usize, scale: f64, multiple: usize) -> usize {
    let m = multiple.max(1) as f64;
    (((len as f64 * scale) / m).round().max(1.0) * m) as usize
}

/// Probabilities averaged over rescaled (and optionally mirrored) copies of
/// the image, each resized back to the input resolution.
pub fn multi_scale_probs(p: &dyn Predictor, image: &Tensor, scales: &[f64], flip: bool) -> Result<Tensor> {
    let (_, ch, h, w) = image.dims4()?;
    if scales.is_empty() || scales.iter().any(|&s| s.is_nan() || s <= 0.0) {
        return Err(Error::config("scales", "need at least one positive scale"));
    }
    let c = p.num_classes();
    let mut acc = vec![0.0f32; c * h * w];
    let mut views = 0;
    for &s in scales {
        let (sh, sw) = (scaled_len(h, s, p.size_multiple()), scaled_len(w, s, p.size_multiple()));
        let scaled = Tensor::new(vec![1, ch, sh, sw], bilinear_forward(image.data(), ch, h, w, sh, sw))?;
        let mut inputs = vec![(scaled.clone(), false)];
        if flip {
            inputs.push((scaled.flip_horizontal(), true));
        }
        for (input, flipped) in inputs {
            let mut probs = p.predict_probs(&input)?;
            if flipped {
                probs = probs.flip_horizontal();
            }
            let back = bilinear_forward(probs.data(), c, sh, sw, h, w);
            acc.iter_mut().zip(&back).for_each(|(a, b)| *a += b);
            views += 1;
        }
    }
    acc.iter_mut().for_each(|v| *v /= views as f32);
    Tensor::new(vec![1, c, h, w], acc)
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub miou: f64,
    pub pixel_accuracy: f64,
    pub per_class_iou: Vec<Option<f64>>,
}

pub fn evaluate(p: &dyn Predictor, data: &Dataset, scales: &[f64], flip: bool) -> Result<EvalReport> {
    if p.num_classes() != data.num_classes() {
        return Err(Error::config(
            "num_classes",
            format!("model predicts {} classes, dataset has {}", p.num_classes(), data.num_classes()),
        ));
    }
    let mut confusion = ConfusionMatrix::new(p.num_classes());
    for s in &data.samples {
        let probs = multi_scale_probs(p, &s.image, scales, flip)?;
        let pred = argmax_channels(&probs)?.remove(0);
        confusion.accumulate(&s.labels, &pred)?;
    }
    Ok(EvalReport {
        miou: confusion.miou()?,
        pixel_accuracy: confusion.pixel_accuracy()?,
        per_class_iou: confusion.per_class_iou(),
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_scores_one() {
        let lm = LabelMap::new(2, 2, vec![0, 1, 1, 0]).unwrap();
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&lm, lm.labels()).unwrap();
        assert_eq!(cm.miou().unwrap(), 1.0);
        assert_eq!(cm.pixel_accuracy().unwrap(), 1.0);
    }

    #[test]
    fn all_background_prediction_gives_half() {
        let lm = LabelMap::new(2, 2, vec![0, 1, 1, 0]).unwrap();
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&lm, &[0, 0, 0, 0]).unwrap();
        assert_eq!(cm.per_class_iou(), vec![Some(0.5), Some(0.0)]);
        assert_eq!(cm.miou().unwrap(), 0.25);
        assert_eq!(cm.pixel_accuracy().unwrap(), 0.5);
    }

    #[test]
    fn empty_matrix_is_an_error() {
        let cm = ConfusionMatrix::new(3);
        assert!(cm.miou().is_err());
        assert!(cm.pixel_accuracy().is_err());
    }

    #[test]
    fn uniform_probabilities_have_log_c_entropy() {
        let e = entropy_map(&Tensor::zeros(vec![1, 4, 2, 2])).unwrap();
        assert!(e.iter().all(|v| (v - 1.386_294_4).abs() < 1e-6));
        let one_hot = Tensor::new(vec![1, 2, 1, 1], vec![1.0, 0.0]).unwrap();
        assert_eq!(probability_entropy(&one_hot).unwrap(), vec![0.0]);
        let half = entropy_map(&Tensor::new(vec![1, 2, 1, 1], vec![3.0, 3.0]).unwrap()).unwrap();
        assert!((half[0] - std::f32::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn ignore_pixels_are_not_counted() {
        let lm = LabelMap::new(1, 3, vec![0, IGNORE, 1]).unwrap();
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&lm, &[0, 1, 1]).unwrap();
        assert_eq!(cm.pixel_accuracy().unwrap(), 1.0);
        assert_eq!(cm.total(), 2);
    }

    #[test]
    fn scaled_lengths_round_to_multiple() {
        assert_eq!(scaled_len(64, 0.75, 32), 64);
        assert_eq!(scaled_len(64, 0.5, 32), 32);
        assert_eq!(scaled_len(64, 1.5, 32), 96);
        assert_eq!(scaled_len(64, 1.75, 32), 128);
        assert_eq!(scaled_len(64, 0.1, 32), 32);
    }
}

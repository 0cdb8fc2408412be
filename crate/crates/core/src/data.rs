//! On-disk datasets and the synthetic shape generator.
//!
//! A dataset directory holds `dataset.json`, `images/<name>.png` (RGB) and
//! `labels/<name>.png` (8-bit gray, class index per pixel, 255 = ignore).

use std::fs;
use std::path::Path;

use image::{GrayImage, Rgb};
pub use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{LabelMap, IGNORE, MAX_CLASSES};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub num_classes: usize,
    #[serde(default)]
    pub class_names: Vec<String>,
    #[serde(default = "default_ignore")]
    pub ignore_index: u8,
    /// Per-channel normalization applied to `[0, 1]` pixel values.
    #[serde(default = "default_mean")]
    pub mean: [f32; 3],
    #[serde(default = "default_std")]
    pub std: [f32; 3],
}

fn default_ignore() -> u8 {
    IGNORE
}

fn default_mean() -> [f32; 3] {
    [0.5; 3]
}

fn default_std() -> [f32; 3] {
    [0.25; 3]
}

impl DatasetMeta {
    pub fn new(num_classes: usize) -> Self {
        DatasetMeta {
            num_classes,
            class_names: (0..num_classes).map(|c| format!("class{c}")).collect(),
            ignore_index: IGNORE,
            mean: default_mean(),
            std: default_std(),
        }
    }

    pub fn normalize(&self, img: &RgbImage) -> Tensor {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut data = vec![0.0f32; 3 * h * w];
        for (i, px) in img.pixels().enumerate() {
            for c in 0..3 {
                data[c * h * w + i] = (px[c] as f32 / 255.0 - self.mean[c]) / self.std[c];
            }
        }
        Tensor::new(vec![1, 3, h, w], data).expect("consistent shape")
    }
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub name: String,
    /// Normalized `[1, 3, H, W]` image.
    pub image: Tensor,
    pub labels: LabelMap,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.meta.num_classes
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let meta_path = dir.join("dataset.json");
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: DatasetMeta = serde_json::from_str(&text)?;
        if meta.num_classes == 0 || meta.num_classes > MAX_CLASSES {
            return Err(Error::config("num_classes", format!("must lie in 1..={MAX_CLASSES}")));
        }
        if meta.ignore_index != IGNORE {
            return Err(Error::config("ignore_index", format!("only {IGNORE} is supported")));
        }
        let img_dir = dir.join("images");
        let mut names: Vec<String> = fs::read_dir(&img_dir)
            .map_err(|e| Error::io(&img_dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
            .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
            .collect();
        names.sort();
        if names.is_empty() {
            return Err(Error::Invalid(format!("{}: no PNG images", img_dir.display())));
        }
        let samples = names
            .into_iter()
            .map(|name| {
                let img = read_rgb(&img_dir.join(format!("{name}.png")))?;
                let lpath = dir.join("labels").join(format!("{name}.png"));
                let labels = read_labels(&lpath)?;
                if (labels.width(), labels.height()) != (img.width() as usize, img.height() as usize) {
                    return Err(Error::Invalid(format!("{}: label size differs from image", lpath.display())));
                }
                labels.validate(meta.num_classes).map_err(|e| Error::Invalid(format!("{}: {e}", lpath.display())))?;
                Ok(Sample {
                    image: meta.normalize(&img),
                    labels,
                    name,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { meta, samples })
    }
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path).map_err(|e| Error::image(path, e))?.to_rgb8())
}

pub fn write_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    img.save(path).map_err(|e| Error::image(path, e))
}

pub fn read_labels(path: &Path) -> Result<LabelMap> {
    let g = image::open(path).map_err(|e| Error::image(path, e))?.to_luma8();
    LabelMap::new(g.height() as usize, g.width() as usize, g.into_raw())
}

pub fn write_labels(path: &Path, labels: &LabelMap) -> Result<()> {
    let img = GrayImage::from_raw(labels.width() as u32, labels.height() as u32, labels.labels().to_vec()).expect("sized buffer");
    img.save(path).map_err(|e| Error::image(path, e))
}

/// Image with class `c` drawn in `palette[c]`; ignore pixels are black.
pub fn colorize(labels: &LabelMap, palette: &[[u8; 3]]) -> RgbImage {
    RgbImage::from_fn(labels.width() as u32, labels.height() as u32, |x, y| {
        match labels.get(y as usize, x as usize) {
            IGNORE => Rgb([0, 0, 0]),
            c => Rgb(palette[c as usize % palette.len()]),
        }
    })
}

/// The 256-entry palette used by PASCAL VOC: bit `k` of the class index
/// lands in bit `7 − ⌊k/3⌋` of channel `k mod 3`.
pub fn voc_palette() -> Vec<[u8; 3]> {
    (0..256u32)
        .map(|i| {
            let mut rgb = [0u8; 3];
            let mut c = i;
            let mut bit = 7;
            while c > 0 {
                for (ch, v) in rgb.iter_mut().enumerate() {
                    *v |= (((c >> ch) & 1) << bit) as u8;
                }
                c >>= 3;
                bit -= 1;
            }
            rgb
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub num_images: usize,
    pub height: usize,
    pub width: usize,
    /// Includes the background class 0.
    pub num_classes: usize,
    pub seed: u64,
    pub min_shapes: usize,
    pub max_shapes: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_images: 100,
            height: 64,
            width: 64,
            num_classes: 4,
            seed: 0,
            min_shapes: 2,
            max_shapes: 5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_CLASSES).contains(&self.num_classes) {
            return Err(Error::config("classes", format!("need 2..={MAX_CLASSES} classes")));
        }
        if self.height == 0 || self.width == 0 || !self.height.is_multiple_of(32) || !self.width.is_multiple_of(32) {
            return Err(Error::config("size", format!("{}x{} is not a multiple of 32", self.height, self.width)));
        }
        if self.min_shapes == 0 || self.min_shapes > self.max_shapes {
            return Err(Error::config("shapes", "need 1 <= min_shapes <= max_shapes"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Shape {
    Rect { y0: f32, x0: f32, y1: f32, x1: f32 },
    Ellipse { cy: f32, cx: f32, ry: f32, rx: f32 },
    /// Thick line segment.
    Bar { ay: f32, ax: f32, by: f32, bx: f32, half: f32 },
}

impl Shape {
    fn random(rng: &mut ChaCha8Rng, h: f32, w: f32) -> Shape {
        let side = h.min(w);
        match rng.random_range(0..3) {
            0 => {
                let (sh, sw) = (rng.random_range(0.15..0.5) * h, rng.random_range(0.15..0.5) * w);
                let (y0, x0) = (rng.random_range(0.0..h - sh), rng.random_range(0.0..w - sw));
                Shape::Rect { y0, x0, y1: y0 + sh, x1: x0 + sw }
            }
            1 => Shape::Ellipse {
                cy: rng.random_range(0.1..0.9) * h,
                cx: rng.random_range(0.1..0.9) * w,
                ry: rng.random_range(0.08..0.25) * h,
                rx: rng.random_range(0.08..0.25) * w,
            },
            _ => Shape::Bar {
                ay: rng.random_range(0.0..h),
                ax: rng.random_range(0.0..w),
                by: rng.random_range(0.0..h),
                bx: rng.random_range(0.0..w),
                half: rng.random_range(0.03..0.07) * side,
            },
        }
    }

    fn contains(&self, y: f32, x: f32) -> bool {
        match *self {
            Shape::Rect { y0, x0, y1, x1 } => y >= y0 && y < y1 && x >= x0 && x < x1,
            Shape::Ellipse { cy, cx, ry, rx } => ((y - cy) / ry).powi(2) + ((x - cx) / rx).powi(2) <= 1.0,
            Shape::Bar { ay, ax, by, bx, half } => {
                let (dy, dx) = (by - ay, bx - ax);
                let len2 = (dy * dy + dx * dx).max(1e-6);
                let t = (((y - ay) * dy + (x - ax) * dx) / len2).clamp(0.0, 1.0);
                let (py, px) = (ay + t * dy, ax + t * dx);
                (y - py).powi(2) + (x - px).powi(2) <= half * half
            }
        }
    }
}

/// RGB in `[0, 1]` from hue (degrees), saturation and value.
fn hsv(h: f32, s: f32, v: f32) -> [f32; 3] {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Deterministic synthetic image `index`: shapes of classes `1..C` over a
/// gray background (class 0). Each class has its own saturated hue; shape
/// colors are jittered and per-pixel noise is added.
pub fn synth_sample(cfg: &SynthConfig, index: usize) -> (RgbImage, LabelMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let (h, w) = (cfg.height, cfg.width);
    let fg = cfg.num_classes - 1;
    let noise = Normal::new(0.0f32, 0.04).expect("finite std");
    let bg_v = rng.random_range(0.35..0.65);
    let bg = hsv(rng.random_range(0.0..360.0), rng.random_range(0.0..0.12), bg_v);
    let mut color = vec![bg; h * w];
    let mut labels = vec![0u8; h * w];
    for _ in 0..rng.random_range(cfg.min_shapes..=cfg.max_shapes) {
        let class = rng.random_range(1..=fg);
        let hue = 360.0 * (class - 1) as f32 / fg as f32 + rng.random_range(-8.0..8.0);
        let rgb = hsv(hue, rng.random_range(0.75..1.0), rng.random_range(0.7..1.0));
        let shape = Shape::random(&mut rng, h as f32, w as f32);
        for y in 0..h {
            for x in 0..w {
                if shape.contains(y as f32 + 0.5, x as f32 + 0.5) {
                    color[y * w + x] = rgb;
                    labels[y * w + x] = class as u8;
                }
            }
        }
    }
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let c = color[y as usize * w + x as usize];
        Rgb(c.map(|v| ((v + noise.sample(&mut rng)).clamp(0.0, 1.0) * 255.0).round() as u8))
    });
    (img, LabelMap::new(h, w, labels).expect("sized buffer"))
}

/// Generate a dataset in memory (normalized with the default statistics).
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let meta = DatasetMeta::new(cfg.num_classes);
    let samples = (0..cfg.num_images)
        .map(|i| {
            let (img, labels) = synth_sample(cfg, i);
            Sample {
                name: format!("{i:05}"),
                image: meta.normalize(&img),
                labels,
            }
        })
        .collect();
    Ok(Dataset { meta, samples })
}

/// Write a synthetic dataset in the on-disk layout.
pub fn write_synth(dir: &Path, cfg: &SynthConfig) -> Result<()> {
    cfg.validate()?;
    let (img_dir, lab_dir) = (dir.join("images"), dir.join("labels"));
    for d in [&img_dir, &lab_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    for i in 0..cfg.num_images {
        let (img, labels) = synth_sample(cfg, i);
        let p = img_dir.join(format!("{i:05}.png"));
        img.save(&p).map_err(|e| Error::image(&p, e))?;
        write_labels(&lab_dir.join(format!("{i:05}.png")), &labels)?;
    }
    let meta_path = dir.join("dataset.json");
    let json = serde_json::to_string_pretty(&DatasetMeta::new(cfg.num_classes))?;
    fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_first_entries() {
        let p = voc_palette();
        assert_eq!(p[0], [0, 0, 0]);
        assert_eq!(p[1], [128, 0, 0]);
        assert_eq!(p[2], [0, 128, 0]);
        assert_eq!(p[3], [128, 128, 0]);
        assert_eq!(p[15], [192, 128, 128]);
        assert_eq!(p[255], [224, 224, 192]);
    }

    #[test]
    fn synth_is_deterministic_and_valid() {
        let cfg = SynthConfig {
            num_images: 3,
            ..Default::default()
        };
        let (a, la) = synth_sample(&cfg, 2);
        let (b, lb) = synth_sample(&cfg, 2);
        assert_eq!(a, b);
        assert_eq!(la, lb);
        la.validate(cfg.num_classes).unwrap();
        assert!(la.value_set().len() >= 2);
        assert_ne!(synth_sample(&cfg, 1).1, la);
    }

    #[test]
    fn round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            num_images: 2,
            height: 32,
            width: 64,
            ..Default::default()
        };
        write_synth(dir.path(), &cfg).unwrap();
        let ds = Dataset::load(dir.path()).unwrap();
        let mem = synth_dataset(&cfg).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.samples[1].labels, mem.samples[1].labels);
        assert_eq!(ds.samples[1].image.data(), mem.samples[1].image.data());
        assert_eq!(ds.samples[0].image.shape(), &[1, 3, 32, 64]);
    }

    #[test]
    fn missing_label_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            num_images: 1,
            height: 32,
            width: 32,
            ..Default::default()
        };
        write_synth(dir.path(), &cfg).unwrap();
        fs::remove_file(dir.path().join("labels/00000.png")).unwrap();
        assert!(Dataset::load(dir.path()).is_err());
    }
}

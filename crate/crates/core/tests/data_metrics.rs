mod common;

use common::*;
use proptest::prelude::*;
use rgpnet::arch::{Model, NetworkConfig};
use rgpnet::data::{read_labels, synth_dataset, synth_sample, write_synth, Dataset, SynthConfig};
use rgpnet::losses::detect_borders;
use rgpnet::metrics::{
    entropy_diff, entropy_map, evaluate, multi_scale_probs, probability_entropy, softmax, ConfusionMatrix, Predictor,
};
use rgpnet::{LabelMap, Result, Tensor, IGNORE};

fn synth(n: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        num_images: n,
        seed,
        ..SynthConfig::default()
    }
}

fn dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["images", "labels"] {
        let mut entries: Vec<_> = std::fs::read_dir(dir.join(sub)).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
        }
    }
    out.push(("dataset.json".into(), std::fs::read(dir.join("dataset.json")).unwrap()));
    out
}

#[test]
fn synthetic_corpus_is_byte_identical_on_rerun() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_synth(a.path(), &synth(6, 42)).unwrap();
    write_synth(b.path(), &synth(6, 42)).unwrap();
    let (da, db) = (dir_bytes(a.path()), dir_bytes(b.path()));
    assert_eq!(da.len(), 13);
    assert_eq!(da, db);
    let c = tempfile::tempdir().unwrap();
    write_synth(c.path(), &synth(6, 43)).unwrap();
    assert_ne!(da, dir_bytes(c.path()));
}

#[test]
fn loader_round_trip_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(5, 7);
    write_synth(dir.path(), &cfg).unwrap();
    let loaded = Dataset::load(dir.path()).unwrap();
    let direct = synth_dataset(&cfg).unwrap();
    assert_eq!(loaded.num_classes(), 4);
    assert_eq!(loaded.len(), 5);
    for (l, d) in loaded.samples.iter().zip(&direct.samples) {
        assert_eq!(l.name, d.name);
        assert_eq!(l.labels, d.labels);
        assert_eq!(l.image, d.image);
    }
}

#[test]
fn loader_rejects_inconsistent_pairs() {
    let dir = tempfile::tempdir().unwrap();
    write_synth(dir.path(), &synth(2, 1)).unwrap();
    let label = dir.path().join("labels/00001.png");
    let bad = LabelMap::filled(64, 64, 9);
    rgpnet::data::write_labels(&label, &bad).unwrap();
    assert!(Dataset::load(dir.path()).is_err());
    rgpnet::data::write_labels(&label, &LabelMap::filled(32, 64, 0)).unwrap();
    assert!(Dataset::load(dir.path()).is_err());
    std::fs::remove_file(&label).unwrap();
    assert!(Dataset::load(dir.path()).is_err());
    assert!(Dataset::load(&dir.path().join("nowhere")).is_err());
}

#[test]
fn synthetic_labels_and_borders_are_well_formed() {
    let cfg = synth(20, 3);
    let (mut border, mut total) = (0usize, 0usize);
    for i in 0..cfg.num_images {
        let (img, lm) = synth_sample(&cfg, i);
        assert_eq!((img.width(), img.height()), (64, 64));
        assert!(lm.labels().iter().all(|&l| (l as usize) < cfg.num_classes));
        let m = detect_borders(&lm, 3, cfg.num_classes).unwrap();
        border += m.border_count();
        total += m.pixel_count();
    }
    let frac = border as f64 / total as f64;
    assert!(frac > 0.0 && frac < 0.2, "border fraction {frac}");
}

#[test]
fn synthetic_config_is_validated() {
    for bad in [
        SynthConfig { height: 48, ..synth(1, 0) },
        SynthConfig { num_classes: 1, ..synth(1, 0) },
        SynthConfig { min_shapes: 0, ..synth(1, 0) },
    ] {
        assert!(synth_dataset(&bad).is_err());
    }
}

#[test]
fn confusion_matrix_examples() {
    let gt = LabelMap::new(1, 4, vec![0, 0, 1, 1]).unwrap();
    let mut cm = ConfusionMatrix::new(2);
    cm.accumulate(&gt, &[0, 0, 0, 0]).unwrap();
    assert_eq!(cm.per_class_iou(), vec![Some(0.5), Some(0.0)]);
    assert_eq!(cm.miou().unwrap(), 0.25);
    assert_eq!(cm.pixel_accuracy().unwrap(), 0.5);
    assert!(ConfusionMatrix::new(3).miou().is_err());
    assert!(ConfusionMatrix::new(3).pixel_accuracy().is_err());

    // Class 2 never appears and is excluded from the mean.
    let mut cm = ConfusionMatrix::new(3);
    cm.accumulate(&gt, gt.labels()).unwrap();
    assert_eq!(cm.per_class_iou()[2], None);
    assert_eq!(cm.miou().unwrap(), 1.0);
    assert!(cm.accumulate(&gt, &[0, 0, 0]).is_err());
    assert!(cm.accumulate(&gt, &[0, 0, 0, 7]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn confusion_totals_are_order_independent(seed in 0u64..10_000, n in 1usize..6) {
        let mut r = rng(seed);
        let pairs: Vec<(LabelMap, Vec<u8>)> = (0..n)
            .map(|_| {
                let gt = random_label_map(&mut r, 5, 6, 4);
                let pred = random_label_map(&mut r, 5, 6, 4).labels().iter().map(|&l| if l == IGNORE { 0 } else { l }).collect();
                (gt, pred)
            })
            .collect();
        let mut fwd = ConfusionMatrix::new(4);
        for (g, p) in &pairs {
            fwd.accumulate(g, p).unwrap();
        }
        let mut rev = ConfusionMatrix::new(4);
        for (g, p) in pairs.iter().rev() {
            let mut one = ConfusionMatrix::new(4);
            one.accumulate(g, p).unwrap();
            rev.merge(&one);
        }
        prop_assert_eq!(&fwd, &rev);
        let valid: usize = pairs.iter().map(|(g, _)| g.valid_count()).sum();
        prop_assert_eq!(fwd.total() as usize, valid);
        if valid > 0 {
            let (m, a) = (fwd.miou().unwrap(), fwd.pixel_accuracy().unwrap());
            prop_assert!((0.0..=1.0).contains(&m) && (0.0..=1.0).contains(&a));
            let off_diag: u64 = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| fwd.count(i, j)).sum();
            prop_assert_eq!(m == 1.0, off_diag == 0);
        }
    }

    #[test]
    fn entropy_is_bounded(seed in 0u64..10_000, c in 2usize..7, scale in 0.1f32..30.0) {
        let logits = random_tensor(&mut rng(seed), &[1, c, 3, 4], scale);
        for &e in &entropy_map(&logits).unwrap() {
            prop_assert!(e >= 0.0 && e <= (c as f32).ln() + 1e-5);
        }
    }
}

#[test]
fn entropy_examples() {
    let probs = Tensor::new(vec![1, 4, 1, 3], vec![1.0, 0.25, 0.5, 0.0, 0.25, 0.5, 0.0, 0.25, 0.0, 0.0, 0.25, 0.0]).unwrap();
    let e = probability_entropy(&probs).unwrap();
    assert_eq!(e[0], 0.0);
    assert!((e[1] - 4f32.ln()).abs() < 1e-6);
    assert!((e[2] - 2f32.ln()).abs() < 1e-6);
    let uniform = Tensor::zeros(vec![1, 4, 2, 2]);
    assert!(entropy_map(&uniform).unwrap().iter().all(|&v| (v - 1.386_294_4).abs() < 1e-5));
    let sharp = Tensor::new(vec![1, 4, 2, 2], (0..16).map(|i| if i < 4 { 10.0 } else { 0.0 }).collect()).unwrap();
    let d = entropy_diff(&sharp, &uniform).unwrap();
    assert!(d.iter().all(|&v| v < 0.0));
    assert!(entropy_diff(&sharp, &Tensor::zeros(vec![1, 4, 2, 1])).is_err());
}

fn small_model() -> Model {
    let cfg = NetworkConfig {
        num_levels: 2,
        encoder_channels: vec![8, 16],
        encoder_blocks_per_level: 1,
        ..NetworkConfig::desk(3)
    };
    Model::new(&cfg, 4).unwrap()
}

#[test]
fn single_scale_evaluation_is_the_plain_forward() {
    let model = small_model();
    let x = random_tensor(&mut rng(1), &[1, 3, 16, 24], 1.0);
    let plain = softmax(&model.predict_logits(&x).unwrap()).unwrap();
    let ms = multi_scale_probs(&model, &x, &[1.0], false).unwrap();
    assert_eq!(ms, plain);
    assert!(multi_scale_probs(&model, &x, &[], false).is_err());
}

#[test]
fn multi_scale_output_is_a_distribution() {
    let model = small_model();
    let x = random_tensor(&mut rng(2), &[1, 3, 32, 32], 1.0);
    let ms = multi_scale_probs(&model, &x, &[0.5, 1.0, 1.5], true).unwrap();
    assert_eq!(ms.shape(), &[1, 3, 32, 32]);
    for p in 0..32 * 32 {
        let s: f32 = (0..3).map(|c| ms.data()[c * 1024 + p]).sum();
        assert!((s - 1.0).abs() < 1e-5);
    }
}

/// Per-pixel predictor whose output depends only on the pixel's own values,
/// so it commutes with mirroring.
struct Pointwise;

impl Predictor for Pointwise {
    fn num_classes(&self) -> usize {
        2
    }

    fn predict_probs(&self, image: &Tensor) -> Result<Tensor> {
        let (_, _, h, w) = image.dims4()?;
        let plane = h * w;
        let mut logits = vec![0.0f32; 2 * plane];
        for p in 0..plane {
            logits[p] = image.data()[p] - image.data()[plane + p];
            logits[plane + p] = image.data()[2 * plane + p];
        }
        softmax(&Tensor::new(vec![1, 2, h, w], logits)?)
    }
}

#[test]
fn flip_averaging_on_symmetric_input_matches_plain() {
    let half = random_tensor(&mut rng(3), &[1, 3, 8, 8], 2.0);
    let mut data = vec![0.0f32; 3 * 8 * 16];
    for c in 0..3 {
        for y in 0..8 {
            for x in 0..8 {
                let v = half.data()[(c * 8 + y) * 8 + x];
                data[(c * 8 + y) * 16 + x] = v;
                data[(c * 8 + y) * 16 + 15 - x] = v;
            }
        }
    }
    let sym = Tensor::new(vec![1, 3, 8, 16], data).unwrap();
    let plain = Pointwise.predict_probs(&sym).unwrap();
    let flipped = multi_scale_probs(&Pointwise, &sym, &[1.0], true).unwrap();
    for (a, b) in plain.data().iter().zip(flipped.data()) {
        assert!((a - b).abs() < 1e-5);
    }
}

/// Predicts the ground truth of whichever image it is shown.
struct Oracle(Dataset);

impl Predictor for Oracle {
    fn num_classes(&self) -> usize {
        self.0.num_classes()
    }

    fn predict_probs(&self, image: &Tensor) -> Result<Tensor> {
        let s = self.0.samples.iter().find(|s| s.image == *image).expect("known image");
        let (h, w) = (s.labels.height(), s.labels.width());
        let c = self.num_classes();
        let mut p = vec![0.0f32; c * h * w];
        for (i, &l) in s.labels.labels().iter().enumerate() {
            let l = if l == IGNORE { 0 } else { l as usize };
            p[l * h * w + i] = 1.0;
        }
        Tensor::new(vec![1, c, h, w], p)
    }
}

#[test]
fn oracle_predictor_scores_perfectly() {
    let data = synth_dataset(&synth(4, 9)).unwrap();
    let report = evaluate(&Oracle(data.clone()), &data, &[1.0], false).unwrap();
    assert_eq!(report.miou, 1.0);
    assert_eq!(report.pixel_accuracy, 1.0);
    assert_eq!(report.confusion.total(), 4 * 64 * 64);
    let labels = read_labels_round_trip(&data.samples[0].labels);
    assert_eq!(labels, data.samples[0].labels);
}

fn read_labels_round_trip(lm: &LabelMap) -> LabelMap {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("l.png");
    rgpnet::data::write_labels(&p, lm).unwrap();
    read_labels(&p).unwrap()
}

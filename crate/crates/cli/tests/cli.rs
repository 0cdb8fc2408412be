use std::path::Path;
use std::process::{Command, Output};

fn rgpnet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rgpnet")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), stderr(&o));
    o
}

const CONFIG: &str = r#"{
  "schedule": {
    "total_epochs": 2,
    "stages": [
      {"start_epoch": 0, "resize_factor": 0.5, "batch_scale": 4},
      {"start_epoch": 1, "resize_factor": 1.0, "batch_scale": 1}
    ],
    "base_batch": 4,
    "max_batch": 16,
    "base_lr": 0.01
  },
  "augmentation": {"crop_size": 64, "base_size": 64},
  "loss_mode": "OHEM+LR",
  "seed": 1
}"#;

/// Synthetic train/val corpora, a config and a finished 2-epoch run.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(rgpnet(&["synth", "--out", "train", "--n", "8", "--size", "64x64", "--seed", "1"], p));
    ok(rgpnet(&["synth", "--out", "val", "--n", "3", "--seed", "2"], p));
    std::fs::write(p.join("cfg.json"), CONFIG).unwrap();
    ok(rgpnet(&["train", "--config", "cfg.json", "--data", "train", "--val", "val", "--out", "run"], p));
    dir
}

/// Epoch CSV rows without the timing column.
fn epoch_rows(out: &str) -> Vec<String> {
    out.lines()
        .skip(1)
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(5);
            f.join(",")
        })
        .collect()
}

#[test]
fn train_eval_infer_and_entropy_diff() {
    let dir = workspace();
    let p = dir.path();
    for f in ["config.json", "report.csv", "epoch_001.rgpn", "epoch_002.rgpn"] {
        assert!(p.join("run").join(f).exists(), "{f}");
    }
    let report = std::fs::read_to_string(p.join("run/report.csv")).unwrap();
    assert!(report.starts_with("epoch,stage_factor,lr,loss,mIoU,seconds"));
    assert_eq!(report.lines().count(), 3);
    let echoed = std::fs::read_to_string(p.join("run/config.json")).unwrap();
    assert!(echoed.contains("\"theta\": 0.6") && echoed.contains("\"min_kept\": 5000"), "{echoed}");

    let eval = ok(rgpnet(&["eval", "--checkpoint", "run/epoch_002.rgpn", "--data", "val"], p));
    let text = stdout(&eval);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "class,iou");
    assert_eq!(lines.len(), 1 + 4 + 2);
    assert!(lines[5].starts_with("mIoU,") && lines[6].starts_with("pixel_accuracy,"));
    let again = ok(rgpnet(&["eval", "--checkpoint", "run/epoch_002.rgpn", "--data", "val"], p));
    assert_eq!(eval.stdout, again.stdout);
    ok(rgpnet(&["eval", "--checkpoint", "run/epoch_002.rgpn", "--data", "val", "--scales", "0.5,1,1.5", "--flip"], p));

    ok(rgpnet(&["infer", "--checkpoint", "run/epoch_002.rgpn", "--image", "val/images/00000.png", "--out", "pred.png"], p));
    assert!(p.join("pred.png").exists() && p.join("pred.labels.png").exists());

    let same = ok(rgpnet(
        &[
            "entropy-diff", "--ckpt-a", "run/epoch_002.rgpn", "--ckpt-b", "run/epoch_002.rgpn", "--image",
            "val/images/00000.png", "--labels", "val/labels/00000.png", "--out", "self.png",
        ],
        p,
    ));
    assert!(stdout(&same).contains("mean_diff,0.000000"));
    let csv = std::fs::read_to_string(p.join("self.csv")).unwrap();
    assert_eq!(csv.lines().count(), 64);
    assert!(csv.split([',', '\n']).filter(|s| !s.is_empty()).all(|v| v.parse::<f32>().unwrap() == 0.0));
    assert!(p.join("self.png").exists());
}

#[test]
fn resume_continues_the_unbroken_trajectory() {
    let dir = workspace();
    let p = dir.path();
    let full = ok(rgpnet(&["train", "--config", "cfg.json", "--data", "train", "--out", "full"], p));
    let resumed = ok(rgpnet(&["train", "--resume", "full/epoch_001.rgpn", "--data", "train", "--out", "resumed"], p));
    let (full, resumed) = (epoch_rows(&stdout(&full)), epoch_rows(&stdout(&resumed)));
    assert_eq!(full.len(), 2);
    assert_eq!(resumed, full[1..]);
    assert_eq!(
        std::fs::read(p.join("full/epoch_002.rgpn")).unwrap(),
        std::fs::read(p.join("resumed/epoch_002.rgpn")).unwrap()
    );
}

#[test]
fn invalid_inputs_exit_with_code_two() {
    let dir = workspace();
    let p = dir.path();
    std::fs::write(p.join("bad.json"), r#"{"seed": 1, "schedule": {"base_lr": -1}}"#).unwrap();
    let o = rgpnet(&["train", "--config", "bad.json", "--data", "train", "--out", "x"], p);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("schedule.base_lr"), "{}", stderr(&o));

    let o = rgpnet(&["train", "--config", "cfg.json", "--data", "train", "--out", "x", "--loss-mode", "FOCAL"], p);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--loss-mode"));

    let o = rgpnet(&["train", "--config", "cfg.json", "--resume", "run/epoch_001.rgpn", "--data", "train", "--out", "x"], p);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--config"));

    let o = rgpnet(&["bench", "--size", "48x48", "--iters", "1"], p);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--size"));

    let o = rgpnet(&["eval", "--checkpoint", "missing.rgpn", "--data", "val"], p);
    assert_eq!(o.status.code(), Some(2));

    // Checkpoint trained on 4 classes evaluated on a 3-class corpus.
    ok(rgpnet(&["synth", "--out", "three", "--n", "2", "--classes", "3"], p));
    let o = rgpnet(&["eval", "--checkpoint", "run/epoch_002.rgpn", "--data", "three"], p);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("classes"), "{}", stderr(&o));

    let o = rgpnet(&["synth", "--out", "odd", "--size", "50x64"], p);
    assert_eq!(o.status.code(), Some(2));
    let o = rgpnet(&["border-stats", "--data", "val", "--kernel", "4"], p);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--kernel"));
}

#[test]
fn non_finite_loss_exits_with_code_three() {
    let dir = workspace();
    let p = dir.path();
    let cfg = CONFIG.replace("\"base_lr\": 0.01", "\"base_lr\": 1e30, \"momentum\": 0.0");
    std::fs::write(p.join("diverge.json"), cfg).unwrap();
    let o = rgpnet(&["train", "--config", "diverge.json", "--data", "train", "--out", "div"], p);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(p.join("div/diagnostic.rgpn").exists());
}

#[test]
fn border_stats_and_bench_reports() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(rgpnet(&["synth", "--out", "d", "--n", "3", "--seed", "4"], p));
    let o = ok(rgpnet(&["border-stats", "--data", "d"], p));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("image,border_pixels,pixels,fraction"));
    let all = text.lines().last().unwrap();
    let frac: f64 = all.rsplit(',').next().unwrap().parse().unwrap();
    assert!(all.starts_with("ALL,") && frac > 0.0 && frac < 0.2, "{all}");
    assert_eq!(stdout(&ok(rgpnet(&["border-stats", "--data", "d"], p))), text);

    // Constant label maps have no borders.
    let labels = p.join("d/labels");
    for e in std::fs::read_dir(&labels).unwrap() {
        let path = e.unwrap().path();
        rgpnet::data::write_labels(&path, &rgpnet::LabelMap::filled(64, 64, 2)).unwrap();
    }
    let o = ok(rgpnet(&["border-stats", "--data", "d", "--kernel", "5"], p));
    assert!(stdout(&o).lines().last().unwrap().ends_with(",0.000000"));

    let o = ok(rgpnet(&["bench", "--size", "64x64,128x128", "--iters", "2", "--warmup", "1", "--sections"], p));
    let text = stdout(&o);
    assert!(text.contains("| Model | Input | Params(M) | FPS |"), "{text}");
    assert!(text.contains("| RGPNet | 128x128 | 0.729 |"), "{text}");
    assert!(text.contains("encoder.stem"));
}

//! `rgpnet` command-line tool.
//!
//! Exit codes: 0 success, 2 invalid input (flags, config, files, checkpoints,
//! class-count mismatches), 3 non-finite training loss.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rgpnet::arch::{Model, NetworkConfig};
use rgpnet::bench;
use rgpnet::config::{LossMode, RunConfig};
use rgpnet::data::{self, Dataset, DatasetMeta, SynthConfig};
use rgpnet::losses::detect_borders;
use rgpnet::metrics::{self, evaluate, multi_scale_probs, probability_entropy};
use rgpnet::training::{self, Checkpoint, Trainer};
use rgpnet::{Error, LabelMap, Result, Tensor};

#[derive(Parser)]
#[command(name = "rgpnet", version, about = "Train, evaluate and benchmark RGPNet segmentation models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes per-epoch checkpoints and report.csv to --out.
    Train(TrainArgs),
    /// Per-class IoU, mIoU and pixel accuracy of a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Single-image inference throughput.
    Bench(BenchArgs),
    /// Fraction of border pixels per image and over the corpus.
    BorderStats(BorderArgs),
    /// Per-pixel entropy of checkpoint A minus that of checkpoint B.
    EntropyDiff(EntropyArgs),
    /// Generate a synthetic shapes dataset.
    Synth(SynthArgs),
    /// Predict a class map for one image.
    Infer(InferArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration (JSON); defaults apply when omitted.
    #[arg(long, conflicts_with = "resume")]
    config: Option<PathBuf>,
    /// Training dataset directory; overrides paths.train.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Validation dataset, evaluated after every epoch; overrides paths.val.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Output directory; overrides paths.out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue from a checkpoint, using the configuration stored in it.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long, conflicts_with = "resume")]
    seed: Option<u64>,
    /// CE, OHEM, CE+LR or OHEM+LR.
    #[arg(long, conflicts_with = "resume")]
    loss_mode: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated evaluation scales.
    #[arg(long, default_value = "1")]
    scales: String,
    /// Also average over mirrored inputs.
    #[arg(long)]
    flip: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark this checkpoint's network.
    #[arg(long, conflicts_with = "config")]
    checkpoint: Option<PathBuf>,
    /// Benchmark the network of this run configuration (random weights).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input size as HxW; repeat for several sizes.
    #[arg(long, value_delimiter = ',', default_value = "64x64,128x128,256x256")]
    size: Vec<String>,
    #[arg(long, default_value_t = 20)]
    iters: usize,
    #[arg(long, default_value_t = 3)]
    warmup: usize,
    /// Also print the per-section time breakdown.
    #[arg(long)]
    sections: bool,
}

#[derive(Args)]
struct BorderArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = rgpnet::losses::DEFAULT_BORDER_KERNEL)]
    kernel: usize,
}

#[derive(Args)]
struct EntropyArgs {
    #[arg(long)]
    ckpt_a: PathBuf,
    #[arg(long)]
    ckpt_b: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Heatmap PNG; the values are written next to it as CSV.
    #[arg(long)]
    out: PathBuf,
    /// Label map of the image; adds the mean difference over border pixels.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = rgpnet::losses::DEFAULT_BORDER_KERNEL)]
    kernel: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value = "64x64")]
    size: String,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Color-coded prediction PNG.
    #[arg(long)]
    out: PathBuf,
    /// Raw class-index PNG; defaults to `<out stem>.labels.png`.
    #[arg(long)]
    labels_out: Option<PathBuf>,
}

fn flag_error(flag: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        field: format!("--{flag}"),
        msg: msg.into(),
    }
}

fn parse_size(flag: &str, s: &str) -> Result<(usize, usize)> {
    let parsed = s.split_once(['x', 'X']).and_then(|(h, w)| Some((h.trim().parse().ok()?, w.trim().parse().ok()?)));
    match parsed {
        Some((h, w)) if h > 0 && w > 0 => Ok((h, w)),
        _ => Err(flag_error(flag, format!("expected HxW, got {s:?}"))),
    }
}

fn parse_scales(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| match v.trim().parse::<f64>() {
            Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
            _ => Err(flag_error("scales", format!("{v:?} is not a positive number"))),
        })
        .collect()
}

fn required(flag: &str, v: Option<PathBuf>) -> Result<PathBuf> {
    v.ok_or_else(|| flag_error(flag, "required (or set it under `paths` in the config)"))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let resumed = a.resume.as_deref().map(|p| Trainer::resume(&Checkpoint::load(p)?)).transpose()?;
    let cfg = if let Some(t) = &resumed {
        t.config().clone()
    } else {
        let mut cfg = match &a.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = a.seed {
            cfg.seed = seed;
        }
        if let Some(mode) = &a.loss_mode {
            cfg.set_loss_mode(LossMode::parse(mode).map_err(|e| flag_error("loss-mode", e.to_string()))?);
        }
        cfg.validate()?;
        cfg
    };
    let train_dir = required("data", a.data.or(cfg.paths.train.clone()))?;
    let out = required("out", a.out.or(cfg.paths.out.clone()))?;
    let val_dir = a.val.or(cfg.paths.val.clone());
    let train_set = Dataset::load(&train_dir)?;
    let val_set = val_dir.as_deref().map(Dataset::load).transpose()?;
    let mut trainer = match resumed {
        Some(t) => t,
        None => Trainer::new(cfg.clone(), train_set.len())?,
    };

    std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
    let cfg_path = out.join("config.json");
    std::fs::write(&cfg_path, cfg.to_json()?).map_err(|e| Error::Io { path: cfg_path, source: e })?;
    eprintln!("loss_mode {}", cfg.loss_mode.name());
    if cfg.loss_mode.uses_ohem() {
        eprintln!("ohem theta={} min_kept={}", cfg.ohem.theta, cfg.ohem.min_kept);
    }
    if cfg.loss_mode.uses_relaxation() {
        eprintln!("label_relaxation kernel={}", cfg.label_relaxation.kernel);
    }
    eprintln!("{} parameters, {} iterations", trainer.model().num_parameters(), trainer.total_iters());
    println!("epoch,stage_factor,lr,loss,mIoU,seconds,steps,batch_size");
    let report = training::train(&mut trainer, &train_set, val_set.as_ref(), Some(&out), |e| {
        let miou = e.miou.map(|m| format!("{m:.6}")).unwrap_or_default();
        println!(
            "{},{},{:.6e},{:.6},{},{:.3},{},{}",
            e.epoch, e.stage_factor, e.lr, e.loss, miou, e.seconds, e.steps, e.batch_size
        );
    })?;
    if let Some(r) = report.measured_cost_ratio(cfg.schedule.total_epochs) {
        eprintln!("cost ratio measured {r:.4}, theoretical {:.4}", report.theoretical_cost_factor);
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let scales = parse_scales(&a.scales)?;
    let model = Checkpoint::load(&a.checkpoint)?.model()?;
    let data = Dataset::load(&a.data)?;
    let r = evaluate(&model, &data, &scales, a.flip)?;
    let mut out = String::from("class,iou\n");
    for (c, iou) in r.per_class_iou.iter().enumerate() {
        let name = data.meta.class_names.get(c).cloned().unwrap_or_else(|| c.to_string());
        let iou = iou.map(|v| format!("{v:.6}")).unwrap_or_default();
        writeln!(out, "{name},{iou}").unwrap();
    }
    writeln!(out, "mIoU,{:.6}", r.miou).unwrap();
    writeln!(out, "pixel_accuracy,{:.6}", r.pixel_accuracy).unwrap();
    print!("{out}");
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let model = match (&a.checkpoint, &a.config) {
        (Some(c), _) => Checkpoint::load(c)?.model()?,
        (None, Some(p)) => {
            let cfg = RunConfig::load(p)?;
            Model::new(&cfg.network, cfg.seed)?
        }
        (None, None) => Model::new(&NetworkConfig::default(), 0)?,
    };
    if a.iters == 0 {
        return Err(flag_error("iters", "must be positive"));
    }
    let m = model.config().required_multiple();
    let mut rows = Vec::new();
    for s in &a.size {
        let (h, w) = parse_size("size", s)?;
        if h % m != 0 || w % m != 0 {
            return Err(flag_error("size", format!("{h}x{w} is not divisible by {m}")));
        }
        let r = bench::run(&model, h, w, a.warmup, a.iters)?;
        rows.push(("RGPNet".to_string(), r));
    }
    print!("{}", bench::format_table(&rows));
    if a.sections {
        for (_, r) in &rows {
            println!("\n{}x{}", r.height, r.width);
            print!("{}", bench::format_sections(r));
        }
    }
    Ok(())
}

fn cmd_border_stats(a: BorderArgs) -> Result<()> {
    let data = Dataset::load(&a.data)?;
    let mut out = String::from("image,border_pixels,pixels,fraction\n");
    let (mut border, mut total) = (0usize, 0usize);
    for s in &data.samples {
        let m = detect_borders(&s.labels, a.kernel, data.num_classes()).map_err(|e| match e {
            Error::Config { msg, .. } => flag_error("kernel", msg),
            e => e,
        })?;
        writeln!(out, "{},{},{},{:.6}", s.name, m.border_count(), m.pixel_count(), m.fraction()).unwrap();
        border += m.border_count();
        total += m.pixel_count();
    }
    writeln!(out, "ALL,{border},{total},{:.6}", border as f64 / total.max(1) as f64).unwrap();
    print!("{out}");
    Ok(())
}

/// Single image normalized with the default dataset statistics.
fn load_image(path: &Path, model: &Model) -> Result<Tensor> {
    let meta = DatasetMeta::new(model.config().num_classes);
    Ok(meta.normalize(&data::read_rgb(path)?))
}

fn cmd_entropy_diff(a: EntropyArgs) -> Result<()> {
    let ma = Checkpoint::load(&a.ckpt_a)?.model()?;
    let mb = Checkpoint::load(&a.ckpt_b)?.model()?;
    if ma.config().num_classes != mb.config().num_classes {
        return Err(flag_error("ckpt-b", "checkpoints predict different class counts"));
    }
    let image = load_image(&a.image, &ma)?;
    let (_, _, h, w) = image.dims4()?;
    let ea = probability_entropy(&multi_scale_probs(&ma, &image, &[1.0], false)?)?;
    let eb = probability_entropy(&multi_scale_probs(&mb, &image, &[1.0], false)?)?;
    let diff: Vec<f32> = ea.iter().zip(&eb).map(|(x, y)| x - y).collect();
    let scale = (ma.config().num_classes as f32).ln();
    data::write_rgb(&a.out, &metrics::signed_colormap(&diff, h, w, scale))?;

    let mut csv = String::new();
    for row in diff.chunks(w) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        csv += &line.join(",");
        csv.push('\n');
    }
    let csv_path = a.out.with_extension("csv");
    std::fs::write(&csv_path, csv).map_err(|e| Error::Io { path: csv_path, source: e })?;

    println!("mean_diff,{:.6}", diff.iter().map(|&v| v as f64).sum::<f64>() / diff.len() as f64);
    if let Some(lp) = &a.labels {
        let lm = data::read_labels(lp)?;
        if (lm.height(), lm.width()) != (h, w) {
            return Err(flag_error("labels", "label map size differs from the image"));
        }
        let mask = detect_borders(&lm, a.kernel, ma.config().num_classes)?;
        let vals: Vec<f64> = (0..h * w).filter(|&i| mask.border_plane()[i]).map(|i| diff[i] as f64).collect();
        let mean = if vals.is_empty() { 0.0 } else { vals.iter().sum::<f64>() / vals.len() as f64 };
        println!("border_mean_diff,{mean:.6}");
        println!("border_pixels,{}", vals.len());
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let (height, width) = parse_size("size", &a.size)?;
    let cfg = SynthConfig {
        num_images: a.n,
        height,
        width,
        num_classes: a.classes,
        seed: a.seed,
        ..SynthConfig::default()
    };
    data::write_synth(&a.out, &cfg)?;
    eprintln!("wrote {} images to {}", a.n, a.out.display());
    Ok(())
}

fn cmd_infer(a: InferArgs) -> Result<()> {
    let model = Checkpoint::load(&a.checkpoint)?.model()?;
    let image = load_image(&a.image, &model)?;
    let (_, _, h, w) = image.dims4()?;
    let probs = multi_scale_probs(&model, &image, &[1.0], false)?;
    let pred = metrics::argmax_channels(&probs)?.remove(0);
    let lm = LabelMap::new(h, w, pred)?;
    data::write_rgb(&a.out, &data::colorize(&lm, &data::voc_palette()))?;
    let raw = a.labels_out.unwrap_or_else(|| a.out.with_extension("labels.png"));
    data::write_labels(&raw, &lm)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = rgpnet::init_threads_from_env().and_then(|_| match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::BorderStats(a) => cmd_border_stats(a),
        Command::EntropyDiff(a) => cmd_entropy_diff(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Infer(a) => cmd_infer(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::NonFiniteLoss { .. }) { 3 } else { 2 })
        }
    }
}

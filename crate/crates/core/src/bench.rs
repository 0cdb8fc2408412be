//! Forward-pass throughput measurement.

use std::time::{Duration, Instant};

use crate::arch::Model;
use crate::error::Result;
use crate::graph::{Graph, Profile};
use crate::nn::Mode;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub height: usize,
    pub width: usize,
    pub iters: usize,
    pub params: usize,
    pub mean_seconds: f64,
    pub fps: f64,
    /// Mean seconds per forward pass for each network section.
    pub sections: Vec<(String, f64)>,
}

/// Time `iters` single-image inference passes after `warmup` untimed ones.
pub fn run(model: &Model, height: usize, width: usize, warmup: usize, iters: usize) -> Result<BenchReport> {
    model.config().check_input(height, width)?;
    let iters = iters.max(1);
    let image = Tensor::full(vec![1, model.config().in_channels, height, width], 0.1);
    for _ in 0..warmup {
        model.predict_logits(&image)?;
    }
    let mut profile = Profile::default();
    let mut total = Duration::ZERO;
    for _ in 0..iters {
        let mut g = Graph::inference();
        g.enable_profiling();
        let start = Instant::now();
        let x = g.leaf(image.clone());
        model.forward(&mut g, x, Mode::Eval)?;
        total += start.elapsed();
        profile.merge(g.profile().expect("profiling enabled"));
    }
    let mean = total.as_secs_f64() / iters as f64;
    Ok(BenchReport {
        height,
        width,
        iters,
        params: model.num_parameters(),
        mean_seconds: mean,
        fps: 1.0 / mean,
        sections: profile.entries.iter().map(|(s, d)| (s.clone(), d.as_secs_f64() / iters as f64)).collect(),
    })
}

/// Markdown table with one row per report.
pub fn format_table(rows: &[(String, BenchReport)]) -> String {
    let mut s = String::from("| Model | Input | Params(M) | FPS |\n|---|---|---|---|\n");
    for (name, r) in rows {
        s += &format!("| {name} | {}x{} | {:.3} | {:.2} |\n", r.height, r.width, r.params as f64 / 1e6, r.fps);
    }
    s
}

pub fn format_sections(r: &BenchReport) -> String {
    let mut s = String::from("| Section | ms | share |\n|---|---|---|\n");
    let total: f64 = r.sections.iter().map(|(_, t)| t).sum();
    for (name, t) in &r.sections {
        s += &format!("| {name} | {:.3} | {:.1}% |\n", t * 1e3, 100.0 * t / total.max(f64::MIN_POSITIVE));
    }
    s
}

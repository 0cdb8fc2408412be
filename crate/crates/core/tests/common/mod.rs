//! Test-only oracles: central finite differences and brute-force scans.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgpnet::nn::ParamStore;
use rgpnet::{Graph, LabelMap, Tensor, Var, IGNORE};

pub const FD_STEP: f32 = 1e-3;
pub const FD_TOL: f64 = 1e-2;
pub const FD_MAX_ELEMS: usize = 512;
/// Gradient norms below this are at the f32 central-difference noise floor
/// and compare as zero.
pub const FD_ZERO_NORM: f64 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f32) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Worst relative error `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`
/// across the checked inputs.
#[derive(Debug)]
pub struct GradCheck {
    pub worst: f64,
    pub per_input: Vec<f64>,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.worst < FD_TOL
    }
}

/// Compares reverse-mode gradients of `f` against central differences for
/// every input. `f` must build the same scalar from the given leaves each call.
pub fn grad_check<F>(inputs: &[Tensor], f: F) -> GradCheck
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let eval = |ts: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.leaf(t.clone())).collect();
        let l = f(&mut g, &vars);
        g.value(l).item() as f64
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone().with_requires_grad(true))).collect();
    let loss = f(&mut g, &vars);
    g.backward(loss).unwrap();
    let mut per_input = Vec::new();
    for (k, t) in inputs.iter().enumerate() {
        let analytic = g.grad(vars[k]).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; t.numel()]);
        let stride = t.numel().div_ceil(FD_MAX_ELEMS).max(1);
        let (mut diff, mut na, mut nn) = (0.0f64, 0.0f64, 0.0f64);
        for i in (0..t.numel()).step_by(stride) {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= FD_STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP as f64);
            let a = analytic[i] as f64;
            diff += (a - numeric).powi(2);
            na += a * a;
            nn += numeric * numeric;
        }
        let denom = na.sqrt().max(nn.sqrt());
        per_input.push(if denom == 0.0 { 0.0 } else { diff.sqrt() / denom });
    }
    GradCheck {
        worst: per_input.iter().cloned().fold(0.0, f64::max),
        per_input,
    }
}

fn relative_error(analytic: &[f32], numeric: &[(usize, f64)]) -> f64 {
    let (mut diff, mut na, mut nn) = (0.0f64, 0.0f64, 0.0f64);
    for &(i, n) in numeric {
        let a = analytic[i] as f64;
        diff += (a - n).powi(2);
        na += a * a;
        nn += n * n;
    }
    let denom = na.sqrt().max(nn.sqrt());
    if denom < FD_ZERO_NORM {
        0.0
    } else {
        diff.sqrt() / denom
    }
}

#[derive(Debug)]
pub struct ModuleCheck {
    /// `(name, relative error)` for each input, then each parameter read by `f`.
    pub errors: Vec<(String, f64)>,
    /// Coordinates left out because the ±step stencil changed the activation pattern.
    pub skipped: usize,
    pub checked: usize,
}

impl ModuleCheck {
    pub fn worst(&self) -> f64 {
        self.errors.iter().map(|e| e.1).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.worst() < FD_TOL && self.skipped * 2 < self.checked + self.skipped
    }
}

/// Finite-difference check of `f` against reverse mode for the given inputs
/// and every trainable parameter of `store` that `f` reads. Coordinates whose
/// stencil crosses a ReLU kink or changes a max-pool winner are skipped: the
/// function is not differentiable across them, so a central difference there
/// measures the kink rather than the gradient.
pub fn grad_check_module<F>(store: &ParamStore, inputs: &[Tensor], f: F) -> ModuleCheck
where
    F: Fn(&mut Graph, &ParamStore, &[Var]) -> Var,
{
    let eval = |st: &ParamStore, ts: &[Tensor]| -> (f64, Vec<u32>) {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.leaf(t.clone())).collect();
        let l = f(&mut g, st, &vars);
        (g.value(l).item() as f64, g.activation_pattern())
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone().with_requires_grad(true))).collect();
    let loss = f(&mut g, store, &vars);
    g.backward(loss).unwrap();
    let pattern = g.activation_pattern();
    let (mut skipped, mut checked) = (0, 0);
    let mut central = |(p, pp): (f64, Vec<u32>), (m, pm): (f64, Vec<u32>)| -> Option<f64> {
        if pp != pattern || pm != pattern {
            skipped += 1;
            return None;
        }
        checked += 1;
        Some((p - m) / (2.0 * FD_STEP as f64))
    };
    let mut errors = Vec::new();
    for (k, t) in inputs.iter().enumerate() {
        let analytic = g.grad(vars[k]).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; t.numel()]);
        let stride = t.numel().div_ceil(FD_MAX_ELEMS).max(1);
        let mut numeric = Vec::new();
        for i in (0..t.numel()).step_by(stride) {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= FD_STEP;
            if let Some(d) = central(eval(store, &plus), eval(store, &minus)) {
                numeric.push((i, d));
            }
        }
        errors.push((format!("input{k}"), relative_error(&analytic, &numeric)));
    }
    for (id, analytic) in g.param_grads() {
        let n = store.tensor(id).numel();
        let stride = n.div_ceil(FD_MAX_ELEMS).max(1);
        let mut st = store.clone();
        let mut numeric = Vec::new();
        for i in (0..n).step_by(stride) {
            let orig = store.tensor(id).data()[i];
            st.tensor_mut(id).data_mut()[i] = orig + FD_STEP;
            let p = eval(&st, inputs);
            st.tensor_mut(id).data_mut()[i] = orig - FD_STEP;
            let m = eval(&st, inputs);
            st.tensor_mut(id).data_mut()[i] = orig;
            if let Some(d) = central(p, m) {
                numeric.push((i, d));
            }
        }
        errors.push((store.name(id).to_string(), relative_error(analytic, &numeric)));
    }
    ModuleCheck { errors, skipped, checked }
}

/// Fixed random weights so the scalar probe `Σ out ⊙ r` exercises every output.
pub fn probe_weights(seed: u64, len: usize) -> Vec<f32> {
    let mut r = rng(seed);
    (0..len).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// Brute-force border oracle: distinct non-ignore labels in the clamped k×k window.
pub fn brute_force_window_sets(lm: &LabelMap, k: usize) -> Vec<Vec<u8>> {
    let r = (k / 2) as isize;
    let (h, w) = (lm.height() as isize, lm.width() as isize);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let mut set = Vec::new();
            for dy in -r..=r {
                for dx in -r..=r {
                    let l = lm.get((y + dy).clamp(0, h - 1) as usize, (x + dx).clamp(0, w - 1) as usize);
                    if l != IGNORE && !set.contains(&l) {
                        set.push(l);
                    }
                }
            }
            set.sort_unstable();
            out.push(set);
        }
    }
    out
}

pub fn random_label_map(rng: &mut ChaCha8Rng, h: usize, w: usize, classes: u8) -> LabelMap {
    // Blocky maps so borders are structured rather than everywhere.
    let bs = rng.random_range(1..=4usize);
    let bw = w.div_ceil(bs);
    let blocks: Vec<u8> = (0..h.div_ceil(bs) * bw)
        .map(|_| {
            if rng.random_bool(0.05) {
                IGNORE
            } else {
                rng.random_range(0..classes)
            }
        })
        .collect();
    let labels = (0..h * w).map(|i| blocks[(i / w / bs) * bw + (i % w) / bs]).collect();
    LabelMap::new(h, w, labels).unwrap()
}

/// Batch statistics saved by a training-mode forward pass.
pub struct BatchStats {
    pub mean: Vec<f32>,
    /// Biased variance (the normalizer).
    pub var: Vec<f32>,
    pub inv_std: Vec<f32>,
}

pub fn batch_norm_train(x: &[f32], n: usize, c: usize, plane: usize, gamma: &[f32], beta: &[f32], eps: f32) -> (Vec<f32>, BatchStats) {
    let m = (n * plane) as f64;
    let mut mean = vec![0.0f32; c];
    let mut var = vec![0.0f32; c];
    for ch in 0..c {
        // f64 accumulation keeps the statistics stable for large planes.
        let mut s = 0.0f64;
        for b in 0..n {
            let off = (b * c + ch) * plane;
            s += x[off..off + plane].iter().map(|&v| v as f64).sum::<f64>();
        }
        let mu = s / m;
        let mut sq = 0.0f64;
        for b in 0..n {
            let off = (b * c + ch) * plane;
            sq += x[off..off + plane].iter().map(|&v| (v as f64 - mu).powi(2)).sum::<f64>();
        }
        mean[ch] = mu as f32;
        var[ch] = (sq / m) as f32;
    }
    let inv_std: Vec<f32> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
    let mut y = vec![0.0f32; x.len()];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * plane;
            let (mu, is, g, bt) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
            for (o, &v) in y[off..off + plane].iter_mut().zip(&x[off..off + plane]) {
                *o = (v - mu) * is * g + bt;
            }
        }
    }
    (y, BatchStats { mean, var, inv_std })
}

pub struct NormGrads {
    pub dx: Vec<f32>,
    pub dgamma: Vec<f32>,
    pub dbeta: Vec<f32>,
}

pub fn batch_norm_train_backward(x: &[f32], dy: &[f32], n: usize, c: usize, plane: usize, gamma: &[f32], stats: &BatchStats) -> NormGrads {
    let m = (n * plane) as f32;
    let mut dx = vec![0.0f32; x.len()];
    let mut dgamma = vec![0.0f32; c];
    let mut dbeta = vec![0.0f32; c];
    for ch in 0..c {
        let (mu, is) = (stats.mean[ch], stats.inv_std[ch]);
        let mut sum_dy = 0.0f32;
        let mut sum_dy_xhat = 0.0f32;
        for b in 0..n {
            let off = (b * c + ch) * plane;
            for (&g, &v) in dy[off..off + plane].iter().zip(&x[off..off + plane]) {
                sum_dy += g;
                sum_dy_xhat += g * (v - mu) * is;
            }
        }
        dgamma[ch] = sum_dy_xhat;
        dbeta[ch] = sum_dy;
        let k = gamma[ch] * is / m;
        for b in 0..n {
            let off = (b * c + ch) * plane;
            for ((o, &g), &v) in dx[off..off + plane].iter_mut().zip(&dy[off..off + plane]).zip(&x[off..off + plane]) {
                let xhat = (v - mu) * is;
                *o = k * (m * g - sum_dy - xhat * sum_dy_xhat);
            }
        }
    }
    NormGrads { dx, dgamma, dbeta }
}

/// Per-channel affine `y = gamma·(x − mean)·inv_std + beta` (inference-mode batch norm).
#[allow(clippy::too_many_arguments)]
pub fn channel_affine(x: &[f32], n: usize, c: usize, plane: usize, gamma: &[f32], beta: &[f32], mean: &[f32], inv_std: &[f32]) -> Vec<f32> {
    let mut y = vec![0.0f32; x.len()];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * plane;
            let scale = gamma[ch] * inv_std[ch];
            let shift = beta[ch] - mean[ch] * scale;
            for (o, &v) in y[off..off + plane].iter_mut().zip(&x[off..off + plane]) {
                *o = v * scale + shift;
            }
        }
    }
    y
}

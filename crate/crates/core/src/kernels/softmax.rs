/// Softmax over the channel axis of an `[n, c, plane]` buffer.
pub fn softmax_channels(x: &[f32], n: usize, c: usize, plane: usize) -> Vec<f32> {
    let mut y = vec![0.0f32; x.len()];
    let mut buf = vec![0.0f32; c];
    for b in 0..n {
        let base = b * c * plane;
        for p in 0..plane {
            let mut mx = f32::NEG_INFINITY;
            for (ch, v) in buf.iter_mut().enumerate() {
                *v = x[base + ch * plane + p];
                mx = mx.max(*v);
            }
            let mut s = 0.0f32;
            for v in buf.iter_mut() {
                *v = (*v - mx).exp();
                s += *v;
            }
            for (ch, v) in buf.iter().enumerate() {
                y[base + ch * plane + p] = v / s;
            }
        }
    }
    y
}

pub fn softmax_channels_backward(y: &[f32], dy: &[f32], n: usize, c: usize, plane: usize) -> Vec<f32> {
    let mut dx = vec![0.0f32; y.len()];
    for b in 0..n {
        let base = b * c * plane;
        for p in 0..plane {
            let dot: f32 = (0..c).map(|ch| y[base + ch * plane + p] * dy[base + ch * plane + p]).sum();
            for ch in 0..c {
                let i = base + ch * plane + p;
                dx[i] = y[i] * (dy[i] - dot);
            }
        }
    }
    dx
}

/// `ln Σ exp(z_c)` over the channels selected by `keep`, for one pixel.
pub fn log_sum_exp<F: Fn(usize) -> bool>(logits: &[f32], base: usize, c: usize, plane: usize, keep: F) -> f32 {
    let mut mx = f32::NEG_INFINITY;
    for ch in (0..c).filter(|&ch| keep(ch)) {
        mx = mx.max(logits[base + ch * plane]);
    }
    if mx == f32::NEG_INFINITY {
        return mx;
    }
    let s: f32 = (0..c)
        .filter(|&ch| keep(ch))
        .map(|ch| (logits[base + ch * plane] - mx).exp())
        .sum();
    mx + s.ln()
}

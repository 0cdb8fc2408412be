/// Max-pool without padding. Returns the output and, per output element, the flat
/// input index of the first (row-major) maximum in its window.
pub fn maxpool_valid(x: &[f32], planes: usize, h: usize, w: usize, k: usize, stride: usize) -> (Vec<f32>, Vec<u32>, usize, usize) {
    let oh = (h - k) / stride + 1;
    let ow = (w - k) / stride + 1;
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut arg = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f32::NEG_INFINITY;
                let mut best_i = 0usize;
                for ky in 0..k {
                    for kx in 0..k {
                        let i = base + (oy * stride + ky) * w + ox * stride + kx;
                        if x[i] > best {
                            best = x[i];
                            best_i = i;
                        }
                    }
                }
                out.push(best);
                arg.push(best_i as u32);
            }
        }
    }
    (out, arg, oh, ow)
}

/// Stride-1, same-size max-pool with replication padding: each window is the
/// `k×k` neighborhood with coordinates clamped into the plane.
pub fn maxpool_same(x: &[f32], planes: usize, h: usize, w: usize, k: usize) -> (Vec<f32>, Vec<u32>) {
    let r = (k / 2) as isize;
    let mut out = Vec::with_capacity(x.len());
    let mut arg = Vec::with_capacity(x.len());
    for p in 0..planes {
        let base = p * h * w;
        for y in 0..h as isize {
            for xx in 0..w as isize {
                let mut best = f32::NEG_INFINITY;
                let mut best_i = 0usize;
                for dy in -r..=r {
                    let sy = (y + dy).clamp(0, h as isize - 1) as usize;
                    for dx in -r..=r {
                        let sx = (xx + dx).clamp(0, w as isize - 1) as usize;
                        let i = base + sy * w + sx;
                        if x[i] > best {
                            best = x[i];
                            best_i = i;
                        }
                    }
                }
                out.push(best);
                arg.push(best_i as u32);
            }
        }
    }
    (out, arg)
}

pub fn maxpool_backward(dy: &[f32], argmax: &[u32], input_len: usize) -> Vec<f32> {
    let mut dx = vec![0.0f32; input_len];
    for (&g, &i) in dy.iter().zip(argmax) {
        dx[i as usize] += g;
    }
    dx
}

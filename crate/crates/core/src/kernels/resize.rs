/// Source taps for half-pixel-centered bilinear sampling along one axis.
#[derive(Clone, Copy)]
struct Tap {
    i0: usize,
    i1: usize,
    frac: f32,
}

fn taps(in_len: usize, out_len: usize) -> Vec<Tap> {
    let scale = in_len as f32 / out_len as f32;
    (0..out_len)
        .map(|o| {
            let src = ((o as f32 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            Tap { i0, i1, frac: src - i0 as f32 }
        })
        .collect()
}

pub fn bilinear_forward(x: &[f32], planes: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<f32> {
    if h == oh && w == ow {
        return x.to_vec();
    }
    let ty = taps(h, oh);
    let tx = taps(w, ow);
    let mut out = vec![0.0f32; planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for (oy, a) in ty.iter().enumerate() {
            let r0 = &src[a.i0 * w..(a.i0 + 1) * w];
            let r1 = &src[a.i1 * w..(a.i1 + 1) * w];
            for (ox, b) in tx.iter().enumerate() {
                let top = r0[b.i0] + (r0[b.i1] - r0[b.i0]) * b.frac;
                let bot = r1[b.i0] + (r1[b.i1] - r1[b.i0]) * b.frac;
                dst[oy * ow + ox] = top + (bot - top) * a.frac;
            }
        }
    }
    out
}

pub fn bilinear_backward(dy: &[f32], planes: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<f32> {
    if h == oh && w == ow {
        return dy.to_vec();
    }
    let ty = taps(h, oh);
    let tx = taps(w, ow);
    let mut dx = vec![0.0f32; planes * h * w];
    for p in 0..planes {
        let g = &dy[p * oh * ow..(p + 1) * oh * ow];
        let d = &mut dx[p * h * w..(p + 1) * h * w];
        for (oy, a) in ty.iter().enumerate() {
            for (ox, b) in tx.iter().enumerate() {
                let v = g[oy * ow + ox];
                let (wy1, wx1) = (a.frac, b.frac);
                let (wy0, wx0) = (1.0 - wy1, 1.0 - wx1);
                d[a.i0 * w + b.i0] += v * wy0 * wx0;
                d[a.i0 * w + b.i1] += v * wy0 * wx1;
                d[a.i1 * w + b.i0] += v * wy1 * wx0;
                d[a.i1 * w + b.i1] += v * wy1 * wx1;
            }
        }
    }
    dx
}

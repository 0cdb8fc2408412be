use rayon::prelude::*;

use super::gemm;

/// Geometry of a sliding-window mapping between an image plane and its column matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Window {
    /// Forward-convolution geometry; `None` if the kernel does not fit.
    pub fn conv(channels: usize, h: usize, w: usize, kh: usize, kw: usize, stride: usize, pad: usize) -> Option<Self> {
        if stride == 0 || h + 2 * pad < kh || w + 2 * pad < kw {
            return None;
        }
        Some(Window {
            channels,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            oh: (h + 2 * pad - kh) / stride + 1,
            ow: (w + 2 * pad - kw) / stride + 1,
        })
    }

    pub fn rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn cols(&self) -> usize {
        self.oh * self.ow
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

pub fn im2col(img: &[f32], g: &Window, cols: &mut [f32]) {
    let ncol = g.cols();
    for c in 0..g.channels {
        let plane = &img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = ((c * g.kh + ki) * g.kw + kj) * ncol;
                let dst = &mut cols[row..row + ncol];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let out = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, o) in out.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *o = if ix < 0 || ix >= g.w as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Scatter-add a column matrix back onto an image plane (adjoint of [`im2col`]).
pub fn col2im(cols: &[f32], g: &Window, img: &mut [f32]) {
    let ncol = g.cols();
    for c in 0..g.channels {
        let plane = &mut img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = ((c * g.kh + ki) * g.kw + kj) * ncol;
                let src = &cols[row..row + ncol];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Convolution over a batch. `weight` is `[cout, cin, kh, kw]`.
pub fn conv2d_forward(x: &[f32], n: usize, weight: &[f32], bias: Option<&[f32]>, cout: usize, g: &Window) -> Vec<f32> {
    let in_per = g.channels * g.h * g.w;
    let out_per = cout * g.cols();
    let mut out = vec![0.0f32; n * out_per];
    out.par_chunks_mut(out_per).enumerate().for_each(|(s, o)| {
        let xs = &x[s * in_per..(s + 1) * in_per];
        if g.is_pointwise() {
            gemm(cout, g.rows(), g.cols(), weight, false, xs, false, 0.0, o);
        } else {
            let mut cols = vec![0.0f32; g.rows() * g.cols()];
            im2col(xs, g, &mut cols);
            gemm(cout, g.rows(), g.cols(), weight, false, &cols, false, 0.0, o);
        }
        if let Some(b) = bias {
            add_channel_bias(o, b, g.cols());
        }
    });
    out
}

pub struct ConvGrads {
    pub dx: Option<Vec<f32>>,
    pub dw: Vec<f32>,
    pub db: Vec<f32>,
}

pub fn conv2d_backward(x: &[f32], n: usize, weight: &[f32], dy: &[f32], cout: usize, g: &Window, need_dx: bool) -> ConvGrads {
    let in_per = g.channels * g.h * g.w;
    let out_per = cout * g.cols();
    let wlen = cout * g.rows();
    // Per-sample partials, reduced in sample order so the result is independent of thread count.
    let partials: Vec<(Option<Vec<f32>>, Vec<f32>)> = (0..n)
        .into_par_iter()
        .map(|s| {
            let xs = &x[s * in_per..(s + 1) * in_per];
            let dys = &dy[s * out_per..(s + 1) * out_per];
            let mut dw = vec![0.0f32; wlen];
            let pointwise = g.is_pointwise();
            let mut cols_buf = Vec::new();
            let cols: &[f32] = if pointwise {
                xs
            } else {
                cols_buf.resize(g.rows() * g.cols(), 0.0);
                im2col(xs, g, &mut cols_buf);
                &cols_buf
            };
            gemm(cout, g.cols(), g.rows(), dys, false, cols, true, 0.0, &mut dw);
            let dx = need_dx.then(|| {
                let mut dcols = vec![0.0f32; g.rows() * g.cols()];
                gemm(g.rows(), cout, g.cols(), weight, true, dys, false, 0.0, &mut dcols);
                if pointwise {
                    dcols
                } else {
                    let mut dx = vec![0.0f32; in_per];
                    col2im(&dcols, g, &mut dx);
                    dx
                }
            });
            (dx, dw)
        })
        .collect();
    let mut dw = vec![0.0f32; wlen];
    let mut dx = need_dx.then(|| Vec::with_capacity(n * in_per));
    for (pdx, pdw) in partials {
        dw.iter_mut().zip(&pdw).for_each(|(a, b)| *a += b);
        if let (Some(acc), Some(p)) = (dx.as_mut(), pdx) {
            acc.extend_from_slice(&p);
        }
    }
    ConvGrads {
        dx,
        dw,
        db: channel_sums(dy, n, cout, g.cols()),
    }
}

/// Transposed convolution. `weight` is `[cin, cout, kh, kw]`; `g` describes the
/// output plane (`g.h × g.w`, `cout` channels) as the image and the input plane as columns.
pub fn deconv2d_forward(x: &[f32], n: usize, cin: usize, weight: &[f32], bias: Option<&[f32]>, g: &Window) -> Vec<f32> {
    let in_per = cin * g.cols();
    let out_per = g.channels * g.h * g.w;
    let mut out = vec![0.0f32; n * out_per];
    out.par_chunks_mut(out_per).enumerate().for_each(|(s, o)| {
        let xs = &x[s * in_per..(s + 1) * in_per];
        let mut cols = vec![0.0f32; g.rows() * g.cols()];
        gemm(g.rows(), cin, g.cols(), weight, true, xs, false, 0.0, &mut cols);
        col2im(&cols, g, o);
        if let Some(b) = bias {
            add_channel_bias(o, b, g.h * g.w);
        }
    });
    out
}

pub fn deconv2d_backward(x: &[f32], n: usize, cin: usize, weight: &[f32], dy: &[f32], g: &Window, need_dx: bool) -> ConvGrads {
    let in_per = cin * g.cols();
    let out_per = g.channels * g.h * g.w;
    let wlen = cin * g.rows();
    let partials: Vec<(Option<Vec<f32>>, Vec<f32>)> = (0..n)
        .into_par_iter()
        .map(|s| {
            let xs = &x[s * in_per..(s + 1) * in_per];
            let mut dcols = vec![0.0f32; g.rows() * g.cols()];
            im2col(&dy[s * out_per..(s + 1) * out_per], g, &mut dcols);
            let mut dw = vec![0.0f32; wlen];
            gemm(cin, g.cols(), g.rows(), xs, false, &dcols, true, 0.0, &mut dw);
            let dx = need_dx.then(|| {
                let mut dx = vec![0.0f32; in_per];
                gemm(cin, g.rows(), g.cols(), weight, false, &dcols, false, 0.0, &mut dx);
                dx
            });
            (dx, dw)
        })
        .collect();
    let mut dw = vec![0.0f32; wlen];
    let mut dx = need_dx.then(|| Vec::with_capacity(n * in_per));
    for (pdx, pdw) in partials {
        dw.iter_mut().zip(&pdw).for_each(|(a, b)| *a += b);
        if let (Some(acc), Some(p)) = (dx.as_mut(), pdx) {
            acc.extend_from_slice(&p);
        }
    }
    ConvGrads {
        dx,
        dw,
        db: channel_sums(dy, n, g.channels, g.h * g.w),
    }
}

fn add_channel_bias(out: &mut [f32], bias: &[f32], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

pub(crate) fn channel_sums(dy: &[f32], n: usize, c: usize, plane: usize) -> Vec<f32> {
    let mut db = vec![0.0f32; c];
    for s in 0..n {
        for (ch, acc) in db.iter_mut().enumerate() {
            let off = (s * c + ch) * plane;
            *acc += dy[off..off + plane].iter().sum::<f32>();
        }
    }
    db
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct sliding-window evaluation.
    fn conv_naive(x: &[f32], w: &[f32], g: &Window, cout: usize) -> Vec<f32> {
        let mut out = vec![0.0; cout * g.oh * g.ow];
        for co in 0..cout {
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let mut s = 0.0;
                    for ci in 0..g.channels {
                        for ki in 0..g.kh {
                            for kj in 0..g.kw {
                                let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                                let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < g.h && (ix as usize) < g.w {
                                    s += x[(ci * g.h + iy as usize) * g.w + ix as usize]
                                        * w[((co * g.channels + ci) * g.kh + ki) * g.kw + kj];
                                }
                            }
                        }
                    }
                    out[(co * g.oh + oy) * g.ow + ox] = s;
                }
            }
        }
        out
    }

    #[test]
    fn im2col_conv_matches_direct_evaluation() {
        for &(h, w, k, stride, pad) in &[(5, 7, 3, 1, 1), (6, 6, 3, 2, 1), (4, 5, 1, 1, 0), (8, 8, 4, 2, 1)] {
            let g = Window::conv(2, h, w, k, k, stride, pad).unwrap();
            let x: Vec<f32> = (0..2 * h * w).map(|v| ((v * 7 % 13) as f32) - 6.0).collect();
            let wt: Vec<f32> = (0..3 * 2 * k * k).map(|v| ((v * 5 % 11) as f32) * 0.1 - 0.5).collect();
            let got = conv2d_forward(&x, 1, &wt, None, 3, &g);
            let want = conv_naive(&x, &wt, &g, 3);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = Window::conv(2, 5, 6, 3, 3, 2, 1).unwrap();
        let x: Vec<f32> = (0..60).map(|v| (v as f32 * 0.37).sin()).collect();
        let c: Vec<f32> = (0..g.rows() * g.cols()).map(|v| (v as f32 * 0.11).cos()).collect();
        let mut cols = vec![0.0; c.len()];
        im2col(&x, &g, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&c, &g, &mut back);
        let lhs: f32 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f32 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-4);
    }
}

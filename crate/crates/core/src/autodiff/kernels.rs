//! Direct NCHW convolution kernels shared by the forward and backward passes.
//!
//! Each image is unfolded into a `[C·k·k, OH·OW]` column matrix so every
//! inner loop is a contiguous axpy or dot product.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_size(input: usize, k: usize, stride: usize, pad: usize) -> usize {
        (input + 2 * pad - k) / stride + 1
    }

    /// Output columns `ox` whose tap `kx` lands inside the input row.
    #[inline]
    fn ox_range(&self, kx: usize) -> (usize, usize) {
        let (s, p) = (self.stride as isize, self.pad as isize);
        let kx = kx as isize;
        let lo = ((p - kx).max(0) + s - 1) / s;
        let hi_excl = ((self.in_w as isize - 1 + p - kx).div_euclid(s) + 1).clamp(0, self.out_w as isize);
        (lo as usize, hi_excl.max(lo) as usize)
    }

    #[inline]
    fn in_row(&self, oy: usize, ky: usize) -> Option<usize> {
        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
        (iy >= 0 && (iy as usize) < self.in_h).then_some(iy as usize)
    }
}

/// Unfold one image `[C,H,W]` into `[C·k·k, OH·OW]`; out-of-bounds taps are zero.
fn im2col(x: &[f64], g: &ConvGeom, col: &mut [f64]) {
    let (ip, op) = (g.in_h * g.in_w, g.out_h * g.out_w);
    for c in 0..g.in_ch {
        let plane = &x[c * ip..][..ip];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = &mut col[((c * g.k + ky) * g.k + kx) * op..][..op];
                let (lo, hi) = g.ox_range(kx);
                let off = kx as isize - g.pad as isize;
                for oy in 0..g.out_h {
                    let dst = &mut row[oy * g.out_w..][..g.out_w];
                    let Some(iy) = g.in_row(oy, ky) else {
                        dst.fill(0.0);
                        continue;
                    };
                    let src = &plane[iy * g.in_w..][..g.in_w];
                    dst[..lo].fill(0.0);
                    dst[hi..].fill(0.0);
                    for (ox, d) in dst.iter_mut().enumerate().take(hi).skip(lo) {
                        *d = src[((ox * g.stride) as isize + off) as usize];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add `[C·k·k, OH·OW]` back onto `[C,H,W]`.
fn col2im(col: &[f64], g: &ConvGeom, x: &mut [f64]) {
    let (ip, op) = (g.in_h * g.in_w, g.out_h * g.out_w);
    for c in 0..g.in_ch {
        let plane = &mut x[c * ip..][..ip];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = &col[((c * g.k + ky) * g.k + kx) * op..][..op];
                let (lo, hi) = g.ox_range(kx);
                let off = kx as isize - g.pad as isize;
                for oy in 0..g.out_h {
                    let Some(iy) = g.in_row(oy, ky) else { continue };
                    let src = &row[oy * g.out_w..][..g.out_w];
                    let dst = &mut plane[iy * g.in_w..][..g.in_w];
                    for (ox, &v) in src.iter().enumerate().take(hi).skip(lo) {
                        dst[((ox * g.stride) as isize + off) as usize] += v;
                    }
                }
            }
        }
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (u, v) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += u[i] * v[i];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

/// `out[n,o] = Σ_c w[o,c] ⋆ x[n,c]` (no bias).
pub fn conv_forward(x: &[f64], w: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (ip, op, kk) = (g.in_h * g.in_w, g.out_h * g.out_w, g.in_ch * g.k * g.k);
    let mut out = vec![0.0; g.batch * g.out_ch * op];
    let mut col = vec![0.0; kk * op];
    for n in 0..g.batch {
        im2col(&x[n * g.in_ch * ip..][..g.in_ch * ip], g, &mut col);
        for o in 0..g.out_ch {
            let dst = &mut out[(n * g.out_ch + o) * op..][..op];
            for (r, &wv) in w[o * kk..][..kk].iter().enumerate() {
                axpy(wv, &col[r * op..][..op], dst);
            }
        }
    }
    out
}

/// Adjoint of [`conv_forward`] with respect to its input.
pub fn conv_backward_input(gout: &[f64], w: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (ip, op, kk) = (g.in_h * g.in_w, g.out_h * g.out_w, g.in_ch * g.k * g.k);
    let mut gin = vec![0.0; g.batch * g.in_ch * ip];
    let mut col = vec![0.0; kk * op];
    for n in 0..g.batch {
        col.fill(0.0);
        for o in 0..g.out_ch {
            let src = &gout[(n * g.out_ch + o) * op..][..op];
            for (r, &wv) in w[o * kk..][..kk].iter().enumerate() {
                axpy(wv, src, &mut col[r * op..][..op]);
            }
        }
        col2im(&col, g, &mut gin[n * g.in_ch * ip..][..g.in_ch * ip]);
    }
    gin
}

/// Gradient of [`conv_forward`] with respect to its weights.
pub fn conv_backward_weight(x: &[f64], gout: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (ip, op, kk) = (g.in_h * g.in_w, g.out_h * g.out_w, g.in_ch * g.k * g.k);
    let mut gw = vec![0.0; g.out_ch * kk];
    let mut col = vec![0.0; kk * op];
    for n in 0..g.batch {
        im2col(&x[n * g.in_ch * ip..][..g.in_ch * ip], g, &mut col);
        for o in 0..g.out_ch {
            let src = &gout[(n * g.out_ch + o) * op..][..op];
            for r in 0..kk {
                gw[o * kk + r] += dot(src, &col[r * op..][..op]);
            }
        }
    }
    gw
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[f64], w: &[f64], g: &ConvGeom) -> Vec<f64> {
        let mut out = vec![0.0; g.batch * g.out_ch * g.out_h * g.out_w];
        for n in 0..g.batch {
            for o in 0..g.out_ch {
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        let mut s = 0.0;
                        for c in 0..g.in_ch {
                            for ky in 0..g.k {
                                for kx in 0..g.k {
                                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                    let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                    if iy < 0 || ix < 0 || iy >= g.in_h as isize || ix >= g.in_w as isize {
                                        continue;
                                    }
                                    s += w[((o * g.in_ch + c) * g.k + ky) * g.k + kx]
                                        * x[((n * g.in_ch + c) * g.in_h + iy as usize) * g.in_w + ix as usize];
                                }
                            }
                        }
                        out[((n * g.out_ch + o) * g.out_h + oy) * g.out_w + ox] = s;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_naive_and_adjoint() {
        for &(h, stride, pad) in &[(7usize, 2usize, 1usize), (8, 2, 1), (6, 1, 1), (5, 1, 0)] {
            let g = ConvGeom {
                batch: 2,
                in_ch: 3,
                out_ch: 2,
                in_h: h,
                in_w: h + 1,
                out_h: ConvGeom::out_size(h, 3, stride, pad),
                out_w: ConvGeom::out_size(h + 1, 3, stride, pad),
                k: 3,
                stride,
                pad,
            };
            let x: Vec<f64> = (0..g.batch * g.in_ch * g.in_h * g.in_w).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
            let w: Vec<f64> = (0..g.out_ch * g.in_ch * 9).map(|i| ((i * 13 % 7) as f64) * 0.1 - 0.3).collect();
            let y = conv_forward(&x, &w, &g);
            assert_eq!(y, naive(&x, &w, &g));
            // <A x, u> == <x, A^T u>
            let u: Vec<f64> = (0..y.len()).map(|i| ((i * 7 % 5) as f64) - 2.0).collect();
            let lhs: f64 = y.iter().zip(&u).map(|(a, b)| a * b).sum();
            let at = conv_backward_input(&u, &w, &g);
            let rhs: f64 = x.iter().zip(&at).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-9);
            let gw = conv_backward_weight(&x, &u, &g);
            let rhs_w: f64 = w.iter().zip(&gw).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs_w).abs() < 1e-9);
        }
    }
}

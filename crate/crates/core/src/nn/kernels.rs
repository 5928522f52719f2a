//! Raw convolution kernels shared by the graph ops.

use super::tensor::{gemm, MatRef, Real};

/// Unfolds one `c x h x w` sample into a `(c*9) x (h*w)` patch matrix for a
/// 3x3 kernel with one pixel of zero padding.
pub(crate) fn im2col_3x3<T: Real>(x: &[T], c: usize, h: usize, w: usize, cols: &mut [T]) {
    let hw = h * w;
    debug_assert_eq!(cols.len(), c * 9 * hw);
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let dst = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col_3x3`]: scatters patch gradients back onto the image.
pub(crate) fn col2im_3x3_add<T: Real>(cols: &[T], c: usize, h: usize, w: usize, dx: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            for (d, s) in dst[..w - 1].iter_mut().zip(&src[1..]) {
                                *d += *s;
                            }
                        }
                        1 => {
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += *s;
                            }
                        }
                        _ => {
                            for (d, s) in dst[1..].iter_mut().zip(&src[..w - 1]) {
                                *d += *s;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) struct ConvDims {
    pub n: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
}

/// Same-padding 3x3 stride-1 convolution. Returns the output and, when
/// `keep_cols` is set, the patch matrices needed for the kernel gradient.
pub(crate) fn conv3x3_forward<T: Real>(
    x: &[T],
    kernel: &[T],
    bias: &[T],
    d: &ConvDims,
    keep_cols: bool,
) -> (Vec<T>, Vec<T>) {
    let hw = d.h * d.w;
    let k = d.c_in * 9;
    let mut out = vec![T::zero(); d.n * d.c_out * hw];
    let mut all_cols = if keep_cols { vec![T::zero(); d.n * k * hw] } else { Vec::new() };
    let mut scratch = if keep_cols { Vec::new() } else { vec![T::zero(); k * hw] };
    for n in 0..d.n {
        let xs = &x[n * d.c_in * hw..(n + 1) * d.c_in * hw];
        let cols: &mut [T] = if keep_cols { &mut all_cols[n * k * hw..(n + 1) * k * hw] } else { &mut scratch };
        im2col_3x3(xs, d.c_in, d.h, d.w, cols);
        let o = &mut out[n * d.c_out * hw..(n + 1) * d.c_out * hw];
        for (co, row) in o.chunks_exact_mut(hw).enumerate() {
            row.fill(bias[co]);
        }
        gemm(T::one(), MatRef::row_major(kernel, d.c_out, k), MatRef::row_major(cols, k, hw), T::one(), o);
    }
    (out, all_cols)
}

/// Gradients of [`conv3x3_forward`]. `dx` and `dk` are produced only when
/// requested; the bias gradient is always cheap so it is always returned.
pub(crate) fn conv3x3_backward<T: Real>(
    dy: &[T],
    kernel: &[T],
    cols: &[T],
    d: &ConvDims,
    want_dx: bool,
    want_dk: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>, Vec<T>) {
    let hw = d.h * d.w;
    let k = d.c_in * 9;
    let mut db = vec![T::zero(); d.c_out];
    for n in 0..d.n {
        for (co, row) in dy[n * d.c_out * hw..(n + 1) * d.c_out * hw].chunks_exact(hw).enumerate() {
            db[co] += row.iter().copied().sum::<T>();
        }
    }
    let dk = want_dk.then(|| {
        let mut dk = vec![T::zero(); d.c_out * k];
        for n in 0..d.n {
            let g = &dy[n * d.c_out * hw..(n + 1) * d.c_out * hw];
            let c = &cols[n * k * hw..(n + 1) * k * hw];
            gemm(T::one(), MatRef::row_major(g, d.c_out, hw), MatRef::transposed(c, hw, k), T::one(), &mut dk);
        }
        dk
    });
    let dx = want_dx.then(|| {
        let mut dx = vec![T::zero(); d.n * d.c_in * hw];
        let mut dcols = vec![T::zero(); k * hw];
        for n in 0..d.n {
            let g = &dy[n * d.c_out * hw..(n + 1) * d.c_out * hw];
            gemm(T::one(), MatRef::transposed(kernel, k, d.c_out), MatRef::row_major(g, d.c_out, hw), T::zero(), &mut dcols);
            col2im_3x3_add(&dcols, d.c_in, d.h, d.w, &mut dx[n * d.c_in * hw..(n + 1) * d.c_in * hw]);
        }
        dx
    });
    (dx, dk, db)
}

/// 2x2 stride-2 transposed convolution. The kernel is laid out
/// `c_in x c_out x 2 x 2`; `d.h`, `d.w` are the input extents.
pub(crate) fn convt2x2_forward<T: Real>(x: &[T], kernel: &[T], bias: &[T], d: &ConvDims) -> Vec<T> {
    let hw = d.h * d.w;
    let (oh, ow) = (2 * d.h, 2 * d.w);
    let co4 = d.c_out * 4;
    let mut out = vec![T::zero(); d.n * d.c_out * oh * ow];
    let mut taps = vec![T::zero(); co4 * hw];
    for n in 0..d.n {
        let xs = &x[n * d.c_in * hw..(n + 1) * d.c_in * hw];
        gemm(T::one(), MatRef::transposed(kernel, co4, d.c_in), MatRef::row_major(xs, d.c_in, hw), T::zero(), &mut taps);
        let o = &mut out[n * d.c_out * oh * ow..(n + 1) * d.c_out * oh * ow];
        for co in 0..d.c_out {
            let b = bias[co];
            for a in 0..2 {
                for bb in 0..2 {
                    let tap = &taps[(co * 4 + a * 2 + bb) * hw..][..hw];
                    for y in 0..d.h {
                        let orow = &mut o[(co * oh + 2 * y + a) * ow..][..ow];
                        for xx in 0..d.w {
                            orow[2 * xx + bb] = tap[y * d.w + xx] + b;
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn convt2x2_backward<T: Real>(
    dy: &[T],
    x: &[T],
    kernel: &[T],
    d: &ConvDims,
    want_dx: bool,
    want_dk: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>, Vec<T>) {
    let hw = d.h * d.w;
    let (oh, ow) = (2 * d.h, 2 * d.w);
    let co4 = d.c_out * 4;
    let mut db = vec![T::zero(); d.c_out];
    let mut dx = want_dx.then(|| vec![T::zero(); d.n * d.c_in * hw]);
    let mut dk = want_dk.then(|| vec![T::zero(); d.c_in * co4]);
    let mut dtaps = vec![T::zero(); co4 * hw];
    for n in 0..d.n {
        let g = &dy[n * d.c_out * oh * ow..(n + 1) * d.c_out * oh * ow];
        for co in 0..d.c_out {
            db[co] += g[co * oh * ow..(co + 1) * oh * ow].iter().copied().sum::<T>();
            for a in 0..2 {
                for bb in 0..2 {
                    let tap = &mut dtaps[(co * 4 + a * 2 + bb) * hw..][..hw];
                    for y in 0..d.h {
                        let grow = &g[(co * oh + 2 * y + a) * ow..][..ow];
                        for xx in 0..d.w {
                            tap[y * d.w + xx] = grow[2 * xx + bb];
                        }
                    }
                }
            }
        }
        if let Some(dx) = dx.as_mut() {
            gemm(
                T::one(),
                MatRef::row_major(kernel, d.c_in, co4),
                MatRef::row_major(&dtaps, co4, hw),
                T::zero(),
                &mut dx[n * d.c_in * hw..(n + 1) * d.c_in * hw],
            );
        }
        if let Some(dk) = dk.as_mut() {
            let xs = &x[n * d.c_in * hw..(n + 1) * d.c_in * hw];
            gemm(T::one(), MatRef::row_major(xs, d.c_in, hw), MatRef::transposed(&dtaps, hw, co4), T::one(), dk);
        }
    }
    (dx, dk, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let (c, h, w) = (2, 3, 4);
        let x: Vec<f64> = (0..c * h * w).map(|v| (v as f64 * 0.37).sin()).collect();
        let g: Vec<f64> = (0..c * 9 * h * w).map(|v| (v as f64 * 0.11).cos()).collect();
        let mut cols = vec![0.0; c * 9 * h * w];
        im2col_3x3(&x, c, h, w, &mut cols);
        let mut back = vec![0.0; c * h * w];
        col2im_3x3_add(&g, c, h, w, &mut back);
        let lhs: f64 = cols.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn single_column_images_work() {
        let x = [1.0f32, 2.0, 3.0];
        let mut cols = vec![0.0; 9 * 3];
        im2col_3x3(&x, 1, 3, 1, &mut cols);
        // center tap row reproduces the input
        assert_eq!(&cols[4 * 3..5 * 3], &x);
    }
}

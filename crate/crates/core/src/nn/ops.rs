//! Batched layer kernels. Every kernel works on per-example row-major slices.

use rayon::prelude::*;

use crate::array::Scalar;

/// Examples per work item when a backward pass reduces parameter gradients.
/// The partial sums are combined in chunk order, so results do not depend on thread count.
const GRAD_CHUNK: usize = 16;

pub(crate) fn dense_forward<T: Scalar>(x: &[T], w: &[T], b: &[T], n: usize, fan_in: usize, out: usize) -> Vec<T> {
    let mut y = vec![T::zero(); n * out];
    y.par_chunks_mut(out).zip(x.par_chunks(fan_in)).for_each(|(yr, xr)| {
        yr.copy_from_slice(b);
        for (k, &xv) in xr.iter().enumerate() {
            if xv == T::zero() {
                continue;
            }
            let wr = &w[k * out..(k + 1) * out];
            for (yj, &wj) in yr.iter_mut().zip(wr) {
                *yj = *yj + xv * wj;
            }
        }
    });
    y
}

/// Returns `(dx, dw, db)`.
pub(crate) fn dense_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    dy: &[T],
    n: usize,
    fan_in: usize,
    out: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut dx = vec![T::zero(); n * fan_in];
    dx.par_chunks_mut(fan_in).zip(dy.par_chunks(out)).for_each(|(dxr, dyr)| {
        for (k, d) in dxr.iter_mut().enumerate() {
            let wr = &w[k * out..(k + 1) * out];
            *d = wr.iter().zip(dyr).map(|(&a, &b)| a * b).sum();
        }
    });

    let partials: Vec<(Vec<T>, Vec<T>)> = x
        .par_chunks(GRAD_CHUNK * fan_in)
        .zip(dy.par_chunks(GRAD_CHUNK * out))
        .map(|(xc, dyc)| {
            let mut dw = vec![T::zero(); fan_in * out];
            let mut db = vec![T::zero(); out];
            for (xr, dyr) in xc.chunks(fan_in).zip(dyc.chunks(out)) {
                for (dbj, &g) in db.iter_mut().zip(dyr) {
                    *dbj = *dbj + g;
                }
                for (k, &xv) in xr.iter().enumerate() {
                    if xv == T::zero() {
                        continue;
                    }
                    let row = &mut dw[k * out..(k + 1) * out];
                    for (d, &g) in row.iter_mut().zip(dyr) {
                        *d = *d + xv * g;
                    }
                }
            }
            (dw, db)
        })
        .collect();
    let (dw, db) = sum_partials(partials, fan_in * out, out);
    (dx, dw, db)
}

fn sum_partials<T: Scalar>(partials: Vec<(Vec<T>, Vec<T>)>, wlen: usize, blen: usize) -> (Vec<T>, Vec<T>) {
    let mut dw = vec![T::zero(); wlen];
    let mut db = vec![T::zero(); blen];
    for (pw, pb) in partials {
        for (a, b) in dw.iter_mut().zip(pw) {
            *a = *a + b;
        }
        for (a, b) in db.iter_mut().zip(pb) {
            *a = *a + b;
        }
    }
    (dw, db)
}

/// Geometry of a valid stride-1 convolution.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kernel: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        self.height - self.kernel + 1
    }
    pub fn out_w(&self) -> usize {
        self.width - self.kernel + 1
    }
    pub fn in_len(&self) -> usize {
        self.channels * self.height * self.width
    }
    pub fn out_len(&self) -> usize {
        self.filters * self.out_h() * self.out_w()
    }
    /// Rows of the unfolded patch matrix, one per (channel, ky, kx).
    pub fn patch(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }
    fn positions(&self) -> usize {
        self.out_h() * self.out_w()
    }

    /// Fills `col` as a `(patch, positions)` matrix.
    fn im2col<T: Scalar>(&self, x: &[T], col: &mut [T]) {
        let (oh, ow, k) = (self.out_h(), self.out_w(), self.kernel);
        let p = self.positions();
        for c in 0..self.channels {
            for ky in 0..k {
                for kx in 0..k {
                    let r = (c * k + ky) * k + kx;
                    let dst = &mut col[r * p..(r + 1) * p];
                    for oy in 0..oh {
                        let src = &x[(c * self.height + oy + ky) * self.width + kx..];
                        dst[oy * ow..(oy + 1) * ow].copy_from_slice(&src[..ow]);
                    }
                }
            }
        }
    }

    fn col2im_add<T: Scalar>(&self, dcol: &[T], dx: &mut [T]) {
        let (oh, ow, k) = (self.out_h(), self.out_w(), self.kernel);
        let p = self.positions();
        for c in 0..self.channels {
            for ky in 0..k {
                for kx in 0..k {
                    let r = (c * k + ky) * k + kx;
                    let src = &dcol[r * p..(r + 1) * p];
                    for oy in 0..oh {
                        let base = (c * self.height + oy + ky) * self.width + kx;
                        for (d, &g) in dx[base..base + ow].iter_mut().zip(&src[oy * ow..(oy + 1) * ow]) {
                            *d = *d + g;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv_forward<T: Scalar>(g: ConvGeom, x: &[T], w: &[T], b: &[T], n: usize) -> Vec<T> {
    let p = g.positions();
    let patch = g.patch();
    let mut y = vec![T::zero(); n * g.out_len()];
    y.par_chunks_mut(g.out_len()).zip(x.par_chunks(g.in_len())).for_each_init(
        || vec![T::zero(); patch * p],
        |col, (yr, xr)| {
            g.im2col(xr, col);
            for f in 0..g.filters {
                let out = &mut yr[f * p..(f + 1) * p];
                out.iter_mut().for_each(|v| *v = b[f]);
                let wf = &w[f * patch..(f + 1) * patch];
                for (r, &wv) in wf.iter().enumerate() {
                    let cr = &col[r * p..(r + 1) * p];
                    for (o, &c) in out.iter_mut().zip(cr) {
                        *o = *o + wv * c;
                    }
                }
            }
        },
    );
    y
}

/// Returns `(dx, dw, db)`.
pub(crate) fn conv_backward<T: Scalar>(g: ConvGeom, x: &[T], w: &[T], dy: &[T], n: usize) -> (Vec<T>, Vec<T>, Vec<T>) {
    let p = g.positions();
    let patch = g.patch();
    let (in_len, out_len) = (g.in_len(), g.out_len());
    let mut dx = vec![T::zero(); n * in_len];
    let partials: Vec<(Vec<T>, Vec<T>)> = dx
        .par_chunks_mut(GRAD_CHUNK * in_len)
        .zip(x.par_chunks(GRAD_CHUNK * in_len))
        .zip(dy.par_chunks(GRAD_CHUNK * out_len))
        .map(|((dxc, xc), dyc)| {
            let mut dw = vec![T::zero(); g.filters * patch];
            let mut db = vec![T::zero(); g.filters];
            let mut col = vec![T::zero(); patch * p];
            let mut dcol = vec![T::zero(); patch * p];
            for ((dxr, xr), dyr) in dxc.chunks_mut(in_len).zip(xc.chunks(in_len)).zip(dyc.chunks(out_len)) {
                g.im2col(xr, &mut col);
                dcol.iter_mut().for_each(|v| *v = T::zero());
                for f in 0..g.filters {
                    let gf = &dyr[f * p..(f + 1) * p];
                    db[f] = db[f] + gf.iter().copied().sum::<T>();
                    let wf = &w[f * patch..(f + 1) * patch];
                    let dwf = &mut dw[f * patch..(f + 1) * patch];
                    for r in 0..patch {
                        let cr = &col[r * p..(r + 1) * p];
                        dwf[r] = dwf[r] + cr.iter().zip(gf).map(|(&a, &b)| a * b).sum::<T>();
                        let wv = wf[r];
                        if wv != T::zero() {
                            for (d, &gv) in dcol[r * p..(r + 1) * p].iter_mut().zip(gf) {
                                *d = *d + wv * gv;
                            }
                        }
                    }
                }
                g.col2im_add(&dcol, dxr);
            }
            (dw, db)
        })
        .collect();
    let (dw, db) = sum_partials(partials, g.filters * patch, g.filters);
    (dx, dw, db)
}

/// Returns pooled values and, per output element, the flat per-example input index of the max.
pub(crate) fn maxpool_forward<T: Scalar>(x: &[T], n: usize, shape: &[usize], size: usize) -> (Vec<T>, Vec<u32>) {
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let (oh, ow) = (h / size, w / size);
    let in_len = c * h * w;
    let out_len = c * oh * ow;
    let mut y = vec![T::zero(); n * out_len];
    let mut idx = vec![0u32; n * out_len];
    y.par_chunks_mut(out_len).zip(idx.par_chunks_mut(out_len)).zip(x.par_chunks(in_len)).for_each(|((yr, ir), xr)| {
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = (ch * h + oy * size) * w + ox * size;
                    for dy in 0..size {
                        for dx in 0..size {
                            let j = (ch * h + oy * size + dy) * w + ox * size + dx;
                            if xr[j] > xr[best] {
                                best = j;
                            }
                        }
                    }
                    let o = (ch * oh + oy) * ow + ox;
                    yr[o] = xr[best];
                    ir[o] = best as u32;
                }
            }
        }
    });
    (y, idx)
}

pub(crate) fn maxpool_backward<T: Scalar>(dy: &[T], idx: &[u32], n: usize, in_len: usize) -> Vec<T> {
    let out_len = dy.len() / n;
    let mut dx = vec![T::zero(); n * in_len];
    dx.par_chunks_mut(in_len).zip(dy.par_chunks(out_len).zip(idx.par_chunks(out_len))).for_each(|(dxr, (dyr, ir))| {
        for (&g, &j) in dyr.iter().zip(ir) {
            dxr[j as usize] = dxr[j as usize] + g;
        }
    });
    dx
}

pub(crate) fn softmax_rows<T: Scalar>(x: &[T], width: usize) -> Vec<T> {
    let mut y = x.to_vec();
    for row in y.chunks_mut(width) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    y
}

pub(crate) fn softmax_backward<T: Scalar>(y: &[T], dy: &[T], width: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); y.len()];
    for ((dxr, yr), dyr) in dx.chunks_mut(width).zip(y.chunks(width)).zip(dy.chunks(width)) {
        let dot: T = yr.iter().zip(dyr).map(|(&a, &b)| a * b).sum();
        for ((d, &yv), &g) in dxr.iter_mut().zip(yr).zip(dyr) {
            *d = yv * (g - dot);
        }
    }
    dx
}

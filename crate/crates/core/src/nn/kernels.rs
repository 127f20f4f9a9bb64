//! Batched dense, convolution and pooling kernels built on strided GEMM.
//!
//! Layouts: activations are `[N, C, H, W]` or `[N, D]`, conv kernels are
//! `[O, C, kh, kw]`, transposed-conv kernels are `[C_in, O, kh, kw]`.

use super::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(channels: usize, height: usize, width: usize, kh: usize, kw: usize, stride: usize) -> Self {
        Self {
            channels,
            height,
            width,
            kh,
            kw,
            stride,
            out_h: (height - kh) / stride + 1,
            out_w: (width - kw) / stride + 1,
        }
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }
}

pub fn im2col<T: Scalar>(img: &[T], g: &ConvGeom, cols: &mut [T]) {
    let p = g.col_cols();
    for c in 0..g.channels {
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = ((c * g.kh + i) * g.kw + j) * p;
                for oy in 0..g.out_h {
                    let src = (c * g.height + oy * g.stride + i) * g.width + j;
                    let dst = row + oy * g.out_w;
                    if g.stride == 1 {
                        cols[dst..dst + g.out_w].copy_from_slice(&img[src..src + g.out_w]);
                    } else {
                        for ox in 0..g.out_w {
                            cols[dst + ox] = img[src + ox * g.stride];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds columns back into the image.
pub fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, img: &mut [T]) {
    let p = g.col_cols();
    for c in 0..g.channels {
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = ((c * g.kh + i) * g.kw + j) * p;
                for oy in 0..g.out_h {
                    let dst = (c * g.height + oy * g.stride + i) * g.width + j;
                    let src = row + oy * g.out_w;
                    for ox in 0..g.out_w {
                        img[dst + ox * g.stride] += cols[src + ox];
                    }
                }
            }
        }
    }
}

/// `y[N, out] = x[N, in] * w[out, in]^T + b`
pub fn dense_forward<T: Scalar>(x: &[T], w: &[T], b: Option<&[T]>, n: usize, din: usize, dout: usize) -> Vec<T> {
    let mut y = vec![T::zero(); n * dout];
    if let Some(b) = b {
        for row in y.chunks_mut(dout) {
            row.copy_from_slice(b);
        }
    }
    let beta = if b.is_some() { T::one() } else { T::zero() };
    T::gemm(n, din, dout, T::one(), x, din, 1, w, 1, din, beta, &mut y, dout, 1);
    y
}

/// Returns `(dx, dw, db)` for [`dense_forward`].
#[allow(clippy::too_many_arguments)]
pub fn dense_backward<T: Scalar>(
    dy: &[T],
    x: &[T],
    w: &[T],
    n: usize,
    din: usize,
    dout: usize,
    need_dx: bool,
    need_dw: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>, Vec<T>) {
    let dx = need_dx.then(|| {
        let mut dx = vec![T::zero(); n * din];
        T::gemm(n, dout, din, T::one(), dy, dout, 1, w, din, 1, T::zero(), &mut dx, din, 1);
        dx
    });
    let dw = need_dw.then(|| {
        let mut dw = vec![T::zero(); dout * din];
        T::gemm(dout, n, din, T::one(), dy, 1, dout, x, din, 1, T::zero(), &mut dw, din, 1);
        dw
    });
    let mut db = vec![T::zero(); dout];
    for row in dy.chunks(dout) {
        for (a, &g) in db.iter_mut().zip(row) {
            *a += g;
        }
    }
    (dx, dw, db)
}

/// Valid cross-correlation. `w` is `[O, C, kh, kw]`.
pub fn conv_forward<T: Scalar>(x: &[T], w: &[T], b: Option<&[T]>, n: usize, out_ch: usize, g: &ConvGeom) -> Vec<T> {
    let p = g.col_cols();
    let r = g.col_rows();
    let mut cols = vec![T::zero(); r * p];
    let mut y = vec![T::zero(); n * out_ch * p];
    for s in 0..n {
        im2col(&x[s * g.image_len()..(s + 1) * g.image_len()], g, &mut cols);
        let ys = &mut y[s * out_ch * p..(s + 1) * out_ch * p];
        if let Some(b) = b {
            for (o, row) in ys.chunks_mut(p).enumerate() {
                row.fill(b[o]);
            }
        }
        let beta = if b.is_some() { T::one() } else { T::zero() };
        T::gemm(out_ch, r, p, T::one(), w, r, 1, &cols, p, 1, beta, ys, p, 1);
    }
    y
}

/// Returns `(dx, dw, db)` for [`conv_forward`].
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<T: Scalar>(
    dy: &[T],
    x: &[T],
    w: &[T],
    n: usize,
    out_ch: usize,
    g: &ConvGeom,
    need_dx: bool,
    need_dw: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>, Vec<T>) {
    let p = g.col_cols();
    let r = g.col_rows();
    let mut cols = vec![T::zero(); r * p];
    let mut dx = need_dx.then(|| vec![T::zero(); n * g.image_len()]);
    let mut dw = need_dw.then(|| vec![T::zero(); out_ch * r]);
    let mut db = vec![T::zero(); out_ch];
    for s in 0..n {
        let dys = &dy[s * out_ch * p..(s + 1) * out_ch * p];
        for (o, row) in dys.chunks(p).enumerate() {
            db[o] += row.iter().fold(T::zero(), |a, &v| a + v);
        }
        if let Some(dw) = dw.as_mut() {
            im2col(&x[s * g.image_len()..(s + 1) * g.image_len()], g, &mut cols);
            T::gemm(out_ch, p, r, T::one(), dys, p, 1, &cols, 1, p, T::one(), dw, r, 1);
        }
        if let Some(dx) = dx.as_mut() {
            T::gemm(r, out_ch, p, T::one(), w, 1, r, dys, p, 1, T::zero(), &mut cols, p, 1);
            col2im(&cols, g, &mut dx[s * g.image_len()..(s + 1) * g.image_len()]);
        }
    }
    (dx, dw, db)
}

/// Transposed convolution. `g` describes the equivalent forward conv whose
/// input is this op's output (`g.channels` = output channels) and whose output
/// is this op's input (`g.out_h × g.out_w`). `w` is `[C_in, O, kh, kw]`.
pub fn deconv_forward<T: Scalar>(x: &[T], w: &[T], b: Option<&[T]>, n: usize, in_ch: usize, g: &ConvGeom) -> Vec<T> {
    let p = g.col_cols();
    let r = g.col_rows();
    let mut cols = vec![T::zero(); r * p];
    let mut y = vec![T::zero(); n * g.image_len()];
    let plane = g.height * g.width;
    for s in 0..n {
        let xs = &x[s * in_ch * p..(s + 1) * in_ch * p];
        T::gemm(r, in_ch, p, T::one(), w, 1, r, xs, p, 1, T::zero(), &mut cols, p, 1);
        let ys = &mut y[s * g.image_len()..(s + 1) * g.image_len()];
        if let Some(b) = b {
            for (o, chan) in ys.chunks_mut(plane).enumerate() {
                chan.fill(b[o]);
            }
        }
        col2im(&cols, g, ys);
    }
    y
}

/// Returns `(dx, dw, db)` for [`deconv_forward`].
#[allow(clippy::too_many_arguments)]
pub fn deconv_backward<T: Scalar>(
    dy: &[T],
    x: &[T],
    w: &[T],
    n: usize,
    in_ch: usize,
    g: &ConvGeom,
    need_dx: bool,
    need_dw: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>, Vec<T>) {
    let p = g.col_cols();
    let r = g.col_rows();
    let plane = g.height * g.width;
    let mut cols = vec![T::zero(); r * p];
    let mut dx = need_dx.then(|| vec![T::zero(); n * in_ch * p]);
    let mut dw = need_dw.then(|| vec![T::zero(); in_ch * r]);
    let mut db = vec![T::zero(); g.channels];
    for s in 0..n {
        let dys = &dy[s * g.image_len()..(s + 1) * g.image_len()];
        for (o, chan) in dys.chunks(plane).enumerate() {
            db[o] += chan.iter().fold(T::zero(), |a, &v| a + v);
        }
        im2col(dys, g, &mut cols);
        if let Some(dx) = dx.as_mut() {
            T::gemm(in_ch, r, p, T::one(), w, r, 1, &cols, p, 1, T::zero(), &mut dx[s * in_ch * p..(s + 1) * in_ch * p], p, 1);
        }
        if let Some(dw) = dw.as_mut() {
            let xs = &x[s * in_ch * p..(s + 1) * in_ch * p];
            T::gemm(in_ch, p, r, T::one(), xs, p, 1, &cols, 1, p, T::one(), dw, r, 1);
        }
    }
    (dx, dw, db)
}

/// Non-overlapping max pooling; returns values and the flat argmax of each
/// window (first maximum in row-major order wins ties).
pub fn maxpool_forward<T: Scalar>(x: &[T], planes: usize, h: usize, w: usize, win: usize) -> (Vec<T>, Vec<u32>) {
    let (oh, ow) = (h / win, w / win);
    let mut y = Vec::with_capacity(planes * oh * ow);
    let mut arg = Vec::with_capacity(planes * oh * ow);
    for pl in 0..planes {
        let base = pl * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * win * w + ox * win;
                for i in 0..win {
                    for j in 0..win {
                        let idx = base + (oy * win + i) * w + ox * win + j;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                y.push(x[best]);
                arg.push(best as u32);
            }
        }
    }
    (y, arg)
}

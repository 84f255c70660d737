//! Minimal dense math for the tagger.
//!
//! Activations and gradients are `f64`; parameters are stored as `f32` (the
//! checkpoint format) and widened on use. Kernels are plain loops arranged so
//! the inner dimension is contiguous.

/// Row-major f64 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `x · w + b` with `w` stored row-major as `[in_dim, out_dim]` f32.
pub fn linear_forward(x: &Mat, w: &[f32], b: &[f32], out_dim: usize) -> Mat {
    let in_dim = x.cols;
    debug_assert_eq!(w.len(), in_dim * out_dim);
    debug_assert_eq!(b.len(), out_dim);
    let mut y = Mat::zeros(x.rows, out_dim);
    for i in 0..x.rows {
        let xr = x.row(i);
        let yr = y.row_mut(i);
        for (yv, &bv) in yr.iter_mut().zip(b) {
            *yv = bv as f64;
        }
        for (k, &xv) in xr.iter().enumerate() {
            let wr = &w[k * out_dim..(k + 1) * out_dim];
            for (yv, &wv) in yr.iter_mut().zip(wr) {
                *yv += xv * wv as f64;
            }
        }
    }
    y
}

/// Backward of [`linear_forward`]: accumulates `gw += xᵀ·dy`, `gb += Σ dy`
/// and returns `dx = dy · wᵀ`.
pub fn linear_backward(x: &Mat, w: &[f32], dy: &Mat, gw: &mut [f64], gb: &mut [f64]) -> Mat {
    let in_dim = x.cols;
    let out_dim = dy.cols;
    debug_assert_eq!(x.rows, dy.rows);
    debug_assert_eq!(gw.len(), in_dim * out_dim);
    debug_assert_eq!(gb.len(), out_dim);
    let mut dx = Mat::zeros(x.rows, in_dim);
    for i in 0..x.rows {
        let xr = x.row(i);
        let dyr = dy.row(i);
        for (gbv, &dv) in gb.iter_mut().zip(dyr) {
            *gbv += dv;
        }
        for (k, &xv) in xr.iter().enumerate() {
            let gwr = &mut gw[k * out_dim..(k + 1) * out_dim];
            for (gv, &dv) in gwr.iter_mut().zip(dyr) {
                *gv += xv * dv;
            }
        }
        let dxr = dx.row_mut(i);
        for (k, dxv) in dxr.iter_mut().enumerate() {
            let wr = &w[k * out_dim..(k + 1) * out_dim];
            let mut acc = 0.0;
            for (&dv, &wv) in dyr.iter().zip(wr) {
                acc += dv * wv as f64;
            }
            *dxv = acc;
        }
    }
    dx
}

/// In-place numerically stable softmax over each row.
pub fn softmax_rows(m: &mut Mat) {
    for i in 0..m.rows {
        let row = m.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Backward through a row softmax: `ds = a ⊙ (da − Σ a ⊙ da)` per row, where
/// `a` holds the forward probabilities.
pub fn softmax_rows_backward(a: &Mat, da: &Mat) -> Mat {
    debug_assert_eq!((a.rows, a.cols), (da.rows, da.cols));
    let mut ds = Mat::zeros(a.rows, a.cols);
    for i in 0..a.rows {
        let ar = a.row(i);
        let dar = da.row(i);
        let dot: f64 = ar.iter().zip(dar).map(|(&av, &dv)| av * dv).sum();
        for ((sv, &av), &dv) in ds.row_mut(i).iter_mut().zip(ar).zip(dar) {
            *sv = av * (dv - dot);
        }
    }
    ds
}

pub const LN_EPS: f64 = 1e-5;

/// Layer-norm forward state needed by the backward pass.
pub struct LnTape {
    /// Normalized activations before gain/bias.
    pub xhat: Mat,
    pub inv_std: Vec<f64>,
}

/// Per-row layer norm: `y = gain ⊙ (x − μ)/σ + bias`.
pub fn layer_norm_forward(x: &Mat, gain: &[f32], bias: &[f32]) -> (Mat, LnTape) {
    let d = x.cols;
    let mut y = Mat::zeros(x.rows, d);
    let mut xhat = Mat::zeros(x.rows, d);
    let mut inv_std = Vec::with_capacity(x.rows);
    for i in 0..x.rows {
        let xr = x.row(i);
        let mean = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let istd = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(istd);
        let xhr = xhat.row_mut(i);
        for (xh, &xv) in xhr.iter_mut().zip(xr) {
            *xh = (xv - mean) * istd;
        }
        for (((yv, &xh), &g), &b) in y.row_mut(i).iter_mut().zip(xhr.iter()).zip(gain).zip(bias) {
            *yv = g as f64 * xh + b as f64;
        }
    }
    (y, LnTape { xhat, inv_std })
}

/// Backward through layer norm. Accumulates gain/bias gradients and returns
/// `dx`.
pub fn layer_norm_backward(
    dy: &Mat,
    tape: &LnTape,
    gain: &[f32],
    g_gain: &mut [f64],
    g_bias: &mut [f64],
) -> Mat {
    let d = dy.cols;
    let mut dx = Mat::zeros(dy.rows, d);
    for i in 0..dy.rows {
        let dyr = dy.row(i);
        let xhr = tape.xhat.row(i);
        let istd = tape.inv_std[i];
        for ((gg, &dv), &xh) in g_gain.iter_mut().zip(dyr).zip(xhr) {
            *gg += dv * xh;
        }
        for (gb, &dv) in g_bias.iter_mut().zip(dyr) {
            *gb += dv;
        }
        // dxhat = dy ⊙ gain
        let mut sum_dxhat = 0.0;
        let mut sum_dxhat_xhat = 0.0;
        let dxr = dx.row_mut(i);
        for ((dxv, &dv), &g) in dxr.iter_mut().zip(dyr).zip(gain) {
            let dxh = dv * g as f64;
            *dxv = dxh;
            sum_dxhat += dxh;
        }
        for (dxv, &xh) in dxr.iter().zip(xhr) {
            sum_dxhat_xhat += dxv * xh;
        }
        let n = d as f64;
        for (dxv, &xh) in dxr.iter_mut().zip(xhr) {
            *dxv = istd * (*dxv - sum_dxhat / n - xh * sum_dxhat_xhat / n);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh form.
#[inline]
pub fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_A * u * u * u)).tanh())
}

/// Derivative of [`gelu`].
#[inline]
pub fn gelu_prime(u: f64) -> f64 {
    let inner = GELU_C * (u + GELU_A * u * u * u);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * u * u)
}

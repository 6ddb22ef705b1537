//! 2D convolution and transposed convolution on single-sample `(C, H, W)`
//! tensors, with analytic backward passes.
//!
//! Both directions are built from an `im2col`/`col2im` pair that are exact
//! adjoints of each other: convolution is `W · im2col(x)` and transposed
//! convolution is `col2im(Wᵀ · x)`, so the backward passes fall out of the
//! same two primitives.

use ndarray::{Array1, Array2, Array3, Array4, Axis};

use super::gemm::matmul;

pub fn conv_out_size(in_size: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (in_size + 2 * pad - kernel) / stride + 1
}

pub fn conv_transpose_out_size(in_size: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (in_size - 1) * stride + kernel - 2 * pad
}

/// Unfold `x` into a `(C·k·k, out_h·out_w)` patch matrix (zero padding).
pub fn im2col(x: &Array3<f64>, kernel: usize, stride: usize, pad: usize) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let oh = conv_out_size(h, kernel, stride, pad);
    let ow = conv_out_size(w, kernel, stride, pad);
    let mut cols = Array2::<f64>::zeros((c * kernel * kernel, oh * ow));
    let xs = x.as_slice().expect("conv input must be standard layout");
    let cs = cols.as_slice_mut().unwrap();
    for ci in 0..c {
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (ci * kernel + ky) * kernel + kx;
                let rbase = row * oh * ow;
                let (ox_lo, ox_hi) = valid_out_range(w, kernel, stride, pad, kx, ow);
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let in_row = (ci * h + iy as usize) * w;
                    let out_row = rbase + oy * ow;
                    if stride == 1 {
                        let ix0 = (ox_lo + kx) as isize - pad as isize;
                        let len = ox_hi - ox_lo;
                        cs[out_row + ox_lo..out_row + ox_hi]
                            .copy_from_slice(&xs[in_row + ix0 as usize..in_row + ix0 as usize + len]);
                    } else {
                        for ox in ox_lo..ox_hi {
                            let ix = ox * stride + kx - pad;
                            cs[out_row + ox] = xs[in_row + ix];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: fold a patch matrix back onto a `(C, H, W)` grid,
/// accumulating overlapping contributions.
pub fn col2im(
    cols: &Array2<f64>,
    c: usize,
    h: usize,
    w: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Array3<f64> {
    let oh = conv_out_size(h, kernel, stride, pad);
    let ow = conv_out_size(w, kernel, stride, pad);
    debug_assert_eq!(cols.dim(), (c * kernel * kernel, oh * ow));
    let mut x = Array3::<f64>::zeros((c, h, w));
    let xs = x.as_slice_mut().unwrap();
    let cs = cols.as_slice().expect("col2im input must be standard layout");
    for ci in 0..c {
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (ci * kernel + ky) * kernel + kx;
                let rbase = row * oh * ow;
                let (ox_lo, ox_hi) = valid_out_range(w, kernel, stride, pad, kx, ow);
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let in_row = (ci * h + iy as usize) * w;
                    let out_row = rbase + oy * ow;
                    for ox in ox_lo..ox_hi {
                        let ix = ox * stride + kx - pad;
                        xs[in_row + ix] += cs[out_row + ox];
                    }
                }
            }
        }
    }
    x
}

/// Output columns for which `ox·stride + kx − pad` lands inside `[0, w)`.
fn valid_out_range(
    w: usize,
    _kernel: usize,
    stride: usize,
    pad: usize,
    kx: usize,
    ow: usize,
) -> (usize, usize) {
    let lo = if pad > kx {
        (pad - kx).div_ceil(stride)
    } else {
        0
    };
    let hi = if w + pad > kx {
        (((w + pad - kx - 1) / stride) + 1).min(ow)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// Convolution parameters. Weight layout is `(C_out, C_in, k, k)`.
#[derive(Debug, Clone)]
pub struct ConvParams {
    pub weight: Array4<f64>,
    pub bias: Array1<f64>,
    pub stride: usize,
    pub pad: usize,
}

impl ConvParams {
    pub fn zeros(c_out: usize, c_in: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        Self {
            weight: Array4::zeros((c_out, c_in, kernel, kernel)),
            bias: Array1::zeros(c_out),
            stride,
            pad,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Array4::zeros(self.weight.dim()),
            bias: Array1::zeros(self.bias.dim()),
            stride: self.stride,
            pad: self.pad,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dim().0
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dim().1
    }

    pub fn kernel(&self) -> usize {
        self.weight.dim().2
    }

    pub fn forward(&self, x: &Array3<f64>) -> Array3<f64> {
        let (co, ci, k, _) = self.weight.dim();
        let (xc, h, w) = x.dim();
        assert_eq!(xc, ci, "conv input channels");
        let oh = conv_out_size(h, k, self.stride, self.pad);
        let ow = conv_out_size(w, k, self.stride, self.pad);
        let cols = im2col(x, k, self.stride, self.pad);
        let wmat = self
            .weight
            .view()
            .into_shape_with_order((co, ci * k * k))
            .unwrap();
        let mut y = matmul(wmat, cols.view());
        for (mut row, &b) in y.axis_iter_mut(Axis(0)).zip(self.bias.iter()) {
            row.mapv_inplace(|v| v + b);
        }
        y.into_shape_with_order((co, oh, ow)).unwrap()
    }

    /// Returns the input gradient and accumulates parameter gradients.
    pub fn backward(&self, x: &Array3<f64>, gy: &Array3<f64>, grads: &mut ConvParams) -> Array3<f64> {
        let (co, ci, k, _) = self.weight.dim();
        let (_, h, w) = x.dim();
        let (gc, goh, gow) = gy.dim();
        assert_eq!(gc, co, "conv grad channels");
        let gy_mat = gy.view().into_shape_with_order((co, goh * gow)).unwrap();
        grads.bias.scaled_add(1.0, &gy_mat.sum_axis(Axis(1)));
        let cols = im2col(x, k, self.stride, self.pad);
        let gw = matmul(gy_mat, cols.t());
        grads
            .weight
            .scaled_add(1.0, &gw.into_shape_with_order((co, ci, k, k)).unwrap());
        let wmat = self
            .weight
            .view()
            .into_shape_with_order((co, ci * k * k))
            .unwrap();
        let gcols = matmul(wmat.t(), gy_mat);
        col2im(&gcols, ci, h, w, k, self.stride, self.pad)
    }
}

/// Transposed-convolution parameters. Weight layout is `(C_in, C_out, k, k)`.
#[derive(Debug, Clone)]
pub struct ConvTransposeParams {
    pub weight: Array4<f64>,
    pub bias: Array1<f64>,
    pub stride: usize,
    pub pad: usize,
}

impl ConvTransposeParams {
    pub fn zeros(c_in: usize, c_out: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        Self {
            weight: Array4::zeros((c_in, c_out, kernel, kernel)),
            bias: Array1::zeros(c_out),
            stride,
            pad,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Array4::zeros(self.weight.dim()),
            bias: Array1::zeros(self.bias.dim()),
            stride: self.stride,
            pad: self.pad,
        }
    }

    pub fn forward(&self, x: &Array3<f64>) -> Array3<f64> {
        let (ci, co, k, _) = self.weight.dim();
        let (xc, h, w) = x.dim();
        assert_eq!(xc, ci, "conv-transpose input channels");
        let oh = conv_transpose_out_size(h, k, self.stride, self.pad);
        let ow = conv_transpose_out_size(w, k, self.stride, self.pad);
        let wmat = self
            .weight
            .view()
            .into_shape_with_order((ci, co * k * k))
            .unwrap();
        let xmat = x.view().into_shape_with_order((ci, h * w)).unwrap();
        let cols = matmul(wmat.t(), xmat);
        let mut y = col2im(&cols, co, oh, ow, k, self.stride, self.pad);
        for (mut plane, &b) in y.axis_iter_mut(Axis(0)).zip(self.bias.iter()) {
            plane.mapv_inplace(|v| v + b);
        }
        y
    }

    pub fn backward(
        &self,
        x: &Array3<f64>,
        gy: &Array3<f64>,
        grads: &mut ConvTransposeParams,
    ) -> Array3<f64> {
        let (ci, co, k, _) = self.weight.dim();
        let (_, h, w) = x.dim();
        for (gslot, plane) in grads.bias.iter_mut().zip(gy.axis_iter(Axis(0))) {
            *gslot += plane.sum();
        }
        let gcols = im2col(gy, k, self.stride, self.pad);
        let xmat = x.view().into_shape_with_order((ci, h * w)).unwrap();
        let gw = matmul(xmat, gcols.t());
        grads
            .weight
            .scaled_add(1.0, &gw.into_shape_with_order((ci, co, k, k)).unwrap());
        let wmat = self
            .weight
            .view()
            .into_shape_with_order((ci, co * k * k))
            .unwrap();
        let gx = matmul(wmat, gcols.view());
        gx.into_shape_with_order((ci, h, w)).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use approx::AbsDiffEq;

    fn seq_input(c: usize, h: usize, w: usize) -> Array3<f64> {
        Array3::from_shape_fn((c, h, w), |(ci, y, x)| {
            ((ci * 131 + y * 17 + x * 5) % 23) as f64 * 0.21 - 2.0
        })
    }

    /// Direct nested-loop convolution used as the oracle.
    fn conv_reference(x: &Array3<f64>, p: &ConvParams) -> Array3<f64> {
        let (co, ci, k, _) = p.weight.dim();
        let (_, h, w) = x.dim();
        let oh = conv_out_size(h, k, p.stride, p.pad);
        let ow = conv_out_size(w, k, p.stride, p.pad);
        let mut y = Array3::<f64>::zeros((co, oh, ow));
        for o in 0..co {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = p.bias[o];
                    for i in 0..ci {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * p.stride + ky) as isize - p.pad as isize;
                                let ix = (ox * p.stride + kx) as isize - p.pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += p.weight[[o, i, ky, kx]]
                                        * x[[i, iy as usize, ix as usize]];
                                }
                            }
                        }
                    }
                    y[[o, oy, ox]] = acc;
                }
            }
        }
        y
    }

    fn filled_conv(co: usize, ci: usize, k: usize, stride: usize, pad: usize) -> ConvParams {
        let mut p = ConvParams::zeros(co, ci, k, stride, pad);
        for (i, v) in p.weight.iter_mut().enumerate() {
            *v = ((i * 7 + 3) % 19) as f64 * 0.11 - 1.0;
        }
        for (i, v) in p.bias.iter_mut().enumerate() {
            *v = i as f64 * 0.3 - 0.5;
        }
        p
    }

    #[test]
    fn forward_matches_reference_stride1() {
        let p = filled_conv(4, 3, 3, 1, 1);
        let x = seq_input(3, 7, 9);
        let got = p.forward(&x);
        let want = conv_reference(&x, &p);
        assert!(got.abs_diff_eq(&want, 1e-12), "stride-1 conv mismatch");
    }

    #[test]
    fn forward_matches_reference_stride2() {
        let p = filled_conv(5, 2, 4, 2, 1);
        let x = seq_input(2, 8, 10);
        let got = p.forward(&x);
        let want = conv_reference(&x, &p);
        assert!(got.abs_diff_eq(&want, 1e-12), "stride-2 conv mismatch");
    }

    #[test]
    fn forward_matches_reference_7x7_pad3() {
        let p = filled_conv(2, 1, 7, 1, 3);
        let x = seq_input(1, 12, 12);
        let got = p.forward(&x);
        let want = conv_reference(&x, &p);
        assert!(got.abs_diff_eq(&want, 1e-12), "7x7 conv mismatch");
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), c> == <x, col2im(c)> for arbitrary x, c.
        let x = seq_input(2, 6, 5);
        let (k, stride, pad) = (3, 2, 1);
        let cols = im2col(&x, k, stride, pad);
        let c = Array2::from_shape_fn(cols.dim(), |(i, j)| ((i * 13 + j * 3) % 11) as f64 - 5.0);
        let lhs: f64 = (&cols * &c).sum();
        let folded = col2im(&c, 2, 6, 5, k, stride, pad);
        let rhs: f64 = (&x * &folded).sum();
        assert!((lhs - rhs).abs() < 1e-9, "adjoint identity violated: {lhs} vs {rhs}");
    }

    #[test]
    fn conv_transpose_is_adjoint_of_conv() {
        // <conv(x), y> == <x, convT(y)> when convT reuses conv's weight
        // transposed, with zero biases.
        let mut p = filled_conv(4, 3, 4, 2, 1);
        p.bias.fill(0.0);
        let x = seq_input(3, 8, 8);
        let y = seq_input(4, 4, 4);
        let cx = p.forward(&x);
        let lhs: f64 = (&cx * &y).sum();

        let mut t = ConvTransposeParams::zeros(4, 3, 4, 2, 1);
        t.weight.assign(&p.weight);
        let ty = t.forward(&y);
        let rhs: f64 = (&x * &ty).sum();
        assert!((lhs - rhs).abs() < 1e-9, "conv/convT adjoint violated: {lhs} vs {rhs}");
    }

    #[test]
    fn conv_transpose_upsamples_shape() {
        let t = ConvTransposeParams::zeros(3, 2, 4, 2, 1);
        let x = seq_input(3, 8, 8);
        let y = t.forward(&x);
        assert_eq!(y.dim(), (2, 16, 16));
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let p = filled_conv(3, 2, 3, 2, 1);
        let x = seq_input(2, 6, 6);
        let gy_shape = p.forward(&x).dim();
        let gy = Array3::from_shape_fn(gy_shape, |(c, y, x)| ((c + 2 * y + 3 * x) % 5) as f64 - 2.0);
        let mut grads = p.zeros_like();
        let gx = p.backward(&x, &gy, &mut grads);

        let loss = |p: &ConvParams, x: &Array3<f64>| (&p.forward(x) * &gy).sum();
        let eps = 1e-5;

        // input gradient
        for idx in [(0, 0, 0), (1, 3, 2), (0, 5, 5), (1, 2, 4)] {
            let mut xp = x.clone();
            xp[idx] += eps;
            let mut xm = x.clone();
            xm[idx] -= eps;
            let fd = (loss(&p, &xp) - loss(&p, &xm)) / (2.0 * eps);
            assert!((fd - gx[idx]).abs() < 1e-6, "gx[{idx:?}]: fd={fd} analytic={}", gx[idx]);
        }
        // weight gradient
        for idx in [(0, 0, 0, 0), (2, 1, 2, 2), (1, 0, 1, 2)] {
            let mut pp = p.clone();
            pp.weight[idx] += eps;
            let mut pm = p.clone();
            pm.weight[idx] -= eps;
            let fd = (loss(&pp, &x) - loss(&pm, &x)) / (2.0 * eps);
            assert!(
                (fd - grads.weight[idx]).abs() < 1e-6,
                "gw[{idx:?}]: fd={fd} analytic={}",
                grads.weight[idx]
            );
        }
        // bias gradient
        for c in 0..3 {
            let mut pp = p.clone();
            pp.bias[c] += eps;
            let mut pm = p.clone();
            pm.bias[c] -= eps;
            let fd = (loss(&pp, &x) - loss(&pm, &x)) / (2.0 * eps);
            assert!((fd - grads.bias[c]).abs() < 1e-6);
        }
    }

    #[test]
    fn conv_transpose_backward_matches_finite_differences() {
        let mut t = ConvTransposeParams::zeros(3, 2, 4, 2, 1);
        for (i, v) in t.weight.iter_mut().enumerate() {
            *v = ((i * 11 + 5) % 17) as f64 * 0.13 - 1.0;
        }
        for (i, v) in t.bias.iter_mut().enumerate() {
            *v = 0.2 * i as f64 - 0.1;
        }
        let x = seq_input(3, 5, 5);
        let gy_shape = t.forward(&x).dim();
        let gy = Array3::from_shape_fn(gy_shape, |(c, y, x)| ((c + y + x) % 3) as f64 - 1.0);
        let mut grads = t.zeros_like();
        let gx = t.backward(&x, &gy, &mut grads);

        let loss = |t: &ConvTransposeParams, x: &Array3<f64>| (&t.forward(x) * &gy).sum();
        let eps = 1e-5;
        for idx in [(0, 0, 0), (2, 4, 4), (1, 2, 3)] {
            let mut xp = x.clone();
            xp[idx] += eps;
            let mut xm = x.clone();
            xm[idx] -= eps;
            let fd = (loss(&t, &xp) - loss(&t, &xm)) / (2.0 * eps);
            assert!((fd - gx[idx]).abs() < 1e-6);
        }
        for idx in [(0, 0, 0, 0), (2, 1, 3, 3), (1, 1, 2, 0)] {
            let mut tp = t.clone();
            tp.weight[idx] += eps;
            let mut tm = t.clone();
            tm.weight[idx] -= eps;
            let fd = (loss(&tp, &x) - loss(&tm, &x)) / (2.0 * eps);
            assert!((fd - grads.weight[idx]).abs() < 1e-6);
        }
    }
}

//! Forward and adjoint kernels for the layers the predictor uses.
//!
//! Convolutions are cross-correlations over `[C, H, W]` tensors with
//! `[Co, Ci, Kh, Kw]` kernels. The stride-1 paths are written as
//! contiguous-row AXPY/dot loops; they carry essentially all of the
//! training cost, so keep them allocation-free.

use crate::error::{Error, Result};
use crate::nn::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

pub(crate) struct ConvGeometry {
    pub ci: usize,
    pub h: usize,
    pub w: usize,
    pub co: usize,
    pub kh: usize,
    pub kw: usize,
    pub oh: usize,
    pub ow: usize,
    pub pad_h: isize,
    pub pad_w: isize,
}

pub(crate) fn conv_geometry(
    input_shape: &[usize],
    kernel_shape: &[usize],
    stride: usize,
    padding: Padding,
) -> Result<ConvGeometry> {
    if input_shape.len() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "conv input must be [C, H, W], got {input_shape:?}"
        )));
    }
    if kernel_shape.len() != 4 {
        return Err(Error::ShapeMismatch(format!(
            "conv kernel must be [Co, Ci, Kh, Kw], got {kernel_shape:?}"
        )));
    }
    if stride == 0 {
        return Err(Error::InvalidParameter("conv stride must be >= 1".into()));
    }
    let (ci, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
    let (co, kci, kh, kw) = (kernel_shape[0], kernel_shape[1], kernel_shape[2], kernel_shape[3]);
    if kci != ci {
        return Err(Error::ShapeMismatch(format!(
            "kernel expects {kci} input channels, input has {ci}"
        )));
    }
    let (oh, ow, pad_h, pad_w) = match padding {
        Padding::Valid => {
            if kh > h || kw > w {
                return Err(Error::ShapeMismatch(format!(
                    "kernel {kh}x{kw} larger than input {h}x{w}"
                )));
            }
            ((h - kh) / stride + 1, (w - kw) / stride + 1, 0isize, 0isize)
        }
        Padding::Same => {
            let oh = h.div_ceil(stride);
            let ow = w.div_ceil(stride);
            let pad_total_h = ((oh - 1) * stride + kh).saturating_sub(h);
            let pad_total_w = ((ow - 1) * stride + kw).saturating_sub(w);
            (oh, ow, (pad_total_h / 2) as isize, (pad_total_w / 2) as isize)
        }
    };
    Ok(ConvGeometry { ci, h, w, co, kh, kw, oh, ow, pad_h, pad_w })
}

/// 2D cross-correlation.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let g = conv_geometry(input.shape(), kernel.shape(), stride, padding)?;
    let mut out = Tensor::zeros(&[g.co, g.oh, g.ow]);
    let id = input.data();
    let kd = kernel.data();
    let od = out.data_mut();

    for co in 0..g.co {
        for ci in 0..g.ci {
            let in_base = ci * g.h * g.w;
            for kh in 0..g.kh {
                for kw in 0..g.kw {
                    let wv = kd[((co * g.ci + ci) * g.kh + kh) * g.kw + kw];
                    if stride == 1 {
                        let dy = kh as isize - g.pad_h;
                        let dx = kw as isize - g.pad_w;
                        for oh in 0..g.oh {
                            let ih = oh as isize + dy;
                            if ih < 0 || ih >= g.h as isize {
                                continue;
                            }
                            let (ow0, ow1) = row_span(g.ow, g.w, dx);
                            if ow0 >= ow1 {
                                continue;
                            }
                            let src = in_base + ih as usize * g.w + (ow0 as isize + dx) as usize;
                            let dst = (co * g.oh + oh) * g.ow + ow0;
                            let n = ow1 - ow0;
                            let (srow, drow) = (&id[src..src + n], &mut od[dst..dst + n]);
                            for i in 0..n {
                                drow[i] += wv * srow[i];
                            }
                        }
                    } else {
                        for oh in 0..g.oh {
                            let ih = (oh * stride) as isize + kh as isize - g.pad_h;
                            if ih < 0 || ih >= g.h as isize {
                                continue;
                            }
                            let irow = in_base + ih as usize * g.w;
                            let orow = (co * g.oh + oh) * g.ow;
                            for ow in 0..g.ow {
                                let iw = (ow * stride) as isize + kw as isize - g.pad_w;
                                if iw < 0 || iw >= g.w as isize {
                                    continue;
                                }
                                od[orow + ow] += wv * id[irow + iw as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// For stride 1: output columns whose input column `ow + dx` stays in range.
fn row_span(ow_len: usize, w: usize, dx: isize) -> (usize, usize) {
    let ow0 = if dx < 0 { (-dx) as usize } else { 0 };
    let ow1 = if dx > 0 { w.saturating_sub(dx as usize) } else { w }.min(ow_len);
    (ow0.min(ow_len), ow1)
}

/// Adjoint of [`conv2d_forward`] with respect to the input.
pub(crate) fn conv2d_backward_input<T: Scalar>(
    grad_out: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    padding: Padding,
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    let g = conv_geometry(input_shape, kernel.shape(), stride, padding)?;
    if grad_out.shape() != [g.co, g.oh, g.ow] {
        return Err(Error::ShapeMismatch(format!(
            "cotangent shape {:?} does not match conv output [{}, {}, {}]",
            grad_out.shape(),
            g.co,
            g.oh,
            g.ow
        )));
    }
    let mut grad_in = Tensor::zeros(input_shape);
    let gid = grad_in.data_mut();
    let kd = kernel.data();
    let god = grad_out.data();

    for co in 0..g.co {
        for ci in 0..g.ci {
            let in_base = ci * g.h * g.w;
            for kh in 0..g.kh {
                for kw in 0..g.kw {
                    let wv = kd[((co * g.ci + ci) * g.kh + kh) * g.kw + kw];
                    if stride == 1 {
                        let dy = kh as isize - g.pad_h;
                        let dx = kw as isize - g.pad_w;
                        for oh in 0..g.oh {
                            let ih = oh as isize + dy;
                            if ih < 0 || ih >= g.h as isize {
                                continue;
                            }
                            let (ow0, ow1) = row_span(g.ow, g.w, dx);
                            if ow0 >= ow1 {
                                continue;
                            }
                            let dst = in_base + ih as usize * g.w + (ow0 as isize + dx) as usize;
                            let src = (co * g.oh + oh) * g.ow + ow0;
                            let n = ow1 - ow0;
                            let (srow, drow) = (&god[src..src + n], &mut gid[dst..dst + n]);
                            for i in 0..n {
                                drow[i] += wv * srow[i];
                            }
                        }
                    } else {
                        for oh in 0..g.oh {
                            let ih = (oh * stride) as isize + kh as isize - g.pad_h;
                            if ih < 0 || ih >= g.h as isize {
                                continue;
                            }
                            let irow = in_base + ih as usize * g.w;
                            let orow = (co * g.oh + oh) * g.ow;
                            for ow in 0..g.ow {
                                let iw = (ow * stride) as isize + kw as isize - g.pad_w;
                                if iw < 0 || iw >= g.w as isize {
                                    continue;
                                }
                                gid[irow + iw as usize] += wv * god[orow + ow];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(grad_in)
}

/// Adjoint of [`conv2d_forward`] with respect to the kernel.
pub(crate) fn conv2d_backward_kernel<T: Scalar>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    stride: usize,
    padding: Padding,
    kernel_shape: &[usize],
) -> Result<Tensor<T>> {
    let g = conv_geometry(input.shape(), kernel_shape, stride, padding)?;
    if grad_out.shape() != [g.co, g.oh, g.ow] {
        return Err(Error::ShapeMismatch(format!(
            "cotangent shape {:?} does not match conv output [{}, {}, {}]",
            grad_out.shape(),
            g.co,
            g.oh,
            g.ow
        )));
    }
    let mut grad_k = Tensor::zeros(kernel_shape);
    let gkd = grad_k.data_mut();
    let id = input.data();
    let god = grad_out.data();

    for co in 0..g.co {
        for ci in 0..g.ci {
            let in_base = ci * g.h * g.w;
            for kh in 0..g.kh {
                for kw in 0..g.kw {
                    let mut acc = T::zero();
                    if stride == 1 {
                        let dy = kh as isize - g.pad_h;
                        let dx = kw as isize - g.pad_w;
                        for oh in 0..g.oh {
                            let ih = oh as isize + dy;
                            if ih < 0 || ih >= g.h as isize {
                                continue;
                            }
                            let (ow0, ow1) = row_span(g.ow, g.w, dx);
                            if ow0 >= ow1 {
                                continue;
                            }
                            let src = in_base + ih as usize * g.w + (ow0 as isize + dx) as usize;
                            let gsrc = (co * g.oh + oh) * g.ow + ow0;
                            let n = ow1 - ow0;
                            let (irow, grow) = (&id[src..src + n], &god[gsrc..gsrc + n]);
                            for i in 0..n {
                                acc += irow[i] * grow[i];
                            }
                        }
                    } else {
                        for oh in 0..g.oh {
                            let ih = (oh * stride) as isize + kh as isize - g.pad_h;
                            if ih < 0 || ih >= g.h as isize {
                                continue;
                            }
                            let irow = in_base + ih as usize * g.w;
                            let orow = (co * g.oh + oh) * g.ow;
                            for ow in 0..g.ow {
                                let iw = (ow * stride) as isize + kw as isize - g.pad_w;
                                if iw < 0 || iw >= g.w as isize {
                                    continue;
                                }
                                acc += id[irow + iw as usize] * god[orow + ow];
                            }
                        }
                    }
                    gkd[((co * g.ci + ci) * g.kh + kh) * g.kw + kw] = acc;
                }
            }
        }
    }
    Ok(grad_k)
}

/// Padding under which a transpose convolution is the exact adjoint of the
/// corresponding forward convolution of the same stride.
pub(crate) fn transpose_padding(stride: usize) -> Padding {
    if stride == 1 {
        Padding::Same
    } else {
        Padding::Valid
    }
}

/// Transposed convolution: the adjoint map of the matching strided
/// convolution. Input channels follow the kernel's `Co` axis, output
/// channels its `Ci` axis. Output spatial size is `stride` times the input
/// size; for stride 2 the kernel must be 2x2 so that contract holds.
pub fn conv2d_transpose_forward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    if !(stride == 1 || stride == 2) {
        return Err(Error::InvalidParameter(format!(
            "transpose conv supports stride 1 or 2, got {stride}"
        )));
    }
    if input.shape().len() != 3 || kernel.shape().len() != 4 {
        return Err(Error::ShapeMismatch("transpose conv expects [C,H,W] input and [Co,Ci,Kh,Kw] kernel".into()));
    }
    let (co, ci, kh, kw) = (
        kernel.shape()[0],
        kernel.shape()[1],
        kernel.shape()[2],
        kernel.shape()[3],
    );
    if input.shape()[0] != co {
        return Err(Error::ShapeMismatch(format!(
            "transpose conv input has {} channels, kernel Co is {co}",
            input.shape()[0]
        )));
    }
    if stride == 2 && (kh != 2 || kw != 2) {
        return Err(Error::ShapeMismatch(format!(
            "stride-2 transpose conv requires a 2x2 kernel, got {kh}x{kw}"
        )));
    }
    let out_shape = [ci, input.shape()[1] * stride, input.shape()[2] * stride];
    conv2d_backward_input(input, kernel, stride, transpose_padding(stride), &out_shape)
}

/// Non-overlapping 2x2 max pooling; also returns the within-window argmax
/// (0..3 in scan order) for gradient routing.
pub(crate) fn maxpool2_forward<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<u8>)> {
    if input.shape().len() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "maxpool input must be [C, H, W], got {:?}",
            input.shape()
        )));
    }
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::ShapeMismatch(format!("maxpool needs even spatial dims, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[c, oh, ow]);
    let mut argmax = vec![0u8; c * oh * ow];
    let id = input.data();
    let od = out.data_mut();
    for ch in 0..c {
        for r in 0..oh {
            for col in 0..ow {
                let base = ch * h * w + 2 * r * w + 2 * col;
                let candidates = [id[base], id[base + 1], id[base + w], id[base + w + 1]];
                let mut best = 0usize;
                for k in 1..4 {
                    if candidates[k] > candidates[best] {
                        best = k;
                    }
                }
                let oidx = (ch * oh + r) * ow + col;
                od[oidx] = candidates[best];
                argmax[oidx] = best as u8;
            }
        }
    }
    Ok((out, argmax))
}

/// 2x2 max pooling (value only).
pub fn maxpool2<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    maxpool2_forward(input).map(|(t, _)| t)
}

pub(crate) fn maxpool2_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    argmax: &[u8],
    input_shape: &[usize],
) -> Tensor<T> {
    let (c, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
    let (oh, ow) = (h / 2, w / 2);
    let mut grad_in = Tensor::zeros(input_shape);
    let gid = grad_in.data_mut();
    let god = grad_out.data();
    for ch in 0..c {
        for r in 0..oh {
            for col in 0..ow {
                let oidx = (ch * oh + r) * ow + col;
                let k = argmax[oidx] as usize;
                let base = ch * h * w + 2 * r * w + 2 * col + (k / 2) * w + (k % 2);
                gid[base] += god[oidx];
            }
        }
    }
    grad_in
}

/// Affine map `W x + b` with `W: [Out, In]`, `x: [In]`, `b: [Out]`.
pub fn dense_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    if weights.shape().len() != 2 {
        return Err(Error::ShapeMismatch("dense weights must be [Out, In]".into()));
    }
    let (out_dim, in_dim) = (weights.shape()[0], weights.shape()[1]);
    if input.len() != in_dim {
        return Err(Error::ShapeMismatch(format!(
            "dense input has {} elements, weights expect {in_dim}",
            input.len()
        )));
    }
    if bias.len() != out_dim {
        return Err(Error::ShapeMismatch(format!(
            "dense bias has {} elements, weights produce {out_dim}",
            bias.len()
        )));
    }
    let mut out = Tensor::zeros(&[out_dim]);
    let od = out.data_mut();
    let wd = weights.data();
    let id = input.data();
    for o in 0..out_dim {
        let row = &wd[o * in_dim..(o + 1) * in_dim];
        let mut acc = T::zero();
        for i in 0..in_dim {
            acc += row[i] * id[i];
        }
        od[o] = acc + bias.data()[o];
    }
    Ok(out)
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    out
}

pub fn leaky_relu<T: Scalar>(x: &Tensor<T>, alpha: f64) -> Tensor<T> {
    let a = T::from_f64(alpha);
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < T::zero() {
            *v = *v * a;
        }
    }
    out
}

pub fn tanh<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = v.tanh();
    }
    out
}

/// log(1 + e^x), computed on the stable branch for either sign.
pub fn softplus<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = softplus_scalar(*v);
    }
    out
}

pub(crate) fn softplus_scalar<T: Scalar>(v: T) -> T {
    let zero = T::zero();
    if v > zero {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

pub(crate) fn sigmoid_scalar<T: Scalar>(v: T) -> T {
    let one = T::one();
    if v >= T::zero() {
        one / (one + (-v).exp())
    } else {
        let e = v.exp();
        e / (one + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq_tensor(shape: &[usize], scale: f64, offset: f64) -> Tensor<f64> {
        let len: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|i| (i as f64) * scale + offset).collect()).unwrap()
    }

    /// Independent quadruple-loop convolution used as the test oracle.
    fn conv_oracle(
        input: &Tensor<f64>,
        kernel: &Tensor<f64>,
        stride: usize,
        pad_h: isize,
        pad_w: isize,
        oh: usize,
        ow: usize,
    ) -> Vec<f64> {
        let (ci, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let (co, _, kh, kw) = (
            kernel.shape()[0],
            kernel.shape()[1],
            kernel.shape()[2],
            kernel.shape()[3],
        );
        let mut out = vec![0.0; co * oh * ow];
        for c_o in 0..co {
            for o_h in 0..oh {
                for o_w in 0..ow {
                    let mut acc = 0.0;
                    for c_i in 0..ci {
                        for k_h in 0..kh {
                            for k_w in 0..kw {
                                let i_h = (o_h * stride) as isize + k_h as isize - pad_h;
                                let i_w = (o_w * stride) as isize + k_w as isize - pad_w;
                                if i_h < 0 || i_w < 0 || i_h >= h as isize || i_w >= w as isize {
                                    continue;
                                }
                                acc += input.data()[(c_i * h + i_h as usize) * w + i_w as usize]
                                    * kernel.data()[((c_o * ci + c_i) * kh + k_h) * kw + k_w];
                            }
                        }
                    }
                    out[(c_o * oh + o_h) * ow + o_w] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_is_identity() {
        let x = seq_tensor(&[1, 4, 4], 0.37, -1.0);
        let k = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let y = conv2d_forward(&x, &k, 1, Padding::Same).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn ones_kernel_on_constant_input() {
        let x = Tensor::<f64>::filled(&[1, 5, 5], 3.0);
        let k = Tensor::<f64>::filled(&[1, 1, 3, 3], 1.0);
        let y = conv2d_forward(&x, &k, 1, Padding::Same).unwrap();
        // interior cells see the full 3x3 window
        assert_eq!(y.data()[(1 * 5) + 1], 27.0);
        assert_eq!(y.data()[(2 * 5) + 2], 27.0);
        // corner sees a 2x2 window
        assert_eq!(y.data()[0], 12.0);
    }

    #[test]
    fn valid_conv_matches_nested_loop_oracle() {
        let x = seq_tensor(&[2, 5, 5], 0.13, -2.0);
        let k = seq_tensor(&[3, 2, 3, 3], 0.07, -0.5);
        let y = conv2d_forward(&x, &k, 1, Padding::Valid).unwrap();
        assert_eq!(y.shape(), &[3, 3, 3]);
        let oracle = conv_oracle(&x, &k, 1, 0, 0, 3, 3);
        for (a, b) in y.data().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn same_conv_matches_oracle_including_padding() {
        let x = seq_tensor(&[2, 6, 6], 0.11, 1.0);
        let k = seq_tensor(&[2, 2, 3, 3], -0.05, 0.4);
        let y = conv2d_forward(&x, &k, 1, Padding::Same).unwrap();
        assert_eq!(y.shape(), &[2, 6, 6]);
        let oracle = conv_oracle(&x, &k, 1, 1, 1, 6, 6);
        for (a, b) in y.data().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn strided_conv_matches_oracle() {
        let x = seq_tensor(&[1, 6, 6], 0.21, 0.0);
        let k = seq_tensor(&[2, 1, 2, 2], 0.3, -0.2);
        let y = conv2d_forward(&x, &k, 2, Padding::Valid).unwrap();
        assert_eq!(y.shape(), &[2, 3, 3]);
        let oracle = conv_oracle(&x, &k, 2, 0, 0, 3, 3);
        for (a, b) in y.data().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_identity_and_shape_contract() {
        let x = seq_tensor(&[1, 4, 4], 1.0, 0.0);
        let unit = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let y = conv2d_transpose_forward(&x, &unit, 1).unwrap();
        assert_eq!(y.data(), x.data());

        let x = seq_tensor(&[3, 4, 4], 0.2, -1.0);
        let k = seq_tensor(&[3, 2, 2, 2], 0.1, 0.05);
        let y = conv2d_transpose_forward(&x, &k, 2).unwrap();
        assert_eq!(y.shape(), &[2, 8, 8], "stride-2 doubling");

        let k3 = seq_tensor(&[3, 2, 3, 3], 0.1, 0.0);
        assert!(conv2d_transpose_forward(&x, &k3, 2).is_err());
    }

    fn inner(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
    }

    fn pseudo_random(shape: &[usize], seed: u64) -> Tensor<f64> {
        // deterministic low-discrepancy values in [-1, 1]
        let len: usize = shape.iter().product();
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        let data = (0..len)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn conv_and_transpose_are_adjoint() {
        // <conv(x), y> == <x, conv_transpose(y)> for both supported strides
        for (stride, pad, in_hw, k_hw) in [(1usize, Padding::Same, 6usize, 3usize), (2, Padding::Valid, 6, 2)] {
            let x = pseudo_random(&[3, in_hw, in_hw], 11 + stride as u64);
            let k = pseudo_random(&[4, 3, k_hw, k_hw], 23 + stride as u64);
            let cx = conv2d_forward(&x, &k, stride, pad).unwrap();
            let y = pseudo_random(cx.shape(), 37);
            let cty = conv2d_transpose_forward(&y, &k, stride).unwrap();
            assert_eq!(cty.shape(), x.shape());
            let lhs = inner(&cx, &y);
            let rhs = inner(&x, &cty);
            assert!(
                (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1.0),
                "adjoint identity failed at stride {stride}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn maxpool_examples() {
        let c = Tensor::<f64>::filled(&[1, 4, 4], 2.5);
        let y = maxpool2(&c).unwrap();
        assert!(y.data().iter().all(|v| *v == 2.5));

        let x = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = maxpool2(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);

        let odd = Tensor::<f64>::zeros(&[1, 3, 4]);
        assert!(maxpool2(&odd).is_err());
    }

    #[test]
    fn maxpool_gradient_routes_to_argmax() {
        let x = Tensor::from_vec(&[1, 2, 2], vec![1.0, 7.0, 3.0, 4.0]).unwrap();
        let (_, idx) = maxpool2_forward(&x).unwrap();
        let g = Tensor::from_vec(&[1, 1, 1], vec![5.0]).unwrap();
        let gi = maxpool2_backward(&g, &idx, &[1, 2, 2]);
        assert_eq!(gi.data(), &[0.0, 5.0, 0.0, 0.0]);
    }

    #[test]
    fn dense_examples_and_oracle() {
        // identity weights, zero bias
        let x = Tensor::from_vec(&[3], vec![1.5, -2.0, 0.25]).unwrap();
        let eye = Tensor::from_vec(&[3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let zero = Tensor::<f64>::zeros(&[3]);
        assert_eq!(dense_forward(&x, &eye, &zero).unwrap().data(), x.data());

        // zero weights, bias b
        let w0 = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::from_vec(&[2], vec![0.5, -0.5]).unwrap();
        assert_eq!(dense_forward(&x, &w0, &b).unwrap().data(), b.data());

        // random case vs nested loop
        let w = pseudo_random(&[4, 3], 5);
        let bias = pseudo_random(&[4], 6);
        let y = dense_forward(&x, &w, &bias).unwrap();
        for o in 0..4 {
            let mut acc = bias.data()[o];
            for i in 0..3 {
                acc += w.data()[o * 3 + i] * x.data()[i];
            }
            assert!((y.data()[o] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn activation_examples() {
        let x = Tensor::from_vec(&[4], vec![-1.0, 2.0, 0.0, 50.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 2.0, 0.0, 50.0]);
        let lr = leaky_relu(&x, 0.2);
        assert_eq!(lr.data(), &[-0.2, 2.0, 0.0, 50.0]);

        let sp = softplus(&x);
        assert!((sp.data()[2] - std::f64::consts::LN_2).abs() < 1e-15, "softplus(0) = ln 2");
        assert!((sp.data()[3] - 50.0).abs() < 1e-9, "softplus(50) ~ 50 without overflow");
        let neg = softplus(&Tensor::<f64>::from_vec(&[1], vec![-745.0]).unwrap());
        assert!(neg.data()[0] >= 0.0 && neg.data()[0].is_finite());

        let th = tanh(&x);
        assert!((th.data()[0] + (1.0f64).tanh()).abs() < 1e-15);
    }
}

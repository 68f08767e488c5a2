//! Forward and backward kernels for the layer zoo.
//!
//! All kernels compute each output element with a fixed accumulation order
//! (bias first, then taps in ascending `(in_channel, tap)` order). Any two
//! call sites that feed the same values through [`conv1d_forward_dilated`]
//! therefore produce bit-identical columns, which the full-series encoder
//! scan relies on.

use super::Tensor3;
use crate::{Error, Result};

/// Output length of a strided 1D convolution:
/// `floor((len + 2*pad - dilation*(kernel-1) - 1) / stride) + 1`.
pub fn conv1d_output_len(len: usize, kernel: usize, stride: usize, pad: usize, dilation: usize) -> Option<usize> {
    let span = dilation * (kernel - 1) + 1;
    let padded = len + 2 * pad;
    if padded < span {
        return None;
    }
    Some((padded - span) / stride + 1)
}

/// Output length of a transposed 1D convolution:
/// `(len - 1)*stride - 2*pad + kernel + output_padding`.
pub fn conv_transpose1d_output_len(
    len: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    output_padding: usize,
) -> Option<usize> {
    let grown = (len - 1) * stride + kernel + output_padding;
    if grown <= 2 * pad {
        return None;
    }
    Some(grown - 2 * pad)
}

/// Inclusive-exclusive `j` range such that `j*stride + base` stays in
/// `[0, limit)`, further clamped to `[0, count)`.
#[inline]
fn valid_range(base: isize, stride: usize, limit: usize, count: usize) -> (usize, usize) {
    let lo = if base >= 0 { 0 } else { ((-base) as usize + stride - 1) / stride };
    let hi_num = limit as isize - 1 - base;
    if hi_num < 0 {
        return (0, 0);
    }
    let hi = (hi_num as usize / stride + 1).min(count);
    if lo >= hi {
        (0, 0)
    } else {
        (lo, hi)
    }
}

fn check_conv_shapes(x: &Tensor3, w: &Tensor3, bias: &Tensor3) -> Result<()> {
    if x.channels != w.channels {
        return Err(Error::Shape(format!(
            "input has {} channels, weights expect {}",
            x.channels, w.channels
        )));
    }
    if bias.shape() != (1, w.batch, 1) {
        return Err(Error::Shape(format!(
            "bias shape {:?} does not match {} output channels",
            bias.shape(),
            w.batch
        )));
    }
    Ok(())
}

/// One output column. Shared by the full forward pass and the per-window
/// edge recomputation in the encoder scan.
#[inline]
fn conv_col(
    x: &Tensor3,
    b: usize,
    w: &Tensor3,
    bias: f64,
    oc: usize,
    stride: usize,
    pad: usize,
    dilation: usize,
    j: usize,
) -> f64 {
    let base = (j * stride) as isize - pad as isize;
    let kernel = w.len;
    let t_lo = if base >= 0 { 0 } else { ((-base) as usize + dilation - 1) / dilation };
    let mut t_hi = kernel; // exclusive
    let room = x.len as isize - 1 - base;
    if room < 0 {
        t_hi = 0;
    } else {
        t_hi = t_hi.min(room as usize / dilation + 1);
    }
    let mut acc = bias;
    if t_lo >= t_hi {
        return acc;
    }
    for ic in 0..x.channels {
        let xrow = x.row(b, ic);
        let wrow = w.row(oc, ic);
        let mut s = 0.0;
        if dilation == 1 {
            let start = (base + t_lo as isize) as usize;
            let xs = &xrow[start..start + (t_hi - t_lo)];
            let ws = &wrow[t_lo..t_hi];
            for (xv, wv) in xs.iter().zip(ws) {
                s += xv * wv;
            }
        } else {
            for t in t_lo..t_hi {
                s += wrow[t] * xrow[(base + (t * dilation) as isize) as usize];
            }
        }
        acc += s;
    }
    acc
}

/// Strided cross-correlation with symmetric zero padding and dilation.
pub fn conv1d_forward_dilated(
    x: &Tensor3,
    w: &Tensor3,
    bias: &Tensor3,
    stride: usize,
    pad: usize,
    dilation: usize,
) -> Result<Tensor3> {
    check_conv_shapes(x, w, bias)?;
    let lo = conv1d_output_len(x.len, w.len, stride, pad, dilation)
        .ok_or_else(|| Error::Shape(format!("kernel {} does not fit input length {}", w.len, x.len)))?;
    let mut out = Tensor3::zeros(x.batch, w.batch, lo);
    for b in 0..x.batch {
        for oc in 0..w.batch {
            let bias_v = bias.get(0, oc, 0);
            let orow = out.row_mut(b, oc);
            for (j, o) in orow.iter_mut().enumerate() {
                *o = conv_col(x, b, w, bias_v, oc, stride, pad, dilation, j);
            }
        }
    }
    Ok(out)
}

/// Standard strided convolution (dilation 1). Output length is
/// `floor((len + 2*pad - kernel)/stride) + 1`.
pub fn conv1d_forward(x: &Tensor3, w: &Tensor3, bias: &Tensor3, stride: usize, pad: usize) -> Result<Tensor3> {
    conv1d_forward_dilated(x, w, bias, stride, pad, 1)
}

/// Only the requested output columns of a batch-1 convolution, flattened
/// `(out_channel, column)` in the given column order. Each value comes from
/// the same per-column kernel as the full forward pass, so it is
/// bit-identical to the corresponding element of [`conv1d_forward_dilated`].
pub fn conv1d_forward_columns(
    x: &Tensor3,
    w: &Tensor3,
    bias: &Tensor3,
    stride: usize,
    pad: usize,
    dilation: usize,
    cols: &[usize],
) -> Vec<f64> {
    let mut out = Vec::with_capacity(w.batch * cols.len());
    for oc in 0..w.batch {
        let bias_v = bias.get(0, oc, 0);
        for &j in cols {
            out.push(conv_col(x, 0, w, bias_v, oc, stride, pad, dilation, j));
        }
    }
    out
}

/// Gradients of [`conv1d_forward`] with respect to input, weights and bias.
pub fn conv1d_backward(
    x: &Tensor3,
    w: &Tensor3,
    gout: &Tensor3,
    stride: usize,
    pad: usize,
) -> (Tensor3, Tensor3, Tensor3) {
    let lo = gout.len;
    let mut dx = Tensor3::zeros(x.batch, x.channels, x.len);
    let mut dw = Tensor3::zeros(w.batch, w.channels, w.len);
    let mut db = Tensor3::zeros(1, w.batch, 1);

    for b in 0..x.batch {
        for oc in 0..w.batch {
            let grow = gout.row(b, oc);
            db.row_mut(0, oc)[0] += grow.iter().sum::<f64>();
            for ic in 0..x.channels {
                let wrow = w.row(oc, ic);
                let xrow = x.row(b, ic);
                let dxrow = dx.row_mut(b, ic);
                for (t, wv) in wrow.iter().enumerate() {
                    let base = t as isize - pad as isize;
                    let (jl, jh) = valid_range(base, stride, x.len, lo);
                    if stride == 1 {
                        let off = (jl as isize + base) as usize;
                        let dxs = &mut dxrow[off..off + (jh - jl)];
                        for (d, g) in dxs.iter_mut().zip(&grow[jl..jh]) {
                            *d += wv * g;
                        }
                    } else {
                        for j in jl..jh {
                            let pos = (j * stride) as isize + base;
                            dxrow[pos as usize] += wv * grow[j];
                        }
                    }
                }
                let dwrow = dw.row_mut(oc, ic);
                for (t, dwv) in dwrow.iter_mut().enumerate() {
                    let base = t as isize - pad as isize;
                    let (jl, jh) = valid_range(base, stride, x.len, lo);
                    let mut acc = 0.0;
                    if stride == 1 {
                        let off = (jl as isize + base) as usize;
                        let xs = &xrow[off..off + (jh - jl)];
                        for (xv, g) in xs.iter().zip(&grow[jl..jh]) {
                            acc += xv * g;
                        }
                    } else {
                        for j in jl..jh {
                            let pos = (j * stride) as isize + base;
                            acc += grow[j] * xrow[pos as usize];
                        }
                    }
                    *dwv += acc;
                }
            }
        }
    }
    (dx, dw, db)
}

/// Transposed convolution with gradient-of-convolution semantics. Output
/// length is `(len - 1)*stride - 2*pad + kernel + output_padding`.
pub fn conv_transpose1d_forward(
    x: &Tensor3,
    w: &Tensor3,
    bias: &Tensor3,
    stride: usize,
    pad: usize,
    output_padding: usize,
) -> Result<Tensor3> {
    check_conv_shapes(x, w, bias)?;
    if output_padding >= stride && output_padding != 0 {
        return Err(Error::Shape(format!(
            "output_padding {output_padding} must be smaller than stride {stride}"
        )));
    }
    let lo = conv_transpose1d_output_len(x.len, w.len, stride, pad, output_padding)
        .ok_or_else(|| Error::Shape("transposed convolution output would be empty".into()))?;
    let mut out = Tensor3::zeros(x.batch, w.batch, lo);
    for b in 0..x.batch {
        for oc in 0..w.batch {
            let bias_v = bias.get(0, oc, 0);
            let orow = out.row_mut(b, oc);
            for o in orow.iter_mut() {
                *o = bias_v;
            }
            for ic in 0..x.channels {
                let xrow = x.row(b, ic);
                let wrow = w.row(oc, ic);
                for (t, wv) in wrow.iter().enumerate() {
                    let base = t as isize - pad as isize;
                    let (jl, jh) = valid_range(base, stride, lo, x.len);
                    if stride == 1 {
                        let off = (jl as isize + base) as usize;
                        for (o, xv) in orow[off..off + (jh - jl)].iter_mut().zip(&xrow[jl..jh]) {
                            *o += wv * xv;
                        }
                    } else {
                        for j in jl..jh {
                            let pos = (j * stride) as isize + base;
                            orow[pos as usize] += wv * xrow[j];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv_transpose1d_forward`].
pub fn conv_transpose1d_backward(
    x: &Tensor3,
    w: &Tensor3,
    gout: &Tensor3,
    stride: usize,
    pad: usize,
) -> (Tensor3, Tensor3, Tensor3) {
    let lo = gout.len;
    let mut dx = Tensor3::zeros(x.batch, x.channels, x.len);
    let mut dw = Tensor3::zeros(w.batch, w.channels, w.len);
    let mut db = Tensor3::zeros(1, w.batch, 1);

    for b in 0..x.batch {
        for oc in 0..w.batch {
            let grow = gout.row(b, oc);
            db.row_mut(0, oc)[0] += grow.iter().sum::<f64>();
            for ic in 0..x.channels {
                let wrow = w.row(oc, ic);
                let xrow = x.row(b, ic);
                let dxrow = dx.row_mut(b, ic);
                for (t, wv) in wrow.iter().enumerate() {
                    let base = t as isize - pad as isize;
                    let (jl, jh) = valid_range(base, stride, lo, x.len);
                    if stride == 1 {
                        let off = (jl as isize + base) as usize;
                        let gs = &grow[off..off + (jh - jl)];
                        for (d, g) in dxrow[jl..jh].iter_mut().zip(gs) {
                            *d += wv * g;
                        }
                    } else {
                        for j in jl..jh {
                            let pos = (j * stride) as isize + base;
                            dxrow[j] += wv * grow[pos as usize];
                        }
                    }
                }
                let dwrow = dw.row_mut(oc, ic);
                for (t, dwv) in dwrow.iter_mut().enumerate() {
                    let base = t as isize - pad as isize;
                    let (jl, jh) = valid_range(base, stride, lo, x.len);
                    let mut acc = 0.0;
                    if stride == 1 {
                        let off = (jl as isize + base) as usize;
                        let gs = &grow[off..off + (jh - jl)];
                        for (xv, g) in xrow[jl..jh].iter().zip(gs) {
                            acc += xv * g;
                        }
                    } else {
                        for j in jl..jh {
                            let pos = (j * stride) as isize + base;
                            acc += xrow[j] * grow[pos as usize];
                        }
                    }
                    *dwv += acc;
                }
            }
        }
    }
    (dx, dw, db)
}

/// Elementwise `max(0, x)`.
pub fn relu(x: &Tensor3) -> Tensor3 {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Gradient of ReLU; the subgradient at exactly zero is zero.
pub fn relu_backward(x: &Tensor3, gout: &Tensor3) -> Tensor3 {
    let mut dx = gout.clone();
    for (d, xv) in dx.data_mut().iter_mut().zip(x.data()) {
        if *xv <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

/// Mean of squared differences over all elements.
pub fn mse_loss(prediction: &Tensor3, target: &Tensor3) -> Result<f64> {
    if prediction.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "mse over mismatched shapes {:?} vs {:?}",
            prediction.shape(),
            target.shape()
        )));
    }
    let m = prediction.numel() as f64;
    let sum: f64 = prediction
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / m)
}

/// Gradient of the MSE with respect to the prediction: `2 (p - t) / M`.
pub fn mse_grad(prediction: &Tensor3, target: &Tensor3) -> Tensor3 {
    let m = prediction.numel() as f64;
    let mut out = prediction.clone();
    for (o, t) in out.data_mut().iter_mut().zip(target.data()) {
        *o = 2.0 * (*o - t) / m;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bias_zeros(oc: usize) -> Tensor3 {
        Tensor3::zeros(1, oc, 1)
    }

    #[test]
    fn output_length_formulas() {
        // The published encoder chain: 336 -> 168 -> 84 with kernel 7,
        // stride 2, pad 3.
        assert_eq!(conv1d_output_len(336, 7, 2, 3, 1), Some(168));
        assert_eq!(conv1d_output_len(168, 7, 2, 3, 1), Some(84));
        // Decoder chain back up: 84 -> 168 -> 336 -> 336.
        assert_eq!(conv_transpose1d_output_len(84, 7, 2, 3, 1), Some(168));
        assert_eq!(conv_transpose1d_output_len(168, 7, 2, 3, 1), Some(336));
        assert_eq!(conv_transpose1d_output_len(336, 7, 1, 3, 0), Some(336));
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let x = Tensor3::new(1, 1, 9, (0..9).map(|v| v as f64 - 4.0).collect()).unwrap();
        let mut w = Tensor3::zeros(1, 1, 7);
        w.set(0, 0, 3, 1.0); // single 1 at the center
        let y = conv1d_forward(&x, &w, &bias_zeros(1), 1, 3).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn zero_weights_yield_constant_bias() {
        let x = Tensor3::new(1, 2, 10, (0..20).map(|v| v as f64).collect()).unwrap();
        let w = Tensor3::zeros(3, 2, 7);
        let mut bias = bias_zeros(3);
        bias.set(0, 0, 0, -1.5);
        bias.set(0, 1, 0, 0.25);
        bias.set(0, 2, 0, 4.0);
        let y = conv1d_forward(&x, &w, &bias, 2, 3).unwrap();
        for oc in 0..3 {
            let expect = bias.get(0, oc, 0);
            assert!(y.row(0, oc).iter().all(|v| *v == expect));
        }
    }

    #[test]
    fn transpose_identity_kernel_stride_one() {
        let x = Tensor3::new(1, 1, 11, (0..11).map(|v| (v as f64).sin()).collect()).unwrap();
        let mut w = Tensor3::zeros(1, 1, 7);
        w.set(0, 0, 3, 1.0);
        let y = conv_transpose1d_forward(&x, &w, &bias_zeros(1), 1, 3, 0).unwrap();
        assert_eq!(y.len, 11);
        assert_eq!(y.data(), x.data());
    }

    /// Materializes the linear map of an op on the standard basis.
    fn materialize<F: Fn(&Tensor3) -> Tensor3>(in_ch: usize, in_len: usize, f: F) -> Vec<Vec<f64>> {
        let mut cols = Vec::new();
        for c in 0..in_ch {
            for i in 0..in_len {
                let mut x = Tensor3::zeros(1, in_ch, in_len);
                x.set(0, c, i, 1.0);
                cols.push(f(&x).data().to_vec());
            }
        }
        cols
    }

    #[test]
    fn transpose_conv_is_matrix_transpose_of_conv() {
        // Conv with weights v maps (IC=2, 5) -> (OC=3, len_out). The matching
        // transposed conv with axes-swapped weights maps back; its matrix must
        // be the transpose of the conv's matrix.
        let (ic, oc, li, kernel, stride, pad) = (2usize, 3usize, 5usize, 3usize, 2usize, 1usize);
        let mut rng = <rand_chacha::ChaCha8Rng as rand_chacha::rand_core::SeedableRng>::seed_from_u64(5);
        let v = Tensor3::uniform(oc, ic, kernel, 1.0, &mut rng);
        let lo = conv1d_output_len(li, kernel, stride, pad, 1).unwrap();

        let conv_map = materialize(ic, li, |x| conv1d_forward(x, &v, &bias_zeros(oc), stride, pad).unwrap());

        // Swap (out_channels, in_channels) axes of the weights.
        let mut vt = Tensor3::zeros(ic, oc, kernel);
        for a in 0..oc {
            for b in 0..ic {
                for t in 0..kernel {
                    vt.set(b, a, t, v.get(a, b, t));
                }
            }
        }
        // output_padding chosen so the transposed output length equals li.
        let out_pad = li + 2 * pad - ((lo - 1) * stride + kernel);
        let tconv_map = materialize(oc, lo, |u| {
            conv_transpose1d_forward(u, &vt, &bias_zeros(ic), stride, pad, out_pad).unwrap()
        });

        for (row, conv_col_vals) in conv_map.iter().enumerate() {
            for (col, cv) in conv_col_vals.iter().enumerate() {
                let tv = tconv_map[col][row];
                assert!(
                    (cv - tv).abs() < 1e-12,
                    "M[{col}][{row}]={cv} but M^T[{row}][{col}]={tv}"
                );
            }
        }
    }

    #[test]
    fn relu_and_mse_definitions() {
        let x = Tensor3::new(1, 1, 3, vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);

        let a = Tensor3::new(1, 1, 2, vec![0.0, 0.0]).unwrap();
        let b = Tensor3::new(1, 1, 2, vec![1.0, 1.0]).unwrap();
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(mse_loss(&a, &b).unwrap(), 1.0);
        assert!(mse_loss(&a, &Tensor3::zeros(1, 1, 3)).is_err());
    }

    #[test]
    fn mse_gradient_hand_value() {
        // prediction (1, 0), target (0, 0): d/dp = 2 (p - t) / M with M = 2.
        let p = Tensor3::new(1, 1, 2, vec![1.0, 0.0]).unwrap();
        let t = Tensor3::zeros(1, 1, 2);
        let g = mse_grad(&p, &t);
        assert_eq!(g.data(), &[1.0, 0.0]);
    }

    #[test]
    fn conv_is_linear_in_the_input() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand_chacha::rand_core::SeedableRng>::seed_from_u64(11);
        let w = Tensor3::uniform(4, 3, 7, 0.5, &mut rng);
        let x = Tensor3::uniform(2, 3, 20, 1.0, &mut rng);
        let y = Tensor3::uniform(2, 3, 20, 1.0, &mut rng);
        let (a, b) = (0.7, -1.3);
        let mut combo = x.clone();
        for (c, (xv, yv)) in combo.data_mut().iter_mut().zip(x.data().iter().zip(y.data())) {
            *c = a * xv + b * yv;
        }
        let bias = bias_zeros(4);
        let lhs = conv1d_forward(&combo, &w, &bias, 2, 3).unwrap();
        let fx = conv1d_forward(&x, &w, &bias, 2, 3).unwrap();
        let fy = conv1d_forward(&y, &w, &bias, 2, 3).unwrap();
        for i in 0..lhs.numel() {
            let rhs = a * fx.data()[i] + b * fy.data()[i];
            assert!((lhs.data()[i] - rhs).abs() < 1e-10);
        }
    }
}

//! Numeric kernels on planar `[C, H, W]` tensors: convolution via im2col and
//! GEMM, adaptive instance normalization, pooling, dense layers and pointwise
//! activations, each with its vector-Jacobian product.
//!
//! Kernels assert on internal shape inconsistencies; callers validate user
//! input before reaching this layer.

use crate::tensor::{gemm, Real, Tensor};

pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    assert!(input + 2 * pad >= kernel, "kernel larger than padded input");
    (input + 2 * pad - kernel) / stride + 1
}

#[allow(clippy::too_many_arguments)]
fn im2col<T: Real>(
    x: &[T],
    (c, h, w): (usize, usize, usize),
    k: usize,
    stride: usize,
    pad: usize,
    (rows, wo): (std::ops::Range<usize>, usize),
    cols: &mut [T],
) {
    let n = rows.len() * wo;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ci * k + ky) * k + kx) * n..][..n];
                for (r, oy) in rows.clone().enumerate() {
                    let dst = &mut row[r * wo..(r + 1) * wo];
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    if stride == 1 {
                        let lo = pad.saturating_sub(kx).min(wo);
                        let hi = (w + pad).saturating_sub(kx).min(wo).max(lo);
                        dst[..lo].fill(T::zero());
                        dst[hi..].fill(T::zero());
                        let off = kx as isize - pad as isize;
                        let s0 = (lo as isize + off) as usize;
                        dst[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                    } else {
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            *d = if ix < 0 || ix >= w as isize {
                                T::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im<T: Real>(
    cols: &[T],
    (c, h, w): (usize, usize, usize),
    k: usize,
    stride: usize,
    pad: usize,
    (ho, wo): (usize, usize),
    x: &mut [T],
) {
    let n = ho * wo;
    for ci in 0..c {
        let plane = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ci * k + ky) * k + kx) * n..][..n];
                for oy in 0..ho {
                    let src = &row[oy * wo..(oy + 1) * wo];
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, &v) in src.iter().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Largest im2col buffer (in elements) built in one piece by the forward
/// convolution; larger outputs are processed in bands of rows.
const IM2COL_BUDGET: usize = 1 << 24;

fn kernel_dims<T>(x: &Tensor<T>, weight: &Tensor<T>) -> (usize, usize, usize) {
    let ws = weight.shape();
    assert_eq!(ws.len(), 4, "conv weight must be [O, C, k, k]");
    assert_eq!(ws[2], ws[3], "conv kernel must be square");
    assert_eq!(x.shape()[0], ws[1], "conv input channel mismatch");
    (ws[0], ws[1], ws[2])
}

/// 2-D cross-correlation with zero padding, as used by common deep learning
/// frameworks.
pub fn conv2d<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Tensor<T> {
    conv2d_banded(x, weight, bias, stride, pad, IM2COL_BUDGET)
}

fn conv2d_banded<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
    budget: usize,
) -> Tensor<T> {
    let (c, h, w) = x.chw();
    let (out_c, _, k) = kernel_dims(x, weight);
    assert_eq!(bias.len(), out_c);
    let ho = conv_out_dim(h, k, stride, pad);
    let wo = conv_out_dim(w, k, stride, pad);
    let n = ho * wo;
    let kk = c * k * k;
    let mut out = vec![T::zero(); out_c * n];
    let band = (budget / (kk * wo)).clamp(1, ho);
    if band == ho {
        let mut cols = vec![T::zero(); kk * n];
        im2col(x.data(), (c, h, w), k, stride, pad, (0..ho, wo), &mut cols);
        for (o, row) in out.chunks_mut(n).enumerate() {
            row.fill(bias.data()[o]);
        }
        gemm(out_c, kk, n, weight.data(), false, &cols, false, T::one(), &mut out);
    } else {
        let mut cols = vec![T::zero(); kk * band * wo];
        let mut part = vec![T::zero(); out_c * band * wo];
        for r0 in (0..ho).step_by(band) {
            let r1 = (r0 + band).min(ho);
            let bn = (r1 - r0) * wo;
            im2col(x.data(), (c, h, w), k, stride, pad, (r0..r1, wo), &mut cols[..kk * bn]);
            gemm(out_c, kk, bn, weight.data(), false, &cols[..kk * bn], false, T::zero(), &mut part[..out_c * bn]);
            for o in 0..out_c {
                let dst = &mut out[o * n + r0 * wo..o * n + r1 * wo];
                for (d, &v) in dst.iter_mut().zip(&part[o * bn..(o + 1) * bn]) {
                    *d = v + bias.data()[o];
                }
            }
        }
    }
    Tensor::from_vec(&[out_c, ho, wo], out)
}

pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Vector-Jacobian product of [`conv2d`]. The im2col buffer is rebuilt here
/// rather than kept from the forward pass.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
    need_input_grad: bool,
) -> ConvGrads<T> {
    let (c, h, w) = x.chw();
    let (out_c, _, k) = kernel_dims(x, weight);
    let (go_c, ho, wo) = grad_out.chw();
    assert_eq!(go_c, out_c);
    let n = ho * wo;
    let kk = c * k * k;
    let mut cols = vec![T::zero(); kk * n];
    im2col(x.data(), (c, h, w), k, stride, pad, (0..ho, wo), &mut cols);

    let mut dw = vec![T::zero(); out_c * kk];
    gemm(out_c, n, kk, grad_out.data(), false, &cols, true, T::zero(), &mut dw);
    let db: Vec<T> = grad_out
        .data()
        .chunks(n)
        .map(|row| row.iter().copied().sum())
        .collect();

    let input = need_input_grad.then(|| {
        // reuse the im2col buffer for the column gradient
        gemm(kk, out_c, n, weight.data(), true, grad_out.data(), false, T::zero(), &mut cols);
        let mut dx = vec![T::zero(); c * h * w];
        col2im(&cols, (c, h, w), k, stride, pad, (ho, wo), &mut dx);
        Tensor::from_vec(&[c, h, w], dx)
    });
    ConvGrads {
        input,
        weight: Tensor::from_vec(weight.shape(), dw),
        bias: Tensor::from_vec(&[out_c], db),
    }
}

/// `y = W x + b` for a single vector.
pub fn linear<T: Real>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Tensor<T> {
    let ws = weight.shape();
    assert_eq!(ws.len(), 2);
    let (out_n, in_n) = (ws[0], ws[1]);
    assert_eq!(x.len(), in_n, "linear input length mismatch");
    let mut y = bias.data().to_vec();
    gemm(out_n, in_n, 1, weight.data(), false, x.data(), false, T::one(), &mut y);
    Tensor::from_vec(&[out_n], y)
}

pub fn linear_backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (out_n, in_n) = (weight.shape()[0], weight.shape()[1]);
    let mut dw = vec![T::zero(); out_n * in_n];
    gemm(out_n, 1, in_n, grad_out.data(), false, x.data(), false, T::zero(), &mut dw);
    let mut dx = vec![T::zero(); in_n];
    gemm(in_n, out_n, 1, weight.data(), true, grad_out.data(), false, T::zero(), &mut dx);
    (
        Tensor::from_vec(&[in_n], dx),
        Tensor::from_vec(&[out_n, in_n], dw),
        grad_out.clone(),
    )
}

/// Per-channel population mean and standard deviation over spatial positions.
pub fn channel_moments<T: Real>(plane: &[T]) -> (T, T) {
    let n = T::from_usize(plane.len()).unwrap();
    let mean = plane.iter().copied().sum::<T>() / n;
    let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

/// `gamma * (z - mean) / (std + eps) + eta`, per channel.
pub fn adain<T: Real>(z: &Tensor<T>, gamma: &[T], eta: &[T], eps: T) -> Tensor<T> {
    let (c, h, w) = z.chw();
    assert_eq!(gamma.len(), c);
    assert_eq!(eta.len(), c);
    let hw = h * w;
    let mut out = vec![T::zero(); c * hw];
    for ch in 0..c {
        let plane = &z.data()[ch * hw..(ch + 1) * hw];
        let (mean, std) = channel_moments(plane);
        let scale = gamma[ch] / (std + eps);
        for (o, &v) in out[ch * hw..(ch + 1) * hw].iter_mut().zip(plane) {
            *o = scale * (v - mean) + eta[ch];
        }
    }
    Tensor::from_vec(&[c, h, w], out)
}

/// Gradients of [`adain`] with respect to `(z, gamma, eta)`.
pub fn adain_backward<T: Real>(
    z: &Tensor<T>,
    gamma: &[T],
    eps: T,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Vec<T>, Vec<T>) {
    let (c, h, w) = z.chw();
    let hw = h * w;
    let n = T::from_usize(hw).unwrap();
    let mut dz = vec![T::zero(); c * hw];
    let mut dgamma = vec![T::zero(); c];
    let mut deta = vec![T::zero(); c];
    for ch in 0..c {
        let plane = &z.data()[ch * hw..(ch + 1) * hw];
        let dy = &grad_out.data()[ch * hw..(ch + 1) * hw];
        let (mean, std) = channel_moments(plane);
        let s = std + eps;
        let mut sum_dy = T::zero();
        let mut sum_dy_xc = T::zero();
        for (&v, &g) in plane.iter().zip(dy) {
            sum_dy += g;
            sum_dy_xc += g * (v - mean);
        }
        dgamma[ch] = sum_dy_xc / s;
        deta[ch] = sum_dy;
        // d/dz of gamma*(z-mean)/(std+eps); the std term vanishes for a constant channel
        let g = gamma[ch];
        let mean_g = g * sum_dy / n;
        let std_term = if std > T::zero() {
            g * sum_dy_xc / (n * std * s * s)
        } else {
            T::zero()
        };
        for ((d, &v), &gy) in dz[ch * hw..(ch + 1) * hw].iter_mut().zip(plane).zip(dy) {
            *d = (g * gy - mean_g) / s - (v - mean) * std_term;
        }
    }
    (Tensor::from_vec(&[c, h, w], dz), dgamma, deta)
}

pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = x.chw();
    let hw = h * w;
    let n = T::from_usize(hw).unwrap();
    let v = x
        .data()
        .chunks(hw)
        .map(|p| p.iter().copied().sum::<T>() / n)
        .collect();
    Tensor::from_vec(&[c], v)
}

pub fn global_avg_pool_backward<T: Real>(shape: &[usize], grad_out: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let hw = h * w;
    let n = T::from_usize(hw).unwrap();
    let mut dx = Vec::with_capacity(c * hw);
    for &g in grad_out.data() {
        dx.extend(std::iter::repeat_n(g / n, hw));
    }
    Tensor::from_vec(shape, dx)
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn tanh<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.tanh())
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| T::one() / (T::one() + (-v).exp()))
}

/// Pointwise backward for activations whose derivative is a function of the
/// output value.
pub fn pointwise_backward<T: Real>(
    out: &Tensor<T>,
    grad_out: &Tensor<T>,
    deriv: impl Fn(T) -> T,
) -> Tensor<T> {
    let data = out
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| g * deriv(y))
        .collect();
    Tensor::from_vec(out.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution with zero padding.
    fn conv_oracle(
        x: &Tensor<f64>,
        w: &Tensor<f64>,
        b: &Tensor<f64>,
        stride: usize,
        pad: usize,
    ) -> Tensor<f64> {
        let (c, h, wd) = x.chw();
        let (o, k) = (w.shape()[0], w.shape()[2]);
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let mut out = Tensor::zeros(&[o, ho, wo]);
        for oc in 0..o {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b.data()[oc];
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += w.data()[((oc * c + ic) * k + ky) * k + kx]
                                    * x.data()[(ic * h + iy as usize) * wd + ix as usize];
                            }
                        }
                    }
                    out.data_mut()[(oc * ho + oy) * wo + ox] = acc;
                }
            }
        }
        out
    }

    fn pseudo(shape: &[usize], seed: f64) -> Tensor<f64> {
        Tensor::from_fn(shape, |i| ((i as f64 + 1.0) * seed).sin())
    }

    #[test]
    fn conv_matches_direct_loop() {
        for &(stride, h, w) in &[(1, 5, 7), (2, 6, 5), (2, 1, 1), (1, 3, 3)] {
            let x = pseudo(&[3, h, w], 0.731);
            let wt = pseudo(&[4, 3, 3, 3], 1.37);
            let b = pseudo(&[4], 0.29);
            let got = conv2d(&x, &wt, &b, stride, 1);
            let want = conv_oracle(&x, &wt, &b, stride, 1);
            assert_eq!(got.shape(), want.shape());
            for (a, e) in got.data().iter().zip(want.data()) {
                assert!((a - e).abs() < 1e-12, "{a} vs {e}");
            }
        }
    }

    #[test]
    fn banded_conv_matches_single_pass() {
        for &stride in &[1, 2] {
            let x = pseudo(&[3, 9, 7], 0.513);
            let wt = pseudo(&[4, 3, 3, 3], 1.11);
            let b = pseudo(&[4], 0.37);
            let whole = conv2d(&x, &wt, &b, stride, 1);
            for budget in [1, 27 * 7, 27 * 7 * 2 + 5] {
                let banded = conv2d_banded(&x, &wt, &b, stride, 1, budget);
                assert_eq!(banded.data(), whole.data());
            }
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let x = pseudo(&[2, 4, 5], 0.9);
        let wt = pseudo(&[3, 2, 3, 3], 0.41);
        let b = pseudo(&[3], 0.7);
        let probe = pseudo(&[3, 2, 3], 1.9);
        let f = |x: &Tensor<f64>, wt: &Tensor<f64>| {
            let y = conv2d(x, wt, &b, 2, 1);
            y.data().iter().zip(probe.data()).map(|(a, p)| a * p).sum::<f64>()
        };
        let grads = conv2d_backward(&x, &wt, &probe, 2, 1, true);
        let dx = grads.input.unwrap();
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fd = (f(&xp, &wt) - f(&xm, &wt)) / (2.0 * h);
            assert!((fd - dx.data()[i]).abs() < 1e-7);
        }
        for i in 0..wt.len() {
            let mut wp = wt.clone();
            wp.data_mut()[i] += h;
            let mut wm = wt.clone();
            wm.data_mut()[i] -= h;
            let fd = (f(&x, &wp) - f(&x, &wm)) / (2.0 * h);
            assert!((fd - grads.weight.data()[i]).abs() < 1e-7);
        }
        let db: Vec<f64> = probe.data().chunks(6).map(|r| r.iter().sum()).collect();
        assert_eq!(grads.bias.data(), &db[..]);
    }

    #[test]
    fn adain_backward_matches_finite_differences() {
        let z = pseudo(&[2, 3, 3], 1.3);
        let gamma = [0.7, -1.2];
        let eta = [0.1, 0.4];
        let probe = pseudo(&[2, 3, 3], 0.37);
        let eps = 1e-5;
        let f = |z: &Tensor<f64>, g: &[f64], e: &[f64]| {
            adain(z, g, e, eps)
                .data()
                .iter()
                .zip(probe.data())
                .map(|(a, p)| a * p)
                .sum::<f64>()
        };
        let (dz, dg, de) = adain_backward(&z, &gamma, eps, &probe);
        let h = 1e-6;
        for i in 0..z.len() {
            let mut zp = z.clone();
            zp.data_mut()[i] += h;
            let mut zm = z.clone();
            zm.data_mut()[i] -= h;
            let fd = (f(&zp, &gamma, &eta) - f(&zm, &gamma, &eta)) / (2.0 * h);
            assert!((fd - dz.data()[i]).abs() < 1e-7, "{fd} vs {}", dz.data()[i]);
        }
        for c in 0..2 {
            let mut gp = gamma;
            gp[c] += h;
            let mut gm = gamma;
            gm[c] -= h;
            let fd = (f(&z, &gp, &eta) - f(&z, &gm, &eta)) / (2.0 * h);
            assert!((fd - dg[c]).abs() < 1e-7);
            let mut ep = eta;
            ep[c] += h;
            let mut em = eta;
            em[c] -= h;
            let fd = (f(&z, &gamma, &ep) - f(&z, &gamma, &em)) / (2.0 * h);
            assert!((fd - de[c]).abs() < 1e-7);
        }
    }

    #[test]
    fn linear_backward_matches_definition() {
        let x = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]);
        let w = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Tensor::from_vec(&[2], vec![0.5, -0.5]);
        let y = linear(&x, &w, &b);
        assert_eq!(y.data(), &[1.0 - 4.0 + 1.5 + 0.5, 4.0 - 10.0 + 3.0 - 0.5]);
        let g = Tensor::from_vec(&[2], vec![1.0, 10.0]);
        let (dx, dw, db) = linear_backward(&x, &w, &g);
        assert_eq!(dx.data(), &[41.0, 52.0, 63.0]);
        assert_eq!(dw.data(), &[1.0, -2.0, 0.5, 10.0, -20.0, 5.0]);
        assert_eq!(db.data(), g.data());
    }

    #[test]
    fn pool_averages_each_channel() {
        let x = Tensor::from_vec(&[2, 1, 2], vec![1.0, 3.0, 5.0, 5.0]);
        assert_eq!(global_avg_pool(&x).data(), &[2.0, 5.0]);
        let dx = global_avg_pool_backward(&[2, 1, 2], &Tensor::from_vec(&[2], vec![2.0, 4.0]));
        assert_eq!(dx.data(), &[1.0, 1.0, 2.0, 2.0]);
    }
}

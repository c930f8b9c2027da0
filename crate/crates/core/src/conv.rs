//! Raw 2-D convolution arithmetic on `[C,H,W]` tensors.
//!
//! Three primitive routines cover the forward and backward passes of both
//! the convolution and its transpose:
//!
//! * [`gather`]   — out[a,oi,oj] = Σ_{b,u,v} src[b, oi·s+u−p, oj·s+v−p] · K[a,b,u,v]
//! * [`scatter`]  — out[b, oi·s+u−p, oj·s+v−p] += Σ_a src[a,oi,oj] · K[a,b,u,v]
//! * [`kernel_grad`] — K[a,b,u,v] = Σ_{oi,oj} dense[a,oi,oj] · sampled[b, oi·s+u−p, oj·s+v−p]
//!
//! `scatter` with the convolution kernel is exactly the adjoint of `gather`
//! with the same kernel, which is what makes conv2d_transpose the exact
//! adjoint of conv2d.

use crate::error::{Error, Result};
use crate::num::Real;
use crate::tensor::Tensor;

/// Output spatial extent of a convolution.
#[inline]
pub fn conv_out_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if kernel > padded {
        return Err(Error::Contract(format!(
            "kernel extent {kernel} exceeds padded input extent {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Output spatial extent of a transposed convolution.
#[inline]
pub fn convt_out_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let grown = (input - 1) * stride + kernel;
    if grown <= 2 * padding {
        return Err(Error::Contract(format!(
            "transposed conv output extent would be non-positive: ({input}-1)*{stride} + {kernel} <= 2*{padding}"
        )));
    }
    Ok(grown - 2 * padding)
}

fn dims3<S: Real>(t: &Tensor<S>, what: &str) -> Result<(usize, usize, usize)> {
    let s = t.shape();
    if s.len() != 3 {
        return Err(Error::dim(&[0, 0, 0], s, format!("{what} must be [C,H,W]")));
    }
    Ok((s[0], s[1], s[2]))
}

fn dims4<S: Real>(t: &Tensor<S>, what: &str) -> Result<(usize, usize, usize, usize)> {
    let s = t.shape();
    if s.len() != 4 {
        return Err(Error::dim(&[0, 0, 0, 0], s, format!("{what} must be 4-D")));
    }
    Ok((s[0], s[1], s[2], s[3]))
}

/// Correlation-style gather. `kernel` is `[C_out, C_src, kh, kw]`; the output
/// has `out_h × out_w` spatial extent (caller computes it from the geometry).
pub fn gather<S: Real>(
    src: &Tensor<S>,
    kernel: &Tensor<S>,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor<S>> {
    let (c_src, h, w) = dims3(src, "gather source")?;
    let (c_out, kc, kh, kw) = dims4(kernel, "gather kernel")?;
    if kc != c_src {
        return Err(Error::dim(
            kernel.shape(),
            src.shape(),
            "kernel channel-in must match source channels",
        ));
    }
    let mut out = vec![S::zero(); c_out * out_h * out_w];
    let x = src.data();
    let k = kernel.data();
    for a in 0..c_out {
        for b in 0..c_src {
            let xbase = b * h * w;
            for u in 0..kh {
                for v in 0..kw {
                    let kval = k[((a * c_src + b) * kh + u) * kw + v];
                    if kval == S::zero() {
                        continue;
                    }
                    for oi in 0..out_h {
                        let ii = (oi * stride + u) as isize - padding as isize;
                        if ii < 0 || ii >= h as isize {
                            continue;
                        }
                        let xrow = &x[xbase + ii as usize * w..xbase + (ii as usize + 1) * w];
                        let obase = (a * out_h + oi) * out_w;
                        let orow = &mut out[obase..obase + out_w];
                        if stride == 1 {
                            let off = v as isize - padding as isize;
                            let lo = (-off).max(0) as usize;
                            let hi = (w as isize - off).clamp(0, out_w as isize) as usize;
                            for (oj, o) in orow.iter_mut().enumerate().take(hi).skip(lo) {
                                *o += kval * xrow[(oj as isize + off) as usize];
                            }
                        } else {
                            for (oj, o) in orow.iter_mut().enumerate() {
                                let jj = (oj * stride + v) as isize - padding as isize;
                                if jj >= 0 && jj < w as isize {
                                    *o += kval * xrow[jj as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![c_out, out_h, out_w], out)
}

/// Adjoint scatter. `kernel` is `[C_src, C_out, kh, kw]`; the output has
/// `out_h × out_w` spatial extent.
pub fn scatter<S: Real>(
    src: &Tensor<S>,
    kernel: &Tensor<S>,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor<S>> {
    let (c_src, h, w) = dims3(src, "scatter source")?;
    let (kc, c_out, kh, kw) = dims4(kernel, "scatter kernel")?;
    if kc != c_src {
        return Err(Error::dim(
            kernel.shape(),
            src.shape(),
            "kernel channel-in must match source channels",
        ));
    }
    let mut out = vec![S::zero(); c_out * out_h * out_w];
    let x = src.data();
    let k = kernel.data();
    for a in 0..c_src {
        let xbase = a * h * w;
        for b in 0..c_out {
            for u in 0..kh {
                for v in 0..kw {
                    let kval = k[((a * c_out + b) * kh + u) * kw + v];
                    if kval == S::zero() {
                        continue;
                    }
                    for oi in 0..h {
                        let ii = (oi * stride + u) as isize - padding as isize;
                        if ii < 0 || ii >= out_h as isize {
                            continue;
                        }
                        let xrow = &x[xbase + oi * w..xbase + (oi + 1) * w];
                        let obase = (b * out_h + ii as usize) * out_w;
                        let orow = &mut out[obase..obase + out_w];
                        for (oj, &xv) in xrow.iter().enumerate() {
                            let jj = (oj * stride + v) as isize - padding as isize;
                            if jj >= 0 && jj < out_w as isize {
                                orow[jj as usize] += kval * xv;
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![c_out, out_h, out_w], out)
}

/// Kernel gradient shared by conv and transposed conv.
///
/// `dense` is indexed at `(oi,oj)`, `sampled` at `(oi·s+u−p, oj·s+v−p)`; the
/// result is `[C_dense, C_sampled, kh, kw]`.
pub fn kernel_grad<S: Real>(
    dense: &Tensor<S>,
    sampled: &Tensor<S>,
    stride: usize,
    padding: usize,
    kh: usize,
    kw: usize,
) -> Result<Tensor<S>> {
    let (c_a, oh, ow) = dims3(dense, "kernel-grad dense operand")?;
    let (c_b, h, w) = dims3(sampled, "kernel-grad sampled operand")?;
    let mut out = vec![S::zero(); c_a * c_b * kh * kw];
    let d = dense.data();
    let s = sampled.data();
    for a in 0..c_a {
        for b in 0..c_b {
            let sbase = b * h * w;
            for u in 0..kh {
                for v in 0..kw {
                    let mut acc = S::zero();
                    for oi in 0..oh {
                        let ii = (oi * stride + u) as isize - padding as isize;
                        if ii < 0 || ii >= h as isize {
                            continue;
                        }
                        let drow = &d[(a * oh + oi) * ow..(a * oh + oi + 1) * ow];
                        let srow = &s[sbase + ii as usize * w..sbase + (ii as usize + 1) * w];
                        for (oj, &dv) in drow.iter().enumerate() {
                            let jj = (oj * stride + v) as isize - padding as isize;
                            if jj >= 0 && jj < w as isize {
                                acc += dv * srow[jj as usize];
                            }
                        }
                    }
                    out[((a * c_b + b) * kh + u) * kw + v] = acc;
                }
            }
        }
    }
    Tensor::new(vec![c_a, c_b, kh, kw], out)
}

/// Per-channel sum of a `[C,H,W]` tensor (bias gradient).
pub fn channel_sum<S: Real>(t: &Tensor<S>) -> Result<Tensor<S>> {
    let (c, h, w) = dims3(t, "channel sum")?;
    let mut out = vec![S::zero(); c];
    for (ch, o) in out.iter_mut().enumerate() {
        *o = t.data()[ch * h * w..(ch + 1) * h * w].iter().copied().sum();
    }
    Tensor::new(vec![c], out)
}

/// Adds `bias[c]` to every spatial position of channel `c` in place.
pub fn add_bias<S: Real>(t: &mut Tensor<S>, bias: &Tensor<S>) -> Result<()> {
    let (c, h, w) = dims3(t, "bias target")?;
    if bias.shape() != [c] {
        return Err(Error::dim(&[c], bias.shape(), "bias must be [C_out]"));
    }
    let plane = h * w;
    let b = bias.data().to_vec();
    for (ch, &bv) in b.iter().enumerate() {
        for x in &mut t.data_mut()[ch * plane..(ch + 1) * plane] {
            *x += bv;
        }
    }
    Ok(())
}

//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] records every operation in execution order; [`Tape::backward`]
//! replays the nodes in exact reverse order and accumulates gradients for
//! every `requires_grad` leaf reachable from the loss. Tensors placed on a
//! tape are never mutated; backward reads the saved forward values.

use crate::conv;
use crate::error::{Error, Result};
use crate::loss;
use crate::num::{real, Real};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Node<S: Real> {
    Leaf,
    Add(usize, usize),
    Mul(usize, usize),
    Relu(usize),
    Sigmoid(usize),
    Sum(usize),
    Mean(usize),
    /// scale * x + offset, elementwise.
    Affine {
        input: usize,
        scale: S,
    },
    Conv2d {
        input: usize,
        kernel: usize,
        bias: usize,
        stride: usize,
        padding: usize,
    },
    ConvT2d {
        input: usize,
        kernel: usize,
        bias: usize,
        stride: usize,
        padding: usize,
    },
    Bce {
        pred: usize,
        gt: Tensor<S>,
    },
    IouHat {
        pred: usize,
        gt: Tensor<S>,
    },
    SoftmaxCe {
        logits: usize,
        label: usize,
    },
    SmoothL1 {
        pred: usize,
        target: Tensor<S>,
    },
    SliceChannel {
        input: usize,
        channel: usize,
    },
}

/// Records a computation for later reverse-mode differentiation.
///
/// A tape is single-threaded; independent tapes may run on separate threads.
pub struct Tape<S: Real = f64> {
    values: Vec<Tensor<S>>,
    nodes: Vec<Node<S>>,
    requires: Vec<bool>,
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Real> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Real> Tape<S> {
    pub fn new() -> Self {
        Tape {
            values: Vec::new(),
            nodes: Vec::new(),
            requires: Vec::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor<S>, node: Node<S>, requires: bool) -> Var {
        self.values.push(value);
        self.nodes.push(node);
        self.requires.push(requires);
        self.grads.push(None);
        Var(self.values.len() - 1)
    }

    /// Registers a differentiable input.
    pub fn leaf(&mut self, value: Tensor<S>, requires_grad: bool) -> Var {
        self.push(value, Node::Leaf, requires_grad)
    }

    /// Registers a non-differentiable value.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Node::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.values[v.0]
    }

    /// Gradient of the last `backward` target w.r.t. `v`, if any flowed.
    pub fn grad(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads[v.0].as_ref()
    }

    fn req(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.requires[v.0])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.values[a.0].add(&self.values[b.0])?;
        let req = self.req(&[a, b]);
        Ok(self.push(out, Node::Add(a.0, b.0), req))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.values[a.0].check_same_shape(&self.values[b.0], "elementwise mul")?;
        let out = Tensor::new(
            self.values[a.0].shape().to_vec(),
            self.values[a.0]
                .data()
                .iter()
                .zip(self.values[b.0].data())
                .map(|(&x, &y)| x * y)
                .collect(),
        )?;
        let req = self.req(&[a, b]);
        Ok(self.push(out, Node::Mul(a.0, b.0), req))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.values[a.0].map(|x| x.max(S::zero()));
        let req = self.requires[a.0];
        self.push(out, Node::Relu(a.0), req)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.values[a.0].map(sigmoid_scalar);
        let req = self.requires[a.0];
        self.push(out, Node::Sigmoid(a.0), req)
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.values[a.0].sum());
        let req = self.requires[a.0];
        self.push(out, Node::Sum(a.0), req)
    }

    /// Mean of all entries, as a scalar.
    pub fn mean(&mut self, a: Var) -> Var {
        let n = real::<S>(self.values[a.0].numel() as f64);
        let out = Tensor::scalar(self.values[a.0].sum() / n);
        let req = self.requires[a.0];
        self.push(out, Node::Mean(a.0), req)
    }

    /// Elementwise `scale * x + offset`.
    pub fn affine(&mut self, a: Var, scale: S, offset: S) -> Var {
        let out = self.values[a.0].map(|x| scale * x + offset);
        let req = self.requires[a.0];
        self.push(out, Node::Affine { input: a.0, scale }, req)
    }

    /// Extracts channel `channel` of a `[C,H,W]` tensor as `[1,H,W]`.
    pub fn slice_channel(&mut self, a: Var, channel: usize) -> Result<Var> {
        let x = &self.values[a.0];
        if x.shape().len() != 3 {
            return Err(Error::Contract(format!(
                "slice_channel expects a [C,H,W] tensor, got shape {:?}",
                x.shape()
            )));
        }
        let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if channel >= c {
            return Err(Error::Contract(format!(
                "channel {channel} out of range for {c} channels"
            )));
        }
        let plane = h * w;
        let out = Tensor::new(
            vec![1, h, w],
            x.data()[channel * plane..(channel + 1) * plane].to_vec(),
        )?;
        let req = self.requires[a.0];
        Ok(self.push(out, Node::SliceChannel { input: a.0, channel }, req))
    }

    fn check_stride(stride: usize) -> Result<()> {
        if stride == 1 || stride == 2 {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "supported strides are 1 and 2, got {stride}"
            )))
        }
    }

    /// 2-D convolution: input `[C_in,H,W]`, kernel `[C_out,C_in,kH,kW]`,
    /// bias `[C_out]`.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        Self::check_stride(stride)?;
        let x = &self.values[input.0];
        let k = &self.values[kernel.0];
        let (h, w) = (x.shape()[1], x.shape()[2]);
        let (kh, kw) = (k.shape()[2], k.shape()[3]);
        let oh = conv::conv_out_extent(h, kh, stride, padding)?;
        let ow = conv::conv_out_extent(w, kw, stride, padding)?;
        let mut out = conv::gather(x, k, stride, padding, oh, ow)?;
        conv::add_bias(&mut out, &self.values[bias.0])?;
        let req = self.req(&[input, kernel, bias]);
        Ok(self.push(
            out,
            Node::Conv2d {
                input: input.0,
                kernel: kernel.0,
                bias: bias.0,
                stride,
                padding,
            },
            req,
        ))
    }

    /// Transposed 2-D convolution: input `[C_in,H,W]`, kernel
    /// `[C_in,C_out,kH,kW]`, bias `[C_out]`. Exact adjoint of [`Tape::conv2d`]
    /// with the same kernel and geometry (bias aside).
    pub fn conv2d_transpose(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        Self::check_stride(stride)?;
        let x = &self.values[input.0];
        let k = &self.values[kernel.0];
        let (h, w) = (x.shape()[1], x.shape()[2]);
        let (kh, kw) = (k.shape()[2], k.shape()[3]);
        let oh = conv::convt_out_extent(h, kh, stride, padding)?;
        let ow = conv::convt_out_extent(w, kw, stride, padding)?;
        let mut out = conv::scatter(x, k, stride, padding, oh, ow)?;
        conv::add_bias(&mut out, &self.values[bias.0])?;
        let req = self.req(&[input, kernel, bias]);
        Ok(self.push(
            out,
            Node::ConvT2d {
                input: input.0,
                kernel: kernel.0,
                bias: bias.0,
                stride,
                padding,
            },
            req,
        ))
    }

    /// Mean binary cross-entropy of `pred` against a fixed 0/1 target.
    pub fn bce(&mut self, pred: Var, gt: &Tensor<S>) -> Result<Var> {
        self.values[pred.0].check_same_shape(gt, "bce operands")?;
        let out = Tensor::scalar(loss::bce_raw(self.values[pred.0].data(), gt.data()));
        let req = self.requires[pred.0];
        Ok(self.push(
            out,
            Node::Bce {
                pred: pred.0,
                gt: gt.clone(),
            },
            req,
        ))
    }

    /// Differentiable IoU surrogate of `pred` against a fixed 0/1 target.
    pub fn iou_hat(&mut self, pred: Var, gt: &Tensor<S>) -> Result<Var> {
        self.values[pred.0].check_same_shape(gt, "iou_hat operands")?;
        let value = loss::iou_hat_raw(self.values[pred.0].data(), gt.data())?;
        let req = self.requires[pred.0];
        Ok(self.push(
            Tensor::scalar(value),
            Node::IouHat {
                pred: pred.0,
                gt: gt.clone(),
            },
            req,
        ))
    }

    /// The augmented mask loss: `α·BCE + (1−α)·(1 − iou_hat)`, or with
    /// `strict_paper` the literal sum `α·BCE + (1−α)·iou_hat`.
    pub fn mask_loss(
        &mut self,
        pred: Var,
        gt: &Tensor<S>,
        alpha: S,
        strict_paper: bool,
    ) -> Result<Var> {
        let b = self.bce(pred, gt)?;
        let i = self.iou_hat(pred, gt)?;
        let one = S::one();
        let bterm = self.affine(b, alpha, S::zero());
        let iterm = if strict_paper {
            self.affine(i, one - alpha, S::zero())
        } else {
            self.affine(i, -(one - alpha), one - alpha)
        };
        self.add(bterm, iterm)
    }

    /// Sparse softmax cross-entropy of a 1-D logit vector.
    pub fn softmax_ce(&mut self, logits: Var, label: usize) -> Result<Var> {
        let l = &self.values[logits.0];
        if label >= l.numel() {
            return Err(Error::Contract(format!(
                "label {label} out of range for {} logits",
                l.numel()
            )));
        }
        let value = loss::softmax_ce_raw(l.data(), label);
        let req = self.requires[logits.0];
        Ok(self.push(
            Tensor::scalar(value),
            Node::SoftmaxCe {
                logits: logits.0,
                label,
            },
            req,
        ))
    }

    /// Smooth-L1 (Huber) loss, mean over coordinates.
    pub fn smooth_l1(&mut self, pred: Var, target: &Tensor<S>) -> Result<Var> {
        self.values[pred.0].check_same_shape(target, "smooth_l1 operands")?;
        let value = loss::smooth_l1_raw(self.values[pred.0].data(), target.data());
        let req = self.requires[pred.0];
        Ok(self.push(
            Tensor::scalar(value),
            Node::SmoothL1 {
                pred: pred.0,
                target: target.clone(),
            },
            req,
        ))
    }

    fn accumulate(&mut self, idx: usize, grad: Tensor<S>) -> Result<()> {
        match &mut self.grads[idx] {
            Some(existing) => existing.add_assign(&grad),
            slot => {
                *slot = Some(grad);
                Ok(())
            }
        }
    }

    /// Populates gradients of `loss` w.r.t. every `requires_grad` value on
    /// the tape. `loss` must be scalar.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.values[loss.0].is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.values[loss.0].shape()
            )));
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[loss.0] = Some(Tensor::scalar(S::one()));

        for i in (0..self.nodes.len()).rev() {
            if !self.requires[i] {
                continue;
            }
            let Some(gout) = self.grads[i].clone() else {
                continue;
            };
            match &self.nodes[i] {
                Node::Leaf => {}
                Node::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.requires[a] {
                        self.accumulate(a, gout.clone())?;
                    }
                    if self.requires[b] {
                        self.accumulate(b, gout)?;
                    }
                }
                Node::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.requires[a] {
                        let g = mul_elem(&gout, &self.values[b]);
                        self.accumulate(a, g)?;
                    }
                    if self.requires[b] {
                        let g = mul_elem(&gout, &self.values[a]);
                        self.accumulate(b, g)?;
                    }
                }
                Node::Relu(a) => {
                    let a = *a;
                    let mask = &self.values[a];
                    let g = Tensor::new(
                        gout.shape().to_vec(),
                        gout.data()
                            .iter()
                            .zip(mask.data())
                            .map(|(&g, &x)| if x > S::zero() { g } else { S::zero() })
                            .collect(),
                    )?;
                    self.accumulate(a, g)?;
                }
                Node::Sigmoid(a) => {
                    let a = *a;
                    let y = &self.values[i];
                    let g = Tensor::new(
                        gout.shape().to_vec(),
                        gout.data()
                            .iter()
                            .zip(y.data())
                            .map(|(&g, &y)| g * y * (S::one() - y))
                            .collect(),
                    )?;
                    self.accumulate(a, g)?;
                }
                Node::Sum(a) => {
                    let a = *a;
                    let gs = gout.scalar_value()?;
                    let g = Tensor::full(self.values[a].shape(), gs);
                    self.accumulate(a, g)?;
                }
                Node::Mean(a) => {
                    let a = *a;
                    let n = real::<S>(self.values[a].numel() as f64);
                    let gs = gout.scalar_value()? / n;
                    let g = Tensor::full(self.values[a].shape(), gs);
                    self.accumulate(a, g)?;
                }
                Node::Affine { input, scale } => {
                    let (input, scale) = (*input, *scale);
                    self.accumulate(input, gout.scale(scale))?;
                }
                Node::Conv2d {
                    input,
                    kernel,
                    bias,
                    stride,
                    padding,
                } => {
                    let (input, kernel, bias, stride, padding) =
                        (*input, *kernel, *bias, *stride, *padding);
                    let xshape = self.values[input].shape().to_vec();
                    let kshape = self.values[kernel].shape().to_vec();
                    if self.requires[input] {
                        let g = conv::scatter(
                            &gout,
                            &self.values[kernel],
                            stride,
                            padding,
                            xshape[1],
                            xshape[2],
                        )?;
                        self.accumulate(input, g)?;
                    }
                    if self.requires[kernel] {
                        let g = conv::kernel_grad(
                            &gout,
                            &self.values[input],
                            stride,
                            padding,
                            kshape[2],
                            kshape[3],
                        )?;
                        self.accumulate(kernel, g)?;
                    }
                    if self.requires[bias] {
                        self.accumulate(bias, conv::channel_sum(&gout)?)?;
                    }
                }
                Node::ConvT2d {
                    input,
                    kernel,
                    bias,
                    stride,
                    padding,
                } => {
                    let (input, kernel, bias, stride, padding) =
                        (*input, *kernel, *bias, *stride, *padding);
                    let xshape = self.values[input].shape().to_vec();
                    let kshape = self.values[kernel].shape().to_vec();
                    if self.requires[input] {
                        let g = conv::gather(
                            &gout,
                            &self.values[kernel],
                            stride,
                            padding,
                            xshape[1],
                            xshape[2],
                        )?;
                        self.accumulate(input, g)?;
                    }
                    if self.requires[kernel] {
                        let g = conv::kernel_grad(
                            &self.values[input],
                            &gout,
                            stride,
                            padding,
                            kshape[2],
                            kshape[3],
                        )?;
                        self.accumulate(kernel, g)?;
                    }
                    if self.requires[bias] {
                        self.accumulate(bias, conv::channel_sum(&gout)?)?;
                    }
                }
                Node::Bce { pred, gt } => {
                    let pred = *pred;
                    let gs = gout.scalar_value()?;
                    let g = loss::bce_grad_raw(self.values[pred].data(), gt.data());
                    let g = Tensor::new(self.values[pred].shape().to_vec(), g)?.scale(gs);
                    self.accumulate(pred, g)?;
                }
                Node::IouHat { pred, gt } => {
                    let pred = *pred;
                    let gs = gout.scalar_value()?;
                    let g = loss::iou_hat_grad_raw(self.values[pred].data(), gt.data());
                    let g = Tensor::new(self.values[pred].shape().to_vec(), g)?.scale(gs);
                    self.accumulate(pred, g)?;
                }
                Node::SoftmaxCe { logits, label } => {
                    let (logits, label) = (*logits, *label);
                    let gs = gout.scalar_value()?;
                    let g = loss::softmax_ce_grad_raw(self.values[logits].data(), label);
                    let g = Tensor::new(self.values[logits].shape().to_vec(), g)?.scale(gs);
                    self.accumulate(logits, g)?;
                }
                Node::SmoothL1 { pred, target } => {
                    let pred = *pred;
                    let gs = gout.scalar_value()?;
                    let g = loss::smooth_l1_grad_raw(self.values[pred].data(), target.data());
                    let g = Tensor::new(self.values[pred].shape().to_vec(), g)?.scale(gs);
                    self.accumulate(pred, g)?;
                }
                Node::SliceChannel { input, channel } => {
                    let (input, channel) = (*input, *channel);
                    if self.requires[input] {
                        let mut g = Tensor::zeros(self.values[input].shape());
                        let plane = gout.numel();
                        g.data_mut()[channel * plane..(channel + 1) * plane]
                            .copy_from_slice(gout.data());
                        self.accumulate(input, g)?;
                    }
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn sigmoid_scalar<S: Real>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

fn mul_elem<S: Real>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    Tensor::new(
        a.shape().to_vec(),
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| x * y)
            .collect(),
    )
    .expect("same-shape operands")
}

/// Compares the analytic gradient of a scalar-valued tape computation with
/// central finite differences of step `h`.
///
/// Returns the maximum over coordinates of
/// `|analytic − central| / max(1, |central|)`.
pub fn finite_diff_check<S, F>(build: F, x: &Tensor<S>, h: S) -> Result<S>
where
    S: Real,
    F: Fn(&mut Tape<S>, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone(), true);
    let loss = build(&mut tape, xv)?;
    tape.backward(loss)?;
    let analytic = tape
        .grad(xv)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape()));

    let eval = |t: &Tensor<S>| -> Result<S> {
        let mut tape = Tape::new();
        let v = tape.constant(t.clone());
        let loss = build(&mut tape, v)?;
        let value = tape.value(loss).scalar_value()?;
        if !value.is_finite() {
            return Err(Error::Evaluation(
                "non-finite function value in finite-difference probe".into(),
            ));
        }
        Ok(value)
    };

    let mut max_err = S::zero();
    let two = real::<S>(2.0);
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let central = (eval(&plus)? - eval(&minus)?) / (two * h);
        let denom = S::one().max(central.abs());
        let err = (analytic.data()[i] - central).abs() / denom;
        max_err = max_err.max(err);
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn conv_identity_kernel() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(&[1, 3, 3], 1.0), true);
        let k = tape.leaf(t(&[1, 1, 1, 1], &[1.0]), true);
        let b = tape.leaf(Tensor::zeros(&[1]), true);
        let y = tape.conv2d(x, k, b, 1, 0).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 3, 3]);
        assert!(tape.value(y).data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn conv_sliding_window_by_hand() {
        // [1,2,3,4] * [1,-1] -> [-1,-1,-1]
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 1, 4], &[1.0, 2.0, 3.0, 4.0]));
        let k = tape.constant(t(&[1, 1, 1, 2], &[1.0, -1.0]));
        let b = tape.constant(Tensor::zeros(&[1]));
        let y = tape.conv2d(x, k, b, 1, 0).unwrap();
        assert_eq!(tape.value(y).data(), &[-1.0, -1.0, -1.0]);
    }

    #[test]
    fn conv_stride2_matches_quadruple_loop_oracle() {
        // 4x4 input, 2x2 kernel, stride 2, padding 0 -> 2x2 output.
        let xd: Vec<f64> = (0..16).map(|i| (i as f64) * 0.5 - 3.0).collect();
        let kd = [0.25, -1.0, 2.0, 0.5];
        let bias = 0.75;
        let mut oracle = [[0.0f64; 2]; 2];
        for oi in 0..2 {
            for oj in 0..2 {
                let mut acc = bias;
                for u in 0..2 {
                    for v in 0..2 {
                        acc += xd[(oi * 2 + u) * 4 + (oj * 2 + v)] * kd[u * 2 + v];
                    }
                }
                oracle[oi][oj] = acc;
            }
        }
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 4, 4], &xd));
        let k = tape.constant(t(&[1, 1, 2, 2], &kd));
        let b = tape.constant(t(&[1], &[bias]));
        let y = tape.conv2d(x, k, b, 2, 0).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 2, 2]);
        for oi in 0..2 {
            for oj in 0..2 {
                assert!((tape.value(y).data()[oi * 2 + oj] - oracle[oi][oj]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_channel_mismatch_reports_both_shapes() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros(&[2, 3, 3]));
        let k = tape.constant(Tensor::zeros(&[1, 3, 2, 2]));
        let b = tape.constant(Tensor::zeros(&[1]));
        let err = tape.conv2d(x, k, b, 1, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 3, 2, 2]") && msg.contains("[2, 3, 3]"), "{msg}");
    }

    #[test]
    fn conv_transpose_upsamples_ones() {
        // 1x1x1 input [1], 2x2 kernel of ones, stride 2 -> 2x2 of ones.
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 1, 1], &[1.0]));
        let k = tape.constant(Tensor::full(&[1, 1, 2, 2], 1.0));
        let b = tape.constant(Tensor::zeros(&[1]));
        let y = tape.conv2d_transpose(x, k, b, 2, 0).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 2, 2]);
        assert!(tape.value(y).data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn conv_transpose_zero_input_is_bias_broadcast() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, 3, 3]));
        let k = tape.constant(Tensor::full(&[2, 3, 2, 2], 0.7));
        let b = tape.constant(t(&[3], &[1.0, -2.0, 0.5]));
        let y = tape.conv2d_transpose(x, k, b, 2, 0).unwrap();
        let out = tape.value(y);
        for c in 0..3 {
            let expect = [1.0, -2.0, 0.5][c];
            for i in 0..out.shape()[1] {
                for j in 0..out.shape()[2] {
                    assert_eq!(out.at3(c, i, j), expect);
                }
            }
        }
    }

    #[test]
    fn unsupported_stride_rejected() {
        let mut tape: Tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 4, 4]));
        let k = tape.constant(Tensor::zeros(&[1, 1, 2, 2]));
        let b = tape.constant(Tensor::zeros(&[1]));
        assert!(tape.conv2d(x, k, b, 3, 0).is_err());
    }

    #[test]
    fn slice_channel_extracts_plane_and_scatters_grad() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[2, 1, 2], &[1.0, 2.0, 3.0, 4.0]), true);
        let s = tape.slice_channel(x, 1).unwrap();
        assert_eq!(tape.value(s).shape(), &[1, 1, 2]);
        assert_eq!(tape.value(s).data(), &[3.0, 4.0]);
        let m = tape.mul(s, s).unwrap();
        let loss = tape.sum(m);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[0.0, 0.0, 6.0, 8.0]);
    }

    #[test]
    fn slice_channel_rejects_bad_inputs() {
        let mut tape = Tape::<f64>::new();
        let flat = tape.leaf(t(&[4], &[1.0, 2.0, 3.0, 4.0]), false);
        assert!(tape.slice_channel(flat, 0).is_err());
        let x = tape.leaf(t(&[2, 1, 2], &[1.0, 2.0, 3.0, 4.0]), false);
        assert!(tape.slice_channel(x, 2).is_err());
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2, 2], &[1.0, -2.0, 3.0, 4.0]), true);
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_of_sum_of_squares() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[1.0, 2.0, 3.0]), true);
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1.0, 2.0]), true);
        let y = tape.relu(x);
        assert!(tape.backward(y).is_err());
    }

    #[test]
    fn sigmoid_values() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2], &[0.0, 3f64.ln()]));
        let y = tape.sigmoid(x);
        let out = tape.value(y).data().to_vec();
        assert!((out[0] - 0.5).abs() < 1e-15);
        assert!((out[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn add_identity() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[3], &[1.0, -2.5, 4.0]));
        let z = tape.constant(Tensor::zeros(&[3]));
        let y = tape.add(x, z).unwrap();
        assert_eq!(tape.value(y).data(), tape.value(x).data());
    }

    #[test]
    fn finite_diff_on_sum_of_squares() {
        let x = t(&[4], &[0.3, -1.2, 2.0, 0.7]);
        let err = finite_diff_check(
            |tape, v| {
                let sq = tape.mul(v, v)?;
                Ok(tape.sum(sq))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "err={err}");
    }

    #[test]
    fn finite_diff_exact_for_linear() {
        let x = t(&[3], &[0.5, -0.25, 1.5]);
        let err = finite_diff_check(|tape, v| Ok(tape.sum(v)), &x, 1e-5).unwrap();
        assert!(err < 1e-10, "err={err}");
    }

    #[test]
    fn gradients_are_deterministic() {
        let run = || {
            let mut tape = Tape::new();
            let x = tape.leaf(t(&[1, 4, 4], &(0..16).map(|i| (i as f64).sin()).collect::<Vec<_>>()), true);
            let k = tape.leaf(t(&[1, 1, 2, 2], &[0.3, -0.7, 0.11, 0.9]), true);
            let b = tape.leaf(t(&[1], &[0.2]), true);
            let y = tape.conv2d(x, k, b, 1, 0).unwrap();
            let s = tape.sigmoid(y);
            let l = tape.mean(s);
            tape.backward(l).unwrap();
            (
                tape.grad(x).unwrap().data().to_vec(),
                tape.grad(k).unwrap().data().to_vec(),
                tape.grad(b).unwrap().data().to_vec(),
            )
        };
        let a = run();
        let b = run();
        assert_eq!(a, b); // bit-identical
    }

    #[test]
    fn works_in_f32() {
        let mut tape: Tape<f32> = Tape::new();
        let x = tape.leaf(Tensor::full(&[2, 2], 1.5f32), true);
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[3.0f32; 4]);
    }
}

//! Toy-scale training driver: seeded dataset splitting, Adam with decoupled
//! weight decay, the annealed mask loss, and best-validation weight
//! selection.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::loss::AlphaSchedule;
use crate::mask::BinaryMask;
use crate::mask_head::{MaskHeadConfig, MaskHeadModel, SkipType};
use crate::synth::SynthCase;
use crate::tensor::Tensor;

/// One supervised example: an image and its `[classes, H, W]` target of
/// 0/1 values (disc plane, cup plane).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainCase {
    pub image: Tensor<f64>,
    pub target: Tensor<f64>,
}

impl TrainCase {
    pub fn from_synth(case: &SynthCase) -> Result<Self> {
        let h = case.disc_mask.height();
        let w = case.disc_mask.width();
        let mut data = Vec::with_capacity(2 * h * w);
        for mask in [&case.disc_mask, &case.cup_mask] {
            data.extend(mask.data().iter().map(|&v| if v != 0 { 1.0 } else { 0.0 }));
        }
        Ok(TrainCase {
            image: case.image.clone(),
            target: Tensor::new(vec![2, h, w], data)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Outer iterations; each runs `passes_per_iteration` optimizer steps.
    pub iterations: usize,
    pub passes_per_iteration: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Decoupled weight decay applied directly to the parameters.
    pub weight_decay: f64,
    pub alpha: AlphaSchedule,
    pub skip_type: SkipType,
    /// Train/validation/holdout fractions.
    pub split: (f64, f64, f64),
    pub seed: u64,
    /// Use the literal annealed loss `α·bce + (1−α)·iou_hat` instead of the
    /// default `α·bce + (1−α)·(1−iou_hat)`.
    pub strict_paper_loss: bool,
    /// Architecture; `skip_type` above overrides the one stored here.
    pub model: MaskHeadConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 40,
            passes_per_iteration: 10,
            batch_size: 8,
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 1e-4,
            // period-1 decrement scaled so 40 iterations cover the same
            // 0.7 → 0.26 ramp as the reference 450-iteration schedule
            alpha: AlphaSchedule {
                initial: 0.7,
                decrement: 0.011,
                period: 1,
                floor: 0.26,
            },
            skip_type: SkipType::T3,
            split: (0.7, 0.2, 0.1),
            seed: 21,
            strict_paper_loss: false,
            model: MaskHeadConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.split;
        if !(a > 0.0 && b > 0.0 && c > 0.0 && a + b + c <= 1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "split ratios ({a}, {b}, {c}) must be positive and sum to <= 1"
            )));
        }
        if self.batch_size == 0 || self.iterations == 0 || self.passes_per_iteration == 0 {
            return Err(Error::Config(
                "iterations, passes and batch size must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("moment decays must lie in [0, 1)".into()));
        }
        if self.learning_rate < 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Config(
                "learning rate and weight decay must be non-negative".into(),
            ));
        }
        self.alpha.validate()?;
        self.model.validate()
    }
}

/// One training-log row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub iteration: usize,
    pub alpha: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Seconds since training started; excluded from determinism
    /// comparisons.
    pub wall_clock: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

impl TrainLog {
    /// The deterministic columns (everything but wall clock).
    pub fn deterministic_view(&self) -> Vec<(usize, f64, f64, f64)> {
        self.records
            .iter()
            .map(|r| (r.iteration, r.alpha, r.train_loss, r.val_loss))
            .collect()
    }

    pub fn final_val_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.val_loss)
    }
}

/// Seeded shuffle, then partition: train and validation sizes round down,
/// the remainder becomes the holdout.
pub fn split_dataset<T: Clone>(
    cases: &[T],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let (ra, rb, rc) = ratios;
    if !(ra > 0.0 && rb > 0.0 && rc > 0.0 && ra + rb + rc <= 1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "split ratios ({ra}, {rb}, {rc}) must be positive and sum to <= 1"
        )));
    }
    if cases.len() < 3 {
        return Err(Error::Config(format!(
            "need at least 3 cases to split, got {}",
            cases.len()
        )));
    }
    let n = cases.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = (n as f64 * ra).floor() as usize;
    let n_val = (n as f64 * rb).floor() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::Config(format!(
            "split of {n} cases by ({ra}, {rb}, {rc}) leaves an empty partition"
        )));
    }
    let pick = |idx: &[usize]| idx.iter().map(|&i| cases[i].clone()).collect::<Vec<T>>();
    Ok((
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_val]),
        pick(&order[n_train + n_val..]),
    ))
}

struct Adam {
    m: Vec<Tensor<f64>>,
    v: Vec<Tensor<f64>>,
    t: u64,
}

const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(model: &MaskHeadModel<f64>) -> Self {
        let zeros: Vec<Tensor<f64>> = model
            .parameters()
            .iter()
            .map(|p| Tensor::zeros(p.shape()))
            .collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, model: &mut MaskHeadModel<f64>, grads: &[Tensor<f64>], cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        let (m, v) = (&mut self.m, &mut self.v);
        model.update_parameters(|k, p| {
            let g = grads[k].data();
            let mk = m[k].data_mut();
            for (mi, &gi) in mk.iter_mut().zip(g) {
                *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            }
            let vk = v[k].data_mut();
            for (vi, &gi) in vk.iter_mut().zip(g) {
                *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            }
            for ((pi, &mi), &vi) in p.data_mut().iter_mut().zip(mk.iter()).zip(vk.iter()) {
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                *pi -= cfg.learning_rate * cfg.weight_decay * *pi;
                *pi -= cfg.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        });
    }
}

/// Mask loss of `model` on one case, averaged over class planes so a small
/// structure (the cup) weighs as much as a large one (the disc) — the IoU
/// term computed jointly over planes is dominated by the largest plane and
/// starves the others of gradient. Gradients are accumulated into
/// `grad_acc` when provided.
fn case_loss(
    model: &MaskHeadModel<f64>,
    case: &TrainCase,
    alpha: f64,
    strict: bool,
    grad_acc: Option<&mut [Tensor<f64>]>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let img = tape.constant(case.image.clone());
    let fwd = model.forward(&mut tape, img)?;
    let shape = case.target.shape().to_vec();
    let (classes, h, w) = (shape[0], shape[1], shape[2]);
    let plane = h * w;
    let mut loss: Option<Var> = None;
    for c in 0..classes {
        let pred_c = tape.slice_channel(fwd.output, c)?;
        let gt_c = Tensor::new(
            vec![1, h, w],
            case.target.data()[c * plane..(c + 1) * plane].to_vec(),
        )?;
        let l = tape.mask_loss(pred_c, &gt_c, alpha, strict)?;
        let scaled = tape.affine(l, 1.0 / classes as f64, 0.0);
        loss = Some(match loss {
            None => scaled,
            Some(acc) => tape.add(acc, scaled)?,
        });
    }
    let loss = loss.ok_or_else(|| Error::Contract("target has no class planes".into()))?;
    let value = tape.value(loss).scalar_value()?;
    if let Some(acc) = grad_acc {
        tape.backward(loss)?;
        for (k, &pvar) in fwd.params.iter().enumerate() {
            if let Some(g) = tape.grad(pvar) {
                acc[k].add_assign(g)?;
            }
        }
    }
    Ok(value)
}

/// Trains a mask head on `dataset` and returns the parameters that achieved
/// the lowest validation loss, with the per-iteration log.
pub fn train(
    config: &TrainConfig,
    dataset: &[TrainCase],
) -> Result<(MaskHeadModel<f64>, TrainLog)> {
    config.validate()?;
    let (train_set, val_set, _holdout) = split_dataset(dataset, config.split, config.seed)?;
    if config.batch_size > train_set.len() {
        return Err(Error::Config(format!(
            "batch size {} exceeds training-set size {}",
            config.batch_size,
            train_set.len()
        )));
    }
    let mut model_cfg = config.model.clone();
    model_cfg.skip_type = config.skip_type;
    let mut model = MaskHeadModel::<f64>::build(model_cfg, config.seed)?;
    let mut adam = Adam::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let start = Instant::now();

    let mut log = TrainLog::default();
    let mut best: Option<(f64, Vec<Tensor<f64>>)> = None;
    let strict = config.strict_paper_loss;
    for iteration in 0..config.iterations {
        let alpha = config.alpha.alpha_at(iteration);
        let mut iter_loss = 0.0;
        for _pass in 0..config.passes_per_iteration {
            let mut grads: Vec<Tensor<f64>> = model
                .parameters()
                .iter()
                .map(|p| Tensor::zeros(p.shape()))
                .collect();
            let mut batch_loss = 0.0;
            for _ in 0..config.batch_size {
                let case = &train_set[rng.gen_range(0..train_set.len())];
                batch_loss += case_loss(&model, case, alpha, strict, Some(&mut grads))?;
            }
            batch_loss /= config.batch_size as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite training loss at iteration {iteration}; last \
                     finite iteration was {}",
                    iteration.wrapping_sub(1)
                )));
            }
            let inv = 1.0 / config.batch_size as f64;
            for g in &mut grads {
                *g = g.scale(inv);
            }
            adam.step(&mut model, &grads, config);
            iter_loss += batch_loss;
        }
        iter_loss /= config.passes_per_iteration as f64;

        let mut val_loss = 0.0;
        for case in &val_set {
            val_loss += case_loss(&model, case, alpha, strict, None)?;
        }
        val_loss /= val_set.len() as f64;
        if !val_loss.is_finite() {
            return Err(Error::Training(format!(
                "non-finite validation loss at iteration {iteration}; last \
                 finite iteration was {}",
                iteration.wrapping_sub(1)
            )));
        }
        if best.as_ref().map_or(true, |(b, _)| val_loss < *b) {
            let snapshot = model.parameters().into_iter().cloned().collect();
            best = Some((val_loss, snapshot));
        }
        log.records.push(TrainRecord {
            iteration,
            alpha,
            train_loss: iter_loss,
            val_loss,
            wall_clock: start.elapsed().as_secs_f64(),
        });
    }
    if let Some((_, snapshot)) = best {
        model.update_parameters(|k, p| *p = snapshot[k].clone());
    }
    Ok((model, log))
}

/// Scale-and-pad placement of an image inside a `max_dim × max_dim` canvas,
/// sufficient to map padded-space masks back onto the original raster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub scale: f64,
    pub offset_row: usize,
    pub offset_col: usize,
    pub orig_h: usize,
    pub orig_w: usize,
    pub resized_h: usize,
    pub resized_w: usize,
}

/// Downscales so the larger spatial extent does not exceed `max_dim`
/// (bilinear, aspect preserved) and zero-pads symmetrically to
/// `max_dim × max_dim`.
pub fn resize_pad(image: &Tensor<f64>, max_dim: usize) -> Result<(Tensor<f64>, Placement)> {
    let shape = image.shape();
    if shape.len() != 3 {
        return Err(Error::dim(&[0, 0, 0], shape, "resize_pad expects [C,H,W]"));
    }
    if max_dim == 0 {
        return Err(Error::Config("max_dim must be positive".into()));
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let longest = h.max(w);
    let scale = if longest > max_dim {
        max_dim as f64 / longest as f64
    } else {
        1.0
    };
    let rh = ((h as f64 * scale).round() as usize).clamp(1, max_dim);
    let rw = ((w as f64 * scale).round() as usize).clamp(1, max_dim);
    let off_r = (max_dim - rh) / 2;
    let off_c = (max_dim - rw) / 2;
    let mut out = Tensor::zeros(&[c, max_dim, max_dim]);
    let src = image.data();
    let dst = out.data_mut();
    for ch in 0..c {
        for i in 0..rh {
            // pixel-center alignment: dest center i maps to source
            // (i + 0.5)/s - 0.5
            let sy = ((i as f64 + 0.5) * h as f64 / rh as f64 - 0.5).clamp(0.0, h as f64 - 1.0);
            let y0 = sy.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let fy = sy - y0 as f64;
            for j in 0..rw {
                let sx =
                    ((j as f64 + 0.5) * w as f64 / rw as f64 - 0.5).clamp(0.0, w as f64 - 1.0);
                let x0 = sx.floor() as usize;
                let x1 = (x0 + 1).min(w - 1);
                let fx = sx - x0 as f64;
                let at = |y: usize, x: usize| src[ch * h * w + y * w + x];
                let v = (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x1))
                    + fy * ((1.0 - fx) * at(y1, x0) + fx * at(y1, x1));
                dst[ch * max_dim * max_dim + (i + off_r) * max_dim + (j + off_c)] = v;
            }
        }
    }
    Ok((
        out,
        Placement {
            scale,
            offset_row: off_r,
            offset_col: off_c,
            orig_h: h,
            orig_w: w,
            resized_h: rh,
            resized_w: rw,
        },
    ))
}

impl Placement {
    /// Maps a mask predicted on the padded canvas back to the original
    /// raster by inverting the crop and scale (nearest neighbor).
    pub fn map_back(&self, mask: &BinaryMask) -> Result<BinaryMask> {
        let canvas = mask.width();
        if mask.height() != canvas
            || self.offset_row + self.resized_h > canvas
            || self.offset_col + self.resized_w > canvas
        {
            return Err(Error::dim(
                &[self.offset_row + self.resized_h, self.offset_col + self.resized_w],
                &[mask.height(), mask.width()],
                "mask does not cover the recorded placement",
            ));
        }
        let mut out = BinaryMask::new(self.orig_w, self.orig_h);
        for r in 0..self.orig_h {
            let sr = ((r as f64 + 0.5) * self.resized_h as f64 / self.orig_h as f64 - 0.5)
                .round()
                .clamp(0.0, self.resized_h as f64 - 1.0) as usize;
            for c in 0..self.orig_w {
                let sc = ((c as f64 + 0.5) * self.resized_w as f64 / self.orig_w as f64 - 0.5)
                    .round()
                    .clamp(0.0, self.resized_w as f64 - 1.0) as usize;
                out.set(
                    r,
                    c,
                    mask.get(sr + self.offset_row, sc + self.offset_col),
                );
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_cohort, SynthSpec};

    fn tiny_dataset(n: usize) -> Vec<TrainCase> {
        let spec = SynthSpec {
            image_size: 16,
            disc_semi_axes: (4.0, 6.0),
            center_jitter: 1.0,
            ..SynthSpec::default()
        };
        gen_cohort(&spec, n, 33)
            .unwrap()
            .iter()
            .map(|c| TrainCase::from_synth(c).unwrap())
            .collect()
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            iterations: 2,
            passes_per_iteration: 2,
            batch_size: 2,
            model: MaskHeadConfig {
                input_size: 16,
                blocks: 2,
                channels: vec![2, 4],
                ..MaskHeadConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn split_sizes_follow_rounding_rule() {
        let cases: Vec<usize> = (0..10).collect();
        let (tr, va, ho) = split_dataset(&cases, (0.7, 0.2, 0.1), 5).unwrap();
        assert_eq!((tr.len(), va.len(), ho.len()), (7, 2, 1));
    }

    #[test]
    fn split_is_deterministic_disjoint_and_covering() {
        let cases: Vec<usize> = (0..23).collect();
        let a = split_dataset(&cases, (0.7, 0.2, 0.1), 9).unwrap();
        let b = split_dataset(&cases, (0.7, 0.2, 0.1), 9).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.0.iter().chain(&a.1).chain(&a.2).copied().collect();
        all.sort_unstable();
        assert_eq!(all, cases);
        let c = split_dataset(&cases, (0.7, 0.2, 0.1), 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_splits_are_rejected() {
        let cases: Vec<usize> = (0..10).collect();
        assert!(split_dataset(&cases, (0.7, 0.2, 0.2), 0).is_err()); // sum > 1
        assert!(split_dataset(&cases, (0.05, 0.9, 0.05), 0).is_err()); // empty train
        assert!(split_dataset(&[1, 2], (0.7, 0.2, 0.1), 0).is_err());
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let data = tiny_dataset(12);
        let mut cfg = tiny_config();
        cfg.iterations = 1;
        cfg.learning_rate = 0.0;
        let mut model_cfg = cfg.model.clone();
        model_cfg.skip_type = cfg.skip_type;
        let reference = MaskHeadModel::<f64>::build(model_cfg, cfg.seed).unwrap();
        let (model, log) = train(&cfg, &data).unwrap();
        assert_eq!(model, reference);
        assert_eq!(log.records.len(), 1);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let data = tiny_dataset(12);
        let cfg = tiny_config();
        let (m1, l1) = train(&cfg, &data).unwrap();
        let (m2, l2) = train(&cfg, &data).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(l1.deterministic_view(), l2.deterministic_view());
    }

    #[test]
    fn log_alpha_matches_schedule() {
        let data = tiny_dataset(12);
        let mut cfg = tiny_config();
        cfg.iterations = 3;
        let (_, log) = train(&cfg, &data).unwrap();
        for (i, r) in log.records.iter().enumerate() {
            assert_eq!(r.iteration, i);
            assert_eq!(r.alpha, cfg.alpha.alpha_at(i));
        }
    }

    #[test]
    fn oversized_batch_is_config_error() {
        let data = tiny_dataset(12);
        let mut cfg = tiny_config();
        cfg.batch_size = 100;
        assert!(train(&cfg, &data).is_err());
    }

    #[test]
    fn resize_pad_identity_on_square_at_max() {
        let img = Tensor::new(vec![1, 4, 4], (0..16).map(|i| i as f64).collect()).unwrap();
        let (out, p) = resize_pad(&img, 4).unwrap();
        assert_eq!(out, img);
        assert_eq!(p.scale, 1.0);
        assert_eq!((p.offset_row, p.offset_col), (0, 0));
    }

    #[test]
    fn resize_pad_pads_shorter_axis_symmetrically() {
        // 16 rows x 8 cols into a 16-canvas: unscaled, 4-col bands
        let img = Tensor::full(&[1, 16, 8], 1.0);
        let (out, p) = resize_pad(&img, 16).unwrap();
        assert_eq!(p.scale, 1.0);
        assert_eq!((p.offset_row, p.offset_col), (0, 4));
        assert_eq!(out.shape(), &[1, 16, 16]);
        // band columns are zero, interior ones
        assert_eq!(out.at3(0, 8, 0), 0.0);
        assert_eq!(out.at3(0, 8, 3), 0.0);
        assert_eq!(out.at3(0, 8, 4), 1.0);
        assert_eq!(out.at3(0, 8, 11), 1.0);
        assert_eq!(out.at3(0, 8, 12), 0.0);
    }

    #[test]
    fn resize_pad_halves_oversized_input() {
        // 32x16 into a 16-canvas: scaled 0.5x to 16x8, padded to 16x16
        let img = Tensor::full(&[1, 32, 16], 2.0);
        let (out, p) = resize_pad(&img, 16).unwrap();
        assert!((p.scale - 0.5).abs() < 1e-12);
        assert_eq!((p.resized_h, p.resized_w), (16, 8));
        assert_eq!((p.offset_row, p.offset_col), (0, 4));
        assert_eq!(out.at3(0, 0, 4), 2.0); // constant image survives bilinear
        assert_eq!(out.at3(0, 0, 0), 0.0);
    }

    #[test]
    fn placement_maps_mask_back_exactly_when_unscaled() {
        let img = Tensor::full(&[1, 12, 8], 1.0);
        let (_, p) = resize_pad(&img, 12).unwrap();
        let mut padded = BinaryMask::new(12, 12);
        // paint the placed region of a feature at original (3, 5)
        padded.set(3 + p.offset_row, 5 + p.offset_col, true);
        let back = p.map_back(&padded).unwrap();
        assert_eq!(back.foreground_count(), 1);
        assert!(back.get(3, 5));
    }
}

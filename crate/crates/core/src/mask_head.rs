//! Residual encoder-decoder mask head.
//!
//! The encoder stacks blocks of two stride-1 same-padding convolutions
//! (ReLU) separated by stride-2 downsampling convolutions; the decoder
//! mirrors it with one stride-2 transposed convolution and two stride-1
//! convolutions per block, ending in a 1×1 convolution and a sigmoid per
//! class. Three residual skip topologies are selectable:
//!
//! * `T1` — each encoder block's input is added to the output of the
//!   block's second convolution.
//! * `T2` — each encoder convolution's output is added to the output of
//!   the mirror decoder convolution.
//! * `T3` — each encoder block's output is added to the mirror decoder
//!   block's output.
//!
//! Where channel counts differ at a junction, a learned 1×1 projection
//! convolution is inserted.

use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::num::{real, Real};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"REDH1";
pub const DEFAULT_MASK_THRESHOLD: u32 = 127;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipType {
    T1,
    T2,
    T3,
}

impl SkipType {
    pub fn all() -> [SkipType; 3] {
        [SkipType::T1, SkipType::T2, SkipType::T3]
    }

    fn to_u8(self) -> u8 {
        match self {
            SkipType::T1 => 1,
            SkipType::T2 => 2,
            SkipType::T3 => 3,
        }
    }

    fn from_u8(v: u8) -> Result<Self> {
        match v {
            1 => Ok(SkipType::T1),
            2 => Ok(SkipType::T2),
            3 => Ok(SkipType::T3),
            _ => Err(Error::Contract(format!("unknown skip type tag {v}"))),
        }
    }
}

impl FromStr for SkipType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t1" => Ok(SkipType::T1),
            "t2" => Ok(SkipType::T2),
            "t3" => Ok(SkipType::T3),
            other => Err(Error::Config(format!(
                "unknown skip type '{other}' (expected t1, t2 or t3)"
            ))),
        }
    }
}

impl std::fmt::Display for SkipType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SkipType::T1 => write!(f, "t1"),
            SkipType::T2 => write!(f, "t2"),
            SkipType::T3 => write!(f, "t3"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskHeadConfig {
    /// Square input spatial extent.
    pub input_size: usize,
    pub in_channels: usize,
    pub blocks: usize,
    /// Channel width per block; length must equal `blocks`.
    pub channels: Vec<usize>,
    /// Odd kernel extent of the stride-1 convolutions.
    pub kernel_size: usize,
    pub skip_type: SkipType,
    /// Independent output probability maps (disc, cup).
    pub classes: usize,
}

impl Default for MaskHeadConfig {
    fn default() -> Self {
        MaskHeadConfig {
            input_size: 64,
            in_channels: 1,
            blocks: 3,
            channels: vec![16, 32, 64],
            kernel_size: 3,
            skip_type: SkipType::T3,
            classes: 2,
        }
    }
}

impl MaskHeadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 {
            return Err(Error::Config("blocks must be >= 1".into()));
        }
        if self.channels.len() != self.blocks {
            return Err(Error::Config(format!(
                "channel list length {} must equal blocks {}",
                self.channels.len(),
                self.blocks
            )));
        }
        if self.channels.iter().any(|&c| c == 0) || self.in_channels == 0 || self.classes == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        let div = 1usize << self.blocks;
        if self.input_size == 0 || self.input_size % div != 0 {
            return Err(Error::Config(format!(
                "input size {} must be divisible by 2^blocks = {div}",
                self.input_size
            )));
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return Err(Error::Config(format!(
                "kernel size {} must be odd",
                self.kernel_size
            )));
        }
        Ok(())
    }

    /// Channels leaving decoder block `b` (the mirror of encoder block `b`).
    fn dec_out_channels(&self, b: usize) -> usize {
        if b == 0 {
            self.channels[0]
        } else {
            self.channels[b - 1]
        }
    }

    /// Channels entering encoder block `b`.
    fn enc_in_channels(&self, b: usize) -> usize {
        if b == 0 {
            self.in_channels
        } else {
            self.channels[b - 1]
        }
    }
}

/// One convolution layer's parameters and geometry.
#[derive(Debug, Clone, PartialEq)]
struct ConvLayer<S: Real> {
    weight: Tensor<S>,
    bias: Tensor<S>,
    stride: usize,
    padding: usize,
    transpose: bool,
}

impl<S: Real> ConvLayer<S> {
    /// Zero-initialized convolution; `weight` layout `[C_out,C_in,k,k]`.
    fn conv(c_in: usize, c_out: usize, k: usize, stride: usize, padding: usize) -> Self {
        ConvLayer {
            weight: Tensor::zeros(&[c_out, c_in, k, k]),
            bias: Tensor::zeros(&[c_out]),
            stride,
            padding,
            transpose: false,
        }
    }

    /// Zero-initialized transposed convolution; layout `[C_in,C_out,k,k]`.
    fn conv_t(c_in: usize, c_out: usize, k: usize, stride: usize, padding: usize) -> Self {
        ConvLayer {
            weight: Tensor::zeros(&[c_in, c_out, k, k]),
            bias: Tensor::zeros(&[c_out]),
            stride,
            padding,
            transpose: true,
        }
    }

    fn init(&mut self, rng: &mut ChaCha8Rng) {
        let shape = self.weight.shape();
        let fan_in = if self.transpose {
            shape[0] * shape[2] * shape[3]
        } else {
            shape[1] * shape[2] * shape[3]
        };
        let bound = (1.0 / fan_in as f64).sqrt();
        for w in self.weight.data_mut() {
            *w = real::<S>(rng.gen_range(-bound..bound));
        }
        // biases stay zero
    }

    fn apply(&self, tape: &mut Tape<S>, input: Var) -> Result<(Var, Var, Var)> {
        let w = tape.leaf(self.weight.clone(), true);
        let b = tape.leaf(self.bias.clone(), true);
        let out = if self.transpose {
            tape.conv2d_transpose(input, w, b, self.stride, self.padding)?
        } else {
            tape.conv2d(input, w, b, self.stride, self.padding)?
        };
        Ok((out, w, b))
    }
}

/// Mask head with per-layer kernels and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskHeadModel<S: Real = f64> {
    pub config: MaskHeadConfig,
    enc: Vec<[ConvLayer<S>; 2]>,
    down: Vec<ConvLayer<S>>,
    dec_up: Vec<ConvLayer<S>>,
    dec_conv: Vec<[ConvLayer<S>; 2]>,
    head: ConvLayer<S>,
    /// Per-block 1×1 projections, present only where the active skip type
    /// joins mismatched channel counts.
    proj: Vec<Option<ConvLayer<S>>>,
}

/// Tape handles produced by one forward pass: the output probabilities and
/// the parameter leaves in checkpoint declaration order.
pub struct ForwardVars {
    pub output: Var,
    pub params: Vec<Var>,
}

impl<S: Real> MaskHeadModel<S> {
    /// Builds a model with all parameters zero (used by the checkpoint
    /// loader and the constant-output test).
    pub fn zeroed(config: MaskHeadConfig) -> Result<Self> {
        config.validate()?;
        let k = config.kernel_size;
        let pad = k / 2;
        let mut enc = Vec::new();
        let mut down = Vec::new();
        let mut dec_up = Vec::new();
        let mut dec_conv = Vec::new();
        for b in 0..config.blocks {
            let c_in = config.enc_in_channels(b);
            let c = config.channels[b];
            enc.push([
                ConvLayer::conv(c_in, c, k, 1, pad),
                ConvLayer::conv(c, c, k, 1, pad),
            ]);
            down.push(ConvLayer::conv(c, c, k, 2, pad));
            let out = config.dec_out_channels(b);
            dec_up.push(ConvLayer::conv_t(c, c, 2, 2, 0));
            dec_conv.push([
                ConvLayer::conv(c, c, k, 1, pad),
                ConvLayer::conv(c, out, k, 1, pad),
            ]);
        }
        let head = ConvLayer::conv(config.channels[0], config.classes, 1, 1, 0);
        let proj = (0..config.blocks)
            .map(|b| {
                let (from, to) = match config.skip_type {
                    SkipType::T1 => (config.enc_in_channels(b), config.channels[b]),
                    SkipType::T2 | SkipType::T3 => {
                        (config.channels[b], config.dec_out_channels(b))
                    }
                };
                if from != to {
                    Some(ConvLayer::conv(from, to, 1, 1, 0))
                } else {
                    None
                }
            })
            .collect();
        Ok(MaskHeadModel {
            config,
            enc,
            down,
            dec_up,
            dec_conv,
            head,
            proj,
        })
    }

    /// Builds a model with fan-in-scaled uniform initialization,
    /// deterministic in `seed`.
    pub fn build(config: MaskHeadConfig, seed: u64) -> Result<Self> {
        let mut model = Self::zeroed(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        model.for_each_layer_mut(|layer| layer.init(&mut rng));
        Ok(model)
    }

    /// Visits every layer in checkpoint declaration order.
    fn for_each_layer_mut(&mut self, mut f: impl FnMut(&mut ConvLayer<S>)) {
        for b in 0..self.config.blocks {
            f(&mut self.enc[b][0]);
            f(&mut self.enc[b][1]);
            f(&mut self.down[b]);
        }
        for b in (0..self.config.blocks).rev() {
            f(&mut self.dec_up[b]);
            f(&mut self.dec_conv[b][0]);
            f(&mut self.dec_conv[b][1]);
        }
        f(&mut self.head);
        for p in self.proj.iter_mut().flatten() {
            f(p);
        }
    }

    fn for_each_layer(&self, mut f: impl FnMut(&ConvLayer<S>)) {
        for b in 0..self.config.blocks {
            f(&self.enc[b][0]);
            f(&self.enc[b][1]);
            f(&self.down[b]);
        }
        for b in (0..self.config.blocks).rev() {
            f(&self.dec_up[b]);
            f(&self.dec_conv[b][0]);
            f(&self.dec_conv[b][1]);
        }
        f(&self.head);
        for p in self.proj.iter().flatten() {
            f(p);
        }
    }

    /// Parameter tensors (weight then bias per layer) in declaration order.
    pub fn parameters(&self) -> Vec<&Tensor<S>> {
        let mut out = Vec::new();
        let mut collect: Vec<(*const Tensor<S>, *const Tensor<S>)> = Vec::new();
        self.for_each_layer(|l| collect.push((&l.weight, &l.bias)));
        for (w, b) in collect {
            // SAFETY: pointers come from &self borrows that outlive this call
            out.push(unsafe { &*w });
            out.push(unsafe { &*b });
        }
        out
    }

    /// Applies `f(index, tensor)` to every parameter in declaration order.
    pub fn update_parameters(&mut self, mut f: impl FnMut(usize, &mut Tensor<S>)) {
        let mut idx = 0;
        self.for_each_layer_mut(|l| {
            f(idx, &mut l.weight);
            idx += 1;
            f(idx, &mut l.bias);
            idx += 1;
        });
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().len()
    }

    /// Total scalar parameters.
    pub fn scalar_parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.numel()).sum()
    }

    /// Number of convolution layers in the encoder (incl. downsampling).
    pub fn encoder_layer_count(&self) -> usize {
        self.config.blocks * 3
    }

    /// Number of layers in the decoder (transposed + stride-1 convs).
    pub fn decoder_layer_count(&self) -> usize {
        self.config.blocks * 3
    }

    /// Applies the block-`b` projection (identity when absent), recording
    /// its parameter vars in `proj_vars[b]`.
    fn apply_proj(
        &self,
        tape: &mut Tape<S>,
        b: usize,
        source: Var,
        proj_vars: &mut [Option<(Var, Var)>],
    ) -> Result<Var> {
        match &self.proj[b] {
            None => Ok(source),
            Some(layer) => {
                let (out, w, bias) = layer.apply(tape, source)?;
                proj_vars[b] = Some((w, bias));
                Ok(out)
            }
        }
    }

    /// Forward pass; `image` must be `[in_channels, size, size]`.
    ///
    /// `ForwardVars::params` lists parameter leaves in the same declaration
    /// order as [`MaskHeadModel::update_parameters`], regardless of the
    /// order the layers fire in.
    pub fn forward(&self, tape: &mut Tape<S>, image: Var) -> Result<ForwardVars> {
        let cfg = &self.config;
        let expect = [cfg.in_channels, cfg.input_size, cfg.input_size];
        if tape.value(image).shape() != expect {
            return Err(Error::dim(
                &expect,
                tape.value(image).shape(),
                "mask head input",
            ));
        }
        let nb = cfg.blocks;
        let mut enc_vars: Vec<[(Var, Var); 2]> = Vec::with_capacity(nb);
        let mut down_vars: Vec<(Var, Var)> = Vec::with_capacity(nb);
        let mut dec_up_vars: Vec<Option<(Var, Var)>> = vec![None; nb];
        let mut dec_conv_vars: Vec<Option<[(Var, Var); 2]>> = vec![None; nb];
        let mut proj_vars: Vec<Option<(Var, Var)>> = vec![None; nb];

        let mut enc1_out = Vec::with_capacity(nb);
        let mut enc2_out = Vec::with_capacity(nb);
        let mut x = image;
        for b in 0..nb {
            let block_in = x;
            let (h1raw, w1, b1) = self.enc[b][0].apply(tape, x)?;
            let h1 = tape.relu(h1raw);
            let (mut h2raw, w2, b2) = self.enc[b][1].apply(tape, h1)?;
            enc_vars.push([(w1, b1), (w2, b2)]);
            if cfg.skip_type == SkipType::T1 {
                let skip = self.apply_proj(tape, b, block_in, &mut proj_vars)?;
                h2raw = tape.add(h2raw, skip)?;
            }
            let h2 = tape.relu(h2raw);
            enc1_out.push(h1);
            enc2_out.push(h2);
            let (draw, wd, bd) = self.down[b].apply(tape, h2)?;
            down_vars.push((wd, bd));
            x = tape.relu(draw);
        }

        for b in (0..nb).rev() {
            let (uraw, wu, bu) = self.dec_up[b].apply(tape, x)?;
            dec_up_vars[b] = Some((wu, bu));
            let u = tape.relu(uraw);
            let (mut d1raw, w1, b1) = self.dec_conv[b][0].apply(tape, u)?;
            if cfg.skip_type == SkipType::T2 {
                d1raw = tape.add(d1raw, enc2_out[b])?;
            }
            let d1 = tape.relu(d1raw);
            let (mut d2raw, w2, b2) = self.dec_conv[b][1].apply(tape, d1)?;
            dec_conv_vars[b] = Some([(w1, b1), (w2, b2)]);
            match cfg.skip_type {
                SkipType::T2 => {
                    let skip = self.apply_proj(tape, b, enc1_out[b], &mut proj_vars)?;
                    d2raw = tape.add(d2raw, skip)?;
                }
                SkipType::T3 => {
                    let skip = self.apply_proj(tape, b, enc2_out[b], &mut proj_vars)?;
                    d2raw = tape.add(d2raw, skip)?;
                }
                SkipType::T1 => {}
            }
            x = tape.relu(d2raw);
        }

        let (logits, wh, bh) = self.head.apply(tape, x)?;
        let output = tape.sigmoid(logits);

        let mut params = Vec::new();
        for b in 0..nb {
            let [(w1, b1), (w2, b2)] = enc_vars[b];
            let (wd, bd) = down_vars[b];
            params.extend([w1, b1, w2, b2, wd, bd]);
        }
        for b in (0..nb).rev() {
            let (wu, bu) = dec_up_vars[b].expect("decoder up layer fired");
            let [(w1, b1), (w2, b2)] = dec_conv_vars[b].expect("decoder convs fired");
            params.extend([wu, bu, w1, b1, w2, b2]);
        }
        params.extend([wh, bh]);
        for &(w, b) in proj_vars.iter().flatten() {
            params.extend([w, b]);
        }
        debug_assert_eq!(params.len(), self.parameter_count());
        Ok(ForwardVars { output, params })
    }

    /// Convenience inference entry point.
    pub fn infer(&self, image: &Tensor<S>) -> Result<Tensor<S>> {
        let mut tape = Tape::new();
        let v = tape.constant(image.clone());
        let fwd = self.forward(&mut tape, v)?;
        Ok(tape.value(fwd.output).clone())
    }

    /// Writes the `REDH1` checkpoint: config fields followed by parameter
    /// tensors in declaration order, shapes + row-major f64 little-endian.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        let cfg = &self.config;
        let u32s = [
            cfg.input_size as u32,
            cfg.in_channels as u32,
            cfg.blocks as u32,
        ];
        for v in u32s {
            w.write_all(&v.to_le_bytes())?;
        }
        for &c in &cfg.channels {
            w.write_all(&(c as u32).to_le_bytes())?;
        }
        w.write_all(&(cfg.kernel_size as u32).to_le_bytes())?;
        w.write_all(&[cfg.skip_type.to_u8()])?;
        w.write_all(&(cfg.classes as u32).to_le_bytes())?;
        let params = self.parameters();
        w.write_all(&(params.len() as u32).to_le_bytes())?;
        for t in params {
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&v.to_f64().unwrap().to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.save(std::io::BufWriter::new(f))
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Parse {
                file: "<checkpoint>".into(),
                line: 0,
                message: format!("bad magic {magic:?}, expected {CHECKPOINT_MAGIC:?}"),
            });
        }
        let mut u32buf = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> Result<u32> {
            r.read_exact(&mut u32buf)?;
            Ok(u32::from_le_bytes(u32buf))
        };
        let input_size = read_u32(&mut r)? as usize;
        let in_channels = read_u32(&mut r)? as usize;
        let blocks = read_u32(&mut r)? as usize;
        if blocks > 64 {
            return Err(Error::Parse {
                file: "<checkpoint>".into(),
                line: 0,
                message: format!("implausible block count {blocks}"),
            });
        }
        let mut channels = Vec::with_capacity(blocks);
        for _ in 0..blocks {
            channels.push(read_u32(&mut r)? as usize);
        }
        let kernel_size = read_u32(&mut r)? as usize;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let skip_type = SkipType::from_u8(tag[0])?;
        let classes = read_u32(&mut r)? as usize;
        let config = MaskHeadConfig {
            input_size,
            in_channels,
            blocks,
            channels,
            kernel_size,
            skip_type,
            classes,
        };
        let mut model = Self::zeroed(config)?;
        let count = read_u32(&mut r)? as usize;
        if count != model.parameter_count() {
            return Err(Error::Parse {
                file: "<checkpoint>".into(),
                line: 0,
                message: format!(
                    "checkpoint has {count} parameter tensors, model expects {}",
                    model.parameter_count()
                ),
            });
        }
        let mut loaded: Vec<Tensor<S>> = Vec::with_capacity(count);
        for _ in 0..count {
            let ndim = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(read_u32(&mut r)? as usize);
            }
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            let mut buf = [0u8; 8];
            for _ in 0..numel {
                r.read_exact(&mut buf)?;
                data.push(real::<S>(f64::from_le_bytes(buf)));
            }
            loaded.push(Tensor::new(shape, data)?);
        }
        let mut err = None;
        model.update_parameters(|i, t| {
            if loaded[i].shape() != t.shape() {
                err = Some(Error::dim(
                    t.shape(),
                    loaded[i].shape(),
                    format!("checkpoint parameter {i}"),
                ));
            } else {
                *t = loaded[i].clone();
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(model),
        }
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::load(std::io::BufReader::new(f))
    }
}

/// Half-away-from-zero rounding of `255·p`, compared against `threshold`.
pub fn predict_mask<S: Real>(
    probabilities: &Tensor<S>,
    threshold: u32,
) -> Result<Vec<BinaryMask>> {
    if threshold > 255 {
        return Err(Error::Contract(format!(
            "threshold must lie in [0,255], got {threshold}"
        )));
    }
    let shape = probabilities.shape();
    if shape.len() != 3 {
        return Err(Error::dim(&[0, 0, 0], shape, "probabilities must be [classes,H,W]"));
    }
    let (classes, h, w) = (shape[0], shape[1], shape[2]);
    let mut masks = Vec::with_capacity(classes);
    for c in 0..classes {
        let mut m = BinaryMask::new(w, h);
        for i in 0..h {
            for j in 0..w {
                let p = probabilities.at3(c, i, j).to_f64().unwrap();
                let scaled = (255.0 * p).abs().floor()
                    + if (255.0 * p).abs().fract() >= 0.5 { 1.0 } else { 0.0 };
                let scaled = scaled.copysign(255.0 * p);
                m.set(i, j, scaled > threshold as f64);
            }
        }
        masks.push(m);
    }
    Ok(masks)
}

//! redseg — a desk-scale optic disc/cup segmentation toolkit.
//!
//! The crate builds a small residual encoder-decoder mask head on top of a
//! minimal dense-tensor reverse-mode autodiff engine, trains it with an
//! annealed BCE + soft-IoU loss, fuses multi-expert contour annotations by
//! per-angle medians, and grades glaucoma suspicion from the vertical
//! cup-to-disc ratio. Everything is deterministic given a seed and runs on
//! a single CPU core.
//!
//! The numeric kernel ([`tensor`], [`autodiff`], [`loss`], [`mask_head`])
//! is generic over the scalar type through [`num::Real`] (implemented for
//! `f32` and `f64`); the geometry and pipeline layers work in `f64`.
//! Concrete `f64` aliases are re-exported at the crate root.

pub mod autodiff;
pub mod cdr;
pub mod contour;
pub mod conv;
pub mod error;
pub mod io;
pub mod loss;
pub mod mask;
pub mod mask_head;
pub mod metrics;
pub mod num;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use num::Real;

/// Dense tensor over `f64`, the default scalar.
pub type Tensor = tensor::Tensor<f64>;
/// Recording tape over `f64`.
pub type Tape = autodiff::Tape<f64>;
/// Mask head over `f64`.
pub type MaskHeadModel = mask_head::MaskHeadModel<f64>;

pub use cdr::{grade, grading_report, vertical_cdr, CdrRecord, Grade, GradingReport};
pub use contour::{median_fuse, rasterize, Contour, FusedAnnotation, Point};
pub use loss::AlphaSchedule;
pub use mask::BinaryMask;
pub use mask_head::{predict_mask, MaskHeadConfig, SkipType, DEFAULT_MASK_THRESHOLD};
pub use metrics::{aggregate, confusion, pearson, report, MetricsReport};
pub use synth::{gen_case, gen_cohort, perturb_expert, SynthCase, SynthSpec};
pub use train::{resize_pad, split_dataset, train, TrainCase, TrainConfig, TrainLog};

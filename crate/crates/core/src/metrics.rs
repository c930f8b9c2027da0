//! Pixel-wise segmentation metrics and Pearson correlation.

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

/// Per-pixel confusion counts with foreground = positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Sensitivity/Specificity/Accuracy/Precision/Dice/Jaccard record.
///
/// `None` encodes an undefined (0/0) metric, distinct from 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsReport {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub dice: Option<f64>,
    pub jaccard: Option<f64>,
}

impl MetricsReport {
    pub fn fields(&self) -> [Option<f64>; 6] {
        [
            self.sensitivity,
            self.specificity,
            self.accuracy,
            self.precision,
            self.dice,
            self.jaccard,
        ]
    }

    pub const FIELD_NAMES: [&'static str; 6] = [
        "sensitivity",
        "specificity",
        "accuracy",
        "precision",
        "dice",
        "jaccard",
    ];
}

/// Counts per-pixel agreement between a prediction and the ground truth.
pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts> {
    if !pred.same_dims(gt) {
        return Err(Error::dim(
            &[gt.width(), gt.height()],
            &[pred.width(), pred.height()],
            "confusion operands must share raster dimensions",
        ));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p != 0, g != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

/// Derives the six metrics from confusion counts.
pub fn report(c: &ConfusionCounts) -> MetricsReport {
    MetricsReport {
        sensitivity: ratio(c.tp, c.tp + c.fn_),
        specificity: ratio(c.tn, c.tn + c.fp),
        accuracy: ratio(c.tp + c.tn, c.total()),
        precision: ratio(c.tp, c.tp + c.fp),
        dice: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
        jaccard: ratio(c.tp, c.tp + c.fp + c.fn_),
    }
}

/// Macro-average of reports with per-field undefined-skip counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregated {
    pub mean: MetricsReport,
    /// How many input reports had each field undefined, in
    /// [`MetricsReport::FIELD_NAMES`] order.
    pub skipped: [usize; 6],
}

/// Unweighted per-metric arithmetic mean, skipping undefined entries.
pub fn aggregate(reports: &[MetricsReport]) -> Result<Aggregated> {
    if reports.is_empty() {
        return Err(Error::Contract("aggregate needs at least one report".into()));
    }
    let mut sums = [0.0f64; 6];
    let mut counts = [0usize; 6];
    let mut skipped = [0usize; 6];
    for r in reports {
        for (i, f) in r.fields().iter().enumerate() {
            match f {
                Some(v) => {
                    sums[i] += v;
                    counts[i] += 1;
                }
                None => skipped[i] += 1,
            }
        }
    }
    let field = |i: usize| {
        if counts[i] == 0 {
            None
        } else {
            Some(sums[i] / counts[i] as f64)
        }
    };
    Ok(Aggregated {
        mean: MetricsReport {
            sensitivity: field(0),
            specificity: field(1),
            accuracy: field(2),
            precision: field(3),
            dice: field(4),
            jaccard: field(5),
        },
        skipped,
    })
}

/// Product-moment correlation of two equal-length sequences.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Contract(format!(
            "pearson needs two equal-length sequences of >= 2 values, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedRatio(
            "pearson correlation undefined for zero-variance input".into(),
        ));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

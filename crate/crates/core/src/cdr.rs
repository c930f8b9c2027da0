//! Vertical cup-to-disc ratio and two-stage glaucoma severity grading.

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

pub const DEFAULT_CDR_THRESHOLD: f64 = 0.5;

/// Two-stage severity grade from the vertical CDR.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grade {
    Normal,
    Suspect,
}

/// Vertical diameters, their ratio, and the resulting grade for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct CdrRecord {
    pub disc_diameter: usize,
    pub cup_diameter: usize,
    pub cdr: f64,
    pub grade: Grade,
    /// Set when the cup diameter exceeds the disc diameter, which is
    /// anatomically impossible and indicates a segmentation failure.
    pub cup_exceeds_disc: bool,
}

/// Se/Sp/OCA of predicted grades against ground-truth labels,
/// suspect = positive.
#[derive(Debug, Clone, PartialEq)]
pub struct GradingReport {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub accuracy: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

/// Vertical pixel span of the foreground: `max_row − min_row + 1`, 0 when
/// the mask is empty.
pub fn vertical_diameter(mask: &BinaryMask) -> usize {
    let mut min_row = None;
    let mut max_row = 0;
    for row in 0..mask.height() {
        for col in 0..mask.width() {
            if mask.get(row, col) {
                if min_row.is_none() {
                    min_row = Some(row);
                }
                max_row = row;
            }
        }
    }
    match min_row {
        Some(lo) => max_row - lo + 1,
        None => 0,
    }
}

/// Grades a vertical CDR: suspect iff `cdr >= threshold` (boundary
/// inclusive).
pub fn grade(cdr: f64, threshold: f64) -> Grade {
    if cdr >= threshold {
        Grade::Suspect
    } else {
        Grade::Normal
    }
}

/// Computes the vertical CDR record from disc and cup masks.
pub fn vertical_cdr(disc: &BinaryMask, cup: &BinaryMask, threshold: f64) -> Result<CdrRecord> {
    let d = vertical_diameter(disc);
    if d == 0 {
        return Err(Error::Grading(
            "disc mask is empty; CDR cannot be normalized".into(),
        ));
    }
    let c = vertical_diameter(cup);
    let cdr = c as f64 / d as f64;
    if c > d {
        log::warn!("cup diameter {c} exceeds disc diameter {d}; reporting CDR {cdr} anyway");
    }
    Ok(CdrRecord {
        disc_diameter: d,
        cup_diameter: c,
        cdr,
        grade: grade(cdr, threshold),
        cup_exceeds_disc: c > d,
    })
}

/// Confusion-based Se/Sp/OCA over a graded cohort.
pub fn grading_report(predicted: &[Grade], ground_truth: &[Grade]) -> Result<GradingReport> {
    if predicted.len() != ground_truth.len() || predicted.is_empty() {
        return Err(Error::Contract(format!(
            "grading_report needs equal-length non-empty grade sequences, got {} and {}",
            predicted.len(),
            ground_truth.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &g) in predicted.iter().zip(ground_truth) {
        match (p, g) {
            (Grade::Suspect, Grade::Suspect) => tp += 1,
            (Grade::Suspect, Grade::Normal) => fp += 1,
            (Grade::Normal, Grade::Normal) => tn += 1,
            (Grade::Normal, Grade::Suspect) => fn_ += 1,
        }
    }
    let ratio = |n: usize, d: usize| if d == 0 { None } else { Some(n as f64 / d as f64) };
    Ok(GradingReport {
        sensitivity: ratio(tp, tp + fn_),
        specificity: ratio(tn, tn + fp),
        accuracy: (tp + tn) as f64 / predicted.len() as f64,
        tp,
        fp,
        tn,
        fn_,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(w: usize, h: usize, r0: usize, r1: usize, c0: usize, c1: usize) -> BinaryMask {
        let mut m = BinaryMask::new(w, h);
        for r in r0..=r1 {
            for c in c0..=c1 {
                m.set(r, c, true);
            }
        }
        m
    }

    #[test]
    fn diameter_of_single_pixel_is_one() {
        let mut m = BinaryMask::new(8, 8);
        m.set(3, 3, true);
        assert_eq!(vertical_diameter(&m), 1);
    }

    #[test]
    fn diameter_of_filled_rows() {
        let m = rect(80, 80, 10, 59, 0, 79);
        assert_eq!(vertical_diameter(&m), 50);
    }

    #[test]
    fn diameter_of_empty_mask_is_zero() {
        assert_eq!(vertical_diameter(&BinaryMask::new(4, 4)), 0);
    }

    #[test]
    fn cdr_of_identical_masks_is_one() {
        let m = rect(10, 10, 2, 7, 2, 7);
        let rec = vertical_cdr(&m, &m, 0.5).unwrap();
        assert_eq!(rec.cdr, 1.0);
        assert_eq!(rec.grade, Grade::Suspect);
    }

    #[test]
    fn cdr_half() {
        let disc = rect(120, 120, 0, 99, 0, 99);
        let cup = rect(120, 120, 25, 74, 25, 74);
        let rec = vertical_cdr(&disc, &cup, 0.5).unwrap();
        assert_eq!(rec.disc_diameter, 100);
        assert_eq!(rec.cup_diameter, 50);
        assert_eq!(rec.cdr, 0.5);
        assert_eq!(rec.grade, Grade::Suspect); // boundary inclusive
        assert!(!rec.cup_exceeds_disc);
    }

    #[test]
    fn empty_cup_grades_normal() {
        let disc = rect(10, 10, 2, 7, 2, 7);
        let rec = vertical_cdr(&disc, &BinaryMask::new(10, 10), 0.5).unwrap();
        assert_eq!(rec.cdr, 0.0);
        assert_eq!(rec.grade, Grade::Normal);
    }

    #[test]
    fn empty_disc_is_error() {
        let cup = rect(10, 10, 2, 7, 2, 7);
        assert!(matches!(
            vertical_cdr(&BinaryMask::new(10, 10), &cup, 0.5),
            Err(Error::Grading(_))
        ));
    }

    #[test]
    fn cup_exceeding_disc_is_flagged_not_error() {
        let disc = rect(10, 10, 4, 5, 4, 5);
        let cup = rect(10, 10, 2, 7, 2, 7);
        let rec = vertical_cdr(&disc, &cup, 0.5).unwrap();
        assert!(rec.cup_exceeds_disc);
        assert_eq!(rec.cdr, 3.0);
    }

    #[test]
    fn grade_boundary_rule() {
        assert_eq!(grade(0.49, 0.5), Grade::Normal);
        assert_eq!(grade(0.50, 0.5), Grade::Suspect);
        assert_eq!(grade(0.70, 0.5), Grade::Suspect);
    }

    #[test]
    fn grading_report_all_correct() {
        let g = vec![Grade::Suspect, Grade::Normal, Grade::Suspect];
        let r = grading_report(&g, &g).unwrap();
        assert_eq!(r.sensitivity, Some(1.0));
        assert_eq!(r.specificity, Some(1.0));
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn grading_report_synthetic_cohort() {
        // 10 positives (8 caught), 90 negatives (85 caught)
        let mut pred = Vec::new();
        let mut gt = Vec::new();
        for i in 0..10 {
            gt.push(Grade::Suspect);
            pred.push(if i < 8 { Grade::Suspect } else { Grade::Normal });
        }
        for i in 0..90 {
            gt.push(Grade::Normal);
            pred.push(if i < 85 { Grade::Normal } else { Grade::Suspect });
        }
        let r = grading_report(&pred, &gt).unwrap();
        assert!((r.sensitivity.unwrap() - 0.8).abs() < 1e-12);
        assert!((r.specificity.unwrap() - 85.0 / 90.0).abs() < 1e-12);
        assert!((r.accuracy - 0.93).abs() < 1e-12);
    }

    #[test]
    fn grading_report_length_mismatch() {
        assert!(grading_report(&[Grade::Normal], &[]).is_err());
    }

    #[test]
    fn cup_growth_never_decreases_cdr() {
        let disc = rect(20, 20, 2, 17, 2, 17);
        let mut prev = 0.0;
        for extent in 3..17 {
            let cup = rect(20, 20, 3, extent, 3, 10);
            let rec = vertical_cdr(&disc, &cup, 0.5).unwrap();
            assert!(rec.cdr >= prev);
            prev = rec.cdr;
        }
    }
}

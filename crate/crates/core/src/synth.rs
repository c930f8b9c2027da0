//! Deterministic synthetic fundus-like cases: an elliptical disc containing
//! a brighter elliptical cup, with exact analytic ground truth, plus a
//! simulator of inter-expert annotation variability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::contour::{rasterize, to_polar, Contour, Point, RayPolicy};
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::num::mix_seed;
use crate::tensor::Tensor;

/// Generator parameters. Both disc semi-axes are drawn independently from
/// `disc_semi_axes`; the cup is the disc scaled by a CDR drawn from
/// `cdr_range`, so the vertical cup-to-disc ratio equals that draw exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub image_size: usize,
    /// Uniform range `(min, max)` for each disc semi-axis, in pixels.
    pub disc_semi_axes: (f64, f64),
    /// Uniform range for the cup-to-disc scale factor; must stay below 1
    /// so the cup lies strictly inside the disc.
    pub cdr_range: (f64, f64),
    pub background: f64,
    pub disc_intensity: f64,
    pub cup_intensity: f64,
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise_sigma: f64,
    /// Maximum |offset| of the shared center from the image center, per axis.
    pub center_jitter: f64,
    /// Vertex count of the generated ground-truth contours.
    pub contour_points: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            image_size: 64,
            disc_semi_axes: (14.0, 22.0),
            cdr_range: (0.2, 0.9),
            background: 0.1,
            disc_intensity: 0.5,
            cup_intensity: 0.9,
            noise_sigma: 0.02,
            center_jitter: 3.0,
            contour_points: 256,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let (a_lo, a_hi) = self.disc_semi_axes;
        if !(0.0 < a_lo && a_lo <= a_hi) {
            return Err(Error::Config(format!(
                "disc semi-axis range ({a_lo}, {a_hi}) must be positive and ordered"
            )));
        }
        let (c_lo, c_hi) = self.cdr_range;
        if !(0.0 < c_lo && c_lo <= c_hi && c_hi < 1.0) {
            return Err(Error::Config(format!(
                "CDR range ({c_lo}, {c_hi}) must satisfy 0 < lo <= hi < 1 \
                 so the cup fits strictly inside the disc"
            )));
        }
        if !(self.background < self.disc_intensity && self.disc_intensity < self.cup_intensity) {
            return Err(Error::Config(format!(
                "intensities must be ordered background < disc < cup, got \
                 ({}, {}, {})",
                self.background, self.disc_intensity, self.cup_intensity
            )));
        }
        if self.noise_sigma < 0.0 || self.center_jitter < 0.0 {
            return Err(Error::Config(
                "noise sigma and center jitter must be non-negative".into(),
            ));
        }
        let half = self.image_size as f64 / 2.0;
        if a_hi + self.center_jitter + 1.0 > half {
            return Err(Error::Config(format!(
                "disc (semi-axis up to {a_hi}, jitter {}) does not fit in a \
                 {}px image",
                self.center_jitter, self.image_size
            )));
        }
        if self.contour_points < 8 {
            return Err(Error::Config("contour_points must be >= 8".into()));
        }
        Ok(())
    }
}

/// One generated case with its exact ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCase {
    /// `[1, size, size]` intensity image.
    pub image: Tensor<f64>,
    pub disc_contour: Contour,
    pub cup_contour: Contour,
    pub disc_mask: BinaryMask,
    pub cup_mask: BinaryMask,
    /// Analytic vertical CDR `b_cup / b_disc`.
    pub true_cdr: f64,
    /// True iff `true_cdr >= 0.5`.
    pub suspect: bool,
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Generates one case, deterministic in `(spec, seed)`.
pub fn gen_case(spec: &SynthSpec, seed: u64) -> Result<SynthCase> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a_lo, a_hi) = spec.disc_semi_axes;
    let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
        if lo == hi {
            lo
        } else {
            rng.gen_range(lo..hi)
        }
    };
    let a_disc = draw(&mut rng, a_lo, a_hi);
    let b_disc = draw(&mut rng, a_lo, a_hi);
    let cdr = draw(&mut rng, spec.cdr_range.0, spec.cdr_range.1);
    let mid = (spec.image_size as f64 - 1.0) / 2.0;
    let j = spec.center_jitter;
    let cx = mid + if j > 0.0 { rng.gen_range(-j..j) } else { 0.0 };
    let cy = mid + if j > 0.0 { rng.gen_range(-j..j) } else { 0.0 };
    let center = Point::new(cx, cy);

    let disc_contour = Contour::ellipse(center, a_disc, b_disc, spec.contour_points)?;
    let cup_contour = Contour::ellipse(center, cdr * a_disc, cdr * b_disc, spec.contour_points)?;
    let disc_mask = rasterize(&disc_contour, spec.image_size, spec.image_size)?;
    let cup_mask = rasterize(&cup_contour, spec.image_size, spec.image_size)?;

    let n = spec.image_size;
    let mut data = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            let base = if cup_mask.get(row, col) {
                spec.cup_intensity
            } else if disc_mask.get(row, col) {
                spec.disc_intensity
            } else {
                spec.background
            };
            let noise = if spec.noise_sigma > 0.0 {
                spec.noise_sigma * gauss(&mut rng)
            } else {
                0.0
            };
            data.push(base + noise);
        }
    }
    Ok(SynthCase {
        image: Tensor::new(vec![1, n, n], data)?,
        disc_contour,
        cup_contour,
        disc_mask,
        cup_mask,
        true_cdr: cdr,
        suspect: cdr >= 0.5,
    })
}

/// Number of polar samples used when resampling a contour for perturbation.
const PERTURB_ANGLES: usize = 360;

/// Simulates one expert's annotation of `contour` by adding a band-limited
/// random radial displacement about the centroid: a sum of at most
/// `smoothness` random-phase harmonics, rescaled so max |δr| equals
/// `amplitude`. The result stays star-shaped about the centroid.
pub fn perturb_expert(
    contour: &Contour,
    seed: u64,
    amplitude: f64,
    smoothness: usize,
) -> Result<Contour> {
    if amplitude < 0.0 {
        return Err(Error::Contract("perturbation amplitude must be >= 0".into()));
    }
    let origin = contour.centroid()?;
    let polar = to_polar(contour, origin, PERTURB_ANGLES, RayPolicy::Strict)?;
    let inradius = (0..polar.n_angles())
        .map(|k| polar.radius(k))
        .fold(f64::INFINITY, f64::min);
    if amplitude >= inradius {
        return Err(Error::Contract(format!(
            "perturbation amplitude {amplitude} must stay below the contour \
             inradius {inradius}"
        )));
    }
    let mut delta = vec![0.0f64; PERTURB_ANGLES];
    if amplitude > 0.0 && smoothness > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for h in 1..=smoothness {
            let coeff: f64 = rng.gen_range(-1.0..1.0);
            let phase: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            for (k, d) in delta.iter_mut().enumerate() {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / PERTURB_ANGLES as f64;
                *d += coeff * (h as f64 * theta + phase).cos();
            }
        }
        let peak = delta.iter().fold(0.0f64, |m, &d| m.max(d.abs()));
        if peak > 0.0 {
            let scale = amplitude / peak;
            for d in &mut delta {
                *d *= scale;
            }
        }
    }
    let points = (0..PERTURB_ANGLES)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / PERTURB_ANGLES as f64;
            let r = polar.radius(k) + delta[k];
            Point::new(origin.x + r * theta.cos(), origin.y + r * theta.sin())
        })
        .collect();
    Contour::new(points)
}

/// Generates `n` cases with per-case seeds derived through a 64-bit mix of
/// `(seed, index)`; logs the suspect-label prevalence.
pub fn gen_cohort(spec: &SynthSpec, n: usize, seed: u64) -> Result<Vec<SynthCase>> {
    if n == 0 {
        return Err(Error::Contract("cohort size must be >= 1".into()));
    }
    let cases: Result<Vec<SynthCase>> =
        (0..n).map(|i| gen_case(spec, mix_seed(seed, i as u64))).collect();
    let cases = cases?;
    let suspects = cases.iter().filter(|c| c.suspect).count();
    log::info!(
        "generated cohort of {n}: {suspects} suspect ({:.1}%)",
        100.0 * suspects as f64 / n as f64
    );
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdr::vertical_cdr;
    use crate::contour::median_fuse;

    #[test]
    fn same_seed_is_bit_exact() {
        let spec = SynthSpec::default();
        let a = gen_case(&spec, 42).unwrap();
        let b = gen_case(&spec, 42).unwrap();
        assert_eq!(a, b);
        let c = gen_case(&spec, 43).unwrap();
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn fixed_half_cdr_is_always_suspect() {
        let spec = SynthSpec {
            cdr_range: (0.5, 0.5),
            ..SynthSpec::default()
        };
        for case in gen_cohort(&spec, 20, 1).unwrap() {
            assert!(case.suspect);
            assert_eq!(case.true_cdr, 0.5);
        }
    }

    #[test]
    fn noiseless_center_pixel_is_cup_intensity() {
        let spec = SynthSpec {
            background: 0.0,
            disc_intensity: 0.5,
            cup_intensity: 1.0,
            noise_sigma: 0.0,
            center_jitter: 0.0,
            ..SynthSpec::default()
        };
        let case = gen_case(&spec, 9).unwrap();
        let mid = (spec.image_size - 1) / 2;
        // jitter 0: center lies at (size-1)/2 = 31.5, so pixel (31,31) is
        // well inside the cup
        assert_eq!(case.image.at3(0, mid, mid), 1.0);
    }

    #[test]
    fn bad_specs_are_rejected() {
        let mut s = SynthSpec::default();
        s.cdr_range = (0.2, 1.0);
        assert!(s.validate().is_err());
        let mut s = SynthSpec::default();
        s.disc_intensity = 0.05; // below background
        assert!(s.validate().is_err());
        let mut s = SynthSpec::default();
        s.disc_semi_axes = (30.0, 40.0); // cannot fit in 64px with jitter
        assert!(s.validate().is_err());
    }

    #[test]
    fn raster_cdr_matches_analytic_within_discretization() {
        let spec = SynthSpec::default();
        for i in 0..30u64 {
            let case = gen_case(&spec, 1000 + i).unwrap();
            let rec = vertical_cdr(&case.disc_mask, &case.cup_mask, 0.5).unwrap();
            let bound = 2.0 / rec.disc_diameter as f64;
            assert!(
                (rec.cdr - case.true_cdr).abs() <= bound,
                "case {i}: raster CDR {} vs analytic {} (bound {bound})",
                rec.cdr,
                case.true_cdr
            );
        }
    }

    #[test]
    fn zero_amplitude_resamples_the_contour() {
        let circle = Contour::ellipse(Point::new(0.0, 0.0), 10.0, 10.0, 720).unwrap();
        let out = perturb_expert(&circle, 5, 0.0, 4).unwrap();
        for p in out.points() {
            let r = (p.x * p.x + p.y * p.y).sqrt();
            assert!((r - 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn perturbation_is_seed_deterministic() {
        let circle = Contour::ellipse(Point::new(3.0, -2.0), 8.0, 6.0, 256).unwrap();
        let a = perturb_expert(&circle, 77, 1.0, 5).unwrap();
        let b = perturb_expert(&circle, 77, 1.0, 5).unwrap();
        assert_eq!(a.points(), b.points());
        let c = perturb_expert(&circle, 78, 1.0, 5).unwrap();
        assert_ne!(a.points(), c.points());
    }

    #[test]
    fn oversized_amplitude_is_contract_error() {
        let circle = Contour::ellipse(Point::new(0.0, 0.0), 5.0, 5.0, 128).unwrap();
        assert!(perturb_expert(&circle, 1, 5.0, 3).is_err());
        assert!(perturb_expert(&circle, 1, -0.1, 3).is_err());
    }

    #[test]
    fn fusing_perturbed_experts_recovers_the_circle() {
        let amplitude = 1.5;
        let circle = Contour::ellipse(Point::new(0.0, 0.0), 12.0, 12.0, 720).unwrap();
        for trial in 0..100u64 {
            let experts: Vec<Contour> = (0..5)
                .map(|e| perturb_expert(&circle, trial * 10 + e, amplitude, 4).unwrap())
                .collect();
            let fused = median_fuse(&experts, 90).unwrap();
            for (k, p) in fused.contour.points().iter().enumerate() {
                let err = ((p.x * p.x + p.y * p.y).sqrt() - 12.0).abs();
                assert!(err <= amplitude, "trial {trial} angle {k}: error {err}");
            }
        }
    }

    #[test]
    fn perturbation_is_zero_mean() {
        let circle = Contour::ellipse(Point::new(0.0, 0.0), 10.0, 10.0, 720).unwrap();
        let n = 200;
        let radii: Vec<f64> = (0..n)
            .map(|s| {
                let p = perturb_expert(&circle, s, 1.0, 4).unwrap();
                let q = p.points()[0];
                (q.x * q.x + q.y * q.y).sqrt()
            })
            .collect();
        let mean = radii.iter().sum::<f64>() / n as f64;
        let var = radii.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - 10.0).abs() <= 3.0 * se.max(1e-6),
            "mean {mean}, se {se}"
        );
    }

    #[test]
    fn suspect_prevalence_matches_uniform_calculation() {
        let spec = SynthSpec::default(); // CDR uniform on [0.2, 0.9]
        let cases = gen_cohort(&spec, 100, 7).unwrap();
        let frac = cases.iter().filter(|c| c.suspect).count() as f64 / 100.0;
        let p: f64 = 4.0 / 7.0;
        let sigma = (p * (1.0 - p) / 100.0).sqrt();
        assert!((frac - p).abs() <= 3.0 * sigma, "fraction {frac}");
    }

    #[test]
    fn disjoint_seeds_give_disjoint_streams() {
        let spec = SynthSpec::default();
        let a = gen_cohort(&spec, 10, 100).unwrap();
        let b = gen_cohort(&spec, 10, 200).unwrap();
        for x in &a {
            for y in &b {
                assert_ne!(x.image, y.image);
            }
        }
    }

    #[test]
    fn single_case_cohort_uses_mixed_seed() {
        let spec = SynthSpec::default();
        let cohort = gen_cohort(&spec, 1, 55).unwrap();
        let direct = gen_case(&spec, mix_seed(55, 0)).unwrap();
        assert_eq!(cohort[0], direct);
    }
}

//! Closed-contour geometry: polar coordinate functions, median fusion of
//! multi-expert annotations, and rasterization to binary masks.
//!
//! Pixel centers sit on the integer lattice: pixel `(col, row)` has center
//! `(x=col, y=row)`. A center lying exactly on the contour counts as inside.

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Ordered closed polyline of ≥3 distinct points, implicitly closed.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    points: Vec<Point>,
}

impl Contour {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::Geometry(format!(
                "a contour needs at least 3 points, got {}",
                points.len()
            )));
        }
        for i in 0..points.len() {
            let a = points[i];
            let b = points[(i + 1) % points.len()];
            if (a.x - b.x).abs() < GEOM_EPS && (a.y - b.y).abs() < GEOM_EPS {
                return Err(Error::Geometry(format!(
                    "consecutive contour points {i} and {} coincide",
                    (i + 1) % points.len()
                )));
            }
        }
        let c = Contour { points };
        if c.area() < GEOM_EPS {
            return Err(Error::Geometry("contour encloses zero area".into()));
        }
        Ok(c)
    }

    /// Regular `n`-gon approximation of an axis-aligned ellipse.
    pub fn ellipse(center: Point, semi_x: f64, semi_y: f64, n: usize) -> Result<Self> {
        let points = (0..n)
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                Point::new(
                    center.x + semi_x * theta.cos(),
                    center.y + semi_y * theta.sin(),
                )
            })
            .collect();
        Contour::new(points)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    fn signed_area(&self) -> f64 {
        let n = self.points.len();
        let mut acc = 0.0;
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            acc += a.x * b.y - b.x * a.y;
        }
        acc / 2.0
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|i| {
                let a = self.points[i];
                let b = self.points[(i + 1) % n];
                ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
            })
            .sum()
    }

    /// Area centroid (shoelace-weighted).
    pub fn centroid(&self) -> Result<Point> {
        let a = self.signed_area();
        if a.abs() < GEOM_EPS {
            return Err(Error::Geometry(
                "degenerate (zero-area) contour has no centroid".into(),
            ));
        }
        let n = self.points.len();
        let (mut cx, mut cy) = (0.0, 0.0);
        for i in 0..n {
            let p = self.points[i];
            let q = self.points[(i + 1) % n];
            let cross = p.x * q.y - q.x * p.y;
            cx += (p.x + q.x) * cross;
            cy += (p.y + q.y) * cross;
        }
        Ok(Point::new(cx / (6.0 * a), cy / (6.0 * a)))
    }

    /// Even-odd point-in-polygon test; boundary points count as inside.
    pub fn contains(&self, p: Point) -> bool {
        if self.on_boundary(p) {
            return true;
        }
        let n = self.points.len();
        let mut inside = false;
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            if (a.y <= p.y) != (b.y <= p.y) {
                let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if x_cross > p.x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// True if `p` lies within `GEOM_EPS` of some boundary segment.
    pub fn on_boundary(&self, p: Point) -> bool {
        let n = self.points.len();
        (0..n).any(|i| {
            dist_point_segment(p, self.points[i], self.points[(i + 1) % n]) <= GEOM_EPS
        })
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.points {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        (min, max)
    }

    /// O(n²) simplicity check; used by tests and the fusion output
    /// validation, not by hot paths.
    pub fn is_simple(&self) -> bool {
        let n = self.points.len();
        for i in 0..n {
            let (a1, a2) = (self.points[i], self.points[(i + 1) % n]);
            for j in i + 1..n {
                // skip segments sharing an endpoint
                if j == i || (j + 1) % n == i || j == (i + 1) % n {
                    continue;
                }
                let (b1, b2) = (self.points[j], self.points[(j + 1) % n]);
                if segments_cross(a1, a2, b1, b2) {
                    return false;
                }
            }
        }
        true
    }
}

fn dist_point_segment(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 <= f64::MIN_POSITIVE {
        0.0
    } else {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    };
    let (px, py) = (a.x + t * dx - p.x, a.y + t * dy - p.y);
    (px * px + py * py).sqrt()
}

fn segments_cross(a1: Point, a2: Point, b1: Point, b2: Point) -> bool {
    let d = |p: Point, q: Point, r: Point| (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
    let d1 = d(b1, b2, a1);
    let d2 = d(b1, b2, a2);
    let d3 = d(a1, a2, b1);
    let d4 = d(a1, a2, b2);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Boundary sampled at `n_angles` uniformly spaced polar angles about an
/// origin, stored as the x and y coordinate functions of θ.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarContour {
    pub origin: Point,
    pub x_of_theta: Vec<f64>,
    pub y_of_theta: Vec<f64>,
}

impl PolarContour {
    pub fn n_angles(&self) -> usize {
        self.x_of_theta.len()
    }

    /// Radius at sample `k`.
    pub fn radius(&self, k: usize) -> f64 {
        let dx = self.x_of_theta[k] - self.origin.x;
        let dy = self.y_of_theta[k] - self.origin.y;
        (dx * dx + dy * dy).sqrt()
    }

    pub fn to_contour(&self) -> Result<Contour> {
        let points = self
            .x_of_theta
            .iter()
            .zip(&self.y_of_theta)
            .map(|(&x, &y)| Point::new(x, y))
            .collect();
        Contour::new(points)
    }
}

/// What to do when a ray from the origin crosses the boundary more than once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RayPolicy {
    /// Report a star-shape violation naming the offending angle.
    Strict,
    /// Keep the crossing farthest from the origin and log a warning.
    Farthest,
}

/// Mean of the per-contour area centroids.
pub fn common_origin(contours: &[Contour]) -> Result<Point> {
    if contours.is_empty() {
        return Err(Error::Contract(
            "common_origin needs at least one contour".into(),
        ));
    }
    let mut acc = Point::new(0.0, 0.0);
    for c in contours {
        let g = c.centroid()?;
        acc.x += g.x;
        acc.y += g.y;
    }
    let n = contours.len() as f64;
    Ok(Point::new(acc.x / n, acc.y / n))
}

/// Samples the boundary at `n_angles` rays from `origin`, interpolating
/// linearly along boundary segments.
pub fn to_polar(
    contour: &Contour,
    origin: Point,
    n_angles: usize,
    policy: RayPolicy,
) -> Result<PolarContour> {
    if n_angles == 0 {
        return Err(Error::Contract("n_angles must be positive".into()));
    }
    if !contour.contains(origin) || contour.on_boundary(origin) {
        return Err(Error::Geometry(format!(
            "polar origin ({}, {}) is not strictly inside the contour",
            origin.x, origin.y
        )));
    }
    let pts = contour.points();
    let n = pts.len();
    let mut xs = Vec::with_capacity(n_angles);
    let mut ys = Vec::with_capacity(n_angles);
    for k in 0..n_angles {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / n_angles as f64;
        let (dx, dy) = (theta.cos(), theta.sin());
        let mut hits: Vec<f64> = Vec::new();
        for i in 0..n {
            let a = pts[i];
            let b = pts[(i + 1) % n];
            // origin + t*(dx,dy) = a + s*(b-a)
            let (ex, ey) = (b.x - a.x, b.y - a.y);
            let det = dx * ey - dy * ex;
            if det.abs() < 1e-15 {
                continue; // ray parallel to segment
            }
            let (rx, ry) = (a.x - origin.x, a.y - origin.y);
            let t = (rx * ey - ry * ex) / det;
            let s = (rx * dy - ry * dx) / det;
            if t > GEOM_EPS && (-GEOM_EPS..=1.0 + GEOM_EPS).contains(&s) {
                if !hits.iter().any(|&h| (h - t).abs() < 1e-7 * (1.0 + t)) {
                    hits.push(t);
                }
            }
        }
        let t = match hits.len() {
            0 => {
                return Err(Error::Geometry(format!(
                    "no boundary crossing along theta={theta}"
                )))
            }
            1 => hits[0],
            _ => match policy {
                RayPolicy::Strict => {
                    return Err(Error::Geometry(format!(
                        "star-shape violation: {} crossings along theta={theta}",
                        hits.len()
                    )))
                }
                RayPolicy::Farthest => {
                    log::warn!(
                        "star-shape violation at theta={theta}: keeping farthest of {} crossings",
                        hits.len()
                    );
                    hits.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                }
            },
        };
        xs.push(origin.x + t * dx);
        ys.push(origin.y + t * dy);
    }
    Ok(PolarContour {
        origin,
        x_of_theta: xs,
        y_of_theta: ys,
    })
}

/// Fused multi-expert annotation: the per-angle median contour plus the
/// per-angle median absolute deviation of expert radii.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedAnnotation {
    pub contour: Contour,
    pub dispersion: Vec<f64>,
}

/// Sample median; even counts average the two middle order statistics.
pub fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in median input"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Per-angle median of the expert x(θ) and y(θ) coordinate functions about
/// the common centroid origin. Star-shape violations fall back to the
/// farthest crossing.
pub fn median_fuse(contours: &[Contour], n_angles: usize) -> Result<FusedAnnotation> {
    if contours.is_empty() {
        return Err(Error::Contract("median_fuse needs at least one contour".into()));
    }
    let origin = common_origin(contours)?;
    let mut polars = Vec::with_capacity(contours.len());
    for (idx, c) in contours.iter().enumerate() {
        let p = to_polar(c, origin, n_angles, RayPolicy::Farthest).map_err(|e| {
            Error::Geometry(format!("expert {idx}: {e}"))
        })?;
        polars.push(p);
    }
    let mut xs = Vec::with_capacity(n_angles);
    let mut ys = Vec::with_capacity(n_angles);
    let mut dispersion = Vec::with_capacity(n_angles);
    let mut buf = Vec::with_capacity(polars.len());
    for k in 0..n_angles {
        buf.clear();
        buf.extend(polars.iter().map(|p| p.x_of_theta[k]));
        xs.push(median(&buf));
        buf.clear();
        buf.extend(polars.iter().map(|p| p.y_of_theta[k]));
        ys.push(median(&buf));
        // dispersion: MAD of expert radii at this angle
        buf.clear();
        buf.extend(polars.iter().map(|p| p.radius(k)));
        let med_r = median(&buf);
        let devs: Vec<f64> = buf.iter().map(|r| (r - med_r).abs()).collect();
        dispersion.push(median(&devs));
    }
    let contour = Contour::new(
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| Point::new(x, y))
            .collect(),
    )?;
    Ok(FusedAnnotation {
        contour,
        dispersion,
    })
}

/// Rasterizes a contour onto a `width × height` mask: pixel `(col,row)` is
/// foreground iff its center `(col,row)` lies inside the polygon (even-odd),
/// with boundary-center ties resolved as inside.
pub fn rasterize(contour: &Contour, width: usize, height: usize) -> Result<BinaryMask> {
    let (min, max) = contour.bounding_box();
    if min.x < -GEOM_EPS
        || min.y < -GEOM_EPS
        || max.x > (width - 1) as f64 + GEOM_EPS
        || max.y > (height - 1) as f64 + GEOM_EPS
    {
        return Err(Error::Geometry(format!(
            "contour bounding box ({:.3},{:.3})-({:.3},{:.3}) exceeds {}x{} raster",
            min.x, min.y, max.x, max.y, width, height
        )));
    }
    let mut mask = BinaryMask::new(width, height);
    let pts = contour.points();
    let n = pts.len();
    let row_lo = min.y.floor().max(0.0) as usize;
    let row_hi = (max.y.ceil() as usize).min(height - 1);
    let mut crossings: Vec<f64> = Vec::new();
    for row in row_lo..=row_hi {
        let y = row as f64;
        crossings.clear();
        for i in 0..n {
            let a = pts[i];
            let b = pts[(i + 1) % n];
            if (a.y <= y) != (b.y <= y) {
                crossings.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        crossings.sort_by(|p, q| p.partial_cmp(q).unwrap());
        // even-odd fill between crossing pairs
        for pair in crossings.chunks_exact(2) {
            let lo = pair[0].ceil().max(0.0) as usize;
            let hi = pair[1].floor().min((width - 1) as f64);
            if hi < 0.0 {
                continue;
            }
            for col in lo..=hi as usize {
                mask.set(row, col, true);
            }
        }
    }
    // boundary-center ties: walk each segment and stamp centers on it
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        let len = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
        let steps = (len / 0.25).ceil() as usize + 1;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let (px, py) = (a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
            for (cx, cy) in [
                (px.floor(), py.floor()),
                (px.floor(), py.ceil()),
                (px.ceil(), py.floor()),
                (px.ceil(), py.ceil()),
            ] {
                if cx < 0.0 || cy < 0.0 || cx >= width as f64 || cy >= height as f64 {
                    continue;
                }
                if dist_point_segment(Point::new(cx, cy), a, b) <= GEOM_EPS {
                    mask.set(cy as usize, cx as usize, true);
                }
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(cx: f64, cy: f64, r: f64, n: usize) -> Contour {
        Contour::ellipse(Point::new(cx, cy), r, r, n).unwrap()
    }

    fn square(cx: f64, cy: f64, half: f64) -> Contour {
        Contour::new(vec![
            Point::new(cx - half, cy - half),
            Point::new(cx + half, cy - half),
            Point::new(cx + half, cy + half),
            Point::new(cx - half, cy + half),
        ])
        .unwrap()
    }

    #[test]
    fn centroid_of_single_contour() {
        let c = circle(3.0, 4.0, 2.0, 64);
        let g = common_origin(std::slice::from_ref(&c)).unwrap();
        assert!((g.x - 3.0).abs() < 1e-9 && (g.y - 4.0).abs() < 1e-9);
    }

    #[test]
    fn common_origin_of_two_circles() {
        let a = circle(0.0, 0.0, 1.0, 64);
        let b = circle(2.0, 0.0, 1.0, 64);
        let g = common_origin(&[a, b]).unwrap();
        assert!((g.x - 1.0).abs() < 1e-9 && g.y.abs() < 1e-9);
    }

    #[test]
    fn common_origin_of_three_squares() {
        let g = common_origin(&[
            square(0.0, 0.0, 1.0),
            square(3.0, 0.0, 1.0),
            square(0.0, 3.0, 1.0),
        ])
        .unwrap();
        assert!((g.x - 1.0).abs() < 1e-12 && (g.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_contour_rejected() {
        let r = Contour::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(2.0, 0.0),
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn polar_of_centered_circle_is_closed_form() {
        let r = 5.0;
        let c = circle(0.0, 0.0, r, 720);
        let p = to_polar(&c, Point::new(0.0, 0.0), 360, RayPolicy::Strict).unwrap();
        for k in 0..360 {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / 360.0;
            let got_theta = (p.y_of_theta[k]).atan2(p.x_of_theta[k]);
            let wrapped = (got_theta - theta + std::f64::consts::PI)
                .rem_euclid(2.0 * std::f64::consts::PI)
                - std::f64::consts::PI;
            assert!(wrapped.abs() < 1e-9, "angle invariant violated at k={k}");
        }
        // vertices of the 720-gon align with every polar angle of the 360 grid
        for k in 0..360 {
            assert!((p.radius(k) - r).abs() < 1e-9, "radius at k={k}: {}", p.radius(k));
        }
    }

    #[test]
    fn polar_of_square_at_theta_zero() {
        let c = square(2.0, 3.0, 1.5);
        let p = to_polar(&c, Point::new(2.0, 3.0), 4, RayPolicy::Strict).unwrap();
        assert!((p.x_of_theta[0] - 3.5).abs() < 1e-9);
        assert!((p.y_of_theta[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn polar_of_ellipse_matches_closed_form() {
        let (a, b) = (4.0, 2.0);
        let c = Contour::ellipse(Point::new(0.0, 0.0), a, b, 4096).unwrap();
        let p = to_polar(&c, Point::new(0.0, 0.0), 8, RayPolicy::Strict).unwrap();
        for k in 0..8 {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / 8.0;
            let expect = a * b / (b * b * theta.cos().powi(2) + a * a * theta.sin().powi(2)).sqrt();
            assert!(
                (p.radius(k) - expect).abs() < 1e-5,
                "k={k} got {} expect {expect}",
                p.radius(k)
            );
        }
    }

    #[test]
    fn polar_origin_outside_is_error() {
        let c = circle(0.0, 0.0, 1.0, 32);
        assert!(to_polar(&c, Point::new(5.0, 0.0), 8, RayPolicy::Strict).is_err());
    }

    #[test]
    fn fuse_single_expert_resamples() {
        let c = circle(1.0, 1.0, 4.0, 1024);
        let f = median_fuse(std::slice::from_ref(&c), 360).unwrap();
        assert_eq!(f.contour.points().len(), 360);
        for k in 0..360 {
            let p = f.contour.points()[k];
            let r = ((p.x - 1.0).powi(2) + (p.y - 1.0).powi(2)).sqrt();
            assert!((r - 4.0).abs() < 1e-4);
        }
    }

    #[test]
    fn fuse_three_concentric_circles_picks_median_radius() {
        let contours: Vec<Contour> = [10.0, 12.0, 30.0]
            .iter()
            .map(|&r| circle(50.0, 50.0, r, 2880))
            .collect();
        let f = median_fuse(&contours, 360).unwrap();
        for k in 0..360 {
            let p = f.contour.points()[k];
            let r = ((p.x - 50.0).powi(2) + (p.y - 50.0).powi(2)).sqrt();
            assert!((r - 12.0).abs() < 1e-9, "k={k} r={r}");
        }
    }

    #[test]
    fn fuse_is_robust_to_one_outlier_where_mean_is_not() {
        let mut contours: Vec<Contour> = (0..4).map(|_| circle(0.0, 0.0, 10.0, 2880)).collect();
        contours.push(circle(0.0, 0.0, 50.0, 2880));
        let f = median_fuse(&contours, 360).unwrap();
        for k in 0..360 {
            let p = f.contour.points()[k];
            let r = (p.x.powi(2) + p.y.powi(2)).sqrt();
            assert!((r - 10.0).abs() < 1e-9);
        }
        // the mean would have been pulled to 18
        let mean_r: f64 = (4.0 * 10.0 + 50.0) / 5.0;
        assert!((mean_r - 18.0).abs() < 1e-12);
    }

    #[test]
    fn fuse_is_permutation_invariant() {
        let a = circle(0.0, 0.0, 10.0, 720);
        let b = circle(0.1, 0.0, 11.0, 720);
        let c = circle(0.0, 0.1, 12.0, 720);
        let f1 = median_fuse(&[a.clone(), b.clone(), c.clone()], 90).unwrap();
        let f2 = median_fuse(&[c, a, b], 90).unwrap();
        assert_eq!(f1.contour.points(), f2.contour.points());
    }

    #[test]
    fn fuse_even_expert_count_averages_middles() {
        let contours: Vec<Contour> = [10.0, 12.0, 14.0, 30.0]
            .iter()
            .map(|&r| circle(0.0, 0.0, r, 2880))
            .collect();
        let f = median_fuse(&contours, 360).unwrap();
        for k in 0..360 {
            let p = f.contour.points()[k];
            let r = (p.x.powi(2) + p.y.powi(2)).sqrt();
            assert!((r - 13.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rasterize_square_counts_16() {
        let c = Contour::new(vec![
            Point::new(0.5, 0.5),
            Point::new(4.5, 0.5),
            Point::new(4.5, 4.5),
            Point::new(0.5, 4.5),
        ])
        .unwrap();
        let m = rasterize(&c, 6, 6).unwrap();
        assert_eq!(m.foreground_count(), 16);
    }

    #[test]
    fn rasterize_boundary_ties_are_inside() {
        // integer-corner square: centers on the boundary must be foreground
        let c = square(2.0, 2.0, 1.0); // corners (1,1)-(3,3)
        let m = rasterize(&c, 5, 5).unwrap();
        assert_eq!(m.foreground_count(), 9); // 3x3 incl. boundary centers
        assert!(m.get(1, 1) && m.get(3, 3) && m.get(2, 2));
    }

    #[test]
    fn rasterize_out_of_bounds_is_error() {
        let c = square(10.0, 10.0, 2.0);
        let err = rasterize(&c, 6, 6).unwrap_err();
        assert!(err.to_string().contains("bounding box"));
    }

    #[test]
    fn rasterize_is_deterministic() {
        let c = circle(16.0, 16.0, 9.3, 360);
        let a = rasterize(&c, 33, 33).unwrap();
        let b = rasterize(&c, 33, 33).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rasterize_area_close_to_analytic() {
        let c = circle(32.0, 32.0, 14.0, 720);
        let m = rasterize(&c, 64, 64).unwrap();
        let area = c.area();
        let perimeter = c.perimeter();
        let count = m.foreground_count() as f64;
        assert!(
            (count - area).abs() <= perimeter + 4.0,
            "count={count} area={area} perimeter={perimeter}"
        );
    }

    #[test]
    fn fused_output_is_simple() {
        let contours: Vec<Contour> = [10.0, 12.0, 11.0]
            .iter()
            .map(|&r| circle(20.0, 20.0, r, 720))
            .collect();
        let f = median_fuse(&contours, 180).unwrap();
        assert!(f.contour.is_simple());
    }
}

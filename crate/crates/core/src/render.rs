//! Multi-view projection of a vessel tree into a depth-shaded pattern, and
//! palm-crease synthesis.
//!
//! The tree is turned about the z-axis, dropped orthographically onto the
//! x–z plane and drawn dark-on-white: shallow vessels (small `y`) are dark,
//! deep ones fade toward the background.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{DomainBox, Point3};
use crate::image::PatternImage;
use crate::raster::{stroke_polyline, stroke_segment};
use crate::trajectory::Polyline3;
use crate::{Error, Result};

/// Per-render view: rotation about z in degrees and grayscale jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewParams {
    pub theta_z: f64,
    pub w_random: f64,
}

impl Default for ViewParams {
    fn default() -> Self {
        ViewParams { theta_z: 0.0, w_random: 1.0 }
    }
}

/// Ranges that views are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewRanges {
    pub theta_z: [f64; 2],
    pub w_random: [f64; 2],
}

impl Default for ViewRanges {
    fn default() -> Self {
        ViewRanges { theta_z: [-3.0, 3.0], w_random: [0.8, 1.0] }
    }
}

impl ViewRanges {
    pub fn validate(&self) -> Result<()> {
        let [t0, t1] = self.theta_z;
        let [w0, w1] = self.w_random;
        if t0.is_finite() && t1.is_finite() && t0 <= t1 && w0 > 0.0 && w0 <= w1 && w1 <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("invalid view ranges: {self:?}")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ViewParams {
        ViewParams { theta_z: uniform(rng, self.theta_z), w_random: uniform(rng, self.w_random) }
    }
}

pub(crate) fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo < hi {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Rotates every point about the z-axis through `pivot` by `theta_deg`.
pub fn rotate_z(polys: &[Polyline3], theta_deg: f64, pivot: Point3) -> Vec<Polyline3> {
    if theta_deg == 0.0 {
        return polys.to_vec();
    }
    let (s, c) = theta_deg.to_radians().sin_cos();
    let turn = |p: &Point3| {
        let (dx, dy) = (p.x - pivot.x, p.y - pivot.y);
        Point3::new(pivot.x + c * dx - s * dy, pivot.y + s * dx + c * dy, p.z)
    };
    polys.iter().map(|pl| Polyline3 { points: pl.points.iter().map(turn).collect(), radius: pl.radius }).collect()
}

/// Gray level for depth `y` within `[y_min, y_max]`:
/// `round((y - y_min) * w_random / (y_max - y_min) * 255)`, clamped to `[0, 255]`.
pub fn depth_to_gray(y: f64, y_min: f64, y_max: f64, w_random: f64) -> u8 {
    let span = y_max - y_min;
    if span <= 0.0 {
        log::debug!("uniform vessel depth; shading everything at 0");
        return 0;
    }
    depth_to_gray_f(y, y_min, y_max, w_random).round().clamp(0.0, 255.0) as u8
}

fn depth_to_gray_f(y: f64, y_min: f64, y_max: f64, w_random: f64) -> f64 {
    let span = y_max - y_min;
    if span <= 0.0 {
        0.0
    } else {
        ((y - y_min) * w_random / span * 255.0).clamp(0.0, 255.0)
    }
}

/// Raster geometry: output size and how palm millimetres map onto it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterSpec {
    pub width: usize,
    pub height: usize,
}

impl Default for RasterSpec {
    fn default() -> Self {
        RasterSpec { width: 128, height: 128 }
    }
}

impl RasterSpec {
    /// Stroke scale: pixels per millimetre along the longer palm side.
    pub fn pixels_per_mm(&self, domain: &DomainBox) -> f64 {
        self.width.max(self.height) as f64 / domain.width.max(domain.height)
    }

    /// The palm plane fills the raster (independent x/z scales, no margins).
    pub fn to_pixel(&self, domain: &DomainBox, p: Point3) -> [f64; 2] {
        [p.x / domain.width * self.width as f64, p.z / domain.height * self.height as f64]
    }

    pub fn stroke_width(&self, domain: &DomainBox, radius: f64) -> f64 {
        (2.0 * radius * self.pixels_per_mm(domain)).round().max(1.0)
    }
}

/// Rotates, projects and draws `polys`. Shading bounds are the depth range
/// of this set of polylines after rotation.
pub fn project_and_rasterize(polys: &[Polyline3], view: &ViewParams, domain: &DomainBox, raster: &RasterSpec) -> PatternImage {
    let mut img = PatternImage::blank(raster.width, raster.height);
    let turned = rotate_z(polys, view.theta_z, domain.center());
    let (y_min, y_max) =
        turned.iter().flat_map(|p| p.points.iter()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.y), hi.max(p.y)));
    if !y_min.is_finite() {
        return img;
    }
    if y_max <= y_min {
        log::debug!("uniform vessel depth; shading everything at 0");
    }
    for poly in &turned {
        let width = raster.stroke_width(domain, poly.radius);
        let shade = |p: &Point3| depth_to_gray_f(p.y, y_min, y_max, view.w_random);
        if let [p] = poly.points.as_slice() {
            let px = raster.to_pixel(domain, *p);
            stroke_segment(&mut img, px, px, width, shade(p), shade(p));
        }
        for w in poly.points.windows(2) {
            stroke_segment(&mut img, raster.to_pixel(domain, w[0]), raster.to_pixel(domain, w[1]), width, shade(&w[0]), shade(&w[1]));
        }
    }
    img
}

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CreaseParams {
    /// Inclusive range for the number of creases.
    pub count: [usize; 2],
    /// Control-point regions; crease `i` uses region `i % len`.
    pub regions: Vec<Region>,
    pub width_px: [f64; 2],
    pub intensity: [u8; 2],
    /// Flattening tolerance, px.
    pub tolerance: f64,
}

impl Default for CreaseParams {
    fn default() -> Self {
        Self::for_raster(&RasterSpec::default())
    }
}

impl CreaseParams {
    /// Three horizontal bands at 25%, 45% and 65% of the height, spanning
    /// 10–90% of the width, like the principal palm lines.
    pub fn for_raster(raster: &RasterSpec) -> Self {
        let (w, h) = (raster.width as f64, raster.height as f64);
        let band = |c: f64| Region { x0: 0.1 * w, y0: (c - 0.07) * h, x1: 0.9 * w, y1: (c + 0.07) * h };
        CreaseParams {
            count: [2, 4],
            regions: vec![band(0.25), band(0.45), band(0.65)],
            width_px: [1.0, 3.0],
            intensity: [40, 110],
            tolerance: 0.25,
        }
    }

    pub fn validate(&self, raster: &RasterSpec) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParam(format!("crease params: {m}")));
        if self.count[0] > self.count[1] {
            return bad("count range is empty");
        }
        if self.count[1] > 0 && self.regions.is_empty() {
            return bad("no control regions");
        }
        let (w, h) = (raster.width as f64, raster.height as f64);
        for r in &self.regions {
            if !(0.0 <= r.x0 && r.x0 <= r.x1 && r.x1 <= w && 0.0 <= r.y0 && r.y0 <= r.y1 && r.y1 <= h) {
                return bad("region outside the image");
            }
        }
        if !(self.width_px[0] > 0.0 && self.width_px[0] <= self.width_px[1]) || self.intensity[0] > self.intensity[1] {
            return bad("empty width or intensity range");
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return bad("tolerance must be positive");
        }
        Ok(())
    }
}

/// A flattened crease ready to draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreaseStroke {
    pub points: Vec<[f64; 2]>,
    pub width: f64,
    pub intensity: u8,
}

/// Flattens a cubic Bézier by recursive midpoint subdivision until both inner
/// control points lie within `tol` of the chord. Returns the endpoints of the
/// pieces, starting with `c[0]` and ending with `c[3]`.
pub fn flatten_cubic(c: [[f64; 2]; 4], tol: f64) -> Vec<[f64; 2]> {
    // Distance to the chord segment; the curve lies in the control hull, so
    // the largest control-point distance bounds the flattening error.
    fn dist_to_chord(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len2 = dx * dx + dy * dy;
        let t = if len2 < 1e-24 { 0.0 } else { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) };
        ((p[0] - a[0] - t * dx).powi(2) + (p[1] - a[1] - t * dy).powi(2)).sqrt()
    }
    fn mid(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
        [(a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5]
    }
    fn rec(c: [[f64; 2]; 4], tol: f64, depth: u32, out: &mut Vec<[f64; 2]>) {
        let flat = dist_to_chord(c[1], c[0], c[3]).max(dist_to_chord(c[2], c[0], c[3]));
        if flat <= tol || depth >= 16 {
            out.push(c[3]);
            return;
        }
        let (p01, p12, p23) = (mid(c[0], c[1]), mid(c[1], c[2]), mid(c[2], c[3]));
        let (p012, p123) = (mid(p01, p12), mid(p12, p23));
        let m = mid(p012, p123);
        rec([c[0], p01, p012, m], tol, depth + 1, out);
        rec([m, p123, p23, c[3]], tol, depth + 1, out);
    }
    let mut out = vec![c[0]];
    rec(c, tol, 0, &mut out);
    out
}

pub fn cubic_point(c: [[f64; 2]; 4], t: f64) -> [f64; 2] {
    let u = 1.0 - t;
    let (a, b, cc, d) = (u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t);
    [a * c[0][0] + b * c[1][0] + cc * c[2][0] + d * c[3][0], a * c[0][1] + b * c[1][1] + cc * c[2][1] + d * c[3][1]]
}

/// Samples and flattens a set of Bézier creases.
pub fn generate_creases<R: Rng + ?Sized>(params: &CreaseParams, rng: &mut R) -> Vec<CreaseStroke> {
    let n = if params.count[0] < params.count[1] { rng.random_range(params.count[0]..=params.count[1]) } else { params.count[0] };
    (0..n)
        .map(|i| {
            let r = params.regions[i % params.regions.len()];
            let mut ctrl = [[0.0; 2]; 4];
            for c in &mut ctrl {
                *c = [uniform(rng, [r.x0, r.x1]), uniform(rng, [r.y0, r.y1])];
            }
            // Order along x so a crease sweeps across the palm instead of looping.
            ctrl.sort_by(|a, b| a[0].total_cmp(&b[0]));
            let width = uniform(rng, params.width_px);
            let intensity = uniform(rng, [params.intensity[0] as f64, params.intensity[1] as f64]).round() as u8;
            CreaseStroke { points: flatten_cubic(ctrl, params.tolerance), width, intensity }
        })
        .collect()
}

/// Darkens `pattern` along each stroke with `min`.
pub fn blend_creases(pattern: &PatternImage, strokes: &[CreaseStroke]) -> PatternImage {
    let mut out = pattern.clone();
    for s in strokes {
        stroke_polyline(&mut out, &s.points, s.width, s.intensity as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn line(a: Point3, b: Point3, r: f64) -> Polyline3 {
        Polyline3 { points: vec![a, b], radius: r }
    }

    #[test]
    fn rotate_identity_quarter_and_inverse() {
        let pivot = DomainBox::default().center();
        let polys = vec![line(Point3::new(3.3, 41.7, 5.0), Point3::new(61.1, 35.2, 70.0), 1.0)];
        assert_eq!(rotate_z(&polys, 0.0, pivot), polys);

        let q = rotate_z(&[line(pivot + Point3::new(1.0, 0.0, 0.0), pivot, 1.0)], 90.0, pivot);
        let p = q[0].points[0];
        assert!(p.distance(pivot + Point3::new(0.0, 1.0, 0.0)) < 1e-12);
        assert_eq!(p.z, pivot.z);

        let back = rotate_z(&rotate_z(&polys, 3.0, pivot), -3.0, pivot);
        for (a, b) in back[0].points.iter().zip(&polys[0].points) {
            assert!(a.distance(*b) < 1e-9);
        }
    }

    #[test]
    fn rotation_is_rigid_and_keeps_z() {
        let pivot = DomainBox::default().center();
        let mut rng = stream(1, 0, "rot", 0);
        let d = DomainBox::default();
        let pts: Vec<Point3> = (0..20).map(|_| d.sample(&mut rng)).collect();
        let poly = Polyline3 { points: pts.clone(), radius: 1.0 };
        let turned = rotate_z(std::slice::from_ref(&poly), 2.7, pivot);
        for i in 0..pts.len() {
            assert_eq!(turned[0].points[i].z, pts[i].z);
            for j in 0..pts.len() {
                let before = pts[i].distance(pts[j]);
                let after = turned[0].points[i].distance(turned[0].points[j]);
                assert!((before - after).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn depth_gray_examples() {
        assert_eq!(depth_to_gray(33.0, 33.0, 47.0, 0.9), 0);
        assert_eq!(depth_to_gray(47.0, 33.0, 47.0, 1.0), 255);
        assert_eq!(depth_to_gray(40.0, 33.0, 47.0, 0.8), 102);
        assert_eq!(depth_to_gray(40.0, 40.0, 40.0, 1.0), 0);
    }

    #[test]
    fn depth_gray_monotone() {
        let mut rng = stream(2, 0, "gray", 0);
        for _ in 0..1000 {
            let lo: f64 = rng.random_range(0.0..50.0);
            let hi = lo + rng.random_range(0.01..20.0);
            let w = rng.random_range(0.8..=1.0);
            let a = rng.random_range(lo..=hi);
            let b = rng.random_range(a..=hi);
            assert!(depth_to_gray(a, lo, hi, w) <= depth_to_gray(b, lo, hi, w));
        }
    }

    #[test]
    fn empty_render_is_blank() {
        let img = project_and_rasterize(&[], &ViewParams::default(), &DomainBox::default(), &RasterSpec::default());
        assert!(img.pixels().iter().all(|&p| p == 255));
        assert_eq!((img.width(), img.height()), (128, 128));
    }

    #[test]
    fn depth_extremes_render_white_and_black() {
        let d = DomainBox::default();
        let raster = RasterSpec::default();
        let view = ViewParams { theta_z: 0.0, w_random: 1.0 };
        let deep = line(Point3::new(10.0, 47.0, 40.0), Point3::new(60.0, 47.0, 40.0), 1.0);
        let shallow = line(Point3::new(10.0, 33.0, 20.0), Point3::new(60.0, 33.0, 20.0), 1.0);
        let img = project_and_rasterize(&[deep, shallow], &view, &d, &raster);
        // Row of the deep vessel: z = 40 mm -> v = 64 px; shallow: z = 20 -> v = 32.
        for x in 20..100 {
            assert_eq!(img.get(x, 63), 255);
            assert_eq!(img.get(x, 64), 255);
            assert_eq!(img.get(x, 31), 0);
            assert_eq!(img.get(x, 32), 0);
        }
    }

    #[test]
    fn collinear_bezier_flattens_to_line() {
        let c = [[10.0, 20.0], [30.0, 30.0], [50.0, 40.0], [90.0, 60.0]];
        let pts = flatten_cubic(c, 0.25);
        assert_eq!(pts.first(), Some(&c[0]));
        assert_eq!(pts.last(), Some(&c[3]));
        let (dx, dy) = (80.0, 40.0);
        let len = f64::hypot(dx, dy);
        for p in pts {
            let d = ((p[0] - 10.0) * dy - (p[1] - 20.0) * dx).abs() / len;
            assert!(d <= 0.25);
        }
    }

    #[test]
    fn flattening_stays_within_tolerance_of_curve() {
        let mut rng = stream(3, 0, "bez", 0);
        for _ in 0..50 {
            let mut c = [[0.0; 2]; 4];
            for p in &mut c {
                *p = [rng.random_range(0.0..128.0), rng.random_range(0.0..128.0)];
            }
            let poly = flatten_cubic(c, 0.25);
            // Dense curve samples must lie within tolerance of the polyline.
            for k in 0..=400 {
                let q = cubic_point(c, k as f64 / 400.0);
                let d = poly
                    .windows(2)
                    .map(|w| {
                        let (a, b) = (Point3::new(w[0][0], w[0][1], 0.0), Point3::new(w[1][0], w[1][1], 0.0));
                        crate::geometry::point_segment_distance(Point3::new(q[0], q[1], 0.0), a, b).0
                    })
                    .fold(f64::INFINITY, f64::min);
                assert!(d <= 0.25 + 1e-9, "{d}");
            }
        }
    }

    #[test]
    fn crease_generation() {
        let mut p = CreaseParams::default();
        p.validate(&RasterSpec::default()).unwrap();
        let a = generate_creases(&p, &mut stream(4, 0, "crease", 0));
        let b = generate_creases(&p, &mut stream(4, 0, "crease", 0));
        assert_eq!(a, b);
        assert!((2..=4).contains(&a.len()));
        for s in &a {
            assert!((40..=110).contains(&s.intensity));
            assert!((1.0..=3.0).contains(&s.width));
        }
        p.count = [0, 0];
        assert!(generate_creases(&p, &mut stream(4, 0, "crease", 0)).is_empty());
    }

    #[test]
    fn blending_darkens_only_and_is_idempotent() {
        let d = DomainBox::default();
        let mut rng = stream(5, 0, "blend", 0);
        let polys: Vec<Polyline3> = (0..10).map(|_| line(d.sample(&mut rng), d.sample(&mut rng), 0.8)).collect();
        let pattern = project_and_rasterize(&polys, &ViewParams::default(), &d, &RasterSpec::default());
        let strokes = generate_creases(&CreaseParams::default(), &mut rng);
        let once = blend_creases(&pattern, &strokes);
        assert!(once.pixels().iter().zip(pattern.pixels()).all(|(a, b)| a <= b));
        assert_eq!(blend_creases(&once, &strokes), once);
        assert_eq!(blend_creases(&pattern, &[]), pattern);

        let black = CreaseStroke { points: vec![[10.0, 64.5], [110.0, 64.5]], width: 2.0, intensity: 0 };
        let out = blend_creases(&PatternImage::blank(128, 128), &[black]);
        assert_eq!(out.get(60, 64), 0);
    }
}

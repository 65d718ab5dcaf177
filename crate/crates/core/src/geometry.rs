//! Points, vectors and the palm domain box.

use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Tolerance for geometric equality, in mm.
pub const GEOM_EPS: f64 = 1e-9;

/// A point (or vector) in palm space, in mm. `y` is the thickness / depth axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ZERO: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn dot(self, o: Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Point3) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Point3> {
        let n = self.norm();
        (n > 1e-300).then(|| self * (1.0 / n))
    }

    pub fn lerp(self, o: Point3, t: f64) -> Point3 {
        self + (o - self) * t
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// Distance from `p` to the closed segment `[a, b]`, with the clamped
/// segment parameter of the closest point.
pub fn point_segment_distance(p: Point3, a: Point3, b: Point3) -> (f64, f64) {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 > 0.0 { ((p - a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p.distance(a + ab * t), t)
}

/// Uniformly distributed unit vector in 3D.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Point3 {
    // Marsaglia: uniform z and azimuth give a uniform point on the sphere.
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    Point3::new(r * phi.cos(), r * phi.sin(), z)
}

/// The rectangular prism that bounds all tree geometry:
/// `(0, W) x (y_center - D/2, y_center + D/2) x (0, H)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainBox {
    pub width: f64,
    pub thickness: f64,
    pub height: f64,
    pub y_center: f64,
}

impl Default for DomainBox {
    fn default() -> Self {
        DomainBox { width: 70.0, thickness: 14.0, height: 80.0, y_center: 40.0 }
    }
}

impl DomainBox {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = [self.width, self.thickness, self.height].iter().all(|v| v.is_finite() && *v > 0.0) && self.y_center.is_finite();
        if ok {
            Ok(())
        } else {
            Err(crate::Error::InvalidParam(format!("domain box must have positive finite extents: {self:?}")))
        }
    }

    pub fn y_min(&self) -> f64 {
        self.y_center - self.thickness / 2.0
    }

    pub fn y_max(&self) -> f64 {
        self.y_center + self.thickness / 2.0
    }

    pub fn center(&self) -> Point3 {
        Point3::new(self.width / 2.0, self.y_center, self.height / 2.0)
    }

    pub fn diagonal(&self) -> f64 {
        Point3::new(self.width, self.thickness, self.height).norm()
    }

    /// Open-interval containment.
    pub fn contains(&self, p: Point3) -> bool {
        0.0 < p.x && p.x < self.width && self.y_min() < p.y && p.y < self.y_max() && 0.0 < p.z && p.z < self.height
    }

    /// Closed containment with slack `tol`.
    pub fn contains_closed(&self, p: Point3, tol: f64) -> bool {
        -tol <= p.x
            && p.x <= self.width + tol
            && self.y_min() - tol <= p.y
            && p.y <= self.y_max() + tol
            && -tol <= p.z
            && p.z <= self.height + tol
    }

    pub fn clamp(&self, p: Point3) -> Point3 {
        Point3::new(p.x.clamp(0.0, self.width), p.y.clamp(self.y_min(), self.y_max()), p.z.clamp(0.0, self.height))
    }

    /// Uniform sample strictly inside the box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point3 {
        loop {
            let p = Point3::new(
                rng.random_range(0.0..self.width),
                rng.random_range(self.y_min()..self.y_max()),
                rng.random_range(0.0..self.height),
            );
            if self.contains(p) {
                return p;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_box_matches_palm_dimensions() {
        let b = DomainBox::default();
        assert_eq!((b.width, b.thickness, b.height, b.y_center), (70.0, 14.0, 80.0, 40.0));
        assert_eq!((b.y_min(), b.y_max()), (33.0, 47.0));
        assert!(b.contains(Point3::new(1.0, 40.0, 1.0)));
        assert!(!b.contains(Point3::new(0.0, 40.0, 1.0)));
        assert!(!b.contains(Point3::new(1.0, 47.0, 1.0)));
        assert!(b.contains_closed(Point3::new(0.0, 47.0, 80.0), 1e-9));
    }

    #[test]
    fn segment_distance_interior_and_endpoints() {
        let a = Point3::new(0.0, 0.0, 0.0);
        let b = Point3::new(10.0, 0.0, 0.0);
        assert_eq!(point_segment_distance(Point3::new(5.0, 0.0, 0.0), a, b).0, 0.0);
        assert_eq!(point_segment_distance(Point3::new(5.0, 3.0, 4.0), a, b).0, 5.0);
        let (d, t) = point_segment_distance(Point3::new(-3.0, 4.0, 0.0), a, b);
        assert_eq!((d, t), (5.0, 0.0));
    }

    #[test]
    fn unit_vectors_have_unit_norm() {
        let mut rng = crate::rng::stream(1, 0, "t", 0);
        for _ in 0..1000 {
            assert!((random_unit_vector(&mut rng).norm() - 1.0).abs() < 1e-12);
        }
    }
}

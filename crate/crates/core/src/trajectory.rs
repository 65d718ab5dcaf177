//! Curved vessel trajectories.
//!
//! A point walks from a segment's inflow end toward its outflow end in steps
//! of `l_step`, each step being the unit direction to the target plus a
//! weighted lateral random disturbance.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::geometry::{random_unit_vector, DomainBox, Point3};
use crate::rng;
use crate::tree::VascularTree;
use crate::{Error, Result};

/// Steps without getting closer to the target before the disturbance is halved.
const STALL_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsmParams {
    /// Step length, mm.
    pub l_step: f64,
    /// Weight of the lateral disturbance.
    pub w_rand: f64,
    /// Step budget; `None` means `10 * length / l_step`.
    pub max_steps: Option<usize>,
    /// Walk stops once within this distance of the target; `None` means `l_step`.
    pub arrive_radius: Option<f64>,
}

impl Default for TsmParams {
    fn default() -> Self {
        TsmParams { l_step: 0.5, w_rand: 0.35, max_steps: None, arrive_radius: None }
    }
}

impl TsmParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.l_step.is_finite()
            && self.l_step > 0.0
            && self.w_rand.is_finite()
            && self.w_rand >= 0.0
            && self.max_steps.is_none_or(|m| m >= 1)
            && self.arrive_radius.is_none_or(|r| r.is_finite() && r >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("invalid trajectory parameters: {self:?}")))
        }
    }

    pub fn steps_for(&self, length: f64) -> usize {
        self.max_steps.unwrap_or_else(|| ((10.0 * length / self.l_step).ceil() as usize).max(1))
    }

    pub fn arrive(&self) -> f64 {
        self.arrive_radius.unwrap_or(self.l_step)
    }
}

/// A vessel as a polyline in palm space. Per-point depth (`y`) is kept for shading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline3 {
    pub points: Vec<Point3>,
    pub radius: f64,
}

impl Polyline3 {
    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    pub fn chord_length(&self) -> f64 {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => a.distance(*b),
            _ => 0.0,
        }
    }
}

/// Walks from `p1` to `p2`. The first point is exactly `p1` and the last exactly
/// `p2`; intermediate points are clamped into `domain`. At most
/// `max_steps + 1` points are returned.
pub fn simulate_trajectory<R: Rng + ?Sized>(
    p1: Point3,
    p2: Point3,
    radius: f64,
    params: &TsmParams,
    domain: &DomainBox,
    rng: &mut R,
) -> Polyline3 {
    let chord = p1.distance(p2);
    let max_steps = params.steps_for(chord);
    let arrive = params.arrive();
    let mut points = vec![p1];
    let mut cur = p1;
    let mut w_rand = params.w_rand;
    let mut best = chord;
    let mut stall = 0;
    // Intermediate points are capped at max_steps - 1 so that, with both
    // endpoints, the polyline never exceeds max_steps + 1 points.
    for _ in 1..max_steps {
        let to_target = p2 - cur;
        let dist = to_target.norm();
        if dist <= arrive {
            break;
        }
        let d_target = to_target * (1.0 / dist);
        let mut step = d_target;
        if w_rand > 0.0 {
            let d_rand = random_unit_vector(rng);
            let lateral = d_rand - d_target * d_rand.dot(d_target);
            step = step + lateral * w_rand;
        }
        let next = domain.clamp(cur + step * params.l_step);
        if next.distance(cur) <= 1e-12 {
            continue;
        }
        points.push(next);
        cur = next;
        let d = cur.distance(p2);
        if d < best {
            best = d;
            stall = 0;
        } else {
            stall += 1;
            if stall >= STALL_LIMIT {
                w_rand *= 0.5;
                stall = 0;
            }
        }
    }
    if points.len() > 1 && points.last().is_some_and(|q| q.distance(p2) <= 1e-12) {
        points.pop();
    }
    points.push(p2);
    Polyline3 { points, radius }
}

/// One trajectory per segment, in segment id order. Each segment draws from
/// its own sub-stream keyed by segment id, seeded from `rng`.
pub fn tree_to_polylines<R: RngCore + ?Sized>(tree: &VascularTree, params: &TsmParams, domain: &DomainBox, rng: &mut R) -> Vec<Polyline3> {
    let base = rng.next_u64();
    tree.segments()
        .map(|(id, s)| {
            let (a, b) = tree.segment_endpoints(s);
            let mut sub = rng::stream(base, 0, "trajectory-segment", id.0 as u64);
            simulate_trajectory(a, b, s.radius, params, domain, &mut sub)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::point_segment_distance;
    use crate::rng::stream;
    use crate::tree::RadiusPolicy;
    use crate::trunk::{default_templates, sample_trunk};

    fn hausdorff_to_segment(poly: &Polyline3, a: Point3, b: Point3) -> f64 {
        // Polyline vertices to the segment; the segment's endpoints are on the polyline.
        poly.points.iter().map(|p| point_segment_distance(*p, a, b).0).fold(0.0, f64::max)
    }

    #[test]
    fn zero_disturbance_is_straight() {
        let d = DomainBox::default();
        let params = TsmParams { w_rand: 0.0, ..Default::default() };
        let (a, b) = (Point3::new(5.0, 35.0, 5.0), Point3::new(60.0, 45.0, 70.0));
        let poly = simulate_trajectory(a, b, 1.0, &params, &d, &mut stream(1, 0, "tsm", 0));
        assert!(hausdorff_to_segment(&poly, a, b) < 1e-9);
        assert!((poly.arc_length() - a.distance(b)).abs() < params.l_step);
        assert_eq!(poly.points[0], a);
        assert_eq!(*poly.points.last().unwrap(), b);
    }

    #[test]
    fn endpoints_exact_and_arc_exceeds_chord() {
        let d = DomainBox::default();
        let mut rng = stream(2, 0, "tsm", 0);
        let params = TsmParams::default();
        let mut ratios = Vec::new();
        for _ in 0..1000 {
            let (a, b) = (d.sample(&mut rng), d.sample(&mut rng));
            let poly = simulate_trajectory(a, b, 1.0, &params, &d, &mut rng);
            assert_eq!(poly.points[0], a);
            assert_eq!(*poly.points.last().unwrap(), b);
            assert!(poly.points.len() <= params.steps_for(a.distance(b)) + 1);
            assert!(poly.arc_length() >= poly.chord_length() * (1.0 - 1e-12));
            assert!(poly.points.windows(2).all(|w| w[0] != w[1]));
            assert!(poly.points.iter().all(|p| d.contains_closed(*p, 0.0)));
            ratios.push(poly.arc_length() / poly.chord_length());
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!(mean > 1.0 && mean < 1.5, "mean arc/chord ratio {mean}");
    }

    #[test]
    fn tiny_budget_still_terminates_at_target() {
        let d = DomainBox::default();
        let params = TsmParams { max_steps: Some(1), ..Default::default() };
        let (a, b) = (Point3::new(5.0, 40.0, 5.0), Point3::new(50.0, 40.0, 50.0));
        let poly = simulate_trajectory(a, b, 1.0, &params, &d, &mut stream(3, 0, "tsm", 0));
        assert_eq!(poly.points, vec![a, b]);
    }

    #[test]
    fn deterministic_per_seed() {
        let d = DomainBox::default();
        let (a, b) = (Point3::new(5.0, 40.0, 5.0), Point3::new(50.0, 40.0, 50.0));
        let p = TsmParams::default();
        let x = simulate_trajectory(a, b, 1.0, &p, &d, &mut stream(4, 0, "tsm", 0));
        let y = simulate_trajectory(a, b, 1.0, &p, &d, &mut stream(4, 0, "tsm", 0));
        assert_eq!(x, y);
    }

    #[test]
    fn polylines_cover_tree_with_junction_continuity() {
        let d = DomainBox::default();
        let trunk = sample_trunk(&default_templates()[0], &d, &RadiusPolicy::default(), &mut stream(5, 0, "t", 0)).unwrap();
        let polys = tree_to_polylines(&trunk.tree, &TsmParams::default(), &d, &mut stream(5, 0, "p", 0));
        assert_eq!(polys.len(), trunk.tree.segment_count());
        for ((_, s), poly) in trunk.tree.segments().zip(&polys) {
            assert_eq!(poly.points[0], trunk.tree.position(s.from));
            assert_eq!(*poly.points.last().unwrap(), trunk.tree.position(s.to));
            assert_eq!(poly.radius, s.radius);
            assert!(poly.points.iter().all(|p| d.contains_closed(*p, 1e-9)));
        }
    }
}

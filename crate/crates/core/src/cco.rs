//! Constrained constructive growth of branches on top of a trunk.
//!
//! Each step samples a terminal point away from the existing vessels, joins
//! it to the nearest segment through a new bifurcation, and places that
//! bifurcation where the three adjoining cylinders have the least volume.
//! With radii fixed by the outflow rule, that placement is the weighted
//! geometric median of the three anchors (weights `r^2`), found by Weiszfeld
//! iteration.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{point_segment_distance, DomainBox, Point3, GEOM_EPS};
use crate::tree::{NodeId, RadiusPolicy, SegmentId, SegmentOrigin, VascularTree};
use crate::trunk::TrunkInstance;
use crate::{Error, Result};

/// Below this the candidate threshold is considered exhausted.
pub const MIN_D_MIN: f64 = 1e-3;

/// Iterates closer than this to an anchor are nudged off it.
const ANCHOR_SNAP: f64 = 1e-12;
const ANCHOR_NUDGE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrowthParams {
    /// Number of terminal points to add.
    pub n_points: usize,
    /// Initial minimum distance from a candidate to any segment, mm.
    pub d_min: f64,
    /// Factor applied to `d_min` after a run of rejected candidates.
    pub d_min_decay: f64,
    pub max_candidate_attempts: usize,
    pub weiszfeld_tol: f64,
    pub weiszfeld_max_iter: usize,
}

impl Default for GrowthParams {
    fn default() -> Self {
        GrowthParams {
            n_points: 70,
            d_min: 3.0,
            d_min_decay: 0.9,
            max_candidate_attempts: 50,
            weiszfeld_tol: 1e-6,
            weiszfeld_max_iter: 200,
        }
    }
}

impl GrowthParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.d_min.is_finite()
            && self.d_min > 0.0
            && self.d_min_decay > 0.0
            && self.d_min_decay < 1.0
            && self.max_candidate_attempts >= 1
            && self.weiszfeld_tol > 0.0
            && self.weiszfeld_max_iter >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("invalid growth parameters: {self:?}")))
        }
    }
}

/// Junction placement for parent inflow end `p0`, old outflow end `p1`
/// and new terminal `p2`, with one weight per emanating segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BifurcationProblem {
    pub anchors: [Point3; 3],
    pub weights: [f64; 3],
}

impl BifurcationProblem {
    pub fn new(p0: Point3, p1: Point3, p2: Point3, weights: [f64; 3]) -> Self {
        BifurcationProblem { anchors: [p0, p1, p2], weights }
    }

    /// `sum w_i |p - a_i|`, proportional to the junction's cylinder volume.
    pub fn objective(&self, p: Point3) -> f64 {
        self.anchors.iter().zip(self.weights).map(|(a, w)| w * p.distance(*a)).sum()
    }

    pub fn weighted_centroid(&self) -> Point3 {
        let total: f64 = self.weights.iter().sum();
        self.anchors.iter().zip(self.weights).fold(Point3::ZERO, |acc, (a, w)| acc + *a * (w / total))
    }

    /// Index of an anchor that is itself the minimizer, if any.
    ///
    /// Anchor `j` is optimal iff the pull of the other anchors,
    /// `|sum_{i != j} w_i (a_j - a_i)/|a_j - a_i||`, does not exceed `w_j`.
    fn optimal_anchor(&self) -> Option<usize> {
        (0..3).find(|&j| {
            let aj = self.anchors[j];
            let mut own = self.weights[j];
            let mut pull = Point3::ZERO;
            for i in (0..3).filter(|&i| i != j) {
                let d = aj - self.anchors[i];
                let n = d.norm();
                if n <= ANCHOR_SNAP {
                    own += self.weights[i];
                } else {
                    pull = pull + d * (self.weights[i] / n);
                }
            }
            pull.norm() <= own
        })
    }
}

/// Result of a Weiszfeld solve: the point and the objective after each iterate
/// (entry 0 is the starting centroid).
#[derive(Debug, Clone)]
pub struct WeiszfeldSolution {
    pub point: Point3,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Weighted geometric median of three anchors by Weiszfeld iteration from the
/// weighted centroid.
pub fn solve_bifurcation(prob: &BifurcationProblem, tol: f64, max_iter: usize) -> WeiszfeldSolution {
    if let Some(j) = prob.optimal_anchor() {
        let p = prob.anchors[j];
        return WeiszfeldSolution { point: p, objective_trace: vec![prob.objective(p)], iterations: 0, converged: true };
    }
    let mut p = prob.weighted_centroid();
    let mut trace = vec![prob.objective(p)];
    let nudge = Point3::new(1.0, 1.0, 1.0) * (ANCHOR_NUDGE / 3f64.sqrt());
    for it in 1..=max_iter {
        if prob.anchors.iter().any(|a| a.distance(p) < ANCHOR_SNAP) {
            p = p + nudge;
        }
        let mut num = Point3::ZERO;
        let mut den = 0.0;
        for (a, w) in prob.anchors.iter().zip(prob.weights) {
            let k = w / a.distance(p);
            num = num + *a * k;
            den += k;
        }
        let next = num * (1.0 / den);
        let step = next.distance(p);
        p = next;
        trace.push(prob.objective(p));
        if step < tol {
            return WeiszfeldSolution { point: p, objective_trace: trace, iterations: it, converged: true };
        }
    }
    WeiszfeldSolution { point: p, objective_trace: trace, iterations: max_iter, converged: false }
}

/// Volume-minimizing junction position for fixed radii.
pub fn optimal_bifurcation(prob: &BifurcationProblem, tol: f64, max_iter: usize) -> Point3 {
    solve_bifurcation(prob, tol, max_iter).point
}

/// An accepted candidate and the distance threshold it satisfied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub point: Point3,
    pub d_min: f64,
}

/// Uniform point in the box at least `d_min` from every segment. After
/// `max_candidate_attempts` rejections the threshold decays and sampling
/// continues; the threshold actually used is returned.
pub fn sample_candidate<R: Rng + ?Sized>(
    domain: &DomainBox,
    tree: &VascularTree,
    d_min: f64,
    params: &GrowthParams,
    rng: &mut R,
) -> Result<Candidate> {
    if tree.is_empty() {
        return Err(Error::EmptyTree);
    }
    let mut threshold = d_min;
    loop {
        if threshold < MIN_D_MIN {
            return Err(Error::DomainSaturated { d_min: threshold });
        }
        for _ in 0..params.max_candidate_attempts {
            let p = domain.sample(rng);
            let (_, d) = tree.nearest_segment(p)?;
            if d >= threshold {
                return Ok(Candidate { point: p, d_min: threshold });
            }
        }
        threshold *= params.d_min_decay;
    }
}

/// What an insertion did to the tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Insertion {
    /// The segment that was split. It keeps its id and now ends at the junction.
    pub split: SegmentId,
    /// Junction to the old outflow node.
    pub downstream: SegmentId,
    /// Junction to the new terminal.
    pub terminal: SegmentId,
    pub junction: NodeId,
    pub leaf: NodeId,
    /// True when the optimum collapsed onto an anchor and a fallback position was used.
    pub fallback: bool,
}

/// Connects `p_new` to its nearest segment through an optimally placed
/// bifurcation and re-applies the radius rule tree-wide.
pub fn insert_point(tree: &mut VascularTree, p_new: Point3, policy: &RadiusPolicy, params: &GrowthParams) -> Result<Insertion> {
    let (split, _) = tree.nearest_segment(p_new)?;
    let seg = *tree.segment(split)?;
    let (p0, p1) = tree.segment_endpoints(&seg);
    let w = seg.radius * seg.radius;
    let first = optimal_bifurcation(&BifurcationProblem::new(p0, p1, p_new, [w; 3]), params.weiszfeld_tol, params.weiszfeld_max_iter);

    let junction = tree.add_node(first);
    let leaf = tree.add_node(p_new);
    tree.retarget_segment(split, junction)?;
    let downstream = tree.add_segment(junction, seg.to, seg.radius, SegmentOrigin::Branch)?;
    let terminal = tree.add_segment(junction, leaf, seg.radius, SegmentOrigin::Branch)?;
    tree.apply_radius_policy(policy);

    // Second pass with the radii the new topology actually has.
    let r2 = |s: SegmentId| tree.segment(s).map(|s| s.radius * s.radius);
    let prob = BifurcationProblem::new(p0, p1, p_new, [r2(split)?, r2(downstream)?, r2(terminal)?]);
    let mut p = optimal_bifurcation(&prob, params.weiszfeld_tol, params.weiszfeld_max_iter);
    let mut fallback = false;
    if p.distance(p0) <= GEOM_EPS || p.distance(p1) <= GEOM_EPS {
        log::debug!("junction on segment {split} collapsed onto an endpoint; using the midpoint");
        p = p0.lerp(p1, 0.5);
        fallback = true;
    } else if p.distance(p_new) <= GEOM_EPS {
        // Keep the terminal segment non-degenerate: step 1% of the way from
        // the terminal toward its foot on the split segment.
        let (_, t) = point_segment_distance(p_new, p0, p1);
        log::debug!("junction on segment {split} collapsed onto the new terminal");
        p = p_new.lerp(p0.lerp(p1, t), 0.01);
        fallback = true;
    }
    tree.set_position(junction, p);
    Ok(Insertion { split, downstream, terminal, junction, leaf, fallback })
}

/// Grows `params.n_points` branches onto `trunk`.
pub fn grow<R: Rng + ?Sized>(
    trunk: &TrunkInstance,
    domain: &DomainBox,
    params: &GrowthParams,
    policy: &RadiusPolicy,
    rng: &mut R,
) -> Result<VascularTree> {
    params.validate()?;
    policy.validate()?;
    let mut tree = trunk.tree.clone();
    let mut d_min = params.d_min;
    for _ in 0..params.n_points {
        let c = sample_candidate(domain, &tree, d_min, params, rng)?;
        d_min = c.d_min;
        insert_point(&mut tree, c.point, policy, params)?;
    }
    Ok(tree)
}

//! Trunk templates for the four palm-vasculature families and randomized
//! trunk sampling.
//!
//! A template is a small directed forest of 2D keypoints on the palm plane
//! (x across the palm, y from the finger base down to the wrist). Sampling
//! jitters each keypoint inside a disk, lifts it into the domain box with a
//! random depth and connects the keypoints along the template's flow edges.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{DomainBox, Point3, GEOM_EPS};
use crate::tree::{NodeId, RadiusPolicy, SegmentOrigin, VascularTree};
use crate::{Error, Result};

const BUNDLED_TEMPLATES: &str = include_str!("../data/trunk_templates.json");

/// Maximum resampling attempts for a keypoint that lands on a neighbour.
pub const MAX_KEYPOINT_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrunkFamily {
    A,
    B,
    C,
    D,
}

impl TrunkFamily {
    pub const ALL: [TrunkFamily; 4] = [TrunkFamily::A, TrunkFamily::B, TrunkFamily::C, TrunkFamily::D];
}

impl fmt::Display for TrunkFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyPointRole {
    /// Arterial inflow into the palm.
    Root,
    /// Branching point along the palmar arch.
    ArchBifurcation,
    /// Inflow point of a finger artery.
    FingerInflow,
    /// Outflow toward a finger.
    FingerOutflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyPoint {
    pub label: String,
    pub role: KeyPointRole,
    pub x: f64,
    pub y: f64,
    pub perturb_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateEdge {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrunkTemplate {
    pub id: String,
    pub family: TrunkFamily,
    pub keypoints: Vec<KeyPoint>,
    pub edges: Vec<TemplateEdge>,
}

#[derive(Debug, Clone)]
pub struct TrunkInstance {
    pub tree: VascularTree,
    pub family: TrunkFamily,
    pub template_id: String,
}

impl TrunkTemplate {
    fn invalid(&self, reason: impl Into<String>) -> Error {
        Error::InvalidTemplate { template: self.id.clone(), reason: reason.into() }
    }

    fn index(&self) -> HashMap<&str, usize> {
        self.keypoints.iter().enumerate().map(|(i, k)| (k.label.as_str(), i)).collect()
    }

    /// Edge list as keypoint indices. Only valid after [`validate`](Self::validate).
    fn edge_indices(&self) -> Vec<(usize, usize)> {
        let idx = self.index();
        self.edges.iter().map(|e| (idx[e.from.as_str()], idx[e.to.as_str()])).collect()
    }

    pub fn roots(&self) -> impl Iterator<Item = &KeyPoint> {
        self.keypoints.iter().filter(|k| k.role == KeyPointRole::Root)
    }

    pub fn validate(&self, domain: &DomainBox) -> Result<()> {
        if self.keypoints.is_empty() {
            return Err(self.invalid("no keypoints"));
        }
        let idx = self.index();
        if idx.len() != self.keypoints.len() {
            return Err(self.invalid("duplicate keypoint labels"));
        }
        for k in &self.keypoints {
            if !(k.x.is_finite() && k.y.is_finite() && (0.0..=domain.width).contains(&k.x) && (0.0..=domain.height).contains(&k.y)) {
                return Err(self.invalid(format!(
                    "keypoint `{}` at ({}, {}) is outside [0, {}] x [0, {}]",
                    k.label, k.x, k.y, domain.width, domain.height
                )));
            }
            if !(k.perturb_radius.is_finite() && k.perturb_radius >= 0.0) {
                return Err(self.invalid(format!("keypoint `{}` has perturb_radius {}", k.label, k.perturb_radius)));
            }
        }
        let n = self.keypoints.len();
        let mut parent: Vec<Option<usize>> = vec![None; n];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &self.edges {
            let name = format!("{} -> {}", e.from, e.to);
            let (Some(&u), Some(&v)) = (idx.get(e.from.as_str()), idx.get(e.to.as_str())) else {
                return Err(self.invalid(format!("edge `{name}` references an unknown keypoint")));
            };
            if u == v {
                return Err(self.invalid(format!("edge `{name}` is a self-loop")));
            }
            if self.keypoints[v].role == KeyPointRole::Root {
                return Err(self.invalid(format!("edge `{name}` flows into root keypoint `{}`", e.to)));
            }
            if self.keypoints[u].role == KeyPointRole::FingerOutflow {
                return Err(self.invalid(format!("edge `{name}` flows out of finger outflow keypoint `{}`", e.from)));
            }
            if parent[v].replace(u).is_some() {
                return Err(self.invalid(format!("edge `{name}` gives `{}` a second inflow", e.to)));
            }
            children[u].push(v);
        }
        for (k, p) in self.keypoints.iter().zip(&parent) {
            if p.is_none() && k.role != KeyPointRole::Root {
                return Err(self.invalid(format!("keypoint `{}` has no inflow but is not a root", k.label)));
            }
        }
        let roots: Vec<usize> = (0..n).filter(|&i| self.keypoints[i].role == KeyPointRole::Root).collect();
        let mut seen = vec![false; n];
        let mut stack = roots.clone();
        while let Some(v) = stack.pop() {
            if !std::mem::replace(&mut seen[v], true) {
                stack.extend(&children[v]);
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(self.invalid(format!("keypoint `{}` is on a cycle", self.keypoints[i].label)));
        }
        match self.family {
            TrunkFamily::A => {
                if roots.len() < 2 {
                    return Err(self.invalid("family A needs at least two roots"));
                }
                // The arch is split at its flow watershed: every root must feed
                // into an arch-bifurcation chain.
                for &r in &roots {
                    let feeds_arch = children[r].iter().any(|&c| self.keypoints[c].role == KeyPointRole::ArchBifurcation);
                    if !feeds_arch {
                        return Err(self.invalid(format!("root `{}` does not feed the palmar arch", self.keypoints[r].label)));
                    }
                }
            }
            TrunkFamily::C | TrunkFamily::D if roots.len() != 1 => {
                return Err(self.invalid(format!("family {} needs exactly one root, found {}", self.family, roots.len())));
            }
            _ => {}
        }
        Ok(())
    }
}

fn validate_all(templates: &[TrunkTemplate], domain: &DomainBox) -> Result<()> {
    if templates.is_empty() {
        return Err(Error::InvalidTemplate { template: "<file>".into(), reason: "template list is empty".into() });
    }
    templates.iter().try_for_each(|t| t.validate(domain))
}

/// Parses and validates a JSON template list.
pub fn parse_templates(text: &str, domain: &DomainBox) -> Result<Vec<TrunkTemplate>> {
    let templates: Vec<TrunkTemplate> = serde_json::from_str(text).map_err(|e| Error::parse("trunk templates", e))?;
    validate_all(&templates, domain)?;
    Ok(templates)
}

/// Loads and validates a JSON template file.
pub fn load_templates(path: &Path, domain: &DomainBox) -> Result<Vec<TrunkTemplate>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_templates(&text, domain).map_err(|e| match e {
        Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
        other => other,
    })
}

/// The four templates shipped with the crate, one per family.
pub fn default_templates() -> Vec<TrunkTemplate> {
    parse_templates(BUNDLED_TEMPLATES, &DomainBox::default()).expect("bundled templates are valid")
}

/// Lifts a palm-plane keypoint into the box: `x` stays, the plane's `y`
/// becomes `z`, and the depth is uniform across the box thickness.
pub fn lift_keypoint<R: Rng + ?Sized>(x: f64, y: f64, domain: &DomainBox, rng: &mut R) -> Result<Point3> {
    if !(x.is_finite() && y.is_finite() && (0.0..=domain.width).contains(&x) && (0.0..=domain.height).contains(&y)) {
        return Err(Error::KeypointOutOfBounds { x, y, width: domain.width, height: domain.height });
    }
    let depth = loop {
        let d = rng.random_range(domain.y_min()..domain.y_max());
        if d > domain.y_min() {
            break d;
        }
    };
    Ok(Point3::new(x, depth, y))
}

fn sample_disk<R: Rng + ?Sized>(radius: f64, rng: &mut R) -> (f64, f64) {
    if radius <= 0.0 {
        return (0.0, 0.0);
    }
    let r = radius * rng.random::<f64>().sqrt();
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    (r * a.cos(), r * a.sin())
}

/// Samples one randomized trunk from `template`.
pub fn sample_trunk<R: Rng + ?Sized>(
    template: &TrunkTemplate,
    domain: &DomainBox,
    policy: &RadiusPolicy,
    rng: &mut R,
) -> Result<TrunkInstance> {
    template.validate(domain)?;
    let edges = template.edge_indices();
    let mut placed: Vec<Point3> = Vec::with_capacity(template.keypoints.len());
    for (i, k) in template.keypoints.iter().enumerate() {
        let neighbours: Vec<usize> = edges
            .iter()
            .filter_map(|&(u, v)| match (u == i, v == i) {
                (true, _) if v < i => Some(v),
                (_, true) if u < i => Some(u),
                _ => None,
            })
            .collect();
        let mut attempt = 0;
        let p = loop {
            if attempt == MAX_KEYPOINT_ATTEMPTS {
                return Err(Error::DegenerateKeypoint { label: k.label.clone(), attempts: attempt });
            }
            attempt += 1;
            let (dx, dy) = sample_disk(k.perturb_radius, rng);
            let x = (k.x + dx).clamp(0.0, domain.width);
            let y = (k.y + dy).clamp(0.0, domain.height);
            let p = lift_keypoint(x, y, domain, rng)?;
            if neighbours.iter().all(|&j| placed[j].distance(p) > GEOM_EPS) {
                break p;
            }
        };
        placed.push(p);
    }
    let mut tree = VascularTree::new();
    for (k, p) in template.keypoints.iter().zip(&placed) {
        if k.role == KeyPointRole::Root {
            tree.add_root(*p);
        } else {
            tree.add_node(*p);
        }
    }
    for (u, v) in edges {
        tree.add_segment(NodeId(u as u32), NodeId(v as u32), policy.r0, SegmentOrigin::Trunk)?;
    }
    tree.apply_radius_policy(policy);
    tree.validate(Some(domain))?;
    Ok(TrunkInstance { tree, family: template.family, template_id: template.id.clone() })
}

//! The vascular tree: nodes in palm space joined by directed, radius-carrying
//! cylinder segments, plus the outflow-count radius rule.

use std::fmt;
use std::io::Write as _;

use serde::{Deserialize, Serialize};

use crate::geometry::{point_segment_distance, DomainBox, Point3, GEOM_EPS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SegmentId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentOrigin {
    Trunk,
    Branch,
}

/// A straight cylinder carrying flow from `from` to `to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub from: NodeId,
    pub to: NodeId,
    pub radius: f64,
    pub origin: SegmentOrigin,
}

/// `r_i = r0 + n_i * ratio_e`, where `n_i` counts the leaves downstream of segment `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadiusPolicy {
    pub r0: f64,
    pub ratio_e: f64,
}

impl Default for RadiusPolicy {
    fn default() -> Self {
        RadiusPolicy { r0: 0.4, ratio_e: 0.08 }
    }
}

impl RadiusPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.r0.is_finite() && self.r0 > 0.0 && self.ratio_e.is_finite() && self.ratio_e >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("radius policy needs r0 > 0 and ratio_e >= 0, got {self:?}")))
        }
    }

    pub fn radius(&self, outflow: usize) -> f64 {
        self.r0 + outflow as f64 * self.ratio_e
    }
}

/// A forest of vessel segments. Node and segment ids are dense indices.
///
/// Adjacency (`incoming`, `outgoing`) is maintained incrementally by the
/// mutating methods, so structural queries never rescan the segment list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VascularTree {
    nodes: Vec<Point3>,
    segments: Vec<Segment>,
    roots: Vec<NodeId>,
    incoming: Vec<Option<SegmentId>>,
    outgoing: Vec<Vec<SegmentId>>,
}

impl VascularTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, p: Point3) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(p);
        self.incoming.push(None);
        self.outgoing.push(Vec::new());
        id
    }

    pub fn add_root(&mut self, p: Point3) -> NodeId {
        let id = self.add_node(p);
        self.roots.push(id);
        id
    }

    /// Adds a segment. Fails if either node is unknown, the endpoints coincide
    /// as ids, or `to` already has an inflow.
    pub fn add_segment(&mut self, from: NodeId, to: NodeId, radius: f64, origin: SegmentOrigin) -> Result<SegmentId> {
        self.check_node(from)?;
        self.check_node(to)?;
        if from == to {
            return Err(Error::InvalidTree(format!("self-loop at node {from}")));
        }
        if self.incoming[to.0 as usize].is_some() {
            return Err(Error::InvalidTree(format!("node {to} would have two inflow segments")));
        }
        if self.roots.contains(&to) {
            return Err(Error::InvalidTree(format!("root {to} cannot receive an inflow segment")));
        }
        let id = SegmentId(self.segments.len() as u32);
        self.segments.push(Segment { from, to, radius, origin });
        self.incoming[to.0 as usize] = Some(id);
        self.outgoing[from.0 as usize].push(id);
        Ok(id)
    }

    /// Redirects the outflow end of `seg` to `new_to`, keeping its id.
    pub(crate) fn retarget_segment(&mut self, seg: SegmentId, new_to: NodeId) -> Result<()> {
        self.check_segment(seg)?;
        self.check_node(new_to)?;
        if self.incoming[new_to.0 as usize].is_some() {
            return Err(Error::InvalidTree(format!("node {new_to} already has an inflow")));
        }
        let old_to = self.segments[seg.0 as usize].to;
        self.incoming[old_to.0 as usize] = None;
        self.incoming[new_to.0 as usize] = Some(seg);
        self.segments[seg.0 as usize].to = new_to;
        Ok(())
    }

    /// Moves a node. Structure is unchanged; containment is the caller's concern.
    pub fn set_position(&mut self, node: NodeId, p: Point3) {
        self.nodes[node.0 as usize] = p;
    }

    fn check_node(&self, n: NodeId) -> Result<()> {
        if (n.0 as usize) < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::UnknownNode(n))
        }
    }

    fn check_segment(&self, s: SegmentId) -> Result<()> {
        if (s.0 as usize) < self.segments.len() {
            Ok(())
        } else {
            Err(Error::UnknownSegment(s))
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn position(&self, n: NodeId) -> Point3 {
        self.nodes[n.0 as usize]
    }

    pub fn positions(&self) -> &[Point3] {
        &self.nodes
    }

    pub fn segment(&self, s: SegmentId) -> Result<&Segment> {
        self.segments.get(s.0 as usize).ok_or(Error::UnknownSegment(s))
    }

    pub fn segments(
        &self,
    ) -> impl DoubleEndedIterator<Item = (SegmentId, &Segment)> + ExactSizeIterator<Item = (SegmentId, &Segment)> + '_ {
        self.segments.iter().enumerate().map(|(i, s)| (SegmentId(i as u32), s))
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    pub fn inflow(&self, n: NodeId) -> Option<SegmentId> {
        self.incoming[n.0 as usize]
    }

    pub fn outflows(&self, n: NodeId) -> &[SegmentId] {
        &self.outgoing[n.0 as usize]
    }

    /// Nodes with no outgoing segment.
    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.outgoing.iter().enumerate().filter(|(_, o)| o.is_empty()).map(|(i, _)| NodeId(i as u32))
    }

    pub fn segment_endpoints(&self, s: &Segment) -> (Point3, Point3) {
        (self.position(s.from), self.position(s.to))
    }

    pub fn segment_length(&self, s: &Segment) -> f64 {
        let (a, b) = self.segment_endpoints(s);
        a.distance(b)
    }

    /// Checks the forest structure, segment sanity and (optionally) containment
    /// in `domain` with closed tolerance.
    pub fn validate(&self, domain: Option<&DomainBox>) -> Result<()> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        for (id, s) in self.segments() {
            if (s.from.0 as usize) >= n || (s.to.0 as usize) >= n {
                return Err(Error::InvalidTree(format!("segment {id} references a missing node")));
            }
            if s.from == s.to {
                return Err(Error::InvalidTree(format!("segment {id} is a self-loop")));
            }
            if !(s.radius.is_finite() && s.radius > 0.0) {
                return Err(Error::InvalidTree(format!("segment {id} has radius {}", s.radius)));
            }
            indeg[s.to.0 as usize] += 1;
        }
        let mut is_root = vec![false; n];
        for r in &self.roots {
            if (r.0 as usize) >= n {
                return Err(Error::InvalidTree(format!("root {r} does not exist")));
            }
            if is_root[r.0 as usize] {
                return Err(Error::InvalidTree(format!("root {r} listed twice")));
            }
            is_root[r.0 as usize] = true;
        }
        for (i, (&d, &root)) in indeg.iter().zip(&is_root).enumerate() {
            match (root, d) {
                (true, 0) | (false, 1) => {}
                (true, _) => return Err(Error::InvalidTree(format!("root {i} has an inflow segment"))),
                (false, 0) => return Err(Error::InvalidTree(format!("node {i} has no inflow and is not a root"))),
                (false, _) => return Err(Error::InvalidTree(format!("node {i} has {d} inflow segments"))),
            }
        }
        // With in-degree fixed at 0/1, the graph is a forest iff every node is
        // reachable from a root (a cycle would be unreachable).
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for s in &self.segments {
            children[s.from.0 as usize].push(s.to.0 as usize);
        }
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = self.roots.iter().map(|r| r.0 as usize).collect();
        let mut visited = 0;
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            visited += 1;
            stack.extend(children[v].iter().copied());
        }
        if visited != n {
            return Err(Error::InvalidTree(format!("{} nodes unreachable from roots (cycle or orphan)", n - visited)));
        }
        for (i, p) in self.nodes.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::InvalidTree(format!("node {i} has non-finite position")));
            }
            if let Some(b) = domain {
                if !b.contains_closed(*p, GEOM_EPS) {
                    return Err(Error::InvalidTree(format!("node {i} at {p:?} lies outside the domain")));
                }
            }
        }
        Ok(())
    }

    /// Number of leaves downstream of `seg` (its outflow node counts if it is a leaf).
    pub fn outflow_count(&self, seg: SegmentId) -> Result<usize> {
        let s = self.segment(seg)?;
        let mut count = 0;
        let mut stack = vec![s.to];
        while let Some(v) = stack.pop() {
            let out = self.outflows(v);
            if out.is_empty() {
                count += 1;
            }
            stack.extend(out.iter().map(|o| self.segments[o.0 as usize].to));
        }
        Ok(count)
    }

    /// Outflow counts for every segment in one post-order pass.
    pub fn outflow_counts(&self) -> Vec<usize> {
        let n = self.nodes.len();
        let mut leaves_below = vec![0usize; n];
        // Iterative post-order from each root.
        let mut order = Vec::with_capacity(n);
        let mut stack: Vec<NodeId> = self.roots.clone();
        while let Some(v) = stack.pop() {
            order.push(v);
            stack.extend(self.outflows(v).iter().map(|o| self.segments[o.0 as usize].to));
        }
        for &v in order.iter().rev() {
            let out = self.outflows(v);
            leaves_below[v.0 as usize] =
                if out.is_empty() { 1 } else { out.iter().map(|o| leaves_below[self.segments[o.0 as usize].to.0 as usize]).sum() };
        }
        self.segments.iter().map(|s| leaves_below[s.to.0 as usize]).collect()
    }

    /// Sets every radius from the outflow-count rule. Geometry is untouched.
    pub fn apply_radius_policy(&mut self, policy: &RadiusPolicy) {
        let counts = self.outflow_counts();
        for (s, n) in self.segments.iter_mut().zip(counts) {
            s.radius = policy.radius(n);
        }
    }

    pub fn with_radius_policy(mut self, policy: &RadiusPolicy) -> Self {
        self.apply_radius_policy(policy);
        self
    }

    /// Segment closest to `p`; ties go to the smallest id.
    pub fn nearest_segment(&self, p: Point3) -> Result<(SegmentId, f64)> {
        let mut best: Option<(SegmentId, f64)> = None;
        for (id, s) in self.segments() {
            let (a, b) = self.segment_endpoints(s);
            let (d, _) = point_segment_distance(p, a, b);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((id, d));
            }
        }
        best.ok_or(Error::EmptyTree)
    }

    /// Sum of straight-cylinder volumes, in mm^3.
    pub fn total_volume(&self) -> f64 {
        self.segments.iter().map(|s| std::f64::consts::PI * s.radius * s.radius * self.segment_length(s)).sum()
    }

    /// Writes one `seg_id from_node to_node radius x1 y1 z1 x2 y2 z2` line per segment.
    pub fn write_edge_list<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for (id, s) in self.segments() {
            let (a, b) = self.segment_endpoints(s);
            writeln!(w, "{} {} {} {} {} {} {} {} {} {}", id, s.from, s.to, s.radius, a.x, a.y, a.z, b.x, b.y, b.z)?;
        }
        Ok(())
    }

    pub fn to_edge_list(&self) -> String {
        let mut buf = Vec::new();
        self.write_edge_list(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("edge list is ASCII")
    }

    /// Parses an edge list written by [`write_edge_list`](Self::write_edge_list).
    ///
    /// Blank lines and `#` comments are ignored. Node ids are taken from the
    /// file; nodes without an inflow become roots. Segment origin is not
    /// stored in the format and comes back as `Branch`.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        struct Row {
            from: u32,
            to: u32,
            radius: f64,
            a: Point3,
            b: Point3,
        }
        let mut rows: Vec<(u32, Row)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let ctx = || format!("edge list line {}", lineno + 1);
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 10 {
                return Err(Error::parse(ctx(), format!("expected 10 fields, found {}", f.len())));
            }
            let int = |s: &str| s.parse::<u32>().map_err(|e| Error::parse(ctx(), e));
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::parse(ctx(), e));
            rows.push((
                int(f[0])?,
                Row {
                    from: int(f[1])?,
                    to: int(f[2])?,
                    radius: num(f[3])?,
                    a: Point3::new(num(f[4])?, num(f[5])?, num(f[6])?),
                    b: Point3::new(num(f[7])?, num(f[8])?, num(f[9])?),
                },
            ));
        }
        rows.sort_by_key(|(id, _)| *id);
        for (i, (id, _)) in rows.iter().enumerate() {
            if *id as usize != i {
                return Err(Error::parse("edge list", format!("segment ids must be dense from 0, found {id} at position {i}")));
            }
        }
        let n_nodes = rows.iter().map(|(_, r)| r.from.max(r.to) as usize + 1).max().unwrap_or(0);
        let mut pos: Vec<Option<Point3>> = vec![None; n_nodes];
        let mut has_inflow = vec![false; n_nodes];
        for (id, r) in &rows {
            for (node, p) in [(r.from, r.a), (r.to, r.b)] {
                match pos[node as usize] {
                    Some(q) if q != p => {
                        return Err(Error::parse("edge list", format!("segment {id}: node {node} has conflicting positions")))
                    }
                    _ => pos[node as usize] = Some(p),
                }
            }
            has_inflow[r.to as usize] = true;
        }
        let mut tree = VascularTree::new();
        for (i, p) in pos.into_iter().enumerate() {
            let p = p.ok_or_else(|| Error::parse("edge list", format!("node {i} is not referenced by any segment")))?;
            if has_inflow[i] {
                tree.add_node(p);
            } else {
                tree.add_root(p);
            }
        }
        for (_, r) in rows {
            tree.add_segment(NodeId(r.from), NodeId(r.to), r.radius, SegmentOrigin::Branch)?;
        }
        tree.validate(None)?;
        Ok(tree)
    }

    /// Writes the edge list to `path`.
    pub fn save_edge_list(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_edge_list().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load_edge_list(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_edge_list(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
            other => other,
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    pub(crate) fn y_tree() -> VascularTree {
        let mut t = VascularTree::new();
        let r = t.add_root(Point3::new(10.0, 40.0, 70.0));
        let m = t.add_node(Point3::new(10.0, 40.0, 50.0));
        let a = t.add_node(Point3::new(0.5, 40.0, 30.0));
        let b = t.add_node(Point3::new(20.0, 40.0, 30.0));
        t.add_segment(r, m, 1.0, SegmentOrigin::Trunk).unwrap();
        t.add_segment(m, a, 1.0, SegmentOrigin::Trunk).unwrap();
        t.add_segment(m, b, 1.0, SegmentOrigin::Trunk).unwrap();
        t
    }

    /// Random forest: each new node attaches to a uniformly chosen earlier node.
    pub(crate) fn random_tree(seed: u64, n: usize) -> VascularTree {
        let mut rng = crate::rng::stream(seed, 0, "random-tree", 0);
        let b = DomainBox::default();
        let mut t = VascularTree::new();
        t.add_root(b.sample(&mut rng));
        for i in 1..n {
            let parent = NodeId(rng.random_range(0..i as u32));
            let c = t.add_node(b.sample(&mut rng));
            t.add_segment(parent, c, 1.0, SegmentOrigin::Branch).unwrap();
        }
        t
    }

    /// Depth-first leaf count below a node, recomputed from the raw segment list.
    fn leaves_below_oracle(t: &VascularTree, node: NodeId) -> usize {
        let kids: Vec<NodeId> = t.segments().filter(|(_, s)| s.from == node).map(|(_, s)| s.to).collect();
        if kids.is_empty() {
            1
        } else {
            kids.into_iter().map(|k| leaves_below_oracle(t, k)).sum()
        }
    }

    #[test]
    fn outflow_count_examples() {
        let mut single = VascularTree::new();
        let r = single.add_root(Point3::new(1.0, 40.0, 1.0));
        let l = single.add_node(Point3::new(1.0, 40.0, 5.0));
        let s = single.add_segment(r, l, 0.5, SegmentOrigin::Trunk).unwrap();
        assert_eq!(single.outflow_count(s).unwrap(), 1);

        let y = y_tree();
        assert_eq!(y.outflow_count(SegmentId(0)).unwrap(), 2);
        assert_eq!(y.outflow_count(SegmentId(1)).unwrap(), 1);
        assert!(matches!(y.outflow_count(SegmentId(9)), Err(Error::UnknownSegment(_))));
    }

    #[test]
    fn radius_policy_examples() {
        let policy = RadiusPolicy { r0: 0.4, ratio_e: 0.1 };
        let y = y_tree().with_radius_policy(&policy);
        let radii: Vec<f64> = y.segments().map(|(_, s)| s.radius).collect();
        assert_eq!(radii, vec![0.4 + 2.0 * 0.1, 0.4 + 0.1, 0.4 + 0.1]);
        assert!((radii[0] - 0.6).abs() < 1e-12 && (radii[1] - 0.5).abs() < 1e-12);

        let flat = y_tree().with_radius_policy(&RadiusPolicy { r0: 0.4, ratio_e: 0.0 });
        assert!(flat.segments().all(|(_, s)| s.radius == 0.4));

        let mut chain = VascularTree::new();
        let r = chain.add_root(Point3::new(1.0, 40.0, 1.0));
        let a = chain.add_node(Point3::new(1.0, 40.0, 5.0));
        let b = chain.add_node(Point3::new(1.0, 40.0, 9.0));
        chain.add_segment(r, a, 9.0, SegmentOrigin::Trunk).unwrap();
        chain.add_segment(a, b, 9.0, SegmentOrigin::Trunk).unwrap();
        chain.apply_radius_policy(&policy);
        assert!(chain.segments().all(|(_, s)| (s.radius - 0.5).abs() < 1e-12));
    }

    #[test]
    fn nearest_segment_containment_and_ties() {
        let y = y_tree();
        let (id, d) = y.nearest_segment(Point3::new(10.0, 40.0, 60.0)).unwrap();
        assert_eq!((id, d), (SegmentId(0), 0.0));

        // Two parallel segments; a point exactly between them.
        let mut t = VascularTree::new();
        let a0 = t.add_root(Point3::new(0.0, 40.0, 0.0));
        let a1 = t.add_node(Point3::new(0.0, 40.0, 10.0));
        let b0 = t.add_root(Point3::new(4.0, 40.0, 0.0));
        let b1 = t.add_node(Point3::new(4.0, 40.0, 10.0));
        t.add_segment(a0, a1, 1.0, SegmentOrigin::Trunk).unwrap();
        t.add_segment(b0, b1, 1.0, SegmentOrigin::Trunk).unwrap();
        assert_eq!(t.nearest_segment(Point3::new(2.0, 40.0, 5.0)).unwrap(), (SegmentId(0), 2.0));

        assert!(matches!(VascularTree::new().nearest_segment(Point3::ZERO), Err(Error::EmptyTree)));
    }

    #[test]
    fn total_volume_examples() {
        let mut t = VascularTree::new();
        let a = t.add_root(Point3::new(0.0, 40.0, 0.0));
        let b = t.add_node(Point3::new(0.0, 40.0, 10.0));
        t.add_segment(a, b, 0.5, SegmentOrigin::Trunk).unwrap();
        assert!((t.total_volume() - 7.853981633974483).abs() < 1e-9);
        assert_eq!(VascularTree::new().total_volume(), 0.0);

        let y = y_tree();
        let expected: f64 = [
            (Point3::new(10.0, 40.0, 70.0), Point3::new(10.0, 40.0, 50.0)),
            (Point3::new(10.0, 40.0, 50.0), Point3::new(0.5, 40.0, 30.0)),
            (Point3::new(10.0, 40.0, 50.0), Point3::new(20.0, 40.0, 30.0)),
        ]
        .iter()
        .map(|(p, q)| std::f64::consts::PI * p.distance(*q))
        .sum();
        assert!((y.total_volume() - expected).abs() < 1e-9);
    }

    #[test]
    fn validation_rejects_bad_structure() {
        let mut t = y_tree();
        t.segments[2].to = NodeId(1);
        assert!(t.validate(None).is_err());

        let mut orphan = y_tree();
        orphan.add_node(Point3::new(1.0, 40.0, 1.0));
        assert!(orphan.validate(None).is_err());

        let mut bad_radius = y_tree();
        bad_radius.segments[0].radius = 0.0;
        assert!(bad_radius.validate(None).is_err());

        let mut t = y_tree();
        assert!(t.add_segment(NodeId(2), NodeId(1), 1.0, SegmentOrigin::Branch).is_err());
        assert!(t.add_segment(NodeId(2), NodeId(0), 1.0, SegmentOrigin::Branch).is_err());
        assert!(y_tree().validate(Some(&DomainBox::default())).is_ok());
    }

    #[test]
    fn edge_list_round_trip() {
        let t = random_tree(3, 12).with_radius_policy(&RadiusPolicy::default());
        let text = t.to_edge_list();
        assert_eq!(text.lines().count(), 11);
        let back = VascularTree::parse_edge_list(&text).unwrap();
        assert_eq!(back.to_edge_list(), text);
        assert!(VascularTree::parse_edge_list("0 0 1 0.5 1 2 3").is_err());
    }

    proptest! {
        #[test]
        fn outflow_counts_match_dfs_oracle(seed in 0u64..1000, n in 2usize..40) {
            let t = random_tree(seed, n);
            let fast = t.outflow_counts();
            for (id, s) in t.segments() {
                prop_assert_eq!(fast[id.0 as usize], leaves_below_oracle(&t, s.to));
                prop_assert_eq!(fast[id.0 as usize], t.outflow_count(id).unwrap());
            }
            // Flow conservation at every internal node.
            for v in 0..t.node_count() {
                let v = NodeId(v as u32);
                if let (Some(inflow), false) = (t.inflow(v), t.outflows(v).is_empty()) {
                    let down: usize = t.outflows(v).iter().map(|o| fast[o.0 as usize]).sum();
                    prop_assert_eq!(fast[inflow.0 as usize], down);
                }
            }
        }

        #[test]
        fn radii_monotone_downstream(seed in 0u64..1000, n in 2usize..40) {
            let t = random_tree(seed, n).with_radius_policy(&RadiusPolicy::default());
            for (_, s) in t.segments() {
                for child in t.outflows(s.to) {
                    prop_assert!(s.radius >= t.segment(*child).unwrap().radius);
                }
            }
        }

        #[test]
        fn nearest_matches_exhaustive_scan(seed in 0u64..1000, n in 2usize..30) {
            let t = random_tree(seed, n);
            let mut rng = crate::rng::stream(seed, 1, "probe", 0);
            let p = DomainBox::default().sample(&mut rng);
            let (id, d) = t.nearest_segment(p).unwrap();
            let brute = t.segments.iter().map(|s| {
                let (a, b) = (t.nodes[s.from.0 as usize], t.nodes[s.to.0 as usize]);
                point_segment_distance(p, a, b).0
            }).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(d, brute);
            prop_assert_eq!(t.segments().position(|(_, s)| {
                point_segment_distance(p, t.position(s.from), t.position(s.to)).0 == brute
            }).unwrap() as u32, id.0);
        }

        #[test]
        fn volume_invariant_under_relabeling(seed in 0u64..500, n in 2usize..25) {
            let t = random_tree(seed, n).with_radius_policy(&RadiusPolicy::default());
            // Rebuild with nodes in reverse order and segments in reverse order.
            let m = t.node_count() as u32;
            let mut r = VascularTree::new();
            for i in (0..m).rev() {
                let id = NodeId(i);
                if t.roots().contains(&id) { r.add_root(t.position(id)); } else { r.add_node(t.position(id)); }
            }
            for (_, s) in t.segments().rev() {
                r.add_segment(NodeId(m - 1 - s.from.0), NodeId(m - 1 - s.to.0), s.radius, s.origin).unwrap();
            }
            r.validate(None).unwrap();
            prop_assert!((r.total_volume() - t.total_volume()).abs() < 1e-9 * t.total_volume().max(1.0));
        }
    }
}

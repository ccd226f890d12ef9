//! Structured triangulations of the unit square with rectangular inclusions.
//!
//! A thin mesh carries one closed [`InterfaceLoop`] per inclusion, running
//! along mesh edges. A thick mesh additionally labels a band of triangles
//! around each loop as [`RegionLabel::Membrane`]; the original loops stay in
//! the mesh as the mid-lines of the bands.

mod io;

pub use io::{read_mesh, read_mesh_str, write_mesh, write_mesh_string};

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

const SNAP_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("invalid mesh specification: {0}")]
    InvalidMeshSpec(String),
    #[error("rectangle corner {value} is not on a grid line of spacing {grid_h}")]
    SnapError { value: f64, grid_h: f64 },
    #[error("geometry error: {0}")]
    GeometryError(String),
    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Region of a triangle. Component indices start at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegionLabel {
    Outer,
    Inclusion(usize),
    Membrane(usize),
}

impl RegionLabel {
    pub fn component(self) -> Option<usize> {
        match self {
            RegionLabel::Outer => None,
            RegionLabel::Inclusion(i) | RegionLabel::Membrane(i) => Some(i),
        }
    }
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionLabel::Outer => write!(f, "outer"),
            RegionLabel::Inclusion(i) => write!(f, "inclusion:{i}"),
            RegionLabel::Membrane(i) => write!(f, "membrane:{i}"),
        }
    }
}

impl FromStr for RegionLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "outer" {
            return Ok(RegionLabel::Outer);
        }
        let (kind, idx) = s
            .split_once(':')
            .ok_or_else(|| format!("unknown region label '{s}'"))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| format!("bad component index in label '{s}'"))?;
        if idx == 0 {
            return Err(format!("component index must be >= 1 in label '{s}'"));
        }
        match kind {
            "inclusion" => Ok(RegionLabel::Inclusion(idx)),
            "membrane" => Ok(RegionLabel::Membrane(idx)),
            _ => Err(format!("unknown region label '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub nodes: [usize; 3],
    pub label: RegionLabel,
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] > self.x0 && p[0] < self.x1 && p[1] > self.y0 && p[1] < self.y1
    }

    pub fn expanded(&self, d: f64) -> Rect {
        Rect::new(self.x0 - d, self.y0 - d, self.x1 + d, self.y1 + d)
    }

    /// Gap between two rectangles in the max-norm; negative when they overlap.
    fn gap(&self, other: &Rect) -> f64 {
        let gx = (other.x0 - self.x1).max(self.x0 - other.x1);
        let gy = (other.y0 - self.y1).max(self.y0 - other.y1);
        gx.max(gy)
    }
}

/// A closed loop of mesh nodes, oriented counterclockwise around its inclusion.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceLoop {
    /// Node ids in loop order; the closing segment runs from the last back to the first.
    pub node_ids: Vec<usize>,
    /// `seg_lengths[j]` is the length of the segment from node `j` to node `j + 1`.
    pub seg_lengths: Vec<f64>,
    /// Arc length at each node, starting from 0 at the first node.
    pub arc_coords: Vec<f64>,
    pub component_id: usize,
}

impl InterfaceLoop {
    pub fn from_nodes(
        component_id: usize,
        node_ids: Vec<usize>,
        points: &[[f64; 2]],
    ) -> Result<Self, MeshError> {
        if node_ids.len() < 3 {
            return Err(MeshError::GeometryError(format!(
                "loop {component_id} has fewer than 3 nodes"
            )));
        }
        let n = node_ids.len();
        let mut seg_lengths = Vec::with_capacity(n);
        for j in 0..n {
            let a = points[node_ids[j]];
            let b = points[node_ids[(j + 1) % n]];
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            if len <= 0.0 || !len.is_finite() {
                return Err(MeshError::GeometryError(format!(
                    "loop {component_id} has a degenerate segment at position {j}"
                )));
            }
            seg_lengths.push(len);
        }
        let mut arc_coords = Vec::with_capacity(n);
        let mut s = 0.0;
        for len in &seg_lengths {
            arc_coords.push(s);
            s += len;
        }
        Ok(InterfaceLoop {
            node_ids,
            seg_lengths,
            arc_coords,
            component_id,
        })
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn perimeter(&self) -> f64 {
        self.seg_lengths.iter().sum()
    }

    /// Twice the signed area enclosed; positive for counterclockwise loops.
    pub fn signed_area2(&self, points: &[[f64; 2]]) -> f64 {
        let n = self.node_ids.len();
        (0..n)
            .map(|j| {
                let a = points[self.node_ids[j]];
                let b = points[self.node_ids[(j + 1) % n]];
                a[0] * b[1] - a[1] * b[0]
            })
            .sum()
    }

    /// Unit normal of segment `j`, pointing out of the enclosed inclusion.
    pub fn segment_normal(&self, j: usize, points: &[[f64; 2]]) -> [f64; 2] {
        let n = self.node_ids.len();
        let a = points[self.node_ids[j]];
        let b = points[self.node_ids[(j + 1) % n]];
        let len = self.seg_lengths[j];
        [(b[1] - a[1]) / len, -(b[0] - a[0]) / len]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<Triangle>,
    /// Sorted ids of the nodes on the boundary of the unit square.
    pub boundary_nodes: Vec<usize>,
    pub loops: Vec<InterfaceLoop>,
    pub grid_h: f64,
    /// Membrane thickness, present only on thick meshes.
    pub eta: Option<f64>,
}

pub(crate) fn on_unit_square_boundary(p: [f64; 2]) -> bool {
    p[0].abs() < SNAP_TOL
        || (p[0] - 1.0).abs() < SNAP_TOL
        || p[1].abs() < SNAP_TOL
        || (p[1] - 1.0).abs() < SNAP_TOL
}

pub fn triangle_area(p: [[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

/// Uniform right-triangle mesh of the unit square with `n` cells per side.
pub fn build_square_mesh(n: usize) -> Result<Mesh, MeshError> {
    if n < 2 {
        return Err(MeshError::InvalidMeshSpec(format!(
            "need at least 2 cells per side, got {n}"
        )));
    }
    let h = 1.0 / n as f64;
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
    let mut boundary_nodes = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            nodes.push([i as f64 * h, j as f64 * h]);
            if i == 0 || j == 0 || i == n || j == n {
                boundary_nodes.push(id(i, j));
            }
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push(Triangle {
                nodes: [a, b, c],
                label: RegionLabel::Outer,
            });
            triangles.push(Triangle {
                nodes: [a, c, d],
                label: RegionLabel::Outer,
            });
        }
    }
    Ok(Mesh {
        nodes,
        triangles,
        boundary_nodes,
        loops: Vec::new(),
        grid_h: h,
        eta: None,
    })
}

fn snap(value: f64, h: f64) -> Result<usize, MeshError> {
    let k = (value / h).round();
    if (value / h - k).abs() > SNAP_TOL || k < 0.0 {
        return Err(MeshError::SnapError { value, grid_h: h });
    }
    Ok(k as usize)
}

/// Marks every triangle inside a box as an inclusion and extracts the box
/// perimeters as interface loops (component `i + 1` for `boxes[i]`).
pub fn embed_inclusions(mesh: &Mesh, boxes: &[Rect]) -> Result<Mesh, MeshError> {
    if boxes.is_empty() {
        return Err(MeshError::GeometryError("no inclusion boxes given".into()));
    }
    if !mesh.loops.is_empty() || mesh.eta.is_some() {
        return Err(MeshError::GeometryError(
            "inclusions can only be embedded into a plain square mesh".into(),
        ));
    }
    let h = mesh.grid_h;
    let n = (1.0 / h).round() as usize;
    if (n + 1) * (n + 1) != mesh.nodes.len() {
        return Err(MeshError::GeometryError(
            "mesh is not a structured square mesh".into(),
        ));
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;

    let mut cells = Vec::with_capacity(boxes.len());
    for b in boxes {
        let (i0, j0, i1, j1) = (snap(b.x0, h)?, snap(b.y0, h)?, snap(b.x1, h)?, snap(b.y1, h)?);
        if i1 <= i0 || j1 <= j0 {
            return Err(MeshError::GeometryError(format!("empty box {b:?}")));
        }
        if i0 < 1 || j0 < 1 || i1 + 1 > n || j1 + 1 > n {
            return Err(MeshError::GeometryError(format!(
                "box {b:?} is closer than one grid cell to the outer boundary"
            )));
        }
        cells.push((i0, j0, i1, j1));
    }
    for a in 0..boxes.len() {
        for b in a + 1..boxes.len() {
            if boxes[a].gap(&boxes[b]) < h - SNAP_TOL {
                return Err(MeshError::GeometryError(format!(
                    "boxes {} and {} overlap or are closer than one grid cell",
                    a + 1,
                    b + 1
                )));
            }
        }
    }

    let mut out = mesh.clone();
    for t in out.triangles.iter_mut() {
        let c = centroid(&mesh.nodes, t.nodes);
        if let Some(k) = boxes.iter().position(|b| b.contains(c)) {
            t.label = RegionLabel::Inclusion(k + 1);
        }
    }
    for (k, &(i0, j0, i1, j1)) in cells.iter().enumerate() {
        let mut ids = Vec::new();
        for i in i0..i1 {
            ids.push(id(i, j0));
        }
        for j in j0..j1 {
            ids.push(id(i1, j));
        }
        for i in (i0 + 1..=i1).rev() {
            ids.push(id(i, j1));
        }
        for j in (j0 + 1..=j1).rev() {
            ids.push(id(i0, j));
        }
        out.loops
            .push(InterfaceLoop::from_nodes(k + 1, ids, &out.nodes)?);
    }
    Ok(out)
}

/// Relabels a band of half-width `k·grid_h` around every loop as membrane.
/// The resulting membrane thickness `2k·grid_h` is stored in `eta`.
pub fn thicken_interfaces(mesh: &Mesh, k: usize) -> Result<Mesh, MeshError> {
    if k == 0 {
        return Err(MeshError::InvalidMeshSpec("band half-width must be >= 1".into()));
    }
    if mesh.loops.is_empty() || mesh.eta.is_some() {
        return Err(MeshError::GeometryError(
            "thickening needs a thin mesh with interface loops".into(),
        ));
    }
    let h = mesh.grid_h;
    let half = k as f64 * h;
    let boxes: Vec<Rect> = mesh.loops.iter().map(|l| loop_bounding_box(l, &mesh.nodes)).collect();
    for (i, b) in boxes.iter().enumerate() {
        if b.x1 - b.x0 < 2.0 * half + h - SNAP_TOL || b.y1 - b.y0 < 2.0 * half + h - SNAP_TOL {
            return Err(MeshError::GeometryError(format!(
                "membrane band of half-width {half} leaves no inclusion core in component {}",
                i + 1
            )));
        }
        let e = b.expanded(half);
        if e.x0 < h - SNAP_TOL || e.y0 < h - SNAP_TOL || e.x1 > 1.0 - h + SNAP_TOL || e.y1 > 1.0 - h + SNAP_TOL {
            return Err(MeshError::GeometryError(format!(
                "membrane band of component {} touches the outer boundary",
                i + 1
            )));
        }
    }
    for a in 0..boxes.len() {
        for b in a + 1..boxes.len() {
            if boxes[a].expanded(half).gap(&boxes[b].expanded(half)) < h - SNAP_TOL {
                return Err(MeshError::GeometryError(format!(
                    "membrane bands {} and {} touch",
                    a + 1,
                    b + 1
                )));
            }
        }
    }
    let mut out = mesh.clone();
    for t in out.triangles.iter_mut() {
        let c = centroid(&mesh.nodes, t.nodes);
        for (i, b) in boxes.iter().enumerate() {
            if b.expanded(half).contains(c) && !b.expanded(-half).contains(c) {
                t.label = RegionLabel::Membrane(i + 1);
            }
        }
    }
    out.eta = Some(2.0 * half);
    Ok(out)
}

fn loop_bounding_box(l: &InterfaceLoop, nodes: &[[f64; 2]]) -> Rect {
    let mut r = Rect::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &id in &l.node_ids {
        let p = nodes[id];
        r.x0 = r.x0.min(p[0]);
        r.y0 = r.y0.min(p[1]);
        r.x1 = r.x1.max(p[0]);
        r.y1 = r.y1.max(p[1]);
    }
    r
}

pub fn centroid(nodes: &[[f64; 2]], tri: [usize; 3]) -> [f64; 2] {
    let [a, b, c] = tri.map(|i| nodes[i]);
    [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
}

impl Mesh {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn component_count(&self) -> usize {
        self.loops.len()
    }

    pub fn is_thick(&self) -> bool {
        self.eta.is_some()
    }

    pub fn triangle_points(&self, t: usize) -> [[f64; 2]; 3] {
        self.triangles[t].nodes.map(|i| self.nodes[i])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| triangle_area(self.triangle_points(t)))
            .sum()
    }

    /// Flags every node touched by a triangle whose label passes `keep`.
    pub fn node_mask(&self, keep: impl Fn(RegionLabel) -> bool) -> Vec<bool> {
        let mut mask = vec![false; self.nodes.len()];
        for t in &self.triangles {
            if keep(t.label) {
                for &v in &t.nodes {
                    mask[v] = true;
                }
            }
        }
        mask
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.nodes.len()];
        for &b in &self.boundary_nodes {
            mask[b] = true;
        }
        mask
    }

    /// All interface-loop nodes, as a mask.
    pub fn loop_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.nodes.len()];
        for l in &self.loops {
            for &v in &l.node_ids {
                mask[v] = true;
            }
        }
        mask
    }

    /// Map from undirected edge to the triangles sharing it.
    pub fn edge_triangles(&self) -> HashMap<(usize, usize), Vec<usize>> {
        let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (ti, t) in self.triangles.iter().enumerate() {
            for e in 0..3 {
                let (a, b) = (t.nodes[e], t.nodes[(e + 1) % 3]);
                map.entry((a.min(b), a.max(b))).or_default().push(ti);
            }
        }
        map
    }

    /// Node sets on the inner and outer boundaries of membrane band `component`
    /// (nodes shared by a membrane triangle and an inclusion or outer triangle).
    pub fn band_boundary_nodes(&self, component: usize) -> (BTreeSet<usize>, BTreeSet<usize>) {
        let membrane = self.node_mask(|l| l == RegionLabel::Membrane(component));
        let core = self.node_mask(|l| l == RegionLabel::Inclusion(component));
        let outer = self.node_mask(|l| l == RegionLabel::Outer);
        let inner_set = (0..self.nodes.len()).filter(|&v| membrane[v] && core[v]).collect();
        let outer_set = (0..self.nodes.len()).filter(|&v| membrane[v] && outer[v]).collect();
        (inner_set, outer_set)
    }

    /// Checks the structural invariants every generated mesh satisfies.
    pub fn validate(&self) -> Result<(), MeshError> {
        let n = self.nodes.len();
        for (ti, t) in self.triangles.iter().enumerate() {
            if t.nodes.iter().any(|&v| v >= n) {
                return Err(MeshError::GeometryError(format!(
                    "triangle {ti} references a node out of range"
                )));
            }
            if triangle_area(self.triangle_points(ti)) <= 0.0 {
                return Err(MeshError::GeometryError(format!(
                    "triangle {ti} has non-positive signed area"
                )));
            }
            if matches!(t.label, RegionLabel::Membrane(_)) && self.eta.is_none() {
                return Err(MeshError::GeometryError(format!(
                    "triangle {ti} is labeled membrane in a thin mesh"
                )));
            }
        }
        let expected: Vec<usize> = (0..n)
            .filter(|&v| on_unit_square_boundary(self.nodes[v]))
            .collect();
        if expected != self.boundary_nodes {
            return Err(MeshError::GeometryError(
                "boundary node set does not match the unit square boundary".into(),
            ));
        }
        for l in &self.loops {
            if l.signed_area2(&self.nodes) <= 0.0 {
                return Err(MeshError::GeometryError(format!(
                    "loop {} is not counterclockwise",
                    l.component_id
                )));
            }
            let distinct: BTreeSet<_> = l.node_ids.iter().collect();
            if distinct.len() != l.node_ids.len() {
                return Err(MeshError::GeometryError(format!(
                    "loop {} is not simple",
                    l.component_id
                )));
            }
        }
        if !self.is_thick() {
            let edges = self.edge_triangles();
            for l in &self.loops {
                let m = l.node_ids.len();
                for j in 0..m {
                    let (a, b) = (l.node_ids[j], l.node_ids[(j + 1) % m]);
                    let tris = edges.get(&(a.min(b), a.max(b))).ok_or_else(|| {
                        MeshError::GeometryError(format!(
                            "loop {} segment {j} is not a mesh edge",
                            l.component_id
                        ))
                    })?;
                    let mut labels: Vec<_> = tris.iter().map(|&t| self.triangles[t].label).collect();
                    labels.sort();
                    if labels != [RegionLabel::Outer, RegionLabel::Inclusion(l.component_id)] {
                        return Err(MeshError::GeometryError(format!(
                            "loop {} segment {j} does not separate outer and inclusion triangles",
                            l.component_id
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(n: usize) -> Mesh {
        embed_inclusions(&build_square_mesh(n).unwrap(), &[Rect::new(0.25, 0.25, 0.75, 0.75)]).unwrap()
    }

    #[test]
    fn square_mesh_counts() {
        let m = build_square_mesh(2).unwrap();
        assert_eq!((m.nodes.len(), m.triangles.len(), m.boundary_nodes.len()), (9, 8, 8));
        let m = build_square_mesh(4).unwrap();
        assert_eq!((m.nodes.len(), m.triangles.len()), (25, 32));
        for n in [2, 3, 7, 16] {
            let m = build_square_mesh(n).unwrap();
            assert!((m.total_area() - 1.0).abs() < 1e-12);
            assert_eq!(m.grid_h, 1.0 / n as f64);
            m.validate().unwrap();
        }
        assert!(matches!(build_square_mesh(1), Err(MeshError::InvalidMeshSpec(_))));
    }

    #[test]
    fn single_inclusion_loop() {
        let m = embed_inclusions(&build_square_mesh(4).unwrap(), &[Rect::new(0.25, 0.25, 0.75, 0.75)]).unwrap();
        assert_eq!(m.loops.len(), 1);
        assert_eq!(m.loops[0].len(), 8);
        assert!((m.loops[0].perimeter() - 2.0).abs() < 1e-12);
        m.validate().unwrap();
    }

    #[test]
    fn two_inclusions() {
        let m = embed_inclusions(
            &build_square_mesh(8).unwrap(),
            &[Rect::new(0.125, 0.125, 0.375, 0.375), Rect::new(0.625, 0.625, 0.875, 0.875)],
        )
        .unwrap();
        assert_eq!(m.component_count(), 2);
        for l in &m.loops {
            assert!((l.perimeter() - 1.0).abs() < 1e-12);
        }
        m.validate().unwrap();
    }

    #[test]
    fn embedding_errors() {
        let base = build_square_mesh(8).unwrap();
        let overlap = embed_inclusions(
            &base,
            &[Rect::new(0.25, 0.25, 0.75, 0.75), Rect::new(0.5, 0.5, 0.875, 0.875)],
        );
        assert!(matches!(overlap, Err(MeshError::GeometryError(_))));
        let off_grid = embed_inclusions(&base, &[Rect::new(0.3, 0.25, 0.75, 0.75)]);
        assert!(matches!(off_grid, Err(MeshError::SnapError { .. })));
        let touching = embed_inclusions(&base, &[Rect::new(0.0, 0.25, 0.75, 0.75)]);
        assert!(matches!(touching, Err(MeshError::GeometryError(_))));
    }

    #[test]
    fn normals_point_into_outer_region() {
        let m = single(8);
        let edges = m.edge_triangles();
        let l = &m.loops[0];
        for j in 0..l.len() {
            let (a, b) = (l.node_ids[j], l.node_ids[(j + 1) % l.len()]);
            let nu = l.segment_normal(j, &m.nodes);
            let mid = [(m.nodes[a][0] + m.nodes[b][0]) / 2.0, (m.nodes[a][1] + m.nodes[b][1]) / 2.0];
            let outer = edges[&(a.min(b), a.max(b))]
                .iter()
                .copied()
                .find(|&t| m.triangles[t].label == RegionLabel::Outer)
                .unwrap();
            let c = centroid(&m.nodes, m.triangles[outer].nodes);
            assert!(nu[0] * (c[0] - mid[0]) + nu[1] * (c[1] - mid[1]) > 0.0);
        }
    }

    #[test]
    fn thickening() {
        let m = thicken_interfaces(&single(16), 1).unwrap();
        assert!((m.eta.unwrap() - 0.125).abs() < 1e-15);
        let core = m.triangles.iter().filter(|t| t.label == RegionLabel::Inclusion(1)).count();
        assert!(core > 0);
        m.validate().unwrap();
        // loop nodes are still mesh nodes and sit inside the band
        let memb = m.node_mask(|l| matches!(l, RegionLabel::Membrane(1)));
        assert!(m.loops[0].node_ids.iter().all(|&v| memb[v]));
        assert!(matches!(thicken_interfaces(&single(16), 4), Err(MeshError::GeometryError(_))));
        assert!(matches!(thicken_interfaces(&single(8), 2), Err(MeshError::GeometryError(_))));
    }

    #[test]
    fn band_boundaries_enclose_the_loop() {
        let m = thicken_interfaces(&single(16), 2).unwrap();
        let (inner, outer) = m.band_boundary_nodes(1);
        // square band boundaries at 1/4 ± 2/16: sides of 4 and 12 cells
        assert_eq!(inner.len(), 16);
        assert_eq!(outer.len(), 48);
        let loop_nodes: BTreeSet<usize> = m.loops[0].node_ids.iter().copied().collect();
        assert!(loop_nodes.is_disjoint(&inner) && loop_nodes.is_disjoint(&outer));
    }
}

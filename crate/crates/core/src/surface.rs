//! Tangential calculus on the closed interface polylines.
//!
//! Each loop carries the periodic P1 Laplacian in arc length and a lumped
//! mass. Traces are stored per loop in loop node order.

use crate::fem::{NodalField, Source};
use crate::linalg::{cg_solve_zero_mean, SolveError, SolverOptions, SparseSym, TripletBuilder};
use crate::mesh::{Mesh, MeshError};
use crate::{Error, Result};

/// Values on the interface nodes, one array per loop of the mesh.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceField {
    pub values: Vec<Vec<f64>>,
}

impl TraceField {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self::constant(mesh, 0.0)
    }

    pub fn constant(mesh: &Mesh, v: f64) -> Self {
        TraceField {
            values: mesh.loops.iter().map(|l| vec![v; l.len()]).collect(),
        }
    }

    /// Evaluates `f` at the coordinates of every loop node.
    pub fn from_fn(mesh: &Mesh, f: impl Fn([f64; 2]) -> f64) -> Self {
        TraceField {
            values: mesh
                .loops
                .iter()
                .map(|l| l.node_ids.iter().map(|&v| f(mesh.nodes[v])).collect())
                .collect(),
        }
    }

    pub fn sample(mesh: &Mesh, src: &dyn Source, t: f64) -> Self {
        Self::from_fn(mesh, |p| src.eval(p[0], p[1], t))
    }

    /// Restriction of a bulk field to the loops.
    pub fn gather(mesh: &Mesh, field: &[f64]) -> Self {
        TraceField {
            values: mesh
                .loops
                .iter()
                .map(|l| l.node_ids.iter().map(|&v| field[v]).collect())
                .collect(),
        }
    }

    /// Writes the trace into the loop entries of a bulk vector.
    pub fn scatter(&self, mesh: &Mesh, out: &mut [f64]) {
        for (l, vals) in mesh.loops.iter().zip(&self.values) {
            for (&v, &x) in l.node_ids.iter().zip(vals) {
                out[v] = x;
            }
        }
    }

    pub fn component_count(&self) -> usize {
        self.values.len()
    }

    fn zip_with(&self, other: &TraceField, f: impl Fn(f64, f64) -> f64) -> TraceField {
        TraceField {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
                .collect(),
        }
    }

    pub fn add(&self, other: &TraceField) -> TraceField {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &TraceField) -> TraceField {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scaled(&self, s: f64) -> TraceField {
        TraceField {
            values: self.values.iter().map(|c| c.iter().map(|v| s * v).collect()).collect(),
        }
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: f64, other: &TraceField) -> TraceField {
        self.zip_with(other, |x, y| x + a * y)
    }

    /// Adds `c[i]` to every value on loop `i`.
    pub fn add_constants(&self, c: &[f64]) -> TraceField {
        TraceField {
            values: self
                .values
                .iter()
                .zip(c)
                .map(|(vals, &ci)| vals.iter().map(|v| v + ci).collect())
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }

    /// Bulk field equal to the trace on loop nodes and zero elsewhere.
    pub fn to_nodal(&self, mesh: &Mesh) -> NodalField {
        let mut v = vec![0.0; mesh.node_count()];
        self.scatter(mesh, &mut v);
        NodalField::from(v)
    }
}

/// Periodic 1D stiffness and lumped mass of every loop.
#[derive(Debug, Clone)]
pub struct SurfaceOperator {
    pub stiffness: Vec<SparseSym>,
    pub mass: Vec<Vec<f64>>,
    pub perimeters: Vec<f64>,
    seg_lengths: Vec<Vec<f64>>,
}

/// Periodic P1 Laplacian and lumped mass of a closed polyline with the given
/// segment lengths (segment `j` joins node `j` to node `j+1 mod n`).
pub fn periodic_operator(seg_lengths: &[f64]) -> std::result::Result<(SparseSym, Vec<f64>), MeshError> {
    let n = seg_lengths.len();
    if n < 3 {
        return Err(MeshError::GeometryError(format!("closed loop needs 3 segments, got {n}")));
    }
    if let Some(j) = seg_lengths.iter().position(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(MeshError::GeometryError(format!("degenerate segment {j} of length {}", seg_lengths[j])));
    }
    let mut b = TripletBuilder::new(n);
    let mut mass = vec![0.0; n];
    for (j, &len) in seg_lengths.iter().enumerate() {
        let k = (j + 1) % n;
        b.add(j, j, 1.0 / len);
        b.add(k, k, 1.0 / len);
        b.add_sym(j, k, -1.0 / len);
        mass[j] += 0.5 * len;
        mass[k] += 0.5 * len;
    }
    Ok((b.build(), mass))
}

impl SurfaceOperator {
    pub fn build(mesh: &Mesh) -> Result<Self> {
        if mesh.loops.is_empty() {
            return Err(Error::Mesh(MeshError::GeometryError("mesh has no interface loops".into())));
        }
        Self::from_lengths(mesh.loops.iter().map(|l| l.seg_lengths.clone()).collect())
    }

    pub fn from_lengths(seg_lengths: Vec<Vec<f64>>) -> Result<Self> {
        let mut stiffness = Vec::new();
        let mut mass = Vec::new();
        for lens in &seg_lengths {
            let (l, m) = periodic_operator(lens)?;
            stiffness.push(l);
            mass.push(m);
        }
        Ok(SurfaceOperator {
            perimeters: seg_lengths.iter().map(|l| l.iter().sum()).collect(),
            stiffness,
            mass,
            seg_lengths,
        })
    }

    pub fn component_count(&self) -> usize {
        self.stiffness.len()
    }

    pub fn seg_lengths(&self, component: usize) -> &[f64] {
        &self.seg_lengths[component]
    }

    /// `Σ_j mass_j w_j` for each component.
    pub fn integrals(&self, w: &TraceField) -> Vec<f64> {
        self.mass
            .iter()
            .zip(&w.values)
            .map(|(m, v)| m.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

pub fn build_surface_operator(mesh: &Mesh) -> Result<SurfaceOperator> {
    SurfaceOperator::build(mesh)
}

/// Solves `−α Δ_Γ v = g` on every loop with `∫_{Γ_i} v = 0`. `g` holds the
/// nodal load (already integrated against the surface hats), so the discrete
/// system is `α L v = g`.
pub fn lb_solve(op: &SurfaceOperator, alpha: f64, g: &TraceField, opts: &SolverOptions) -> Result<TraceField> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidConfig(format!("surface coefficient must be positive, got {alpha}")));
    }
    if g.values.len() != op.component_count() || !g.is_finite() {
        return Err(Error::InvalidField("surface source does not match the loops or is not finite".into()));
    }
    let mut values = Vec::with_capacity(g.values.len());
    for (i, gi) in g.values.iter().enumerate() {
        if gi.len() != op.mass[i].len() {
            return Err(Error::InvalidField(format!("surface source on loop {i} has wrong length")));
        }
        let rhs: Vec<f64> = gi.iter().map(|v| v / alpha).collect();
        let (v, _) = cg_solve_zero_mean(&op.stiffness[i], &rhs, &op.mass[i], opts).map_err(|e| match e {
            SolveError::IncompatibleSource { ratio } => Error::CompatibilityViolated {
                component: i + 1,
                total: gi.iter().sum(),
                scale: ratio,
            },
            other => Error::Solve(other),
        })?;
        values.push(v);
    }
    Ok(TraceField { values })
}

/// Discrete `H¹(Γ)` norm: lumped `L²` plus the first-difference energy.
pub fn surface_h1_norm(op: &SurfaceOperator, w: &TraceField) -> f64 {
    let mut s = 0.0;
    for (i, vals) in w.values.iter().enumerate() {
        let n = vals.len();
        for j in 0..n {
            s += op.mass[i][j] * vals[j] * vals[j];
            let d = vals[(j + 1) % n] - vals[j];
            s += d * d / op.seg_lengths[i][j];
        }
    }
    s.sqrt()
}

/// `Σ (w_{j+1} − w_j)² / len_j` over all loops.
pub fn surface_gradient_energy(op: &SurfaceOperator, w: &TraceField) -> f64 {
    surface_gradient(op, w)
        .iter()
        .zip(&op.seg_lengths)
        .map(|(g, l)| g.iter().zip(l).map(|(d, len)| d * d * len).sum::<f64>())
        .sum()
}

/// Per-segment tangential derivative `(w_{j+1} − w_j) / len_j`.
pub fn surface_gradient(op: &SurfaceOperator, w: &TraceField) -> Vec<Vec<f64>> {
    w.values
        .iter()
        .zip(&op.seg_lengths)
        .map(|(vals, lens)| {
            let n = vals.len();
            (0..n).map(|j| (vals[(j + 1) % n] - vals[j]) / lens[j]).collect()
        })
        .collect()
}

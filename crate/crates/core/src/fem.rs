//! P1 finite elements on labeled triangulations.
//!
//! Coefficients are constant per region. Loads and sources are sampled at the
//! nodes and lumped. Dirichlet conditions are imposed by eliminating the
//! constrained rows and columns, which keeps the reduced systems SPD.

use std::cell::Cell;
use std::ops::{Deref, DerefMut};

use crate::linalg::{cg_solve, SolveReport, SolverOptions, SparseSym, TripletBuilder};
use crate::mesh::{triangle_area, Mesh, RegionLabel};
use crate::surface::TraceField;
use crate::{Error, Result};

/// A scalar source `f(x, y, t)`.
pub trait Source: Sync {
    fn eval(&self, x: f64, y: f64, t: f64) -> f64;
}

impl<F: Fn(f64, f64, f64) -> f64 + Sync> Source for F {
    fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        self(x, y, t)
    }
}

/// Samples `src` at every mesh node at time `t`.
pub fn sample_nodal(mesh: &Mesh, src: &dyn Source, t: f64) -> Vec<f64> {
    mesh.nodes.iter().map(|p| src.eval(p[0], p[1], t)).collect()
}

/// P1 function given by its nodal values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodalField {
    pub values: Vec<f64>,
}

impl NodalField {
    pub fn zeros(n: usize) -> Self {
        NodalField { values: vec![0.0; n] }
    }

    pub fn max_abs_diff(&self, other: &NodalField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl From<Vec<f64>> for NodalField {
    fn from(values: Vec<f64>) -> Self {
        NodalField { values }
    }
}

impl Deref for NodalField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl DerefMut for NodalField {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Region-wise constant coefficient. A `None` entry means the coefficient is
/// undefined on that region; assembling over such a triangle is an error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CoefficientMap {
    pub outer: Option<f64>,
    pub inclusion: Option<f64>,
    pub membrane: Option<f64>,
}

impl CoefficientMap {
    pub fn uniform(v: f64) -> Self {
        CoefficientMap {
            outer: Some(v),
            inclusion: Some(v),
            membrane: Some(v),
        }
    }

    /// Conductivities of the thin problem: `σ_out` outside, `σ_int` in the inclusions.
    pub fn conductivity(sigma_int: f64, sigma_out: f64) -> Self {
        CoefficientMap {
            outer: Some(sigma_out),
            inclusion: Some(sigma_int),
            membrane: Some(0.0),
        }
    }

    pub fn only(region: Region, v: f64) -> Self {
        let pick = |l| if region.contains(l) { Some(v) } else { Some(0.0) };
        CoefficientMap {
            outer: pick(RegionLabel::Outer),
            inclusion: pick(RegionLabel::Inclusion(1)),
            membrane: pick(RegionLabel::Membrane(1)),
        }
    }

    pub fn value(&self, label: RegionLabel) -> Result<f64> {
        let v = match label {
            RegionLabel::Outer => self.outer,
            RegionLabel::Inclusion(_) => self.inclusion,
            RegionLabel::Membrane(_) => self.membrane,
        };
        match v {
            Some(v) if v >= 0.0 && v.is_finite() => Ok(v),
            Some(v) => Err(Error::CoefficientError(format!("coefficient {v} on {label} is not a finite non-negative number"))),
            None => Err(Error::CoefficientError(format!("no coefficient given for region {label}"))),
        }
    }
}

/// Subsets of the triangulation used to restrict integrals and assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    All,
    Outer,
    Inclusion(usize),
    Inclusions,
    Membrane(usize),
    Membranes,
    /// Everything except membranes.
    Conductors,
}

impl Region {
    pub fn contains(self, label: RegionLabel) -> bool {
        match (self, label) {
            (Region::All, _) => true,
            (Region::Outer, RegionLabel::Outer) => true,
            (Region::Inclusion(i), RegionLabel::Inclusion(j)) => i == j,
            (Region::Inclusions, RegionLabel::Inclusion(_)) => true,
            (Region::Membrane(i), RegionLabel::Membrane(j)) => i == j,
            (Region::Membranes, RegionLabel::Membrane(_)) => true,
            (Region::Conductors, l) => !matches!(l, RegionLabel::Membrane(_)),
            _ => false,
        }
    }
}

thread_local! {
    static FLIP_STIFFNESS: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with every stiffness assembled on this thread negated. Fault
/// injection for the verification suite.
pub fn with_flipped_stiffness_sign<R>(f: impl FnOnce() -> R) -> R {
    let prev = FLIP_STIFFNESS.with(|c| c.replace(true));
    let out = f();
    FLIP_STIFFNESS.with(|c| c.set(prev));
    out
}

/// Gradients of the three barycentric hat functions and the triangle area.
pub fn hat_gradients(p: [[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let area = triangle_area(p);
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let (b, c) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        g[i] = [(b[1] - c[1]) / (2.0 * area), (c[0] - b[0]) / (2.0 * area)];
    }
    (g, area)
}

/// `∫_T ∇φ_i·∇φ_j` for a single triangle.
pub fn local_stiffness(p: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let (g, area) = hat_gradients(p);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    k
}

pub fn assemble_stiffness(mesh: &Mesh, coef: &CoefficientMap) -> Result<SparseSym> {
    let sign = if FLIP_STIFFNESS.with(Cell::get) { -1.0 } else { 1.0 };
    let mut b = TripletBuilder::new(mesh.node_count());
    for (ti, t) in mesh.triangles.iter().enumerate() {
        let c = coef.value(t.label)?;
        if c == 0.0 {
            continue;
        }
        let k = local_stiffness(mesh.triangle_points(ti));
        for (&ni, row) in t.nodes.iter().zip(&k) {
            for (&nj, kij) in t.nodes.iter().zip(row) {
                b.add(ni, nj, sign * c * kij);
            }
        }
    }
    Ok(b.build())
}

fn check_field(f: &[f64], n: usize) -> Result<()> {
    if f.len() != n {
        return Err(Error::InvalidField(format!("expected {n} nodal values, got {}", f.len())));
    }
    if let Some(i) = f.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidField(format!("non-finite value {} at node {i}", f[i])));
    }
    Ok(())
}

/// Lumped load over the whole mesh.
pub fn assemble_load(mesh: &Mesh, f: &[f64]) -> Result<Vec<f64>> {
    assemble_load_in(mesh, f, Region::All)
}

/// Lumped load restricted to the triangles of `region`:
/// entry `i` is `f_i` times a third of the adjacent area inside the region.
pub fn assemble_load_in(mesh: &Mesh, f: &[f64], region: Region) -> Result<Vec<f64>> {
    check_field(f, mesh.node_count())?;
    let mut load = vec![0.0; mesh.node_count()];
    for (ti, t) in mesh.triangles.iter().enumerate() {
        if !region.contains(t.label) {
            continue;
        }
        let a3 = triangle_area(mesh.triangle_points(ti)) / 3.0;
        for &v in &t.nodes {
            load[v] += a3 * f[v];
        }
    }
    Ok(load)
}

/// Lumped integral of a nodal field over `region`; equals the sum of
/// [`assemble_load_in`].
pub fn region_integral(mesh: &Mesh, f: &[f64], region: Region) -> f64 {
    mesh.triangles
        .iter()
        .enumerate()
        .filter(|(_, t)| region.contains(t.label))
        .map(|(ti, t)| triangle_area(mesh.triangle_points(ti)) / 3.0 * t.nodes.iter().map(|&v| f[v]).sum::<f64>())
        .sum()
}

/// A symmetric matrix with a fixed set of Dirichlet nodes eliminated.
#[derive(Debug, Clone)]
pub struct DirichletSystem {
    full: SparseSym,
    fixed: Vec<bool>,
    free: Vec<usize>,
    reduced: SparseSym,
}

impl DirichletSystem {
    pub fn new(a: SparseSym, fixed: Vec<bool>) -> Self {
        Self::with_free(a, fixed.clone(), fixed.iter().map(|&f| !f).collect())
    }

    /// Like [`DirichletSystem::new`], but only the nodes flagged in `active`
    /// and not fixed become unknowns; the rest are left at zero.
    pub fn with_free(a: SparseSym, fixed: Vec<bool>, active: Vec<bool>) -> Self {
        let free: Vec<usize> = (0..a.dim()).filter(|&i| active[i] && !fixed[i]).collect();
        let reduced = a.principal_submatrix(&free);
        DirichletSystem {
            full: a,
            fixed,
            free,
            reduced,
        }
    }

    pub fn matrix(&self) -> &SparseSym {
        &self.full
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.fixed[i]
    }

    /// Right-hand side of the reduced system, `b_F − A_FD g_D`.
    fn reduced_rhs(&self, load: &[f64], values: &[f64]) -> Vec<f64> {
        let g: Vec<f64> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| if self.fixed[i] { v } else { 0.0 })
            .collect();
        let ag = self.full.matvec(&g);
        self.free.iter().map(|&i| load[i] - ag[i]).collect()
    }

    /// Solves with `values` prescribed on the fixed nodes (other entries of
    /// `values` are ignored).
    pub fn solve(&self, load: &[f64], values: &[f64], opts: &SolverOptions) -> Result<(NodalField, SolveReport)> {
        let n = self.full.dim();
        check_field(load, n)?;
        check_field(values, n)?;
        let rhs = self.reduced_rhs(load, values);
        let (x, report) = cg_solve(&self.reduced, &rhs, opts)?;
        let mut u = vec![0.0; n];
        for i in 0..n {
            if self.fixed[i] {
                u[i] = values[i];
            }
        }
        for (k, &i) in self.free.iter().enumerate() {
            u[i] = x[k];
        }
        Ok((NodalField::from(u), report))
    }

    /// (‖(b − A u)_F‖₂, ‖b_F − A_FD u_D‖₂): residual on the free nodes and the
    /// norm of the reduced right-hand side it is measured against.
    pub fn free_residual(&self, load: &[f64], u: &[f64]) -> (f64, f64) {
        let au = self.full.matvec(u);
        let r: f64 = self.free.iter().map(|&i| (load[i] - au[i]).powi(2)).sum::<f64>().sqrt();
        let b: f64 = self.reduced_rhs(load, u).iter().map(|v| v * v).sum::<f64>().sqrt();
        (r, b)
    }

    /// Errors with [`Error::StaleField`] when `u` does not solve the system on
    /// the free nodes to within `10·tol`.
    pub fn check_solved(&self, load: &[f64], u: &[f64], tol: f64) -> Result<()> {
        let (r, b) = self.free_residual(load, u);
        let limit = 10.0 * tol * b;
        if r > limit && r > 1e-14 {
            return Err(Error::StaleField { residual: r, limit });
        }
        Ok(())
    }
}

/// Solves `A u = load` with `u` prescribed on the nodes in `fixed`.
pub fn solve_dirichlet(
    a: &SparseSym,
    load: &[f64],
    fixed: &[(usize, f64)],
    opts: &SolverOptions,
) -> Result<NodalField> {
    let n = a.dim();
    let mut mask = vec![false; n];
    let mut values = vec![0.0; n];
    for &(i, v) in fixed {
        mask[i] = true;
        values[i] = v;
    }
    let sys = DirichletSystem::new(a.clone(), mask);
    Ok(sys.solve(load, &values, opts)?.0)
}

/// The elliptic solves of the thin-interface problem on one mesh: matrices
/// are assembled once and reused across time levels.
#[derive(Debug, Clone)]
pub struct InterfaceFem<'m> {
    mesh: &'m Mesh,
    sigma: CoefficientMap,
    /// Bulk stiffness with `σ_int` / `σ_out`, Dirichlet on ∂Ω and on Γ.
    transmission: DirichletSystem,
    /// `σ_out`-weighted stiffness of the outer region only, Dirichlet on ∂Ω and Γ,
    /// unknowns restricted to outer nodes.
    exterior: DirichletSystem,
    outer_nodes: Vec<bool>,
    opts: SolverOptions,
}

impl<'m> InterfaceFem<'m> {
    pub fn new(mesh: &'m Mesh, sigma_int: f64, sigma_out: f64, opts: SolverOptions) -> Result<Self> {
        if mesh.loops.is_empty() || mesh.is_thick() {
            return Err(Error::Mesh(crate::mesh::MeshError::GeometryError(
                "interface solves need a thin mesh with loops".into(),
            )));
        }
        if !(sigma_int > 0.0 && sigma_out > 0.0) {
            return Err(Error::CoefficientError("conductivities must be strictly positive".into()));
        }
        let sigma = CoefficientMap::conductivity(sigma_int, sigma_out);
        let mut fixed = mesh.boundary_mask();
        for (f, l) in fixed.iter_mut().zip(mesh.loop_mask()) {
            *f |= l;
        }
        let k_full = assemble_stiffness(mesh, &sigma)?;
        let k_out = assemble_stiffness(mesh, &CoefficientMap::only(Region::Outer, sigma_out))?;
        let outer_nodes = mesh.node_mask(|l| l == RegionLabel::Outer);
        Ok(InterfaceFem {
            mesh,
            sigma,
            transmission: DirichletSystem::new(k_full, fixed.clone()),
            exterior: DirichletSystem::with_free(k_out, fixed, outer_nodes.clone()),
            outer_nodes,
            opts,
        })
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn sigma(&self) -> &CoefficientMap {
        &self.sigma
    }

    pub fn sigma_out(&self) -> f64 {
        self.sigma.outer.unwrap_or(0.0)
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    /// Stiffness over both conductors.
    pub fn bulk_matrix(&self) -> &SparseSym {
        self.transmission.matrix()
    }

    /// `σ_out` stiffness of the outer region.
    pub fn outer_matrix(&self) -> &SparseSym {
        self.exterior.matrix()
    }

    pub fn transmission_system(&self) -> &DirichletSystem {
        &self.transmission
    }

    pub fn exterior_system(&self) -> &DirichletSystem {
        &self.exterior
    }

    pub fn outer_nodes(&self) -> &[bool] {
        &self.outer_nodes
    }

    /// `−div(σ∇u) = f` off Γ, `u = 0` on ∂Ω, `u = h` on Γ.
    pub fn solve_transmission(&self, f: &[f64], h: &TraceField) -> Result<NodalField> {
        let load = assemble_load(self.mesh, f)?;
        let mut values = vec![0.0; self.mesh.node_count()];
        h.scatter(self.mesh, &mut values);
        Ok(self.transmission.solve(&load, &values, &self.opts)?.0)
    }

    /// `ū`: the transmission solve with zero data on Γ.
    pub fn solve_zero_trace(&self, f: &[f64]) -> Result<NodalField> {
        let load = assemble_load(self.mesh, f)?;
        let values = vec![0.0; self.mesh.node_count()];
        Ok(self.transmission.solve(&load, &values, &self.opts)?.0)
    }

    /// Harmonic in the outer region, zero on ∂Ω, `g` on Γ. Nodes that belong
    /// only to inclusions are left at zero.
    pub fn solve_exterior_laplace(&self, g: &TraceField) -> Result<NodalField> {
        let n = self.mesh.node_count();
        let mut values = vec![0.0; n];
        g.scatter(self.mesh, &mut values);
        let load = vec![0.0; n];
        Ok(self.exterior.solve(&load, &values, &self.opts)?.0)
    }
}

/// Free-function form of [`InterfaceFem::solve_transmission`].
pub fn solve_transmission(mesh: &Mesh, sigma_int: f64, sigma_out: f64, f: &[f64], h: &TraceField, opts: &SolverOptions) -> Result<NodalField> {
    InterfaceFem::new(mesh, sigma_int, sigma_out, *opts)?.solve_transmission(f, h)
}

/// Free-function form of [`InterfaceFem::solve_zero_trace`].
pub fn solve_zero_trace(mesh: &Mesh, sigma_int: f64, sigma_out: f64, f: &[f64], opts: &SolverOptions) -> Result<NodalField> {
    InterfaceFem::new(mesh, sigma_int, sigma_out, *opts)?.solve_zero_trace(f)
}

/// Free-function form of [`InterfaceFem::solve_exterior_laplace`].
pub fn solve_exterior_laplace(mesh: &Mesh, g: &TraceField, opts: &SolverOptions) -> Result<NodalField> {
    InterfaceFem::new(mesh, 1.0, 1.0, *opts)?.solve_exterior_laplace(g)
}

/// (L² norm, H¹ seminorm) of a P1 field over `region`, integrated exactly.
pub fn field_norms(field: &[f64], mesh: &Mesh, region: Region) -> (f64, f64) {
    let (mut l2, mut h1) = (0.0, 0.0);
    for (ti, t) in mesh.triangles.iter().enumerate() {
        if !region.contains(t.label) {
            continue;
        }
        let (g, area) = hat_gradients(mesh.triangle_points(ti));
        let u = t.nodes.map(|v| field[v]);
        let sum: f64 = u.iter().sum();
        let sq: f64 = u.iter().map(|x| x * x).sum();
        l2 += area / 12.0 * (sq + sum * sum);
        let gx: f64 = (0..3).map(|i| u[i] * g[i][0]).sum();
        let gy: f64 = (0..3).map(|i| u[i] * g[i][1]).sum();
        h1 += area * (gx * gx + gy * gy);
    }
    (l2.sqrt(), h1.sqrt())
}

/// `∫_region |∇u|²`.
pub fn gradient_energy(field: &[f64], mesh: &Mesh, region: Region) -> f64 {
    field_norms(field, mesh, region).1.powi(2)
}

// Degree-5 seven-point rule on the reference triangle (barycentric, weight).
const QUAD7: [([f64; 3], f64); 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
    ([0.059_715_871_789_770, 0.470_142_064_105_115, 0.470_142_064_105_115], 0.132_394_152_788_506),
    ([0.470_142_064_105_115, 0.059_715_871_789_770, 0.470_142_064_105_115], 0.132_394_152_788_506),
    ([0.470_142_064_105_115, 0.470_142_064_105_115, 0.059_715_871_789_770], 0.132_394_152_788_506),
    ([0.797_426_985_353_087, 0.101_286_507_323_456, 0.101_286_507_323_456], 0.125_939_180_544_827),
    ([0.101_286_507_323_456, 0.797_426_985_353_087, 0.101_286_507_323_456], 0.125_939_180_544_827),
    ([0.101_286_507_323_456, 0.101_286_507_323_456, 0.797_426_985_353_087], 0.125_939_180_544_827),
];

/// L² distance between a P1 field and a smooth function, by quadrature.
pub fn l2_error(field: &[f64], mesh: &Mesh, exact: impl Fn(f64, f64) -> f64) -> f64 {
    let mut e2 = 0.0;
    for (ti, t) in mesh.triangles.iter().enumerate() {
        let p = mesh.triangle_points(ti);
        let area = triangle_area(p);
        for (bary, w) in QUAD7 {
            let x = (0..3).map(|i| bary[i] * p[i][0]).sum::<f64>();
            let y = (0..3).map(|i| bary[i] * p[i][1]).sum::<f64>();
            let uh: f64 = (0..3).map(|i| bary[i] * field[t.nodes[i]]).sum();
            e2 += area * w * (uh - exact(x, y)).powi(2);
        }
    }
    e2.sqrt()
}

/// `∫_region |∇(u_h − u*)|²` by quadrature against the exact gradient.
pub fn energy_error(field: &[f64], mesh: &Mesh, exact_grad: impl Fn(f64, f64) -> [f64; 2]) -> f64 {
    let mut e2 = 0.0;
    for (ti, t) in mesh.triangles.iter().enumerate() {
        let p = mesh.triangle_points(ti);
        let (g, area) = hat_gradients(p);
        let gx: f64 = (0..3).map(|i| field[t.nodes[i]] * g[i][0]).sum();
        let gy: f64 = (0..3).map(|i| field[t.nodes[i]] * g[i][1]).sum();
        for (bary, w) in QUAD7 {
            let x = (0..3).map(|i| bary[i] * p[i][0]).sum::<f64>();
            let y = (0..3).map(|i| bary[i] * p[i][1]).sum::<f64>();
            let ge = exact_grad(x, y);
            e2 += area * w * ((gx - ge[0]).powi(2) + (gy - ge[1]).powi(2));
        }
    }
    e2.sqrt()
}

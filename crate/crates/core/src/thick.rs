//! The regularized thick-membrane evolution.
//!
//! The membrane band carries the capacitive coefficient `α` (or `α/η` when
//! studying the concentration limit) and no conduction; the conductors carry
//! conductivity `σ` and a small capacitive regularization `δ`. With `B` and
//! `K` the two coefficient maps the problem is
//! `−div(B ∇u_t) − div(K ∇u) = f`, `u = 0` on `∂Ω`.

use rayon::prelude::*;

use crate::fem::{
    assemble_load, assemble_stiffness, field_norms, gradient_energy, region_integral, sample_nodal, CoefficientMap,
    DirichletSystem, NodalField, Region, Source,
};
use crate::linalg::{SolverOptions, SparseSym};
use crate::mesh::{thicken_interfaces, Mesh, MeshError, RegionLabel};
use crate::surface::TraceField;
use crate::thin::{ContractionReport, ThinConfig, ThinSolver};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThickScheme {
    Implicit,
    Explicit,
    Picard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThickConfig {
    pub scheme: ThickScheme,
    /// Capacitive regularization of the conductors.
    pub delta: f64,
    pub alpha: f64,
    pub sigma_int: f64,
    pub sigma_out: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Scale the membrane coefficient by `1/η`.
    pub concentrated: bool,
    pub window: f64,
    pub picard_tol: f64,
    pub max_sweeps: usize,
    pub solver: SolverOptions,
}

impl Default for ThickConfig {
    fn default() -> Self {
        ThickConfig {
            scheme: ThickScheme::Implicit,
            delta: 0.1,
            alpha: 1.0,
            sigma_int: 1.0,
            sigma_out: 1.0,
            dt: 0.01,
            t_final: 0.1,
            concentrated: false,
            window: 0.05,
            picard_tol: 1e-8,
            max_sweeps: 100,
            solver: SolverOptions::default().with_tol(1e-12),
        }
    }
}

fn steps_for(length: f64, dt: f64, what: &str) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidConfig(format!("time step must be positive, got {dt}")));
    }
    let n = (length / dt).round();
    if n < 1.0 || (n * dt - length).abs() > 1e-9 * length.max(dt) {
        return Err(Error::InvalidConfig(format!("{what} {length} is not a positive multiple of dt = {dt}")));
    }
    Ok(n as usize)
}

impl ThickConfig {
    pub fn validate(&self) -> Result<()> {
        steps_for(self.t_final, self.dt, "final time")?;
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidConfig(format!("delta must be non-negative, got {}", self.delta)));
        }
        if self.delta == 0.0 && self.scheme != ThickScheme::Implicit {
            return Err(Error::InvalidConfig("delta = 0 is only allowed with the implicit scheme".into()));
        }
        if self.scheme == ThickScheme::Picard {
            steps_for(self.window, self.dt, "Picard window")?;
            if self.picard_tol.is_nan() || self.picard_tol <= 0.0 || self.max_sweeps == 0 {
                return Err(Error::InvalidConfig("Picard tolerance and sweep limit must be positive".into()));
            }
        }
        for (name, v) in [("alpha", self.alpha), ("sigma_int", self.sigma_int), ("sigma_out", self.sigma_out)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Explicit steps with `σ Δt / δ` above the stability bound. Not fatal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StiffnessWarning {
    pub ratio: f64,
    pub bound: f64,
}

impl std::fmt::Display for StiffnessWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "explicit step is stiff: sigma*dt/delta = {} exceeds {}", self.ratio, self.bound)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThickLevel {
    pub t: f64,
    pub u: NodalField,
    /// `∫_membrane |∇u|²`.
    pub membrane_energy: f64,
    /// `∫_conductors |∇u|²`.
    pub conductor_energy: f64,
    /// `½ ∫ B |∇u|²`.
    pub capacitive_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThickState {
    pub levels: Vec<ThickLevel>,
    pub contraction: Vec<ContractionReport>,
    pub warnings: Vec<StiffnessWarning>,
    /// `‖f‖²_{L²(Ω_T)}` by left rectangles.
    pub source_norm2: f64,
}

impl ThickState {
    pub fn final_level(&self) -> &ThickLevel {
        self.levels.last().expect("a run has at least one level")
    }
}

/// Discrete harmonic extension of membrane data into the conductors, with
/// zero on `∂Ω`. Only entries of `u0` at membrane nodes are read. Returns the
/// extension and `‖ũ₀‖_{H¹(Ω)} / ‖ū₀‖_{H¹(membrane)}` (0 for zero data).
pub fn extend_initial(mesh: &Mesh, u0: &[f64], opts: &SolverOptions) -> Result<(NodalField, f64)> {
    if !mesh.is_thick() {
        return Err(Error::Mesh(MeshError::GeometryError("extension needs a thick mesh".into())));
    }
    let membrane = mesh.node_mask(|l| matches!(l, RegionLabel::Membrane(_)));
    let boundary = mesh.boundary_mask();
    let fixed: Vec<bool> = membrane.iter().zip(&boundary).map(|(m, b)| *m || *b).collect();
    let values: Vec<f64> = (0..mesh.node_count())
        .map(|i| if membrane[i] && !boundary[i] { u0[i] } else { 0.0 })
        .collect();
    let lap = assemble_stiffness(mesh, &CoefficientMap::only(Region::Conductors, 1.0))?;
    let sys = DirichletSystem::new(lap, fixed);
    let (ext, _) = sys.solve(&vec![0.0; mesh.node_count()], &values, opts)?;
    let h1 = |v: &[f64], r: Region| {
        let (l2, semi) = field_norms(v, mesh, r);
        (l2 * l2 + semi * semi).sqrt()
    };
    let data = h1(&ext, Region::Membranes);
    let ratio = if data > 0.0 { h1(&ext, Region::All) / data } else { 0.0 };
    Ok((ext, ratio))
}

pub struct ThickSolver<'m> {
    mesh: &'m Mesh,
    config: ThickConfig,
    a_k: SparseSym,
    a_b: SparseSym,
    /// `A_B` with `∂Ω` eliminated; `None` when `δ = 0` makes it singular.
    b_sys: Option<DirichletSystem>,
    implicit_sys: DirichletSystem,
}

impl<'m> ThickSolver<'m> {
    pub fn new(mesh: &'m Mesh, config: ThickConfig) -> Result<Self> {
        config.validate()?;
        let membrane_coef = if config.concentrated {
            let eta = mesh
                .eta
                .ok_or_else(|| Error::InvalidConfig("concentration scaling needs a thick mesh".into()))?;
            config.alpha / eta
        } else {
            config.alpha
        };
        let k_map = CoefficientMap {
            outer: Some(config.sigma_out),
            inclusion: Some(config.sigma_int),
            membrane: Some(0.0),
        };
        let b_map = CoefficientMap {
            outer: Some(config.delta),
            inclusion: Some(config.delta),
            membrane: Some(membrane_coef),
        };
        let a_k = assemble_stiffness(mesh, &k_map)?;
        let a_b = assemble_stiffness(mesh, &b_map)?;
        let fixed = mesh.boundary_mask();
        let b_sys = (config.delta > 0.0).then(|| DirichletSystem::new(a_b.clone(), fixed.clone()));
        let implicit_sys = DirichletSystem::new(a_b.add_scaled(config.dt, &a_k), fixed);
        Ok(ThickSolver {
            mesh,
            config,
            a_k,
            a_b,
            b_sys,
            implicit_sys,
        })
    }

    pub fn config(&self) -> &ThickConfig {
        &self.config
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    fn level(&self, t: f64, u: NodalField) -> ThickLevel {
        ThickLevel {
            t,
            membrane_energy: gradient_energy(&u, self.mesh, Region::Membranes),
            conductor_energy: gradient_energy(&u, self.mesh, Region::Conductors),
            capacitive_energy: 0.5 * self.a_b.bilinear(&u, &u),
            u,
        }
    }

    /// `v` with `A_B v = −A_K u + F`, `v = 0` on `∂Ω`.
    pub fn velocity(&self, u: &[f64], f: &[f64]) -> Result<NodalField> {
        let sys = self
            .b_sys
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("the velocity problem needs delta > 0".into()))?;
        let load = assemble_load(self.mesh, f)?;
        let ku = self.a_k.matvec(u);
        let rhs: Vec<f64> = load.iter().zip(&ku).map(|(a, b)| a - b).collect();
        Ok(sys.solve(&rhs, &vec![0.0; u.len()], &self.config.solver)?.0)
    }

    /// `(A_B + Δt A_K) u_{k+1} = A_B u_k + Δt F(t_k)`.
    pub fn implicit_step(&self, u: &[f64], f: &[f64]) -> Result<NodalField> {
        let load = assemble_load(self.mesh, f)?;
        let bu = self.a_b.matvec(u);
        let rhs: Vec<f64> = bu.iter().zip(&load).map(|(a, b)| a + self.config.dt * b).collect();
        Ok(self.implicit_sys.solve(&rhs, &vec![0.0; u.len()], &self.config.solver)?.0)
    }

    pub fn explicit_step(&self, u: &[f64], f: &[f64]) -> Result<NodalField> {
        let v = self.velocity(u, f)?;
        Ok(u.iter().zip(v.iter()).map(|(a, b)| a + self.config.dt * b).collect::<Vec<_>>().into())
    }

    /// `σ_max Δt / δ` against the explicit stability bound 2.
    pub fn stiffness_warning(&self) -> Option<StiffnessWarning> {
        let c = &self.config;
        if c.scheme == ThickScheme::Implicit || c.delta == 0.0 {
            return None;
        }
        let ratio = c.sigma_int.max(c.sigma_out) * c.dt / c.delta;
        (ratio > 2.0).then_some(StiffnessWarning { ratio, bound: 2.0 })
    }

    /// Runs from `ū₀`, sampled on the membrane and extended harmonically.
    pub fn run(&self, src: &dyn Source, u0: &dyn Source) -> Result<ThickState> {
        let raw = sample_nodal(self.mesh, u0, 0.0);
        let (ext, _) = extend_initial(self.mesh, &raw, &self.config.solver)?;
        self.run_from(src, ext)
    }

    /// Runs from an explicit initial field (its `∂Ω` values are replaced by 0).
    pub fn run_from(&self, src: &dyn Source, mut initial: NodalField) -> Result<ThickState> {
        let n = steps_for(self.config.t_final, self.config.dt, "final time")?;
        let dt = self.config.dt;
        if initial.len() != self.mesh.node_count() || initial.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidField("initial field does not match the mesh or is not finite".into()));
        }
        for &b in &self.mesh.boundary_nodes {
            initial[b] = 0.0;
        }
        let sources: Vec<Vec<f64>> = (0..=n).map(|k| sample_nodal(self.mesh, src, k as f64 * dt)).collect();
        let source_norm2 = sources[..n]
            .iter()
            .map(|f| dt * region_integral(self.mesh, &f.iter().map(|v| v * v).collect::<Vec<_>>(), Region::All))
            .sum();
        let warnings: Vec<StiffnessWarning> = self.stiffness_warning().into_iter().collect();
        let mut levels = vec![self.level(0.0, initial)];
        let mut contraction = Vec::new();
        match self.config.scheme {
            ThickScheme::Implicit | ThickScheme::Explicit => {
                for k in 0..n {
                    let u = &levels[k].u;
                    let next = if self.config.scheme == ThickScheme::Implicit {
                        self.implicit_step(u, &sources[k])?
                    } else {
                        self.explicit_step(u, &sources[k])?
                    };
                    levels.push(self.level((k + 1) as f64 * dt, next));
                }
            }
            ThickScheme::Picard => {
                let mut width = steps_for(self.config.window, dt, "Picard window")?;
                let mut a = 0;
                while a < n {
                    let (window, report) = self.run_picard_window(&sources, &levels[a].u, a, width)?;
                    width = report.levels;
                    a += report.levels;
                    levels.extend(window.into_iter().enumerate().map(|(j, u)| self.level((a - report.levels + j + 1) as f64 * dt, u)));
                    contraction.push(report);
                }
            }
        }
        Ok(ThickState {
            levels,
            contraction,
            warnings,
            source_norm2,
        })
    }

    fn h1_norm(&self, u: &[f64]) -> f64 {
        let (l2, semi) = field_norms(u, self.mesh, Region::All);
        (l2 * l2 + semi * semi).sqrt()
    }

    /// Fixed-point iteration of `u ↦ u_a + ∫ v(u)` (trapezoidal) over
    /// `a..=a+width`, halving the window on stall. Returns fields for levels
    /// `a+1..` and the report.
    pub fn run_picard_window(
        &self,
        sources: &[Vec<f64>],
        start: &NodalField,
        a: usize,
        mut width: usize,
    ) -> Result<(Vec<NodalField>, ContractionReport)> {
        let dt = self.config.dt;
        let mut halvings = 0;
        let v_start = self.velocity(start, &sources[a])?;
        loop {
            let b = (a + width).min(sources.len() - 1);
            let mut iterate: Vec<NodalField> = vec![start.clone(); b - a];
            let mut increments = Vec::new();
            let mut stalls = 0;
            for _ in 0..self.config.max_sweeps {
                let vs: Vec<NodalField> = iterate
                    .iter()
                    .zip(&sources[a + 1..=b])
                    .map(|(u, f)| self.velocity(u, f))
                    .collect::<Result<_>>()?;
                let mut acc = start.values.clone();
                let mut prev = &v_start;
                let mut next = Vec::with_capacity(iterate.len());
                let (mut diff, mut size): (f64, f64) = (0.0, 0.0);
                for (v, old) in vs.iter().zip(&iterate) {
                    for i in 0..acc.len() {
                        acc[i] += 0.5 * dt * (prev[i] + v[i]);
                    }
                    prev = v;
                    let d: Vec<f64> = acc.iter().zip(old.iter()).map(|(x, y)| x - y).collect();
                    diff = diff.max(self.h1_norm(&d));
                    size = size.max(self.h1_norm(&acc));
                    next.push(NodalField::from(acc.clone()));
                }
                let inc = if size > 0.0 { diff / size } else { 0.0 };
                if let Some(&last) = increments.last() {
                    stalls = if inc >= 0.95 * last { stalls + 1 } else { 0 };
                }
                increments.push(inc);
                iterate = next;
                if inc < self.config.picard_tol {
                    return Ok((
                        iterate,
                        ContractionReport {
                            t_start: a as f64 * dt,
                            levels: b - a,
                            increments,
                            halvings,
                        },
                    ));
                }
                if stalls >= 2 {
                    break;
                }
            }
            if width <= 1 {
                return Err(Error::ContractionFailure { t_start: a as f64 * dt });
            }
            width /= 2;
            halvings += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThickEnergyReport {
    /// `sup_k ∫_memb |∇u|² + δ sup_k ∫_cond |∇u|² + Δt Σ_k ∫_cond |∇u|²`.
    pub lhs: f64,
    /// `‖f‖²_{L²(Ω_T)} + ∫_memb |∇ũ₀|² + δ ∫_cond |∇ũ₀|²`.
    pub rhs: f64,
    pub ratio: f64,
}

pub fn energy_audit_thick(config: &ThickConfig, state: &ThickState) -> ThickEnergyReport {
    let first = &state.levels[0];
    let memb = state.levels.iter().map(|l| l.membrane_energy).fold(0.0, f64::max);
    let cond = state.levels.iter().map(|l| l.conductor_energy).fold(0.0, f64::max);
    let dissipated: f64 = state.levels[1..].iter().map(|l| config.dt * l.conductor_energy).sum();
    let lhs = memb + config.delta * cond + dissipated;
    let rhs = state.source_norm2 + first.membrane_energy + config.delta * first.conductor_energy;
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    ThickEnergyReport { lhs, rhs, ratio }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluxConditionReport {
    /// Per component, `|current through the outer band boundary − ∫_{core∪band} f|`.
    pub residuals: Vec<f64>,
    /// `Σ_band |(K_out u)_p| + ∫_Ω |f|`.
    pub scale: f64,
}

/// Per-component mismatch between the current leaving the outer membrane
/// boundary into the outer region and the source inside the membrane.
pub fn flux_condition_check(mesh: &Mesh, config: &ThickConfig, u: &[f64], f: &[f64]) -> Result<FluxConditionReport> {
    let k_out = assemble_stiffness(mesh, &CoefficientMap::only(Region::Outer, config.sigma_out))?;
    let load_out = crate::fem::assemble_load_in(mesh, f, Region::Outer)?;
    let ku = k_out.matvec(u);
    let abs_f: Vec<f64> = f.iter().map(|v| v.abs()).collect();
    let mut scale = region_integral(mesh, &abs_f, Region::All);
    let mut residuals = Vec::new();
    for l in &mesh.loops {
        let c = l.component_id;
        let (_, outer) = mesh.band_boundary_nodes(c);
        let current: f64 = outer.iter().map(|&p| ku[p] - load_out[p]).sum();
        scale += outer.iter().map(|&p| ku[p].abs()).sum::<f64>();
        let source = region_integral(mesh, f, Region::Inclusion(c)) + region_integral(mesh, f, Region::Membrane(c));
        residuals.push((current - source).abs());
    }
    Ok(FluxConditionReport { residuals, scale })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaStudy {
    pub deltas: Vec<f64>,
    /// `‖u^δ − u^0‖_{L²(0,T;H¹)}` per δ.
    pub distances: Vec<f64>,
    pub energy: Vec<ThickEnergyReport>,
    pub limit_energy: ThickEnergyReport,
}

/// Runs the implicit scheme for every δ in `deltas` and for δ = 0.
pub fn delta_study(mesh: &Mesh, base: &ThickConfig, src: &dyn Source, u0: &dyn Source, deltas: &[f64]) -> Result<DeltaStudy> {
    let mut all: Vec<f64> = deltas.to_vec();
    all.push(0.0);
    let runs: Vec<(ThickConfig, ThickState)> = all
        .par_iter()
        .map(|&delta| {
            let cfg = ThickConfig {
                delta,
                scheme: ThickScheme::Implicit,
                ..base.clone()
            };
            let st = ThickSolver::new(mesh, cfg.clone())?.run(src, u0)?;
            Ok((cfg, st))
        })
        .collect::<Result<_>>()?;
    let (limit_cfg, limit) = runs.last().expect("limit run present");
    let distances = runs[..deltas.len()]
        .iter()
        .map(|(cfg, st)| {
            st.levels[1..]
                .iter()
                .zip(&limit.levels[1..])
                .map(|(a, b)| {
                    let d: Vec<f64> = a.u.iter().zip(b.u.iter()).map(|(x, y)| x - y).collect();
                    let (l2, semi) = field_norms(&d, mesh, Region::All);
                    cfg.dt * (l2 * l2 + semi * semi)
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    Ok(DeltaStudy {
        deltas: deltas.to_vec(),
        distances,
        energy: runs[..deltas.len()].iter().map(|(c, s)| energy_audit_thick(c, s)).collect(),
        limit_energy: energy_audit_thick(limit_cfg, limit),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationTable {
    pub etas: Vec<f64>,
    pub sample_times: Vec<f64>,
    /// `discrepancies[e][s]`: `‖trace_η − h_thin‖_{L²(Γ)}` for `etas[e]` at `sample_times[s]`.
    pub discrepancies: Vec<Vec<f64>>,
}

/// Compares the thin model with thick membranes of half-width `k·grid_h`
/// for every `k` in `half_widths`, with membrane coefficient `α/η` and `δ = 0`.
/// `sample_steps` are level indices shared by all runs.
pub fn concentration_run(
    thin_mesh: &Mesh,
    half_widths: &[usize],
    thin: &ThinConfig,
    src: &dyn Source,
    u0: &dyn Source,
    sample_steps: &[usize],
) -> Result<ConcentrationTable> {
    let thin_solver = ThinSolver::new(thin_mesh, thin.clone())?;
    let thin_state = thin_solver.run(src, u0)?;
    let mass = &thin_solver.surface().mass;
    if let Some(&bad) = sample_steps.iter().find(|&&s| s >= thin_state.levels.len()) {
        return Err(Error::InvalidConfig(format!("sample step {bad} is beyond the final time")));
    }
    let thick_cfg = ThickConfig {
        scheme: ThickScheme::Implicit,
        delta: 0.0,
        alpha: thin.alpha,
        sigma_int: thin.sigma_int,
        sigma_out: thin.sigma_out,
        dt: thin.dt,
        t_final: thin.t_final,
        concentrated: true,
        solver: thin.solver,
        ..ThickConfig::default()
    };
    let rows: Vec<(f64, Vec<f64>)> = half_widths
        .par_iter()
        .map(|&k| {
            let mesh = thicken_interfaces(thin_mesh, k)?;
            let st = ThickSolver::new(&mesh, thick_cfg.clone())?.run(src, u0)?;
            let row = sample_steps
                .iter()
                .map(|&s| {
                    let trace = TraceField::gather(thin_mesh, &st.levels[s].u);
                    let d = trace.sub(&thin_state.levels[s].h);
                    d.values
                        .iter()
                        .zip(mass)
                        .map(|(v, m)| v.iter().zip(m).map(|(x, w)| w * x * x).sum::<f64>())
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            Ok((mesh.eta.unwrap_or(0.0), row))
        })
        .collect::<Result<_>>()?;
    Ok(ConcentrationTable {
        etas: rows.iter().map(|r| r.0).collect(),
        sample_times: sample_steps.iter().map(|&s| thin_state.levels[s].t).collect(),
        discrepancies: rows.into_iter().map(|r| r.1).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dense_solve, DenseMatrix};
    use crate::mesh::{build_square_mesh, embed_inclusions, Rect};

    fn thick(n: usize, k: usize) -> Mesh {
        let thin = embed_inclusions(&build_square_mesh(n).unwrap(), &[Rect::new(0.25, 0.25, 0.75, 0.75)]).unwrap();
        thicken_interfaces(&thin, k).unwrap()
    }

    fn zero(_x: f64, _y: f64, _t: f64) -> f64 {
        0.0
    }

    fn cfg(scheme: ThickScheme, dt: f64, t_final: f64) -> ThickConfig {
        ThickConfig {
            scheme,
            dt,
            t_final,
            ..ThickConfig::default()
        }
    }

    #[test]
    fn config_preconditions() {
        let c = ThickConfig { delta: 0.0, ..cfg(ThickScheme::Explicit, 0.01, 0.1) };
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        let c = ThickConfig { delta: 0.0, ..cfg(ThickScheme::Implicit, 0.01, 0.1) };
        assert!(c.validate().is_ok());
    }

    #[test]
    fn extension_of_constants() {
        let m = thick(16, 1);
        let opts = SolverOptions::default().with_tol(1e-12);
        let (z, r) = extend_initial(&m, &vec![0.0; m.node_count()], &opts).unwrap();
        assert!(z.iter().all(|&v| v == 0.0) && r == 0.0);
        let (u, _) = extend_initial(&m, &vec![1.0; m.node_count()], &opts).unwrap();
        let core = m.node_mask(|l| matches!(l, RegionLabel::Inclusion(_)));
        for i in 0..m.node_count() {
            assert!(u[i] >= -1e-12 && u[i] <= 1.0 + 1e-12);
            if core[i] {
                assert!((u[i] - 1.0).abs() < 1e-10);
            }
        }
        for &b in &m.boundary_nodes {
            assert_eq!(u[b], 0.0);
        }
    }

    #[test]
    fn extension_ratio_stable_under_refinement() {
        let opts = SolverOptions::default().with_tol(1e-12);
        let g = |p: [f64; 2]| (3.0 * p[0]).sin() + p[1];
        let ratios: Vec<f64> = [(16, 1), (32, 2)]
            .iter()
            .map(|&(n, k)| {
                let m = thick(n, k);
                let u0: Vec<f64> = m.nodes.iter().map(|&p| g(p)).collect();
                extend_initial(&m, &u0, &opts).unwrap().1
            })
            .collect();
        assert!((ratios[1] / ratios[0] - 1.0).abs() < 0.2, "{ratios:?}");
    }

    #[test]
    fn zero_data_zero_trajectory() {
        let m = thick(16, 1);
        for scheme in [ThickScheme::Implicit, ThickScheme::Explicit, ThickScheme::Picard] {
            let s = ThickSolver::new(&m, ThickConfig { window: 0.04, ..cfg(scheme, 0.02, 0.04) }).unwrap();
            let st = s.run(&zero, &zero).unwrap();
            assert!(st.levels.iter().all(|l| l.u.iter().all(|&v| v == 0.0)));
            for r in &st.contraction {
                assert_eq!(r.increments.len(), 1);
            }
        }
    }

    /// One implicit step checked against a dense solve of the same system on
    /// a 3×3 grid, plus the energy decrease.
    #[test]
    fn implicit_step_matches_dense_oracle() {
        let m = build_square_mesh(3).unwrap();
        let c = ThickConfig { delta: 0.5, dt: 0.1, t_final: 0.1, ..ThickConfig::default() };
        let s = ThickSolver::new(&m, c).unwrap();
        let mut u0: Vec<f64> = m.nodes.iter().map(|p| (p[0] * 7.0).sin() * p[1]).collect();
        for &b in &m.boundary_nodes {
            u0[b] = 0.0;
        }
        let zero_f = vec![0.0; m.node_count()];
        let u1 = s.implicit_step(&u0, &zero_f).unwrap();

        let b = assemble_stiffness(&m, &CoefficientMap::uniform(0.5)).unwrap().to_dense();
        let k = assemble_stiffness(&m, &CoefficientMap::uniform(1.0)).unwrap().to_dense();
        let free: Vec<usize> = (0..m.node_count()).filter(|i| !m.boundary_nodes.contains(i)).collect();
        let mut a = DenseMatrix::zeros(free.len());
        let mut rhs = vec![0.0; free.len()];
        for (r, &i) in free.iter().enumerate() {
            for (q, &j) in free.iter().enumerate() {
                a.set(r, q, b[i][j] + 0.1 * k[i][j]);
            }
            rhs[r] = free.iter().map(|&j| b[i][j] * u0[j]).sum();
        }
        let x = dense_solve(&a, &rhs).unwrap();
        for (r, &i) in free.iter().enumerate() {
            assert!((x[r] - u1[i]).abs() < 1e-10);
        }
        let energy = |u: &[f64]| 0.5 * (0..u.len()).map(|i| (0..u.len()).map(|j| u[i] * b[i][j] * u[j]).sum::<f64>()).sum::<f64>();
        assert!(energy(&u1) <= energy(&u0));
    }

    #[test]
    fn implicit_unforced_run_is_dissipative() {
        let m = thick(16, 1);
        for delta in [0.1, 0.0] {
            let s = ThickSolver::new(&m, ThickConfig { delta, ..cfg(ThickScheme::Implicit, 0.01, 0.1) }).unwrap();
            let st = s.run(&zero, &|x: f64, y: f64, _t: f64| x * y + 0.5).unwrap();
            for w in st.levels.windows(2) {
                assert!(w[1].capacitive_energy <= w[0].capacitive_energy * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn explicit_warns_when_stiff() {
        let m = thick(16, 1);
        let s = ThickSolver::new(&m, ThickConfig { delta: 0.001, ..cfg(ThickScheme::Explicit, 0.01, 0.01) }).unwrap();
        assert!(s.stiffness_warning().is_some());
        let s = ThickSolver::new(&m, cfg(ThickScheme::Explicit, 0.01, 0.01)).unwrap();
        assert!(s.stiffness_warning().is_none());
    }

    #[test]
    fn boundary_stays_zero_and_superposition() {
        let m = thick(16, 1);
        let s = ThickSolver::new(&m, cfg(ThickScheme::Implicit, 0.02, 0.06)).unwrap();
        let f1 = |x: f64, _y: f64, _t: f64| 1.0 + x;
        let u1 = |_x: f64, y: f64, _t: f64| y;
        let f2 = |_x: f64, y: f64, t: f64| y * t;
        let u2 = |x: f64, y: f64, _t: f64| x * y;
        let f12 = |x: f64, y: f64, t: f64| f1(x, y, t) + f2(x, y, t);
        let u12 = |x: f64, y: f64, t: f64| u1(x, y, t) + u2(x, y, t);
        let a = s.run(&f1, &u1).unwrap();
        let b = s.run(&f2, &u2).unwrap();
        let ab = s.run(&f12, &u12).unwrap();
        for k in 0..ab.levels.len() {
            for &bn in &m.boundary_nodes {
                assert_eq!(ab.levels[k].u[bn], 0.0);
            }
            for i in 0..m.node_count() {
                assert!((a.levels[k].u[i] + b.levels[k].u[i] - ab.levels[k].u[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn flux_condition_holds_for_limit_problem() {
        let m = thick(16, 1);
        let c = ThickConfig { delta: 0.0, ..cfg(ThickScheme::Implicit, 0.02, 0.1) };
        let s = ThickSolver::new(&m, c.clone()).unwrap();
        let f = |x: f64, y: f64, _t: f64| 1.0 + x * y;
        let st = s.run(&f, &|x: f64, _y: f64, _t: f64| x).unwrap();
        let fk = sample_nodal(&m, &f, 0.0);
        let first = flux_condition_check(&m, &c, &st.levels[0].u, &fk).unwrap();
        assert!(first.residuals[0] > 1e-6 * first.scale);
        // with δ = 0 the scheme enforces the condition at every later level
        let last = flux_condition_check(&m, &c, &st.final_level().u, &fk).unwrap();
        assert!(last.residuals[0] <= 1e-6 * last.scale, "{last:?}");
    }

    #[test]
    fn unforced_flux_residual_decays() {
        let m = thick(16, 1);
        let c = ThickConfig { delta: 0.05, ..cfg(ThickScheme::Implicit, 0.02, 1.0) };
        let s = ThickSolver::new(&m, c.clone()).unwrap();
        let st = s.run(&zero, &|x: f64, y: f64, _t: f64| x + y * y).unwrap();
        let f = vec![0.0; m.node_count()];
        let r0 = flux_condition_check(&m, &c, &st.levels[1].u, &f).unwrap().residuals[0];
        let r1 = flux_condition_check(&m, &c, &st.final_level().u, &f).unwrap().residuals[0];
        assert!(r1 < 1e-3 * r0, "{r0} {r1}");
    }
}

//! Time evolution of the thin-interface problem.
//!
//! The unknown is the interface trace `h(t)`. Given `h`, the bulk field solves
//! a transmission problem, its flux jump drives the surface equation
//! `−α Δ_Γ v = [σ ∂u/∂ν]`, and `h` is advanced by integrating `v` in time and
//! projecting onto the flux-constrained set. Two schemes are provided:
//! explicit marching (left rectangles) and Picard iteration of the whole
//! solution map over short windows (trapezoidal time integral).

use crate::coupling::{
    build_constants_system, compatibility_scale, compute_targets, jump_flux, project_to_hl, ConstantsSystem, FluxTargets,
};
use crate::fem::{gradient_energy, region_integral, sample_nodal, InterfaceFem, NodalField, Region, Source};
use crate::linalg::SolverOptions;
use crate::mesh::Mesh;
use crate::surface::{lb_solve, surface_gradient, surface_gradient_energy, surface_h1_norm, SurfaceOperator, TraceField};
use crate::{Error, Result};

/// Per-component flux totals above this multiple of the problem scale abort
/// the run.
pub const COMPAT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThinScheme {
    Marching,
    Picard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThinConfig {
    pub scheme: ThinScheme,
    pub dt: f64,
    pub t_final: f64,
    /// Initial Picard window length; halved when sweeps stall.
    pub window: f64,
    /// Relative `H¹(Γ)` increment at which a Picard window is accepted.
    pub picard_tol: f64,
    pub max_sweeps: usize,
    pub alpha: f64,
    pub sigma_int: f64,
    pub sigma_out: f64,
    pub solver: SolverOptions,
    /// Retain the bulk field of every level.
    pub keep_fields: bool,
}

impl Default for ThinConfig {
    fn default() -> Self {
        ThinConfig {
            scheme: ThinScheme::Marching,
            dt: 0.01,
            t_final: 0.1,
            window: 0.05,
            picard_tol: 1e-8,
            max_sweeps: 100,
            alpha: 1.0,
            sigma_int: 1.0,
            sigma_out: 1.0,
            solver: SolverOptions::default().with_tol(1e-12),
            keep_fields: false,
        }
    }
}

fn steps_for(length: f64, dt: f64, what: &str) -> Result<usize> {
    let n = (length / dt).round();
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidConfig(format!("time step must be positive, got {dt}")));
    }
    if n < 1.0 || (n * dt - length).abs() > 1e-9 * length.max(dt) {
        return Err(Error::InvalidConfig(format!("{what} {length} is not a positive multiple of dt = {dt}")));
    }
    Ok(n as usize)
}

impl ThinConfig {
    pub fn validate(&self) -> Result<()> {
        steps_for(self.t_final, self.dt, "final time")?;
        if self.scheme == ThinScheme::Picard {
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

/// Everything recorded at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinLevel {
    pub t: f64,
    pub h: TraceField,
    /// Surface velocity computed from `h` at this level.
    pub v: TraceField,
    /// Constants added by the projection that produced `h`.
    pub c: Vec<f64>,
    pub ell: Vec<f64>,
    pub jump_totals: Vec<f64>,
    pub compat_scale: f64,
    /// `∫_Ω |∇u|²`.
    pub bulk_energy: f64,
    /// `∫_Γ |∇_Γ u|²`.
    pub surface_grad_energy: f64,
    pub u: Option<NodalField>,
}

/// Sweep history of one accepted Picard window.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub t_start: f64,
    pub levels: usize,
    /// Relative `H¹(Γ)` increment of every sweep.
    pub increments: Vec<f64>,
    /// Number of times the window was halved before it converged.
    pub halvings: usize,
}

impl ContractionReport {
    /// Successive increment ratios.
    pub fn ratios(&self) -> Vec<f64> {
        self.increments
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThinState {
    pub levels: Vec<ThinLevel>,
    /// `ū₀` sampled on the loops.
    pub initial_trace: TraceField,
    pub contraction: Vec<ContractionReport>,
    /// `‖f‖²_{L²(Ω_T)}` by left rectangles.
    pub source_norm2: f64,
}

impl ThinState {
    pub fn final_level(&self) -> &ThinLevel {
        self.levels.last().expect("a run has at least one level")
    }

    /// Largest `|total| / scale` over all levels and components.
    pub fn max_compat_ratio(&self) -> f64 {
        self.levels
            .iter()
            .flat_map(|l| l.jump_totals.iter().map(move |t| if l.compat_scale > 0.0 { t.abs() / l.compat_scale } else { t.abs() }))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs²`, or 0 when both vanish.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RearrangementReport {
    pub c0: Vec<f64>,
    /// `‖h(t₀) − ū₀‖_{L²(Γ_i)}` per component.
    pub trace_shift: Vec<f64>,
    pub perimeters: Vec<f64>,
    /// Largest difference between the surface gradients of `h(t₀)` and `ū₀`.
    pub gradient_defect: f64,
}

/// Source sampled at a level and the targets it induces.
struct LevelData {
    t: f64,
    f: Vec<f64>,
    targets: FluxTargets,
}

pub struct ThinSolver<'m> {
    mesh: &'m Mesh,
    fem: InterfaceFem<'m>,
    cs: ConstantsSystem,
    op: SurfaceOperator,
    config: ThinConfig,
}

impl<'m> ThinSolver<'m> {
    pub fn new(mesh: &'m Mesh, config: ThinConfig) -> Result<Self> {
        config.validate()?;
        let fem = InterfaceFem::new(mesh, config.sigma_int, config.sigma_out, config.solver)?;
        let cs = build_constants_system(&fem)?;
        let op = SurfaceOperator::build(mesh)?;
        Ok(ThinSolver {
            mesh,
            fem,
            cs,
            op,
            config,
        })
    }

    pub fn fem(&self) -> &InterfaceFem<'m> {
        &self.fem
    }

    pub fn constants(&self) -> &ConstantsSystem {
        &self.cs
    }

    pub fn surface(&self) -> &SurfaceOperator {
        &self.op
    }

    pub fn config(&self) -> &ThinConfig {
        &self.config
    }

    fn level_data(&self, src: &dyn Source, t: f64) -> Result<LevelData> {
        let f = sample_nodal(self.mesh, src, t);
        let ubar = self.fem.solve_zero_trace(&f)?;
        let targets = compute_targets(&self.fem, &f, &ubar)?;
        Ok(LevelData { t, f, targets })
    }

    /// Bulk field, flux jump and surface velocity for trace `h` at one level.
    fn evaluate(&self, data: &LevelData, h: &TraceField, c: Vec<f64>) -> Result<ThinLevel> {
        let u = self.fem.solve_transmission(&data.f, h)?;
        let jump = jump_flux(&self.fem, &data.f, &u)?;
        let scale = compatibility_scale(&self.fem, &data.f, &u);
        for (i, total) in jump.totals.iter().enumerate() {
            if total.abs() > COMPAT_TOL * scale && total.abs() > 1e-300 {
                return Err(Error::CompatibilityViolated {
                    component: self.mesh.loops[i].component_id,
                    total: *total,
                    scale,
                });
            }
        }
        // Remove the rounding-level remainder so the surface solve sees an
        // exactly compatible load.
        let mut g = jump.values;
        for ((vals, mass), total) in g.values.iter_mut().zip(&self.op.mass).zip(&jump.totals) {
            let msum: f64 = mass.iter().sum();
            for (v, m) in vals.iter_mut().zip(mass) {
                *v -= total * m / msum;
            }
        }
        let v = lb_solve(&self.op, self.config.alpha, &g, &self.config.solver)?;
        Ok(ThinLevel {
            t: data.t,
            bulk_energy: gradient_energy(&u, self.mesh, Region::All),
            surface_grad_energy: surface_gradient_energy(&self.op, h),
            h: h.clone(),
            v,
            c,
            ell: data.targets.ell.clone(),
            jump_totals: jump.totals,
            compat_scale: scale,
            u: self.config.keep_fields.then_some(u),
        })
    }

    /// Surface velocity `v(t)` for trace `h` (steps 3–5 of a marching step).
    pub fn surface_velocity(&self, src: &dyn Source, t: f64, h: &TraceField) -> Result<TraceField> {
        let data = self.level_data(src, t)?;
        Ok(self.evaluate(&data, h, vec![0.0; self.cs.dim()])?.v)
    }

    /// `h(t₀)`: the sampled initial trace projected onto the constraint set.
    pub fn initial_trace(&self, src: &dyn Source, u0: &dyn Source) -> Result<(TraceField, Vec<f64>)> {
        let data = self.level_data(src, 0.0)?;
        let raw = TraceField::sample(self.mesh, u0, 0.0);
        project_to_hl(&self.cs, &self.fem, &raw, &data.targets)
    }

    pub fn run(&self, src: &dyn Source, u0: &dyn Source) -> Result<ThinState> {
        let n = steps_for(self.config.t_final, self.config.dt, "final time")?;
        let dt = self.config.dt;
        let data: Vec<LevelData> = (0..=n).map(|k| self.level_data(src, k as f64 * dt)).collect::<Result<_>>()?;
        let initial_trace = TraceField::sample(self.mesh, u0, 0.0);
        let (h0, c0) = project_to_hl(&self.cs, &self.fem, &initial_trace, &data[0].targets)?;
        let source_norm2 = data[..n].iter().map(|d| dt * region_integral(self.mesh, &square(&d.f), Region::All)).sum();

        let (levels, contraction) = match self.config.scheme {
            ThinScheme::Marching => (self.march(&data, h0, c0)?, Vec::new()),
            ThinScheme::Picard => self.picard(&data, h0, c0)?,
        };
        Ok(ThinState {
            levels,
            initial_trace,
            contraction,
            source_norm2,
        })
    }

    fn march(&self, data: &[LevelData], h0: TraceField, c0: Vec<f64>) -> Result<Vec<ThinLevel>> {
        let dt = self.config.dt;
        let mut levels = Vec::with_capacity(data.len());
        let mut current = self.evaluate(&data[0], &h0, c0)?;
        for next in &data[1..] {
            let w = current.h.axpy(dt, &current.v);
            let (h, c) = project_to_hl(&self.cs, &self.fem, &w, &next.targets)?;
            let level = self.evaluate(next, &h, c)?;
            levels.push(std::mem::replace(&mut current, level));
        }
        levels.push(current);
        Ok(levels)
    }

    fn picard(&self, data: &[LevelData], h0: TraceField, c0: Vec<f64>) -> Result<(Vec<ThinLevel>, Vec<ContractionReport>)> {
        let n = data.len() - 1;
        let mut width = steps_for(self.config.window, self.config.dt, "Picard window")?;
        let mut levels = vec![self.evaluate(&data[0], &h0, c0)?];
        let mut reports = Vec::new();
        let mut a = 0;
        while a < n {
            let (window_levels, report) = self.run_picard_window(data, &levels[a], a, width)?;
            width = report.levels;
            levels.extend(window_levels);
            a += report.levels;
            reports.push(report);
        }
        Ok((levels, reports))
    }

    /// Picard iteration over levels `a..=a+width` (clamped to the run),
    /// starting from the accepted level `start`. Returns levels `a+1..` and the
    /// contraction report; the window is halved whenever sweeps stall.
    fn run_picard_window(
        &self,
        data: &[LevelData],
        start: &ThinLevel,
        a: usize,
        mut width: usize,
    ) -> Result<(Vec<ThinLevel>, ContractionReport)> {
        let dt = self.config.dt;
        let mut halvings = 0;
        'window: loop {
            let b = (a + width).min(data.len() - 1);
            // Initial iterate: the start trace shifted into each level's constraint set.
            let mut iterate: Vec<ThinLevel> = Vec::with_capacity(b - a);
            for d in &data[a + 1..=b] {
                let (h, c) = project_to_hl(&self.cs, &self.fem, &start.h, &d.targets)?;
                iterate.push(self.evaluate(d, &h, c)?);
            }
            let mut increments = Vec::new();
            let mut stalls = 0;
            for _ in 0..self.config.max_sweeps {
                let mut w = start.h.clone();
                let mut prev_v = &start.v;
                let mut next = Vec::with_capacity(iterate.len());
                let (mut diff, mut size): (f64, f64) = (0.0, 0.0);
                for (lvl, d) in iterate.iter().zip(&data[a + 1..=b]) {
                    w = w.axpy(0.5 * dt, prev_v).axpy(0.5 * dt, &lvl.v);
                    prev_v = &lvl.v;
                    let (h, c) = project_to_hl(&self.cs, &self.fem, &w, &d.targets)?;
                    diff = diff.max(surface_h1_norm(&self.op, &h.sub(&lvl.h)));
                    size = size.max(surface_h1_norm(&self.op, &h));
                    next.push((h, c));
                }
                let inc = if size > 0.0 { diff / size } else { 0.0 };
                if let Some(&last) = increments.last() {
                    if inc >= 0.95 * last {
                        stalls += 1;
                    } else {
                        stalls = 0;
                    }
                }
                increments.push(inc);
                iterate = next
                    .into_iter()
                    .zip(&data[a + 1..=b])
                    .map(|((h, c), d)| self.evaluate(d, &h, c))
                    .collect::<Result<_>>()?;
                if inc < self.config.picard_tol {
                    let report = ContractionReport {
                        t_start: data[a].t,
                        levels: b - a,
                        increments,
                        halvings,
                    };
                    return Ok((iterate, report));
                }
                if stalls >= 2 {
                    break;
                }
            }
            if width <= 1 {
                return Err(Error::ContractionFailure { t_start: data[a].t });
            }
            width /= 2;
            halvings += 1;
            continue 'window;
        }
    }
}

fn square(f: &[f64]) -> Vec<f64> {
    f.iter().map(|v| v * v).collect()
}

/// `LHS = Δt Σ_k ∫_Ω |∇u(t_k)|² + max_k ∫_Γ |∇_Γ u(t_k)|²`,
/// `RHS = ‖f‖_{L²(Ω_T)} + ‖ū₀‖_{H¹(Γ)}`, ratio `LHS / RHS²`.
pub fn energy_audit(solver: &ThinSolver, state: &ThinState) -> EnergyReport {
    let dt = solver.config.dt;
    let n = state.levels.len() - 1;
    let bulk: f64 = state.levels[..n.max(1).min(state.levels.len())].iter().map(|l| dt * l.bulk_energy).sum();
    let surf = state.levels.iter().map(|l| l.surface_grad_energy).fold(0.0, f64::max);
    let lhs = bulk + surf;
    let rhs = state.source_norm2.sqrt() + surface_h1_norm(&solver.op, &state.initial_trace);
    let ratio = if rhs > 0.0 { lhs / (rhs * rhs) } else { 0.0 };
    EnergyReport { lhs, rhs, ratio }
}

pub fn rearrangement_report(solver: &ThinSolver, state: &ThinState) -> RearrangementReport {
    let first = &state.levels[0];
    let diff = first.h.sub(&state.initial_trace);
    let trace_shift = diff
        .values
        .iter()
        .zip(&solver.op.mass)
        .map(|(d, m)| d.iter().zip(m).map(|(x, w)| w * x * x).sum::<f64>().sqrt())
        .collect();
    let g0 = surface_gradient(&solver.op, &state.initial_trace);
    let g1 = surface_gradient(&solver.op, &first.h);
    let gradient_defect = g0
        .iter()
        .flatten()
        .zip(g1.iter().flatten())
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    RearrangementReport {
        c0: first.c.clone(),
        trace_shift,
        perimeters: solver.op.perimeters.clone(),
        gradient_defect,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_square_mesh, embed_inclusions, Rect};

    fn single(n: usize) -> Mesh {
        embed_inclusions(&build_square_mesh(n).unwrap(), &[Rect::new(0.25, 0.25, 0.75, 0.75)]).unwrap()
    }

    fn double(n: usize) -> Mesh {
        embed_inclusions(
            &build_square_mesh(n).unwrap(),
            &[Rect::new(0.125, 0.375, 0.375, 0.625), Rect::new(0.625, 0.375, 0.875, 0.625)],
        )
        .unwrap()
    }

    fn zero(_x: f64, _y: f64, _t: f64) -> f64 {
        0.0
    }

    fn cfg(dt: f64, t_final: f64) -> ThinConfig {
        ThinConfig {
            dt,
            t_final,
            ..ThinConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(cfg(0.03, 0.1).validate().is_err());
        assert!(cfg(-0.01, 0.1).validate().is_err());
        assert!(ThinConfig { alpha: 0.0, ..cfg(0.01, 0.1) }.validate().is_err());
        assert!(cfg(0.025, 0.1).validate().is_ok());
    }

    #[test]
    fn zero_data_stays_zero() {
        let m = single(8);
        for scheme in [ThinScheme::Marching, ThinScheme::Picard] {
            let s = ThinSolver::new(&m, ThinConfig { scheme, window: 0.04, ..cfg(0.02, 0.06) }).unwrap();
            let st = s.run(&zero, &zero).unwrap();
            assert_eq!(st.levels.len(), 4);
            for l in &st.levels {
                assert_eq!(l.h.max_abs(), 0.0);
                assert_eq!(l.bulk_energy, 0.0);
            }
            for r in &st.contraction {
                assert_eq!(r.increments.len(), 1);
            }
            let e = energy_audit(&s, &st);
            assert_eq!((e.lhs, e.rhs, e.ratio), (0.0, 0.0, 0.0));
            assert!(rearrangement_report(&s, &st).c0.iter().all(|&c| c == 0.0));
        }
    }

    #[test]
    fn unforced_run_is_compatible_with_zero_targets() {
        let m = double(16);
        let s = ThinSolver::new(&m, ThinConfig { sigma_int: 2.0, ..cfg(0.01, 0.05) }).unwrap();
        let u0 = |x: f64, y: f64, _t: f64| (3.0 * x).sin() + y * y;
        let st = s.run(&zero, &u0).unwrap();
        for l in &st.levels {
            assert!(l.ell.iter().all(|&e| e == 0.0));
            for t in &l.jump_totals {
                assert!(t.abs() <= COMPAT_TOL * l.compat_scale);
            }
        }
    }

    #[test]
    fn velocity_scales_with_inverse_alpha() {
        let m = single(16);
        let u0 = |x: f64, y: f64, _t: f64| x * x + 0.5 * y;
        let s1 = ThinSolver::new(&m, cfg(0.01, 0.01)).unwrap();
        let s2 = ThinSolver::new(&m, ThinConfig { alpha: 2.0, ..cfg(0.01, 0.01) }).unwrap();
        let (h0, _) = s1.initial_trace(&zero, &u0).unwrap();
        let v1 = s1.surface_velocity(&zero, 0.0, &h0).unwrap();
        let v2 = s2.surface_velocity(&zero, 0.0, &h0).unwrap();
        assert!(v1.max_abs() > 0.0);
        assert!(v2.sub(&v1.scaled(0.5)).max_abs() <= 1e-9 * v1.max_abs());
    }

    #[test]
    fn rearrangement_keeps_gradients() {
        let m = double(16);
        let s = ThinSolver::new(&m, cfg(0.01, 0.01)).unwrap();
        let f = |x: f64, y: f64, _t: f64| 1.0 + x * y;
        let u0 = |x: f64, y: f64, _t: f64| (2.0 * x).cos() * y;
        let st = s.run(&f, &u0).unwrap();
        let r = rearrangement_report(&s, &st);
        assert!(r.c0.iter().any(|c| c.abs() > 1e-6));
        assert!(r.gradient_defect < 1e-12);
        for i in 0..2 {
            let expected = r.c0[i].abs() * r.perimeters[i].sqrt();
            assert!((r.trace_shift[i] - expected).abs() <= 1e-12 * expected.max(1.0));
        }
        // a constant shift of ū₀ on one loop is absorbed
        let shifted = |x: f64, y: f64, t: f64| u0(x, y, t) + if x < 0.5 { 3.0 } else { 0.0 };
        let (h_a, _) = s.initial_trace(&f, &u0).unwrap();
        let (h_b, _) = s.initial_trace(&f, &shifted).unwrap();
        assert!(h_a.sub(&h_b).max_abs() < 1e-10);
    }

    #[test]
    fn energy_is_quadratic_in_data() {
        let m = single(8);
        let s = ThinSolver::new(&m, cfg(0.02, 0.06)).unwrap();
        let f = |x: f64, _y: f64, t: f64| 1.0 + x + t;
        let u0 = |x: f64, y: f64, _t: f64| x - y;
        let f2 = |x: f64, y: f64, t: f64| 2.0 * f(x, y, t);
        let u02 = |x: f64, y: f64, t: f64| 2.0 * u0(x, y, t);
        let e1 = energy_audit(&s, &s.run(&f, &u0).unwrap());
        let e2 = energy_audit(&s, &s.run(&f2, &u02).unwrap());
        assert!((e2.lhs / e1.lhs - 4.0).abs() < 0.04);
        assert!((e2.ratio - e1.ratio).abs() < 1e-6 * e1.ratio);
    }

    #[test]
    fn superposition() {
        let m = single(8);
        let s = ThinSolver::new(&m, cfg(0.02, 0.06)).unwrap();
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
            let sum = a.levels[k].h.add(&b.levels[k].h);
            assert!(sum.sub(&ab.levels[k].h).max_abs() < 1e-9);
        }
    }

    #[test]
    fn picard_converges_geometrically() {
        let m = single(8);
        let s = ThinSolver::new(
            &m,
            ThinConfig {
                scheme: ThinScheme::Picard,
                window: 0.04,
                picard_tol: 1e-10,
                ..cfg(0.01, 0.08)
            },
        )
        .unwrap();
        let f = |x: f64, y: f64, _t: f64| 1.0 + x * y;
        let u0 = |x: f64, y: f64, _t: f64| x * x - y;
        let st = s.run(&f, &u0).unwrap();
        assert!(!st.contraction.is_empty());
        for r in &st.contraction {
            assert!(r.ratios().iter().all(|&q| q < 1.0), "{r:?}");
        }
        let march = ThinSolver::new(&m, cfg(0.01, 0.08)).unwrap().run(&f, &u0).unwrap();
        let gap = st.final_level().h.sub(&march.final_level().h).max_abs();
        assert!(gap < 0.1 * march.final_level().h.max_abs().max(1e-12_f64));
    }
}

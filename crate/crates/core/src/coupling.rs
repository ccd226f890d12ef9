//! Interface fluxes in residual form, the target currents `ℓ` and the
//! constants system that projects traces onto the flux-constrained set.
//!
//! All fluxes are discrete residuals `∫ f φ − ∫ σ ∇u·∇φ` against hat tests,
//! so they include the source term and hold exactly at the discrete level.
//! Every flux carries the `σ_out` factor; the constants matrix is built with
//! it as well so that `A` and `ℓ` are both currents.

use crate::fem::{assemble_load_in, region_integral, InterfaceFem, NodalField, Region};
use crate::linalg::{DenseMatrix, LuFactors};
use crate::surface::{surface_h1_norm, SurfaceOperator, TraceField};
use crate::{Error, Result};

/// Jump flux `[σ ∂u/∂ν]` tested against every loop hat, plus per-loop totals.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxFunctional {
    pub values: TraceField,
    pub totals: Vec<f64>,
}

/// Target currents `ℓ_i` through each loop.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxTargets {
    pub ell: Vec<f64>,
}

/// Nodal residual `F − K u` of the full transmission problem.
fn transmission_residual(fem: &InterfaceFem, f: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let load = assemble_load_in(fem.mesh(), f, Region::Conductors)?;
    let sys = fem.transmission_system();
    sys.check_solved(&load, u, fem.options().tol)?;
    let ku = sys.matrix().matvec(u);
    Ok(load.iter().zip(&ku).map(|(a, b)| a - b).collect())
}

/// Nodal residual `F_out − K_out u` of the outer-region problem.
fn outer_residual(fem: &InterfaceFem, f: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let load = assemble_load_in(fem.mesh(), f, Region::Outer)?;
    let sys = fem.exterior_system();
    sys.check_solved(&load, u, fem.options().tol)?;
    let ku = sys.matrix().matvec(u);
    Ok(load.iter().zip(&ku).map(|(a, b)| a - b).collect())
}

/// Residual of the transmission problem at every loop node. `u` must solve
/// the problem with source `f` on all free nodes.
pub fn jump_flux(fem: &InterfaceFem, f: &[f64], u: &NodalField) -> Result<FluxFunctional> {
    let r = transmission_residual(fem, f, u)?;
    let values = TraceField::gather(fem.mesh(), &r);
    let totals = values.values.iter().map(|v| v.iter().sum()).collect();
    Ok(FluxFunctional { values, totals })
}

/// `∫_{Ω_out} f φ̂_i − ∫_{Ω_out} σ_out ∇u·∇φ̂_i` with `φ̂_i` the hat extension
/// of the indicator of loop `loop_index`.
pub fn onesided_outer_flux(fem: &InterfaceFem, f: &[f64], u: &[f64], loop_index: usize) -> Result<f64> {
    Ok(onesided_outer_fluxes(fem, f, u)?[loop_index])
}

/// [`onesided_outer_flux`] for all loops at once.
pub fn onesided_outer_fluxes(fem: &InterfaceFem, f: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let r = outer_residual(fem, f, u)?;
    Ok(fem
        .mesh()
        .loops
        .iter()
        .map(|l| l.node_ids.iter().map(|&v| r[v]).sum())
        .collect())
}

/// Current leaving through `∂Ω`, tested against the boundary indicator:
/// `∫_{Ω_out} σ_out ∇ū·∇ψ − ∫_{Ω_out} f ψ`.
pub fn boundary_flux(fem: &InterfaceFem, f: &[f64], ubar: &[f64]) -> Result<f64> {
    let r = outer_residual(fem, f, ubar)?;
    Ok(-fem.mesh().boundary_nodes.iter().map(|&v| r[v]).sum::<f64>())
}

/// `ℓ_j = −boundary_flux − ∫_{Ω_j ∪ Ω_out} f + Σ_{i≠j} onesided_i(ū)`.
pub fn compute_targets(fem: &InterfaceFem, f: &[f64], ubar: &[f64]) -> Result<FluxTargets> {
    let mesh = fem.mesh();
    let bf = boundary_flux(fem, f, ubar)?;
    let os = onesided_outer_fluxes(fem, f, ubar)?;
    let total_os: f64 = os.iter().sum();
    let f_out = region_integral(mesh, f, Region::Outer);
    let ell = mesh
        .loops
        .iter()
        .enumerate()
        .map(|(j, l)| {
            let f_in = region_integral(mesh, f, Region::Inclusion(l.component_id));
            -bf - f_in - f_out + (total_os - os[j])
        })
        .collect();
    Ok(FluxTargets { ell })
}

/// Magnitude against which flux totals are compared:
/// `Σ_{p∈Γ} |(K u)_p| + ∫_Ω |f|`.
pub fn compatibility_scale(fem: &InterfaceFem, f: &[f64], u: &[f64]) -> f64 {
    let ku = fem.bulk_matrix().matvec(u);
    let mesh = fem.mesh();
    let abs_f: Vec<f64> = f.iter().map(|v| v.abs()).collect();
    let on_loops: f64 = mesh.loops.iter().flat_map(|l| l.node_ids.iter()).map(|&v| ku[v].abs()).sum();
    on_loops + region_integral(mesh, &abs_f, Region::All)
}

/// The matrix `a_ij = onesided_i(u_j[1])` of exterior harmonic responses,
/// factorized once per mesh.
#[derive(Debug, Clone)]
pub struct ConstantsSystem {
    pub a: DenseMatrix,
    lu: LuFactors,
}

impl ConstantsSystem {
    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn solve(&self, g: &[f64]) -> Vec<f64> {
        self.lu.solve(g)
    }

    /// Diagonal < 0, off-diagonal ≥ −`tol`, column sums < 0.
    pub fn has_hopf_sign_structure(&self, tol: f64) -> bool {
        let m = self.dim();
        (0..m).all(|j| {
            self.a.get(j, j) < 0.0 && self.a.column_sum(j) < 0.0 && (0..m).all(|i| i == j || self.a.get(i, j) >= -tol)
        })
    }
}

pub fn build_constants_system(fem: &InterfaceFem) -> Result<ConstantsSystem> {
    let mesh = fem.mesh();
    let m = mesh.loops.len();
    let zero = vec![0.0; mesh.node_count()];
    let mut a = DenseMatrix::zeros(m);
    for j in 0..m {
        let mut g = TraceField::zeros(mesh);
        g.values[j].iter_mut().for_each(|v| *v = 1.0);
        let uj = fem.solve_exterior_laplace(&g)?;
        for (i, flux) in onesided_outer_fluxes(fem, &zero, &uj)?.into_iter().enumerate() {
            a.set(i, j, flux);
        }
    }
    let lu = LuFactors::factorize(&a)?;
    Ok(ConstantsSystem { a, lu })
}

/// Shifts `w` by one constant per loop so that its exterior harmonic
/// extension carries current `ℓ_i` through every loop. Returns the shifted
/// trace and the constants.
pub fn project_to_hl(cs: &ConstantsSystem, fem: &InterfaceFem, w: &TraceField, targets: &FluxTargets) -> Result<(TraceField, Vec<f64>)> {
    let mesh = fem.mesh();
    if w.values.len() != cs.dim() || targets.ell.len() != cs.dim() {
        return Err(Error::InvalidField("trace or targets do not match the number of loops".into()));
    }
    let ext = fem.solve_exterior_laplace(w)?;
    let zero = vec![0.0; mesh.node_count()];
    let os = onesided_outer_fluxes(fem, &zero, &ext)?;
    let g: Vec<f64> = targets.ell.iter().zip(&os).map(|(l, o)| l - o).collect();
    let c = cs.solve(&g);
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidField("non-finite projection constants".into()));
    }
    Ok((w.add_constants(&c), c))
}

/// Largest `|c(w₁) − c(w₂)|_∞ / ‖w₁ − w₂‖_{H¹(Γ)}` over a fixed family of
/// Fourier-type perturbations in arc length (modes `1..=modes`, cosine and
/// sine, on each loop).
pub fn lipschitz_estimate(cs: &ConstantsSystem, fem: &InterfaceFem, op: &SurfaceOperator, modes: usize) -> Result<f64> {
    let mesh = fem.mesh();
    let zero_targets = FluxTargets { ell: vec![0.0; cs.dim()] };
    let mut worst: f64 = 0.0;
    for (i, l) in mesh.loops.iter().enumerate() {
        let p = l.perimeter();
        for k in 1..=modes {
            for phase in [0.0, 0.25] {
                let mut d = TraceField::zeros(mesh);
                for (v, s) in d.values[i].iter_mut().zip(&l.arc_coords) {
                    *v = (2.0 * std::f64::consts::PI * (k as f64 * s / p + phase)).cos();
                }
                let (_, c) = project_to_hl(cs, fem, &d, &zero_targets)?;
                let cmax = c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                worst = worst.max(cmax / surface_h1_norm(op, &d));
            }
        }
    }
    Ok(worst)
}

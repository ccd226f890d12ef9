//! The acceptance criteria, each a self-contained experiment with a pass/fail
//! verdict. Shared by `capsim verify` and the `acceptance` test target.

use std::fmt;
use std::path::Path;
use std::process::Command;

use capsim::coupling::{build_constants_system, compute_targets, project_to_hl};
use capsim::fem::{assemble_load, assemble_stiffness, l2_error, sample_nodal, solve_dirichlet, CoefficientMap, InterfaceFem};
use capsim::linalg::SolverOptions;
use capsim::mesh::{build_square_mesh, embed_inclusions, thicken_interfaces, Mesh, Rect};
use capsim::surface::{lb_solve, SurfaceOperator, TraceField};
use capsim::thick::{concentration_run, delta_study, energy_audit_thick, ThickConfig, ThickScheme, ThickSolver};
use capsim::thin::{energy_audit, rearrangement_report, ContractionReport, ThinConfig, ThinScheme, ThinSolver};

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "criterion {:>2} {status} {}: {}", self.id, self.name, self.detail)
    }
}

type Check = Result<(bool, String), String>;

fn verdict(id: usize, name: &'static str, check: Check) -> Verdict {
    let (passed, detail) = check.unwrap_or_else(|e| (false, format!("error: {e}")));
    Verdict { id, name, passed, detail }
}

fn err(e: impl fmt::Display) -> String {
    e.to_string()
}

/// Source used by the reference runs.
pub fn reference_source(x: f64, y: f64, t: f64) -> f64 {
    (3.0 * x).sin() * (1.0 - y) * (1.0 + t)
}

pub fn reference_initial(x: f64, y: f64, _t: f64) -> f64 {
    x * x - y
}

pub fn single_inclusion(n: usize) -> Mesh {
    embed_inclusions(&build_square_mesh(n).expect("valid n"), &[Rect::new(0.25, 0.25, 0.75, 0.75)]).expect("box on grid")
}

pub fn double_inclusion(n: usize) -> Mesh {
    embed_inclusions(
        &build_square_mesh(n).expect("valid n"),
        &[Rect::new(0.125, 0.375, 0.375, 0.625), Rect::new(0.625, 0.375, 0.875, 0.625)],
    )
    .expect("boxes on grid")
}

fn solver_opts() -> SolverOptions {
    SolverOptions::default().with_tol(1e-12)
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Consecutive ratios `v[i] / v[i+1]`.
fn halving_ratios(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[0] / w[1]).collect()
}

fn in_band(r: &[f64], lo: f64, hi: f64) -> bool {
    r.iter().all(|x| (lo..=hi).contains(x))
}

/// Coefficient of determination of the least-squares line through
/// `(i, y_i)`.
pub fn linear_fit_r2(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = y.iter().sum::<f64>() / n;
    let sxy: f64 = y.iter().enumerate().map(|(i, v)| (i as f64 - xm) * (v - ym)).sum();
    let sxx: f64 = (0..y.len()).map(|i| (i as f64 - xm).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - ym).powi(2)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    sxy * sxy / (sxx * syy)
}

pub fn elliptic_convergence() -> Verdict {
    verdict(1, "elliptic convergence", (|| {
        let exact = |x: f64, y: f64| x * (1.0 - x) * y * (1.0 - y);
        let rhs = |x: f64, y: f64, _t: f64| 2.0 * (x * (1.0 - x) + y * (1.0 - y));
        let mut errors = Vec::new();
        for n in [8, 16, 32] {
            let mesh = build_square_mesh(n).map_err(err)?;
            let a = assemble_stiffness(&mesh, &CoefficientMap::uniform(1.0)).map_err(err)?;
            let load = assemble_load(&mesh, &sample_nodal(&mesh, &rhs, 0.0)).map_err(err)?;
            let fixed: Vec<(usize, f64)> = mesh.boundary_nodes.iter().map(|&i| (i, 0.0)).collect();
            let u = solve_dirichlet(&a, &load, &fixed, &solver_opts()).map_err(err)?;
            errors.push(l2_error(&u, &mesh, exact));
        }
        let ratios = halving_ratios(&errors);
        Ok((
            in_band(&ratios, 3.5, 4.5),
            format!("L2 errors n=8,16,32 {}, ratios {}", fmt_list(&errors), fmt_list(&ratios)),
        ))
    })())
}

pub fn surface_operator() -> Verdict {
    verdict(2, "surface operator on a 256-gon", (|| {
        let n = 256;
        let theta: Vec<f64> = (0..n).map(|j| 2.0 * std::f64::consts::PI * j as f64 / n as f64).collect();
        let side = 2.0 * (std::f64::consts::PI / n as f64).sin();
        let op = SurfaceOperator::from_lengths(vec![vec![side; n]]).map_err(err)?;
        let mass = &op.mass[0];
        let g = TraceField {
            values: vec![theta.iter().zip(mass).map(|(t, m)| t.cos() * m).collect()],
        };
        let v = lb_solve(&op, 1.0, &g, &SolverOptions::default().with_tol(1e-11)).map_err(err)?;
        let num: f64 = v.values[0].iter().zip(&theta).zip(mass).map(|((a, t), m)| m * (a - t.cos()).powi(2)).sum();
        let den: f64 = theta.iter().zip(mass).map(|(t, m)| m * t.cos().powi(2)).sum();
        let rel = (num / den).sqrt();
        let mut rq = Vec::new();
        for k in 1..=4 {
            let w: Vec<f64> = theta.iter().map(|t| (k as f64 * t).cos()).collect();
            let top = op.stiffness[0].bilinear(&w, &w);
            let bottom: f64 = w.iter().zip(mass).map(|(a, m)| m * a * a).sum();
            rq.push(top / bottom / (k * k) as f64);
        }
        let ok = rel <= 0.01 && rq.iter().all(|r| (r - 1.0).abs() <= 0.015);
        Ok((ok, format!("relative L2 error {rel:.3e}, Rayleigh quotient / k^2 for k=1..4 {}", fmt_list(&rq))))
    })())
}

pub fn constants_structure() -> Verdict {
    verdict(3, "constants-system sign structure", (|| {
        let mut worst_idem: f64 = 0.0;
        let mut worst_shift: f64 = 0.0;
        let mut notes = Vec::new();
        let mut ok = true;
        for n in [16, 32] {
            for (label, mesh) in [("single", single_inclusion(n)), ("double", double_inclusion(n))] {
                let fem = InterfaceFem::new(&mesh, 1.0, 1.0, solver_opts()).map_err(err)?;
                let cs = build_constants_system(&fem).map_err(err)?;
                let m = cs.dim();
                let diag_neg = (0..m).all(|j| cs.a.get(j, j) < 0.0);
                let off_ok = (0..m).all(|i| (0..m).all(|j| i == j || cs.a.get(i, j) >= -1e-10));
                let cols_neg = (0..m).all(|j| cs.a.column_sum(j) < 0.0);
                ok &= diag_neg && off_ok && cols_neg;
                notes.push(format!("{label} n={n} diag {:.3e}", cs.a.get(0, 0)));

                let f = sample_nodal(&mesh, &reference_source, 0.05);
                let h0 = TraceField::sample(&mesh, &reference_initial, 0.0);
                let ubar = fem.solve_transmission(&f, &h0).map_err(err)?;
                let targets = compute_targets(&fem, &f, &ubar).map_err(err)?;
                let w = TraceField::from_fn(&mesh, |p| (7.0 * p[0]).sin() + (5.0 * p[1] * p[0]).cos());
                let (p1, _) = project_to_hl(&cs, &fem, &w, &targets).map_err(err)?;
                let (p2, _) = project_to_hl(&cs, &fem, &p1, &targets).map_err(err)?;
                worst_idem = worst_idem.max(p2.sub(&p1).max_abs());
                let shifts: Vec<f64> = (0..m).map(|i| 0.7 - 1.3 * i as f64).collect();
                let (p3, _) = project_to_hl(&cs, &fem, &w.add_constants(&shifts), &targets).map_err(err)?;
                worst_shift = worst_shift.max(p3.sub(&p1).max_abs());
            }
        }
        ok &= worst_idem <= 1e-10 && worst_shift <= 1e-10;
        Ok((
            ok,
            format!(
                "{}; idempotence defect {worst_idem:.2e}, shift defect {worst_shift:.2e}",
                notes.join(", ")
            ),
        ))
    })())
}

fn thin_config(scheme: ThinScheme, dt: f64, t_final: f64) -> ThinConfig {
    ThinConfig {
        scheme,
        dt,
        t_final,
        window: 0.1,
        ..ThinConfig::default()
    }
}

pub fn flux_compatibility() -> Verdict {
    verdict(4, "flux compatibility along thin runs", (|| {
        let mut worst: f64 = 0.0;
        let mut runs = 0;
        for mesh in [single_inclusion(16), double_inclusion(16)] {
            for scheme in [ThinScheme::Marching, ThinScheme::Picard] {
                let solver = ThinSolver::new(&mesh, thin_config(scheme, 0.01, 0.2)).map_err(err)?;
                let state = solver.run(&reference_source, &reference_initial).map_err(err)?;
                worst = worst.max(state.max_compat_ratio());
                runs += 1;
            }
        }
        Ok((worst <= 1e-8, format!("{runs} runs, max |total jump flux| / scale {worst:.3e}")))
    })())
}

/// Passes when every window with at least three sweeps decays log-linearly.
fn contraction_ok(reports: &[ContractionReport], r2_min: &mut f64, ratio_max: &mut f64) -> bool {
    let mut ok = true;
    for rep in reports {
        let r = rep.ratios();
        *ratio_max = r.iter().fold(*ratio_max, |m, v| m.max(*v));
        ok &= r.iter().all(|v| *v < 1.0);
        let logs: Vec<f64> = rep.increments.iter().filter(|v| **v > 0.0).map(|v| v.ln()).collect();
        if logs.len() >= 3 {
            let r2 = linear_fit_r2(&logs);
            *r2_min = r2_min.min(r2);
            ok &= r2 > 0.99;
        }
    }
    ok
}

pub fn picard_contraction() -> Verdict {
    verdict(5, "Picard contraction", (|| {
        let mut r2_min: f64 = 1.0;
        let mut ratio_max: f64 = 0.0;
        let mut halvings = Vec::new();
        let mut ok = true;
        for mesh in [single_inclusion(16), double_inclusion(16)] {
            let solver = ThinSolver::new(&mesh, thin_config(ThinScheme::Picard, 0.01, 0.2)).map_err(err)?;
            let state = solver.run(&reference_source, &reference_initial).map_err(err)?;
            ok &= contraction_ok(&state.contraction, &mut r2_min, &mut ratio_max);
            halvings.push(state.contraction.iter().map(|c| c.halvings).sum::<usize>());
        }
        let thick = thicken_interfaces(&single_inclusion(16), 1).map_err(err)?;
        let cfg = ThickConfig {
            scheme: ThickScheme::Picard,
            t_final: 0.2,
            ..ThickConfig::default()
        };
        let state = ThickSolver::new(&thick, cfg).map_err(err)?.run(&reference_source, &reference_initial).map_err(err)?;
        ok &= contraction_ok(&state.contraction, &mut r2_min, &mut ratio_max);
        halvings.push(state.contraction.iter().map(|c| c.halvings).sum::<usize>());
        ok &= halvings.iter().all(|h| *h <= 2);
        Ok((
            ok,
            format!("min R^2 of log increments {r2_min:.5}, max sweep ratio {ratio_max:.3e}, halvings {halvings:?}"),
        ))
    })())
}

pub fn scheme_consistency() -> Verdict {
    verdict(6, "scheme consistency under dt halving", (|| {
        let dts = [0.02, 0.01, 0.005];
        let mesh = single_inclusion(16);
        let mut thin_gaps = Vec::new();
        for dt in dts {
            let run = |scheme| -> Result<TraceField, String> {
                let solver = ThinSolver::new(&mesh, thin_config(scheme, dt, 0.2)).map_err(err)?;
                let state = solver.run(&reference_source, &reference_initial).map_err(err)?;
                Ok(state.final_level().h.clone())
            };
            thin_gaps.push(run(ThinScheme::Marching)?.sub(&run(ThinScheme::Picard)?).max_abs());
        }
        let thick = thicken_interfaces(&mesh, 1).map_err(err)?;
        let mut thick_gaps = Vec::new();
        for dt in dts {
            let run = |scheme| -> Result<Vec<f64>, String> {
                let cfg = ThickConfig {
                    scheme,
                    delta: 0.1,
                    dt,
                    t_final: 0.2,
                    ..ThickConfig::default()
                };
                let state = ThickSolver::new(&thick, cfg).map_err(err)?.run(&reference_source, &reference_initial).map_err(err)?;
                Ok(state.final_level().u.values.clone())
            };
            let a = run(ThickScheme::Explicit)?;
            let b = run(ThickScheme::Implicit)?;
            thick_gaps.push(a.iter().zip(&b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())));
        }
        let tr = halving_ratios(&thin_gaps);
        let kr = halving_ratios(&thick_gaps);
        Ok((
            in_band(&tr, 1.5, 3.0) && in_band(&kr, 1.5, 3.0),
            format!(
                "thin gaps {} ratios {}; thick gaps {} ratios {}",
                fmt_list(&thin_gaps),
                fmt_list(&tr),
                fmt_list(&thick_gaps),
                fmt_list(&kr)
            ),
        ))
    })())
}

pub fn energy_stability() -> Verdict {
    verdict(7, "energy ratio stability", (|| {
        let mut thin = Vec::new();
        for n in [16, 32] {
            let mesh = single_inclusion(n);
            let solver = ThinSolver::new(&mesh, thin_config(ThinScheme::Marching, 0.01, 0.2)).map_err(err)?;
            let state = solver.run(&reference_source, &reference_initial).map_err(err)?;
            thin.push(energy_audit(&solver, &state).ratio);
        }
        let thin_spread = (thin[1] / thin[0] - 1.0).abs();
        let mesh = thicken_interfaces(&single_inclusion(16), 1).map_err(err)?;
        let mut thick = Vec::new();
        for delta in [1e-1, 1e-2, 1e-3] {
            let cfg = ThickConfig {
                delta,
                t_final: 0.2,
                ..ThickConfig::default()
            };
            let state = ThickSolver::new(&mesh, cfg.clone()).map_err(err)?.run(&reference_source, &reference_initial).map_err(err)?;
            thick.push(energy_audit_thick(&cfg, &state).ratio);
        }
        let lo = thick.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = thick.iter().cloned().fold(0.0, f64::max);
        let thick_spread = (hi - lo) / lo;
        Ok((
            thin_spread <= 0.2 && thick_spread <= 0.1,
            format!(
                "thin ratios n=16,32 {} (spread {:.2}%), thick ratios delta=1e-1..1e-3 {} (spread {:.2}%)",
                fmt_list(&thin),
                100.0 * thin_spread,
                fmt_list(&thick),
                100.0 * thick_spread
            ),
        ))
    })())
}

pub fn delta_limit() -> Verdict {
    verdict(8, "delta to zero limit", (|| {
        let mesh = thicken_interfaces(&single_inclusion(16), 1).map_err(err)?;
        let base = ThickConfig {
            t_final: 0.2,
            ..ThickConfig::default()
        };
        let study = delta_study(&mesh, &base, &reference_source, &reference_initial, &[1e-1, 1e-2, 1e-3]).map_err(err)?;
        Ok((
            strictly_decreasing(&study.distances),
            format!("distance to delta=0 for delta=1e-1,1e-2,1e-3: {}", fmt_list(&study.distances)),
        ))
    })())
}

pub fn concentration() -> Verdict {
    verdict(9, "membrane concentration", (|| {
        let mesh = single_inclusion(32);
        let cfg = thin_config(ThinScheme::Marching, 0.01, 0.1);
        let table = concentration_run(&mesh, &[4, 2, 1], &cfg, &reference_source, &reference_initial, &[5, 10]).map_err(err)?;
        let mut ok = true;
        let mut cols = Vec::new();
        for s in 0..table.sample_times.len() {
            let col: Vec<f64> = table.discrepancies.iter().map(|r| r[s]).collect();
            ok &= strictly_decreasing(&col);
            cols.push(format!("t={}: {}", table.sample_times[s], fmt_list(&col)));
        }
        Ok((ok, format!("eta = {}; discrepancy {}", fmt_list(&table.etas), cols.join("; "))))
    })())
}

pub fn rearrangement() -> Verdict {
    verdict(10, "initial-data rearrangement", (|| {
        let mesh = double_inclusion(16);
        let solver = ThinSolver::new(&mesh, thin_config(ThinScheme::Marching, 0.01, 0.02)).map_err(err)?;
        let state = solver.run(&reference_source, &reference_initial).map_err(err)?;
        let r = rearrangement_report(&solver, &state);
        let grad_scale = state.initial_trace.max_abs().max(1.0);
        let shift_defect = r
            .c0
            .iter()
            .zip(&r.perimeters)
            .zip(&r.trace_shift)
            .map(|((c, p), s)| (s - c.abs() * p.sqrt()).abs() / s.abs().max(1e-300))
            .fold(0.0_f64, f64::max);
        let nonzero = r.c0.iter().any(|c| c.abs() > 1e-8);
        let ok = r.gradient_defect <= 1e-12 * grad_scale && shift_defect <= 1e-12 && nonzero;
        Ok((
            ok,
            format!(
                "c(t0) = {}, gradient defect {:.2e}, relative shift defect {shift_defect:.2e}",
                fmt_list(&r.c0),
                r.gradient_defect
            ),
        ))
    })())
}

const DETERMINISM_CONFIGS: [(&str, &str); 2] = [
    (
        "run-thin",
        r#"{"problem": "thin", "mesh": {"n": 16, "boxes": [[0.125, 0.375, 0.375, 0.625], [0.625, 0.375, 0.875, 0.625]]},
            "time": {"t_final": 0.1, "dt": 0.01, "scheme": "picard", "window": 0.05},
            "f_expr": "sin(3*x)*(1-y)*(1+t)", "u0_expr": "x^2 - y", "output": {"field_times": [0.1]}}"#,
    ),
    (
        "delta-study",
        r#"{"problem": "delta_study", "mesh": {"n": 16, "k": 1}, "time": {"t_final": 0.05, "dt": 0.01},
            "f_expr": "sin(3*x)*(1-y)*(1+t)", "u0_expr": "x^2 - y"}"#,
    ),
];

/// Runs `bin` twice per configuration with two worker threads and compares
/// every produced file byte for byte.
pub fn determinism(bin: &Path) -> Verdict {
    verdict(11, "deterministic output", (|| {
        let base = scratch_dir("determinism").map_err(err)?;
        let mut compared = Vec::new();
        let mut ok = true;
        for (cmd, text) in DETERMINISM_CONFIGS {
            let cfg = base.join(format!("{cmd}.json"));
            std::fs::write(&cfg, text).map_err(err)?;
            let mut outputs = Vec::new();
            for rep in 0..2 {
                let out = base.join(format!("{cmd}-{rep}"));
                let status = Command::new(bin)
                    .arg(cmd)
                    .arg("--config")
                    .arg(&cfg)
                    .arg("--out")
                    .arg(&out)
                    .args(["--threads", "2"])
                    .output()
                    .map_err(err)?;
                if !status.status.success() {
                    return Err(format!("{cmd} failed: {}", String::from_utf8_lossy(&status.stderr).trim()));
                }
                let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
                    .map_err(err)?
                    .map(|e| {
                        let e = e.map_err(err)?;
                        Ok((e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).map_err(err)?))
                    })
                    .collect::<Result<_, String>>()?;
                files.sort();
                outputs.push(files);
            }
            ok &= !outputs[0].is_empty() && outputs[0] == outputs[1];
            compared.extend(outputs[0].iter().map(|(n, _)| n.clone()));
        }
        let _ = std::fs::remove_dir_all(&base);
        Ok((ok, format!("compared {}", compared.join(", "))))
    })())
}

/// Fresh directory under the system temp dir.
pub fn scratch_dir(tag: &str) -> std::io::Result<std::path::PathBuf> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    let dir = std::env::temp_dir().join(format!(
        "capsim-{tag}-{}-{}",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Every criterion in order.
pub fn all(bin: &Path) -> Vec<Verdict> {
    vec![
        elliptic_convergence(),
        surface_operator(),
        constants_structure(),
        flux_compatibility(),
        picard_contraction(),
        scheme_consistency(),
        energy_stability(),
        delta_limit(),
        concentration(),
        rearrangement(),
        determinism(bin),
    ]
}

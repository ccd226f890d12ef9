//! Pipelines behind the `mesh`, `run-thin`, `run-thick`, `concentration` and
//! `delta-study` subcommands. Every pipeline returns its artifacts in memory
//! as `(file name, contents)` pairs plus a one-line summary; writing them is
//! left to [`write_artifacts`].

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use capsim::fem::sample_nodal;
use capsim::mesh::{build_square_mesh, embed_inclusions, thicken_interfaces, write_mesh_string, Mesh};
use capsim::thick::{concentration_run, delta_study, energy_audit_thick, flux_condition_check, ThickSolver};
use capsim::thin::{energy_audit, ThinSolver};

use crate::config::{Problem, RunConfig};
use crate::error::CliError;
use crate::expr::ExprSource;

pub const THIN_HEADER: &str = "t,component,ell,c,total_jump_flux,bulk_energy,surface_grad_energy";
pub const THICK_HEADER: &str = "t,component,flux_residual,membrane_energy,conductor_energy,capacitive_energy";
pub const CONCENTRATION_HEADER: &str = "eta,t,discrepancy";
pub const DELTA_HEADER: &str = "delta,distance,energy_lhs,energy_rhs,energy_ratio";
pub const FIELD_HEADER: &str = "node,x,y,value";

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<(String, String)>,
    pub summary: String,
}

pub fn build_mesh(cfg: &RunConfig, thick: bool) -> Result<Mesh, CliError> {
    let square = build_square_mesh(cfg.mesh.n)?;
    let thin = embed_inclusions(&square, &cfg.boxes())?;
    if thick {
        Ok(thicken_interfaces(&thin, cfg.mesh.k)?)
    } else {
        Ok(thin)
    }
}

fn require(cfg: &RunConfig, problem: Problem) -> Result<(), CliError> {
    if cfg.problem != problem {
        return Err(CliError::Config(format!(
            "config describes a `{}` problem, not `{}`",
            cfg.problem.name(),
            problem.name()
        )));
    }
    Ok(())
}

fn field_csv(mesh: &Mesh, u: &[f64]) -> String {
    let mut s = String::from(FIELD_HEADER);
    s.push('\n');
    for (i, (p, v)) in mesh.nodes.iter().zip(u).enumerate() {
        let _ = writeln!(s, "{i},{:e},{:e},{:e}", p[0], p[1], v);
    }
    s
}

/// Level index for every requested dump time.
fn field_levels(times: &[f64], level_times: &[f64]) -> Result<Vec<usize>, CliError> {
    times
        .iter()
        .map(|&t| {
            level_times
                .iter()
                .position(|&lt| (lt - t).abs() <= 1e-9 * t.abs().max(1.0))
                .ok_or_else(|| CliError::Config(format!("field time {t} is not a time level of the run")))
        })
        .collect()
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6e}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn mesh_pipeline(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mesh = build_mesh(cfg, cfg.problem.uses_thick_mesh())?;
    let summary = format!(
        "mesh: {} nodes, {} triangles, {} inclusions, h = {:e}",
        mesh.node_count(),
        mesh.triangles.len(),
        mesh.component_count(),
        mesh.grid_h
    );
    Ok(Outcome {
        artifacts: vec![("mesh.txt".into(), write_mesh_string(&mesh))],
        summary,
    })
}

pub fn thin_pipeline(cfg: &RunConfig) -> Result<Outcome, CliError> {
    require(cfg, Problem::Thin)?;
    let mesh = build_mesh(cfg, false)?;
    let f = ExprSource(cfg.source()?);
    let u0 = ExprSource(cfg.initial()?);
    let solver = ThinSolver::new(&mesh, cfg.thin_config())?;
    let state = solver.run(&f, &u0)?;
    let level_times: Vec<f64> = state.levels.iter().map(|l| l.t).collect();
    let dumps = field_levels(&cfg.output.field_times, &level_times)?;

    let mut csv = String::from(THIN_HEADER);
    csv.push('\n');
    for l in &state.levels {
        for i in 0..l.c.len() {
            let _ = writeln!(
                csv,
                "{:e},{},{:e},{:e},{:e},{:e},{:e}",
                l.t,
                i + 1,
                l.ell[i],
                l.c[i],
                l.jump_totals[i],
                l.bulk_energy,
                l.surface_grad_energy
            );
        }
    }
    let mut artifacts = vec![("thin.csv".to_string(), csv)];
    for k in dumps {
        let u = state.levels[k].u.as_ref().expect("fields are kept when dumps are requested");
        artifacts.push((format!("field_t{:.6}.csv", level_times[k]), field_csv(&mesh, u)));
    }
    let last = state.final_level();
    let energy = energy_audit(&solver, &state);
    let summary = format!(
        "thin: {} levels, final bulk_energy {:.6e}, surface_grad_energy {:.6e}, energy ratio {:.4}, max compatibility residual {:.3e}, c(t0) = {}",
        state.levels.len(),
        last.bulk_energy,
        last.surface_grad_energy,
        energy.ratio,
        state.max_compat_ratio(),
        fmt_list(&state.levels[0].c)
    );
    Ok(Outcome { artifacts, summary })
}

pub fn thick_pipeline(cfg: &RunConfig) -> Result<Outcome, CliError> {
    require(cfg, Problem::Thick)?;
    let mesh = build_mesh(cfg, true)?;
    let f = ExprSource(cfg.source()?);
    let u0 = ExprSource(cfg.initial()?);
    let tc = cfg.thick_config();
    let solver = ThickSolver::new(&mesh, tc.clone())?;
    let state = solver.run(&f, &u0)?;
    let level_times: Vec<f64> = state.levels.iter().map(|l| l.t).collect();
    let dumps = field_levels(&cfg.output.field_times, &level_times)?;

    let mut csv = String::from(THICK_HEADER);
    csv.push('\n');
    let mut worst_flux: f64 = 0.0;
    for l in &state.levels {
        let fk = sample_nodal(&mesh, &f, l.t);
        let report = flux_condition_check(&mesh, &tc, &l.u, &fk)?;
        for (i, r) in report.residuals.iter().enumerate() {
            if report.scale > 0.0 {
                worst_flux = worst_flux.max(r / report.scale);
            }
            let _ = writeln!(
                csv,
                "{:e},{},{:e},{:e},{:e},{:e}",
                l.t,
                i + 1,
                r,
                l.membrane_energy,
                l.conductor_energy,
                l.capacitive_energy
            );
        }
    }
    let mut artifacts = vec![("thick.csv".to_string(), csv)];
    for k in dumps {
        artifacts.push((format!("field_t{:.6}.csv", level_times[k]), field_csv(&mesh, &state.levels[k].u)));
    }
    for w in &state.warnings {
        eprintln!("warning: {w}");
    }
    let last = state.final_level();
    let energy = energy_audit_thick(&tc, &state);
    let summary = format!(
        "thick: {} levels, final membrane_energy {:.6e}, conductor_energy {:.6e}, energy ratio {:.4}, max relative flux residual {:.3e}",
        state.levels.len(),
        last.membrane_energy,
        last.conductor_energy,
        energy.ratio,
        worst_flux
    );
    Ok(Outcome { artifacts, summary })
}

pub fn concentration_pipeline(cfg: &RunConfig) -> Result<Outcome, CliError> {
    require(cfg, Problem::Concentration)?;
    let mesh = build_mesh(cfg, false)?;
    let f = ExprSource(cfg.source()?);
    let u0 = ExprSource(cfg.initial()?);
    let thin = cfg.thin_config();
    let steps = if cfg.study.sample_steps.is_empty() {
        vec![(thin.t_final / thin.dt).round() as usize]
    } else {
        cfg.study.sample_steps.clone()
    };
    let table = concentration_run(&mesh, &cfg.study.half_widths, &thin, &f, &u0, &steps)?;
    let mut csv = String::from(CONCENTRATION_HEADER);
    csv.push('\n');
    for (eta, row) in table.etas.iter().zip(&table.discrepancies) {
        for (t, d) in table.sample_times.iter().zip(row) {
            let _ = writeln!(csv, "{eta:e},{t:e},{d:e}");
        }
    }
    let finals: Vec<f64> = table.discrepancies.iter().map(|r| *r.last().expect("one sample")).collect();
    let summary = format!(
        "concentration: eta = {}, discrepancy at t = {:e}: {}",
        fmt_list(&table.etas),
        table.sample_times.last().expect("one sample"),
        fmt_list(&finals)
    );
    Ok(Outcome {
        artifacts: vec![("concentration.csv".into(), csv)],
        summary,
    })
}

pub fn delta_pipeline(cfg: &RunConfig) -> Result<Outcome, CliError> {
    require(cfg, Problem::DeltaStudy)?;
    let mesh = build_mesh(cfg, true)?;
    let f = ExprSource(cfg.source()?);
    let u0 = ExprSource(cfg.initial()?);
    let study = delta_study(&mesh, &cfg.thick_config(), &f, &u0, &cfg.study.deltas)?;
    let mut csv = String::from(DELTA_HEADER);
    csv.push('\n');
    for ((d, dist), e) in study.deltas.iter().zip(&study.distances).zip(&study.energy) {
        let _ = writeln!(csv, "{d:e},{dist:e},{:e},{:e},{:e}", e.lhs, e.rhs, e.ratio);
    }
    let e = &study.limit_energy;
    let _ = writeln!(csv, "{:e},{:e},{:e},{:e},{:e}", 0.0, 0.0, e.lhs, e.rhs, e.ratio);
    let summary = format!(
        "delta-study: delta = {}, distance to delta = 0: {}, energy ratios {}",
        fmt_list(&study.deltas),
        fmt_list(&study.distances),
        fmt_list(&study.energy.iter().map(|e| e.ratio).collect::<Vec<_>>())
    );
    Ok(Outcome {
        artifacts: vec![("delta_study.csv".into(), csv)],
        summary,
    })
}

/// Writes each artifact to a temporary sibling and renames it into place.
pub fn write_artifacts(dir: &Path, artifacts: &[(String, String)]) -> Result<(), CliError> {
    let io = |e: std::io::Error, p: &Path| CliError::Io(format!("{}: {e}", p.display()));
    fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
    for (name, contents) in artifacts {
        let target = dir.join(name);
        let tmp = dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, contents).map_err(|e| io(e, &tmp))?;
        fs::rename(&tmp, &target).map_err(|e| io(e, &target))?;
    }
    Ok(())
}

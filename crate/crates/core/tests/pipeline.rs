//! Multi-module runs: mesh files feeding solvers, thin vs thick models, and
//! energy behaviour of unforced evolutions.

use capsim::fem::{sample_nodal, Source};
use capsim::mesh::{build_square_mesh, embed_inclusions, read_mesh_str, thicken_interfaces, write_mesh_string, Mesh, Rect};
use capsim::thick::{concentration_run, flux_condition_check, ThickConfig, ThickSolver};
use capsim::thin::{ThinConfig, ThinScheme, ThinSolver};

fn two_inclusions(n: usize) -> Mesh {
    embed_inclusions(
        &build_square_mesh(n).unwrap(),
        &[Rect::new(0.125, 0.375, 0.375, 0.625), Rect::new(0.625, 0.375, 0.875, 0.625)],
    )
    .unwrap()
}

fn one_inclusion(n: usize) -> Mesh {
    embed_inclusions(&build_square_mesh(n).unwrap(), &[Rect::new(0.25, 0.25, 0.75, 0.75)]).unwrap()
}

fn source(x: f64, y: f64, t: f64) -> f64 {
    (1.0 + x * y) * (1.0 + t)
}

fn initial(x: f64, y: f64, _t: f64) -> f64 {
    x * x - y
}

fn zero(_x: f64, _y: f64, _t: f64) -> f64 {
    0.0
}

#[test]
fn mesh_file_reproduces_thin_run_exactly() {
    let mesh = two_inclusions(16);
    let back = read_mesh_str(&write_mesh_string(&mesh)).unwrap();
    let cfg = ThinConfig {
        t_final: 0.05,
        ..ThinConfig::default()
    };
    let a = ThinSolver::new(&mesh, cfg.clone()).unwrap().run(&source, &initial).unwrap();
    let b = ThinSolver::new(&back, cfg).unwrap().run(&source, &initial).unwrap();
    assert_eq!(a.levels.len(), b.levels.len());
    for (x, y) in a.levels.iter().zip(&b.levels) {
        assert_eq!(x.h, y.h);
        assert_eq!(x.c, y.c);
    }
}

#[test]
fn unforced_thin_run_dissipates_surface_energy() {
    let mesh = one_inclusion(16);
    let cfg = ThinConfig {
        t_final: 0.3,
        ..ThinConfig::default()
    };
    let st = ThinSolver::new(&mesh, cfg).unwrap().run(&zero, &initial).unwrap();
    let e: Vec<f64> = st.levels.iter().map(|l| l.surface_grad_energy).collect();
    assert!(e[0] > 0.0);
    for w in e.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-10), "{e:?}");
    }
    assert!(e[e.len() - 1] < e[0]);
}

#[test]
fn picard_and_marching_agree_to_first_order() {
    let mesh = two_inclusions(16);
    let run = |scheme, dt| {
        let cfg = ThinConfig {
            scheme,
            dt,
            t_final: 0.1,
            window: 0.05,
            ..ThinConfig::default()
        };
        ThinSolver::new(&mesh, cfg).unwrap().run(&source, &initial).unwrap().final_level().h.clone()
    };
    let coarse = run(ThinScheme::Marching, 0.01).sub(&run(ThinScheme::Picard, 0.01)).max_abs();
    let fine = run(ThinScheme::Marching, 0.005).sub(&run(ThinScheme::Picard, 0.005)).max_abs();
    assert!(coarse < 1e-2, "{coarse}");
    let r = coarse / fine;
    assert!((1.7..2.3).contains(&r), "{coarse} {fine}");
}

#[test]
fn limit_problem_satisfies_the_flux_condition() {
    let mesh = thicken_interfaces(&one_inclusion(16), 1).unwrap();
    let cfg = ThickConfig {
        delta: 0.0,
        t_final: 0.1,
        ..ThickConfig::default()
    };
    let st = ThickSolver::new(&mesh, cfg.clone()).unwrap().run(&source, &initial).unwrap();
    // the step that produced level k used the source at t_{k-1}
    for l in &st.levels[1..] {
        let f = sample_nodal(&mesh, &source as &dyn Source, l.t - cfg.dt);
        let r = flux_condition_check(&mesh, &cfg, &l.u, &f).unwrap();
        assert!(r.residuals[0] <= 1e-6 * r.scale, "{:?} vs {}", r.residuals, r.scale);
    }
}

#[test]
fn thin_membranes_approach_the_interface_model() {
    let mesh = one_inclusion(32);
    let cfg = ThinConfig {
        t_final: 0.05,
        ..ThinConfig::default()
    };
    let table = concentration_run(&mesh, &[2, 1], &cfg, &source, &initial, &[5]).unwrap();
    let d: Vec<f64> = table.discrepancies.iter().map(|r| r[0]).collect();
    assert!(d[1] < d[0]);
    let ratio = d[0] / d[1];
    assert!((1.5..3.0).contains(&ratio), "{d:?}");
}

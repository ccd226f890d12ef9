//! `capsim verify`: invariant checks of every module followed by the
//! acceptance criteria. Checks run on the calling thread, in order, so that
//! fault injection through [`with_flipped_stiffness_sign`] reaches every
//! assembly.

use std::ops::{Add, Div, Mul, Neg, Sub};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use capsim::fem::{assemble_stiffness, with_flipped_stiffness_sign, CoefficientMap};
use capsim::mesh::{read_mesh_str, thicken_interfaces, write_mesh_string};
use capsim::surface::SurfaceOperator;
use capsim::thick::{ThickConfig, ThickSolver};
use capsim::thin::{ThinConfig, ThinSolver};

use crate::acceptance::{self, double_inclusion, reference_initial, reference_source, single_inclusion};
use crate::config::{Problem, RunConfig};
use crate::expr::parse_expr;

pub const DEFAULT_SEED: u64 = 0x00c0_ffee;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Level {
    Quick,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {} ({:.2}s): {}", self.name, self.seconds, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub level: Level,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

type Outcome = Result<(bool, String), String>;

fn timed(name: &str, f: impl FnOnce() -> Outcome) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn stiffness_structure() -> Outcome {
    let mesh = double_inclusion(8);
    let a = assemble_stiffness(&mesh, &CoefficientMap::conductivity(2.0, 1.0)).map_err(err)?;
    let sym = a.symmetry_defect().ok_or("sparsity pattern is not symmetric")?;
    let rows = (0..a.dim()).map(|i| a.row_sum(i).abs()).fold(0.0_f64, f64::max) / a.max_abs();
    let diag_ok = a.diagonal().iter().all(|d| *d > 0.0);
    Ok((
        sym <= 1e-14 && rows <= 1e-12 && diag_ok,
        format!("symmetry defect {sym:.1e}, max relative row sum {rows:.1e}, positive diagonal {diag_ok}"),
    ))
}

fn mesh_round_trip() -> Outcome {
    let mesh = thicken_interfaces(&double_inclusion(16), 1).map_err(err)?;
    let back = read_mesh_str(&write_mesh_string(&mesh)).map_err(err)?;
    Ok((back == mesh, format!("{} nodes, {} triangles", mesh.node_count(), mesh.triangles.len())))
}

fn surface_kernel() -> Outcome {
    let op = SurfaceOperator::build(&double_inclusion(8)).map_err(err)?;
    let mut worst: f64 = 0.0;
    for s in &op.stiffness {
        let ones = vec![1.0; s.dim()];
        worst = worst.max(s.matvec(&ones).iter().fold(0.0_f64, |m, v| m.max(v.abs())));
    }
    Ok((worst <= 1e-12, format!("max |L 1| = {worst:.1e} on {} loops", op.component_count())))
}

/// Short thin run; every level must satisfy the per-component flux balance.
fn compatibility() -> Outcome {
    let mesh = double_inclusion(8);
    let cfg = ThinConfig {
        t_final: 0.05,
        ..ThinConfig::default()
    };
    let solver = ThinSolver::new(&mesh, cfg).map_err(err)?;
    let state = solver.run(&reference_source, &reference_initial).map_err(err)?;
    let worst = state.max_compat_ratio();
    Ok((worst <= 1e-8, format!("max |total jump flux| / scale {worst:.2e}")))
}

/// Unforced implicit thick run; the capacitive energy may not grow.
fn dissipativity() -> Outcome {
    let mesh = thicken_interfaces(&single_inclusion(8), 1).map_err(err)?;
    let cfg = ThickConfig {
        t_final: 0.1,
        ..ThickConfig::default()
    };
    let zero = |_x: f64, _y: f64, _t: f64| 0.0;
    let state = ThickSolver::new(&mesh, cfg).map_err(err)?.run(&zero, &reference_initial).map_err(err)?;
    let e: Vec<f64> = state.levels.iter().map(|l| l.capacitive_energy).collect();
    let ok = e[0] > 0.0 && e.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    Ok((ok, format!("capacitive energy {:.4e} -> {:.4e}", e[0], e[e.len() - 1])))
}

fn config_round_trip() -> Outcome {
    for p in [Problem::Thin, Problem::Thick, Problem::Concentration, Problem::DeltaStudy] {
        let c = RunConfig::new(p).normalized();
        let text = c.to_json();
        let back = RunConfig::parse(&text).map_err(err)?;
        if back != c || back.to_json() != text {
            return Ok((false, format!("{} config changed on round trip", p.name())));
        }
    }
    Ok((true, "4 problem kinds".into()))
}

/// Reference value of a generated expression: double-double result plus a
/// first-order bound on the absolute error a plain f64 evaluation can incur,
/// in units of the f64 rounding unit.
#[derive(Debug, Clone, Copy)]
pub struct Reference {
    pub value: Dd,
    pub sensitivity: f64,
}

/// Random expression with its reference value at `(x, y, t)`. `None` marks
/// samples where the reference itself is undefined (zero divisor, `exp`
/// overflow).
pub fn random_expression(rng: &mut impl Rng, depth: usize, x: f64, y: f64, t: f64) -> (String, Option<Reference>) {
    let (text, value, _) = gen(rng, depth, [x, y, t]);
    (text, value)
}

/// Binding strength used to decide where parentheses are needed.
const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const UNARY: u8 = 3;
const POWER: u8 = 4;
const ATOM: u8 = 5;

fn wrap(text: String, prec: u8, min: u8) -> String {
    if prec < min {
        format!("({text})")
    } else {
        text
    }
}

fn leaf(v: f64, sensitivity: f64) -> Option<Reference> {
    Some(Reference {
        value: Dd::from(v),
        sensitivity,
    })
}

fn gen(rng: &mut impl Rng, depth: usize, at: [f64; 3]) -> (String, Option<Reference>, u8) {
    if depth == 0 || rng.gen_bool(0.2) {
        return match rng.gen_range(0..4) {
            3 => {
                let c = rng.gen_range(0..4000) as f64 / 1000.0;
                (format!("{c}"), leaf(c, c), ATOM)
            }
            k => (["x", "y", "t"][k].to_string(), leaf(at[k], 0.0), ATOM),
        };
    }
    let sub = |rng: &mut _| gen(rng, depth - 1, at);
    match rng.gen_range(0..8) {
        0 | 1 => {
            let (a, ra, pa) = sub(rng);
            let (b, rb, pb) = sub(rng);
            let plus = rng.gen_bool(0.5);
            let text = format!("{} {} {}", wrap(a, pa, SUM), if plus { "+" } else { "-" }, wrap(b, pb, PRODUCT));
            let r = ra.zip(rb).map(|(a, b)| {
                let value = if plus { a.value + b.value } else { a.value - b.value };
                Reference {
                    value,
                    sensitivity: a.sensitivity + b.sensitivity + value.value().abs(),
                }
            });
            (text, r, SUM)
        }
        2 | 3 => {
            let (a, ra, pa) = sub(rng);
            let (b, rb, pb) = sub(rng);
            let times = rng.gen_bool(0.5);
            let text = format!("{}{}{}", wrap(a, pa, PRODUCT), if times { "*" } else { "/" }, wrap(b, pb, UNARY));
            let r = ra.zip(rb).and_then(|(a, b)| {
                let (av, bv) = (a.value.value().abs(), b.value.value().abs());
                if times {
                    let value = a.value * b.value;
                    Some(Reference {
                        value,
                        sensitivity: bv * a.sensitivity + av * b.sensitivity + value.value().abs(),
                    })
                } else if b.value.hi != 0.0 {
                    let value = a.value / b.value;
                    let q = value.value().abs();
                    Some(Reference {
                        value,
                        sensitivity: (a.sensitivity + q * b.sensitivity) / bv + q,
                    })
                } else {
                    None
                }
            });
            (text, r, PRODUCT)
        }
        4 => {
            let (a, ra, pa) = sub(rng);
            let r = ra.map(|a| Reference {
                value: -a.value,
                ..a
            });
            (format!("-{}", wrap(a, pa, UNARY)), r, UNARY)
        }
        5 => {
            let (a, ra, pa) = sub(rng);
            let k = rng.gen_range(2..4);
            let r = ra.map(|a| {
                let sq = a.value * a.value;
                let value = if k == 2 { sq } else { sq * a.value };
                let base = a.value.value().abs();
                Reference {
                    value,
                    sensitivity: k as f64 * base.powi(k - 1) * a.sensitivity + value.value().abs(),
                }
            });
            (format!("{}^{k}", wrap(a, pa, ATOM)), r, POWER)
        }
        _ => {
            let (a, ra, _) = sub(rng);
            let name = ["sin", "cos", "exp"][rng.gen_range(0..3)];
            let r = ra.and_then(|a| {
                let x = a.value.value();
                let (v, slope) = match name {
                    "sin" => (x.sin(), 1.0),
                    "cos" => (x.cos(), 1.0),
                    _ if x < 700.0 => (x.exp(), x.exp()),
                    _ => return None,
                };
                leaf(v, slope * a.sensitivity + v.abs())
            });
            (format!("{name}({a})"), r, ATOM)
        }
    }
}

/// Double-double number `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl From<f64> for Dd {
    fn from(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl Dd {
    fn renorm(hi: f64, lo: f64) -> Dd {
        let (h, l) = two_sum(hi, lo);
        Dd { hi: h, lo: l }
    }

    pub fn value(self) -> f64 {
        self.hi + self.lo
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        Dd::renorm(s, e + self.lo + o.lo)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Dd::renorm(p, e + self.hi * o.lo + self.lo * o.hi)
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::from(q1);
        Dd::renorm(q1, r.hi / o.hi)
    }
}

/// Compares the parser against the double-double tree walk on a seeded corpus.
fn expression_corpus(seed: u64, cases: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut compared = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let at = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.0..1.0)];
        let (text, reference) = random_expression(&mut rng, 5, at[0], at[1], at[2]);
        let expr = parse_expr(&text).map_err(|e| format!("`{text}`: {e}"))?;
        let Some(reference) = reference else { continue };
        let r = reference.value.value();
        let scale = r.abs().max(1.0);
        // Skip samples whose conditioning lets honest f64 rounding exceed a
        // tenth of the tolerance.
        if !r.is_finite() || r.abs() > 1e12 || 4.0 * f64::EPSILON * reference.sensitivity > 1e-13 * scale {
            continue;
        }
        let ours = expr.eval(at[0], at[1], at[2]).map_err(|e| format!("`{text}`: {e}"))?;
        let rel = (ours - r).abs() / scale;
        worst = worst.max(rel);
        if rel > 1e-12 {
            return Ok((false, format!("`{text}` at {at:?}: {ours} vs reference {r}")));
        }
        compared += 1;
    }
    Ok((true, format!("{compared} of {cases} expressions well-conditioned, max relative deviation {worst:.1e}")))
}

fn invariant_checks(level: Level, seed: u64) -> Vec<CheckResult> {
    let cases = if level == Level::Quick { 500 } else { 5000 };
    vec![
        timed("fem: stiffness symmetric, zero row sums", stiffness_structure),
        timed("mesh: write/read round trip", mesh_round_trip),
        timed("surface: constants in the kernel", surface_kernel),
        timed("thin: flux compatibility", compatibility),
        timed("thick: dissipativity", dissipativity),
        timed("cli: config round trip", config_round_trip),
        timed("cli: expression evaluator vs reference", || expression_corpus(seed, cases)),
    ]
}

fn criterion_check(v: acceptance::Verdict, seconds: f64) -> CheckResult {
    CheckResult {
        name: format!("criterion {}: {}", v.id, v.name),
        passed: v.passed,
        detail: v.detail,
        seconds,
    }
}

/// Runs the suite. `bin` is the `capsim` executable used by the determinism
/// criterion. With `flip_stiffness` every stiffness assembly is negated.
pub fn verify(level: Level, seed: u64, bin: &Path, flip_stiffness: bool, mut progress: impl FnMut(&CheckResult)) -> Report {
    let body = |progress: &mut dyn FnMut(&CheckResult)| {
        let mut checks = Vec::new();
        for c in invariant_checks(level, seed) {
            progress(&c);
            checks.push(c);
        }
        let criteria: Vec<fn() -> acceptance::Verdict> = match level {
            Level::Quick => vec![
                acceptance::elliptic_convergence,
                acceptance::surface_operator,
                acceptance::constants_structure,
                acceptance::flux_compatibility,
                acceptance::rearrangement,
            ],
            Level::Full => vec![
                acceptance::elliptic_convergence,
                acceptance::surface_operator,
                acceptance::constants_structure,
                acceptance::flux_compatibility,
                acceptance::picard_contraction,
                acceptance::scheme_consistency,
                acceptance::energy_stability,
                acceptance::delta_limit,
                acceptance::concentration,
                acceptance::rearrangement,
            ],
        };
        for run in criteria {
            let start = Instant::now();
            let c = criterion_check(run(), start.elapsed().as_secs_f64());
            progress(&c);
            checks.push(c);
        }
        let start = Instant::now();
        let c = criterion_check(acceptance::determinism(bin), start.elapsed().as_secs_f64());
        progress(&c);
        checks.push(c);
        checks
    };
    let checks = if flip_stiffness {
        with_flipped_stiffness_sign(|| body(&mut progress))
    } else {
        body(&mut progress)
    };
    Report { level, seed, checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_double_is_more_accurate() {
        let third = Dd::from(1.0) / Dd::from(3.0);
        let back = third * Dd::from(3.0) - Dd::from(1.0);
        assert!(back.value().abs() < 1e-30);
        let big = Dd::from(1e16) + Dd::from(1.0) - Dd::from(1e16);
        assert_eq!(big.value(), 1.0);
    }

    #[test]
    fn corpus_agrees_with_reference() {
        let (ok, detail) = expression_corpus(DEFAULT_SEED, 300).unwrap();
        assert!(ok, "{detail}");
    }

    #[test]
    fn fault_injection_breaks_compatibility_and_dissipativity() {
        let (c, d) = with_flipped_stiffness_sign(|| (compatibility(), dissipativity()));
        assert!(!c.map(|r| r.0).unwrap_or(false));
        assert!(!d.map(|r| r.0).unwrap_or(false));
        assert!(compatibility().unwrap().0 && dissipativity().unwrap().0);
    }
}

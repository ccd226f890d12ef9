//! Run configuration: a JSON document with defaults for every field except
//! `problem`.
//!
//! ```json
//! {
//!   "problem": "thin",
//!   "mesh": { "n": 16, "boxes": [[0.25, 0.25, 0.75, 0.75]], "k": 1 },
//!   "physics": { "sigma_int": 1.0, "sigma_out": 1.0, "alpha": 1.0, "delta": 0.1 },
//!   "time": { "t_final": 0.1, "dt": 0.01, "scheme": "marching" },
//!   "f_expr": "sin(3*x)*(1-y)*(1+t)",
//!   "u0_expr": "x^2 - y"
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use capsim::linalg::SolverOptions;
use capsim::mesh::Rect;
use capsim::thick::{ThickConfig, ThickScheme};
use capsim::thin::{ThinConfig, ThinScheme};

use crate::error::CliError;
use crate::expr::{parse_expr, Expr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    Thin,
    Thick,
    Concentration,
    DeltaStudy,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::Thin => "thin",
            Problem::Thick => "thick",
            Problem::Concentration => "concentration",
            Problem::DeltaStudy => "delta_study",
        }
    }

    /// Whether the pipeline solves on a thickened mesh.
    pub fn uses_thick_mesh(self) -> bool {
        matches!(self, Problem::Thick | Problem::DeltaStudy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Marching,
    Picard,
    Implicit,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSpec {
    pub n: usize,
    /// Inclusions as `[x0, y0, x1, y1]`, corners on grid lines.
    pub boxes: Vec<[f64; 4]>,
    /// Membrane half-width in grid cells.
    pub k: usize,
}

impl Default for MeshSpec {
    fn default() -> Self {
        MeshSpec {
            n: 16,
            boxes: vec![[0.25, 0.25, 0.75, 0.75]],
            k: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Physics {
    pub sigma_int: f64,
    pub sigma_out: f64,
    pub alpha: f64,
    pub delta: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Physics {
            sigma_int: 1.0,
            sigma_out: 1.0,
            alpha: 1.0,
            delta: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSpec {
    pub t_final: f64,
    pub dt: f64,
    /// Defaults to `marching` for thin problems and `implicit` otherwise.
    pub scheme: Option<Scheme>,
    pub window: f64,
    pub picard_tol: f64,
    pub max_sweeps: usize,
    pub cg_tol: f64,
}

impl Default for TimeSpec {
    fn default() -> Self {
        TimeSpec {
            t_final: 0.1,
            dt: 0.01,
            scheme: None,
            window: 0.05,
            picard_tol: 1e-8,
            max_sweeps: 100,
            cg_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySpec {
    pub deltas: Vec<f64>,
    pub half_widths: Vec<usize>,
    /// Level indices compared in the concentration study; empty means the
    /// final level only.
    pub sample_steps: Vec<usize>,
}

impl Default for StudySpec {
    fn default() -> Self {
        StudySpec {
            deltas: vec![0.1, 0.01, 0.001],
            half_widths: vec![4, 2, 1],
            sample_steps: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// Directory for artifacts; `--out` takes precedence.
    pub dir: Option<String>,
    /// Times at which the bulk field is dumped.
    pub field_times: Vec<f64>,
}

fn default_f() -> String {
    "0".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Problem,
    #[serde(default)]
    pub mesh: MeshSpec,
    #[serde(default)]
    pub physics: Physics,
    #[serde(default)]
    pub time: TimeSpec,
    #[serde(default = "default_f")]
    pub f_expr: String,
    #[serde(default = "default_f")]
    pub u0_expr: String,
    #[serde(default)]
    pub study: StudySpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn new(problem: Problem) -> Self {
        RunConfig {
            problem,
            mesh: MeshSpec::default(),
            physics: Physics::default(),
            time: TimeSpec::default(),
            f_expr: default_f(),
            u0_expr: default_f(),
            study: StudySpec::default(),
            output: OutputSpec::default(),
        }
    }

    /// Parses, fills defaults and validates.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        let cfg = cfg.normalized();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Every optional field made explicit.
    pub fn normalized(mut self) -> Self {
        if self.time.scheme.is_none() {
            self.time.scheme = Some(self.default_scheme());
        }
        self
    }

    fn default_scheme(&self) -> Scheme {
        match self.problem {
            Problem::Thin => Scheme::Marching,
            _ => Scheme::Implicit,
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.time.scheme.unwrap_or_else(|| self.default_scheme())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let positive = [
            ("physics.sigma_int", self.physics.sigma_int),
            ("physics.sigma_out", self.physics.sigma_out),
            ("physics.alpha", self.physics.alpha),
            ("time.t_final", self.time.t_final),
            ("time.dt", self.time.dt),
            ("time.window", self.time.window),
            ("time.picard_tol", self.time.picard_tol),
            ("time.cg_tol", self.time.cg_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.physics.delta >= 0.0 && self.physics.delta.is_finite()) {
            return bad(format!("physics.delta must be non-negative, got {}", self.physics.delta));
        }
        if self.mesh.n < 2 {
            return bad(format!("mesh.n must be at least 2, got {}", self.mesh.n));
        }
        if self.mesh.boxes.is_empty() {
            return bad("mesh.boxes must contain at least one inclusion".into());
        }
        if self.problem.uses_thick_mesh() && self.mesh.k == 0 {
            return bad("mesh.k must be at least 1 for thick problems".into());
        }
        if self.time.max_sweeps == 0 {
            return bad("time.max_sweeps must be at least 1".into());
        }
        let scheme = self.scheme();
        let allowed: &[Scheme] = match self.problem {
            Problem::Thin => &[Scheme::Marching, Scheme::Picard],
            Problem::Thick => &[Scheme::Implicit, Scheme::Explicit, Scheme::Picard],
            Problem::Concentration | Problem::DeltaStudy => &[Scheme::Implicit],
        };
        if !allowed.contains(&scheme) {
            return bad(format!("scheme {scheme:?} is not available for problem {}", self.problem.name()));
        }
        if self.problem == Problem::Thick && scheme == Scheme::Explicit && self.physics.delta == 0.0 {
            return bad("the explicit scheme needs delta > 0".into());
        }
        match self.problem {
            Problem::Thin | Problem::Concentration => self.thin_config().validate(),
            Problem::Thick | Problem::DeltaStudy => self.thick_config().validate(),
        }
        .map_err(|e| CliError::Config(e.to_string()))?;
        if self.problem == Problem::DeltaStudy
            && (self.study.deltas.is_empty() || self.study.deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())))
        {
            return bad("study.deltas must be a non-empty list of positive numbers".into());
        }
        if self.problem == Problem::Concentration && (self.study.half_widths.is_empty() || self.study.half_widths.contains(&0)) {
            return bad("study.half_widths must be a non-empty list of positive integers".into());
        }
        self.source()?;
        self.initial()?;
        Ok(())
    }

    pub fn boxes(&self) -> Vec<Rect> {
        self.mesh.boxes.iter().map(|b| Rect::new(b[0], b[1], b[2], b[3])).collect()
    }

    pub fn source(&self) -> Result<Expr, CliError> {
        parse_expr(&self.f_expr).map_err(|e| CliError::Config(format!("f_expr: {e}")))
    }

    pub fn initial(&self) -> Result<Expr, CliError> {
        parse_expr(&self.u0_expr).map_err(|e| CliError::Config(format!("u0_expr: {e}")))
    }

    fn solver(&self) -> SolverOptions {
        SolverOptions::default().with_tol(self.time.cg_tol)
    }

    pub fn thin_config(&self) -> ThinConfig {
        ThinConfig {
            scheme: if self.scheme() == Scheme::Picard { ThinScheme::Picard } else { ThinScheme::Marching },
            dt: self.time.dt,
            t_final: self.time.t_final,
            window: self.time.window,
            picard_tol: self.time.picard_tol,
            max_sweeps: self.time.max_sweeps,
            alpha: self.physics.alpha,
            sigma_int: self.physics.sigma_int,
            sigma_out: self.physics.sigma_out,
            solver: self.solver(),
            keep_fields: !self.output.field_times.is_empty(),
        }
    }

    pub fn thick_config(&self) -> ThickConfig {
        ThickConfig {
            scheme: match self.scheme() {
                Scheme::Explicit => ThickScheme::Explicit,
                Scheme::Picard => ThickScheme::Picard,
                _ => ThickScheme::Implicit,
            },
            delta: self.physics.delta,
            alpha: self.physics.alpha,
            sigma_int: self.physics.sigma_int,
            sigma_out: self.physics.sigma_out,
            dt: self.time.dt,
            t_final: self.time.t_final,
            concentrated: false,
            window: self.time.window,
            picard_tol: self.time.picard_tol,
            max_sweeps: self.time.max_sweeps,
            solver: self.solver(),
        }
    }
}

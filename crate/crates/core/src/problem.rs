//! Problem files: a TOML document naming the equation, its domain and weight,
//! solver settings and a list of tasks.
//!
//! ```toml
//! [domain]
//! T0 = 0.3
//! R0 = 1.0
//! rho0 = 1.0
//!
//! [weight]
//! form = "power"          # power | sqrt | inverse-log-square
//! p = 1.0
//!
//! [equation]
//! a = "x*t"
//! lambda = "3"
//! b = "0"
//! nonlinear = [{ j = 0, alpha = 2, coeff = "1" }]
//! # or: full_F = "x*t + 3*z1 + z2^2"
//!
//! [solver]
//! tol = 1e-10
//! grid = [48, 64]
//!
//! [[tasks]]
//! kind = "family"
//! psi = [0.0, 1.0]
//! ```

use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::parse_expr;
use crate::field::validate_a2_a3;
use crate::field::{check_conditions, normal_form_symbolic, ConditionReport, EquationSpec, Monomial, ScalarField, WeightFn};
use crate::germ::HoloGerm;
use crate::grid::PicardConfig;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub domain: Domain,
    pub weight: Option<WeightSection>,
    pub equation: EquationSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub tasks: Vec<Task>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    #[serde(rename = "T0")]
    pub t0: f64,
    #[serde(rename = "R0")]
    pub r0: f64,
    pub rho0: f64,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum WeightName {
    Power,
    Sqrt,
    InverseLogSquare,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSection {
    pub form: WeightName,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonomialEntry {
    pub j: u32,
    pub alpha: u32,
    pub coeff: String,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquationSection {
    pub a: Option<String>,
    pub lambda: Option<String>,
    pub b: Option<String>,
    pub nonlinear: Option<Vec<MonomialEntry>>,
    #[serde(rename = "full_F")]
    pub full_f: Option<String>,
    /// the exponent μ of |a| ≤ A t^μ, when known
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub tol: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub grid: Option<[usize; 2]>,
    pub t_lo: Option<f64>,
    pub max_iter: Option<usize>,
    pub shrink_budget: Option<usize>,
    pub j_max: Option<usize>,
    pub alpha_max: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Task {
    Solve {
        id: Option<String>,
    },
    Family {
        id: Option<String>,
        #[serde(default)]
        psi: Vec<f64>,
    },
    Classify {
        id: Option<String>,
        candidate: Option<String>,
    },
    Verify {
        id: Option<String>,
        candidate: String,
    },
}

impl Task {
    pub fn kind(&self) -> &'static str {
        match self {
            Task::Solve { .. } => "solve",
            Task::Family { .. } => "family",
            Task::Classify { .. } => "classify",
            Task::Verify { .. } => "verify",
        }
    }

    /// The given id, else `<kind>-<index>`.
    pub fn id(&self, index: usize) -> String {
        let id = match self {
            Task::Solve { id } | Task::Family { id, .. } | Task::Classify { id, .. } | Task::Verify { id, .. } => id,
        };
        id.clone().unwrap_or_else(|| format!("{}-{index}", self.kind()))
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub spec: EquationSpec,
    pub tasks: Vec<Task>,
    pub conditions: ConditionReport,
    pub picard: PicardConfig,
    /// truncation order for series solutions
    pub k: usize,
    /// textual summary of the equation
    pub summary: String,
}

/// Coefficients of ψ as a germ.
pub fn psi_germ(psi: &[f64]) -> HoloGerm {
    HoloGerm::from_real(psi)
}

pub fn load_problem(path: &Path) -> Result<Problem> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Problem(format!("{}: {e}", path.display())))?;
    parse_problem(&text)
}

pub fn parse_problem(text: &str) -> Result<Problem> {
    let file: ProblemFile = toml::from_str(text).map_err(|e| Error::Problem(e.to_string()))?;
    build(file)
}

fn field(text: &str, t0: f64, r0: f64) -> Result<ScalarField> {
    ScalarField::parse(text, t0, r0)
}

fn build(file: ProblemFile) -> Result<Problem> {
    let d = &file.domain;
    if !(d.t0 > 0.0 && d.t0 < 1.0) {
        return Err(Error::spec("A1", format!("T0 = {} must lie in (0, 1)", d.t0)));
    }
    if !(d.r0 > 0.0 && d.rho0 > 0.0) {
        return Err(Error::spec("A1", "R0 and rho0 must be positive"));
    }
    let weight = match &file.weight {
        None => WeightFn::power(file.equation.mu.unwrap_or(1.0), d.t0),
        Some(w) => match w.form {
            WeightName::Power => {
                let p = w.p.ok_or_else(|| Error::Problem("power weight needs p".into()))?;
                if !(p > 0.0) {
                    return Err(Error::spec("weight", format!("power p = {p} must be positive")));
                }
                WeightFn::power(p, d.t0)
            }
            WeightName::Sqrt => WeightFn::sqrt(d.t0),
            WeightName::InverseLogSquare => WeightFn::inverse_log_square(d.t0),
        },
    };
    weight.validate().map_err(|e| Error::spec("weight", e.to_string()))?;

    let eq = &file.equation;
    let parts = eq.a.is_some() || eq.lambda.is_some() || eq.b.is_some() || eq.nonlinear.is_some();
    let (mut spec, summary) = match (&eq.full_f, parts) {
        (Some(_), true) => return Err(Error::Problem("give either full_F or a/lambda/b/nonlinear, not both".into())),
        (None, false) => return Err(Error::Problem("the equation section is empty".into())),
        (Some(f), false) => {
            let expr = parse_expr(f)?;
            let nf = normal_form_symbolic(
                &expr,
                d.t0,
                d.r0,
                d.rho0,
                file.solver.j_max.unwrap_or(4),
                file.solver.alpha_max.unwrap_or(4),
                weight,
            )?;
            (nf.spec, format!("t u_t = {f}"))
        }
        (None, true) => {
            let (a, lam, b) =
                (eq.a.as_deref().unwrap_or("0"), eq.lambda.as_deref().unwrap_or("0"), eq.b.as_deref().unwrap_or("0"));
            let mut nonlinear = Vec::new();
            let mut summary = format!("t u_t = ({a}) + ({lam}) u + ({b}) u_x");
            for m in eq.nonlinear.iter().flatten() {
                if m.j + m.alpha < 2 {
                    return Err(Error::Problem(format!("nonlinear term (j, alpha) = ({}, {}) has degree below 2", m.j, m.alpha)));
                }
                summary.push_str(&format!(" + ({}) u^{} u_x^{}", m.coeff, m.j, m.alpha));
                nonlinear.push(Monomial { j: m.j, alpha: m.alpha, coeff: field(&m.coeff, d.t0, d.r0)? });
            }
            let spec = EquationSpec::new(
                field(a, d.t0, d.r0)?,
                field(lam, d.t0, d.r0)?,
                field(b, d.t0, d.r0)?,
                nonlinear,
                d.t0,
                d.r0,
                d.rho0,
                weight,
            );
            (spec, summary)
        }
    };
    if let Some(mu) = eq.mu {
        if !(mu > 0.0) {
            return Err(Error::spec("c1", format!("mu = {mu} must be positive")));
        }
        spec = spec.with_mu(mu);
    }

    let t = 0.5 * d.t0;
    for (name, f) in [("a", &spec.a), ("lambda", &spec.lambda), ("b", &spec.b)] {
        if !f.holomorphy_check(t, 0.5 * d.r0) {
            return Err(Error::spec("A1", format!("{name} is not holomorphic in x")));
        }
    }
    validate_a2_a3(&spec)?;
    let conditions = check_conditions(&spec);
    if let Some(c) = conditions.failures().first() {
        return Err(Error::spec(c, format!("growth condition {c} fails: {conditions:?}")));
    }
    let needs_positive = file.tasks.iter().any(|t| matches!(t, Task::Family { .. } | Task::Solve { .. }));
    if needs_positive {
        let l = spec.lambda00()?;
        if !(l.re > 0.0) {
            return Err(Error::spec("Re λ(0,0) > 0", format!("λ(0,0) = {l}")));
        }
    }

    let s = &file.solver;
    let mut picard = PicardConfig::default();
    if let Some(v) = s.tol {
        picard.tol = v;
    }
    if let Some([nt, nx]) = s.grid {
        picard.n_t = nt;
        picard.n_x = nx;
    }
    if let Some(v) = s.t_lo {
        picard.t_lo = v;
    }
    if let Some(v) = s.max_iter {
        picard.max_iter = v;
    }
    if let Some(v) = s.shrink_budget {
        picard.shrink_budget = v;
    }
    Ok(Problem { spec, tasks: file.tasks, conditions, picard, k: s.k.unwrap_or(12), summary })
}

/// Candidate solutions given as expressions in t and x.
pub fn parse_candidate(text: &str, spec: &EquationSpec) -> Result<ScalarField> {
    let e = parse_expr(text)?;
    if e.depends_on(crate::expr::Var::Z1) || e.depends_on(crate::expr::Var::Z2) {
        return Err(Error::Problem("a candidate may only use t and x".into()));
    }
    Ok(ScalarField::from_expr(&e, spec.t0, spec.r0))
}

impl Problem {
    /// λ(0,0), for reports.
    pub fn lambda00(&self) -> Option<C64> {
        self.spec.lambda00().ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX25: &str = r#"
[domain]
T0 = 0.3
R0 = 1.0
rho0 = 1.0

[weight]
form = "power"
p = 1.0

[equation]
a = "x*t"
lambda = "3"
b = "0"
nonlinear = [{ j = 0, alpha = 2, coeff = "1" }]

[[tasks]]
kind = "solve"
"#;

    #[test]
    fn accepts_the_quadratic_gradient_file() {
        let p = parse_problem(EX25).unwrap();
        assert!(p.conditions.all_ok());
        assert_eq!(p.tasks, vec![Task::Solve { id: None }]);
        assert_eq!(p.spec.nonlinear.len(), 1);
    }

    #[test]
    fn rejects_nonvanishing_source() {
        let text = EX25.replace("a = \"x*t\"", "a = \"x\"");
        match parse_problem(&text) {
            Err(Error::SpecInvalid { assumption, .. }) => assert_eq!(assumption, "A2"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn full_form_agrees_with_parts() {
        let text = EX25.replace(
            "a = \"x*t\"\nlambda = \"3\"\nb = \"0\"\nnonlinear = [{ j = 0, alpha = 2, coeff = \"1\" }]",
            "full_F = \"x*t + 3*z1 + z2^2\"",
        );
        let p = parse_problem(&text).unwrap();
        let q = parse_problem(EX25).unwrap();
        let (t, x, z1, z2) = (0.1, C64::new(0.2, 0.1), C64::new(0.3, -0.2), C64::new(-0.1, 0.4));
        assert!((p.spec.f(t, x, z1, z2) - q.spec.f(t, x, z1, z2)).norm() < 1e-12);
    }

    #[test]
    fn counterexample_with_classify_task() {
        let text = r#"
[domain]
T0 = 0.3
R0 = 1.0
rho0 = 1.0

[equation]
lambda = "1"
nonlinear = [{ j = 0, alpha = 2, coeff = "-1" }]

[[tasks]]
kind = "classify"
candidate = "x^2/4"
"#;
        let p = parse_problem(text).unwrap();
        assert_eq!(p.tasks[0].id(0), "classify-0");
    }

    #[test]
    fn malformed_files() {
        assert!(matches!(parse_problem("[domain]\nT0 = 2.0\nR0 = 1\nrho0 = 1\n[equation]\nlambda = \"1\""), Err(Error::SpecInvalid { .. })));
        assert!(matches!(parse_problem("nonsense"), Err(Error::Problem(_))));
        let both = EX25.replace("b = \"0\"", "b = \"0\"\nfull_F = \"z1\"");
        assert!(matches!(parse_problem(&both), Err(Error::Problem(_))));
        let neg = EX25.replace("lambda = \"3\"", "lambda = \"-1\"");
        assert!(matches!(parse_problem(&neg), Err(Error::SpecInvalid { .. })));
    }
}

//! Evaluable solutions u(t, x) with the claims attached to them.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::field::{deriv_x, ScalarField};

pub type Eval = Arc<dyn Fn(f64, C64) -> C64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ExactFormula,
    Series,
    Picard,
    Sum,
}

/// The d of X₁^d claimed for a solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "d", rename_all = "kebab-case")]
pub enum Exponent {
    /// max(|u|, |u_x|) ≤ C t^d
    Exact(f64),
    /// in X₁^a for every a < d (the class X₁^{(d)})
    JustBelow(f64),
    /// identically zero
    Infinite,
}

impl Exponent {
    pub fn value(&self) -> f64 {
        match self {
            Exponent::Exact(d) | Exponent::JustBelow(d) => *d,
            Exponent::Infinite => f64::INFINITY,
        }
    }

    pub fn min(self, o: Exponent) -> Exponent {
        match (self, o) {
            (Exponent::Infinite, e) | (e, Exponent::Infinite) => e,
            (a, b) if a.value() < b.value() => a,
            (a, b) if b.value() < a.value() => b,
            (Exponent::JustBelow(d), _) | (_, Exponent::JustBelow(d)) => Exponent::JustBelow(d),
            (a, _) => a,
        }
    }
}

/// Solver diagnostics carried along with a handle.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub contraction_ratios: Vec<f64>,
    pub shrink_rounds: usize,
    pub notes: Vec<String>,
}

#[derive(Clone)]
pub struct SolutionHandle {
    eval: Eval,
    deriv: Option<Eval>,
    pub t_max: f64,
    pub x_radius: f64,
    pub provenance: Provenance,
    pub claimed_exponent: Exponent,
    pub tolerance: f64,
    pub diagnostics: Diagnostics,
}

impl fmt::Debug for SolutionHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SolutionHandle")
            .field("t_max", &self.t_max)
            .field("x_radius", &self.x_radius)
            .field("provenance", &self.provenance)
            .field("claimed_exponent", &self.claimed_exponent)
            .field("tolerance", &self.tolerance)
            .finish()
    }
}

impl SolutionHandle {
    pub fn new(
        eval: impl Fn(f64, C64) -> C64 + Send + Sync + 'static,
        t_max: f64,
        x_radius: f64,
        provenance: Provenance,
        claimed_exponent: Exponent,
        tolerance: f64,
    ) -> Self {
        SolutionHandle {
            eval: Arc::new(eval),
            deriv: None,
            t_max,
            x_radius,
            provenance,
            claimed_exponent,
            tolerance,
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn with_deriv(mut self, d: impl Fn(f64, C64) -> C64 + Send + Sync + 'static) -> Self {
        self.deriv = Some(Arc::new(d));
        self
    }

    pub fn with_diagnostics(mut self, d: Diagnostics) -> Self {
        self.diagnostics = d;
        self
    }

    pub fn zero(t_max: f64, x_radius: f64) -> Self {
        Self::new(|_, _| C64::new(0.0, 0.0), t_max, x_radius, Provenance::ExactFormula, Exponent::Infinite, 0.0)
            .with_deriv(|_, _| C64::new(0.0, 0.0))
    }

    /// Handle for an expression in t and x (exact formula, symbolic ∂_x).
    pub fn from_field(f: &ScalarField, claimed: Exponent) -> Self {
        let d = f.dx();
        let g = f.clone();
        Self::new(move |t, x| g.eval(t, x), f.t_max, f.x_radius, Provenance::ExactFormula, claimed, 1e-12)
            .with_deriv(move |t, x| d.eval(t, x))
    }

    #[inline]
    pub fn eval(&self, t: f64, x: C64) -> C64 {
        (self.eval)(t, x)
    }

    pub fn evaluator(&self) -> Eval {
        self.eval.clone()
    }

    pub fn has_deriv(&self) -> bool {
        self.deriv.is_some()
    }

    /// ∂_x u: the supplied derivative, else a Cauchy integral.
    pub fn eval_dx(&self, t: f64, x: C64) -> C64 {
        match &self.deriv {
            Some(d) => d(t, x),
            None => deriv_x(&self.as_field(), t, x, 1).unwrap_or(C64::new(f64::NAN, f64::NAN)),
        }
    }

    pub fn as_field(&self) -> ScalarField {
        let e = self.eval.clone();
        ScalarField::new(move |t, x| e(t, x), self.t_max, self.x_radius)
    }

    /// Pointwise sum; the claimed exponent is the weaker of the two.
    pub fn add(&self, o: &SolutionHandle) -> SolutionHandle {
        let (f, g) = (self.eval.clone(), o.eval.clone());
        let mut h = SolutionHandle::new(
            move |t, x| f(t, x) + g(t, x),
            self.t_max.min(o.t_max),
            self.x_radius.min(o.x_radius),
            Provenance::Sum,
            self.claimed_exponent.min(o.claimed_exponent),
            self.tolerance + o.tolerance,
        );
        if let (Some(a), Some(b)) = (self.deriv.clone(), o.deriv.clone()) {
            h = h.with_deriv(move |t, x| a(t, x) + b(t, x));
        }
        h
    }

    pub fn scale(&self, c: C64) -> SolutionHandle {
        let f = self.eval.clone();
        let mut h = SolutionHandle { eval: Arc::new(move |t, x| f(t, x) * c), deriv: None, ..self.clone() };
        if let Some(d) = self.deriv.clone() {
            h.deriv = Some(Arc::new(move |t, x| d(t, x) * c));
        }
        h
    }
}

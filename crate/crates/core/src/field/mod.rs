//! Coefficient fields f(t, x), continuous in t > 0 and holomorphic in x, and
//! the equation in normal form t·u_t = a + λu + b·u_x + R(t, x, u, u_x).

mod conditions;
mod normal_form;
mod residual;
mod weight;

use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64 as C64;

pub use conditions::{check_conditions, check_vanishing_at_zero, ConditionReport};
pub use normal_form::{normal_form, normal_form_symbolic, NormalForm};
pub(crate) use normal_form::validate_a2_a3;
pub use residual::{residual, ResidualGrid, ResidualReport};
pub use weight::{WeightFn, WeightForm};

use crate::error::{Error, Result};
use crate::expr::{Expr, Point, Program, Var};
use crate::germ::{circle_nodes, taylor_from_circle};
use crate::numerics::{aitken, contour_derivative};
use crate::tseries::TSeries;

/// Contour points used by [`deriv_x`].
pub const CONTOUR_POINTS: usize = 64;

pub type Evaluator = Arc<dyn Fn(f64, C64) -> C64 + Send + Sync>;

#[derive(Clone)]
pub struct ScalarField {
    f: Evaluator,
    pub t_max: f64,
    pub x_radius: f64,
    expr: Option<Expr>,
    constant: Option<C64>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.expr, self.constant) {
            (Some(e), _) => write!(f, "ScalarField({e})"),
            (None, Some(c)) => write!(f, "ScalarField({c})"),
            _ => write!(f, "ScalarField(<closure>)"),
        }
    }
}

impl ScalarField {
    pub fn new(f: impl Fn(f64, C64) -> C64 + Send + Sync + 'static, t_max: f64, x_radius: f64) -> Self {
        ScalarField { f: Arc::new(f), t_max, x_radius, expr: None, constant: None }
    }

    pub fn from_expr(e: &Expr, t_max: f64, x_radius: f64) -> Self {
        let constant = e.as_constant();
        let prog: Program = e.compile();
        ScalarField {
            f: Arc::new(move |t, x| prog.eval(&Point::tx(t, x))),
            t_max,
            x_radius,
            expr: Some(e.clone()),
            constant,
        }
    }

    pub fn parse(text: &str, t_max: f64, x_radius: f64) -> Result<Self> {
        Ok(Self::from_expr(&crate::expr::parse_expr(text)?, t_max, x_radius))
    }

    pub fn constant(c: C64, t_max: f64, x_radius: f64) -> Self {
        ScalarField {
            f: Arc::new(move |_, _| c),
            t_max,
            x_radius,
            expr: (c.im == 0.0).then(|| Expr::Num(c.re)),
            constant: Some(c),
        }
    }

    pub fn zero(t_max: f64, x_radius: f64) -> Self {
        Self::constant(C64::new(0.0, 0.0), t_max, x_radius)
    }

    #[inline]
    pub fn eval(&self, t: f64, x: C64) -> C64 {
        (self.f)(t, x)
    }

    pub fn evaluator(&self) -> Evaluator {
        self.f.clone()
    }

    pub fn expr(&self) -> Option<&Expr> {
        self.expr.as_ref()
    }

    pub fn as_constant(&self) -> Option<C64> {
        self.constant
    }

    /// Known to vanish identically (a literal zero, not a numerical test).
    pub fn is_zero(&self) -> bool {
        self.constant == Some(C64::new(0.0, 0.0))
    }

    pub fn with_domain(&self, t_max: f64, x_radius: f64) -> Self {
        ScalarField { t_max, x_radius, ..self.clone() }
    }

    /// Expansion in powers of t and log t, when the field came from an
    /// expression in t and x.
    pub fn tseries(&self, cap: f64) -> Option<TSeries> {
        if let Some(c) = self.constant {
            return Some(TSeries::constant(c));
        }
        TSeries::from_expr(self.expr.as_ref()?, cap).ok()
    }

    /// ∂_x as a field: symbolic when an expression is known, otherwise by
    /// Cauchy integrals.
    pub fn dx(&self) -> Self {
        if self.constant.is_some() {
            return Self::zero(self.t_max, self.x_radius);
        }
        if let Some(e) = &self.expr {
            return Self::from_expr(&e.diff(Var::X), self.t_max, self.x_radius);
        }
        let me = self.clone();
        ScalarField::new(move |t, x| deriv_x(&me, t, x, 1).unwrap_or(C64::new(f64::NAN, f64::NAN)), self.t_max, self.x_radius)
    }

    pub fn add(&self, o: &Self) -> Self {
        self.combine(o, |a, b| a + b, |a, b| Expr::Add(Box::new(a), Box::new(b)))
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.combine(o, |a, b| a - b, |a, b| Expr::Sub(Box::new(a), Box::new(b)))
    }

    pub fn mul(&self, o: &Self) -> Self {
        self.combine(o, |a, b| a * b, |a, b| Expr::Mul(Box::new(a), Box::new(b)))
    }

    fn combine(&self, o: &Self, op: fn(C64, C64) -> C64, sym: fn(Expr, Expr) -> Expr) -> Self {
        let t_max = self.t_max.min(o.t_max);
        let x_radius = self.x_radius.min(o.x_radius);
        if let (Some(a), Some(b)) = (self.constant, o.constant) {
            return Self::constant(op(a, b), t_max, x_radius);
        }
        if let (Some(a), Some(b)) = (&self.expr, &o.expr) {
            return Self::from_expr(&sym(a.clone(), b.clone()), t_max, x_radius);
        }
        let (f, g) = (self.f.clone(), o.f.clone());
        ScalarField::new(move |t, x| op(f(t, x), g(t, x)), t_max, x_radius)
    }

    pub fn scale(&self, s: C64) -> Self {
        self.mul(&Self::constant(s, self.t_max, self.x_radius))
    }

    /// Sup of |f(t, ·)| on the circle |x| = r (the disc sup by maximum modulus).
    pub fn sup_on_circle(&self, t: f64, r: f64, m: usize) -> f64 {
        circle_nodes(m, r, C64::new(0.0, 0.0)).into_iter().map(|x| self.eval(t, x).norm()).fold(0.0, f64::max)
    }

    /// Taylor coefficients in x of f(t, ·) from circle samples.
    pub fn taylor_at(&self, t: f64, rho: f64, m: usize) -> Vec<C64> {
        let samples: Vec<C64> = circle_nodes(m, rho, C64::new(0.0, 0.0)).into_iter().map(|x| self.eval(t, x)).collect();
        taylor_from_circle(&samples, rho, 1e-15)
    }

    /// Holomorphy diagnostic: on the circle |x| = rho the samples of f(t, ·)
    /// carry no negative Fourier modes beyond round-off.
    pub fn holomorphy_check(&self, t: f64, rho: f64) -> bool {
        let m = CONTOUR_POINTS;
        let samples: Vec<C64> = circle_nodes(m, rho, C64::new(0.0, 0.0)).into_iter().map(|x| self.eval(t, x)).collect();
        let spec = crate::germ::dft(&samples);
        let big = spec.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let neg = spec[m / 2 + 1..].iter().map(|z| z.norm()).fold(0.0, f64::max);
        neg <= 1e-8 * big
    }

    /// Germ of f(0, ·) at x = 0. Exact from the expansion in t when available,
    /// otherwise the Aitken-accelerated limit along t_k = 2^{−k}.
    pub fn limit_at_zero(&self, rho: f64) -> Result<Vec<C64>> {
        if let Some(s) = self.tseries(1.0) {
            let bad = s.terms().any(|(e, k, g)| (e < 0.0 || (e == 0.0 && k > 0)) && g.iter().any(|c| c.norm() > 0.0));
            if bad {
                return Err(Error::Domain("field has no finite limit as t → 0".into()));
            }
            return Ok(s.coeff(0.0, 0));
        }
        let m = CONTOUR_POINTS;
        let xs = circle_nodes(m, rho, C64::new(0.0, 0.0));
        let ks = [36, 38, 40];
        let rows: Vec<Vec<C64>> =
            ks.iter().map(|k| xs.iter().map(|x| self.eval(2f64.powi(-k), *x)).collect()).collect();
        let samples: Vec<C64> = (0..m).map(|i| aitken(rows[0][i], rows[1][i], rows[2][i])).collect();
        Ok(taylor_from_circle(&samples, rho, 1e-15))
    }
}

/// order-th x-derivative of f(t, ·) at x by the trapezoid rule on the Cauchy
/// integral (M = 64 points, radius half the remaining margin).
pub fn deriv_x(f: &ScalarField, t: f64, x: C64, order: u32) -> Result<C64> {
    if !(t > 0.0 && t <= f.t_max * (1.0 + 1e-12)) {
        return Err(Error::Domain(format!("t = {t} outside (0, {}]", f.t_max)));
    }
    let margin = f.x_radius - x.norm();
    if margin <= 0.0 {
        return Err(Error::Domain(format!("contour around {x} leaves the disc of radius {}", f.x_radius)));
    }
    deriv_x_with(|z| f.eval(t, z), x, order, CONTOUR_POINTS, (0.5 * margin).min(0.5))
}

pub fn deriv_x_with<F: Fn(C64) -> C64>(f: F, x: C64, order: u32, m: usize, rho: f64) -> Result<C64> {
    contour_derivative(f, x, order, m, rho)
}

/// A term a_{jα}(t, x)·z1^j·z2^α of R.
#[derive(Debug, Clone)]
pub struct Monomial {
    pub j: u32,
    pub alpha: u32,
    pub coeff: ScalarField,
}

#[derive(Debug, Clone)]
pub struct EquationSpec {
    pub a: ScalarField,
    pub lambda: ScalarField,
    pub b: ScalarField,
    pub nonlinear: Vec<Monomial>,
    pub t0: f64,
    pub r0: f64,
    pub rho0: f64,
    pub weight: WeightFn,
    /// Exponent μ of condition c1 (|a| ≤ A t^μ), when known.
    pub mu: Option<f64>,
    lambda0: OnceLock<std::result::Result<Vec<C64>, Error>>,
}

impl EquationSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: ScalarField,
        lambda: ScalarField,
        b: ScalarField,
        nonlinear: Vec<Monomial>,
        t0: f64,
        r0: f64,
        rho0: f64,
        weight: WeightFn,
    ) -> Self {
        let nonlinear = nonlinear.into_iter().filter(|m| !m.coeff.is_zero()).collect();
        EquationSpec { a, lambda, b, nonlinear, t0, r0, rho0, weight, mu: None, lambda0: OnceLock::new() }
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = Some(mu);
        self
    }

    /// t u_t = x t^μ + λ u + (u_x)², with weight μ(t) = t^μ.
    pub fn quadratic_gradient(lambda: f64, mu: f64) -> Self {
        let (t0, r0) = (0.3, 1.0);
        let a = ScalarField::from_expr(
            &Expr::Mul(Box::new(Expr::Var(Var::X)), Box::new(Expr::Pow(Box::new(Expr::Var(Var::T)), mu))),
            t0,
            r0,
        );
        EquationSpec::new(
            a,
            ScalarField::constant(C64::new(lambda, 0.0), t0, r0),
            ScalarField::zero(t0, r0),
            vec![Monomial { j: 0, alpha: 2, coeff: ScalarField::constant(C64::new(1.0, 0.0), t0, r0) }],
            t0,
            r0,
            1.0,
            WeightFn::power(mu, t0),
        )
        .with_mu(mu)
    }

    /// t u_t = u − (u_x)², which has the solution x²/4.
    pub fn quadratic_counterexample() -> Self {
        let (t0, r0) = (0.3, 1.0);
        EquationSpec::new(
            ScalarField::zero(t0, r0),
            ScalarField::constant(C64::new(1.0, 0.0), t0, r0),
            ScalarField::zero(t0, r0),
            vec![Monomial { j: 0, alpha: 2, coeff: ScalarField::constant(C64::new(-1.0, 0.0), t0, r0) }],
            t0,
            r0,
            1.0,
            WeightFn::power(1.0, t0),
        )
    }

    /// The nonlinear part R(t, x, z1, z2).
    pub fn r(&self, t: f64, x: C64, z1: C64, z2: C64) -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for m in &self.nonlinear {
            s += m.coeff.eval(t, x) * z1.powu(m.j) * z2.powu(m.alpha);
        }
        s
    }

    /// F(t, x, z1, z2) = a + λ z1 + b z2 + R.
    pub fn f(&self, t: f64, x: C64, z1: C64, z2: C64) -> C64 {
        self.a.eval(t, x) + self.lambda.eval(t, x) * z1 + self.b.eval(t, x) * z2 + self.r(t, x, z1, z2)
    }

    /// Taylor coefficients of λ(0, x) at x = 0.
    pub fn lambda0_germ(&self) -> Result<Vec<C64>> {
        self.lambda0.get_or_init(|| self.lambda.limit_at_zero(0.5 * self.r0)).clone()
    }

    pub fn lambda00(&self) -> Result<C64> {
        Ok(self.lambda0_germ()?.first().copied().unwrap_or_default())
    }

    pub fn is_homogeneous(&self) -> bool {
        self.a.is_zero()
    }

    /// Largest total degree j + α present in R.
    pub fn nonlinear_degree(&self) -> u32 {
        self.nonlinear.iter().map(|m| m.j + m.alpha).max().unwrap_or(0)
    }

    /// Copy with a new domain.
    pub fn restricted(&self, t0: f64, r0: f64) -> Self {
        let mut s = self.clone();
        s.t0 = t0;
        s.r0 = r0;
        s
    }
}

//! Series constructions: the explicit ψ-family of the quadratic-gradient
//! equation, its closed-form base solutions, and the finite reduction ladder
//! u = u₁ + … + u_N + w.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::field::{EquationSpec, Monomial, ScalarField, WeightFn};
use crate::germ::{convolve, HoloGerm, WORKING_DEGREE};
use crate::numerics::{binom, integrate_to_neg_infinity};
use crate::solution::{Exponent, Provenance, SolutionHandle};
use crate::tseries::{invert_euler_series, TSeries};

const RESONANCE_TOL: f64 = 1e-9;

/// ψ₀…ψ_K for W = Σ ψ_k(η + x)·t^{(k+1)λ}:
/// ψ_k = (1/(kλ))·Σ_{i+j=k−1} ψ_i′·ψ_j′.
pub fn psi_recurrence(psi0: &HoloGerm, lambda: C64, k_max: usize) -> Result<Vec<HoloGerm>> {
    if lambda.norm() == 0.0 {
        return Err(Error::Division("λ = 0 in the ψ recurrence".into()));
    }
    let mut psis = vec![psi0.clone()];
    let mut derivs = vec![psi0.derivative()];
    for k in 1..=k_max {
        let mut acc = vec![C64::new(0.0, 0.0); 0];
        let mut radius = f64::INFINITY;
        for i in 0..k {
            let j = k - 1 - i;
            let p = convolve(&derivs[i].coeffs, &derivs[j].coeffs, WORKING_DEGREE);
            if acc.len() < p.len() {
                acc.resize(p.len(), C64::new(0.0, 0.0));
            }
            for (a, c) in acc.iter_mut().zip(&p) {
                *a += c;
            }
            radius = radius.min(derivs[i].radius).min(derivs[j].radius);
        }
        let s = 1.0 / (lambda * k as f64);
        let g = HoloGerm::new(acc.into_iter().map(|c| c * s).collect(), radius);
        derivs.push(g.derivative());
        psis.push(g);
    }
    Ok(psis)
}

pub type TimeFn = Arc<dyn Fn(f64) -> C64 + Send + Sync>;

/// The truncated family W(ψ)(t,x) = Σ_{k≤K} ψ_k(η(t) + x)·t^{(k+1)λ}.
#[derive(Clone)]
pub struct SeriesSolution {
    pub lambda0: C64,
    pub eta: TimeFn,
    pub psis: Vec<HoloGerm>,
    pub k: usize,
}

impl std::fmt::Debug for SeriesSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SeriesSolution").field("lambda0", &self.lambda0).field("psis", &self.psis).field("k", &self.k).finish()
    }
}

impl SeriesSolution {
    pub fn eval_d(&self, t: f64, x: C64) -> (C64, C64) {
        let y = (self.eta)(t) + x;
        let tl = C64::new(t, 0.0).powc(self.lambda0);
        let mut tp = tl;
        let (mut v, mut d) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        for p in &self.psis {
            let (a, b) = p.eval_d(y);
            v += a * tp;
            d += b * tp;
            tp *= tl;
        }
        (v, d)
    }

    pub fn eval(&self, t: f64, x: C64) -> C64 {
        self.eval_d(t, x).0
    }

    /// sup_{|x|≤r} bound of each term at time t; decreasing bounds indicate
    /// the truncation is inside the convergence region.
    pub fn term_bounds(&self, t: f64, r: f64) -> Vec<f64> {
        let rl = self.lambda0.re;
        let shift = (self.eta)(t).norm();
        self.psis.iter().enumerate().map(|(k, p)| p.sup_bound(r + shift) * t.powf((k + 1) as f64 * rl)).collect()
    }

    pub fn handle(&self, t_max: f64, x_radius: f64) -> SolutionHandle {
        let (a, b) = (self.clone(), self.clone());
        SolutionHandle::new(
            move |t, x| a.eval(t, x),
            t_max,
            x_radius,
            Provenance::Series,
            if self.psis.iter().all(|p| p.is_zero()) { Exponent::Infinite } else { Exponent::Exact(self.lambda0.re) },
            1e-8,
        )
        .with_deriv(move |t, x| b.eval_d(t, x).1)
    }
}

/// ∫₀^t τ^{e−1}(log τ)^k dτ = t^e Σ_j (−1)^j k!/(k−j)!·(log t)^{k−j}/e^{j+1}.
fn log_power_primitive(e: f64, k: u32, t: f64) -> f64 {
    let l = t.ln();
    let mut acc = 0.0;
    let mut fall = 1.0;
    for j in 0..=k {
        if j > 0 {
            fall *= (k - j + 1) as f64;
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * fall * l.powi((k - j) as i32) / e.powi(j as i32 + 1);
    }
    t.powf(e) * acc
}

/// η(t) = ∫₀^t f(τ)/τ dτ: closed form when f expands as a finite series in
/// t and log t, quadrature otherwise.
pub fn drift_primitive(f: &ScalarField) -> Result<TimeFn> {
    if f.is_zero() {
        return Ok(Arc::new(|_| C64::new(0.0, 0.0)));
    }
    if let Some(s) = f.tseries(40.0).filter(|s| !s.truncated) {
        let mut terms = Vec::new();
        for (e, k, g) in s.terms() {
            if g.len() > 1 {
                return Err(Error::Precondition("the drift f must not depend on x".into()));
            }
            if e <= 0.0 {
                return Err(Error::Precondition(format!("∫₀ f(τ)/τ dτ diverges (term t^{e})")));
            }
            terms.push((e, k, g[0]));
        }
        return Ok(Arc::new(move |t| terms.iter().map(|(e, k, c)| c * log_power_primitive(*e, *k, t)).sum()));
    }
    let ff = f.evaluator();
    // f(τ) at τ = e^s, with the underflowed end contributing nothing
    fn body(ff: &crate::field::Evaluator, s: f64) -> C64 {
        let t = s.exp();
        if t > 0.0 { ff(t, C64::new(0.0, 0.0)) } else { C64::new(0.0, 0.0) }
    }
    // |f(e^σ)| must decay faster than 1/|σ|
    let (m1, m2) = (body(&ff, -350.0).norm(), body(&ff, -700.0).norm());
    if m2 > 0.0 && !((m1 / m2).ln() / 2f64.ln() > 1.0) {
        return Err(Error::Precondition("∫₀ f(τ)/τ dτ diverges".into()));
    }
    let probe = integrate_to_neg_infinity(|s| body(&ff, s), f.t_max.ln(), 1e-14, 1e-11);
    if !probe.as_ref().is_ok_and(|v| v.re.is_finite() && v.im.is_finite()) {
        return Err(Error::Precondition("∫₀ f(τ)/τ dτ diverges".into()));
    }
    Ok(Arc::new(move |t| {
        integrate_to_neg_infinity(|s| body(&ff, s), t.ln(), 1e-15, 1e-12).unwrap_or(C64::new(f64::NAN, 0.0))
    }))
}

/// The explicit family of t W_t = λW + f(t)W_x + (W_x)².
pub fn series_family(lambda: C64, f: &ScalarField, psi: &HoloGerm, k_max: usize) -> Result<SeriesSolution> {
    if lambda.re <= 0.0 {
        return Err(Error::Precondition(format!("Re λ = {} must be positive", lambda.re)));
    }
    let eta = drift_primitive(f)?;
    let psis = psi_recurrence(psi, lambda, k_max)?;
    Ok(SeriesSolution { lambda0: lambda, eta, psis, k: k_max })
}

fn cnum(c: C64) -> Expr {
    match (c.re, c.im) {
        (re, im) if im == 0.0 => Expr::Num(re),
        (re, im) => Expr::Add(Box::new(Expr::Num(re)), Box::new(Expr::Mul(Box::new(Expr::Num(im)), Box::new(Expr::I)))),
    }
}

fn resonant(a: C64, b: f64) -> bool {
    (a - b).norm() < RESONANCE_TOL
}

/// The drift f(t) = 2∂_x u₀ of the equation reduced about the base solution
/// of t u_t = x t^μ + λu + (u_x)²: 2t^μ/(μ−λ), or 2t^μ log t when λ = μ.
pub fn quadratic_gradient_drift(lambda: C64, mu: f64, t_max: f64, x_radius: f64) -> ScalarField {
    let tp = Expr::Pow(Box::new(Expr::Var(Var::T)), mu);
    let e = if resonant(lambda, mu) {
        Expr::Mul(
            Box::new(Expr::Mul(Box::new(Expr::Num(2.0)), Box::new(tp))),
            Box::new(Expr::Func(crate::expr::Func::Log, Box::new(Expr::Var(Var::T)))),
        )
    } else {
        Expr::Mul(Box::new(cnum(2.0 / (C64::new(mu, 0.0) - lambda))), Box::new(tp))
    };
    ScalarField::from_expr(&e, t_max, x_radius)
}

/// Closed-form base solution of t u_t = x t^μ + λu + (u_x)², by case:
/// generic, λ = 2μ (one log), λ = μ (logs up to the square).
pub fn quadratic_gradient_u0(lambda: C64, mu: f64, t_max: f64, x_radius: f64) -> SolutionHandle {
    let m = C64::new(mu, 0.0);
    let eval_d: Arc<dyn Fn(f64, C64) -> (C64, C64) + Send + Sync> = if resonant(lambda, mu) {
        Arc::new(move |t: f64, x: C64| {
            let (l, tm) = (t.ln(), t.powf(mu));
            let t2 = tm * tm;
            let v = x * tm * l + t2 * (l * l / mu - 2.0 * l / (mu * mu) + 2.0 / (mu * mu * mu));
            (v, C64::new(tm * l, 0.0))
        })
    } else if resonant(lambda, 2.0 * mu) {
        let c = 1.0 / (m - lambda);
        Arc::new(move |t: f64, x: C64| {
            let tm = t.powf(mu);
            (x * tm * c + c * c * tm * tm * t.ln(), c * tm)
        })
    } else {
        let c = 1.0 / (m - lambda);
        let c2 = c * c / (2.0 * m - lambda);
        Arc::new(move |t: f64, x: C64| {
            let tm = t.powf(mu);
            (x * tm * c + c2 * tm * tm, c * tm)
        })
    };
    let claimed = if resonant(lambda, mu) { Exponent::JustBelow(mu) } else { Exponent::Exact(mu) };
    let d = eval_d.clone();
    SolutionHandle::new(move |t, x| eval_d(t, x).0, t_max, x_radius, Provenance::ExactFormula, claimed, 1e-8)
        .with_deriv(move |t, x| d(t, x).1)
}

/// Rung count and exponent step of the ladder: N = ⌊Re λ(0,0)/μ⌋ with d = μ,
/// or d = μ(1 − 1/(2N+2)) when the ratio is an integer, so that
/// N·d < Re λ(0,0) < (N+1)·d.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderChoice {
    pub n: usize,
    pub d: f64,
    /// (N+1)·d: the ladder removes every source exponent below this
    pub cap: f64,
    pub resonant: bool,
}

pub fn ladder_choice(re_lambda0: f64, mu: f64) -> LadderChoice {
    let q = re_lambda0 / mu;
    let k = q.round();
    if k >= 1.0 && (q - k).abs() < RESONANCE_TOL {
        let n = k as usize;
        let d = mu * (1.0 - 1.0 / (2 * n + 2) as f64);
        LadderChoice { n, d, cap: (n + 1) as f64 * d, resonant: true }
    } else {
        let n = q.floor().max(0.0) as usize;
        LadderChoice { n, d: mu, cap: (n + 1) as f64 * mu, resonant: false }
    }
}

/// Base (v, ∂_x v) of a shift.
pub type BaseFn = Arc<dyn Fn(f64, C64) -> (C64, C64) + Send + Sync>;

/// The equation for w = u − v: with c_{kβ} = Σ a_{jα} C(j,k) C(α,β) v^{j−k} v_x^{α−β},
/// λ' = λ + c₁₀, b' = b + c₀₁, R' = Σ_{k+β≥2} c_{kβ} z1^k z2^β and the given
/// inhomogeneity (the residual of v).
pub fn shifted_spec(spec: &EquationSpec, base: BaseFn, a_new: ScalarField, weight: WeightFn) -> EquationSpec {
    let (t0, r0) = (spec.t0, spec.r0);
    let monos: Arc<Vec<(u32, u32, ScalarField)>> =
        Arc::new(spec.nonlinear.iter().map(|m| (m.j, m.alpha, m.coeff.clone())).collect());
    let coupling = |k: u32, beta: u32| -> ScalarField {
        let (monos, base) = (monos.clone(), base.clone());
        ScalarField::new(
            move |t, x| {
                let (v, vx) = base(t, x);
                let mut s = C64::new(0.0, 0.0);
                for (j, alpha, c) in monos.iter() {
                    if *j >= k && *alpha >= beta {
                        s += c.eval(t, x)
                            * (binom(*j, k) * binom(*alpha, beta))
                            * v.powu(j - k)
                            * vx.powu(alpha - beta);
                    }
                }
                s
            },
            t0,
            r0,
        )
    };
    let mut nonlinear = Vec::new();
    let max_j = spec.nonlinear.iter().map(|m| m.j).max().unwrap_or(0);
    let max_a = spec.nonlinear.iter().map(|m| m.alpha).max().unwrap_or(0);
    for k in 0..=max_j {
        for beta in 0..=max_a {
            if k + beta >= 2 && spec.nonlinear.iter().any(|m| m.j >= k && m.alpha >= beta) {
                nonlinear.push(Monomial { j: k, alpha: beta, coeff: coupling(k, beta) });
            }
        }
    }
    let linear = !spec.nonlinear.is_empty();
    let lambda = if linear { spec.lambda.add(&coupling(1, 0)) } else { spec.lambda.clone() };
    let b = if linear { spec.b.add(&coupling(0, 1)) } else { spec.b.clone() };
    let mut out = EquationSpec::new(a_new, lambda, b, nonlinear, t0, r0, spec.rho0, weight);
    out.mu = spec.mu;
    out
}

/// sup over samples of |f(t,x)|/t^e on t ∈ [1e-6, t0], |x| = r, and whether
/// the ratio stays bounded toward t = 0.
pub fn power_bound(f: &(dyn Fn(f64, C64) -> C64 + Sync), e: f64, t0: f64, r: f64) -> (f64, bool) {
    let xs = crate::germ::circle_nodes(16, r, C64::new(0.0, 0.0));
    let n = 40;
    let ratios: Vec<f64> = (0..n)
        .map(|k| {
            let t = (1e-6f64.ln() + (t0.ln() - 1e-6f64.ln()) * k as f64 / (n - 1) as f64).exp();
            xs.iter().map(|&x| f(t, x).norm() / t.powf(e)).fold(0.0, f64::max)
        })
        .collect();
    let sup = ratios.iter().copied().fold(0.0, f64::max);
    let head = ratios[n / 2..].iter().copied().fold(0.0, f64::max);
    let tail = ratios[..n / 8].iter().copied().fold(0.0, f64::max);
    (sup, sup.is_finite() && tail <= 10.0 * head.max(1e-300))
}

/// The finite ladder: v = u₁ + … + u_N is the log-power series solving
/// (t∂_t − λ₀)v = [a + (λ−λ₀)v + b v_x + R(v, v_x)] below exponent (N+1)d,
/// so that w = u − v sees a source of order t^{(N+1)d}.
#[derive(Debug, Clone)]
pub struct ReductionLadder {
    pub choice: LadderChoice,
    pub lambda0: C64,
    /// u₁…u_N: the parts of v with exponent in [n·d, (n+1)·d)
    pub terms: Vec<TSeries>,
    pub sum: TSeries,
    /// the equation for w = u − v
    pub residual_spec: EquationSpec,
    /// the source of the w-equation as an exact series, when every
    /// coefficient of the equation expands finitely
    pub source_series: Option<TSeries>,
    /// sup |f_w|/t^{(N+1)d} and sup |c₁|/t^d, |c₂|/t^d on samples
    pub source_bound: f64,
    pub coupling_bounds: (f64, f64),
}

impl ReductionLadder {
    /// Whether v = u₁ + … + u_N already solves the equation exactly.
    pub fn is_exact(&self) -> bool {
        self.source_series.as_ref().is_some_and(|s| s.is_zero())
    }

    pub fn term_handles(&self, t_max: f64, x_radius: f64) -> Vec<SolutionHandle> {
        self.terms
            .iter()
            .enumerate()
            .map(|(n, s)| series_handle(s, t_max, x_radius, Exponent::Exact((n + 1) as f64 * self.choice.d)))
            .collect()
    }

    /// Exponent shift for the decaying remainder: halfway between Re λ(0,0)
    /// and the source order.
    pub fn remainder_shift(&self) -> f64 {
        0.5 * (self.lambda0.re + self.choice.cap)
    }
}

pub fn series_handle(s: &TSeries, t_max: f64, x_radius: f64, claimed: Exponent) -> SolutionHandle {
    let (a, b) = (s.clone(), s.clone());
    SolutionHandle::new(move |t, x| a.eval(t, x), t_max, x_radius, Provenance::Series, claimed, 1e-8)
        .with_deriv(move |t, x| b.eval_d(t, x).1)
}

fn expand(f: &ScalarField, cap: f64, name: &str) -> Result<TSeries> {
    f.tseries(cap).ok_or_else(|| Error::Unsupported(format!("{name} has no expansion in powers of t and log t")))
}

/// F(t, x, v, v_x) − t∂_t v as a series, when all coefficients expand
/// without truncation. Terms below the ladder cap cancel in exact arithmetic
/// and are dropped when they do so to rounding.
fn exact_source(spec: &EquationSpec, v: &TSeries) -> Option<TSeries> {
    let big = 1e6;
    let full = |f: &ScalarField| f.tseries(64.0).filter(|s| !s.truncated);
    let (a, lam, b) = (full(&spec.a)?, full(&spec.lambda)?, full(&spec.b)?);
    let vx = v.dx();
    let mut f = a.add(&lam.mul(v, big)).add(&b.mul(&vx, big));
    for m in &spec.nonlinear {
        let mut p = full(&m.coeff)?;
        for _ in 0..m.j {
            p = p.mul(v, big);
        }
        for _ in 0..m.alpha {
            p = p.mul(&vx, big);
        }
        f = f.add(&p);
    }
    let f = f.sub(&v.t_dt());
    if f.truncated {
        return None;
    }
    let scale = f.max_coeff().max(v.max_coeff()).max(1.0);
    Some(f.prune(1e-14 * scale))
}

pub fn reduce_ladder(spec: &EquationSpec, mu: f64) -> Result<ReductionLadder> {
    let l00 = spec.lambda00()?;
    if l00.re <= 0.0 {
        return Err(Error::Precondition(format!("Re λ(0,0) = {} must be positive", l00.re)));
    }
    let choice = ladder_choice(l00.re, mu);
    let cap = choice.cap;
    let mut v = TSeries::zero();
    if choice.n > 0 && !spec.a.is_zero() {
        let a = expand(&spec.a, cap + 1.0, "a")?;
        let lam = expand(&spec.lambda, cap + 1.0, "λ")?;
        let b = expand(&spec.b, cap + 1.0, "b")?;
        let monos: Vec<(u32, u32, TSeries)> = spec
            .nonlinear
            .iter()
            .map(|m| Ok((m.j, m.alpha, expand(&m.coeff, cap + 1.0, "a_{jα}")?)))
            .collect::<Result<_>>()?;
        for (e, k, _) in lam.terms() {
            if e < 0.0 || (e == 0.0 && k > 0) {
                return Err(Error::Unsupported("λ(t,x) is not continuous at t = 0".into()));
            }
        }
        let lam0 = lam.coeff(0.0, 0);
        let (_, dlam) = lam.split_below(1e-9);
        let mut converged = false;
        for _ in 0..256 {
            let vx = v.dx();
            let mut rhs = a.add(&dlam.mul(&v, cap)).add(&b.mul(&vx, cap));
            for (j, alpha, c) in &monos {
                let mut p = c.clone();
                for _ in 0..*j {
                    p = p.mul(&v, cap);
                }
                for _ in 0..*alpha {
                    p = p.mul(&vx, cap);
                }
                rhs = rhs.add(&p);
            }
            let (lo, _) = rhs.split_below(cap);
            let next = invert_euler_series(&lo, &lam0, RESONANCE_TOL)?;
            let settled = next.sub(&v).is_zero();
            v = next;
            if settled {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence { iterations: 256, ratio: f64::NAN });
        }
    }
    v.truncated = false;
    let mut terms = vec![TSeries::zero(); choice.n];
    for (e, k, g) in v.terms() {
        if choice.n == 0 {
            break;
        }
        let band = ((e / choice.d).floor() as usize).clamp(1, choice.n);
        terms[band - 1] = terms[band - 1].add(&TSeries::monomial(e, k, g.clone()));
    }

    let source_series = exact_source(spec, &v);
    let base: BaseFn = {
        let v = v.clone();
        Arc::new(move |t, x| v.eval_d(t, x))
    };
    let (t0, r0) = (spec.t0, spec.r0);
    let f_w = match &source_series {
        Some(f) => {
            let f = f.clone();
            ScalarField::new(move |t, x| f.eval(t, x), t0, r0)
        }
        None => {
            let (spec, v, tv) = (spec.clone(), v.clone(), v.t_dt());
            ScalarField::new(
                move |t, x| {
                    let (u, ux) = v.eval_d(t, x);
                    spec.f(t, x, u, ux) - tv.eval(t, x)
                },
                t0,
                r0,
            )
        }
    };
    let weight = if v.is_zero() { spec.weight.clone() } else { spec.weight.augmented(choice.d) };
    let mut residual_spec = shifted_spec(spec, base, f_w, weight);
    residual_spec.mu = Some(cap);

    let r = 0.5 * spec.r0;
    let fe = residual_spec.a.evaluator();
    let (source_bound, _) = power_bound(&|t, x| fe(t, x), cap, spec.t0, r);
    let c1 = residual_spec.lambda.sub(&spec.lambda).evaluator();
    let c2 = residual_spec.b.sub(&spec.b).evaluator();
    let (b1, _) = power_bound(&|t, x| c1(t, x), choice.d, spec.t0, r);
    let (b2, _) = power_bound(&|t, x| c2(t, x), choice.d, spec.t0, r);

    Ok(ReductionLadder { choice, lambda0: l00, terms, sum: v, residual_spec, source_series, source_bound, coupling_bounds: (b1, b2) })
}

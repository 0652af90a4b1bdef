//! Integral-formula solvers for L = t∂_t − λ(t,x) − b(t,x)∂_x, all built on
//! the characteristic dx/dσ = −b(e^σ, x) with the integrating factor carried
//! along as extra ODE components.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::characteristics::{Hull, T_FLOOR};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::germ::{circle_nodes, horner, HoloGerm};
use crate::ode::Dopri5;
use crate::solution::{Exponent, Provenance, SolutionHandle};

fn ode() -> Dopri5 {
    Dopri5::with_tol(1e-12, 1e-15)
}

fn escape_guard(radius: f64) -> impl Fn(f64, &[C64; 3]) -> Result<()> {
    move |s, y| {
        if y[0].norm() >= radius || !y[0].re.is_finite() {
            Err(Error::Escape { t: s.exp() })
        } else {
            Ok(())
        }
    }
}

/// Solution of Lw = g with w(T, ·) = ψ:
/// w(t,x) = ψ(x_T)·e^{−I} − J, where along the characteristic from (t, x) up
/// to T, I = ∫λ dσ and J = ∫ e^{−∫λ} g dσ.
pub fn solve_backward_cauchy(
    lambda: &ScalarField,
    b: &ScalarField,
    g: &ScalarField,
    psi: &HoloGerm,
    t_big: f64,
    hull: Option<&Hull>,
) -> Result<SolutionHandle> {
    let radius = lambda.x_radius.min(b.x_radius).min(g.x_radius);
    let x_radius = match hull {
        Some(h) => h.r_inner,
        None => radius.min(psi.radius),
    };
    let (l, bb, gg) = (lambda.evaluator(), b.evaluator(), g.evaluator());
    let psi = psi.clone();
    let g_zero = g.is_zero();
    let s_big = t_big.ln();
    let eval = move |t: f64, x: C64| -> Result<C64> {
        if t == t_big {
            return Ok(psi.eval(x));
        }
        let rhs = |s: f64, y: &[C64; 3]| {
            let tau = s.exp();
            let src = if g_zero { C64::new(0.0, 0.0) } else { (-y[1]).exp() * gg(tau, y[0]) };
            [-bb(tau, y[0]), l(tau, y[0]), src]
        };
        let zero = C64::new(0.0, 0.0);
        let y = ode().integrate(rhs, t.ln(), [x, zero, zero], &[s_big], escape_guard(radius), |_, _| Ok(()))?;
        Ok(psi.eval(y[0]) * (-y[1]).exp() - y[2])
    };
    let t_max = t_big;
    let h = SolutionHandle::new(
        move |t, x| eval(t, x).unwrap_or(C64::new(f64::NAN, f64::NAN)),
        t_max,
        x_radius,
        Provenance::ExactFormula,
        Exponent::Exact(0.0),
        1e-9,
    );
    Ok(h)
}

/// Slack report for the decay bound |w| ≤ M (t/T)^{a0} + G t^μ/(a0 − μ).
#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub nodes: usize,
    pub violations: usize,
    /// min over nodes of bound − |w| (negative on violation)
    pub min_slack: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn check_decay_bound(
    w: &SolutionHandle,
    psi_bound: f64,
    g_bound: (f64, f64),
    a0: f64,
    t_big: f64,
    ts: &[f64],
    xs: &[C64],
) -> Result<DecayReport> {
    let (gc, mu) = g_bound;
    if !(0.0 < mu && mu < a0) {
        return Err(Error::Precondition(format!("need 0 < μ < a0, got μ = {mu}, a0 = {a0}")));
    }
    let nodes: Vec<(f64, C64)> = ts.iter().flat_map(|&t| xs.iter().map(move |&x| (t, x))).collect();
    let slack: Vec<f64> = crate::par::map_slice(&nodes, |&(t, x)| {
        let bound = psi_bound * (t / t_big).powf(a0) + gc * t.powf(mu) / (a0 - mu);
        bound - w.eval(t, x).norm()
    });
    Ok(DecayReport {
        nodes: nodes.len(),
        violations: slack.iter().filter(|s| **s < -1e-14).count(),
        min_slack: slack.iter().cloned().fold(f64::INFINITY, f64::min),
    })
}

fn limit_germ(f: &ScalarField, rho: f64) -> Result<Vec<C64>> {
    f.limit_at_zero(rho)
}

/// v(t,x) = ψ(x(0))·exp(∫₀^t λ(s, x(s))/s ds) along the characteristic
/// through (t, x); requires λ(0, ·) ≡ 0. The integral is cut at t = 1e-12,
/// beyond which the weight bound makes the remainder negligible.
pub fn solve_flat_initial(lambda: &ScalarField, b: &ScalarField, psi: &HoloGerm, t_max: f64) -> Result<SolutionHandle> {
    let rho = 0.5 * lambda.x_radius.min(1.0);
    let l0 = limit_germ(lambda, rho)?;
    let l0_sup = circle_nodes(16, rho, C64::new(0.0, 0.0)).into_iter().map(|x| horner(&l0, x).norm()).fold(0.0, f64::max);
    if l0_sup > 1e-8 {
        return Err(Error::Precondition(format!("λ(0,x) does not vanish (sup ≈ {l0_sup:.2e})")));
    }
    Ok(flat_unchecked(lambda.evaluator(), b.clone(), psi.clone(), t_max, lambda.x_radius))
}

fn flat_unchecked(
    lambda: Arc<dyn Fn(f64, C64) -> C64 + Send + Sync>,
    b: ScalarField,
    psi: HoloGerm,
    t_max: f64,
    lam_radius: f64,
) -> SolutionHandle {
    let radius = lam_radius.min(b.x_radius);
    let x_radius = radius.min(psi.radius);
    let bb = b.evaluator();
    let psi_zero = psi.is_zero();
    let s_floor = T_FLOOR.ln();
    let eval = move |t: f64, x: C64| -> Result<C64> {
        if psi_zero {
            return Ok(C64::new(0.0, 0.0));
        }
        let rhs = |s: f64, y: &[C64; 3]| {
            let tau = s.exp();
            [-bb(tau, y[0]), lambda(tau, y[0]), C64::new(0.0, 0.0)]
        };
        let zero = C64::new(0.0, 0.0);
        let y = ode().integrate(rhs, t.ln(), [x, zero, zero], &[s_floor], escape_guard(radius), |_, _| Ok(()))?;
        // y[1] = ∫_{σ_t}^{σ_floor} λ = −∫_floor^t λ
        Ok(psi.eval(y[0]) * (-y[1]).exp())
    };
    SolutionHandle::new(
        move |t, x| eval(t, x).unwrap_or(C64::new(f64::NAN, f64::NAN)),
        t_max,
        x_radius,
        Provenance::ExactFormula,
        Exponent::Exact(0.0),
        1e-9,
    )
}

/// How λ(0, x) is supplied to the singular solver.
#[derive(Debug, Clone)]
pub enum Lambda0 {
    /// Taylor coefficients at 0 (exact, e.g. from an expansion in t).
    Germ(Vec<C64>),
    /// Extrapolate λ(t, ·) to t = 0 numerically.
    Extrapolate,
}

/// V(ψ) = t^{λ(0,x)}·ŵ, where ŵ is the flat solution for
/// λ_b = λ − λ(0,x) + ∂_xλ(0,x)·log t·b. Then t^{−λ(0,x)}V(ψ) → ψ as t → 0.
pub fn solve_singular_initial(
    lambda: &ScalarField,
    b: &ScalarField,
    psi: &HoloGerm,
    t_max: f64,
    lambda0: Lambda0,
) -> Result<SolutionHandle> {
    let rho = 0.5 * lambda.x_radius.min(1.0);
    let l0 = match lambda0 {
        Lambda0::Germ(g) => g,
        Lambda0::Extrapolate => limit_germ(lambda, rho)?,
    };
    let re00 = l0.first().copied().unwrap_or_default().re;
    if re00 <= 0.0 {
        return Err(Error::Precondition(format!("Re λ(0,0) = {re00} is not positive")));
    }
    if t_max >= (-1f64).exp() {
        return Err(Error::Precondition(format!("T = {t_max} must be below 1/e")));
    }
    let hat = hat_solution(lambda, b, psi, &l0, t_max);
    let l0c = l0.clone();
    let l0_const = l0.iter().skip(1).all(|c| c.norm() == 0.0);
    let hat_eval = hat.evaluator();
    let mut v = SolutionHandle::new(
        move |t, x| (horner(&l0c, x) * t.ln()).exp() * hat_eval(t, x),
        t_max,
        hat.x_radius,
        Provenance::ExactFormula,
        if l0_const && b.is_zero() { Exponent::Exact(re00) } else { Exponent::JustBelow(re00) },
        1e-9,
    );
    if psi.is_zero() {
        v = SolutionHandle::zero(t_max, hat.x_radius);
    }
    Ok(v)
}

/// The flat factor ŵ of V(ψ).
pub fn hat_solution(lambda: &ScalarField, b: &ScalarField, psi: &HoloGerm, l0: &[C64], t_max: f64) -> SolutionHandle {
    let dl0: Vec<C64> = l0.iter().enumerate().skip(1).map(|(k, c)| c * k as f64).collect();
    let (l, bb) = (lambda.evaluator(), b.evaluator());
    let l0v = l0.to_vec();
    let b_zero = b.is_zero();
    let lam_b = move |t: f64, x: C64| {
        let mut v = l(t, x) - horner(&l0v, x);
        if !b_zero && !dl0.is_empty() {
            v += horner(&dl0, x) * t.ln() * bb(t, x);
        }
        v
    };
    flat_unchecked(Arc::new(lam_b), b.clone(), psi.clone(), t_max, lambda.x_radius)
}

/// The particular solution of Lw = g that vanishes at t = 0 when
/// Re λ_eff ≤ −δ < 0:
/// w(t,x) = ∫₀^t exp(∫_τ^t λ_eff ds/s)·g(τ, x(τ)) dτ/τ along the characteristic.
/// Below t = 1e-12 the integrand is extended by its fitted exponential decay.
pub fn solve_decaying_particular(
    lambda_eff: &ScalarField,
    b: &ScalarField,
    g: &ScalarField,
    delta: f64,
    t_max: f64,
) -> Result<SolutionHandle> {
    let radius = lambda_eff.x_radius.min(b.x_radius).min(g.x_radius);
    let probe_r = 0.9 * radius.min(1.0);
    let xs = circle_nodes(16, probe_r, C64::new(0.0, 0.0));
    for k in 0..40 {
        let t = (T_FLOOR.ln() + (t_max.ln() - T_FLOOR.ln()) * k as f64 / 39.0).exp();
        for &x in xs.iter().chain(std::iter::once(&C64::new(0.0, 0.0))) {
            let re = lambda_eff.eval(t, x).re;
            if re > -delta {
                return Err(Error::Precondition(format!("Re λ_eff = {re:.4} > −δ = {} at t = {t:.2e}", -delta)));
            }
        }
    }
    if g.is_zero() {
        return Ok(SolutionHandle::zero(t_max, radius));
    }
    let (l, bb, gg) = (lambda_eff.evaluator(), b.evaluator(), g.evaluator());
    let s_floor = T_FLOOR.ln();
    let eval = move |t: f64, x: C64| -> Result<C64> {
        let rhs = |s: f64, y: &[C64; 3]| {
            let tau = s.exp();
            [-bb(tau, y[0]), -l(tau, y[0]), -(y[1].exp() * gg(tau, y[0]))]
        };
        let zero = C64::new(0.0, 0.0);
        let mut probe = [C64::new(0.0, 0.0); 2];
        let outs = [s_floor + 1.0, s_floor];
        let y = ode().integrate(rhs, t.ln(), [x, zero, zero], &outs, escape_guard(radius), |k, y| {
            probe[k] = y[1].exp() * gg(outs[k].exp(), y[0]);
            Ok(())
        })?;
        // integrand ≈ c·e^{κσ} below the floor
        let kappa = (probe[0] / probe[1]).norm().ln();
        let tail = if kappa > 0.0 && probe[1].norm() > 0.0 { probe[1] / kappa } else { C64::new(0.0, 0.0) };
        Ok(y[2] + tail)
    };
    Ok(SolutionHandle::new(
        move |t, x| eval(t, x).unwrap_or(C64::new(f64::NAN, f64::NAN)),
        t_max,
        radius,
        Provenance::ExactFormula,
        Exponent::Exact(0.0),
        1e-9,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(s: &str) -> ScalarField {
        ScalarField::parse(s, 0.5, 2.0).unwrap()
    }

    fn c(v: f64) -> C64 {
        C64::new(v, 0.0)
    }

    #[test]
    fn backward_cauchy_closed_forms() {
        let w = solve_backward_cauchy(&f("2"), &f("0"), &f("0"), &HoloGerm::identity(), 0.5, None).unwrap();
        assert!((w.eval(0.2, c(0.3)) - 0.3 * (0.2f64 / 0.5).powi(2)).norm() < 1e-10);
        let w = solve_backward_cauchy(&f("2"), &f("0"), &f("t"), &HoloGerm::zero(), 0.5, None).unwrap();
        assert!((w.eval(0.2, c(0.1)) - (2.0 * 0.04 - 0.2)).norm() < 1e-10);
        let w = solve_backward_cauchy(&f("0"), &f("t"), &f("0"), &HoloGerm::identity(), 0.3, None).unwrap();
        // transport along x(T) = x − (T − t)
        assert!((w.eval(0.1, c(0.2)) - (0.2 - 0.2)).norm() < 1e-10);
        assert!((w.eval(0.3, c(0.2)) - 0.2).norm() < 1e-14);
    }

    #[test]
    fn flat_initial_closed_forms() {
        let v = solve_flat_initial(&f("t"), &f("0"), &HoloGerm::identity(), 0.5).unwrap();
        assert!((v.eval(0.3, c(0.2)) - 0.2 * 0.3f64.exp()).norm() < 1e-10);
        let v = solve_flat_initial(&f("0"), &f("t"), &HoloGerm::identity(), 0.5).unwrap();
        assert!((v.eval(0.3, c(0.2)) - 0.5).norm() < 1e-10);
        assert!(solve_flat_initial(&f("1 + t"), &f("0"), &HoloGerm::identity(), 0.5).is_err());
    }

    #[test]
    fn singular_initial_closed_forms() {
        let psi = HoloGerm::from_real(&[1.0, 2.0]);
        let v = solve_singular_initial(&f("3"), &f("0"), &psi, 0.3, Lambda0::Extrapolate).unwrap();
        assert!((v.eval(0.1, c(0.2)) - 1.4 * 1e-3).norm() < 1e-13);
        let v = solve_singular_initial(&f("2 + x"), &f("0"), &psi, 0.3, Lambda0::Extrapolate).unwrap();
        let x = C64::new(0.1, 0.2);
        let want = psi.eval(x) * ((x + 2.0) * 0.1f64.ln()).exp();
        assert!((v.eval(0.1, x) - want).norm() < 1e-12);
    }

    #[test]
    fn decaying_particular_closed_forms() {
        let w = solve_decaying_particular(&f("-1"), &f("0"), &f("t"), 0.05, 0.5).unwrap();
        assert!((w.eval(0.2, c(0.1)) - 0.1).norm() < 1e-10);
        let w = solve_decaying_particular(&f("-2"), &f("0"), &f("t^2"), 0.05, 0.5).unwrap();
        assert!((w.eval(0.2, c(0.1)) - 0.01).norm() < 1e-10);
        assert!(solve_decaying_particular(&f("0.5"), &f("0"), &f("t"), 0.05, 0.5).is_err());
    }

    #[test]
    fn decay_bound_holds_for_the_duhamel_example() {
        let w = solve_backward_cauchy(&f("2"), &f("0"), &f("t"), &HoloGerm::zero(), 0.5, None).unwrap();
        let ts: Vec<f64> = (1..=50).map(|k| 0.5 * k as f64 / 50.0).collect();
        let r = check_decay_bound(&w, 0.0, (1.0, 1.0), 2.0, 0.5, &ts, &[c(0.0), c(0.3)]).unwrap();
        assert_eq!(r.violations, 0);
    }
}

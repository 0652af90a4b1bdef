//! Solution pipelines: the base solution u₀, the reduction to a ≡ 0, the
//! family U(ψ) with singular data ψ, recovery of ψ from a solution, and their
//! composition u = u₀ + U(ψ). Existence steps are carried out by the Picard
//! engine in [`crate::grid`].

use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::field::{check_conditions, residual, EquationSpec, ResidualGrid, ResidualReport, ScalarField};
use crate::germ::{circle_nodes, horner, taylor_from_circle, HoloGerm};
use crate::grid::{picard_solve, Nonlinearity, PicardConfig, PicardProblem, PicardSolution, PointFn};
use crate::linear::hat_solution;
use crate::series::{power_bound, reduce_ladder, series_handle, shifted_spec, BaseFn, ReductionLadder};
use crate::solution::{Diagnostics, Exponent, Provenance, SolutionHandle};

/// Residual certificate on the standard diagnostic grid, shrunk to fit the
/// handle's domain.
pub fn certify(spec: &EquationSpec, u: &SolutionHandle) -> Result<ResidualReport> {
    let t_hi = 0.2f64.min(u.t_max * 0.99);
    let r = 0.25f64.min(0.5 * u.x_radius);
    residual(spec, u, &ResidualGrid::log_disc(1e-3, t_hi, 24, r, 2, 16))
}

/// t^{−d}·R(v + t^d W, v_x + t^d W_x) summed over the monomials of `spec`,
/// minus the parts of order < `min_order` in (W, W_x).
fn shifted_r(spec: &EquationSpec, t: f64, x: C64, v: (C64, C64), w: (C64, C64), d: f64, min_order: u32) -> C64 {
    let td = t.powf(d);
    let (z1, z2) = (w.0 * td, w.1 * td);
    let mut s = C64::new(0.0, 0.0);
    for m in &spec.nonlinear {
        let c = m.coeff.eval(t, x);
        for k in 0..=m.j {
            for beta in 0..=m.alpha {
                if k + beta < min_order {
                    continue;
                }
                s += c
                    * (crate::numerics::binom(m.j, k) * crate::numerics::binom(m.alpha, beta))
                    * v.0.powu(m.j - k)
                    * v.1.powu(m.alpha - beta)
                    * z1.powu(k)
                    * z2.powu(beta);
            }
        }
    }
    s / td
}

/// Decaying solution u = t^d·W of the equation `spec`, with the linear part
/// of `spec` kept on the characteristics and Re λ − d < 0.
pub fn picard_spec(spec: &EquationSpec, d: f64, cfg: &PicardConfig) -> Result<PicardSolution> {
    let (t0, r0) = (spec.t0, spec.r0);
    let source = if spec.a.is_zero() {
        None
    } else {
        let a = spec.a.evaluator();
        Some(ScalarField::new(move |t, x| a(t, x) / t.powf(d), t0, r0))
    };
    let sp = spec.clone();
    let nonlinear: Nonlinearity = Arc::new(move |t, x, w, wx, _| {
        shifted_r(&sp, t, x, (C64::new(0.0, 0.0), C64::new(0.0, 0.0)), (w, wx), d, 2)
    });
    let pb = PicardProblem {
        lambda_eff: spec.lambda.sub(&ScalarField::constant(C64::new(d, 0.0), t0, r0)),
        b: spec.b.clone(),
        source,
        aux: vec![],
        nonlinear,
        shift: d,
        t_max: t0,
        rho: 0.5 * r0,
        range: spec.rho0,
    };
    picard_solve(&pb, cfg, None)
}

/// The base solution u₀ and how it was built.
#[derive(Debug, Clone)]
pub struct U0Solution {
    pub u: SolutionHandle,
    pub ladder: ReductionLadder,
    /// the Picard remainder, when the ladder does not solve exactly
    pub remainder: Option<SolutionHandle>,
    pub mu: f64,
}

fn mu_of(spec: &EquationSpec) -> f64 {
    spec.mu.unwrap_or_else(|| check_conditions(spec).mu_exponent)
}

/// u₀: the ladder series v below exponent (N+1)d, plus a decaying Picard
/// remainder when v is not already exact. With Re λ(0,0) < μ the ladder is
/// empty and the remainder is the whole solution.
pub fn solve_u0(spec: &EquationSpec, cfg: &PicardConfig) -> Result<U0Solution> {
    let mu = mu_of(spec);
    let ladder = reduce_ladder(spec, mu)?;
    let (t0, r0) = (spec.t0, spec.r0);
    let l00 = ladder.lambda0;
    let claimed = if spec.a.is_zero() {
        Exponent::Infinite
    } else if (l00.re - mu).abs() < 1e-9 {
        Exponent::JustBelow(mu)
    } else {
        Exponent::Exact(mu)
    };
    if spec.a.is_zero() {
        return Ok(U0Solution { u: SolutionHandle::zero(t0, r0), ladder, remainder: None, mu });
    }
    let v = series_handle(&ladder.sum, t0, r0, claimed);
    if ladder.is_exact() {
        return Ok(U0Solution { u: v, ladder, remainder: None, mu });
    }
    let d = ladder.remainder_shift();
    let sol = picard_spec(&ladder.residual_spec, d, cfg)?;
    let w = sol.handle(r0, Exponent::Exact(ladder.choice.cap), 1e-6);
    let mut u = if ladder.sum.is_zero() {
        let mut w = w.clone();
        w.claimed_exponent = claimed;
        w
    } else {
        let mut s = v.add(&w);
        s.provenance = Provenance::Sum;
        s.claimed_exponent = claimed;
        s
    };
    u.tolerance = 1e-6;
    u.diagnostics = sol.diagnostics.clone();
    Ok(U0Solution { u, ladder, remainder: Some(w), mu })
}

/// The a ≡ 0 equation for U = u − u₀ (the shift of R about u₀), with the
/// weight μ(t) + |log t|·t^d.
pub fn reduce_about(spec: &EquationSpec, u0: &SolutionHandle) -> Result<EquationSpec> {
    if u0.claimed_exponent == Exponent::Infinite {
        if !spec.a.is_zero() {
            return Err(Error::InvalidBase("u₀ ≡ 0 solves only an equation with a ≡ 0".into()));
        }
        return Ok(spec.clone());
    }
    let rep = certify(spec, u0)?;
    let allowed = u0.tolerance.max(1e-8);
    if !(rep.residual_sup <= allowed) {
        return Err(Error::InvalidBase(format!("residual {:.3e} exceeds the certificate {allowed:.1e}", rep.residual_sup)));
    }
    let d = u0.claimed_exponent.value();
    let base: BaseFn = {
        let u = u0.clone();
        Arc::new(move |t, x| (u.eval(t, x), u.eval_dx(t, x)))
    };
    let out = shifted_spec(spec, base, ScalarField::zero(spec.t0, spec.r0), spec.weight.augmented(d));
    let r = 0.5 * spec.r0;
    let c1 = out.lambda.sub(&spec.lambda).evaluator();
    let c2 = out.b.sub(&spec.b).evaluator();
    let d_eff = if matches!(u0.claimed_exponent, Exponent::JustBelow(_)) { 0.9 * d } else { d };
    for (name, c) in [("c₁", c1), ("c₂", c2)] {
        let (_, ok) = power_bound(&|t, x| c(t, x), d_eff, spec.t0, r);
        if !ok {
            return Err(Error::InvalidBase(format!("{name} is not O(t^{d_eff})")));
        }
    }
    Ok(out)
}

/// A member U(ψ) of the family of solutions with t^{−λ(0,x)}U → ψ.
#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub psi: HoloGerm,
    pub u: SolutionHandle,
    /// V(ψ) = t^{λ(0,x)}·ŵ
    pub v_part: SolutionHandle,
    pub w_part: SolutionHandle,
    /// (t_k, sup_{|x|≤0.2} |t_k^{−λ(0,x)}u(t_k,x) − ψ(x)|), k = 4…16
    pub limit_error_curve: Vec<(f64, f64)>,
    /// (d, d') of the bracket: d < Re λ < 2d, and u − V = t^{d'}·W
    pub bracket: (f64, f64),
}

/// min and max of Re λ on t ∈ [t_lo, T], |x| ≤ r.
fn lambda_range(lambda: &ScalarField, t_lo: f64, t_hi: f64, r: f64) -> (f64, f64) {
    let xs: Vec<C64> = circle_nodes(16, r, C64::new(0.0, 0.0)).into_iter().chain([C64::new(0.0, 0.0)]).collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..24 {
        let t = (t_lo.ln() + (t_hi.ln() - t_lo.ln()) * k as f64 / 23.0).exp();
        for &x in &xs {
            let v = lambda.eval(t, x).re;
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo, hi)
}

/// Choose d with d < a0 and a1 < 2d, starting from 0.75·Re λ(0,0).
fn bracket(a0: f64, a1: f64, re00: f64) -> Option<f64> {
    let d = 0.75 * re00;
    if d < a0 && a1 < 2.0 * d {
        return Some(d);
    }
    let mid = 0.5 * (0.5 * a1 + a0);
    (0.5 * a1 < a0 && mid > 0.0).then_some(mid)
}

fn limit_curve(u: &SolutionHandle, l0: &[C64], psi: &HoloGerm) -> Vec<(f64, f64)> {
    let xs = circle_nodes(32, 0.2, C64::new(0.0, 0.0));
    (4..=16)
        .map(|k| {
            let t = 2f64.powi(-k);
            let e = xs
                .iter()
                .map(|&x| ((-horner(l0, x) * t.ln()).exp() * u.eval(t, x) - psi.eval(x)).norm())
                .fold(0.0, f64::max);
            (t, e)
        })
        .collect()
}

/// U(ψ) = V(ψ) + t^{d'}·W for an equation with a ≡ 0: V(ψ) solves the linear
/// part with singular data ψ, and W solves the decaying remainder equation
/// with source R(V, V_x) by Picard iteration.
pub fn solve_family(spec0: &EquationSpec, psi: &HoloGerm, cfg: &PicardConfig) -> Result<FamilyMember> {
    solve_family_seeded(spec0, psi, cfg, None)
}

/// [`solve_family`] with an initial iterate for W.
pub fn solve_family_seeded(
    spec0: &EquationSpec,
    psi: &HoloGerm,
    cfg: &PicardConfig,
    seed: Option<&PointFn>,
) -> Result<FamilyMember> {
    if !spec0.a.is_zero() {
        return Err(Error::Precondition("the family equation must have a ≡ 0".into()));
    }
    let l0 = spec0.lambda0_germ()?;
    let re00 = l0.first().copied().unwrap_or_default().re;
    if re00 <= 0.0 {
        return Err(Error::Precondition(format!("Re λ(0,0) = {re00} is not positive")));
    }
    let mut t_max = spec0.t0.min(0.3);
    let mut rho = 0.5 * spec0.r0;
    let mut chosen = None;
    for _ in 0..=cfg.shrink_budget {
        let (a0, a1) = lambda_range(&spec0.lambda, cfg.t_lo, t_max, rho);
        if let Some(d) = bracket(a0, a1, re00) {
            chosen = Some((d, 0.5 * (a1 + 2.0 * d)));
            break;
        }
        t_max *= 0.5;
        rho *= 0.8;
    }
    let Some((d, d_shift)) = chosen else {
        return Err(Error::Config("no d with d < Re λ < 2d on the shrunk domain".into()));
    };
    let x_radius = spec0.r0;
    if psi.is_zero() {
        let z = SolutionHandle::zero(t_max, x_radius);
        return Ok(FamilyMember {
            psi: psi.clone(),
            u: z.clone(),
            v_part: z.clone(),
            w_part: z,
            limit_error_curve: (4..=16).map(|k| (2f64.powi(-k), 0.0)).collect(),
            bracket: (d, d_shift),
        });
    }

    let hat = hat_solution(&spec0.lambda, &spec0.b, psi, &l0, t_max);
    let dl0: Vec<C64> = l0.iter().enumerate().skip(1).map(|(k, c)| c * k as f64).collect();
    let base = {
        let (l0, dl0) = (l0.clone(), dl0.clone());
        move |t: f64, x: C64, h: (C64, C64)| -> (C64, C64) {
            let l = t.ln();
            let p = (horner(&l0, x) * l).exp();
            (p * h.0, p * (horner(&dl0, x) * l * h.0 + h.1))
        }
    };
    let v_part = {
        let (h, hat_d, base2, base3) = (hat.clone(), hat.clone(), base.clone(), base.clone());
        SolutionHandle::new(
            move |t, x| base2(t, x, (h.eval(t, x), C64::new(0.0, 0.0))).0,
            t_max,
            hat.x_radius,
            Provenance::ExactFormula,
            Exponent::Exact(re00),
            1e-9,
        )
        .with_deriv(move |t, x| base3(t, x, (hat_d.eval(t, x), hat_d.eval_dx(t, x))).1)
    };

    let sp = spec0.clone();
    let nonlinear: Nonlinearity = {
        let base = base.clone();
        Arc::new(move |t, x, w, wx, aux| shifted_r(&sp, t, x, base(t, x, aux[0]), (w, wx), d_shift, 0))
    };
    let hat_eval: PointFn = {
        let h = hat.clone();
        Arc::new(move |t, x| h.eval(t, x))
    };
    let pb = PicardProblem {
        lambda_eff: spec0.lambda.sub(&ScalarField::constant(C64::new(d_shift, 0.0), spec0.t0, spec0.r0)),
        b: spec0.b.clone(),
        source: None,
        aux: vec![hat_eval],
        nonlinear,
        shift: d_shift,
        t_max,
        rho,
        range: spec0.rho0,
    };
    let sol = picard_solve(&pb, cfg, seed)?;
    let w_part = sol.handle(x_radius, Exponent::Exact(2.0 * d), 1e-6);
    let mut u = v_part.add(&w_part);
    u.t_max = sol.w.grid().t_max.min(t_max);
    u.claimed_exponent = if l0.iter().skip(1).all(|c| c.norm() == 0.0) && spec0.b.is_zero() {
        Exponent::Exact(re00)
    } else {
        Exponent::JustBelow(re00)
    };
    u.tolerance = 1e-6;
    u.diagnostics = sol.diagnostics.clone();
    let limit_error_curve = limit_curve(&u, &l0, psi);
    Ok(FamilyMember { psi: psi.clone(), u, v_part, w_part, limit_error_curve, bracket: (d, d_shift) })
}

/// ψ recovered from a solution, with the extrapolation record.
#[derive(Debug, Clone)]
pub struct RecoveredPsi {
    pub germ: HoloGerm,
    /// fitted rate δ of t_k^{−λ(0,x)}u(t_k, ·) → ψ
    pub rate: f64,
    /// size of the final Richardson correction
    pub correction: f64,
    pub diagnostics: Diagnostics,
}

/// ψ = lim t^{−λ(0,x)}u(t,x), by Richardson extrapolation in t_k^δ of the
/// Taylor coefficients of ψ̂_k = t_k^{−λ(0,x)}u(t_k,·), t_k = 2^{−k}, with δ
/// read off the decay of successive differences.
pub fn recover_psi(spec0: &EquationSpec, u: &SolutionHandle) -> Result<RecoveredPsi> {
    let l0 = spec0.lambda0_germ()?;
    let r = 0.25 * spec0.r0.min(u.x_radius);
    let m = 32;
    let xs = circle_nodes(m, r, C64::new(0.0, 0.0));
    let ks: Vec<i32> = (12..=24).collect();
    let germs: Vec<Vec<C64>> = ks
        .iter()
        .map(|&k| {
            let t = 2f64.powi(-k);
            let samples: Vec<C64> = xs.iter().map(|&x| (-horner(&l0, x) * t.ln()).exp() * u.eval(t, x)).collect();
            let mut g = taylor_from_circle(&samples, r, 0.0);
            g.truncate(m / 2);
            g.resize(m / 2, C64::new(0.0, 0.0));
            g
        })
        .collect();
    if germs.iter().flatten().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::NonMember("t^{−λ(0,x)}u is not finite on the ladder".into()));
    }
    let norm = |a: &[C64], b: &[C64]| a.iter().zip(b).map(|(x, y)| (x - y).norm() * 1.0).fold(0.0, f64::max);
    let diffs: Vec<f64> = germs.windows(2).map(|w| norm(&w[1], &w[0])).collect();
    let scale = germs.last().unwrap().iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut diag = Diagnostics::default();
    if diffs.iter().all(|d| *d <= 1e-14 * scale.max(1e-300)) {
        let g = germs.last().unwrap().clone();
        return Ok(RecoveredPsi { germ: HoloGerm::new(g, r), rate: f64::INFINITY, correction: 0.0, diagnostics: diag });
    }
    // rate from the differences above the noise floor
    let rates: Vec<f64> = diffs
        .windows(2)
        .filter(|w| w[0] > 1e-11 * scale && w[1] > 1e-11 * scale)
        .map(|w| (w[0] / w[1]).log2())
        .collect();
    diag.contraction_ratios = diffs.windows(2).map(|w| w[1] / w[0]).collect();
    let rate = if rates.is_empty() {
        1.0
    } else {
        let mut r = rates.clone();
        r.sort_by(|a, b| a.total_cmp(b));
        r[r.len() / 2]
    };
    if !(rate > 0.05) {
        return Err(Error::NonMember(format!("t^{{−λ(0,x)}}u does not settle (fitted rate {rate:.3})")));
    }
    let n = germs.len();
    let f = 2f64.powf(rate) - 1.0;
    let g: Vec<C64> = germs[n - 1].iter().zip(&germs[n - 2]).map(|(a, b)| a + (a - b) / f).collect();
    let correction = diffs[n - 2] / f;
    diag.notes.push(format!("richardson rate {rate:.4}, correction {correction:.3e}"));
    let chopped: Vec<C64> = g.iter().map(|c| if c.norm() < 1e-12 * scale.max(1.0) { C64::new(0.0, 0.0) } else { *c }).collect();
    Ok(RecoveredPsi { germ: HoloGerm::new(chopped, r), rate, correction, diagnostics: diag })
}

/// u = u₀ + U(ψ) with the pieces that built it.
#[derive(Debug, Clone)]
pub struct FullSolution {
    pub u: SolutionHandle,
    pub u0: U0Solution,
    pub spec0: EquationSpec,
    pub member: FamilyMember,
    pub u0_residual: f64,
}

pub fn solve_full(spec: &EquationSpec, psi: &HoloGerm, cfg: &PicardConfig) -> Result<FullSolution> {
    let u0 = solve_u0(spec, cfg)?;
    let u0_residual = certify(spec, &u0.u)?.residual_sup;
    let spec0 = reduce_about(spec, &u0.u)?;
    let member = solve_family(&spec0, psi, cfg)?;
    let u = if psi.is_zero() {
        u0.u.clone()
    } else {
        let mut s = u0.u.add(&member.u);
        s.diagnostics = member.u.diagnostics.clone();
        s
    };
    Ok(FullSolution { u, u0, spec0, member, u0_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{quadratic_gradient_drift, quadratic_gradient_u0};

    fn c(v: f64) -> C64 {
        C64::new(v, 0.0)
    }

    fn sup_rel(u: &SolutionHandle, want: &SolutionHandle) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..12 {
            let t = (1e-3f64.ln() + (0.2f64.ln() - 1e-3f64.ln()) * k as f64 / 11.0).exp();
            let xs = circle_nodes(16, 0.25, c(0.0));
            let scale = xs.iter().map(|&x| want.eval(t, x).norm()).fold(0.0, f64::max);
            for &x in &xs {
                worst = worst.max((u.eval(t, x) - want.eval(t, x)).norm() / scale);
            }
        }
        worst
    }

    #[test]
    fn base_solutions_match_closed_forms() {
        let cfg = PicardConfig::default();
        for (l, m) in [(3.0, 1.0), (2.0, 1.0), (0.5, 1.0), (1.0, 1.0)] {
            let spec = EquationSpec::quadratic_gradient(l, m);
            let u0 = solve_u0(&spec, &cfg).unwrap();
            let want = quadratic_gradient_u0(c(l), m, spec.t0, spec.r0);
            let e = sup_rel(&u0.u, &want);
            assert!(e <= 1e-6, "({l},{m}): {e:e}");
            let rep = certify(&spec, &u0.u).unwrap();
            assert!(rep.residual_sup <= u0.u.tolerance, "({l},{m}): residual {:e}", rep.residual_sup);
        }
    }

    #[test]
    fn reduction_gives_the_printed_drift() {
        let spec = EquationSpec::quadratic_gradient(3.0, 1.0);
        let u0 = quadratic_gradient_u0(c(3.0), 1.0, spec.t0, spec.r0);
        let s0 = reduce_about(&spec, &u0).unwrap();
        let f = quadratic_gradient_drift(c(3.0), 1.0, spec.t0, spec.r0);
        for t in [0.01, 0.1] {
            assert!((s0.b.eval(t, c(0.1)) - f.eval(t, c(0.1))).norm() < 1e-14);
            assert!((s0.lambda.eval(t, c(0.1)) - 3.0).norm() < 1e-14);
        }
        assert_eq!(s0.nonlinear.len(), 1);
        assert_eq!((s0.nonlinear[0].j, s0.nonlinear[0].alpha), (0, 2));
        let bad = SolutionHandle::from_field(&ScalarField::parse("x*t", 0.3, 1.0).unwrap(), Exponent::Exact(1.0));
        assert!(matches!(reduce_about(&spec, &bad), Err(Error::InvalidBase(_))));
    }

    #[test]
    fn family_matches_series() {
        let spec = EquationSpec::quadratic_gradient(3.0, 1.0);
        let u0 = quadratic_gradient_u0(c(3.0), 1.0, spec.t0, spec.r0);
        let s0 = reduce_about(&spec, &u0).unwrap();
        let cfg = PicardConfig::default();
        let m = solve_family(&s0, &HoloGerm::identity(), &cfg).unwrap();
        for (t, x) in [(1e-3f64, 0.2), (0.1, -0.2), (0.05, 0.0)] {
            let want = (x - t) * t.powi(3) + t.powi(6) / 3.0;
            assert!((m.u.eval(t, c(x)) - want).norm() < 1e-9, "{t} {x}: {}", m.u.eval(t, c(x)));
        }
        let curve = &m.limit_error_curve;
        assert!(curve.windows(2).all(|w| w[1].1 < w[0].1));
        assert!(curve.last().unwrap().1 < 1e-3);
        let rec = recover_psi(&s0, &m.u).unwrap();
        assert!(rec.germ.max_abs_diff(&HoloGerm::identity()) < 1e-4, "{:?}", rec.germ);
    }

    #[test]
    fn trivial_members() {
        let spec = EquationSpec::quadratic_gradient(3.0, 1.0);
        let u0 = quadratic_gradient_u0(c(3.0), 1.0, spec.t0, spec.r0);
        let s0 = reduce_about(&spec, &u0).unwrap();
        let m = solve_family(&s0, &HoloGerm::zero(), &PicardConfig::default()).unwrap();
        assert_eq!(m.u.eval(0.1, c(0.1)), c(0.0));
        assert!(recover_psi(&s0, &m.u).unwrap().germ.is_zero());
        let m = solve_family(&s0, &HoloGerm::constant(c(0.7)), &PicardConfig::default()).unwrap();
        for t in [1e-3f64, 0.1] {
            assert!((m.u.eval(t, c(0.15)) - 0.7 * t.powi(3)).norm() < 1e-8);
        }
    }
}

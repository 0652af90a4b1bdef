use num_complex::Complex64 as C64;
use serde::Serialize;

use super::{EquationSpec, ScalarField};
use crate::germ::{circle_nodes, horner};
use crate::numerics::lsq_slope;
use crate::par;

/// Fitted constants for the growth conditions on a, λ and b.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    /// |a| ≤ A·t^μ
    pub c1_ok: bool,
    pub a_const: f64,
    pub mu_exponent: f64,
    pub c1_fit_rms: f64,
    /// |λ(t,x) − λ(0,x)| ≤ Λ·μ(t)
    pub c2_ok: bool,
    pub lambda_const: f64,
    /// |b| ≤ B·μ(t)/|log t|
    pub c3_ok: bool,
    pub b_const: f64,
    pub samples_used: usize,
}

impl ConditionReport {
    pub fn all_ok(&self) -> bool {
        self.c1_ok && self.c2_ok && self.c3_ok
    }

    /// Names of the failed conditions.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if !self.c1_ok {
            v.push("c1");
        }
        if !self.c2_ok {
            v.push("c2");
        }
        if !self.c3_ok {
            v.push("c3");
        }
        v
    }
}

const NODES: usize = 40;
const CIRCLE: usize = 32;
/// Ratios beyond this are taken as unbounded.
const RATIO_CAP: f64 = 1e8;

fn log_nodes(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// Whether a ratio sequence (ordered by decreasing t) stays bounded: no
/// sustained growth over the smallest decade of samples.
fn bounded(ratios: &[f64]) -> bool {
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    if !max.is_finite() || max > RATIO_CAP {
        return false;
    }
    let n = ratios.len();
    let head = ratios[..n / 2].iter().cloned().fold(0.0, f64::max);
    let tail = ratios[n - n / 8..].iter().cloned().fold(0.0, f64::max);
    tail <= 10.0 * head.max(1e-300) || tail < 1e-12
}

/// Estimate of sup_{|x| = r0/2} |f(0, x)|, infinite when f has no limit.
pub fn check_vanishing_at_zero(f: &ScalarField, r0: f64) -> f64 {
    if f.is_zero() {
        return 0.0;
    }
    let rho = 0.5 * r0;
    match f.limit_at_zero(rho) {
        Ok(g) => circle_nodes(CIRCLE, rho, C64::new(0.0, 0.0)).into_iter().map(|x| horner(&g, x).norm()).fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    }
}

/// Fit the constants of c1)–c3) on a log-spaced t grid × the circle
/// |x| = 0.95·R0.
pub fn check_conditions(spec: &EquationSpec) -> ConditionReport {
    let ts = log_nodes(1e-6, spec.t0, NODES);
    let r = 0.95 * spec.r0;
    let xs = circle_nodes(CIRCLE, r, C64::new(0.0, 0.0));
    let lam0 = spec.lambda0_germ().unwrap_or_default();

    let sups: Vec<(f64, f64, f64)> = par::map_slice(&ts, |&t| {
        let mut sa = 0.0f64;
        let mut sl = 0.0f64;
        let mut sb = 0.0f64;
        for &x in &xs {
            sa = sa.max(spec.a.eval(t, x).norm());
            sl = sl.max((spec.lambda.eval(t, x) - horner(&lam0, x)).norm());
            sb = sb.max(spec.b.eval(t, x).norm());
        }
        (sa, sl, sb)
    });

    let (c1_ok, a_const, mu_exponent, c1_fit_rms) = if spec.a.is_zero() || sups.iter().all(|s| s.0 == 0.0) {
        (true, 0.0, f64::INFINITY, 0.0)
    } else {
        let pts: Vec<(f64, f64)> = ts.iter().zip(&sups).filter(|(_, s)| s.0 > 0.0).map(|(t, s)| (t.ln(), s.0.ln())).collect();
        let (slope, _, rms) = lsq_slope(&pts);
        let a = ts.iter().zip(&sups).map(|(t, s)| s.0 / t.powf(slope)).fold(0.0, f64::max);
        (slope > 1e-3 && a.is_finite(), a, slope, rms)
    };

    let rev = |v: Vec<f64>| v.into_iter().rev().collect::<Vec<_>>();
    let lam_ratios = rev(ts.iter().zip(&sups).map(|(t, s)| s.1 / spec.weight.mu(*t)).collect());
    let b_ratios = rev(ts.iter().zip(&sups).map(|(t, s)| s.2 * t.ln().abs() / spec.weight.mu(*t)).collect());
    let lambda_const = lam_ratios.iter().cloned().fold(0.0, f64::max);
    let b_const = b_ratios.iter().cloned().fold(0.0, f64::max);

    ConditionReport {
        c1_ok,
        a_const,
        mu_exponent,
        c1_fit_rms,
        c2_ok: bounded(&lam_ratios),
        lambda_const,
        c3_ok: bounded(&b_ratios),
        b_const,
        samples_used: ts.len() * xs.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Monomial, WeightFn};

    fn spec(a: &str, lam: &str, b: &str, w: WeightFn) -> EquationSpec {
        let f = |s: &str| ScalarField::parse(s, 0.3, 1.0).unwrap();
        EquationSpec::new(
            f(a),
            f(lam),
            f(b),
            vec![Monomial { j: 0, alpha: 2, coeff: f("1") }],
            0.3,
            1.0,
            1.0,
            w,
        )
    }

    #[test]
    fn quadratic_gradient_passes_all() {
        let r = check_conditions(&EquationSpec::quadratic_gradient(3.0, 1.0));
        assert!(r.all_ok(), "{r:?}");
        assert!((r.mu_exponent - 1.0).abs() < 1e-6);
        assert!((r.a_const - 0.95).abs() < 1e-6);
    }

    #[test]
    fn constant_coefficients_and_drift_bound() {
        let r = check_conditions(&spec("x*t", "3", "0", WeightFn::sqrt(0.3)));
        assert!(r.c2_ok && r.c3_ok && r.lambda_const == 0.0 && r.b_const == 0.0);
        let r = check_conditions(&spec("x*t", "3", "t", WeightFn::sqrt(0.3)));
        assert!(r.c3_ok);
        // sup of √t·|log t| on (0, 0.3] is attained at t = e^{−2}
        let want = (-1f64).exp() * 2.0;
        assert!((r.b_const - want).abs() < 5e-3 * want, "{}", r.b_const);
    }

    #[test]
    fn flags_violations() {
        let r = check_conditions(&spec("x*t", "3", "t^0.2", WeightFn::power(1.0, 0.3)));
        assert!(!r.c3_ok);
        let r = check_conditions(&spec("x*t", "3 + t^0.1", "0", WeightFn::power(1.0, 0.3)));
        assert!(!r.c2_ok);
        let r = check_conditions(&spec("0", "3", "0", WeightFn::power(1.0, 0.3)));
        assert!(r.c1_ok && r.mu_exponent.is_infinite());
    }
}

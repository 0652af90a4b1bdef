use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_vanishing_at_zero, EquationSpec, Monomial, ScalarField, WeightFn};
use crate::error::{Error, Result};
use crate::expr::{Expr, Point, Var};

pub type FullF = Arc<dyn Fn(f64, C64, C64, C64) -> C64 + Send + Sync>;

#[derive(Debug, Clone)]
pub struct NormalForm {
    pub spec: EquationSpec,
    /// Largest discrepancy between F and its truncated expansion on test points.
    pub tail_bound: f64,
}

struct Torus {
    f: FullF,
    rho: f64,
    m: usize,
}

impl Torus {
    /// All coefficients c_{jα}(t, x), j, α < m, by a 2-D DFT on |z1| = |z2| = rho.
    fn coefficients(&self, t: f64, x: C64) -> Vec<Vec<C64>> {
        let m = self.m;
        let roots: Vec<C64> = (0..m).map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64)).collect();
        let mut rows: Vec<Vec<C64>> = Vec::with_capacity(m);
        for &w1 in &roots {
            let samples: Vec<C64> = roots.iter().map(|&w2| (self.f)(t, x, w1 * self.rho, w2 * self.rho)).collect();
            rows.push(crate::germ::dft(&samples));
        }
        let mut out = vec![vec![C64::new(0.0, 0.0); m]; m];
        for alpha in 0..m {
            let col: Vec<C64> = rows.iter().map(|r| r[alpha]).collect();
            let spec = crate::germ::dft(&col);
            for j in 0..m {
                out[j][alpha] = spec[j] / ((m * m) as f64 * self.rho.powi((j + alpha) as i32));
            }
        }
        out
    }

    fn field(self: &Arc<Self>, j: usize, alpha: usize, t0: f64, r0: f64) -> ScalarField {
        let me = self.clone();
        ScalarField::new(move |t, x| me.coefficients(t, x)[j][alpha], t0, r0)
    }
}

/// Expand F in (z1, z2) by bivariate Cauchy integrals on a torus and return
/// the normal form, validating A₂) and A₃).
#[allow(clippy::too_many_arguments)]
pub fn normal_form(
    f: FullF,
    t0: f64,
    r0: f64,
    rho0: f64,
    j_max: usize,
    a_max: usize,
    weight: WeightFn,
) -> Result<NormalForm> {
    let m = 16usize.max((j_max.max(a_max) + 2).next_power_of_two());
    let torus = Arc::new(Torus { f: f.clone(), rho: 0.5 * rho0, m });
    let probes: Vec<(f64, C64)> = [t0, 0.1 * t0, 1e-3 * t0]
        .iter()
        .flat_map(|&t| [(t, C64::new(0.0, 0.0)), (t, C64::from_polar(0.5 * r0, 0.7)), (t, C64::from_polar(0.5 * r0, 2.9))])
        .collect();
    let tables: Vec<Vec<Vec<C64>>> = probes.iter().map(|&(t, x)| torus.coefficients(t, x)).collect();
    let size = |j: usize, a: usize| tables.iter().map(|tb| tb[j][a].norm() * torus.rho.powi((j + a) as i32)).fold(0.0, f64::max);
    let scale = (0..m).flat_map(|j| (0..m).map(move |a| (j, a))).map(|(j, a)| size(j, a)).fold(1e-300, f64::max);

    let mut tail = 0.0f64;
    let mut nonlinear = Vec::new();
    for j in 0..m / 2 {
        for a in 0..m / 2 {
            let s = size(j, a);
            if j + a < 2 || s <= 1e-13 * scale {
                continue;
            }
            if j > j_max || a > a_max {
                tail = tail.max(s);
            } else {
                nonlinear.push(Monomial { j: j as u32, alpha: a as u32, coeff: torus.field(j, a, t0, r0) });
            }
        }
    }
    // aliasing from degrees ≥ m/2 shows up in the upper half of the table
    let alias = (m / 2..m).flat_map(|j| (0..m).map(move |a| (j, a))).map(|(j, a)| size(j, a)).fold(0.0, f64::max);
    tail = tail.max(alias);
    if tail > 1e-8 * scale {
        return Err(Error::Truncation(format!(
            "discarded Taylor coefficients up to {tail:.3e} (relative {:.3e}); raise J_max/A_max",
            tail / scale
        )));
    }
    let ff = f.clone();
    let a = ScalarField::new(move |t, x| ff(t, x, C64::new(0.0, 0.0), C64::new(0.0, 0.0)), t0, r0);
    let spec = EquationSpec::new(a, torus.field(1, 0, t0, r0), torus.field(0, 1, t0, r0), nonlinear, t0, r0, rho0, weight);
    validate_a2_a3(&spec)?;
    Ok(NormalForm { spec, tail_bound: tail })
}

pub(crate) fn validate_a2_a3(spec: &EquationSpec) -> Result<()> {
    let a0 = check_vanishing_at_zero(&spec.a, spec.r0);
    if a0 > 1e-6 {
        return Err(Error::spec("A2", format!("a(0,x) does not vanish (sup ≈ {a0:.3e})")));
    }
    let b0 = check_vanishing_at_zero(&spec.b, spec.r0);
    if b0 > 1e-6 {
        return Err(Error::spec("A3", format!("b(0,x) does not vanish (sup ≈ {b0:.3e})")));
    }
    Ok(())
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Normal form of an expression F(t, x, z1, z2) by symbolic differentiation
/// at z = 0; the truncated expansion is cross-checked against F on random
/// points of the polydisc.
#[allow(clippy::too_many_arguments)]
pub fn normal_form_symbolic(
    f: &Expr,
    t0: f64,
    r0: f64,
    rho0: f64,
    j_max: usize,
    a_max: usize,
    weight: WeightFn,
) -> Result<NormalForm> {
    let at_zero = |e: &Expr| e.substitute(Var::Z1, 0.0).substitute(Var::Z2, 0.0);
    let mut coeffs: Vec<(usize, usize, Expr)> = Vec::new();
    let mut dz1 = f.clone();
    for j in 0..=j_max {
        let mut d = dz1.clone();
        for a in 0..=a_max {
            let c = at_zero(&d);
            if !c.is_zero() {
                let c = if j + a > 1 { Expr::Mul(Box::new(Expr::Num(1.0 / (factorial(j) * factorial(a)))), Box::new(c)) } else { c };
                coeffs.push((j, a, c));
            }
            d = d.diff(Var::Z2);
        }
        dz1 = dz1.diff(Var::Z1);
    }
    let get = |j: usize, a: usize| {
        coeffs.iter().find(|(jj, aa, _)| *jj == j && *aa == a).map(|(_, _, e)| e.clone()).unwrap_or(Expr::Num(0.0))
    };
    let field = |e: &Expr| ScalarField::from_expr(e, t0, r0);
    let nonlinear: Vec<Monomial> = coeffs
        .iter()
        .filter(|(j, a, _)| j + a >= 2)
        .map(|(j, a, e)| Monomial { j: *j as u32, alpha: *a as u32, coeff: field(e) })
        .collect();
    let spec = EquationSpec::new(field(&get(0, 0)), field(&get(1, 0)), field(&get(0, 1)), nonlinear, t0, r0, rho0, weight);

    let prog = f.compile();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut tail = 0.0f64;
    let mut scale = 1e-300f64;
    let rz = 0.5 * rho0;
    for _ in 0..100 {
        let t = t0 * rng.gen_range(1e-3..1.0f64);
        let x = C64::from_polar(0.9 * r0 * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..2.0 * PI));
        let z1 = C64::from_polar(rz * rng.gen::<f64>(), rng.gen_range(0.0..2.0 * PI));
        let z2 = C64::from_polar(rz * rng.gen::<f64>(), rng.gen_range(0.0..2.0 * PI));
        let exact = prog.eval(&Point { t, x, z1, z2 });
        tail = tail.max((exact - spec.f(t, x, z1, z2)).norm());
        scale = scale.max(exact.norm());
    }
    if tail > 1e-8 * scale.max(1.0) {
        return Err(Error::Truncation(format!("expansion misses F by {tail:.3e}; raise J_max/A_max")));
    }
    validate_a2_a3(&spec)?;
    Ok(NormalForm { spec, tail_bound: tail })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn full(e: &Expr) -> FullF {
        let p = e.compile();
        Arc::new(move |t, x, z1, z2| p.eval(&Point { t, x, z1, z2 }))
    }

    fn coeff(spec: &EquationSpec, j: u32, a: u32, t: f64, x: f64) -> C64 {
        spec.nonlinear
            .iter()
            .filter(|m| m.j == j && m.alpha == a)
            .map(|m| m.coeff.eval(t, C64::new(x, 0.0)))
            .sum()
    }

    #[test]
    fn reads_off_polynomial_coefficients() {
        let e = parse_expr("x*t + 3*z1 + z2^2").unwrap();
        for nf in [
            normal_form(full(&e), 0.3, 1.0, 1.0, 4, 4, WeightFn::power(1.0, 0.3)).unwrap(),
            normal_form_symbolic(&e, 0.3, 1.0, 1.0, 4, 4, WeightFn::power(1.0, 0.3)).unwrap(),
        ] {
            let s = &nf.spec;
            let (t, x) = (0.2, C64::new(0.3, 0.1));
            assert!((s.a.eval(t, x) - x * t).norm() < 1e-12);
            assert!((s.lambda.eval(t, x) - 3.0).norm() < 1e-12);
            assert!(s.b.eval(t, x).norm() < 1e-12);
            assert!((coeff(s, 0, 2, t, 0.3) - 1.0).norm() < 1e-12);
            assert_eq!(s.nonlinear.len(), 1);
        }
    }

    #[test]
    fn mixed_monomial() {
        let e = parse_expr("z1*z2").unwrap();
        let nf = normal_form(full(&e), 0.3, 1.0, 1.0, 3, 3, WeightFn::power(1.0, 0.3)).unwrap();
        assert!((coeff(&nf.spec, 1, 1, 0.1, 0.2) - 1.0).norm() < 1e-12);
        assert!(nf.spec.a.eval(0.1, C64::new(0.2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rejects_nonvanishing_source() {
        let e = parse_expr("x + z1").unwrap();
        let err = normal_form_symbolic(&e, 0.3, 1.0, 1.0, 3, 3, WeightFn::power(1.0, 0.3)).unwrap_err();
        assert!(matches!(err, Error::SpecInvalid { ref assumption, .. } if assumption == "A2"));
    }

    #[test]
    fn truncation_is_reported() {
        let e = parse_expr("exp(z1) - 1 - z1 + t*x").unwrap();
        assert!(matches!(
            normal_form_symbolic(&e, 0.3, 1.0, 1.0, 2, 2, WeightFn::power(1.0, 0.3)),
            Err(Error::Truncation(_))
        ));
        assert!(normal_form_symbolic(&e, 0.3, 1.0, 1.0, 24, 2, WeightFn::power(1.0, 0.3)).is_ok());
    }
}

//! Finite log-power series in t with holomorphic germ coefficients:
//! Σ c_{e,k}(x)·t^e·(log t)^k.
//!
//! This is the exact bookkeeping behind the reduction ladder: coefficient
//! fields given as expressions expand into such series, the Euler operator
//! t∂_t − λ₀ is inverted term by term, and the part of the source that
//! survives the ladder is assembled without floating-point cancellation.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::expr::{Expr, Func, Var};
use crate::germ::{convolve, germ_exp, germ_log, germ_pow, germ_recip, horner_d, WORKING_DEGREE};

const KEY_SCALE: f64 = 1e9;

/// Exponents are stored on a 1e-9 lattice so that sums of exponents merge.
pub fn key(e: f64) -> i64 {
    (e * KEY_SCALE).round() as i64
}

pub fn exponent(k: i64) -> f64 {
    k as f64 / KEY_SCALE
}

type Germ = Vec<C64>;

fn gadd(a: &mut Germ, b: &[C64], s: C64) {
    if a.len() < b.len() {
        a.resize(b.len(), C64::new(0.0, 0.0));
    }
    for (ai, bi) in a.iter_mut().zip(b) {
        *ai += bi * s;
    }
}

fn gzero(a: &[C64]) -> bool {
    a.iter().all(|c| *c == C64::new(0.0, 0.0))
}

fn gderiv(a: &[C64]) -> Germ {
    a.iter().enumerate().skip(1).map(|(k, c)| c * k as f64).collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TSeries {
    terms: BTreeMap<(i64, u32), Germ>,
    /// Set when terms beyond an exponent cap were discarded.
    pub truncated: bool,
}

impl TSeries {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: C64) -> Self {
        Self::monomial(0.0, 0, vec![c])
    }

    pub fn germ(g: Germ) -> Self {
        Self::monomial(0.0, 0, g)
    }

    pub fn x() -> Self {
        Self::germ(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)])
    }

    pub fn t_pow(e: f64) -> Self {
        Self::monomial(e, 0, vec![C64::new(1.0, 0.0)])
    }

    pub fn log_t() -> Self {
        Self::monomial(0.0, 1, vec![C64::new(1.0, 0.0)])
    }

    pub fn monomial(e: f64, k: u32, g: Germ) -> Self {
        let mut s = Self::zero();
        s.insert(key(e), k, g);
        s
    }

    fn insert(&mut self, ek: i64, k: u32, g: Germ) {
        if gzero(&g) {
            return;
        }
        let mut g = g;
        g.truncate(WORKING_DEGREE + 1);
        while g.last().is_some_and(|c| *c == C64::new(0.0, 0.0)) {
            g.pop();
        }
        match self.terms.get_mut(&(ek, k)) {
            Some(existing) => {
                gadd(existing, &g, C64::new(1.0, 0.0));
                while existing.last().is_some_and(|c| *c == C64::new(0.0, 0.0)) {
                    existing.pop();
                }
                if gzero(existing) {
                    self.terms.remove(&(ek, k));
                }
            }
            None => {
                self.terms.insert((ek, k), g);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (f64, u32, &Germ)> {
        self.terms.iter().map(|((e, k), g)| (exponent(*e), *k, g))
    }

    /// Distinct exponents in increasing order.
    pub fn exponents(&self) -> Vec<f64> {
        let mut v: Vec<i64> = self.terms.keys().map(|(e, _)| *e).collect();
        v.dedup();
        v.into_iter().map(exponent).collect()
    }

    pub fn min_exponent(&self) -> Option<f64> {
        self.terms.keys().next().map(|(e, _)| exponent(*e))
    }

    pub fn max_log_power(&self) -> u32 {
        self.terms.keys().map(|(_, k)| *k).max().unwrap_or(0)
    }

    /// Germ multiplying t^e (log t)^k.
    pub fn coeff(&self, e: f64, k: u32) -> Germ {
        self.terms.get(&(key(e), k)).cloned().unwrap_or_default()
    }

    pub fn add(&self, o: &Self) -> Self {
        self.axpy(o, C64::new(1.0, 0.0))
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.axpy(o, C64::new(-1.0, 0.0))
    }

    /// self + s·o
    pub fn axpy(&self, o: &Self, s: C64) -> Self {
        let mut out = self.clone();
        for ((e, k), g) in &o.terms {
            out.insert(*e, *k, g.iter().map(|c| c * s).collect());
        }
        out.truncated |= o.truncated;
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = Self { terms: BTreeMap::new(), truncated: self.truncated };
        for ((e, k), g) in &self.terms {
            out.insert(*e, *k, g.iter().map(|c| c * s).collect());
        }
        out
    }

    /// Product, discarding exponents above `cap`.
    pub fn mul(&self, o: &Self, cap: f64) -> Self {
        let mut out = Self { terms: BTreeMap::new(), truncated: self.truncated || o.truncated };
        let kcap = key(cap);
        for ((e1, k1), g1) in &self.terms {
            for ((e2, k2), g2) in &o.terms {
                if e1 + e2 > kcap {
                    out.truncated = true;
                    continue;
                }
                out.insert(e1 + e2, k1 + k2, convolve(g1, g2, WORKING_DEGREE));
            }
        }
        out
    }

    pub fn mul_germ(&self, g: &[C64]) -> Self {
        let mut out = Self { terms: BTreeMap::new(), truncated: self.truncated };
        for ((e, k), h) in &self.terms {
            out.insert(*e, *k, convolve(h, g, WORKING_DEGREE));
        }
        out
    }

    /// Multiply by t^s.
    pub fn shift(&self, s: f64) -> Self {
        let mut out = Self { terms: BTreeMap::new(), truncated: self.truncated };
        for ((e, k), g) in &self.terms {
            out.insert(e + key(s), *k, g.clone());
        }
        out
    }

    /// Keep exponents ≤ cap.
    pub fn truncate(&self, cap: f64) -> Self {
        let kcap = key(cap);
        let mut out = Self { terms: BTreeMap::new(), truncated: self.truncated };
        for ((e, k), g) in &self.terms {
            if *e <= kcap {
                out.insert(*e, *k, g.clone());
            } else {
                out.truncated = true;
            }
        }
        out
    }

    /// Split into (exponent < e, exponent ≥ e).
    pub fn split_below(&self, e: f64) -> (Self, Self) {
        let ke = key(e);
        let mut lo = Self::zero();
        let mut hi = Self::zero();
        for ((ek, k), g) in &self.terms {
            if *ek < ke {
                lo.insert(*ek, *k, g.clone());
            } else {
                hi.insert(*ek, *k, g.clone());
            }
        }
        hi.truncated = self.truncated;
        (lo, hi)
    }

    /// Largest coefficient modulus (a scale for cancellation tests).
    pub fn max_coeff(&self) -> f64 {
        self.terms.values().flat_map(|g| g.iter()).map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Drop coefficients below `tol` in modulus.
    pub fn prune(&self, tol: f64) -> Self {
        let mut out = Self { terms: BTreeMap::new(), truncated: self.truncated };
        for ((e, k), g) in &self.terms {
            let h: Germ = g.iter().map(|c| if c.norm() < tol { C64::new(0.0, 0.0) } else { *c }).collect();
            out.insert(*e, *k, h);
        }
        out
    }

    pub fn dx(&self) -> Self {
        let mut out = Self { terms: BTreeMap::new(), truncated: self.truncated };
        for ((e, k), g) in &self.terms {
            out.insert(*e, *k, gderiv(g));
        }
        out
    }

    /// t∂_t: t^e L^k ↦ e t^e L^k + k t^e L^{k−1}.
    pub fn t_dt(&self) -> Self {
        let mut out = Self { terms: BTreeMap::new(), truncated: self.truncated };
        for ((e, k), g) in &self.terms {
            let ev = exponent(*e);
            if ev != 0.0 {
                out.insert(*e, *k, g.iter().map(|c| c * ev).collect());
            }
            if *k > 0 {
                out.insert(*e, k - 1, g.iter().map(|c| c * *k as f64).collect());
            }
        }
        out
    }

    pub fn eval(&self, t: f64, x: C64) -> C64 {
        self.eval_d(t, x).0
    }

    /// Value and ∂_x at (t, x).
    pub fn eval_d(&self, t: f64, x: C64) -> (C64, C64) {
        let lt = t.ln();
        let mut v = C64::new(0.0, 0.0);
        let mut d = C64::new(0.0, 0.0);
        let mut last_e = i64::MIN;
        let mut te = 0.0;
        for ((e, k), g) in &self.terms {
            if *e != last_e {
                te = (exponent(*e) * lt).exp();
                last_e = *e;
            }
            let f = te * lt.powi(*k as i32);
            let (p, dp) = horner_d(g, x);
            v += p * f;
            d += dp * f;
        }
        (v, d)
    }

    /// The coefficient germ of t^0 (log t)^0, and whether anything else sits
    /// at exponent ≤ 0.
    fn split_constant(&self) -> (Germ, bool) {
        let mut c = Germ::new();
        let mut other_nonpositive = false;
        for ((e, k), g) in &self.terms {
            if *e == 0 && *k == 0 {
                c = g.clone();
            } else if *e <= 0 {
                other_nonpositive = true;
            }
        }
        (c, other_nonpositive)
    }

    /// Leading term t^{e0}·g0(x) with nothing else at exponent e0.
    fn leading(&self) -> Result<(i64, Germ)> {
        let Some(&(e0, k0)) = self.terms.keys().next() else {
            return Err(Error::Division("empty series".into()));
        };
        let others = self.terms.keys().filter(|(e, _)| *e == e0).count();
        if k0 != 0 || others != 1 {
            return Err(Error::Unsupported("leading term carries log t".into()));
        }
        Ok((e0, self.terms[&(e0, 0)].clone()))
    }

    /// Real power (principal branch) with exponents above `cap` discarded.
    pub fn powf(&self, p: f64, cap: f64) -> Result<Self> {
        if p == 0.0 {
            return Ok(Self::constant(C64::new(1.0, 0.0)));
        }
        if p.fract() == 0.0 && (1.0..=16.0).contains(&p) {
            let mut out = self.clone();
            for _ in 1..(p as usize) {
                out = out.mul(self, cap);
            }
            return Ok(out.truncate(cap));
        }
        if self.is_zero() {
            return if p > 0.0 { Ok(Self::zero()) } else { Err(Error::Division("0 to a negative power".into())) };
        }
        let (e0, g0) = self.leading()?;
        let g0inv = germ_recip(&g0, WORKING_DEGREE)?;
        let lead_pow = germ_pow(&g0, p, WORKING_DEGREE)?;
        let shifted_cap = cap - p * exponent(e0);
        let mut r = Self::zero();
        for ((e, k), g) in &self.terms {
            if *e == e0 && *k == 0 {
                continue;
            }
            r.insert(e - e0, *k, convolve(g, &g0inv, WORKING_DEGREE));
        }
        let mut sum = Self::constant(C64::new(1.0, 0.0));
        let mut rn = Self::constant(C64::new(1.0, 0.0));
        let mut coef = 1.0;
        for n in 1..200u32 {
            rn = rn.mul(&r, shifted_cap);
            if rn.is_zero() {
                break;
            }
            coef *= (p - (n - 1) as f64) / n as f64;
            if coef == 0.0 {
                break;
            }
            sum = sum.axpy(&rn, C64::new(coef, 0.0));
        }
        let mut out = sum.mul_germ(&lead_pow).shift(p * exponent(e0));
        out.truncated |= !r.is_zero();
        Ok(out.truncate(cap))
    }

    pub fn exp(&self, cap: f64) -> Result<Self> {
        let (c, bad) = self.split_constant();
        if bad {
            return Err(Error::Unsupported("exp of a series with non-positive exponents besides the constant".into()));
        }
        let mut r = self.clone();
        r.terms.remove(&(0, 0));
        let e0 = germ_exp(&c, WORKING_DEGREE);
        let mut sum = Self::constant(C64::new(1.0, 0.0));
        let mut rn = Self::constant(C64::new(1.0, 0.0));
        let mut fact = 1.0;
        for n in 1..200u32 {
            rn = rn.mul(&r, cap);
            if rn.is_zero() {
                break;
            }
            fact *= n as f64;
            sum = sum.axpy(&rn, C64::new(1.0 / fact, 0.0));
        }
        let mut out = sum.mul_germ(&e0);
        out.truncated |= !r.is_zero();
        Ok(out.truncate(cap))
    }

    pub fn ln(&self, cap: f64) -> Result<Self> {
        let (e0, g0) = self.leading()?;
        let g0inv = germ_recip(&g0, WORKING_DEGREE)?;
        let mut r = Self::zero();
        for ((e, k), g) in &self.terms {
            if *e == e0 && *k == 0 {
                continue;
            }
            r.insert(e - e0, *k, convolve(g, &g0inv, WORKING_DEGREE));
        }
        let mut out = Self::germ(germ_log(&g0, WORKING_DEGREE)?);
        if e0 != 0 {
            out = out.add(&Self::log_t().scale(C64::new(exponent(e0), 0.0)));
        }
        let mut rn = Self::constant(C64::new(1.0, 0.0));
        for n in 1..200u32 {
            rn = rn.mul(&r, cap);
            if rn.is_zero() {
                break;
            }
            let s = if n % 2 == 1 { 1.0 } else { -1.0 } / n as f64;
            out = out.axpy(&rn, C64::new(s, 0.0));
        }
        out.truncated |= !r.is_zero();
        Ok(out.truncate(cap))
    }

    /// Expand an expression in t, x. Variables z1, z2 are not allowed.
    pub fn from_expr(e: &Expr, cap: f64) -> Result<Self> {
        let inner = cap + 4.0;
        let s = Self::expand(e, inner)?;
        Ok(s.truncate(cap))
    }

    fn expand(e: &Expr, cap: f64) -> Result<Self> {
        Ok(match e {
            Expr::Num(v) => Self::constant(C64::new(*v, 0.0)),
            Expr::I => Self::constant(C64::new(0.0, 1.0)),
            Expr::Var(Var::T) => Self::t_pow(1.0),
            Expr::Var(Var::X) => Self::x(),
            Expr::Var(_) => return Err(Error::Unsupported("z1/z2 in a coefficient field".into())),
            Expr::Neg(a) => Self::expand(a, cap)?.scale(C64::new(-1.0, 0.0)),
            Expr::Add(a, b) => Self::expand(a, cap)?.add(&Self::expand(b, cap)?),
            Expr::Sub(a, b) => Self::expand(a, cap)?.sub(&Self::expand(b, cap)?),
            Expr::Mul(a, b) => Self::expand(a, cap)?.mul(&Self::expand(b, cap)?, cap),
            Expr::Div(a, b) => {
                let den = Self::expand(b, cap)?;
                let lead = den.min_exponent().unwrap_or(0.0);
                let num = Self::expand(a, cap + lead.max(0.0))?;
                num.mul(&den.powf(-1.0, cap + lead.abs())?, cap)
            }
            Expr::Pow(a, p) => {
                if **a == Expr::Var(Var::T) {
                    Self::t_pow(*p)
                } else {
                    Self::expand(a, cap)?.powf(*p, cap)?
                }
            }
            Expr::Func(Func::Exp, a) => Self::expand(a, cap)?.exp(cap)?,
            Expr::Func(Func::Log, a) => Self::expand(a, cap)?.ln(cap)?,
            Expr::Func(Func::Sqrt, a) => Self::expand(a, cap)?.powf(0.5, cap)?,
        })
    }
}

/// Finite-part inverse of t∂_t − λ₀(x) on t^e·Q(log t), with Q given by its
/// germ coefficients q[k] of (log t)^k. Non-resonant exponents use
/// P = Σ_j (−1)^j Q^{(j)} / (e − λ₀)^{j+1}; the resonant case integrates Q in
/// log t without a constant (no free t^{λ₀} term).
pub fn invert_euler(e: f64, q: &[Germ], lam0: &[C64], resonance_tol: f64) -> Result<Vec<Germ>> {
    let lam_const = lam0.iter().skip(1).all(|c| c.norm() == 0.0);
    let l00 = lam0.first().copied().unwrap_or_default();
    let gap0 = C64::new(e, 0.0) - l00;
    if gap0.norm() < resonance_tol {
        if !lam_const {
            return Err(Error::Unsupported("resonance with an x-dependent λ(0,x)".into()));
        }
        let mut p = vec![Germ::new(); q.len() + 1];
        for (k, qk) in q.iter().enumerate() {
            p[k + 1] = qk.iter().map(|c| c / (k + 1) as f64).collect();
        }
        return Ok(p);
    }
    let mut gap: Germ = lam0.iter().map(|c| -c).collect();
    if gap.is_empty() {
        gap.push(C64::new(0.0, 0.0));
    }
    gap[0] += e;
    let inv = germ_recip(&gap, WORKING_DEGREE)?;
    let mut p = vec![Germ::new(); q.len()];
    // Q^{(j)} as a log-polynomial: derivative shifts k → k−1 with factor k.
    let mut dq: Vec<Germ> = q.to_vec();
    let mut invpow = inv.clone();
    let mut sign = 1.0;
    for _ in 0..q.len() {
        for (k, c) in dq.iter().enumerate() {
            let term = convolve(c, &invpow, WORKING_DEGREE);
            gadd(&mut p[k], &term, C64::new(sign, 0.0));
        }
        let next: Vec<Germ> = (1..dq.len()).map(|k| dq[k].iter().map(|c| c * k as f64).collect()).collect();
        dq = next;
        invpow = convolve(&invpow, &inv, WORKING_DEGREE);
        sign = -sign;
        if dq.is_empty() {
            break;
        }
    }
    Ok(p)
}

/// Apply [`invert_euler`] to every exponent of `g`.
pub fn invert_euler_series(g: &TSeries, lam0: &[C64], resonance_tol: f64) -> Result<TSeries> {
    let mut out = TSeries { terms: BTreeMap::new(), truncated: g.truncated };
    for e in g.exponents() {
        let kmax = g.terms.keys().filter(|(ek, _)| *ek == key(e)).map(|(_, k)| *k).max().unwrap_or(0);
        let q: Vec<Germ> = (0..=kmax).map(|k| g.coeff(e, k)).collect();
        let p = invert_euler(e, &q, lam0, resonance_tol)?;
        for (k, pk) in p.into_iter().enumerate() {
            out.insert(key(e), k as u32, pk);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn c(v: f64) -> C64 {
        C64::new(v, 0.0)
    }

    #[test]
    fn expansion_matches_direct_evaluation() {
        for (s, t, x) in [
            ("x*t + 3", 0.1, 0.2),
            ("exp(t)*(1 + x)^2", 0.05, -0.1),
            ("t^1.5*log(t) - 2*t^2/(1 + t)", 0.02, 0.0),
            ("sqrt(4 + t)*x", 0.1, 0.3),
        ] {
            let e = parse_expr(s).unwrap();
            let ser = TSeries::from_expr(&e, 12.0).unwrap();
            let want = e.eval(&crate::expr::Point::tx(t, C64::new(x, 0.0)));
            let got = ser.eval(t, C64::new(x, 0.0));
            assert!((got - want).norm() < 1e-12, "{s}: {got} vs {want}");
        }
    }

    #[test]
    fn euler_inverse_non_resonant_and_resonant() {
        // (t∂t − 3)(−x t/2) = x t
        let g = TSeries::monomial(1.0, 0, vec![c(0.0), c(1.0)]);
        let u = invert_euler_series(&g, &[c(3.0)], 1e-9).unwrap();
        assert_eq!(u.coeff(1.0, 0), vec![c(0.0), c(-0.5)]);
        // (t∂t − 1)(x t log t) = x t
        let u = invert_euler_series(&g, &[c(1.0)], 1e-9).unwrap();
        assert!(u.coeff(1.0, 0).is_empty());
        assert_eq!(u.coeff(1.0, 1), vec![c(0.0), c(1.0)]);
        // t² L² at λ₀ = 1 gives t²(L² − 2L + 2)
        let g = TSeries::monomial(2.0, 2, vec![c(1.0)]);
        let u = invert_euler_series(&g, &[c(1.0)], 1e-9).unwrap();
        assert_eq!(u.coeff(2.0, 2), vec![c(1.0)]);
        assert_eq!(u.coeff(2.0, 1), vec![c(-2.0)]);
        assert_eq!(u.coeff(2.0, 0), vec![c(2.0)]);
    }

    #[test]
    fn euler_inverse_is_a_right_inverse() {
        let g = TSeries::from_expr(&parse_expr("x*t^1.5*log(t)^2 + t^0.5*exp(x)").unwrap(), 4.0).unwrap();
        let lam0 = vec![c(0.8), c(0.1)];
        let u = invert_euler_series(&g, &lam0, 1e-9).unwrap();
        let back = u.t_dt().sub(&u.mul_germ(&lam0));
        assert!(back.sub(&g).max_coeff() < 1e-12);
    }
}

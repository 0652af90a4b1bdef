//! Holomorphic germs at x = 0 as truncated Taylor series, plus the circle
//! sampling / DFT round trip used everywhere functions of x are handled.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Working truncation degree for germ products.
pub const WORKING_DEGREE: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct HoloGerm {
    pub coeffs: Vec<C64>,
    pub radius: f64,
}

impl HoloGerm {
    pub fn new(coeffs: Vec<C64>, radius: f64) -> Self {
        let mut g = HoloGerm { coeffs, radius };
        g.trim();
        g
    }

    /// Polynomial with real coefficients (entire, so the radius is infinite).
    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| C64::new(c, 0.0)).collect(), f64::INFINITY)
    }

    pub fn polynomial(coeffs: Vec<C64>) -> Self {
        Self::new(coeffs, f64::INFINITY)
    }

    pub fn zero() -> Self {
        HoloGerm { coeffs: Vec::new(), radius: f64::INFINITY }
    }

    pub fn constant(c: C64) -> Self {
        Self::polynomial(vec![c])
    }

    pub fn identity() -> Self {
        Self::polynomial(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)])
    }

    fn trim(&mut self) {
        while matches!(self.coeffs.last(), Some(c) if *c == C64::new(0.0, 0.0)) {
            self.coeffs.pop();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == C64::new(0.0, 0.0))
    }

    pub fn coeff(&self, k: usize) -> C64 {
        self.coeffs.get(k).copied().unwrap_or_default()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: C64) -> C64 {
        horner(&self.coeffs, x)
    }

    /// Value and first derivative in one pass.
    pub fn eval_d(&self, x: C64) -> (C64, C64) {
        horner_d(&self.coeffs, x)
    }

    pub fn derivative(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| c * k as f64)
            .collect();
        HoloGerm::new(coeffs, self.radius)
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..n).map(|k| self.coeff(k) + other.coeff(k)).collect();
        HoloGerm::new(coeffs, self.radius.min(other.radius))
    }

    pub fn scale(&self, s: C64) -> Self {
        HoloGerm::new(self.coeffs.iter().map(|c| c * s).collect(), self.radius)
    }

    /// Truncated Cauchy product; the radius is the smaller of the two.
    pub fn mul(&self, other: &Self, degree: usize) -> Self {
        HoloGerm::new(convolve(&self.coeffs, &other.coeffs, degree), self.radius.min(other.radius))
    }

    /// Largest |c_k| r^k, a crude sup bound on |x| = r.
    pub fn sup_bound(&self, r: f64) -> f64 {
        self.coeffs.iter().enumerate().map(|(k, c)| c.norm() * r.powi(k as i32)).sum()
    }

    /// Fit geometric decay of the coefficients; returns the fitted ratio
    /// (|c_k| ~ q^k) or `None` when fewer than three nonzero coefficients exist.
    pub fn decay_ratio(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm() > 1e-300)
            .map(|(k, c)| (k as f64, c.norm().ln()))
            .collect();
        if pts.len() < 3 {
            return None;
        }
        Some(crate::numerics::lsq_slope(&pts).0.exp())
    }

    /// Germ from M equispaced samples on |x| = rho (centre 0).
    pub fn from_circle_samples(samples: &[C64], rho: f64) -> Self {
        HoloGerm::new(taylor_from_circle(samples, rho, 1e-15), rho)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let n = self.coeffs.len().max(other.coeffs.len());
        (0..n).map(|k| (self.coeff(k) - other.coeff(k)).norm()).fold(0.0, f64::max)
    }
}

pub fn horner(c: &[C64], x: C64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for ck in c.iter().rev() {
        acc = acc * x + ck;
    }
    acc
}

pub fn horner_d(c: &[C64], x: C64) -> (C64, C64) {
    let mut p = C64::new(0.0, 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for ck in c.iter().rev() {
        dp = dp * x + p;
        p = p * x + ck;
    }
    (p, dp)
}

pub fn convolve(a: &[C64], b: &[C64], degree: usize) -> Vec<C64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let n = (a.len() + b.len() - 1).min(degree + 1);
    let mut out = vec![C64::new(0.0, 0.0); n];
    for (i, ai) in a.iter().enumerate().take(n) {
        if *ai == C64::new(0.0, 0.0) {
            continue;
        }
        for (j, bj) in b.iter().enumerate().take(n - i) {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// The M equispaced points ρ·e^{2πik/M} (plus an optional centre).
pub fn circle_nodes(m: usize, rho: f64, centre: C64) -> Vec<C64> {
    (0..m)
        .map(|k| centre + C64::from_polar(rho, 2.0 * PI * k as f64 / m as f64))
        .collect()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Forward DFT, unnormalized.
pub fn dft(values: &[C64]) -> Vec<C64> {
    let mut buf = values.to_vec();
    if buf.len() > 1 {
        let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
        fft.process(&mut buf);
    }
    buf
}

/// Taylor coefficients of a holomorphic function from samples on |x| = rho.
/// Trailing coefficients whose contribution on the circle is below
/// `chop` times the largest one are dropped.
pub fn taylor_from_circle(samples: &[C64], rho: f64, chop: f64) -> Vec<C64> {
    let m = samples.len();
    let spec = dft(samples);
    let scaled: Vec<C64> = spec.iter().map(|c| c / m as f64).collect();
    let big = scaled.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if big == 0.0 {
        return Vec::new();
    }
    let mut keep = scaled.len();
    while keep > 0 && scaled[keep - 1].norm() <= chop * big {
        keep -= 1;
    }
    let mut out = Vec::with_capacity(keep);
    let mut rk = 1.0;
    for c in scaled.iter().take(keep) {
        out.push(c / rk);
        rk *= rho;
    }
    out
}

/// exp of a germ (truncated): g' = f' g.
pub fn germ_exp(f: &[C64], degree: usize) -> Vec<C64> {
    let n = degree + 1;
    let mut g = vec![C64::new(0.0, 0.0); n];
    g[0] = f.first().copied().unwrap_or_default().exp();
    for k in 1..n {
        let mut s = C64::new(0.0, 0.0);
        for j in 1..=k {
            if let Some(fj) = f.get(j) {
                s += fj * g[k - j] * j as f64;
            }
        }
        g[k] = s / k as f64;
    }
    g
}

/// Principal log of a germ with f(0) ≠ 0.
pub fn germ_log(f: &[C64], degree: usize) -> Result<Vec<C64>> {
    let f0 = f.first().copied().unwrap_or_default();
    if f0.norm() == 0.0 {
        return Err(Error::Division("log of a germ vanishing at 0".into()));
    }
    let n = degree + 1;
    let mut g = vec![C64::new(0.0, 0.0); n];
    g[0] = f0.ln();
    for k in 1..n {
        let mut s = f.get(k).copied().unwrap_or_default() * k as f64;
        for j in 1..k {
            if let Some(fk) = f.get(k - j) {
                s -= g[j] * fk * j as f64;
            }
        }
        g[k] = s / (f0 * k as f64);
    }
    Ok(g)
}

/// f^p for real p and f(0) ≠ 0 (principal branch).
pub fn germ_pow(f: &[C64], p: f64, degree: usize) -> Result<Vec<C64>> {
    let f0 = f.first().copied().unwrap_or_default();
    if f0.norm() == 0.0 {
        return Err(Error::Division("real power of a germ vanishing at 0".into()));
    }
    let n = degree + 1;
    let mut g = vec![C64::new(0.0, 0.0); n];
    g[0] = f0.powf(p);
    for k in 1..n {
        let mut s = C64::new(0.0, 0.0);
        for j in 1..=k {
            if let Some(fj) = f.get(j) {
                s += fj * g[k - j] * (p * j as f64 - (k - j) as f64);
            }
        }
        g[k] = s / (f0 * k as f64);
    }
    Ok(g)
}

/// 1/f for f(0) ≠ 0.
pub fn germ_recip(f: &[C64], degree: usize) -> Result<Vec<C64>> {
    let f0 = f.first().copied().unwrap_or_default();
    if f0.norm() == 0.0 {
        return Err(Error::Division("reciprocal of a germ vanishing at 0".into()));
    }
    let n = degree + 1;
    let mut g = vec![C64::new(0.0, 0.0); n];
    g[0] = f0.inv();
    for k in 1..n {
        let mut s = C64::new(0.0, 0.0);
        for j in 1..=k {
            if let Some(fj) = f.get(j) {
                s += fj * g[k - j];
            }
        }
        g[k] = -s / f0;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn circle_round_trip_recovers_polynomial() {
        let p = HoloGerm::from_real(&[1.0, -2.0, 0.5, 3.0]);
        let nodes = circle_nodes(32, 0.3, C64::new(0.0, 0.0));
        let vals: Vec<C64> = nodes.iter().map(|&x| p.eval(x)).collect();
        let q = HoloGerm::from_circle_samples(&vals, 0.3);
        assert!(p.max_abs_diff(&q) < 1e-13);
    }

    #[test]
    fn exp_log_pow_recip_agree_with_known_series() {
        let x = [c(0.0), c(1.0)];
        let e = germ_exp(&x, 10);
        let mut fact = 1.0;
        for (k, ek) in e.iter().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            assert!((ek - 1.0 / fact).norm() < 1e-15);
        }
        let one_plus_x = [c(1.0), c(1.0)];
        let l = germ_log(&one_plus_x, 8).unwrap();
        for k in 1..8 {
            let want = if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
            assert!((l[k] - want).norm() < 1e-15);
        }
        let s = germ_pow(&one_plus_x, 0.5, 6).unwrap();
        let sq = convolve(&s, &s, 6);
        assert!((sq[0] - 1.0).norm() < 1e-15 && (sq[1] - 1.0).norm() < 1e-15);
        assert!(sq[2..].iter().all(|v| v.norm() < 1e-14));
        let r = germ_recip(&one_plus_x, 6).unwrap();
        for (k, rk) in r.iter().enumerate() {
            assert!((rk - if k % 2 == 0 { 1.0 } else { -1.0 }).norm() < 1e-15);
        }
    }

    #[test]
    fn derivative_and_eval_d_match() {
        let p = HoloGerm::from_real(&[0.0, 0.0, 1.0, 4.0]);
        let x = C64::new(0.2, -0.1);
        let (v, d) = p.eval_d(x);
        assert!((v - p.eval(x)).norm() < 1e-15);
        assert!((d - p.derivative().eval(x)).norm() < 1e-15);
    }
}

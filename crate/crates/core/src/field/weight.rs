use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::numerics::integrate;

/// Named weight families with closed-form primitives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightForm {
    /// μ(t) = t^p, φ(t) = t^p / p.
    Power(f64),
    /// μ(t) = 1/(log t)², φ(t) = 1/|log t|.
    InverseLogSquare,
}

/// Lower end of the tabulated range of φ.
const T_CUT: f64 = 1e-10;
const TABLE_NODES: usize = 256;
const S_FLOOR: f64 = -700.0;

/// A weight μ(t) on (0, t_max] with its primitive φ(t) = ∫₀^t μ(τ)/τ dτ.
#[derive(Clone)]
pub struct WeightFn {
    mu: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub t_max: f64,
    pub form: Option<WeightForm>,
    table: Arc<OnceLock<Result<Vec<(f64, f64)>>>>,
}

impl fmt::Debug for WeightFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WeightFn({:?}, t_max = {})", self.form, self.t_max)
    }
}

impl WeightFn {
    pub fn new(mu: impl Fn(f64) -> f64 + Send + Sync + 'static, t_max: f64) -> Self {
        WeightFn { mu: Arc::new(mu), t_max, form: None, table: Arc::new(OnceLock::new()) }
    }

    pub fn power(p: f64, t_max: f64) -> Self {
        WeightFn { form: Some(WeightForm::Power(p)), ..Self::new(move |t| t.powf(p), t_max) }
    }

    pub fn sqrt(t_max: f64) -> Self {
        Self::power(0.5, t_max)
    }

    pub fn inverse_log_square(t_max: f64) -> Self {
        WeightFn {
            form: Some(WeightForm::InverseLogSquare),
            ..Self::new(|t| {
                let l = t.ln();
                1.0 / (l * l)
            }, t_max)
        }
    }

    pub fn mu(&self, t: f64) -> f64 {
        (self.mu)(t)
    }

    /// The same weight with the closed form forgotten (forces quadrature).
    pub fn numeric(&self) -> Self {
        WeightFn { form: None, table: Arc::new(OnceLock::new()), ..self.clone() }
    }

    /// μ(t) + |log t|·t^d, the weight that absorbs a base solution in X₁^d.
    pub fn augmented(&self, d: f64) -> Self {
        let mu = self.mu.clone();
        Self::new(move |t| mu(t) + t.ln().abs() * t.powf(d), self.t_max)
    }

    /// φ(t) = ∫₀^t μ(τ)/τ dτ.
    pub fn phi(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        match self.form {
            Some(WeightForm::Power(p)) => Ok(t.powf(p) / p),
            Some(WeightForm::InverseLogSquare) => Ok(1.0 / t.ln().abs()),
            None => self.phi_quadrature(t),
        }
    }

    /// φ by quadrature in σ = log τ. Below σ = −700 (where e^σ underflows)
    /// the tail is closed by one extrapolation step, fitting μ(e^σ) ≈ C·|σ|^{−p}
    /// between −350 and −700; p ≤ 1 means μ is not a weight.
    pub fn phi_quadrature(&self, t: f64) -> Result<f64> {
        let g = |s: f64| C64::new(self.mu(s.exp()), 0.0);
        let (m1, m2) = (self.mu((S_FLOOR / 2.0).exp()), self.mu(S_FLOOR.exp()));
        let tail = if m2 == 0.0 {
            0.0
        } else {
            let p = (m1 / m2).ln() / 2f64.ln();
            if !(p > 1.0) {
                return Err(Error::NonIntegrableWeight(format!("μ(e^σ) decays like |σ|^{{-{p:.3}}}")));
            }
            m2 * S_FLOOR.abs() / (p - 1.0)
        };
        let s = t.ln();
        if s <= S_FLOOR {
            return Ok(tail);
        }
        let body = integrate(g, S_FLOOR, s, 1e-15, 1e-12)
            .map_err(|e| Error::NonIntegrableWeight(format!("quadrature failed: {e}")))?
            .re;
        if !body.is_finite() {
            return Err(Error::NonIntegrableWeight("integral is not finite".into()));
        }
        Ok(tail + body)
    }

    /// φ from a table in σ (built once), cubic Hermite between nodes.
    pub fn phi_cached(&self, t: f64) -> Result<f64> {
        if self.form.is_some() {
            return self.phi(t);
        }
        let table = self
            .table
            .get_or_init(|| {
                let (lo, hi) = (T_CUT.ln(), self.t_max.ln());
                let mut out = Vec::with_capacity(TABLE_NODES);
                let mut acc = self.phi_quadrature(T_CUT)?;
                let mut prev = lo;
                for k in 0..TABLE_NODES {
                    let s = lo + (hi - lo) * k as f64 / (TABLE_NODES - 1) as f64;
                    if k > 0 {
                        acc += integrate(|s| C64::new(self.mu(s.exp()), 0.0), prev, s, 1e-15, 1e-13)?.re;
                    }
                    out.push((s, acc));
                    prev = s;
                }
                Ok(out)
            })
            .clone()?;
        let s = t.ln();
        if s <= table[0].0 {
            return self.phi_quadrature(t);
        }
        let i = table.partition_point(|(si, _)| *si < s).min(table.len() - 1).max(1);
        // cubic Hermite with the exact slope dφ/dσ = μ(e^σ)
        let (s0, p0) = table[i - 1];
        let (s1, p1) = table[i];
        let h = s1 - s0;
        let u = (s - s0) / h;
        let (d0, d1) = (self.mu(s0.exp()) * h, self.mu(s1.exp()) * h);
        let (u2, u3) = (u * u, u * u * u);
        Ok((2.0 * u3 - 3.0 * u2 + 1.0) * p0 + (u3 - 2.0 * u2 + u) * d0 + (-2.0 * u3 + 3.0 * u2) * p1 + (u3 - u2) * d1)
    }

    /// Sampled checks of the weight axioms: positive, increasing, μ → 0 and
    /// φ finite. Returns the first violation.
    pub fn validate(&self) -> Result<()> {
        let n = 60;
        let mut prev = 0.0;
        for k in 0..n {
            let t = (T_CUT.ln() + (self.t_max.ln() - T_CUT.ln()) * k as f64 / (n - 1) as f64).exp();
            let m = self.mu(t);
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::Precondition(format!("μ({t:e}) = {m} is not positive")));
            }
            if m < prev * (1.0 - 1e-12) {
                return Err(Error::Precondition(format!("μ decreases near t = {t:e}")));
            }
            prev = m;
        }
        if self.mu(1e-300_f64.max(T_CUT * 1e-20)) > 0.5 * self.mu(self.t_max) {
            return Err(Error::Precondition("μ does not tend to 0".into()));
        }
        self.phi_quadrature(self.t_max).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms_match_quadrature() {
        let cases = [
            (WeightFn::power(1.0, 0.5), 0.25, 0.25),
            (WeightFn::sqrt(0.5), 0.09, 0.6),
            (WeightFn::inverse_log_square(0.5), (-4f64).exp(), 0.25),
        ];
        for (w, t, want) in cases {
            assert!((w.phi(t).unwrap() - want).abs() < 1e-14);
            let q = w.numeric().phi(t).unwrap();
            assert!((q - want).abs() < 1e-9, "{w:?}: {q}");
        }
    }

    #[test]
    fn cached_phi_is_monotone_and_close() {
        let w = WeightFn::new(|t| t.powf(0.3) * (1.0 + t), 0.5);
        let mut prev = 0.0;
        for k in 1..100 {
            let t = 0.5 * k as f64 / 100.0;
            let v = w.phi_cached(t).unwrap();
            assert!(v >= prev);
            prev = v;
            assert!((v - w.phi_quadrature(t).unwrap()).abs() < 1e-4 * v.max(1e-3));
        }
    }

    #[test]
    fn rejects_non_weights() {
        assert!(WeightFn::new(|_| 1.0, 0.5).validate().is_err());
        assert!(WeightFn::power(1.0, 0.5).validate().is_ok());
    }
}

//! Characteristic curves dx/dt = −b(t, x)/t, integrated in σ = log t, with
//! wedge domains, the characteristic hull and the inverse flow.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{ScalarField, WeightFn};
use crate::germ::circle_nodes;
use crate::ode::Dopri5;
use crate::par;

/// Integration to t = 0 stops here.
pub const T_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FlowMap {
    pub b: ScalarField,
    pub ode: Dopri5,
    /// Trajectories leaving |x| < x_radius raise an escape error.
    pub x_radius: f64,
}

impl FlowMap {
    pub fn new(b: ScalarField) -> Self {
        let x_radius = b.x_radius;
        FlowMap { b, ode: Dopri5::default(), x_radius }
    }

    pub fn with_ode(mut self, ode: Dopri5) -> Self {
        self.ode = ode;
        self
    }

    fn guard(&self) -> impl Fn(f64, &[C64; 1]) -> Result<()> + '_ {
        move |s, y| {
            if y[0].norm() >= self.x_radius || !y[0].re.is_finite() {
                Err(Error::Escape { t: s.exp() })
            } else {
                Ok(())
            }
        }
    }

    /// x(t) on the characteristic through (t0, x0). Times below the floor
    /// are clamped to it.
    pub fn flow(&self, t0: f64, x0: C64, t: f64) -> Result<C64> {
        if t == t0 || self.b.is_zero() {
            return Ok(x0);
        }
        let (s0, s1) = (t0.max(T_FLOOR).ln(), t.max(T_FLOOR).ln());
        let b = self.b.evaluator();
        let y = self.ode.integrate(|s, y: &[C64; 1]| [-b(s.exp(), y[0])], s0, [x0], &[s1], self.guard(), |_, _| Ok(()))?;
        Ok(y[0])
    }

    /// The characteristic through (t0, x0) sampled at the times `ts`
    /// (monotone, all on one side of t0).
    pub fn path(&self, t0: f64, x0: C64, ts: &[f64]) -> Result<Vec<C64>> {
        if self.b.is_zero() {
            return Ok(vec![x0; ts.len()]);
        }
        let b = self.b.evaluator();
        let outs: Vec<f64> = ts.iter().map(|t| t.max(T_FLOOR).ln()).collect();
        let mut xs = Vec::with_capacity(ts.len());
        self.ode.integrate(|s, y: &[C64; 1]| [-b(s.exp(), y[0])], t0.ln(), [x0], &outs, self.guard(), |_, y| {
            xs.push(y[0]);
            Ok(())
        })?;
        Ok(xs)
    }

    /// Sampled B with |b(t, x)| ≤ B·μ(t) on (0, t_max] × D_r.
    pub fn drift_bound(&self, weight: &WeightFn, t_max: f64, r: f64) -> f64 {
        if self.b.is_zero() {
            return 0.0;
        }
        let xs = circle_nodes(32, r, C64::new(0.0, 0.0));
        (0..60)
            .map(|k| (1e-10f64.ln() + (t_max.ln() - 1e-10f64.ln()) * k as f64 / 59.0).exp())
            .map(|t| xs.iter().map(|&x| self.b.eval(t, x).norm()).fold(0.0, f64::max) / weight.mu(t))
            .fold(0.0, f64::max)
    }
}

/// W_{T,R,r} = {(t, x) : 0 < t ≤ T, φ(t)/r + |x| < R}.
#[derive(Debug, Clone)]
pub struct WedgeDomain {
    pub t_max: f64,
    pub r_outer: f64,
    pub r: f64,
    pub weight: WeightFn,
}

impl WedgeDomain {
    /// With a drift bound B supplied, r ≤ 1/B is enforced.
    pub fn new(t_max: f64, r_outer: f64, r: f64, weight: WeightFn, drift_bound: Option<f64>) -> Result<Self> {
        if let Some(b) = drift_bound {
            if r * b > 1.0 + 1e-12 {
                return Err(Error::Config(format!("r = {r} exceeds 1/B = {}", 1.0 / b)));
            }
        }
        Ok(WedgeDomain { t_max, r_outer, r, weight })
    }

    /// φ(t)/r + |x|, the quantity the wedge bounds by R.
    pub fn functional(&self, t: f64, x: C64) -> f64 {
        self.weight.phi_cached(t).unwrap_or(f64::INFINITY) / self.r + x.norm()
    }

    pub fn contains(&self, t: f64, x: C64) -> bool {
        t >= 0.0 && t <= self.t_max && self.functional(t, x) < self.r_outer
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub samples: usize,
    pub violations: usize,
    /// max over trajectories and times of φ(t)/r + |x(t)|
    pub max_functional: f64,
    /// max over trajectories of the increase of the functional along the path
    pub max_increase: f64,
    pub drift_bound: f64,
    /// r ≤ 1/B; when false, violations are informative only
    pub precondition_ok: bool,
    pub escapes: usize,
}

/// Integrate `samples` random characteristics starting in W down to t = 0 and
/// count exits from W at log-spaced intermediate times.
pub fn invariance_check(fm: &FlowMap, w: &WedgeDomain, samples: usize, seed: u64) -> InvarianceReport {
    let b_bound = fm.drift_bound(&w.weight, w.t_max, w.r_outer);
    let precondition_ok = w.r * b_bound <= 1.0 + 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = Vec::with_capacity(samples);
    while starts.len() < samples {
        let t0 = w.t_max * rng.gen_range(1e-6..=1.0f64);
        let room = w.r_outer - w.weight.phi_cached(t0).unwrap_or(f64::INFINITY) / w.r;
        if room <= 0.0 {
            continue;
        }
        let x0 = C64::from_polar(room * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..std::f64::consts::TAU));
        starts.push((t0, x0));
    }
    let results: Vec<Option<(bool, f64, f64)>> = par::map_slice(&starts, |&(t0, x0)| {
        let ts: Vec<f64> = (1..=24).map(|k| (t0.ln() + (T_FLOOR.ln() - t0.ln()) * k as f64 / 24.0).exp()).collect();
        let path = fm.path(t0, x0, &ts).ok()?;
        let f0 = w.functional(t0, x0);
        let mut violated = false;
        let mut fmax = f0;
        for (t, x) in ts.iter().zip(&path) {
            let f = w.functional(*t, *x);
            fmax = fmax.max(f);
            violated |= !w.contains(*t, *x);
        }
        Some((violated, fmax, fmax - f0))
    });
    let escapes = results.iter().filter(|r| r.is_none()).count();
    let ok: Vec<(bool, f64, f64)> = results.into_iter().flatten().collect();
    InvarianceReport {
        samples,
        violations: ok.iter().filter(|r| r.0).count() + escapes,
        max_functional: ok.iter().map(|r| r.1).fold(0.0, f64::max),
        max_increase: ok.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max),
        drift_bound: b_bound,
        precondition_ok,
        escapes,
    }
}

/// The union of characteristics issuing from the seed disc at t = T.
#[derive(Debug, Clone)]
pub struct Hull {
    pub fm: FlowMap,
    pub t_max: f64,
    pub r_seed: f64,
    /// (0, T] × D_r_inner lies inside the hull.
    pub r_inner: f64,
}

impl Hull {
    /// (t, x) is in the hull iff following the characteristic up to T lands
    /// in the seed disc.
    pub fn contains(&self, t: f64, x: C64) -> bool {
        if t <= 0.0 || t > self.t_max {
            return false;
        }
        match self.fm.flow(t, x, self.t_max) {
            Ok(xi) => xi.norm() < self.r_seed,
            Err(_) => false,
        }
    }
}

/// Build the hull 𝒟 over the seed disc D_{R_seed}; requires
/// R_seed + B·φ(T) < R0 so the characteristics stay in the coefficient disc.
pub fn hull(fm: &FlowMap, t_max: f64, r_seed: f64, weight: &WeightFn) -> Result<Hull> {
    let b = fm.drift_bound(weight, t_max, fm.x_radius * 0.999);
    let spread = b * weight.phi(t_max)?;
    if r_seed + spread >= fm.x_radius {
        return Err(Error::Config(format!(
            "seed radius {r_seed} + B·φ(T) = {spread:.4} reaches the coefficient disc {}",
            fm.x_radius
        )));
    }
    if r_seed <= spread {
        return Err(Error::Config(format!("seed radius {r_seed} does not exceed B·φ(T) = {spread:.4}")));
    }
    Ok(Hull { fm: fm.clone(), t_max, r_seed, r_inner: r_seed - spread })
}

#[derive(Debug, Clone, Serialize)]
pub struct InverseFlow {
    pub xi: C64,
    pub iterations: usize,
    pub ratios: Vec<f64>,
    pub residual: f64,
}

/// ξ with flow(T; ξ → t0) = x0, by successive approximation
/// ξ_n = x0 − D(ξ_{n−1}), D(ξ) the displacement of the characteristic from
/// (T, ξ) down to t0. The ratio of consecutive corrections is monitored
/// (probed over the first iterations) and must stay below one.
pub fn invert_flow(fm: &FlowMap, t0: f64, x0: C64, t_big: f64, budget: usize) -> Result<InverseFlow> {
    let tol = 1e-12;
    let mut xi = x0;
    let mut prev_step: Option<f64> = None;
    let mut ratios = Vec::new();
    for n in 1..=budget {
        let disp = fm.flow(t_big, xi, t0)? - xi;
        let next = x0 - disp;
        let step = (next - xi).norm();
        xi = next;
        if let Some(p) = prev_step {
            if p > 0.0 {
                let r = step / p;
                ratios.push(r);
                if r >= 1.0 && (ratios.len() >= 3 || step > 1e-8) {
                    return Err(Error::NoContraction { ratio: r });
                }
            }
        }
        if step <= tol * (1.0 + x0.norm()) {
            let residual = (fm.flow(t_big, xi, t0)? - x0).norm();
            return Ok(InverseFlow { xi, iterations: n, ratios, residual });
        }
        prev_step = Some(step);
    }
    Err(Error::NoConvergence { iterations: budget, ratio: ratios.last().copied().unwrap_or(f64::NAN) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(b: &str) -> FlowMap {
        FlowMap::new(ScalarField::parse(b, 1.0, 2.0).unwrap())
    }

    fn c(v: f64) -> C64 {
        C64::new(v, 0.0)
    }

    #[test]
    fn flow_examples() {
        assert_eq!(fm("0").flow(0.25, c(0.3), 0.05).unwrap(), c(0.3));
        assert!((fm("t").flow(0.25, c(0.0), 0.05).unwrap() - 0.2).norm() < 1e-10);
        let want = 0.1 * 0.2f64.exp();
        assert!((fm("t*x").flow(0.25, c(0.1), 0.05).unwrap() - want).norm() < 1e-10);
    }

    #[test]
    fn inverse_flow_examples() {
        let r = invert_flow(&fm("0"), 0.1, c(0.2), 0.3, 50).unwrap();
        assert_eq!((r.xi, r.iterations), (c(0.2), 1));
        let r = invert_flow(&fm("t"), 0.1, c(0.0), 0.3, 50).unwrap();
        assert!((r.xi + 0.2).norm() < 1e-9);
        let r = invert_flow(&fm("t*x"), 0.1, c(0.1), 0.3, 50).unwrap();
        assert!((r.xi - 0.1 * (-0.2f64).exp()).norm() < 1e-9);
        assert!(r.ratios.iter().all(|&q| q < 1.0));
    }

    #[test]
    fn hull_membership_for_unit_drift() {
        let h = hull(&fm("t"), 0.3, 0.5, &WeightFn::power(1.0, 0.3)).unwrap();
        assert!(h.contains(0.3, c(0.49)) && !h.contains(0.3, c(0.51)));
        // characteristics move right as t decreases: x(T) = x − (T − t)
        assert!(h.contains(0.1, c(0.65)) && !h.contains(0.1, c(0.75)));
        assert!(h.contains(0.1, c(-0.25)) && !h.contains(0.1, c(-0.35)));
        assert!(hull(&fm("t"), 0.3, 1.8, &WeightFn::power(1.0, 0.3)).is_err());
    }

    #[test]
    fn wedge_is_invariant_for_admissible_r() {
        let w = WedgeDomain::new(0.3, 1.0, 0.5, WeightFn::power(1.0, 0.3), Some(1.0)).unwrap();
        let rep = invariance_check(&fm("t"), &w, 200, 7);
        assert!(rep.precondition_ok);
        assert_eq!(rep.violations, 0);
        let bad = WedgeDomain::new(0.3, 1.0, 2.0, WeightFn::power(1.0, 0.3), None).unwrap();
        assert!(!invariance_check(&fm("t"), &bad, 20, 7).precondition_ok);
        assert!(WedgeDomain::new(0.3, 1.0, 2.0, WeightFn::power(1.0, 0.3), Some(1.0)).is_err());
    }
}

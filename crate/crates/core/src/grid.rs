//! Picard iteration for t·W_t = λ_eff·W + b·W_x + S(t,x) + N(t, x, W, W_x)
//! with Re λ_eff < 0, on a tensor grid: Chebyshev-Lobatto nodes in σ = log t
//! times a circle of Fourier nodes in x.
//!
//! Each iterate is the decaying particular solution
//! W(σ, x) = ∫_{−∞}^{σ} exp(∫_s^σ λ_eff) (S + N)(s, x(s)) ds along the
//! characteristic through (σ, x). Characteristics and integrating factors do
//! not depend on W, so they are integrated once per node at a fixed set of
//! Gauss-Legendre points; each sweep is then a weighted sum.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::germ::{circle_nodes, horner_d};
use crate::numerics::{chebyshev_lobatto, gauss6};
use crate::ode::Dopri5;
use crate::par;
use crate::solution::{Diagnostics, Exponent, Provenance, SolutionHandle};

#[derive(Debug, Clone)]
pub struct PicardConfig {
    /// σ nodes
    pub n_t: usize,
    /// circle nodes in x
    pub n_x: usize,
    /// lower end of the σ grid, as a time
    pub t_lo: f64,
    /// sup-norm change at which the iteration stops (relative to max(1, ‖W‖))
    pub tol: f64,
    pub max_iter: usize,
    pub shrink_budget: usize,
    /// required margin: Re λ_eff ≤ −δ
    pub delta: f64,
    /// coefficients below chop·max on the grid circle are dropped
    pub chop: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig {
            n_t: 48,
            n_x: 64,
            t_lo: 1e-10,
            tol: 1e-10,
            max_iter: 80,
            shrink_budget: 8,
            delta: 0.05,
            chop: 1e-13,
        }
    }
}

/// Widths of the Gauss panels that continue the σ grid below its lower end.
const TAIL_PANELS: [f64; 14] = [2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 6.0, 6.0, 8.0, 8.0, 12.0, 12.0, 16.0, 16.0];

/// The σ × x grid and its quadrature points.
#[derive(Debug, Clone)]
pub struct Grid {
    pub sig: Vec<f64>,
    bary: Vec<f64>,
    pub xs: Vec<C64>,
    pub rho: f64,
    pub t_max: f64,
    /// (σ_q, Gauss weight), descending in σ; panel p's points follow node p+1
    quad: Vec<(f64, f64)>,
    /// index into `quad` of the first point below node i
    first_below: Vec<usize>,
    /// node used with node 0 to fit tail exponents
    tail_ref: usize,
}

impl Grid {
    pub fn new(t_lo: f64, t_max: f64, n_t: usize, n_x: usize, rho: f64) -> Self {
        let sig = chebyshev_lobatto(n_t, t_lo.ln(), t_max.ln());
        let bary: Vec<f64> = (0..n_t)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n_t - 1 { 0.5 * s } else { s }
            })
            .collect();
        let (gx, gw) = gauss6();
        let mut quad = Vec::new();
        let mut first_below = vec![0usize; n_t];
        let push_panel = |quad: &mut Vec<(f64, f64)>, a: f64, b: f64| {
            // points in descending σ
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            let mut pts: Vec<(f64, f64)> = gx.iter().zip(gw).map(|(x, w)| (mid + half * x, half * w)).collect();
            pts.sort_by(|p, q| q.0.total_cmp(&p.0));
            quad.extend(pts);
        };
        for i in (1..n_t).rev() {
            first_below[i] = quad.len();
            push_panel(&mut quad, sig[i - 1], sig[i]);
        }
        first_below[0] = quad.len();
        let mut top = sig[0];
        for w in TAIL_PANELS {
            push_panel(&mut quad, top - w, top);
            top -= w;
        }
        let tail_ref = sig.iter().position(|s| *s >= sig[0] + 2.0).unwrap_or(n_t - 1).max(1);
        Grid { sig, bary, xs: circle_nodes(n_x, rho, C64::new(0.0, 0.0)), rho, t_max, quad, first_below, tail_ref }
    }

    pub fn s_lo(&self) -> f64 {
        self.sig[0]
    }

    pub fn n_nodes(&self) -> usize {
        self.sig.len() * self.xs.len()
    }

    /// Barycentric weights l_j(σ) of the interpolant at σ (inside the grid).
    fn interp_weights(&self, s: f64) -> Vec<f64> {
        let n = self.sig.len();
        let mut w = vec![0.0; n];
        for j in 0..n {
            if (s - self.sig[j]).abs() < 1e-14 * (1.0 + s.abs()) {
                w[j] = 1.0;
                return w;
            }
        }
        let mut sum = 0.0;
        for j in 0..n {
            w[j] = self.bary[j] / (s - self.sig[j]);
            sum += w[j];
        }
        for v in &mut w {
            *v /= sum;
        }
        w
    }

    /// Taylor coefficients (in x, at 0) from samples on the grid circle.
    fn taylor(&self, samples: &[C64], chop: f64) -> Vec<C64> {
        let m = samples.len();
        let spec = crate::germ::dft(samples);
        let keep = m / 2;
        let big = spec.iter().take(keep).map(|c| c.norm()).fold(0.0, f64::max);
        let mut out = Vec::with_capacity(keep);
        let mut rk = 1.0;
        for c in spec.iter().take(keep) {
            let v = if c.norm() <= chop * big { C64::new(0.0, 0.0) } else { c / (m as f64 * rk) };
            out.push(v);
            rk *= self.rho;
        }
        out
    }
}

/// A function on the grid: Taylor coefficients per σ node, barycentric in σ,
/// and below the grid a per-coefficient exponential continuation
/// c_k(σ) = c_k(σ_lo)·e^{κ_k(σ − σ_lo)} with κ_k ≥ 0 fitted.
#[derive(Debug, Clone)]
pub struct GridFn {
    grid: Arc<Grid>,
    coeffs: Vec<Vec<C64>>,
    kappa: Vec<f64>,
    /// value = t^shift · interpolant
    pub shift: f64,
}

impl GridFn {
    pub fn from_values(grid: Arc<Grid>, values: &[Vec<C64>], chop: f64) -> Self {
        let coeffs: Vec<Vec<C64>> = values.iter().map(|v| grid.taylor(v, chop)).collect();
        let r = grid.tail_ref;
        let ds = grid.sig[r] - grid.sig[0];
        let kappa = (0..coeffs[0].len())
            .map(|k| {
                let (a, b) = (coeffs[0][k].norm(), coeffs[r][k].norm());
                if a == 0.0 || b == 0.0 {
                    0.0
                } else {
                    ((b / a).ln() / ds).clamp(0.0, 20.0)
                }
            })
            .collect();
        GridFn { grid, coeffs, kappa, shift: 0.0 }
    }

    pub fn zero(grid: Arc<Grid>) -> Self {
        let k = grid.xs.len() / 2;
        let n = grid.sig.len();
        GridFn { grid, coeffs: vec![vec![C64::new(0.0, 0.0); k]; n], kappa: vec![0.0; k], shift: 0.0 }
    }

    /// Sample a function on the grid nodes.
    pub fn sample(grid: Arc<Grid>, f: &(dyn Fn(f64, C64) -> C64 + Send + Sync), chop: f64) -> Self {
        let nx = grid.xs.len();
        let vals: Vec<C64> = par::map_range(grid.n_nodes(), |id| {
            let (i, m) = (id / nx, id % nx);
            f(grid.sig[i].exp(), grid.xs[m])
        });
        let rows: Vec<Vec<C64>> = vals.chunks(nx).map(|c| c.to_vec()).collect();
        Self::from_values(grid, &rows, chop)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Interpolated Taylor vector at σ.
    pub fn coeffs_at(&self, s: f64) -> Vec<C64> {
        let g = &self.grid;
        if s < g.s_lo() {
            return self.coeffs[0]
                .iter()
                .zip(&self.kappa)
                .map(|(c, k)| c * (k * (s - g.s_lo())).exp())
                .collect();
        }
        let w = g.interp_weights(s);
        let mut out = vec![C64::new(0.0, 0.0); self.coeffs[0].len()];
        for (wj, cj) in w.iter().zip(&self.coeffs) {
            if *wj != 0.0 {
                for (o, c) in out.iter_mut().zip(cj) {
                    *o += c * wj;
                }
            }
        }
        out
    }

    /// (value, ∂_x) at (t, x), including the t^shift factor.
    pub fn eval_d(&self, t: f64, x: C64) -> (C64, C64) {
        let c = self.coeffs_at(t.ln());
        let (v, d) = horner_d(&c, x);
        if self.shift == 0.0 {
            (v, d)
        } else {
            let f = t.powf(self.shift);
            (v * f, d * f)
        }
    }

    pub fn eval(&self, t: f64, x: C64) -> C64 {
        self.eval_d(t, x).0
    }

    /// Values on the grid circle at node i.
    pub fn node_values(&self, i: usize) -> Vec<C64> {
        self.grid.xs.iter().map(|&x| horner_d(&self.coeffs[i], x).0).collect()
    }
}

/// N(t, x, W, W_x, aux) where aux holds (value, ∂_x) of the auxiliary grid
/// functions at the same point.
pub type Nonlinearity = Arc<dyn Fn(f64, C64, C64, C64, &[(C64, C64)]) -> C64 + Send + Sync>;
pub type PointFn = Arc<dyn Fn(f64, C64) -> C64 + Send + Sync>;

#[derive(Clone)]
pub struct PicardProblem {
    pub lambda_eff: ScalarField,
    pub b: ScalarField,
    pub source: Option<ScalarField>,
    /// auxiliary functions sampled once on the grid (e.g. the flat factor ŵ)
    pub aux: Vec<PointFn>,
    pub nonlinear: Nonlinearity,
    /// output u = t^shift · W
    pub shift: f64,
    pub t_max: f64,
    /// grid circle radius
    pub rho: f64,
    /// bound on |u| (the polydisc where R is defined)
    pub range: f64,
}

/// Result of a Picard run: the grid function and its diagnostics.
#[derive(Debug, Clone)]
pub struct PicardSolution {
    pub w: GridFn,
    pub diagnostics: Diagnostics,
}

impl PicardSolution {
    pub fn handle(&self, x_radius: f64, claimed: Exponent, tol: f64) -> SolutionHandle {
        let w = self.w.clone();
        let w2 = self.w.clone();
        SolutionHandle::new(move |t, x| w.eval(t, x), self.w.grid.t_max, x_radius, Provenance::Picard, claimed, tol)
            .with_deriv(move |t, x| w2.eval_d(t, x).1)
            .with_diagnostics(self.diagnostics.clone())
    }
}

struct PathPoint {
    q: u32,
    x: C64,
    weight: C64,
}

struct NodePaths {
    points: Vec<PathPoint>,
    source: C64,
}

fn ode() -> Dopri5 {
    Dopri5::with_tol(1e-12, 1e-15)
}

fn build_paths(grid: &Grid, pb: &PicardProblem, x_escape: f64) -> Result<Vec<NodePaths>> {
    let nx = grid.xs.len();
    let (l, b) = (pb.lambda_eff.evaluator(), pb.b.evaluator());
    let src = pb.source.as_ref().map(|s| s.evaluator());
    let b_zero = pb.b.is_zero();
    par::try_map_range(grid.n_nodes(), |id| {
        let (i, m) = (id / nx, id % nx);
        let s0 = grid.sig[i];
        let first = grid.first_below[i];
        let outs: Vec<f64> = grid.quad[first..].iter().map(|p| p.0).collect();
        let mut points = Vec::with_capacity(outs.len());
        let mut last_src = [C64::new(0.0, 0.0); 2];
        let rhs = |s: f64, y: &[C64; 3]| {
            let t = s.exp();
            let dx = if b_zero { C64::new(0.0, 0.0) } else { -b(t, y[0]) };
            let g = match &src {
                Some(f) => -(y[1].exp() * f(t, y[0])),
                None => C64::new(0.0, 0.0),
            };
            [dx, -l(t, y[0]), g]
        };
        let guard = |s: f64, y: &[C64; 3]| {
            if y[0].norm() >= x_escape || !y[0].re.is_finite() {
                Err(Error::Escape { t: s.exp() })
            } else {
                Ok(())
            }
        };
        let zero = C64::new(0.0, 0.0);
        let n_out = outs.len();
        let y = ode().integrate(rhs, s0, [grid.xs[m], zero, zero], &outs, guard, |k, y| {
            let (sq, wq) = grid.quad[first + k];
            points.push(PathPoint { q: (first + k) as u32, x: y[0], weight: y[1].exp() * wq });
            if k + 2 >= n_out {
                if let Some(f) = &src {
                    last_src[k + 2 - n_out] = y[1].exp() * f(sq.exp(), y[0]);
                }
            }
            Ok(())
        })?;
        // source integrand ≈ c·e^{κσ} below the last point
        let (sa, sb) = (grid.quad[grid.quad.len() - 2].0, grid.quad[grid.quad.len() - 1].0);
        let mut source = y[2];
        if last_src[1].norm() > 0.0 {
            let kappa = (last_src[0] / last_src[1]).norm().ln() / (sa - sb);
            if kappa > 0.0 {
                source += last_src[1] / kappa;
            }
        }
        Ok(NodePaths { points, source })
    })
}

/// Run the Picard iteration, shrinking (T, ρ) on failure to contract.
/// `seed` is an initial iterate for W (zero when absent).
pub fn picard_solve(pb: &PicardProblem, cfg: &PicardConfig, seed: Option<&PointFn>) -> Result<PicardSolution> {
    let mut pb = pb.clone();
    let mut last_ratio = f64::NAN;
    let mut notes = Vec::new();
    for round in 0..=cfg.shrink_budget {
        check_margin(&pb, cfg)?;
        match picard_once(&pb, cfg, if round == 0 { seed } else { None }) {
            Ok(mut sol) => {
                sol.diagnostics.shrink_rounds = round;
                sol.diagnostics.notes.extend(notes);
                return Ok(sol);
            }
            Err(e @ (Error::NoContraction { .. } | Error::NoConvergence { .. } | Error::Escape { .. } | Error::Range(_))) => {
                if let Error::NoContraction { ratio } | Error::NoConvergence { ratio, .. } = e {
                    last_ratio = ratio;
                }
                notes.push(format!("T = {:.4}, ρ = {:.4}: {e}", pb.t_max, pb.rho));
            }
            Err(e) => return Err(e),
        }
        pb.t_max *= 0.5;
        pb.rho *= 0.8;
    }
    Err(Error::NoConvergence { iterations: cfg.max_iter, ratio: last_ratio })
}

fn check_margin(pb: &PicardProblem, cfg: &PicardConfig) -> Result<()> {
    let xs = circle_nodes(16, pb.rho, C64::new(0.0, 0.0));
    for k in 0..24 {
        let t = (cfg.t_lo.ln() + (pb.t_max.ln() - cfg.t_lo.ln()) * k as f64 / 23.0).exp();
        for &x in xs.iter().chain(std::iter::once(&C64::new(0.0, 0.0))) {
            let re = pb.lambda_eff.eval(t, x).re;
            if re > -cfg.delta {
                return Err(Error::Precondition(format!("Re λ_eff = {re:.4} exceeds −δ = {} at t = {t:.2e}", -cfg.delta)));
            }
        }
    }
    Ok(())
}

fn picard_once(pb: &PicardProblem, cfg: &PicardConfig, seed: Option<&PointFn>) -> Result<PicardSolution> {
    let grid = Arc::new(Grid::new(cfg.t_lo, pb.t_max, cfg.n_t, cfg.n_x, pb.rho));
    let x_escape = pb.lambda_eff.x_radius.min(pb.b.x_radius).max(pb.rho * 1.0001);
    let paths = build_paths(&grid, pb, x_escape.max(4.0 * pb.rho))?;
    let aux: Vec<GridFn> = pb.aux.iter().map(|f| GridFn::sample(grid.clone(), f.as_ref(), cfg.chop)).collect();
    let nq = grid.quad.len();
    let aux_at_q: Vec<Vec<Vec<C64>>> = aux.iter().map(|a| (0..nq).map(|q| a.coeffs_at(grid.quad[q].0)).collect()).collect();
    let nx = grid.xs.len();
    let n_t = grid.sig.len();

    let mut w = match seed {
        Some(s) => GridFn::sample(grid.clone(), s.as_ref(), cfg.chop),
        None => GridFn::zero(grid.clone()),
    };
    let mut values: Vec<Vec<C64>> = (0..n_t).map(|i| w.node_values(i)).collect();
    let mut diag = Diagnostics::default();
    let mut prev_diff = f64::NAN;
    for it in 1..=cfg.max_iter {
        let w_at_q: Vec<Vec<C64>> = (0..nq).map(|q| w.coeffs_at(grid.quad[q].0)).collect();
        let new_flat: Vec<C64> = par::map_range(grid.n_nodes(), |id| {
            let np = &paths[id];
            let mut acc = np.source;
            let mut aux_vals = vec![(C64::new(0.0, 0.0), C64::new(0.0, 0.0)); aux.len()];
            for p in &np.points {
                let q = p.q as usize;
                let t = grid.quad[q].0.exp();
                let (wv, wd) = horner_d(&w_at_q[q], p.x);
                for (k, a) in aux_at_q.iter().enumerate() {
                    aux_vals[k] = horner_d(&a[q], p.x);
                }
                acc += p.weight * (pb.nonlinear)(t, p.x, wv, wd, &aux_vals);
            }
            acc
        });
        let new_values: Vec<Vec<C64>> = new_flat.chunks(nx).map(|c| c.to_vec()).collect();
        let mut diff = 0.0f64;
        let mut norm = 0.0f64;
        for (a, b) in new_values.iter().flatten().zip(values.iter().flatten()) {
            diff = diff.max((a - b).norm());
            norm = norm.max(a.norm());
        }
        if !diff.is_finite() {
            return Err(Error::NoContraction { ratio: f64::INFINITY });
        }
        w = GridFn::from_values(grid.clone(), &new_values, cfg.chop);
        values = new_values;
        diag.iterations = it;
        if prev_diff.is_finite() && prev_diff > 0.0 {
            diag.contraction_ratios.push(diff / prev_diff);
        }
        if diff <= cfg.tol * norm.max(1.0) {
            let top = norm * pb.t_max.powf(pb.shift);
            if top > pb.range {
                return Err(Error::Range(format!("|u| reaches {top:.3e} beyond the polydisc radius {}", pb.range)));
            }
            let mut w = w;
            w.shift = pb.shift;
            return Ok(PicardSolution { w, diagnostics: diag });
        }
        if it >= 4 && prev_diff.is_finite() && diff >= prev_diff {
            return Err(Error::NoContraction { ratio: diff / prev_diff });
        }
        prev_diff = diff;
    }
    Err(Error::NoConvergence { iterations: cfg.max_iter, ratio: diag.contraction_ratios.last().copied().unwrap_or(f64::NAN) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(s: &str) -> ScalarField {
        ScalarField::parse(s, 0.3, 2.0).unwrap()
    }

    fn problem(lam: &str, b: &str, src: Option<&str>, nonlinear: Nonlinearity, shift: f64) -> PicardProblem {
        PicardProblem {
            lambda_eff: f(lam),
            b: f(b),
            source: src.map(f),
            aux: vec![],
            nonlinear,
            shift,
            t_max: 0.3,
            rho: 0.5,
            range: 10.0,
        }
    }

    #[test]
    fn grid_function_interpolates_smooth_data() {
        let grid = Arc::new(Grid::new(1e-10, 0.3, 48, 32, 0.5));
        let g = GridFn::sample(grid, &|t, x| x * t.powf(0.25) + t * t, 1e-15);
        for (t, x) in [(1e-3f64, 0.2), (0.1, -0.3), (0.29, 0.0), (1e-12, 0.1)] {
            let x = C64::new(x, 0.1);
            let want = x * t.powf(0.25) + t * t;
            assert!((g.eval(t, x) - want).norm() < 1e-10, "{t}: {}", (g.eval(t, x) - want).norm());
        }
    }

    #[test]
    fn linear_source_matches_closed_form() {
        // t W_t = −W + t: W = t/2
        let pb = problem("-1", "0", Some("t"), Arc::new(|_, _, _, _, _| C64::new(0.0, 0.0)), 0.0);
        let sol = picard_solve(&pb, &PicardConfig::default(), None).unwrap();
        assert!((sol.w.eval(0.1, C64::new(0.2, 0.0)) - 0.05).norm() < 1e-10);
        assert!(sol.diagnostics.iterations <= 2);
    }

    #[test]
    fn zero_problem_is_trivial() {
        let pb = problem("-1", "0", None, Arc::new(|_, _, w, wx, _| w * wx), 0.0);
        let sol = picard_solve(&pb, &PicardConfig::default(), None).unwrap();
        assert_eq!(sol.diagnostics.iterations, 1);
        assert_eq!(sol.w.eval(0.1, C64::new(0.1, 0.0)), C64::new(0.0, 0.0));
    }

    #[test]
    fn nonlinear_with_drift() {
        // u = t^{3/4} W solves t u_t = x t + u/2 + u_x² for u = 2xt + t²/0.375
        let d = 0.75;
        let pb = problem(
            "-0.25",
            "0",
            Some("x*t^0.25"),
            Arc::new(move |t, _, _, wx, _| t.powf(d) * wx * wx),
            d,
        );
        let sol = picard_solve(&pb, &PicardConfig::default(), None).unwrap();
        for (t, x) in [(1e-3f64, 0.25), (0.2, -0.25), (0.05, 0.1)] {
            let x = C64::new(x, 0.0);
            let want = x * t * 2.0 + t * t / 0.375;
            let got = sol.w.eval(t, x);
            assert!((got - want).norm() < 1e-8 * want.norm().max(1e-3), "{t} {x}: {got} vs {want}");
        }
        let r = &sol.diagnostics.contraction_ratios;
        assert!(r.iter().skip(1).all(|q| *q <= 0.9), "{r:?}");
    }
}

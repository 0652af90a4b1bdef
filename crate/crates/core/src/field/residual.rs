use num_complex::Complex64 as C64;
use serde::Serialize;

use super::EquationSpec;
use crate::error::{Error, Result};
use crate::germ::circle_nodes;
use crate::numerics::central4;
use crate::par;
use crate::solution::SolutionHandle;

/// Stencil width in σ = log t.
pub const SIGMA_STEP: f64 = 1e-3;

/// Tensor grid of t nodes × x nodes.
#[derive(Debug, Clone)]
pub struct ResidualGrid {
    pub ts: Vec<f64>,
    pub xs: Vec<C64>,
}

impl ResidualGrid {
    /// n_t log-spaced times in [t_lo, t_hi] × the origin and `circles`
    /// concentric circles up to radius r, m points each.
    pub fn log_disc(t_lo: f64, t_hi: f64, n_t: usize, r: f64, circles: usize, m: usize) -> Self {
        let ts = (0..n_t)
            .map(|k| (t_lo.ln() + (t_hi.ln() - t_lo.ln()) * k as f64 / (n_t - 1).max(1) as f64).exp())
            .collect();
        let mut xs = vec![C64::new(0.0, 0.0)];
        for c in 1..=circles {
            xs.extend(circle_nodes(m, r * c as f64 / circles as f64, C64::new(0.0, 0.0)));
        }
        ResidualGrid { ts, xs }
    }

    /// The default diagnostic grid: t ∈ [1e-3, 0.2], |x| ≤ 0.25.
    pub fn standard() -> Self {
        Self::log_disc(1e-3, 0.2, 24, 0.25, 2, 16)
    }

    pub fn len(&self) -> usize {
        self.ts.len() * self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    #[serde(skip)]
    pub grid: Vec<(f64, C64)>,
    pub residual_sup: f64,
    #[serde(skip)]
    pub residual_values: Vec<C64>,
    /// sup of |t·u_t| on the grid
    pub relative_scale: f64,
}

/// |t·u_t − F(t, x, u, u_x)| on every node, t·u_t by a fourth-order
/// central stencil in σ = log t.
pub fn residual(spec: &EquationSpec, u: &SolutionHandle, grid: &ResidualGrid) -> Result<ResidualReport> {
    let t_top = grid.ts.iter().cloned().fold(0.0, f64::max) * (2.0 * SIGMA_STEP).exp();
    if t_top > u.t_max * (1.0 + 1e-9) {
        return Err(Error::Domain(format!("stencil reaches t = {t_top:.4e} beyond the handle's t_max = {}", u.t_max)));
    }
    if grid.ts.iter().any(|&t| t <= 0.0) {
        return Err(Error::Domain("residual grid contains t ≤ 0".into()));
    }
    if let Some(x) = grid.xs.iter().find(|x| x.norm() >= u.x_radius) {
        return Err(Error::Domain(format!("node {x} outside the handle's disc of radius {}", u.x_radius)));
    }
    let nodes: Vec<(f64, C64)> = grid.ts.iter().flat_map(|&t| grid.xs.iter().map(move |&x| (t, x))).collect();
    let vals: Vec<(C64, f64)> = par::map_slice(&nodes, |&(t, x)| {
        let tut = central4(|s| u.eval(s.exp(), x), t.ln(), SIGMA_STEP);
        let f = spec.f(t, x, u.eval(t, x), u.eval_dx(t, x));
        (tut - f, tut.norm())
    });
    let residual_sup = vals.iter().map(|v| v.0.norm()).fold(0.0, f64::max);
    if !residual_sup.is_finite() {
        return Err(Error::Evaluation("non-finite residual".into()));
    }
    Ok(ResidualReport {
        residual_sup,
        relative_scale: vals.iter().map(|v| v.1).fold(0.0, f64::max),
        residual_values: vals.into_iter().map(|v| v.0).collect(),
        grid: nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;
    use crate::solution::Exponent;

    fn handle(s: &str) -> SolutionHandle {
        SolutionHandle::from_field(&ScalarField::parse(s, 0.3, 1.0).unwrap(), Exponent::Exact(1.0))
    }

    #[test]
    fn closed_form_has_tiny_residual() {
        let spec = EquationSpec::quadratic_gradient(3.0, 1.0);
        let r = residual(&spec, &handle("-x*t/2 - t^2/4"), &ResidualGrid::standard()).unwrap();
        assert!(r.residual_sup <= 1e-8, "{}", r.residual_sup);
    }

    #[test]
    fn trivial_solution_has_zero_residual() {
        let spec = EquationSpec::quadratic_counterexample();
        let r = residual(&spec, &SolutionHandle::zero(0.3, 1.0), &ResidualGrid::standard()).unwrap();
        assert_eq!(r.residual_sup, 0.0);
    }

    #[test]
    fn perturbation_residual_is_exact() {
        let spec = EquationSpec::quadratic_gradient(3.0, 1.0);
        let grid = ResidualGrid::standard();
        let r = residual(&spec, &handle("-x*t/2 - t^2/4 + 0.001*t"), &grid).unwrap();
        for ((t, _), v) in r.grid.iter().zip(&r.residual_values) {
            assert!((v.norm() - 2e-3 * t).abs() < 1e-11, "{t}: {v}");
        }
    }
}

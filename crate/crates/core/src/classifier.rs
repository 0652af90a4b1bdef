//! Growth-class diagnostics: the X₁^d exponent of a solution and the scaled
//! sup functional deciding membership in 𝒳₁.

use std::fmt;

use num_complex::Complex64 as C64;
use serde::{Serialize, Serializer};

use crate::germ::circle_nodes;
use crate::numerics::{aitken_real, lsq, lsq_slope};
use crate::par;
use crate::solution::SolutionHandle;

const FIT_NODES: usize = 40;
const CIRCLE: usize = 32;
/// Fitted log-power above which t^d|log t|^k is read as X₁^{(d)}.
const PAREN_K: f64 = 0.5;
/// Below this k the plain power law is refitted without the log term.
const LOG_TERM_MIN: f64 = 0.25;

#[derive(Debug, Clone, Copy)]
pub struct ClassifyConfig {
    /// lower end of the exponent fit
    pub t_lo: f64,
    /// floor of the t-range in the sup functional
    pub sup_t_floor: f64,
    /// starting disc radius; defaults to the handle's x radius
    pub rho0: Option<f64>,
    pub levels: usize,
    pub stabilization: f64,
    pub threshold: f64,
    /// exponents at or below this count as zero
    pub eps: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            t_lo: 1e-6,
            sup_t_floor: 1e-8,
            rho0: None,
            levels: 8,
            stabilization: 0.01,
            threshold: 0.05,
            eps: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassLabel {
    /// X₁^d; d = ∞ for the zero function
    X1d(f64),
    X1Plus,
    /// X₁^{(d)}
    X1Paren(f64),
    ScrX1Only,
    Outside,
}

impl ClassLabel {
    /// Whether the label places u in X₁⁺.
    pub fn in_x1_plus(&self) -> bool {
        matches!(self, ClassLabel::X1d(_) | ClassLabel::X1Plus | ClassLabel::X1Paren(_))
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassLabel::X1d(d) if d.is_infinite() => write!(f, "X1d(inf)"),
            ClassLabel::X1d(d) => write!(f, "X1d({d:.2})"),
            ClassLabel::X1Plus => write!(f, "X1_plus"),
            ClassLabel::X1Paren(d) => write!(f, "X1_paren({d:.2})"),
            ClassLabel::ScrX1Only => write!(f, "scrX1_only"),
            ClassLabel::Outside => write!(f, "outside"),
        }
    }
}

impl Serialize for ClassLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Result of fitting log sup|u(t,·)| ≈ d·log t + k·log|log t| + c.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExponentFit {
    pub d: f64,
    /// the log-power k; 0 when the plain power law was kept
    pub log_power: f64,
    pub rms: f64,
}

impl ExponentFit {
    fn zero() -> Self {
        ExponentFit { d: f64::INFINITY, log_power: 0.0, rms: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExponentReport {
    pub d_fit: f64,
    pub d_fit_derivative: f64,
    pub value: ExponentFit,
    pub derivative: ExponentFit,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScrX1Estimate {
    pub value: f64,
    /// (ρ_j, σ_j): σ_j is where the inner sup stabilized, or the last σ tried
    pub schedule: Vec<(f64, f64)>,
    pub s_values: Vec<f64>,
    /// s_j non-increasing in j
    pub monotone: bool,
    pub indeterminate: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub d_fit: f64,
    pub d_fit_derivative: f64,
    pub log_power: f64,
    pub fit_residual: f64,
    pub class_label: ClassLabel,
    #[serde(rename = "scrX1_value")]
    pub scrx1_value: f64,
    pub indeterminate: bool,
    pub monotone: bool,
    pub schedule: Vec<(f64, f64)>,
}

fn log_nodes(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp()).collect()
}

fn sup_on_circle(f: &(dyn Fn(f64, C64) -> C64 + Sync), t: f64, r: f64) -> f64 {
    circle_nodes(CIRCLE, r, C64::new(0.0, 0.0)).into_iter().map(|x| f(t, x).norm()).fold(0.0, f64::max)
}

fn fit(ts: &[f64], sups: &[f64]) -> ExponentFit {
    let pts: Vec<(f64, f64)> =
        ts.iter().zip(sups).filter(|(_, s)| **s > 0.0 && s.is_finite()).map(|(t, s)| (t.ln(), s.ln())).collect();
    if pts.len() < 3 {
        return ExponentFit::zero();
    }
    let rows: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.0, p.0.abs().ln(), 1.0]).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (c, rms) = lsq(&rows, &y);
    if c[1] >= LOG_TERM_MIN {
        return ExponentFit { d: c[0], log_power: c[1], rms };
    }
    let (d, _, rms) = lsq_slope(&pts);
    ExponentFit { d, log_power: 0.0, rms }
}

pub fn fit_exponent(u: &SolutionHandle) -> ExponentReport {
    fit_exponent_with(u, &ClassifyConfig::default())
}

/// Exponent of sup_{|x| ≤ R/2} |u| and of the same sup of |u_x| over 40
/// log-spaced t in [t_lo, T].
pub fn fit_exponent_with(u: &SolutionHandle, cfg: &ClassifyConfig) -> ExponentReport {
    let hi = u.t_max.min(0.5);
    let ts = log_nodes(cfg.t_lo.min(hi / 10.0), hi, FIT_NODES);
    let r = 0.5 * u.x_radius;
    let sups: Vec<(f64, f64)> = par::map_slice(&ts, |&t| {
        let a = sup_on_circle(&|t, x| u.eval(t, x), t, r);
        let b = sup_on_circle(&|t, x| u.eval_dx(t, x), t, r);
        (a, b)
    });
    let value = fit(&ts, &sups.iter().map(|s| s.0).collect::<Vec<_>>());
    let derivative = fit(&ts, &sups.iter().map(|s| s.1).collect::<Vec<_>>());
    ExponentReport { d_fit: value.d, d_fit_derivative: derivative.d, value, derivative }
}

/// Limit of a sequence: the first value within `tol` (relative) of its
/// predecessor, else an Aitken extrapolation of the tail clamped to
/// [0, last]. The flag is set when neither applies.
fn settle(seq: &[f64], tol: f64) -> (f64, usize, bool) {
    for i in 1..seq.len() {
        if (seq[i] - seq[i - 1]).abs() <= tol * seq[i - 1].abs() {
            return (seq[i], i, false);
        }
    }
    let n = seq.len();
    let last = seq[n - 1];
    if n < 3 || last == 0.0 {
        return (last, n - 1, last != 0.0);
    }
    let (a, b, c) = (seq[n - 3], seq[n - 2], seq[n - 1]);
    let q = (c - b) / (b - a);
    if !(q > 0.0 && q < 1.0) {
        return (last, n - 1, true);
    }
    (aitken_real(a, b, c).clamp(0.0, last.max(0.0)), n - 1, false)
}

pub fn scrx1_value(u: &SolutionHandle) -> ScrX1Estimate {
    scrx1_value_with(u, &ClassifyConfig::default())
}

/// (1/ρ²)·sup_{(0,σ)×D_ρ}|u| with σ → 0 inside and ρ_j = ρ₀2^{−j} outside.
pub fn scrx1_value_with(u: &SolutionHandle, cfg: &ClassifyConfig) -> ScrX1Estimate {
    let rho0 = cfg.rho0.unwrap_or(u.x_radius);
    let floor = cfg.sup_t_floor;
    let sigmas: Vec<f64> =
        std::iter::successors(Some(u.t_max.min(0.5)), |s| Some(s / 2.0)).take_while(|&s| s >= 100.0 * floor).collect();
    let per_level: Vec<(f64, f64, f64)> = par::map_range(cfg.levels, |j| {
        let rho = rho0 * 0.5f64.powi(j as i32 + 1);
        let sups: Vec<f64> = sigmas
            .iter()
            .map(|&s| {
                log_nodes(floor, s, 24).into_iter().map(|t| sup_on_circle(&|t, x| u.eval(t, x), t, rho)).fold(0.0, f64::max)
            })
            .collect();
        let (inner, i, _) = settle(&sups, cfg.stabilization);
        (rho, sigmas[i], inner / (rho * rho))
    });
    let s_values: Vec<f64> = per_level.iter().map(|p| p.2).collect();
    let schedule = per_level.iter().map(|p| (p.0, p.1)).collect();
    let monotone = s_values.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
    let (value, _, indeterminate) = settle(&s_values, cfg.stabilization);
    ScrX1Estimate { value, schedule, s_values, monotone, indeterminate }
}

pub fn classify(u: &SolutionHandle) -> GrowthReport {
    classify_with(u, &ClassifyConfig::default())
}

pub fn classify_with(u: &SolutionHandle, cfg: &ClassifyConfig) -> GrowthReport {
    let ex = fit_exponent_with(u, cfg);
    let scr = scrx1_value_with(u, cfg);
    let d = ex.d_fit.min(ex.d_fit_derivative);
    let log_power = if ex.d_fit <= ex.d_fit_derivative { ex.value.log_power } else { ex.derivative.log_power };
    let label = if d.is_infinite() {
        ClassLabel::X1d(f64::INFINITY)
    } else if scr.value > cfg.threshold {
        ClassLabel::Outside
    } else if d > cfg.eps && log_power >= PAREN_K {
        ClassLabel::X1Paren(d)
    } else if d > cfg.eps && log_power.abs() < LOG_TERM_MIN && ex.value.rms.max(ex.derivative.rms) <= 0.02 {
        ClassLabel::X1d(d)
    } else if d > cfg.eps {
        ClassLabel::X1Plus
    } else {
        ClassLabel::ScrX1Only
    };
    GrowthReport {
        d_fit: ex.d_fit,
        d_fit_derivative: ex.d_fit_derivative,
        log_power,
        fit_residual: ex.value.rms.max(if ex.derivative.d.is_finite() { ex.derivative.rms } else { 0.0 }),
        class_label: label,
        scrx1_value: scr.value,
        indeterminate: scr.indeterminate,
        monotone: scr.monotone,
        schedule: scr.schedule,
    }
}

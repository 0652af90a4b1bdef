//! Small numerical kernels shared by the solvers: quadrature, least squares,
//! sequence acceleration and contour differentiation.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Least-squares line through `pts`; returns (slope, intercept, rms residual).
pub fn lsq_slope(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let rms = (pts.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    (slope, icpt, rms)
}

/// Ordinary least squares for a small dense design matrix (normal equations
/// with partial pivoting). Returns coefficients and the rms residual.
pub fn lsq(rows: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let p = rows[0].len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for (r, yi) in rows.iter().zip(y) {
        for i in 0..p {
            for j in 0..p {
                a[i][j] += r[i] * r[j];
            }
            a[i][p] += r[i] * yi;
        }
    }
    for col in 0..p {
        let piv = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        let d = a[col][col];
        if d.abs() < 1e-300 {
            continue;
        }
        for row in 0..p {
            if row != col {
                let f = a[row][col] / d;
                for k in col..=p {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let coef: Vec<f64> =
        (0..p).map(|i| if a[i][i].abs() < 1e-300 { 0.0 } else { a[i][p] / a[i][i] }).collect();
    let n = y.len() as f64;
    let rms = (rows
        .iter()
        .zip(y)
        .map(|(r, yi)| (yi - r.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>()).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (coef, rms)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[n - 1 - i] = z;
        w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

const GK_X: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const GK_WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * GK_WK[7];
    let mut g = fc * GK_WG[3];
    for i in 0..7 {
        let dx = h * GK_X[i];
        let s = f(c - dx) + f(c + dx);
        k += s * GK_WK[i];
        if i % 2 == 1 {
            g += s * GK_WG[i / 2];
        }
    }
    (k * h, ((k - g) * h).norm())
}

/// Adaptive Gauss-Kronrod quadrature of a complex integrand on [a, b].
pub fn integrate<F: Fn(f64) -> C64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<C64> {
    let mut stack = vec![(a, b, 0usize)];
    let mut total = C64::new(0.0, 0.0);
    let (whole, _) = gk15(&f, a, b);
    let scale = whole.norm();
    let mut evals = 0usize;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err) = gk15(&f, lo, hi);
        evals += 15;
        if !val.re.is_finite() || !val.im.is_finite() {
            return Err(Error::Evaluation(format!("non-finite integrand on [{lo}, {hi}]")));
        }
        let width_frac = (hi - lo) / (b - a);
        if err <= (abs_tol + rel_tol * scale) * width_frac.max(1e-3) || depth > 40 {
            if depth > 40 && err > 1e3 * (abs_tol + rel_tol * scale) {
                return Err(Error::Accuracy(format!("quadrature stalled on [{lo}, {hi}]")));
            }
            total += val;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
        if evals > 2_000_000 {
            return Err(Error::Accuracy("quadrature budget exhausted".into()));
        }
    }
    Ok(total)
}

/// ∫_{-∞}^{s_c} g(s) ds through the map s = s_c − u/(1−u), u ∈ [0, 1).
/// Divergent tails show up as quadrature failure.
pub fn integrate_to_neg_infinity<F: Fn(f64) -> C64>(g: F, s_c: f64, abs_tol: f64, rel_tol: f64) -> Result<C64> {
    let mapped = |u: f64| {
        let one = 1.0 - u;
        let s = s_c - u / one;
        g(s) / (one * one)
    };
    integrate(mapped, 0.0, 1.0, abs_tol, rel_tol)
}

/// Aitken Δ² limit of three terms of a sequence (returns the last term when
/// the second difference vanishes).
pub fn aitken(s0: C64, s1: C64, s2: C64) -> C64 {
    let d1 = s1 - s0;
    let d2 = s2 - s1;
    let dd = d2 - d1;
    if dd.norm() <= 1e-14 * (s2.norm() + 1e-300) {
        return s2;
    }
    s2 - d2 * d2 / dd
}

/// Real version of [`aitken`].
pub fn aitken_real(s0: f64, s1: f64, s2: f64) -> f64 {
    aitken(C64::new(s0, 0.0), C64::new(s1, 0.0), C64::new(s2, 0.0)).re
}

/// order-th complex derivative by the M-point trapezoid rule on the Cauchy
/// integral over |z − x| = rho.
pub fn contour_derivative<F: Fn(C64) -> C64>(f: F, x: C64, order: u32, m: usize, rho: f64) -> Result<C64> {
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..m {
        let w = C64::from_polar(1.0, 2.0 * PI * j as f64 / m as f64);
        let v = f(x + w * rho);
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::Evaluation(format!("non-finite sample at {}", x + w * rho)));
        }
        acc += v * w.powi(-(order as i32));
    }
    let mut fact = 1.0;
    for k in 2..=order {
        fact *= k as f64;
    }
    Ok(acc * fact / (m as f64 * rho.powi(order as i32)))
}

/// Fourth-order central difference of s ↦ f(s) (the t·∂_t stencil in σ = log t).
pub fn central4<F: Fn(f64) -> C64>(f: F, s: f64, h: f64) -> C64 {
    (-f(s + 2.0 * h) + f(s + h) * 8.0 - f(s - h) * 8.0 + f(s - 2.0 * h)) / (12.0 * h)
}

/// Chebyshev-Lobatto points mapped to [lo, hi], ascending.
pub fn chebyshev_lobatto(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mid = 0.5 * (lo + hi);
    let hw = 0.5 * (hi - lo);
    (0..n)
        .map(|k| {
            if k == 0 {
                lo
            } else if k == n - 1 {
                hi
            } else {
                mid - hw * (PI * k as f64 / (n - 1) as f64).cos()
            }
        })
        .collect()
}

/// Cached 6-point Gauss-Legendre rule.
pub fn gauss6() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(6))
}

/// Binomial coefficient as f64.
pub fn binom(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(6);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_quadrature_and_infinite_tail() {
        let v = integrate(|s| C64::new(s.exp(), 0.0), 0.0, 1.0, 1e-14, 1e-13).unwrap();
        assert!((v.re - (1f64.exp() - 1.0)).abs() < 1e-13);
        // ∫_{-∞}^{-4} 1/s² ds = 1/4
        let t = integrate_to_neg_infinity(|s| C64::new(1.0 / (s * s), 0.0), -4.0, 1e-14, 1e-13).unwrap();
        assert!((t.re - 0.25).abs() < 1e-12);
    }

    #[test]
    fn contour_derivative_of_exp() {
        let d = contour_derivative(|z| z.exp(), C64::new(0.0, 0.0), 2, 64, 0.5).unwrap();
        assert!((d - 1.0).norm() < 1e-12);
    }

    #[test]
    fn lsq_recovers_two_parameter_model() {
        let rows: Vec<Vec<f64>> = (1..20).map(|k| vec![k as f64, (k as f64).ln(), 1.0]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 2.0 * r[0] - 0.5 * r[1] + 3.0).collect();
        let (c, rms) = lsq(&rows, &y);
        assert!((c[0] - 2.0).abs() < 1e-10 && (c[1] + 0.5).abs() < 1e-9 && rms < 1e-10);
    }
}

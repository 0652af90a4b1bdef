//! Dormand-Prince 5(4) for complex systems of fixed size, stepping exactly
//! onto a list of output abscissae.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const BSTAR: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub h_min: f64,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Dopri5 { rtol: 1e-10, atol: 1e-12, max_steps: 200_000, h_min: 1e-13 }
    }
}

impl Dopri5 {
    pub fn with_tol(rtol: f64, atol: f64) -> Self {
        Dopri5 { rtol, atol, ..Default::default() }
    }

    /// Integrate y' = f(s, y) from (s0, y0) through the ordered abscissae
    /// `outputs` (monotone in the direction of integration), calling
    /// `on_output(k, y)` at each. `guard` may reject a state (e.g. escape).
    pub fn integrate<const N: usize, F, G, O>(
        &self,
        f: F,
        s0: f64,
        y0: [C64; N],
        outputs: &[f64],
        guard: G,
        mut on_output: O,
    ) -> Result<[C64; N]>
    where
        F: Fn(f64, &[C64; N]) -> [C64; N],
        G: Fn(f64, &[C64; N]) -> Result<()>,
        O: FnMut(usize, &[C64; N]) -> Result<()>,
    {
        let mut s = s0;
        let mut y = y0;
        let Some(&last) = outputs.last() else { return Ok(y) };
        let dir = if last >= s0 { 1.0 } else { -1.0 };
        let span = (last - s0).abs();
        let mut h = (0.01 * span).clamp(1e-6, 0.1).max(self.h_min) * dir;
        let mut steps = 0usize;
        let mut k1 = f(s, &y);
        for (idx, &target) in outputs.iter().enumerate() {
            while (target - s) * dir > 1e-14 * (1.0 + s.abs()) {
                if steps >= self.max_steps {
                    return Err(Error::Stiffness { t: s.exp() });
                }
                steps += 1;
                let clipped = (target - s).abs() <= h.abs();
                let hs = if clipped { target - s } else { h };
                let (ynew, err, k7) = self.step(&f, s, &y, &k1, hs);
                let en = self.err_norm(&y, &ynew, &err);
                if !en.is_finite() {
                    h *= 0.25;
                    if h.abs() < self.h_min {
                        return Err(Error::Stiffness { t: s.exp() });
                    }
                    continue;
                }
                if en <= 1.0 {
                    let snew = if clipped { target } else { s + hs };
                    guard(snew, &ynew)?;
                    s = snew;
                    y = ynew;
                    k1 = k7;
                    let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
                    if !clipped || fac < 1.0 {
                        h = hs * fac;
                    }
                } else {
                    h = hs * (0.9 * en.powf(-0.2)).clamp(0.1, 1.0);
                    if h.abs() < self.h_min {
                        return Err(Error::Stiffness { t: s.exp() });
                    }
                }
            }
            on_output(idx, &y)?;
        }
        Ok(y)
    }

    fn step<const N: usize, F>(&self, f: &F, s: f64, y: &[C64; N], k1: &[C64; N], h: f64) -> ([C64; N], [C64; N], [C64; N])
    where
        F: Fn(f64, &[C64; N]) -> [C64; N],
    {
        let mut k = [[C64::new(0.0, 0.0); N]; 7];
        k[0] = *k1;
        for st in 1..7 {
            let mut yt = *y;
            for (j, kj) in k.iter().enumerate().take(st) {
                let a = A[st][j];
                if a != 0.0 {
                    for i in 0..N {
                        yt[i] += kj[i] * (a * h);
                    }
                }
            }
            k[st] = f(s + C[st] * h, &yt);
        }
        let mut ynew = *y;
        let mut err = [C64::new(0.0, 0.0); N];
        for (st, kst) in k.iter().enumerate() {
            for i in 0..N {
                ynew[i] += kst[i] * (B[st] * h);
                err[i] += kst[i] * ((B[st] - BSTAR[st]) * h);
            }
        }
        (ynew, err, k[6])
    }

    fn err_norm<const N: usize>(&self, y: &[C64; N], ynew: &[C64; N], err: &[C64; N]) -> f64 {
        (0..N)
            .map(|i| err[i].norm() / (self.atol + self.rtol * y[i].norm().max(ynew[i].norm())))
            .fold(0.0, f64::max)
    }

    /// Convenience: integrate to a single point.
    pub fn solve<const N: usize, F>(&self, f: F, s0: f64, y0: [C64; N], s1: f64) -> Result<[C64; N]>
    where
        F: Fn(f64, &[C64; N]) -> [C64; N],
    {
        self.integrate(f, s0, y0, &[s1], |_, _| Ok(()), |_, _| Ok(()))
    }
}

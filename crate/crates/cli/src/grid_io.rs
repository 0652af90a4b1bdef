//! Solution grids as CSV: one row per (radius, t, x) node, columns
//! t, re x, im x, re u, im u, floats in shortest round-trip form.

use std::collections::BTreeMap;
use std::path::Path;

use briot::germ::{circle_nodes, horner, horner_d, taylor_from_circle};
use briot::solution::{Exponent, Provenance, SolutionHandle};
use briot::{Error, Result, C64};

pub const HEADER: [&str; 5] = ["t", "re x", "im x", "re u", "im u"];

#[derive(Debug, Clone)]
pub struct GridSpec {
    pub n_t: usize,
    pub n_x: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub radii: Vec<f64>,
}

impl GridSpec {
    pub fn ts(&self) -> Vec<f64> {
        if self.n_t == 1 {
            return vec![self.t_max];
        }
        let (a, b) = (self.t_min.ln(), self.t_max.ln());
        let mut ts: Vec<f64> = (0..self.n_t).map(|k| (a + (b - a) * k as f64 / (self.n_t - 1) as f64).exp()).collect();
        ts[0] = self.t_min;
        ts[self.n_t - 1] = self.t_max;
        ts
    }

    pub fn nodes(&self) -> Vec<(f64, C64)> {
        let ts = self.ts();
        let mut out = Vec::with_capacity(self.radii.len() * ts.len() * self.n_x);
        for &r in &self.radii {
            let xs = circle_nodes(self.n_x, r, C64::new(0.0, 0.0));
            for &t in &ts {
                out.extend(xs.iter().map(|&x| (t, x)));
            }
        }
        out
    }
}

/// "16x32" → (16, 32)
pub fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected NTxNX, got `{s}`"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    let (nt, nx) = (p(a)?, p(b)?);
    if nt == 0 || nx == 0 {
        return Err("grid sizes must be positive".into());
    }
    Ok((nt, nx))
}

pub fn write_grid(path: &Path, g: &GridSpec, u: &SolutionHandle) -> Result<()> {
    let nodes = g.nodes();
    let vals = briot::par::map_slice(&nodes, |&(t, x)| u.eval(t, x));
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(HEADER).map_err(io_err)?;
    for ((t, x), v) in nodes.iter().zip(vals) {
        w.write_record([t.to_string(), x.re.to_string(), x.im.to_string(), v.re.to_string(), v.im.to_string()])
            .map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::Problem(e.to_string()))
}

pub fn write_pairs(path: &Path, header: [&str; 2], rows: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(header).map_err(io_err)?;
    for (a, b) in rows {
        w.write_record([a.to_string(), b.to_string()]).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::Problem(e.to_string()))
}

fn io_err(e: csv::Error) -> Error {
    Error::Problem(e.to_string())
}

/// A handle interpolating a grid file: Taylor coefficients from the largest
/// circle at each t, geometric (else linear) in log t between nodes. Returns the handle and
/// the smallest t on the grid.
pub fn read_grid(path: &Path) -> Result<(SolutionHandle, f64)> {
    let mut rd = csv::Reader::from_path(path).map_err(io_err)?;
    let mut by_r: BTreeMap<u64, BTreeMap<u64, Vec<(C64, C64)>>> = BTreeMap::new();
    for rec in rd.records() {
        let rec = rec.map_err(io_err)?;
        let f = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Problem(format!("bad field {i} in {}", path.display())))
        };
        let (t, x, u) = (f(0)?, C64::new(f(1)?, f(2)?), C64::new(f(3)?, f(4)?));
        let rk = ((x.norm() * 1e9).round() as u64).max(1);
        by_r.entry(rk).or_default().entry(t.to_bits()).or_default().push((x, u));
    }
    let (_, rows) = by_r.into_iter().last().ok_or_else(|| Error::Problem(format!("{} has no rows", path.display())))?;
    let mut r = 0.0;
    let mut table: Vec<(f64, Vec<C64>)> = Vec::new();
    for (tb, mut pts) in rows {
        let t = f64::from_bits(tb);
        pts.sort_by(|a, b| a.0.arg().rem_euclid(std::f64::consts::TAU).total_cmp(&b.0.arg().rem_euclid(std::f64::consts::TAU)));
        let m = pts.len();
        r = pts[0].0.norm();
        let samples: Vec<C64> = pts.iter().map(|p| p.1).collect();
        let mut c = taylor_from_circle(&samples, r, 0.0);
        c.truncate(m / 2);
        table.push((t.ln(), c));
    }
    table.sort_by(|a, b| a.0.total_cmp(&b.0));
    let t_lo = table[0].0.exp();
    let t_hi = table[table.len() - 1].0.exp();
    // below the grid each coefficient continues as the power law through the
    // two lowest nodes
    let scale = table.iter().flat_map(|e| e.1.iter()).map(|c| c.norm()).fold(0.0, f64::max);
    let tail: Vec<(C64, f64)> = {
        let (s0, c0) = (&table[0].0, &table[0].1);
        let (s1, c1) = (&table[1.min(table.len() - 1)].0, &table[1.min(table.len() - 1)].1);
        c0.iter()
            .enumerate()
            .map(|(k, a)| {
                let b = c1.get(k).copied().unwrap_or_default();
                if a.norm() <= 1e-13 * scale || b.norm() <= 1e-13 * scale || s1 <= s0 {
                    return (C64::new(0.0, 0.0), 0.0);
                }
                let p = ((b.norm() / a.norm()).ln() / (s1 - s0)).max(0.0);
                (*a, p)
            })
            .collect()
    };
    let s_lo = table[0].0;
    let table = std::sync::Arc::new(table);
    let coeffs = {
        let table = table.clone();
        move |t: f64| -> Vec<C64> {
            let s = t.ln();
            let n = table.len();
            let i = table.partition_point(|e| e.0 <= s);
            if i == 0 {
                return tail.iter().map(|(a, p)| a * ((s - s_lo) * p).exp()).collect();
            }
            if i == n {
                return table[n - 1].1.clone();
            }
            let (s0, c0) = (&table[i - 1].0, &table[i - 1].1);
            let (s1, c1) = (&table[i].0, &table[i].1);
            let w = (s - s0) / (s1 - s0);
            (0..c0.len().max(c1.len()))
                .map(|k| {
                    let a = c0.get(k).copied().unwrap_or_default();
                    let b = c1.get(k).copied().unwrap_or_default();
                    // power-law behaviour in t is interpolated exactly
                    let q = b / a;
                    if q.re > 0.0 && q.im.abs() < 1e-3 * q.re {
                        a * q.powf(w)
                    } else {
                        a * (1.0 - w) + b * w
                    }
                })
                .collect()
        }
    };
    let c2 = coeffs.clone();
    let h = SolutionHandle::new(move |t, x| horner(&coeffs(t), x), t_hi, r, Provenance::Sum, Exponent::Exact(0.0), 0.0)
        .with_deriv(move |t, x| horner_d(&c2(t), x).1);
    Ok((h, t_lo))
}

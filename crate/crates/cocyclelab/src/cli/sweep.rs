use std::f64::consts::PI;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::cocycle::{acceleration, degree};
use crate::error::{Error, Result};

use super::commands::EstimatorParams;
use super::spec::{CocycleSpec, Form, Mode};

/// Family parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Sets the `J1` part of the mean to `2πc0`.
    C0,
    /// Multiplies every coefficient.
    Scale,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c0" => Ok(SweepParam::C0),
            "scale" => Ok(SweepParam::Scale),
            _ => Err(Error::Input(format!("unknown sweep parameter {s:?} (expected c0 or scale)"))),
        }
    }
}

pub const SWEEP_HEADER: [&str; 11] = [
    "value", "accel_w1", "accel_w2", "accel_w3", "accel_residual", "degree_raw", "degree_residual", "accel_snap",
    "degree_snap", "agreement", "exit_code",
];

/// Spec at one grid value.
pub fn instantiate(template: &CocycleSpec, param: SweepParam, value: f64) -> Result<CocycleSpec> {
    let mut s = template.clone();
    match (param, s.form) {
        (SweepParam::C0, Form::ExpSum) => {
            let t = 2.0 * PI * value;
            match s.coefficients.iter_mut().find(|m| m.k == 0) {
                Some(m) => m.v[0] = [t, 0.0],
                None => s.coefficients.push(Mode { k: 0, v: [[t, 0.0], [0.0, 0.0], [0.0, 0.0]] }),
            }
        }
        (SweepParam::C0, Form::Product) => return Err(Error::Input("c0 sweeps need an exp-sum template".into())),
        (SweepParam::Scale, _) => {
            let scale = |modes: &mut Vec<Mode>| {
                for m in modes.iter_mut() {
                    m.v = m.v.map(|z| [z[0] * value, z[1] * value]);
                }
            };
            scale(&mut s.coefficients);
            for f in &mut s.factors {
                scale(&mut f.coefficients);
            }
        }
    }
    Ok(s)
}

fn row(spec: &CocycleSpec, value: f64, p: &EstimatorParams) -> Vec<String> {
    let eval = || -> Result<Vec<String>> {
        let c = spec.build()?;
        let eps = p.eps_grid.clone().unwrap_or_else(|| crate::cocycle::default_eps_grid(c.h));
        let a = acceleration(&c, &eps, p.n, p.grid)?;
        let d = degree(&c, p.degree_n, p.grid)?;
        let agree = a.snapped == d.snapped;
        let code = if agree && a.snap_ok && d.snap_ok { 0 } else { 2 };
        let snap = |v: &[i64]| v.iter().map(i64::to_string).collect::<Vec<_>>().join(" ");
        Ok(vec![
            value.to_string(),
            a.raw[0].to_string(),
            a.raw[1].to_string(),
            a.raw[2].to_string(),
            a.residual.to_string(),
            d.raw[0].to_string(),
            d.residual.to_string(),
            snap(&a.snapped),
            snap(&d.snapped),
            agree.to_string(),
            code.to_string(),
        ])
    };
    eval().unwrap_or_else(|e| {
        let mut r = vec![value.to_string()];
        r.extend(std::iter::repeat_n(String::new(), SWEEP_HEADER.len() - 2));
        r.push(e.exit_code().to_string());
        r
    })
}

/// Acceleration and degree over `grid`, one CSV row per value in grid order.
pub fn cmd_sweep<W: Write>(template: &CocycleSpec, param: SweepParam, grid: &[f64], p: &EstimatorParams, out: W) -> Result<()> {
    let specs = grid.iter().map(|&v| instantiate(template, param, v)).collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<String>> = specs.par_iter().zip(grid.par_iter()).map(|(s, &v)| row(s, v, p)).collect();
    let io = |e: csv::Error| Error::Input(format!("writing sweep output: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Input(format!("writing sweep output: {e}")))?;
    Ok(())
}

/// Parses `a,b,c` or `lo:hi:count`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let bad = || Error::Input(format!("cannot parse grid {s:?}"));
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].parse().map_err(|_| bad())?;
        let n: usize = parts[2].parse().map_err(|_| bad())?;
        return Ok(match n {
            0 => vec![],
            1 => vec![lo],
            _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
        });
    }
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| bad())).collect()
}

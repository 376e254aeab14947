use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use qbc_core::math::{
    binding_bound, final_key_rate_with_efficiency, redundant_key_rate_with_efficiency, BindingParams,
    BindingVariant, EC_EFFICIENCY,
};

use crate::{usage, Failure};

/// Evenly spaced points from `start` to `stop` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub start: f64,
    pub stop: f64,
    pub points: u32,
}

impl Axis {
    fn values(&self, name: &str) -> Result<Vec<f64>, Failure> {
        if !(self.start.is_finite() && self.stop.is_finite()) || self.start > self.stop {
            return Err(usage(format!("{name}: need finite start <= stop")));
        }
        if self.points == 0 {
            return Err(usage(format!("{name}.points must be at least 1")));
        }
        if self.points == 1 {
            return Ok(vec![self.start]);
        }
        let step = (self.stop - self.start) / f64::from(self.points - 1);
        Ok((0..self.points)
            .map(|i| if i + 1 == self.points { self.stop } else { self.start + step * f64::from(i) })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatesConfig {
    pub n_quarter: u32,
    pub f_ec: f64,
    pub q_tol: Axis,
    pub p: Axis,
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self {
            n_quarter: 100,
            f_ec: EC_EFFICIENCY,
            q_tol: Axis {
                start: 0.0,
                stop: 0.06,
                points: 61,
            },
            p: Axis {
                start: 0.0,
                stop: 0.01,
                points: 11,
            },
        }
    }
}

#[derive(Serialize)]
struct RateRow {
    q_tol: f64,
    p: f64,
    r: f64,
    r_prime: f64,
}

fn csv_bytes<R: Serialize>(rows: &[R]) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(anyhow::Error::from)?;
    }
    w.into_inner().map_err(|e| Failure::Runtime(anyhow::anyhow!("{e}")))
}

pub fn rates_csv(cfg: &RatesConfig) -> Result<Vec<u8>, Failure> {
    if cfg.n_quarter == 0 {
        return Err(usage("n_quarter must be at least 1"));
    }
    let qs = cfg.q_tol.values("q_tol")?;
    let ps = cfg.p.values("p")?;
    let mut rows = Vec::with_capacity(qs.len() * ps.len());
    for &q in &qs {
        let r = final_key_rate_with_efficiency(q, cfg.f_ec).map_err(|e| usage(format!("q_tol: {e}")))?;
        for &p in &ps {
            let r_prime = redundant_key_rate_with_efficiency(q, p, cfg.n_quarter, cfg.f_ec)
                .map_err(|e| usage(format!("p: {e}")))?;
            rows.push(RateRow { q_tol: q, p, r, r_prime });
        }
    }
    csv_bytes(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BindingConfig {
    pub p: Vec<f64>,
    pub n_tol: Vec<u32>,
    pub e_tol: Vec<f64>,
    pub variants: Vec<BindingVariant>,
    pub delta_grid: u32,
}

impl Default for BindingConfig {
    fn default() -> Self {
        Self {
            p: vec![0.1],
            n_tol: vec![10, 20, 40, 80, 160, 320],
            e_tol: vec![0.05],
            variants: vec![BindingVariant::Literal, BindingVariant::Hoeffding],
            delta_grid: BindingParams::DEFAULT_GRID,
        }
    }
}

#[derive(Serialize)]
struct BindingRow {
    p: f64,
    n_tol: u32,
    e_tol: f64,
    variant: BindingVariant,
    eps_b: f64,
}

fn sorted_f64(name: &str, mut v: Vec<f64>) -> Result<Vec<f64>, Failure> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(usage(format!("{name}: values must be finite")));
    }
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

pub fn binding_csv(cfg: &BindingConfig) -> Result<Vec<u8>, Failure> {
    let ps = sorted_f64("p", cfg.p.clone())?;
    let es = sorted_f64("e_tol", cfg.e_tol.clone())?;
    let mut ns = cfg.n_tol.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut vs = cfg.variants.clone();
    vs.sort_unstable();
    vs.dedup();

    let mut grid = Vec::new();
    for &p in &ps {
        for &n in &ns {
            for &e in &es {
                for &v in &vs {
                    let bp = BindingParams::new(p, n, e).with_variant(v).with_grid(cfg.delta_grid);
                    bp.validate().map_err(|err| usage(format!("row p={p} n_tol={n} e_tol={e}: {err}")))?;
                    grid.push(bp);
                }
            }
        }
    }
    let rows = grid
        .par_iter()
        .map(|bp| {
            Ok(BindingRow {
                p: bp.p_commit,
                n_tol: bp.n_tol,
                e_tol: bp.e_tol,
                variant: bp.variant,
                eps_b: binding_bound(bp)?,
            })
        })
        .collect::<qbc_core::Result<Vec<_>>>()
        .map_err(anyhow::Error::from)?;
    csv_bytes(&rows)
}

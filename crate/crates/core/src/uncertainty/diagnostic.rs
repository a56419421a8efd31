use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::OccupancyField;
use crate::render::{quadrature, transmittance, Ray};

use super::{boundary_uncertainty, rate_correction, uncertainty_transmittance, UncertaintyParams};

pub const DIAGNOSTIC_HEADER: &str = "t,o,o_gt,T,T_u,d,u_p,u_cum,u_cum_noTu,u_cum_nod";

/// Per-sample quantities along one ray, with three running depth
/// uncertainty sums: the full one, one with standard `T` in place of `T_u`,
/// and one without the rate correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub t: f64,
    pub o: f64,
    pub o_gt: f64,
    #[serde(rename = "T")]
    pub transmittance: f64,
    #[serde(rename = "T_u")]
    pub uncertainty_transmittance: f64,
    pub d: f64,
    pub u_p: f64,
    pub u_cum: f64,
    #[serde(rename = "u_cum_noTu")]
    pub u_cum_no_tu: f64,
    pub u_cum_nod: f64,
}

pub fn ray_diagnostic(
    pred: &dyn OccupancyField,
    gt: &dyn OccupancyField,
    ray: &Ray,
    params: &UncertaintyParams,
    n_samples: usize,
) -> Result<Vec<DiagnosticRow>> {
    params.validate()?;
    let q = quadrature(pred, ray, n_samples)?;
    let t = transmittance(&q);
    let tu = uncertainty_transmittance(&q, params.lambda_t)?;
    let d = rate_correction(&q, params.lambda_d.current())?;
    let (mut full, mut no_tu, mut no_d) = (0.0, 0.0, 0.0);
    Ok((0..q.len())
        .map(|i| {
            let u_p = boundary_uncertainty(q.occupancies[i], params.lambda_u);
            full += tu[i] * d[i] * u_p * q.dt;
            no_tu += t[i] * d[i] * u_p * q.dt;
            no_d += tu[i] * u_p * q.dt;
            DiagnosticRow {
                t: q.ts[i],
                o: q.occupancies[i],
                o_gt: gt.occupancy_at(&q.positions[i]),
                transmittance: t[i],
                uncertainty_transmittance: tu[i],
                d: d[i],
                u_p,
                u_cum: full,
                u_cum_no_tu: no_tu,
                u_cum_nod: no_d,
            }
        })
        .collect())
}

pub fn write_diagnostic_csv<W: Write>(rows: &[DiagnosticRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(DIAGNOSTIC_HEADER.split(','))?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<diagnostic output>", e))
}

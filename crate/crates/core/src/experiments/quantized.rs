//! Quantized-entropy discrepancy for a uniform distribution on a unit
//! segment through the origin: the 1-D entropy of the segment coordinate
//! minus the 2-D entropy of the planar point, both under a uniform grid of
//! step `delta`.

use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use super::{Abscissa, Criterion, ExperimentReport, LimitMethod, Record, ReportBuilder, Settings};
use crate::error::{invalid, Result};

/// Tolerance on the discrepancy at the finest step.
const TOL_QUANTIZED: f64 = 1e-3;

fn check_step(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(invalid(format!("quantizer step {delta} must lie in (0, 0.5]")));
    }
    Ok(())
}

/// Entropy in nats of the cell index of `t (cos a, sin a)`, `t ~ U[0, 1]`,
/// on the grid `delta Z^2`. Cell boundaries are counted exactly from the
/// crossing parameters `k delta / |cos a|` and `k delta / |sin a|`.
pub fn segment_entropy(angle: f64, delta: f64) -> Result<f64> {
    check_step(delta)?;
    if !angle.is_finite() {
        return Err(invalid("angle must be finite"));
    }
    let mut cuts = Vec::new();
    for c in [angle.cos().abs(), angle.sin().abs()] {
        let mut k = 1.0;
        loop {
            let t = k * delta / c;
            if !(t < 1.0) {
                break;
            }
            cuts.push(t);
            k += 1.0;
        }
    }
    Ok(entropy_of_cuts(cuts, delta))
}

/// Entropy of `U[0, 1]` split at `cuts`; cuts closer than `1e-12 delta`
/// to each other or to an endpoint are merged.
fn entropy_of_cuts(mut cuts: Vec<f64>, delta: f64) -> f64 {
    let eps = 1e-12 * delta;
    cuts.sort_by(f64::total_cmp);
    let mut h = 0.0;
    let mut prev = 0.0;
    for t in cuts.into_iter().chain(std::iter::once(1.0)) {
        let len = if t >= 1.0 - eps { 1.0 - prev } else { t - prev };
        if len > eps {
            h -= len * len.ln();
            prev = if t >= 1.0 - eps { 1.0 } else { t };
        }
    }
    h
}

/// `H_1(u^delta) - H_2(y^delta)` for the segment at `angle`.
pub fn quantized_discrepancy(angle: f64, delta: f64) -> Result<f64> {
    let h2 = segment_entropy(angle, delta)?;
    let h1 = segment_entropy(0.0, delta)?;
    Ok(h1 - h2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuantizedParams {
    /// Segment direction in radians.
    pub angle: f64,
    /// Quantizer steps; 20 log-spaced values from 0.5 down to 1e-4 when absent.
    pub deltas: Option<Vec<f64>>,
    /// Required unless the angle is diagonal or axis-aligned.
    pub target: Option<f64>,
}

impl Default for QuantizedParams {
    fn default() -> Self {
        Self {
            angle: FRAC_PI_4,
            deltas: None,
            target: None,
        }
    }
}

fn default_steps() -> Vec<f64> {
    let (a, b) = (0.5f64.ln(), 1e-4f64.ln());
    (0..20).map(|i| (a + (b - a) * i as f64 / 19.0).exp()).collect()
}

/// Predicted limit: `ln sqrt 2` on diagonals, `0` on axes.
fn default_target(angle: f64) -> Option<f64> {
    let (c, s) = (angle.cos().abs(), angle.sin().abs());
    if (c - s).abs() < 1e-12 {
        Some(0.5 * 2f64.ln())
    } else if c.min(s) < 1e-12 {
        Some(0.0)
    } else {
        None
    }
}

/// Discrepancy sweep over decreasing steps; the limit is the value at the
/// finest step. Records carry the step in place of `n`.
pub fn run_quantized_discrepancy(params: &QuantizedParams, settings: &Settings) -> Result<ExperimentReport> {
    if settings.n_grid.is_some() {
        return Err(invalid("quantized sweeps take params.deltas, not n_grid"));
    }
    let b = ReportBuilder::start("quantized", params, settings);
    let tol = settings.tolerance_or(TOL_QUANTIZED)?;
    let mut steps = params.deltas.clone().unwrap_or_else(default_steps);
    if steps.is_empty() {
        return Err(invalid("deltas must not be empty"));
    }
    for &d in &steps {
        check_step(d)?;
    }
    steps.sort_by(|x, y| y.total_cmp(x));
    steps.dedup();
    let target = match params.target.or_else(|| default_target(params.angle)) {
        Some(t) => t,
        None => return Err(invalid("target is required for angles other than diagonals and axes")),
    };
    let records = steps
        .iter()
        .map(|&d| {
            Ok(Record {
                n: Abscissa::Step(d),
                value: quantized_discrepancy(params.angle, d)?,
                warnings: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(b.finish(records, LimitMethod::Terminal, target, tol, Criterion::Within))
}

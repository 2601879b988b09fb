//! Rate-distortion gap between an unstable Gauss-Markov source and its
//! stable counterpart with reflected poles.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{default_grid, Criterion, ExperimentReport, LimitMethod, Record, ReportBuilder, Settings, TOL_CONDITIONED};
use crate::error::{invalid, Error, Result};
use crate::lti::{RootJson, TransferFunction};
use crate::toeplitz;

/// Water level and rate of reverse water-filling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Waterfill {
    pub theta: f64,
    /// Nats per component.
    pub rate: f64,
}

/// Reverse water-filling over eigenvalues given as natural logs.
///
/// Solves `(1/n) sum min(lambda_i, theta) = D` by bisection on `ln theta`
/// and returns `R = (1/n) sum_{lambda_i > theta} 1/2 ln(lambda_i / theta)`.
/// When `D` reaches the mean eigenvalue the rate is zero and `theta` is
/// clamped to the largest eigenvalue.
pub fn rdf_reverse_waterfill(log_eigs: &[f64], distortion: f64) -> Result<Waterfill> {
    if !(distortion > 0.0 && distortion.is_finite()) {
        return Err(invalid("distortion must be positive"));
    }
    if log_eigs.is_empty() || log_eigs.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
        return Err(invalid("log-eigenvalues must be finite or -inf"));
    }
    let n = log_eigs.len() as f64;
    let top = log_eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ln_d = distortion.ln();
    // Mean of min(lambda, theta) in log-sum-exp form, relative to D.
    let excess = |ln_theta: f64| -> f64 {
        let s: f64 = log_eigs.iter().map(|&l| (l.min(ln_theta) - ln_d).exp()).sum();
        s / n - 1.0
    };
    if excess(top) <= 0.0 {
        return Ok(Waterfill {
            theta: top.exp(),
            rate: 0.0,
        });
    }
    let (mut lo, mut hi) = (ln_d.min(top), top);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    let ln_theta = 0.5 * (lo + hi);
    let rate = log_eigs
        .iter()
        .filter(|&&l| l > ln_theta)
        .map(|&l| 0.5 * (l - ln_theta))
        .sum::<f64>()
        / n;
    Ok(Waterfill {
        theta: ln_theta.exp(),
        rate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RdfGapParams {
    pub poles: Vec<RootJson>,
    pub distortion: f64,
    /// Optional stable, minimum-phase, biproper innovations filter for `w`.
    pub innovations: Option<TransferFunction>,
    pub target: Option<f64>,
}

impl Default for RdfGapParams {
    fn default() -> Self {
        Self {
            poles: vec![RootJson::Real(1.3)],
            distortion: 0.2,
            innovations: None,
            target: None,
        }
    }
}

/// Source `x = A w` with `A = 1/prod(1 - p_i z^{-1})` and its stable
/// counterpart `A~`: unstable poles reflected to `1/conj(p)` and gain
/// `prod |p|^{-1}` over the reflected ones.
fn sources(poles: &[Complex64], innovations: Option<&TransferFunction>) -> Result<(TransferFunction, TransferFunction)> {
    let origin = vec![Complex64::new(0.0, 0.0); poles.len()];
    let a = TransferFunction::new(origin.clone(), poles.to_vec(), 1.0)?;
    let mut gain = 1.0;
    let reflected: Vec<Complex64> = poles
        .iter()
        .map(|&p| {
            if p.norm() > 1.0 {
                gain /= p.norm();
                p.conj().inv()
            } else {
                p
            }
        })
        .collect();
    let stable = TransferFunction::new(origin, reflected, gain)?;
    match innovations {
        Some(s) => {
            if !(s.is_stable() && s.is_minimum_phase() && s.is_biproper()) {
                return Err(invalid("innovations filter must be stable, minimum phase and biproper"));
            }
            Ok((a.cascade(s), stable.cascade(s)))
        }
        None => Ok((a, stable)),
    }
}

/// Per-sample variance of the stationary stable source.
fn stationary_variance(stable: &TransferFunction) -> f64 {
    let mut len = 1024;
    loop {
        let h = stable.impulse_response(len).samples;
        let total = h.iter().map(|v| v * v).sum::<f64>();
        let tail = h[len / 2..].iter().map(|v| v * v).sum::<f64>();
        if tail <= 1e-15 * total || len >= 1 << 20 {
            return total;
        }
        len *= 4;
    }
}

fn log_eigs(tf: &TransferFunction, n: usize) -> Result<Vec<f64>> {
    let cm = toeplitz::conv_matrix(&tf.impulse_response(n).samples, n)?;
    Ok(toeplitz::svd_spectrum(&cm, false)?
        .values
        .iter()
        .map(|s| 2.0 * s.ln())
        .collect())
}

/// `R_{x,n}(D) - R_{x~,n}(D)` in nats per sample.
pub fn rdf_gap(
    poles: &[Complex64],
    distortion: f64,
    innovations: Option<&TransferFunction>,
    n: usize,
) -> Result<f64> {
    let (a, stable) = sources(poles, innovations)?;
    let var = stationary_variance(&stable);
    if distortion >= var {
        return Err(Error::InfeasibleDistortion {
            distortion,
            variance: var,
        });
    }
    let rx = rdf_reverse_waterfill(&log_eigs(&a, n)?, distortion)?.rate;
    let rs = rdf_reverse_waterfill(&log_eigs(&stable, n)?, distortion)?.rate;
    Ok(rx - rs)
}

/// Gap sweep; target `sum_{|p_i|>1} ln|p_i|`.
pub fn run_rdf_gap(params: &RdfGapParams, settings: &Settings) -> Result<ExperimentReport> {
    let b = ReportBuilder::start("rdf_gap", params, settings);
    let grid = settings.grid(default_grid(10, 60))?;
    let tol = settings.tolerance_or(TOL_CONDITIONED)?;
    let poles: Vec<Complex64> = params.poles.iter().map(|&p| p.into()).collect();
    if poles.is_empty() {
        return Err(invalid("rdf_gap needs at least one pole"));
    }
    let records = grid
        .par_iter()
        .map(|&n| Ok(Record::new(n, rdf_gap(&poles, params.distortion, params.innovations.as_ref(), n)?, Vec::new())))
        .collect::<Result<Vec<_>>>()?;
    let target = params
        .target
        .unwrap_or_else(|| poles.iter().filter(|p| p.norm() > 1.0).map(|p| p.norm().ln()).sum());
    Ok(b.finish(records, LimitMethod::Richardson, target, tol, Criterion::Within))
}

//! Sweeps over the gain identities, the singular spectra and the probes.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    default_grid, Criterion, ExperimentReport, Limit, LimitMethod, Record, ReportBuilder, Settings, TOL_GAUSSIAN,
    TOL_MC,
};
use crate::error::{invalid, Result};
use crate::gaussian::{self, DisturbanceSpec, InitialState, InputSpec, Placement};
use crate::lti::TransferFunction;
use crate::processes::{self, McSettings, ProcessSpec, DEFAULT_K};
use crate::toeplitz::{self, DecayFit, SingularSpectrum};
use crate::warning::Warning;

pub(crate) fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(invalid(format!("{what}: rows have different lengths")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn nmp_fir(g: &[f64]) -> TransferFunction {
    TransferFunction::fir(g).expect("valid FIR")
}

/// Stream seed for grid point `n`, so sweeps do not depend on scheduling.
fn point_rng(seed: u64, n: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisturbanceParams {
    pub filter: TransferFunction,
    pub input: InputSpec,
    pub placement: Placement,
    pub seed_covariance: Vec<Vec<f64>>,
    pub target: Option<f64>,
}

impl Default for DisturbanceParams {
    fn default() -> Self {
        Self {
            filter: nmp_fir(&[1.0, -1.5]),
            input: InputSpec::default(),
            placement: Placement::FirstCoordinates,
            seed_covariance: vec![vec![1e-4]],
            target: None,
        }
    }
}

impl DisturbanceParams {
    fn spec(&self, n: usize, seed: u64) -> Result<DisturbanceSpec> {
        let k = matrix(&self.seed_covariance, "seed_covariance")?;
        match self.placement {
            Placement::FirstCoordinates => DisturbanceSpec::first_coordinates(n, k),
            Placement::RandomOrthonormal => DisturbanceSpec::random_orthonormal(n, k, &mut point_rng(seed, n)),
            Placement::Custom => Err(invalid("custom disturbance bases are fixed-length; use the library API")),
        }
    }

    /// `ln|g_0|` plus the `min(kappa, m)` largest NMP zero log-moduli.
    fn default_target(&self) -> f64 {
        let kappa = self.seed_covariance.len();
        let s = self.filter.nmp_summary();
        self.filter.gain().abs().ln() + s.partial_sum(kappa.min(s.m))
    }
}

/// Per-sample disturbance gain over the grid; limit by `L + c/n` fit.
pub fn run_disturbance(params: &DisturbanceParams, settings: &Settings) -> Result<ExperimentReport> {
    let b = ReportBuilder::start("disturbance", params, settings);
    let grid = settings.grid(default_grid(10, 300))?;
    let tol = settings.tolerance_or(TOL_GAUSSIAN)?;
    let records = grid
        .par_iter()
        .map(|&n| {
            let d = params.spec(n, settings.seed)?;
            let g = gaussian::disturbance_gain(&params.filter, &params.input, &d, n)?;
            Ok(Record::new(n, g.nats_per_sample, g.warnings))
        })
        .collect::<Result<Vec<_>>>()?;
    let target = params.target.unwrap_or_else(|| params.default_target());
    Ok(b.finish(records, LimitMethod::Richardson, target, tol, Criterion::Within))
}

/// Disturbance entering before the filter; the target is `ln|g_0|`.
pub fn run_input_disturbance(params: &DisturbanceParams, settings: &Settings) -> Result<ExperimentReport> {
    let b = ReportBuilder::start("input_disturbance", params, settings);
    let grid = settings.grid(default_grid(10, 300))?;
    let tol = settings.tolerance_or(TOL_GAUSSIAN)?;
    let records = grid
        .par_iter()
        .map(|&n| {
            let d = params.spec(n, settings.seed)?;
            let g = gaussian::input_disturbance_gain(&params.filter, &params.input, &d, n)?;
            Ok(Record::new(n, g.nats_per_sample, g.warnings))
        })
        .collect::<Result<Vec<_>>>()?;
    let target = params.target.unwrap_or_else(|| params.filter.gain().abs().ln());
    Ok(b.finish(records, LimitMethod::Richardson, target, tol, Criterion::Within))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialStateParams {
    pub filter: TransferFunction,
    pub input: InputSpec,
    /// `p x p` covariance of the initial state; identity when neither this
    /// nor `x0_factor` is given.
    pub x0_covariance: Option<Vec<Vec<f64>>>,
    /// `p x tau` factor `F` with covariance `F F^T`.
    pub x0_factor: Option<Vec<Vec<f64>>>,
    pub target: Option<f64>,
}

impl Default for InitialStateParams {
    fn default() -> Self {
        Self {
            filter: nmp_fir(&[1.0, -1.5]),
            input: InputSpec::default(),
            x0_covariance: None,
            x0_factor: None,
            target: None,
        }
    }
}

impl InitialStateParams {
    fn state(&self) -> Result<InitialState> {
        let p = self.filter.order();
        match (&self.x0_covariance, &self.x0_factor) {
            (Some(_), Some(_)) => Err(invalid("give either x0_covariance or x0_factor, not both")),
            (Some(k), None) => InitialState::from_covariance(&matrix(k, "x0_covariance")?),
            (None, Some(f)) => {
                let f = matrix(f, "x0_factor")?;
                if f.ncols() == 0 || f.column_iter().all(|c| c.iter().all(|v| *v == 0.0)) {
                    return Ok(InitialState::deterministic(f.nrows()));
                }
                let rank = f.clone().svd(false, false).rank(1e-12 * f.abs().max());
                if rank < f.ncols() {
                    return Err(invalid("x0_factor must have full column rank"));
                }
                Ok(InitialState::from_factor(f))
            }
            (None, None) => Ok(InitialState::from_factor(DMatrix::identity(p, p))),
        }
    }
}

/// Initial-state gain sweep. Full-rank states are compared with `B(G)`;
/// rank-deficient ones are checked against the rank-limited sum as an upper
/// bound.
pub fn run_initial_state(params: &InitialStateParams, settings: &Settings) -> Result<ExperimentReport> {
    let b = ReportBuilder::start("initial_state", params, settings);
    let grid = settings.grid(default_grid(10, 300))?;
    let tol = settings.tolerance_or(TOL_GAUSSIAN)?;
    let x0 = params.state()?;
    let records = grid
        .par_iter()
        .map(|&n| {
            let g = gaussian::initial_state_gain(&params.filter, &params.input, &x0, n)?;
            Ok(Record::new(n, g.nats_per_sample, g.warnings))
        })
        .collect::<Result<Vec<_>>>()?;
    let s = params.filter.nmp_summary();
    let tau = x0.rank();
    let criterion = if tau >= s.m { Criterion::Within } else { Criterion::AtMost };
    let target = params
        .target
        .unwrap_or_else(|| params.filter.gain().abs().ln() + s.partial_sum(tau.min(s.m)));
    Ok(b.finish(records, LimitMethod::Richardson, target, tol, criterion))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EffectiveGainParams {
    pub filter: TransferFunction,
    pub target: Option<f64>,
}

impl Default for EffectiveGainParams {
    fn default() -> Self {
        Self {
            filter: nmp_fir(&[1.0, 2.0]),
            target: None,
        }
    }
}

/// `(1/n) * 1/2 ln det(G^T G)` for the tall map of a FIR filter against its
/// Jensen integral.
pub fn run_effective_gain(params: &EffectiveGainParams, settings: &Settings) -> Result<ExperimentReport> {
    let b = ReportBuilder::start("effective_gain", params, settings);
    let grid = settings.grid(default_grid(10, 500))?;
    let tol = settings.tolerance_or(TOL_GAUSSIAN)?;
    let check = toeplitz::gs_limit_check(&params.filter, &grid)?;
    let records = check
        .per_sample
        .iter()
        .map(|&(n, v)| Record::new(n, v, Vec::new()))
        .collect();
    let target = params.target.unwrap_or(check.target);
    Ok(b.finish(records, LimitMethod::Richardson, target, tol, Criterion::Within))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumParams {
    pub filter: TransferFunction,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        Self {
            filter: nmp_fir(&[1.0, -1.5]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectrumOutcome {
    pub report: ExperimentReport,
    pub spectra: Vec<SingularSpectrum>,
    pub fit: DecayFit,
}

/// Records `ln d_{n,1}` per `n`; the limit is the fitted decay slope of the
/// smallest singular value over the non-underflowed spectra, compared with
/// `-ln|rho_1|`. The default tolerance is 1% of the target.
pub fn run_spectrum(params: &SpectrumParams, settings: &Settings) -> Result<SpectrumOutcome> {
    let b = ReportBuilder::start("spectrum", params, settings);
    let grid = settings.grid(|| (10..=40).collect())?;
    let spectra = toeplitz::spectra_over(&params.filter, &grid)?;
    let fit = toeplitz::decay_rate_fit(&params.filter, &grid)?;
    let target = fit.predicted[0];
    let tol = settings.tolerance_or((0.01 * target.abs()).max(1e-3))?;
    let records = spectra
        .iter()
        .map(|s| {
            let w = if s.underflow { vec![Warning::Underflow] } else { Vec::new() };
            Record::new(s.n, s.values[0].ln(), w)
        })
        .collect();
    let limit = Limit {
        method: LimitMethod::Slope,
        value: fit.slopes[0],
        tail_mean: fit.slopes[0],
        tail_points: fit.used.len(),
    };
    let report = b.finish_with(records, limit, target, tol, Criterion::Within);
    Ok(SpectrumOutcome { report, spectra, fit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JensenParams {
    pub filter: TransferFunction,
    pub points: usize,
}

impl Default for JensenParams {
    fn default() -> Self {
        Self {
            filter: nmp_fir(&[1.0, 2.0]),
            points: 1 << 16,
        }
    }
}

/// Periodic quadrature of `(1/2pi) int ln|G|` against the closed form.
pub fn run_jensen(params: &JensenParams, settings: &Settings) -> Result<ExperimentReport> {
    let b = ReportBuilder::start("jensen", params, settings);
    let tol = settings.tolerance_or(1e-6)?;
    let est = params.filter.jensen_log_integral(params.points)?;
    let w = if est.near_unit_circle { vec![Warning::NearUnitCircle] } else { Vec::new() };
    let records = vec![Record::new(params.points, est.nats, w)];
    Ok(b.finish(records, LimitMethod::Terminal, params.filter.jensen_closed_form(), tol, Criterion::Within))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeParams {
    pub process: ProcessSpec,
    pub nu: usize,
    pub trials: usize,
    pub k: usize,
    /// When set, probes the `G^{-1}`-shaped Gaussian input along the right
    /// singular vectors of the smallest singular values of `G_n` instead.
    pub aligned_filter: Option<TransferFunction>,
}

impl Default for ProbeParams {
    fn default() -> Self {
        Self {
            process: ProcessSpec::GaussianIid { variance: 1.0 },
            nu: 1,
            trials: 100_000,
            k: DEFAULT_K,
            aligned_filter: None,
        }
    }
}

/// Entropy-balance probe. Analytic paths target 0 (or `-B(G)` for the
/// aligned probe) with an `L + c/n` fit; Monte Carlo paths use the tail mean.
pub fn run_probe(params: &ProbeParams, settings: &Settings) -> Result<ExperimentReport> {
    let b = ReportBuilder::start("probe", params, settings);
    if let Some(tf) = &params.aligned_filter {
        let grid = settings.grid(default_grid(10, 400))?;
        let tol = settings.tolerance_or(TOL_GAUSSIAN)?;
        let variance = match params.process {
            ProcessSpec::GaussianIid { variance } => variance,
            _ => return Err(invalid("the aligned probe needs a gaussian_iid process")),
        };
        let pts = processes::aligned_probe(tf, &grid, variance)?;
        let records = pts.into_iter().map(|p| Record::new(p.n, p.value, p.warnings)).collect();
        let target = -tf.nmp_summary().log_sum;
        return Ok(b.finish(records, LimitMethod::Richardson, target, tol, Criterion::Within));
    }
    let gaussian = params.process.is_gaussian();
    let grid = if gaussian {
        settings.grid(default_grid(10, 400))?
    } else {
        settings.grid(|| vec![8, 10, 12])?
    };
    let tol = settings.tolerance_or(if gaussian { TOL_GAUSSIAN } else { TOL_MC })?;
    let mc = McSettings {
        trials: params.trials,
        k: params.k,
        seed: settings.seed,
    };
    let pts = processes::entropy_balance_probe(&params.process, &grid, params.nu, &mc)?;
    let records = pts.into_iter().map(|p| Record::new(p.n, p.value, p.warnings)).collect();
    let method = if gaussian { LimitMethod::Richardson } else { LimitMethod::TailMean };
    Ok(b.finish(records, method, 0.0, tol, Criterion::Within))
}

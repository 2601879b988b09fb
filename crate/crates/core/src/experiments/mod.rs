//! Runners that sweep `n`, extract a limit and compare it with a predicted
//! value. Each runner takes its own parameter struct (whose `Default` is the
//! shipped configuration) plus shared [`Settings`].

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{invalid, Result};
use crate::linalg::MAX_DIM;
use crate::warning::{push_unique, Warning};

mod gains;
mod networked;
mod quantized;
mod rdf;

pub use gains::{
    run_disturbance, run_effective_gain, run_initial_state, run_input_disturbance, run_jensen, run_probe,
    run_spectrum, DisturbanceParams, EffectiveGainParams, InitialStateParams, JensenParams, ProbeParams,
    SpectrumOutcome, SpectrumParams,
};
pub use networked::{
    networked_mi, run_feedback_collapse, run_networked_mi, CollapseReport, FeedbackCollapseParams, NetworkedMiParams,
    NoiseSpec,
};
pub use quantized::{quantized_discrepancy, run_quantized_discrepancy, segment_entropy, QuantizedParams};
pub use rdf::{rdf_gap, rdf_reverse_waterfill, run_rdf_gap, RdfGapParams, Waterfill};

/// Tolerance for pure-Gaussian closed-form paths.
pub const TOL_GAUSSIAN: f64 = 0.02;
/// Tolerance for paths through water-filling or conditioning.
pub const TOL_CONDITIONED: f64 = 0.05;
/// Tolerance for Monte Carlo paths.
pub const TOL_MC: f64 = 0.1;

/// Options shared by every runner.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub n_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub tolerance: Option<f64>,
}

impl Settings {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub(crate) fn grid(&self, default: impl FnOnce() -> Vec<usize>) -> Result<Vec<usize>> {
        let mut g = self.n_grid.clone().unwrap_or_else(default);
        g.sort_unstable();
        g.dedup();
        if g.is_empty() {
            return Err(invalid("n_grid must not be empty"));
        }
        if g[0] == 0 || *g.last().unwrap() > MAX_DIM {
            return Err(invalid(format!("n_grid entries must lie in 1..={MAX_DIM}")));
        }
        Ok(g)
    }

    pub(crate) fn tolerance_or(&self, default: f64) -> Result<f64> {
        let t = self.tolerance.unwrap_or(default);
        if !(t >= 0.0 && t.is_finite()) {
            return Err(invalid("tolerance must be a nonnegative number"));
        }
        Ok(t)
    }
}

/// `count` roughly log-spaced integers from `lo` to `hi`, deduplicated.
pub fn log_grid(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    if count < 2 || lo >= hi {
        return vec![hi];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut g: Vec<usize> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp().round() as usize)
        .collect();
    g.dedup();
    g
}

/// Horizontal coordinate of a record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Abscissa {
    Len(usize),
    Step(f64),
}

impl Abscissa {
    pub fn as_f64(self) -> f64 {
        match self {
            Abscissa::Len(n) => n as f64,
            Abscissa::Step(d) => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub n: Abscissa,
    pub value: f64,
    pub warnings: Vec<Warning>,
}

impl Record {
    pub fn new(n: usize, value: f64, warnings: Vec<Warning>) -> Self {
        Self {
            n: Abscissa::Len(n),
            value,
            warnings,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitMethod {
    /// Least-squares fit of `L + c/n` over the last 20% of the grid.
    Richardson,
    /// Mean of the last 20% of the grid.
    TailMean,
    /// Value at the last grid point.
    Terminal,
    /// Least-squares slope against `n`, for decay-rate experiments.
    Slope,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limit {
    pub method: LimitMethod,
    pub value: f64,
    pub tail_mean: f64,
    pub tail_points: usize,
}

impl Limit {
    pub fn extract(records: &[Record], method: LimitMethod) -> Self {
        let k = tail_len(records.len());
        let tail = &records[records.len() - k..];
        let tail_mean = tail.iter().map(|r| r.value).sum::<f64>() / k as f64;
        let value = match method {
            LimitMethod::TailMean => tail_mean,
            LimitMethod::Terminal => tail[k - 1].value,
            LimitMethod::Richardson if k >= 2 => {
                let xs: Vec<f64> = tail.iter().map(|r| 1.0 / r.n.as_f64()).collect();
                let ys: Vec<f64> = tail.iter().map(|r| r.value).collect();
                crate::toeplitz::ols(&xs, &ys).0
            }
            LimitMethod::Richardson => tail[k - 1].value,
            LimitMethod::Slope => {
                let xs: Vec<f64> = records.iter().map(|r| r.n.as_f64()).collect();
                let ys: Vec<f64> = records.iter().map(|r| r.value).collect();
                crate::toeplitz::ols(&xs, &ys).1
            }
        };
        Self {
            method,
            value,
            tail_mean,
            tail_points: k,
        }
    }
}

/// Last 20% of the grid, with at least three points when available.
fn tail_len(len: usize) -> usize {
    ((len as f64 * 0.2).ceil() as usize).max(3).min(len)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// `|limit - target| <= tolerance`.
    Within,
    /// `limit <= target + tolerance`.
    AtMost,
}

impl Criterion {
    pub fn check(self, value: f64, target: f64, tolerance: f64) -> bool {
        match self {
            Criterion::Within => (value - target).abs() <= tolerance,
            Criterion::AtMost => value <= target + tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config: Value,
    pub seed: u64,
    pub records: Vec<Record>,
    pub limit: Limit,
    pub target: f64,
    pub tolerance: f64,
    pub criterion: Criterion,
    pub pass: bool,
    pub warnings: Vec<Warning>,
    /// Excluded from serialized output so reports stay byte-reproducible.
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Collects the pieces common to every runner.
pub(crate) struct ReportBuilder {
    experiment: &'static str,
    config: Value,
    seed: u64,
    started: Instant,
}

impl ReportBuilder {
    pub(crate) fn start<P: Serialize>(experiment: &'static str, params: &P, settings: &Settings) -> Self {
        let config = serde_json::json!({
            "params": serde_json::to_value(params).unwrap_or(Value::Null),
            "n_grid": settings.n_grid,
            "tolerance": settings.tolerance,
        });
        Self {
            experiment,
            config,
            seed: settings.seed,
            started: Instant::now(),
        }
    }

    pub(crate) fn finish(
        self,
        records: Vec<Record>,
        method: LimitMethod,
        target: f64,
        tolerance: f64,
        criterion: Criterion,
    ) -> ExperimentReport {
        let limit = Limit::extract(&records, method);
        self.finish_with(records, limit, target, tolerance, criterion)
    }

    pub(crate) fn finish_with(
        self,
        records: Vec<Record>,
        limit: Limit,
        target: f64,
        tolerance: f64,
        criterion: Criterion,
    ) -> ExperimentReport {
        let mut warnings = Vec::new();
        for r in &records {
            for &w in &r.warnings {
                push_unique(&mut warnings, w);
            }
        }
        let pass = limit.value.is_finite() && criterion.check(limit.value, target, tolerance);
        let wall_time = self.started.elapsed();
        log::info!(
            "{}: limit {:.6} target {:.6} tol {} pass {} in {:.3}s",
            self.experiment,
            limit.value,
            target,
            tolerance,
            pass,
            wall_time.as_secs_f64()
        );
        ExperimentReport {
            experiment: self.experiment.to_string(),
            config: self.config,
            seed: self.seed,
            records,
            limit,
            target,
            tolerance,
            criterion,
            pass,
            warnings,
            wall_time,
        }
    }
}

/// `count` integers log-spaced from `lo` to `hi` (the shipped sweeps use 20).
pub(crate) fn default_grid(lo: usize, hi: usize) -> impl FnOnce() -> Vec<usize> {
    move || log_grid(lo, hi, 20)
}

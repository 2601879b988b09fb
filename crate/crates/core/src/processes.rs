//! Samplers for i.i.d. and filtered processes, a k-nearest-neighbour entropy
//! estimator and Monte Carlo probes of the entropy-balance property.

use std::f64::consts::PI;
use std::num::NonZero;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{ln_2pie, random_orthonormal_columns};
use crate::linalg::{self, check_dim};
use crate::lti::TransferFunction;
use crate::toeplitz;
use crate::warning::{push_unique, Warning};

/// Neighbour order used when none is given.
pub const DEFAULT_K: usize = 4;
/// Largest dimension handled by the nearest-neighbour estimator.
pub const MAX_KNN_DIM: usize = 16;
/// Smallest sample count accepted by the estimator.
pub const MIN_TRIALS: usize = 1000;
/// Relative jitter added when samples coincide.
pub const TIE_JITTER: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSpec {
    GaussianIid {
        variance: f64,
    },
    UniformIid {
        low: f64,
        high: f64,
    },
    /// Bins `[edges[i], edges[i+1])` with mass `probabilities[i]`, each at
    /// least `min_width` wide.
    PiecewiseConstantIid {
        edges: Vec<f64>,
        probabilities: Vec<f64>,
        min_width: f64,
    },
    MpFiltered {
        filter: TransferFunction,
        input: Box<ProcessSpec>,
    },
    Sum {
        components: Vec<ProcessSpec>,
    },
}

impl ProcessSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::GaussianIid { variance } => {
                if !(*variance > 0.0 && variance.is_finite()) {
                    return Err(invalid("gaussian_iid variance must be positive"));
                }
            }
            Self::UniformIid { low, high } => {
                if !(high > low && (high - low).is_finite()) {
                    return Err(invalid("uniform_iid needs low < high"));
                }
            }
            Self::PiecewiseConstantIid {
                edges,
                probabilities,
                min_width,
            } => {
                if !(*min_width > 0.0) {
                    return Err(invalid("min_width must be positive"));
                }
                if edges.len() != probabilities.len() + 1 || probabilities.is_empty() {
                    return Err(invalid("need one more edge than probabilities"));
                }
                if edges.windows(2).any(|w| !(w[1] - w[0] >= *min_width)) {
                    return Err(invalid(format!("every bin must be at least {min_width} wide")));
                }
                if probabilities.iter().any(|p| !(*p >= 0.0)) {
                    return Err(invalid("bin probabilities must be nonnegative"));
                }
                let total: f64 = probabilities.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(invalid(format!("bin probabilities sum to {total}, not 1")));
                }
            }
            Self::MpFiltered { filter, input } => {
                if !(filter.is_stable() && filter.is_minimum_phase() && filter.is_biproper()) {
                    return Err(invalid("mp_filtered needs a stable, minimum-phase, biproper filter"));
                }
                input.validate()?;
            }
            Self::Sum { components } => {
                if components.is_empty() {
                    return Err(invalid("sum needs at least one component"));
                }
                for c in components {
                    c.validate()?;
                }
            }
        }
        Ok(())
    }

    /// True when every sample path is jointly Gaussian.
    pub fn is_gaussian(&self) -> bool {
        match self {
            Self::GaussianIid { .. } => true,
            Self::MpFiltered { input, .. } => input.is_gaussian(),
            Self::Sum { components } => components.iter().all(Self::is_gaussian),
            _ => false,
        }
    }

    /// Per-sample variance of the i.i.d. kinds.
    fn marginal_variance(&self) -> Option<f64> {
        match self {
            Self::GaussianIid { variance } => Some(*variance),
            Self::UniformIid { low, high } => Some((high - low).powi(2) / 12.0),
            Self::PiecewiseConstantIid {
                edges, probabilities, ..
            } => {
                let (mut m1, mut m2) = (0.0, 0.0);
                for (i, &p) in probabilities.iter().enumerate() {
                    let (a, b) = (edges[i], edges[i + 1]);
                    m1 += p * (a + b) / 2.0;
                    m2 += p * (a * a + a * b + b * b) / 3.0;
                }
                Some(m2 - m1 * m1)
            }
            _ => None,
        }
    }

    /// Differential entropy of one sample for the i.i.d. kinds.
    pub fn marginal_entropy(&self) -> Option<f64> {
        match self {
            Self::GaussianIid { variance } => Some(0.5 * (ln_2pie() + variance.ln())),
            Self::UniformIid { low, high } => Some((high - low).ln()),
            Self::PiecewiseConstantIid {
                edges, probabilities, ..
            } => Some(
                probabilities
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| **p > 0.0)
                    .map(|(i, &p)| -p * (p / (edges[i + 1] - edges[i])).ln())
                    .sum(),
            ),
            _ => None,
        }
    }

    /// Exact joint entropy of `n` consecutive samples when it has a closed
    /// form: i.i.d. kinds and minimum-phase filtered versions of them.
    pub fn joint_entropy(&self, n: usize) -> Option<f64> {
        match self {
            Self::MpFiltered { filter, input } => {
                Some(input.joint_entropy(n)? + n as f64 * filter.gain().abs().ln())
            }
            Self::Sum { .. } => None,
            iid => Some(n as f64 * iid.marginal_entropy()?),
        }
    }

    /// Exact covariance of `n` consecutive samples (zero initial state for
    /// filtered kinds).
    pub fn covariance(&self, n: usize) -> DMatrix<f64> {
        match self {
            Self::MpFiltered { filter, input } => {
                let g = linalg::lower_toeplitz(&filter.impulse_response(n).samples, n, n);
                &g * input.covariance(n) * g.transpose()
            }
            Self::Sum { components } => components
                .iter()
                .fold(DMatrix::zeros(n, n), |acc, c| acc + c.covariance(n)),
            iid => DMatrix::identity(n, n) * iid.marginal_variance().unwrap_or(0.0),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R, out: &mut [f64]) {
        match self {
            Self::GaussianIid { variance } => {
                let sd = variance.sqrt();
                for v in out.iter_mut() {
                    *v = sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
            Self::UniformIid { low, high } => {
                for v in out.iter_mut() {
                    *v = rng.random_range(*low..*high);
                }
            }
            Self::PiecewiseConstantIid {
                edges, probabilities, ..
            } => {
                for v in out.iter_mut() {
                    let t: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut bin = probabilities.len() - 1;
                    for (i, &p) in probabilities.iter().enumerate() {
                        acc += p;
                        if t < acc {
                            bin = i;
                            break;
                        }
                    }
                    *v = rng.random_range(edges[bin]..edges[bin + 1]);
                }
            }
            Self::MpFiltered { filter, input } => {
                let mut x = vec![0.0; n];
                input.draw(n, rng, &mut x);
                let h = filter.impulse_response(n).samples;
                for k in 0..n {
                    out[k] = (0..=k).map(|j| h[j] * x[k - j]).sum();
                }
            }
            Self::Sum { components } => {
                out.fill(0.0);
                let mut x = vec![0.0; n];
                for c in components {
                    c.draw(n, rng, &mut x);
                    for (o, v) in out.iter_mut().zip(&x) {
                        *o += v;
                    }
                }
            }
        }
    }
}

/// Generator for trial `t`: one ChaCha stream per trial, keyed by seed and `n`.
fn trial_rng(seed: u64, n: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(trial as u64);
    rng
}

/// `trials x n` matrix of independent sample paths. Identical for any thread count.
pub fn sample(spec: &ProcessSpec, n: usize, trials: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 || trials == 0 {
        return Err(invalid("n and trials must be at least 1"));
    }
    spec.validate()?;
    let mut data = vec![0.0; n * trials];
    data.par_chunks_mut(n).enumerate().for_each(|(t, row)| {
        let mut rng = trial_rng(seed, n, t);
        spec.draw(n, &mut rng, row);
    });
    Ok(DMatrix::from_row_slice(trials, n, &data))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnnEstimate {
    pub nats: f64,
    pub warnings: Vec<Warning>,
}

/// Log-volume of the unit Euclidean ball in `d` dimensions.
fn ln_unit_ball(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    h * PI.ln() - ln_gamma(h + 1.0)
}

/// Distances to the nearest and to the `k`-th other sample.
fn kth_distances<const K: usize>(rows: &DMatrix<f64>, k: usize) -> Vec<(f64, f64)> {
    let pts: Vec<[f64; K]> = (0..rows.nrows())
        .map(|i| std::array::from_fn(|j| rows[(i, j)]))
        .collect();
    let tree: ImmutableKdTree<f64, K> = ImmutableKdTree::new_from_slice(&pts);
    let qty = NonZero::new(k + 1).expect("k + 1 > 0");
    pts.par_iter()
        .map(|p| {
            let nn = tree.nearest_n::<SquaredEuclidean>(p, qty);
            let at = |i: usize| nn.get(i).map_or(0.0, |x| x.distance.sqrt());
            (at(1), at(k))
        })
        .collect()
}

macro_rules! dispatch_dim {
    ($d:expr, $rows:expr, $k:expr, $($n:literal)+) => {
        match $d {
            $($n => kth_distances::<$n>($rows, $k),)+
            _ => unreachable!(),
        }
    };
}

/// Kozachenko-Leonenko estimate from the `k`-th neighbour distances; rows are
/// samples.
pub fn knn_entropy(samples: &DMatrix<f64>, k: usize) -> Result<KnnEstimate> {
    let (n, d) = samples.shape();
    if d == 0 || d > MAX_KNN_DIM {
        return Err(Error::TooLarge { n: d, cap: MAX_KNN_DIM });
    }
    if n < MIN_TRIALS {
        return Err(Error::InsufficientData {
            usable: n,
            required: MIN_TRIALS,
        });
    }
    if k == 0 || k >= n {
        return Err(invalid("k must be between 1 and the sample count"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(invalid("samples must be finite"));
    }
    let mut warnings = Vec::new();
    let mut rows = samples.clone();
    let mut eps = dispatch_dim!(d, &rows, k, 1 2 3 4 5 6 7 8 9 10 11 12 13 14 15 16);
    if eps.iter().any(|e| e.0 == 0.0) {
        push_unique(&mut warnings, Warning::TiedSamples);
        let scale = samples.abs().max().max(1.0) * TIE_JITTER;
        let mut rng = ChaCha8Rng::seed_from_u64(0x7469_6573);
        for v in rows.iter_mut() {
            *v += scale * rng.sample::<f64, _>(StandardNormal);
        }
        eps = dispatch_dim!(d, &rows, k, 1 2 3 4 5 6 7 8 9 10 11 12 13 14 15 16);
        if eps.iter().any(|e| e.1 == 0.0) {
            return Err(Error::NumericalFailure {
                n: d,
                condition: f64::INFINITY,
            });
        }
    }
    let nf = n as f64;
    let mean_ln: f64 = eps.iter().map(|e| e.1.ln()).sum::<f64>() / nf;
    let nats = digamma(nf) - digamma(k as f64) + ln_unit_ball(d) + d as f64 * mean_ln;
    Ok(KnnEstimate { nats, warnings })
}

/// Estimate after whitening with a known covariance:
/// `h(x) = h(L^{-1} x) + ln det L`.
pub fn knn_entropy_whitened(samples: &DMatrix<f64>, cov: &DMatrix<f64>, k: usize) -> Result<KnnEstimate> {
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::RankDeficient { what: "sample covariance".into() })?;
    let l = chol.l();
    let white = l
        .solve_lower_triangular(&samples.transpose())
        .ok_or_else(|| Error::RankDeficient { what: "sample covariance".into() })?
        .transpose();
    let ln_det: f64 = (0..l.nrows()).map(|i| l[(i, i)].ln()).sum();
    let mut est = knn_entropy(&white, k)?;
    est.nats += ln_det;
    Ok(est)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbePoint {
    pub n: usize,
    pub value: f64,
    pub warnings: Vec<Warning>,
}

/// Monte Carlo settings for the non-Gaussian paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    pub trials: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            trials: 100_000,
            k: DEFAULT_K,
            seed: 0,
        }
    }
}

/// Marginal density of an i.i.d. piecewise-constant process as bin edges
/// and per-bin log-densities.
struct PiecewiseDensity {
    edges: Vec<f64>,
    log_density: Vec<f64>,
}

impl PiecewiseDensity {
    fn log_at(&self, x: f64) -> f64 {
        let last = self.edges.len() - 1;
        if !(x >= self.edges[0] && x < self.edges[last]) {
            return f64::NEG_INFINITY;
        }
        self.log_density[self.edges.partition_point(|&e| e <= x) - 1]
    }

    /// `ln` of the integral of `prod_i f(u_i + t psi_i)` over `t`. The
    /// integrand is constant between consecutive edge crossings.
    fn fiber_log_mass(&self, u: &[f64], psi: &[f64]) -> f64 {
        let mut cuts: Vec<f64> = u
            .iter()
            .zip(psi)
            .filter(|(_, p)| **p != 0.0)
            .flat_map(|(x, p)| self.edges.iter().map(move |e| (e - x) / p))
            .collect();
        cuts.sort_by(f64::total_cmp);
        let mut terms = Vec::with_capacity(cuts.len());
        for w in cuts.windows(2) {
            let len = w[1] - w[0];
            if !(len > 0.0) {
                continue;
            }
            let mid = 0.5 * (w[0] + w[1]);
            let mut s = 0.0;
            for (x, p) in u.iter().zip(psi) {
                s += self.log_at(x + mid * p);
                if s == f64::NEG_INFINITY {
                    break;
                }
            }
            if s.is_finite() {
                terms.push(len.ln() + s);
            }
        }
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
    }
}

impl ProcessSpec {
    fn piecewise_log_density(&self) -> Option<PiecewiseDensity> {
        match self {
            Self::UniformIid { low, high } => Some(PiecewiseDensity {
                edges: vec![*low, *high],
                log_density: vec![-(high - low).ln()],
            }),
            Self::PiecewiseConstantIid { edges, probabilities, .. } => Some(PiecewiseDensity {
                edges: edges.clone(),
                log_density: probabilities
                    .iter()
                    .zip(edges.windows(2))
                    .map(|(p, w)| (p / (w[1] - w[0])).ln())
                    .collect(),
            }),
            _ => None,
        }
    }
}

/// `(1/n)(h(Phi_n u) - h(u))` with `Phi_n` a random `(n - nu) x n` matrix
/// with orthonormal rows. Jointly Gaussian processes use log-determinants.
///
/// For i.i.d. piecewise-constant kinds with `nu = 1` the marginal density of
/// `Phi_n u` at a sample is the integral of the joint density along the
/// dropped direction, computed exactly per trial, so
/// `h(Phi_n u) = -E ln Z(u)` carries Monte Carlo noise only.
/// Other kinds use the nearest-neighbour estimator and need `n <= 16`.
/// `h(u)` is taken in closed form when available: the estimator carries a
/// large boundary bias on bounded supports that does not cancel against the
/// lower-dimensional projection.
pub fn entropy_balance_probe(
    spec: &ProcessSpec,
    n_grid: &[usize],
    nu: usize,
    mc: &McSettings,
) -> Result<Vec<ProbePoint>> {
    spec.validate()?;
    let gaussian = spec.is_gaussian();
    n_grid
        .iter()
        .map(|&n| {
            if nu == 0 || nu >= n {
                return Err(invalid(format!("nu must lie in 1..{n}")));
            }
            check_dim(n)?;
            if !gaussian && n > MAX_KNN_DIM {
                return Err(Error::TooLarge { n, cap: MAX_KNN_DIM });
            }
            let mut rng = trial_rng(mc.seed, n, usize::MAX);
            let q = random_orthonormal_columns(n, n, &mut rng);
            let phi = q.columns(0, n - nu).transpose();
            let cov = spec.covariance(n);
            let proj_cov = &phi * &cov * phi.transpose();
            if gaussian {
                let full = linalg::logdet_spd(&cov, "process covariance")?;
                let proj = linalg::logdet_spd(&proj_cov, "projected covariance")?;
                let value = 0.5 * (proj - full - nu as f64 * ln_2pie()) / n as f64;
                return Ok(ProbePoint {
                    n,
                    value,
                    warnings: Vec::new(),
                });
            }
            let u = sample(spec, n, mc.trials, mc.seed)?;
            if let (1, Some(density), Some(hu)) = (nu, spec.piecewise_log_density(), spec.joint_entropy(n)) {
                let psi: Vec<f64> = q.column(n - 1).iter().copied().collect();
                let masses: Vec<f64> = (0..u.nrows())
                    .into_par_iter()
                    .map(|r| {
                        let row: Vec<f64> = u.row(r).iter().copied().collect();
                        density.fiber_log_mass(&row, &psi)
                    })
                    .collect();
                let hp = -masses.iter().sum::<f64>() / masses.len() as f64;
                return Ok(ProbePoint {
                    n,
                    value: (hp - hu) / n as f64,
                    warnings: Vec::new(),
                });
            }
            let pu = &u * phi.transpose();
            let hp = knn_entropy_whitened(&pu, &proj_cov, mc.k)?;
            let mut warnings = hp.warnings;
            let hu = match spec.joint_entropy(n) {
                Some(h) => h,
                None => {
                    let est = knn_entropy_whitened(&u, &cov, mc.k)?;
                    for w in est.warnings {
                        push_unique(&mut warnings, w);
                    }
                    est.nats
                }
            };
            Ok(ProbePoint {
                n,
                value: (hp.nats - hu) / n as f64,
                warnings,
            })
        })
        .collect()
}

/// Probe along the worst directions for a Gaussian input shaped by `G^{-1}`:
/// `u = G_n^{-1} w` with `w` i.i.d. `N(0, variance)`, and `Phi_n` drops the
/// right singular vectors of the `m` smallest singular values of `G_n`.
///
/// The value is `(1/n)[sum_{i<=m} ln d_i - (m/2) ln(2 pi e variance)]`; the
/// small singular values are recovered from `ln|det G_n| = n ln|g_0|` so the
/// result stays accurate after they underflow.
pub fn aligned_probe(tf: &TransferFunction, n_grid: &[usize], variance: f64) -> Result<Vec<ProbePoint>> {
    if !(variance > 0.0) {
        return Err(invalid("variance must be positive"));
    }
    if !tf.is_biproper() {
        return Err(Error::NotBiproper);
    }
    let m = tf.nmp_summary().m;
    let log_g0 = tf.gain().abs().ln();
    n_grid
        .par_iter()
        .map(|&n| {
            if m >= n {
                return Err(invalid(format!("n = {n} must exceed the {m} NMP zeros")));
            }
            let cm = toeplitz::conv_matrix(&tf.impulse_response(n).samples, n)?;
            let s = toeplitz::svd_spectrum(&cm, false)?;
            let large: f64 = s.values[m..].iter().map(|d| d.ln()).sum();
            let small = n as f64 * log_g0 - large;
            let value = (small - 0.5 * m as f64 * (ln_2pie() + variance.ln())) / n as f64;
            Ok(ProbePoint {
                n,
                value,
                warnings: Vec::new(),
            })
        })
        .collect()
}

/// Monte Carlo `(1/n)(h(G_n u + Phi s) - h(u))` for i.i.d. `u` and `s`, each
/// entropy estimated after whitening by its exact covariance. Both sides
/// share dimension and most directions, so their estimator biases cancel.
pub fn mc_disturbance_gain(
    tf: &TransferFunction,
    input: &ProcessSpec,
    disturbance: &ProcessSpec,
    phi: &DMatrix<f64>,
    mc: &McSettings,
) -> Result<KnnEstimate> {
    let n = phi.nrows();
    let kappa = phi.ncols();
    if n > MAX_KNN_DIM {
        return Err(Error::TooLarge { n, cap: MAX_KNN_DIM });
    }
    let g = linalg::lower_toeplitz(&tf.impulse_response(n).samples, n, n);
    let u = sample(input, n, mc.trials, mc.seed)?;
    let s = sample(disturbance, kappa.max(1), mc.trials, mc.seed.wrapping_add(1))?;
    let s = s.columns(0, kappa).into_owned();
    let y = &u * g.transpose() + &s * phi.transpose();
    let ku = input.covariance(n);
    let ky = &g * &ku * g.transpose() + phi * disturbance.covariance(kappa) * phi.transpose();
    let hy = knn_entropy_whitened(&y, &ky, mc.k)?;
    let hu = knn_entropy_whitened(&u, &ku, mc.k)?;
    let mut warnings = hy.warnings;
    for w in hu.warnings {
        push_unique(&mut warnings, w);
    }
    Ok(KnnEstimate {
        nats: (hy.nats - hu.nats) / n as f64,
        warnings,
    })
}

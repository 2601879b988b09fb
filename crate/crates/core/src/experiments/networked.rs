//! Information rates in feedback loops: initial-state information through a
//! stabilizing channel and the feedback-coding rate with and without an
//! added disturbance.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gains::matrix;
use super::{default_grid, Criterion, ExperimentReport, LimitMethod, Record, ReportBuilder, Settings, TOL_CONDITIONED};
use crate::error::{invalid, Result};
use crate::gaussian::{self, InputSpec};
use crate::linalg::{self, check_dim, COND_LIMIT};
use crate::lti::{self, TransferFunction};
use crate::warning::{push_unique, Warning};

/// Gaussian noise `sqrt(variance) * S w` in innovations form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub variance: f64,
    pub filter: Option<TransferFunction>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            variance: 1.0,
            filter: None,
        }
    }
}

impl NoiseSpec {
    fn as_input(&self) -> InputSpec {
        InputSpec {
            variance: self.variance,
            shaping: self.filter.clone(),
        }
    }
}

fn padded(c: &[f64], len: usize) -> Vec<f64> {
    (0..len).map(|i| c.get(i).copied().unwrap_or(0.0)).collect()
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    if a != 0.0 {
        for (o, v) in acc.iter_mut().zip(x) {
            *o += a * v;
        }
    }
}

/// `I(x0; y_1^n)` in nats for the loop `y = u - w`, `x = y / Lambda`,
/// `w = T N x + (channel noise)` with plant `P = N / Lambda` and controller
/// `T = Gamma / Theta`.
///
/// Every signal is tracked as a row of coefficients on the seeds
/// `[x0 factor | s0 factor | u | c]`. The conditional term uses
/// `h(y | x0) = h(x | x0)` because `Lambda_n` is unit lower triangular,
/// which keeps both log-determinants well conditioned.
pub fn networked_mi(
    plant: &TransferFunction,
    controller: &TransferFunction,
    input_variance: f64,
    noise: &NoiseSpec,
    x0_factor: &DMatrix<f64>,
    s0_factor: &DMatrix<f64>,
    n: usize,
) -> Result<(f64, Vec<Warning>)> {
    lti::closed_loop(plant, controller)?;
    noise.as_input().validate()?;
    if !(input_variance > 0.0) {
        return Err(invalid("input variance must be positive"));
    }
    let p = plant.order();
    let q = controller.order();
    if x0_factor.nrows() != p {
        return Err(invalid(format!("x0 factor needs {p} rows, the plant order")));
    }
    if s0_factor.nrows() != q && !(s0_factor.nrows() == 0 && s0_factor.ncols() == 0) {
        return Err(invalid(format!("s0 factor needs {q} rows, the controller order")));
    }
    let tau = x0_factor.ncols();
    if tau == 0 {
        return Ok((0.0, Vec::new()));
    }
    check_dim(n)?;
    let s0 = if s0_factor.nrows() == 0 { DMatrix::zeros(q, 0) } else { s0_factor.clone() };
    let ts = s0.ncols();
    let width = tau + ts + 2 * n;
    let (u0, c0) = (tau + ts, tau + ts + n);

    let a = padded(plant.denominator(), p + 1);
    let num = padded(plant.numerator(), p + 1);
    let theta = padded(controller.denominator(), q + 1);
    let gamma = if controller.gain() == 0.0 {
        vec![0.0; q + 1]
    } else {
        padded(controller.numerator(), q + 1)
    };
    let bc = noise.as_input().impulse(n);
    let su = input_variance.sqrt();

    let hist = |f: &DMatrix<f64>, off: usize, j: usize| -> Vec<f64> {
        let mut r = vec![0.0; width];
        for c in 0..f.ncols() {
            r[off + c] = f[(j, c)];
        }
        r
    };
    let x_hist: Vec<Vec<f64>> = (0..p).map(|j| hist(x0_factor, 0, j)).collect();
    let s_hist: Vec<Vec<f64>> = (0..q).map(|j| hist(&s0, tau, j)).collect();
    let mut x: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut s: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut y = DMatrix::zeros(n, width);
    let past = |rows: &Vec<Vec<f64>>, h: &Vec<Vec<f64>>, k: usize, i: usize| -> Option<Vec<f64>> {
        if k >= i {
            Some(rows[k - i].clone())
        } else {
            h.get(i - k - 1).cloned()
        }
    };
    for k in 0..n {
        // Plant output from past x (the plant is strictly proper).
        let mut v = vec![0.0; width];
        for i in 1..=p {
            if let Some(r) = past(&x, &x_hist, k, i) {
                axpy(&mut v, num[i], &r);
            }
        }
        let mut sk = v;
        for i in 1..=q {
            if let Some(r) = past(&s, &s_hist, k, i) {
                axpy(&mut sk, -theta[i], &r);
            }
        }
        s.push(sk);
        let mut w = vec![0.0; width];
        for i in 0..=q {
            if let Some(r) = past(&s, &s_hist, k + 1, i + 1) {
                axpy(&mut w, gamma[i], &r);
            }
        }
        for j in 0..=k {
            w[c0 + j] += bc[k - j];
        }
        let mut yk: Vec<f64> = w.iter().map(|v| -v).collect();
        yk[u0 + k] += su;
        let mut xk = yk.clone();
        for i in 1..=p {
            if let Some(r) = past(&x, &x_hist, k, i) {
                axpy(&mut xk, -a[i], &r);
            }
        }
        for (c, v) in yk.iter().enumerate() {
            y[(k, c)] = *v;
        }
        x.push(xk);
    }
    let xr = DMatrix::from_fn(n, width - tau, |i, j| x[i][tau + j]);
    let (full, c1) = linalg::logdet_gram_rows(&y, "channel output covariance")?;
    let (cond, c2) = linalg::logdet_gram_rows(&xr, "conditional plant signal covariance")?;
    let mut warnings = Vec::new();
    if c1.max(c2) > COND_LIMIT {
        push_unique(&mut warnings, Warning::IllConditioned);
    }
    Ok((0.5 * (full - cond), warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkedMiParams {
    pub plant: TransferFunction,
    pub controller: TransferFunction,
    pub input_variance: f64,
    pub channel_noise: NoiseSpec,
    /// Plant initial-state covariance; identity when absent.
    pub x0_covariance: Option<Vec<Vec<f64>>>,
    /// Controller initial-state covariance; deterministic zero when absent.
    pub s0_covariance: Option<Vec<Vec<f64>>>,
    pub target: Option<f64>,
}

impl Default for NetworkedMiParams {
    fn default() -> Self {
        Self {
            plant: TransferFunction::from_real(&[], &[2.0], 1.0).expect("valid plant"),
            controller: TransferFunction::from_real(&[], &[], 1.5).expect("valid controller"),
            input_variance: 1.0,
            channel_noise: NoiseSpec::default(),
            x0_covariance: None,
            s0_covariance: None,
            target: None,
        }
    }
}

/// `I(x0; y_1^n) / n` sweep; target `sum_{|p_i|>1} ln|p_i|` over the plant poles.
pub fn run_networked_mi(params: &NetworkedMiParams, settings: &Settings) -> Result<ExperimentReport> {
    let b = ReportBuilder::start("networked_mi", params, settings);
    let grid = settings.grid(default_grid(10, 300))?;
    let tol = settings.tolerance_or(TOL_CONDITIONED)?;
    let p = params.plant.order();
    let fx = match &params.x0_covariance {
        Some(k) => linalg::psd_factor(&matrix(k, "x0_covariance")?, "x0_covariance")?,
        None => DMatrix::identity(p, p),
    };
    let fs = match &params.s0_covariance {
        Some(k) => linalg::psd_factor(&matrix(k, "s0_covariance")?, "s0_covariance")?,
        None => DMatrix::zeros(0, 0),
    };
    let records = grid
        .par_iter()
        .map(|&n| {
            let (i, w) = networked_mi(
                &params.plant,
                &params.controller,
                params.input_variance,
                &params.channel_noise,
                &fx,
                &fs,
                n,
            )?;
            Ok(Record::new(n, i / n as f64, w))
        })
        .collect::<Result<Vec<_>>>()?;
    let target = params.target.unwrap_or_else(|| {
        params
            .plant
            .poles()
            .iter()
            .filter(|p| p.norm() > 1.0)
            .map(|p| p.norm().ln())
            .sum()
    });
    Ok(b.finish(records, LimitMethod::Richardson, target, tol, Criterion::Within))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeedbackCollapseParams {
    /// `1 + B(z)` with `B` strictly causal and stable.
    pub channel: TransferFunction,
    /// Channel noise `z` in innovations form.
    pub noise: NoiseSpec,
    /// Covariance `K_v` of the message on the first `M` coordinates.
    pub message_covariance: Vec<Vec<f64>>,
    /// Variance of the i.i.d. disturbance added to the same `M` coordinates.
    pub disturbance_variance: f64,
}

impl Default for FeedbackCollapseParams {
    fn default() -> Self {
        Self {
            channel: TransferFunction::fir(&[1.0, 1.5]).expect("valid channel"),
            noise: NoiseSpec::default(),
            message_covariance: vec![vec![1.0]],
            disturbance_variance: 1e-6,
        }
    }
}

/// The two trajectories of the feedback-coding rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseReport {
    pub clean: ExperimentReport,
    pub disturbed: ExperimentReport,
}

impl CollapseReport {
    pub fn pass(&self) -> bool {
        self.clean.pass && self.disturbed.pass
    }
}

/// `I(v; y)/n` for `y = v + d + (1 + B) z`, without and with `d`.
///
/// Clean runs target the sum of the `M` largest NMP zero log-moduli of
/// `1 + B`; disturbed runs must end at or below zero plus the tolerance.
pub fn run_feedback_collapse(params: &FeedbackCollapseParams, settings: &Settings) -> Result<CollapseReport> {
    let grid = settings.grid(default_grid(10, 300))?;
    let tol = settings.tolerance_or(TOL_CONDITIONED)?;
    let ch = &params.channel;
    if !(ch.is_stable() && ch.is_biproper()) || (ch.gain() - 1.0).abs() > 1e-12 {
        return Err(invalid("channel must be 1 + B with B strictly causal and stable"));
    }
    let kv = matrix(&params.message_covariance, "message_covariance")?;
    let m = kv.nrows();
    if m == 0 {
        return Err(invalid("message_covariance must be at least 1 x 1"));
    }
    let lv = kv
        .clone()
        .cholesky()
        .ok_or_else(|| invalid("message_covariance must be positive definite"))?
        .unpack();
    let dv = params.disturbance_variance;
    if !(dv > 0.0 && dv.is_finite()) {
        return Err(invalid("disturbance_variance must be positive"));
    }
    let kd = DMatrix::<f64>::identity(m, m) * dv;
    let ld = kd.map(f64::sqrt);
    let lvd = (&kv + &kd).cholesky().expect("sum of positive definite matrices").unpack();
    let noise = params.noise.as_input();
    noise.validate()?;

    let clean_b = ReportBuilder::start("feedback_collapse_clean", params, settings);
    let points = grid
        .par_iter()
        .map(|&n| {
            if n < m {
                return Err(invalid(format!("n = {n} is below the message length {m}")));
            }
            let g = ch.impulse_response(n).samples;
            let s = noise.impulse(n);
            let a: Vec<f64> = crate::poly::mul(&g, &s).into_iter().take(n).collect();
            let embed = |l: &DMatrix<f64>| {
                let mut e = DMatrix::zeros(n, m);
                e.view_mut((0, 0), (m, m)).copy_from(l);
                e
            };
            let (clean, mut w1) = gaussian::log_det_gain(&a, &embed(&lv))?;
            let (with_v, w2) = gaussian::log_det_gain(&a, &embed(&lvd))?;
            let (only_d, w3) = gaussian::log_det_gain(&a, &embed(&ld))?;
            let mut w23 = w2;
            for w in w3 {
                push_unique(&mut w23, w);
            }
            let _ = &mut w1;
            let nf = n as f64;
            Ok((
                Record::new(n, clean / nf, w1),
                Record::new(n, (with_v - only_d) / nf, w23),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (clean_rec, dist_rec): (Vec<Record>, Vec<Record>) = points.into_iter().unzip();
    let s = ch.nmp_summary();
    let target = s.partial_sum(m.min(s.m));
    let clean = clean_b.finish(clean_rec, LimitMethod::Richardson, target, tol, Criterion::Within);
    let dist_b = ReportBuilder::start("feedback_collapse_disturbed", params, settings);
    let disturbed = dist_b.finish(dist_rec, LimitMethod::Terminal, 0.0, tol, Criterion::AtMost);
    Ok(CollapseReport { clean, disturbed })
}

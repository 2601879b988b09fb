//! Linear-Gaussian entropy algebra.
//!
//! Random vectors are affine images `M w + b` of a standard normal seed `w`.
//! Entropies use `ln det(M M^T)` from a QR factorization of `M^T`, so the
//! covariance is never formed.

use std::f64::consts::{E, PI};
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, check_dim, COND_LIMIT};
use crate::lti::TransferFunction;
use crate::toeplitz;
use crate::warning::{push_unique, Warning};

/// `ln(2 pi e)`.
pub fn ln_2pie() -> f64 {
    (2.0 * PI * E).ln()
}

/// Role of a group of seed coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedBlock {
    Input,
    Disturbance,
    InitialState,
    ChannelNoise,
    ChannelState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianModel {
    generator: DMatrix<f64>,
    offset: DVector<f64>,
    blocks: Vec<(SeedBlock, Range<usize>)>,
}

impl LinearGaussianModel {
    /// `generator` is `n x w`; `blocks` lists consecutive seed groups whose
    /// sizes must add up to `w`.
    pub fn new(
        generator: DMatrix<f64>,
        offset: Option<DVector<f64>>,
        blocks: &[(SeedBlock, usize)],
    ) -> Result<Self> {
        let total: usize = blocks.iter().map(|b| b.1).sum();
        if total != generator.ncols() {
            return Err(invalid(format!(
                "seed blocks cover {total} coordinates, generator has {}",
                generator.ncols()
            )));
        }
        let mut ranges = Vec::with_capacity(blocks.len());
        let mut start = 0;
        for &(b, len) in blocks {
            if ranges.iter().any(|(o, _): &(SeedBlock, Range<usize>)| *o == b) {
                return Err(invalid(format!("seed block {b:?} listed twice")));
            }
            ranges.push((b, start..start + len));
            start += len;
        }
        let offset = offset.unwrap_or_else(|| DVector::zeros(generator.nrows()));
        if offset.len() != generator.nrows() {
            return Err(invalid("offset length differs from the output dimension"));
        }
        Ok(Self {
            generator,
            offset,
            blocks: ranges,
        })
    }

    pub fn dim(&self) -> usize {
        self.generator.nrows()
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.generator * self.generator.transpose()
    }

    pub fn block(&self, b: SeedBlock) -> Option<Range<usize>> {
        self.blocks.iter().find(|(o, _)| *o == b).map(|(_, r)| r.clone())
    }

    /// Draws one realization.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let w = DVector::from_fn(self.generator.ncols(), |_, _| rng.sample(StandardNormal));
        &self.generator * w + &self.offset
    }

    fn rows_of(&self, v: &Variable) -> Result<DMatrix<f64>> {
        match v {
            Variable::Output => Ok(self.generator.clone()),
            Variable::OutputRows(r) => {
                if r.end > self.dim() || r.start >= r.end {
                    return Err(invalid(format!("output rows {r:?} out of range")));
                }
                Ok(self.generator.rows(r.start, r.len()).into_owned())
            }
            Variable::Seed(b) => {
                let r = self
                    .block(*b)
                    .ok_or_else(|| invalid(format!("model has no {b:?} block")))?;
                let w = self.generator.ncols();
                Ok(DMatrix::from_fn(r.len(), w, |i, j| if j == r.start + i { 1.0 } else { 0.0 }))
            }
        }
    }
}

/// A component of a joint model: output rows or a seed block.
#[derive(Debug, Clone, PartialEq)]
pub enum Variable {
    Output,
    OutputRows(Range<usize>),
    Seed(SeedBlock),
}

/// `h = n/2 ln(2 pi e) + 1/2 ln det K`, in nats.
pub fn entropy(model: &LinearGaussianModel) -> Result<f64> {
    let (logdet, _) = linalg::logdet_gram_rows(model.generator(), "covariance")?;
    Ok(0.5 * (model.dim() as f64 * ln_2pie() + logdet))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MiEstimate {
    pub nats: f64,
    /// Condition estimate of the conditioning covariance exceeded 1e12.
    pub ill_conditioned: bool,
}

/// `I(a; b)` for two components of the same model.
pub fn mutual_information(model: &LinearGaussianModel, a: &Variable, b: &Variable) -> Result<MiEstimate> {
    match (a, b) {
        (Variable::Seed(x), Variable::Seed(y)) => {
            model.rows_of(a)?;
            model.rows_of(b)?;
            if x == y {
                return Err(Error::RankDeficient {
                    what: "joint covariance of a block with itself".into(),
                });
            }
            Ok(MiEstimate {
                nats: 0.0,
                ill_conditioned: false,
            })
        }
        (Variable::Seed(s), other) | (other, Variable::Seed(s)) => latent_mi(model, other, *s),
        _ => {
            let ma = model.rows_of(a)?;
            let mb = model.rows_of(b)?;
            let mut joint = DMatrix::zeros(ma.nrows() + mb.nrows(), ma.ncols());
            joint.rows_mut(0, ma.nrows()).copy_from(&ma);
            joint.rows_mut(ma.nrows(), mb.nrows()).copy_from(&mb);
            let (la, ca) = linalg::logdet_gram_rows(&ma, "first marginal covariance")?;
            let (lb, cb) = linalg::logdet_gram_rows(&mb, "conditioning covariance")?;
            let (lj, cj) = linalg::logdet_gram_rows(&joint, "joint covariance")?;
            Ok(MiEstimate {
                nats: 0.5 * (la + lb - lj),
                ill_conditioned: ca.max(cb).max(cj) > COND_LIMIT,
            })
        }
    }
}

/// `I(v; seed block)`: `1/2 [ln det(M M^T) - ln det(M' M'^T)]` where `M'`
/// drops the block's columns.
fn latent_mi(model: &LinearGaussianModel, v: &Variable, block: SeedBlock) -> Result<MiEstimate> {
    let m = model.rows_of(v)?;
    let r = model
        .block(block)
        .ok_or_else(|| invalid(format!("model has no {block:?} block")))?;
    let keep: Vec<usize> = (0..m.ncols()).filter(|j| !r.contains(j)).collect();
    let rest = m.select_columns(&keep);
    let (full, cf) = linalg::logdet_gram_rows(&m, "marginal covariance")?;
    let (cond, cc) = linalg::logdet_gram_rows(&rest, "conditional covariance")?;
    Ok(MiEstimate {
        nats: 0.5 * (full - cond),
        ill_conditioned: cf.max(cc) > COND_LIMIT,
    })
}

/// Where the disturbance basis points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    FirstCoordinates,
    RandomOrthonormal,
    Custom,
}

/// Disturbance `Phi s` with orthonormal `Phi` (`n x kappa`) and seed covariance `K_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSpec {
    phi: DMatrix<f64>,
    seed_cov: DMatrix<f64>,
    seed_factor: DMatrix<f64>,
    placement: Placement,
}

impl DisturbanceSpec {
    pub fn none(n: usize) -> Self {
        Self {
            phi: DMatrix::zeros(n, 0),
            seed_cov: DMatrix::zeros(0, 0),
            seed_factor: DMatrix::zeros(0, 0),
            placement: Placement::FirstCoordinates,
        }
    }

    pub fn first_coordinates(n: usize, seed_cov: DMatrix<f64>) -> Result<Self> {
        let kappa = seed_cov.nrows();
        if kappa > n {
            return Err(invalid("disturbance dimension exceeds n"));
        }
        let phi = DMatrix::from_fn(n, kappa, |i, j| if i == j { 1.0 } else { 0.0 });
        Self::build(phi, seed_cov, Placement::FirstCoordinates)
    }

    /// Orthonormal columns from the QR factor of a Gaussian matrix.
    pub fn random_orthonormal<R: Rng + ?Sized>(n: usize, seed_cov: DMatrix<f64>, rng: &mut R) -> Result<Self> {
        let kappa = seed_cov.nrows();
        if kappa > n {
            return Err(invalid("disturbance dimension exceeds n"));
        }
        let phi = random_orthonormal_columns(n, kappa, rng);
        Self::build(phi, seed_cov, Placement::RandomOrthonormal)
    }

    pub fn custom(phi: DMatrix<f64>, seed_cov: DMatrix<f64>) -> Result<Self> {
        Self::build(phi, seed_cov, Placement::Custom)
    }

    fn build(phi: DMatrix<f64>, seed_cov: DMatrix<f64>, placement: Placement) -> Result<Self> {
        let kappa = phi.ncols();
        if seed_cov.nrows() != kappa || seed_cov.ncols() != kappa {
            return Err(invalid("seed covariance must be kappa x kappa"));
        }
        let gram = phi.transpose() * &phi;
        if (gram - DMatrix::<f64>::identity(kappa, kappa)).abs().max() > 1e-10 {
            return Err(invalid("disturbance basis must have orthonormal columns"));
        }
        let seed_factor = if kappa == 0 {
            DMatrix::zeros(0, 0)
        } else {
            seed_cov
                .clone()
                .cholesky()
                .ok_or_else(|| invalid("seed covariance must be positive definite"))?
                .unpack()
        };
        Ok(Self {
            phi,
            seed_cov,
            seed_factor,
            placement,
        })
    }

    pub fn kappa(&self) -> usize {
        self.phi.ncols()
    }

    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn seed_covariance(&self) -> &DMatrix<f64> {
        &self.seed_cov
    }

    pub fn placement(&self) -> Placement {
        self.placement
    }

    /// `Phi L` with `L L^T = K_s`.
    pub fn generator(&self) -> DMatrix<f64> {
        &self.phi * &self.seed_factor
    }
}

pub(crate) fn random_orthonormal_columns<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> DMatrix<f64> {
    if k == 0 {
        return DMatrix::zeros(n, 0);
    }
    let g = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    // Fix signs so the factor does not depend on the QR sign convention.
    let mut q = q.columns(0, k).into_owned();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Input process in innovations form `u = sqrt(variance) * S w`, `w` i.i.d.
/// standard normal and `S` stable, minimum phase and biproper (identity when
/// absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    #[serde(default = "unit")]
    pub variance: f64,
    #[serde(default)]
    pub shaping: Option<TransferFunction>,
}

fn unit() -> f64 {
    1.0
}

impl Default for InputSpec {
    fn default() -> Self {
        Self::iid(1.0)
    }
}

impl InputSpec {
    pub fn iid(variance: f64) -> Self {
        Self {
            variance,
            shaping: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(invalid("input variance must be positive"));
        }
        if let Some(s) = &self.shaping {
            if !(s.is_stable() && s.is_minimum_phase() && s.is_biproper()) {
                return Err(invalid(
                    "input shaping filter must be stable, minimum phase and biproper; other covariances are not Toeplitz-representable",
                ));
            }
        }
        Ok(())
    }

    /// First `n` samples of `sqrt(variance) * S`.
    pub fn impulse(&self, n: usize) -> Vec<f64> {
        let s = match &self.shaping {
            Some(f) => f.impulse_response(n).samples,
            None => {
                let mut v = vec![0.0; n];
                if n > 0 {
                    v[0] = 1.0;
                }
                v
            }
        };
        let sd = self.variance.sqrt();
        s.into_iter().map(|x| x * sd).collect()
    }
}

/// Per-sample gain with the conditions met while computing it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainEstimate {
    pub nats_per_sample: f64,
    pub warnings: Vec<Warning>,
}

/// `1/2 ln det(I + B^T A^{-T} A^{-1} B)` for the lower-triangular Toeplitz
/// matrix `A` with first column `a`.
///
/// Uses the `k x k` Gram when it is well conditioned. Otherwise falls back to
/// `1/2 ln det([A | B][A | B]^T) - n ln|a_0|` through an LQ factorization of
/// the dense generator. The dense route also covers inverse responses that
/// exceed the overflow budget.
pub fn log_det_gain(a: &[f64], b: &DMatrix<f64>) -> Result<(f64, Vec<Warning>)> {
    let n = b.nrows();
    let k = b.ncols();
    let mut warnings = Vec::new();
    if k == 0 {
        return Ok((0.0, warnings));
    }
    check_dim(n + k)?;
    match toeplitz::inverse_apply(&a[..n.min(a.len())], b) {
        Ok(w) => {
            let gram = DMatrix::<f64>::identity(k, k) + w.transpose() * &w;
            let finite = gram.iter().all(|v| v.is_finite());
            let cond = if k == 1 { 1.0 } else { linalg::spd_condition(&gram) };
            if finite && cond <= COND_LIMIT {
                return Ok((0.5 * linalg::logdet_spd(&gram, "disturbance Gram")?, warnings));
            }
        }
        Err(Error::OverflowBudget { .. }) => {}
        Err(e) => return Err(e),
    }
    push_unique(&mut warnings, Warning::DenseFallback);
    let am = linalg::lower_toeplitz(a, n, n);
    let mut m = DMatrix::zeros(n, n + k);
    m.columns_mut(0, n).copy_from(&am);
    m.columns_mut(n, k).copy_from(b);
    let (logdet, c) = linalg::logdet_gram_rows(&m, "disturbed output covariance")?;
    if c > COND_LIMIT {
        push_unique(&mut warnings, Warning::IllConditioned);
    }
    Ok((0.5 * logdet - n as f64 * a[0].abs().ln(), warnings))
}

fn gain_setup(tf: &TransferFunction, input: &InputSpec, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    check_dim(n)?;
    input.validate()?;
    if !tf.is_biproper() {
        return Err(Error::NotBiproper);
    }
    Ok(tf.gain().abs().ln())
}

fn near_circle(tf: &TransferFunction, warnings: &mut Vec<Warning>) {
    let close = tf
        .zeros()
        .iter()
        .chain(tf.poles())
        .any(|r| (r.norm() - 1.0).abs() < crate::lti::NEAR_UNIT_CIRCLE);
    if close {
        push_unique(warnings, Warning::NearUnitCircle);
    }
}

/// Output map `A_n` from innovations to filter output.
fn output_map(tf: &TransferFunction, input: &InputSpec, n: usize) -> Vec<f64> {
    let g = tf.impulse_response(n).samples;
    let s = input.impulse(n);
    crate::poly::mul(&g, &s).into_iter().take(n).collect()
}

/// `(1/n)(h(G u + Phi s) - h(u))`.
pub fn disturbance_gain(
    tf: &TransferFunction,
    input: &InputSpec,
    disturbance: &DisturbanceSpec,
    n: usize,
) -> Result<GainEstimate> {
    let log_g0 = gain_setup(tf, input, n)?;
    if disturbance.n() != n {
        return Err(invalid("disturbance basis length differs from n"));
    }
    let a = output_map(tf, input, n);
    let (v, mut warnings) = log_det_gain(&a, &disturbance.generator())?;
    near_circle(tf, &mut warnings);
    Ok(GainEstimate {
        nats_per_sample: log_g0 + v / n as f64,
        warnings,
    })
}

/// `(1/n)(h(G(u + Phi s)) - h(u))`. `G` cancels from the log-determinant,
/// leaving `ln|g_0|` plus a term in the input map alone.
pub fn input_disturbance_gain(
    tf: &TransferFunction,
    input: &InputSpec,
    disturbance: &DisturbanceSpec,
    n: usize,
) -> Result<GainEstimate> {
    let log_g0 = gain_setup(tf, input, n)?;
    if disturbance.n() != n {
        return Err(invalid("disturbance basis length differs from n"));
    }
    let s = input.impulse(n);
    let (v, mut warnings) = log_det_gain(&s, &disturbance.generator())?;
    near_circle(tf, &mut warnings);
    Ok(GainEstimate {
        nats_per_sample: log_g0 + v / n as f64,
        warnings,
    })
}

/// Random initial state `x0 = F xi`, `xi` standard normal.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    factor: DMatrix<f64>,
}

impl InitialState {
    pub fn deterministic(p: usize) -> Self {
        Self {
            factor: DMatrix::zeros(p, 0),
        }
    }

    pub fn from_covariance(cov: &DMatrix<f64>) -> Result<Self> {
        Ok(Self {
            factor: linalg::psd_factor(cov, "initial-state covariance")?,
        })
    }

    pub fn from_factor(factor: DMatrix<f64>) -> Self {
        Self { factor }
    }

    /// State dimension `p`.
    pub fn order(&self) -> usize {
        self.factor.nrows()
    }

    /// Rank `tau` of the covariance.
    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }
}

/// `n x p` map from the initial state to the natural response, using the
/// factorization `G = P N` with `P = 1/den` and `N = num`.
///
/// The state holds the last `p` samples of the internal signal `w = P u`,
/// most recent first. Returns `N_n Ct_n + C_n` where `Ct_n` propagates the
/// state through `P` and `C_n` collects its direct effect on `y` through `N`.
pub fn natural_response_map(tf: &TransferFunction, n: usize) -> Result<DMatrix<f64>> {
    if !tf.is_biproper() {
        return Err(Error::NotBiproper);
    }
    let p = tf.order();
    let pad = |c: &[f64]| (0..=p).map(|k| c.get(k).copied().unwrap_or(0.0)).collect::<Vec<f64>>();
    let a = pad(tf.denominator());
    let b = pad(tf.numerator());
    let mut ct = DMatrix::zeros(n, p);
    let mut c = DMatrix::zeros(n, p);
    for j in 0..p {
        // history[i] = w_{-1-i}
        let past = |i: usize| if i == j { 1.0 } else { 0.0 };
        let mut w = vec![0.0; n];
        for k in 0..n {
            let mut acc = 0.0;
            for i in 1..=p {
                acc -= a[i] * if k >= i { w[k - i] } else { past(i - k - 1) };
            }
            w[k] = acc;
        }
        ct.set_column(j, &DVector::from_vec(w));
        for k in 0..n.min(p) {
            let i = k + j + 1;
            if i <= p {
                c[(k, j)] = b[i];
            }
        }
    }
    let g = linalg::lower_toeplitz(&b, n, n);
    Ok(g * ct + c)
}

/// `(1/n)(h(G u + ybar) - h(u))` with `ybar` the natural response to `x0`.
pub fn initial_state_gain(
    tf: &TransferFunction,
    input: &InputSpec,
    x0: &InitialState,
    n: usize,
) -> Result<GainEstimate> {
    let log_g0 = gain_setup(tf, input, n)?;
    if x0.order() != tf.order() {
        return Err(invalid(format!(
            "initial state has dimension {} but the filter has order {}",
            x0.order(),
            tf.order()
        )));
    }
    if !tf.is_stable() {
        return Err(Error::Unstable {
            max_modulus: tf.max_pole_modulus(),
        });
    }
    if x0.rank() == 0 {
        return Ok(GainEstimate {
            nats_per_sample: log_g0,
            warnings: Vec::new(),
        });
    }
    let o = natural_response_map(tf, n)? * x0.factor();
    let a = output_map(tf, input, n);
    let (v, mut warnings) = log_det_gain(&a, &o)?;
    near_circle(tf, &mut warnings);
    Ok(GainEstimate {
        nats_per_sample: log_g0 + v / n as f64,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn entropy_examples() {
        let m = LinearGaussianModel::new(scalar(1.0), None, &[(SeedBlock::Input, 1)]).unwrap();
        assert_abs_diff_eq!(entropy(&m).unwrap(), 0.5 * ln_2pie(), epsilon = 1e-14);
        assert_abs_diff_eq!(entropy(&m).unwrap(), 1.41894, epsilon = 1e-5);

        let g = crate::toeplitz::conv_matrix(&[1.0, -1.5, 0.3], 8).unwrap().matrix;
        let y = LinearGaussianModel::new(g, None, &[(SeedBlock::Input, 8)]).unwrap();
        let u = LinearGaussianModel::new(DMatrix::identity(8, 8), None, &[(SeedBlock::Input, 8)]).unwrap();
        assert_abs_diff_eq!(entropy(&y).unwrap(), entropy(&u).unwrap(), epsilon = 1e-12);

        let k = DMatrix::from_row_slice(2, 2, &[5.0, 2.0, 2.0, 5.0]);
        let f = k.clone().cholesky().unwrap().unpack();
        let m = LinearGaussianModel::new(f, None, &[(SeedBlock::Input, 2)]).unwrap();
        assert_abs_diff_eq!(entropy(&m).unwrap(), 0.5 * (2.0 * ln_2pie() + 21f64.ln()), epsilon = 1e-12);
    }

    #[test]
    fn entropy_rejects_degenerate() {
        let m = LinearGaussianModel::new(DMatrix::zeros(2, 2), None, &[(SeedBlock::Input, 2)]).unwrap();
        assert!(matches!(entropy(&m), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn mi_examples() {
        // y = x0 + c with independent unit-variance x0 and c.
        let m = LinearGaussianModel::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            None,
            &[(SeedBlock::InitialState, 1), (SeedBlock::ChannelNoise, 1)],
        )
        .unwrap();
        let i = mutual_information(&m, &Variable::Output, &Variable::Seed(SeedBlock::InitialState)).unwrap();
        assert_abs_diff_eq!(i.nats, 0.5 * 2f64.ln(), epsilon = 1e-14);
        let i = mutual_information(&m, &Variable::Seed(SeedBlock::InitialState), &Variable::Seed(SeedBlock::ChannelNoise)).unwrap();
        assert_eq!(i.nats, 0.0);

        // Independent output coordinates.
        let m = LinearGaussianModel::new(DMatrix::identity(2, 2), None, &[(SeedBlock::Input, 2)]).unwrap();
        let i = mutual_information(&m, &Variable::OutputRows(0..1), &Variable::OutputRows(1..2)).unwrap();
        assert_abs_diff_eq!(i.nats, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn mi_feedback_scheme_matches_dense() {
        // y = v + (I + B) z, v on the first two coordinates.
        let n = 6;
        let ib = crate::toeplitz::conv_matrix(&[1.0, 1.5], n).unwrap().matrix;
        let kv = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let lv = kv.clone().cholesky().unwrap().unpack();
        let mut g = DMatrix::zeros(n, n + 2);
        g.view_mut((0, 0), (2, 2)).copy_from(&lv);
        g.columns_mut(2, n).copy_from(&ib);
        let m = LinearGaussianModel::new(g, None, &[(SeedBlock::Input, 2), (SeedBlock::ChannelNoise, n)]).unwrap();
        let i = mutual_information(&m, &Variable::Seed(SeedBlock::Input), &Variable::Output).unwrap();
        let ky = m.covariance();
        let kz = &ib * ib.transpose();
        let dense = 0.5 * (ky.determinant().ln() - kz.determinant().ln());
        assert_abs_diff_eq!(i.nats, dense, epsilon = 1e-10);
    }

    #[test]
    fn mi_rejects_singular_conditioning() {
        let m = LinearGaussianModel::new(
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            None,
            &[(SeedBlock::Input, 1)],
        )
        .unwrap();
        assert!(mutual_information(&m, &Variable::OutputRows(0..1), &Variable::Output).is_err());
    }

    fn dense_gain(tf: &TransferFunction, input: &InputSpec, d: &DisturbanceSpec, n: usize) -> f64 {
        let a = output_map(tf, input, n);
        let am = linalg::lower_toeplitz(&a, n, n);
        let su = linalg::lower_toeplitz(&input.impulse(n), n, n);
        let b = d.generator();
        let ky = &am * am.transpose() + &b * b.transpose();
        let ku = &su * su.transpose();
        0.5 * (linalg::logdet_spd(&ky, "ky").unwrap() - linalg::logdet_spd(&ku, "ku").unwrap()) / n as f64
    }

    #[test]
    fn disturbance_gain_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let tf = TransferFunction::from_real(&[-1.5, 0.4], &[0.3, -0.2], 1.0).unwrap();
        let shaping = TransferFunction::from_real(&[0.5], &[-0.3], 1.0).unwrap();
        for n in [3, 7, 12] {
            for input in [InputSpec::iid(0.7), InputSpec { variance: 1.3, shaping: Some(shaping.clone()) }] {
                let d = DisturbanceSpec::random_orthonormal(n, DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.2]), &mut rng).unwrap();
                let got = disturbance_gain(&tf, &input, &d, n).unwrap().nats_per_sample;
                assert_abs_diff_eq!(got, dense_gain(&tf, &input, &d, n), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn mp_filter_gain_vanishes() {
        let tf = TransferFunction::fir(&[1.0, 0.5]).unwrap();
        let d = DisturbanceSpec::first_coordinates(200, scalar(1e-2)).unwrap();
        let g = disturbance_gain(&tf, &InputSpec::default(), &d, 200).unwrap();
        assert!(g.nats_per_sample.abs() <= 1e-3);
        // Closed form: (1/2n) ln(1 + s2 * sum 0.25^k).
        let s: f64 = (0..200).map(|k| 0.25f64.powi(k)).sum();
        assert_abs_diff_eq!(g.nats_per_sample, (1.0 + 1e-2 * s).ln() / 400.0, epsilon = 1e-15);
    }

    #[test]
    fn single_nmp_zero_with_tiny_disturbance() {
        let tf = TransferFunction::fir(&[1.0, -1.5]).unwrap();
        let grid: Vec<usize> = (240..=300).step_by(10).collect();
        let mut inv = Vec::new();
        let mut val = Vec::new();
        for &n in &grid {
            let d = DisturbanceSpec::first_coordinates(n, scalar(1e-6)).unwrap();
            let g = disturbance_gain(&tf, &InputSpec::default(), &d, n).unwrap().nats_per_sample;
            let s: f64 = (0..n as i32).map(|k| 1.5f64.powi(2 * k)).sum();
            assert_abs_diff_eq!(g, (1.0 + 1e-6 * s).ln() / (2 * n) as f64, epsilon = 1e-12);
            inv.push(1.0 / n as f64);
            val.push(g);
        }
        let (limit, _) = crate::toeplitz::ols(&inv, &val);
        assert!((limit - 1.5f64.ln()).abs() <= 0.02, "{limit}");
    }

    #[test]
    fn no_disturbance_is_exactly_zero() {
        let tf = TransferFunction::fir(&[1.0, -1.5]).unwrap();
        for n in [1, 10, 100] {
            let g = disturbance_gain(&tf, &InputSpec::default(), &DisturbanceSpec::none(n), n).unwrap();
            assert_eq!(g.nats_per_sample, 0.0);
        }
    }

    #[test]
    fn aligned_two_dimensional_disturbance_uses_dense_route() {
        let tf = TransferFunction::fir(&crate::poly::mul(&[1.0, 1.5], &[1.0, 1.25])).unwrap();
        let d = DisturbanceSpec::first_coordinates(300, DMatrix::identity(2, 2) * 1e-4).unwrap();
        let g = disturbance_gain(&tf, &InputSpec::default(), &d, 300).unwrap();
        assert!(g.warnings.contains(&Warning::DenseFallback));
        let target = 1.5f64.ln() + 1.25f64.ln();
        assert!((g.nats_per_sample - target).abs() < 0.05, "{}", g.nats_per_sample);
    }

    #[test]
    fn input_disturbance_examples() {
        let n = 200;
        let nmp = TransferFunction::fir(&[1.0, -1.5]).unwrap();
        let d = DisturbanceSpec::first_coordinates(n, scalar(1.0)).unwrap();
        let g = input_disturbance_gain(&nmp, &InputSpec::default(), &d, n).unwrap();
        assert!(g.nats_per_sample.abs() <= 5.0 / n as f64);
        assert_abs_diff_eq!(g.nats_per_sample, 0.5 * 2f64.ln() / n as f64, epsilon = 1e-15);

        let g = input_disturbance_gain(&nmp, &InputSpec::default(), &DisturbanceSpec::none(n), n).unwrap();
        assert_eq!(g.nats_per_sample, 0.0);

        let mp = TransferFunction::fir(&[1.0, 0.5]).unwrap();
        let d = DisturbanceSpec::first_coordinates(n, DMatrix::identity(2, 2)).unwrap();
        let g = input_disturbance_gain(&mp, &InputSpec::default(), &d, n).unwrap();
        assert!(g.nats_per_sample.abs() <= 5.0 / n as f64);
    }

    #[test]
    fn input_disturbance_matches_dense() {
        let n = 9;
        let tf = TransferFunction::fir(&[1.0, -1.5, 0.2]).unwrap();
        let input = InputSpec { variance: 0.8, shaping: Some(TransferFunction::from_real(&[0.3], &[0.6], 1.0).unwrap()) };
        let d = DisturbanceSpec::first_coordinates(n, DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.4])).unwrap();
        let got = input_disturbance_gain(&tf, &input, &d, n).unwrap().nats_per_sample;
        let g = linalg::lower_toeplitz(&tf.impulse_response(n).samples, n, n);
        let s = linalg::lower_toeplitz(&input.impulse(n), n, n);
        let b = d.generator();
        let ku = &s * s.transpose();
        let ky = &g * (&ku + &b * b.transpose()) * g.transpose();
        let dense = 0.5 * (linalg::logdet_spd(&ky, "").unwrap() - linalg::logdet_spd(&ku, "").unwrap()) / n as f64;
        assert_abs_diff_eq!(got, dense, epsilon = 1e-10);
    }

    #[test]
    fn natural_response_by_simulation() {
        // y_k = sum b_i w_{k-i}, w_k = -sum a_i w_{k-i} for zero input.
        let tf = TransferFunction::from_polynomials(&[1.0, -1.5, 0.4], &[1.0, -0.5, 0.06]).unwrap();
        let n = 10;
        let o = natural_response_map(&tf, n).unwrap();
        let x0 = [0.7, -1.2];
        let (a, b) = ([1.0, -0.5, 0.06], [1.0, -1.5, 0.4]);
        let mut w: Vec<f64> = vec![x0[1], x0[0]];
        for _ in 0..n {
            let k = w.len();
            w.push(-a[1] * w[k - 1] - a[2] * w[k - 2]);
        }
        for k in 0..n {
            let y = b[0] * w[k + 2] + b[1] * w[k + 1] + b[2] * w[k];
            let pred = o[(k, 0)] * x0[0] + o[(k, 1)] * x0[1];
            assert_abs_diff_eq!(y, pred, epsilon = 1e-12);
        }
    }

    #[test]
    fn initial_state_examples() {
        let tf = TransferFunction::fir(&[1.0, -1.5]).unwrap();
        let x0 = InitialState::from_covariance(&scalar(1.0)).unwrap();
        let g = initial_state_gain(&tf, &InputSpec::default(), &x0, 300).unwrap();
        assert!((g.nats_per_sample - 1.5f64.ln()).abs() <= 0.02);

        let g = initial_state_gain(&tf, &InputSpec::default(), &InitialState::deterministic(1), 300).unwrap();
        assert_eq!(g.nats_per_sample, 0.0);

        let two = TransferFunction::fir(&crate::poly::mul(&[1.0, 1.5], &[1.0, 1.25])).unwrap();
        assert!(initial_state_gain(&two, &InputSpec::default(), &x0, 10).is_err());
    }

    #[test]
    fn initial_state_matches_dense() {
        let tf = TransferFunction::from_polynomials(&[1.0, -1.5, 0.4], &[1.0, -0.5, 0.06]).unwrap();
        let n = 11;
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.5]);
        let x0 = InitialState::from_covariance(&cov).unwrap();
        let got = initial_state_gain(&tf, &InputSpec::iid(2.0), &x0, n).unwrap().nats_per_sample;
        let g = linalg::lower_toeplitz(&tf.impulse_response(n).samples, n, n);
        let o = natural_response_map(&tf, n).unwrap();
        let ky = &g * &g.transpose() * 2.0 + &o * cov * o.transpose();
        let dense = 0.5 * (linalg::logdet_spd(&ky, "").unwrap() - n as f64 * 2f64.ln()) / n as f64;
        assert_abs_diff_eq!(got, dense, epsilon = 1e-10);
    }

    #[test]
    fn disturbance_spec_validation() {
        assert!(DisturbanceSpec::custom(DMatrix::from_element(3, 1, 1.0), scalar(1.0)).is_err());
        assert!(DisturbanceSpec::first_coordinates(3, scalar(0.0)).is_err());
        assert!(DisturbanceSpec::first_coordinates(1, DMatrix::identity(2, 2)).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = DisturbanceSpec::random_orthonormal(10, DMatrix::identity(3, 3), &mut rng).unwrap();
        let gram = d.basis().transpose() * d.basis();
        assert!((gram - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-12);
    }

    #[test]
    fn rejects_non_toeplitz_input() {
        let tf = TransferFunction::fir(&[1.0, -1.5]).unwrap();
        let bad = InputSpec { variance: 1.0, shaping: Some(TransferFunction::fir(&[1.0, 2.0]).unwrap()) };
        assert!(disturbance_gain(&tf, &bad, &DisturbanceSpec::none(5), 5).is_err());
    }
}

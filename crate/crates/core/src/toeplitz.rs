//! Lower-triangular Toeplitz convolution matrices and their spectra.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, check_dim};
use crate::lti::TransferFunction;
use crate::poly;

/// Relative floor below which a singular value is considered lost to rounding.
pub const UNDERFLOW_RATIO: f64 = 1e3 * f64::EPSILON;
/// Largest magnitude allowed in an inverse impulse response.
pub const OVERFLOW_BUDGET: f64 = 1e150;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// `n x n`, entries `g_{i-j}`.
    Square,
    /// `(n + eta) x n`, the full convolution of a length `eta + 1` response.
    Tall,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionMatrix {
    pub shape: Shape,
    pub impulse: Vec<f64>,
    pub matrix: DMatrix<f64>,
}

impl ConvolutionMatrix {
    /// Number of columns.
    pub fn n(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Square `G_n` with `(i, j)` entry `g_{i-j}`; the response is zero padded.
pub fn conv_matrix(impulse: &[f64], n: usize) -> Result<ConvolutionMatrix> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    check_dim(n)?;
    let impulse: Vec<f64> = (0..n).map(|k| impulse.get(k).copied().unwrap_or(0.0)).collect();
    Ok(ConvolutionMatrix {
        shape: Shape::Square,
        matrix: linalg::lower_toeplitz(&impulse, n, n),
        impulse,
    })
}

/// Tall `(n + eta) x n` convolution map of the FIR response `impulse`.
pub fn tall_conv_matrix(impulse: &[f64], n: usize) -> Result<ConvolutionMatrix> {
    if n == 0 || impulse.is_empty() {
        return Err(invalid("n and the response length must be at least 1"));
    }
    let rows = n + impulse.len() - 1;
    check_dim(rows)?;
    Ok(ConvolutionMatrix {
        shape: Shape::Tall,
        matrix: linalg::lower_toeplitz(impulse, rows, n),
        impulse: impulse.to_vec(),
    })
}

/// Taps of a FIR filter; rejects filters with poles away from the origin.
pub fn fir_taps(tf: &TransferFunction) -> Result<Vec<f64>> {
    if !tf.is_fir() {
        return Err(Error::NotFir);
    }
    Ok(tf.numerator().to_vec())
}

/// Singular values in ascending order, with optional singular vectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularSpectrum {
    pub n: usize,
    pub values: Vec<f64>,
    /// Set when the smallest value is below `UNDERFLOW_RATIO` times the largest.
    pub underflow: bool,
    /// Left singular vectors as columns, ordered like `values`.
    #[serde(skip)]
    pub left: Option<DMatrix<f64>>,
    /// Right singular vectors as rows, ordered like `values`.
    #[serde(skip)]
    pub right_t: Option<DMatrix<f64>>,
}

impl SingularSpectrum {
    pub fn log_sum(&self) -> f64 {
        self.values.iter().map(|d| d.ln()).sum()
    }
}

pub fn svd_spectrum(cm: &ConvolutionMatrix, vectors: bool) -> Result<SingularSpectrum> {
    let n = cm.n();
    let svd = cm
        .matrix
        .clone()
        .try_svd(vectors, vectors, f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericalFailure {
            n,
            condition: f64::INFINITY,
        })?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let (lo, hi) = (values[0], values[values.len() - 1]);
    if !(lo >= 0.0) || !hi.is_finite() {
        return Err(Error::NumericalFailure {
            n,
            condition: hi / lo,
        });
    }
    let left = svd.u.map(|u| DMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]));
    let right_t = svd
        .v_t
        .map(|v| DMatrix::from_fn(order.len(), v.ncols(), |i, j| v[(order[i], j)]));
    Ok(SingularSpectrum {
        n,
        underflow: lo < UNDERFLOW_RATIO * hi,
        values,
        left,
        right_t,
    })
}

/// Largest `n` for which `|rho_1|^{-n}` stays above the relative accuracy
/// floor scaled by an upper bound on `||G_n||`.
pub fn usable_window(tf: &TransferFunction) -> usize {
    let s = tf.nmp_summary();
    let Some(rho) = s.distinct.first() else {
        return linalg::MAX_DIM;
    };
    let norm = tf.impulse_response(256).samples.iter().map(|g| g.abs()).sum::<f64>();
    let n = -(UNDERFLOW_RATIO * norm.max(1.0)).ln() / rho.norm().ln();
    (n.floor() as usize).min(linalg::MAX_DIM)
}

/// Least-squares slopes of `ln d_{n,l}` against `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    /// Lengths whose spectra entered the fit.
    pub used: Vec<usize>,
    /// Slopes for `l = 1..=min(used)`, smallest singular value first.
    pub slopes: Vec<f64>,
    pub intercepts: Vec<f64>,
    /// Number of zeros outside the unit circle.
    pub m: usize,
    /// `-ln|rho_{iota(l)}|` for `l <= m`, zero otherwise.
    pub predicted: Vec<f64>,
}

pub fn decay_rate_fit(tf: &TransferFunction, n_grid: &[usize]) -> Result<DecayFit> {
    let spectra = spectra_over(tf, n_grid)?;
    let usable: Vec<&SingularSpectrum> = spectra.iter().filter(|s| !s.underflow).collect();
    if usable.len() < 4 {
        return Err(Error::InsufficientData {
            usable: usable.len(),
            required: 4,
        });
    }
    let k = usable.iter().map(|s| s.n).min().unwrap_or(0);
    let xs: Vec<f64> = usable.iter().map(|s| s.n as f64).collect();
    let (mut slopes, mut intercepts) = (Vec::with_capacity(k), Vec::with_capacity(k));
    for l in 0..k {
        let ys: Vec<f64> = usable.iter().map(|s| s.values[l].ln()).collect();
        let (a, b) = ols(&xs, &ys);
        intercepts.push(a);
        slopes.push(b);
    }
    let s = tf.nmp_summary();
    let predicted = (0..k)
        .map(|l| {
            if l < s.m {
                -s.distinct[s.iota[l]].norm().ln()
            } else {
                0.0
            }
        })
        .collect();
    Ok(DecayFit {
        used: usable.iter().map(|s| s.n).collect(),
        slopes,
        intercepts,
        m: s.m,
        predicted,
    })
}

/// Spectra of `G_n` for every `n` in the grid, computed in parallel.
pub fn spectra_over(tf: &TransferFunction, n_grid: &[usize]) -> Result<Vec<SingularSpectrum>> {
    let max_n = n_grid.iter().copied().max().unwrap_or(0);
    let g = tf.impulse_response(max_n).samples;
    n_grid
        .par_iter()
        .map(|&n| svd_spectrum(&conv_matrix(&g, n)?, false))
        .collect()
}

/// Ordinary least squares `y = a + b x`; returns `(a, b)`.
pub(crate) fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - b * mx, b)
}

/// `1/2 ln det(G^T G)` for the tall convolution map of a FIR filter.
pub fn effective_entropy_gain(tf: &TransferFunction, n: usize) -> Result<f64> {
    effective_entropy_gain_taps(&fir_taps(tf)?, n)
}

pub fn effective_entropy_gain_taps(taps: &[f64], n: usize) -> Result<f64> {
    if taps.first().copied().unwrap_or(0.0) == 0.0 {
        return Err(Error::RankDeficient {
            what: "tall convolution map (first tap is zero)".into(),
        });
    }
    let cm = tall_conv_matrix(taps, n)?;
    let (logdet, _) = linalg::logdet_gram_cols(&cm.matrix, "tall convolution map")?;
    Ok(0.5 * logdet)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GsCheck {
    /// `(n, effective gain / n)` pairs in grid order.
    pub per_sample: Vec<(usize, f64)>,
    /// Jensen integral of the filter.
    pub target: f64,
    pub terminal_gap: f64,
    /// OLS slope of `|gap|` against `n`; non-positive when the gap shrinks in trend.
    pub gap_trend: f64,
}

impl GsCheck {
    pub fn shrinking(&self) -> bool {
        self.gap_trend <= 0.0
    }
}

pub fn gs_limit_check(tf: &TransferFunction, n_grid: &[usize]) -> Result<GsCheck> {
    let taps = fir_taps(tf)?;
    let target = tf.jensen_log_integral(1 << 16)?.nats;
    let per_sample: Vec<(usize, f64)> = n_grid
        .par_iter()
        .map(|&n| Ok((n, effective_entropy_gain_taps(&taps, n)? / n as f64)))
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = per_sample.iter().map(|p| p.0 as f64).collect();
    let gaps: Vec<f64> = per_sample.iter().map(|p| (p.1 - target).abs()).collect();
    let (_, gap_trend) = ols(&xs, &gaps);
    Ok(GsCheck {
        terminal_gap: per_sample.last().map_or(0.0, |p| p.1 - target),
        per_sample,
        target,
        gap_trend,
    })
}

/// First `n` samples of the inverse response `1/G`, checked against the
/// overflow budget.
pub fn inverse_impulse(impulse: &[f64], n: usize) -> Result<Vec<f64>> {
    if impulse.first().copied().unwrap_or(0.0) == 0.0 {
        return Err(Error::RankDeficient {
            what: "convolution matrix (first sample is zero)".into(),
        });
    }
    let trunc = &impulse[..impulse.len().min(n)];
    let h = poly::series(&[1.0], trunc, n);
    if let Some(bad) = h.iter().position(|v| !(v.abs() < OVERFLOW_BUDGET)) {
        return Err(Error::OverflowBudget { n, safe_n: bad });
    }
    Ok(h)
}

/// First `k` columns of `G_n^{-1}`.
pub fn inverse_conv_columns(impulse: &[f64], n: usize, k: usize) -> Result<DMatrix<f64>> {
    check_dim(n)?;
    if k > n {
        return Err(invalid("k cannot exceed n"));
    }
    let h = inverse_impulse(impulse, n)?;
    Ok(linalg::lower_toeplitz(&h, n, k))
}

/// `G_n^{-1} B` by causal convolution with the inverse response.
pub fn inverse_apply(impulse: &[f64], b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let h = inverse_impulse(impulse, b.nrows())?;
    Ok(linalg::causal_apply(&h, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn square_examples() {
        let g = conv_matrix(&[1.0, 2.0], 3).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 2.0, 1.0, 0.0, 0.0, 2.0, 1.0]);
        assert_eq!(g.matrix, expect);
        assert_eq!(conv_matrix(&[1.0], 4).unwrap().matrix, DMatrix::identity(4, 4));
        let g = conv_matrix(&[1.0, 0.5, 0.25], 3).unwrap();
        assert_eq!(g.matrix[(2, 0)], 0.25);
        assert_eq!(g.matrix[(2, 1)], 0.5);
        assert!(conv_matrix(&[1.0], 0).is_err());
        assert!(conv_matrix(&[1.0], 2001).is_err());
    }

    #[test]
    fn tall_examples() {
        let g = tall_conv_matrix(&[1.0, 2.0], 2).unwrap();
        assert_eq!(g.matrix, DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, 0.0, 2.0]));
        assert_eq!(tall_conv_matrix(&[1.0], 3).unwrap().matrix, DMatrix::identity(3, 3));
        assert_eq!(tall_conv_matrix(&[1.0, 1.0], 1).unwrap().matrix.as_slice(), &[1.0, 1.0]);
        let iir = TransferFunction::from_real(&[0.0], &[0.5], 1.0).unwrap();
        assert!(matches!(effective_entropy_gain(&iir, 3), Err(Error::NotFir)));
    }

    #[test]
    fn geometric_example_spectrum() {
        let s = svd_spectrum(&conv_matrix(&[1.0, 2.0], 3).unwrap(), true).unwrap();
        for (d, e) in s.values.iter().zip([0.19394, 1.90321, 2.70928]) {
            assert_abs_diff_eq!(*d, e, epsilon = 1e-4);
        }
        let (u, vt) = (s.left.unwrap(), s.right_t.unwrap());
        let back = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s.values.clone())) * &vt;
        assert!((back - conv_matrix(&[1.0, 2.0], 3).unwrap().matrix).abs().max() < 1e-12);
    }

    #[test]
    fn identity_and_product_of_values() {
        let s = svd_spectrum(&conv_matrix(&[1.0], 5).unwrap(), false).unwrap();
        assert!(s.values.iter().all(|&d| (d - 1.0).abs() < 1e-14));
        let s = svd_spectrum(&conv_matrix(&[1.0, 0.5], 6).unwrap(), false).unwrap();
        assert_abs_diff_eq!(s.values.iter().product::<f64>(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn underflow_flag() {
        let s = svd_spectrum(&conv_matrix(&[1.0, 3.0], 60).unwrap(), false).unwrap();
        assert!(s.underflow);
        let s = svd_spectrum(&conv_matrix(&[1.0, 3.0], 10).unwrap(), false).unwrap();
        assert!(!s.underflow);
    }

    #[test]
    fn decay_single_nmp_zero() {
        let tf = TransferFunction::fir(&[1.0, -1.5]).unwrap();
        let grid: Vec<usize> = (10..=40).collect();
        let fit = decay_rate_fit(&tf, &grid).unwrap();
        let target = -1.5f64.ln();
        assert!((fit.slopes[0] - target).abs() <= 0.01 * target.abs());
        assert!(fit.slopes[1..].iter().all(|r| r.abs() < 0.04));
    }

    #[test]
    fn decay_mp_filter() {
        let tf = TransferFunction::fir(&[1.0, 0.5]).unwrap();
        let grid: Vec<usize> = (10..=40).collect();
        let fit = decay_rate_fit(&tf, &grid).unwrap();
        // Higher indices still drift polynomially toward min|G| on this window.
        assert!(fit.slopes[..3].iter().all(|r| r.abs() < 1e-2), "{:?}", fit.slopes);
        assert!(fit.slopes.iter().all(|r| r.abs() < 0.04), "{:?}", fit.slopes);
    }

    #[test]
    fn decay_mixed_zeros() {
        let tf = TransferFunction::fir(&[1.0, 2.0, 0.75]).unwrap();
        let grid: Vec<usize> = (10..=40).collect();
        let fit = decay_rate_fit(&tf, &grid).unwrap();
        assert_eq!(fit.m, 1);
        assert!((fit.slopes[0] + 1.5f64.ln()).abs() <= 0.01 * 1.5f64.ln());
        assert!(fit.slopes[1].abs() < 0.04);
    }

    #[test]
    fn decay_needs_four_lengths() {
        let tf = TransferFunction::fir(&[1.0, -1.5]).unwrap();
        assert!(matches!(
            decay_rate_fit(&tf, &[10, 11, 12]),
            Err(Error::InsufficientData { usable: 3, .. })
        ));
    }

    #[test]
    fn effective_gain_examples() {
        let g = TransferFunction::fir(&[1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(effective_entropy_gain(&g, 2).unwrap(), 0.5 * 21f64.ln(), epsilon = 1e-12);
        let id = TransferFunction::fir(&[1.0]).unwrap();
        assert_eq!(effective_entropy_gain(&id, 7).unwrap(), 0.0);
        assert!(effective_entropy_gain_taps(&[0.0, 1.0], 3).is_err());
    }

    #[test]
    fn gs_examples() {
        for (taps, target) in [(vec![1.0, 2.0], 2f64.ln()), (vec![1.0, 0.5], 0.0)] {
            let tf = TransferFunction::fir(&taps).unwrap();
            let check = gs_limit_check(&tf, &[50, 100, 200, 500]).unwrap();
            assert!(check.terminal_gap.abs() <= 0.01);
            assert_abs_diff_eq!(check.target, target, epsilon = 1e-12);
            assert!(check.shrinking());
        }
        let id = TransferFunction::fir(&[1.0]).unwrap();
        let check = gs_limit_check(&id, &[1, 5, 9]).unwrap();
        assert!(check.per_sample.iter().all(|p| p.1 == 0.0));
    }

    #[test]
    fn inverse_columns_examples() {
        let h = inverse_conv_columns(&[1.0, 2.0], 4, 1).unwrap();
        assert_eq!(h.as_slice(), &[1.0, -2.0, 4.0, -8.0]);
        assert_eq!(inverse_conv_columns(&[1.0], 3, 2).unwrap(), DMatrix::identity(3, 2));
        let h = inverse_conv_columns(&[1.0, 0.5], 4, 1).unwrap();
        assert_eq!(h.as_slice(), &[1.0, -0.5, 0.25, -0.125]);
    }

    #[test]
    fn inverse_columns_invert_the_matrix() {
        let g = [1.0, -1.5, 0.3];
        let n = 12;
        let inv = inverse_conv_columns(&g, n, 3).unwrap();
        let prod = conv_matrix(&g, n).unwrap().matrix * inv;
        assert!((prod - DMatrix::<f64>::identity(n, 3)).abs().max() < 1e-8);
    }

    #[test]
    fn overflow_budget_names_safe_n() {
        let err = inverse_conv_columns(&[1.0, 2.0], 600, 1).unwrap_err();
        let safe = (150.0 * 10f64.ln() / 2f64.ln()).floor() as usize;
        assert_eq!(err, Error::OverflowBudget { n: 600, safe_n: safe + 1 });
    }
}

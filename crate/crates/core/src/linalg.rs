//! Dense helpers shared by the matrix and Gaussian modules.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Hard cap on matrix dimensions.
pub const MAX_DIM: usize = 2000;
/// Condition estimate above which results carry a warning.
pub const COND_LIMIT: f64 = 1e12;

pub(crate) fn check_dim(n: usize) -> Result<()> {
    if n > MAX_DIM {
        return Err(Error::TooLarge { n, cap: MAX_DIM });
    }
    Ok(())
}

/// Log-determinant of `M M^T` for a wide (or square) `M`, from the R factor of
/// `M^T`. Returns the value and the ratio of extreme |R_ii|, squared, as a
/// condition estimate of `M M^T`.
pub(crate) fn logdet_gram_rows(m: &DMatrix<f64>, what: &str) -> Result<(f64, f64)> {
    if m.nrows() > m.ncols() {
        return Err(Error::RankDeficient {
            what: format!("{what}: {} rows but only {} columns", m.nrows(), m.ncols()),
        });
    }
    logdet_gram_cols(&m.transpose(), what)
}

/// Log-determinant of `M^T M` for a tall (or square) `M`.
pub(crate) fn logdet_gram_cols(m: &DMatrix<f64>, what: &str) -> Result<(f64, f64)> {
    if m.ncols() == 0 {
        return Ok((0.0, 1.0));
    }
    let r = m.clone().qr().r();
    let diag: Vec<f64> = (0..m.ncols()).map(|i| r[(i, i)].abs()).collect();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    if !(lo > 0.0) || !hi.is_finite() {
        return Err(Error::RankDeficient { what: what.into() });
    }
    let logdet = 2.0 * diag.iter().map(|d| d.ln()).sum::<f64>();
    Ok((logdet, (hi / lo).powi(2)))
}

/// Log-determinant of a symmetric positive definite matrix via Cholesky.
pub(crate) fn logdet_spd(k: &DMatrix<f64>, what: &str) -> Result<f64> {
    let chol = k
        .clone()
        .cholesky()
        .ok_or_else(|| Error::RankDeficient { what: what.into() })?;
    let l = chol.l_dirty();
    Ok(2.0 * (0..k.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>())
}

/// Condition number of a symmetric positive semidefinite matrix.
pub(crate) fn spd_condition(k: &DMatrix<f64>) -> f64 {
    let ev = k.clone().symmetric_eigenvalues();
    let hi = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lo = ev.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Lower-triangular Toeplitz matrix with first column `g` (zero padded).
pub(crate) fn lower_toeplitz(g: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| {
        if i >= j {
            g.get(i - j).copied().unwrap_or(0.0)
        } else {
            0.0
        }
    })
}

/// Causal convolution of every column of `b` with `h`, truncated to `b.nrows()`.
pub(crate) fn causal_apply(h: &[f64], b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.nrows();
    let mut out = DMatrix::zeros(n, b.ncols());
    for c in 0..b.ncols() {
        let col = b.column(c);
        for j in 0..n {
            let v = col[j];
            if v == 0.0 {
                continue;
            }
            for i in j..n {
                let hk = match h.get(i - j) {
                    Some(&x) => x,
                    None => break,
                };
                out[(i, c)] += hk * v;
            }
        }
    }
    out
}

/// Lower Cholesky factor of a positive semidefinite matrix, dropping null
/// directions: returns `F` with `F F^T = k` and full column rank.
pub(crate) fn psd_factor(k: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if k.nrows() != k.ncols() {
        return Err(Error::InvalidArgument(format!("{what} must be square")));
    }
    if k.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let asym = (k - k.transpose()).abs().max();
    let scale = k.abs().max().max(f64::MIN_POSITIVE);
    if asym > 1e-10 * scale {
        return Err(Error::InvalidArgument(format!("{what} must be symmetric")));
    }
    let eig = k.clone().symmetric_eigen();
    let tol = 1e-12 * scale * k.nrows() as f64;
    if eig.eigenvalues.iter().any(|&v| v < -tol) {
        return Err(Error::InvalidArgument(format!("{what} must be positive semidefinite")));
    }
    let keep: Vec<usize> = (0..k.nrows()).filter(|&i| eig.eigenvalues[i] > tol).collect();
    let mut f = DMatrix::zeros(k.nrows(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        f.set_column(c, &(eig.eigenvectors.column(i) * s));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_logdet_matches_direct() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, 0.0, 2.0]);
        let (ld, _) = logdet_gram_cols(&m, "test").unwrap();
        assert!((ld - 21f64.ln()).abs() < 1e-13);
        let (ld, _) = logdet_gram_rows(&m.transpose(), "test").unwrap();
        assert!((ld - 21f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn spd_logdet() {
        let k = DMatrix::from_row_slice(2, 2, &[5.0, 2.0, 2.0, 5.0]);
        assert!((logdet_spd(&k, "k").unwrap() - 21f64.ln()).abs() < 1e-13);
        assert!(logdet_spd(&DMatrix::zeros(2, 2), "k").is_err());
    }

    #[test]
    fn causal_apply_matches_matrix_product() {
        let h = [1.0, -2.0, 4.0];
        let b = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let direct = lower_toeplitz(&h, 4, 4) * &b;
        assert_eq!(causal_apply(&h, &b), direct);
    }

    #[test]
    fn psd_factor_drops_null_space() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = psd_factor(&k, "k").unwrap();
        assert_eq!(f.ncols(), 1);
        assert!((&f * f.transpose() - k).abs().max() < 1e-14);
    }
}

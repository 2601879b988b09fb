//! Real polynomial helpers. Coefficient vectors are ordered by ascending
//! powers of `z^{-1}`, so `c[0] + c[1] z^{-1} + ... + c[d] z^{-d}`; read
//! backwards they are the descending-power coefficients of `z^d` times the
//! same polynomial.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Tolerance under which an imaginary part is treated as zero.
pub(crate) const CONJ_TOL: f64 = 1e-8;

/// Coefficients of `prod (1 - r z^{-1})`; imaginary residue is discarded,
/// so `roots` must be closed under conjugation.
pub(crate) fn from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (k, &ck) in c.iter().enumerate() {
            next[k] += ck;
            next[k + 1] -= ck * r;
        }
        c = next;
    }
    c.into_iter().map(|v| v.re).collect()
}

pub(crate) fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub(crate) fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, &x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, &y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

/// Drops trailing (highest `z^{-1}` power) zero coefficients.
pub(crate) fn trim(c: &[f64]) -> &[f64] {
    let end = c.iter().rposition(|&v| v != 0.0).map_or(0, |i| i + 1);
    &c[..end]
}

/// First `n` samples of the power series `num / den`; `den[0]` must be nonzero.
pub(crate) fn series(num: &[f64], den: &[f64], n: usize) -> Vec<f64> {
    let a0 = den[0];
    let mut h = vec![0.0; n];
    for k in 0..n {
        let mut acc = num.get(k).copied().unwrap_or(0.0);
        for i in 1..den.len().min(k + 1) {
            acc -= den[i] * h[k - i];
        }
        h[k] = acc / a0;
    }
    h
}

/// Roots in `z` of `sum c[k] z^{d-k}`, i.e. the zeros of the `z^{-1}`
/// polynomial `c` other than those at infinity. Trailing zero coefficients
/// give roots at the origin.
pub(crate) fn roots(c: &[f64]) -> Vec<Complex64> {
    let lead = c.iter().position(|&v| v != 0.0);
    let Some(lead) = lead else {
        return Vec::new();
    };
    let c = &c[lead..];
    let nz = c.len() - trim(c).len();
    let c = trim(c);
    let d = c.len() - 1;
    let mut out = vec![Complex64::new(0.0, 0.0); nz];
    if d == 0 {
        return out;
    }
    let mut comp = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        comp[(0, j)] = -c[j + 1] / c[0];
    }
    for i in 1..d {
        comp[(i, i - 1)] = 1.0;
    }
    let mut found: Vec<Complex64> = comp
        .complex_eigenvalues()
        .iter()
        .map(|&r| polish(c, r))
        .collect();
    pair_conjugates(&mut found);
    out.extend(found);
    out
}

fn eval_desc(c: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &ck in c {
        dp = dp * z + p;
        p = p * z + ck;
    }
    (p, dp)
}

fn polish(c: &[f64], mut z: Complex64) -> Complex64 {
    let (mut p, _) = eval_desc(c, z);
    for _ in 0..8 {
        let (_, dp) = eval_desc(c, z);
        if dp.norm() == 0.0 {
            break;
        }
        let cand = z - p / dp;
        let (pc, _) = eval_desc(c, cand);
        if !(pc.norm() < p.norm()) {
            break;
        }
        z = cand;
        p = pc;
    }
    z
}

/// Snaps near-real roots onto the real axis and makes complex roots exact
/// conjugate pairs.
pub(crate) fn pair_conjugates(r: &mut [Complex64]) {
    let mut used = vec![false; r.len()];
    for i in 0..r.len() {
        if used[i] {
            continue;
        }
        if r[i].im.abs() <= CONJ_TOL * r[i].norm().max(1.0) {
            r[i].im = 0.0;
            used[i] = true;
            continue;
        }
        let target = r[i].conj();
        let partner = (0..r.len())
            .filter(|&j| j != i && !used[j])
            .min_by(|&a, &b| {
                (r[a] - target)
                    .norm()
                    .total_cmp(&(r[b] - target).norm())
            });
        used[i] = true;
        if let Some(j) = partner {
            let avg = (r[i] + r[j].conj()) * 0.5;
            r[i] = avg;
            r[j] = avg.conj();
            used[j] = true;
        }
    }
}

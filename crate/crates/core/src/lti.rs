//! Rational causal transfer functions held as zeros, poles and gain.
//!
//! `G(z) = gain * prod(z - z_i) / prod(z - p_i)`. The cached numerator and
//! denominator are expanded in powers of `z^{-1}` with a monic denominator,
//! so for a biproper filter the first impulse-response sample is `gain`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::poly;

/// Roots closer than this to the unit circle are rejected outright.
pub const UNIT_CIRCLE_TOL: f64 = 1e-9;
/// Roots closer than this to the unit circle make the quadrature unreliable.
pub const NEAR_UNIT_CIRCLE: f64 = 1e-3;
/// Zeros within this distance are treated as one repeated zero.
pub const CLUSTER_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FilterJson", into = "FilterJson")]
pub struct TransferFunction {
    zeros: Vec<Complex64>,
    poles: Vec<Complex64>,
    gain: f64,
    num: Vec<f64>,
    den: Vec<f64>,
}

/// Wire form: `{"zeros":[...],"poles":[...],"gain":g}` where each root is
/// a real number or an `[re, im]` pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterJson {
    #[serde(default)]
    pub zeros: Vec<RootJson>,
    #[serde(default)]
    pub poles: Vec<RootJson>,
    #[serde(default = "one")]
    pub gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RootJson {
    Real(f64),
    Complex([f64; 2]),
}

impl From<RootJson> for Complex64 {
    fn from(r: RootJson) -> Self {
        match r {
            RootJson::Real(x) => Complex64::new(x, 0.0),
            RootJson::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

impl From<Complex64> for RootJson {
    fn from(z: Complex64) -> Self {
        if z.im == 0.0 {
            RootJson::Real(z.re)
        } else {
            RootJson::Complex([z.re, z.im])
        }
    }
}

fn one() -> f64 {
    1.0
}

impl TryFrom<FilterJson> for TransferFunction {
    type Error = Error;

    fn try_from(f: FilterJson) -> Result<Self> {
        let c = |v: &[RootJson]| v.iter().map(|&p| p.into()).collect();
        TransferFunction::new(c(&f.zeros), c(&f.poles), f.gain)
    }
}

impl From<TransferFunction> for FilterJson {
    fn from(tf: TransferFunction) -> Self {
        let c = |v: &[Complex64]| v.iter().map(|&z| z.into()).collect();
        FilterJson {
            zeros: c(&tf.zeros),
            poles: c(&tf.poles),
            gain: tf.gain,
        }
    }
}

fn snap_roots(roots: &mut [Complex64]) -> Result<()> {
    for r in roots.iter() {
        if !r.re.is_finite() || !r.im.is_finite() {
            return Err(invalid("non-finite root"));
        }
        if (r.norm() - 1.0).abs() < UNIT_CIRCLE_TOL {
            return Err(Error::UnitCircleRoot { re: r.re, im: r.im });
        }
    }
    let mut used = vec![false; roots.len()];
    for i in 0..roots.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let scale = roots[i].norm().max(1.0);
        if roots[i].im.abs() <= poly::CONJ_TOL * scale {
            roots[i].im = 0.0;
            continue;
        }
        let target = roots[i].conj();
        let partner = (0..roots.len())
            .filter(|&j| !used[j] && (roots[j] - target).norm() <= poly::CONJ_TOL * scale)
            .min_by(|&a, &b| (roots[a] - target).norm().total_cmp(&(roots[b] - target).norm()));
        let Some(j) = partner else {
            return Err(Error::MissingConjugate {
                re: roots[i].re,
                im: roots[i].im,
            });
        };
        used[j] = true;
        roots[j] = roots[i].conj();
    }
    Ok(())
}

impl TransferFunction {
    /// Builds `gain * prod(z - zeros) / prod(z - poles)`.
    pub fn new(zeros: Vec<Complex64>, poles: Vec<Complex64>, gain: f64) -> Result<Self> {
        let (mut zeros, mut poles) = (zeros, poles);
        if zeros.len() > poles.len() {
            return Err(Error::NonCausal {
                zeros: zeros.len(),
                poles: poles.len(),
            });
        }
        if !gain.is_finite() {
            return Err(invalid("gain must be finite"));
        }
        snap_roots(&mut zeros)?;
        snap_roots(&mut poles)?;
        let mut num = vec![0.0; poles.len() - zeros.len()];
        num.extend(poly::from_roots(&zeros).into_iter().map(|c| c * gain));
        let num = poly::trim(&num).to_vec();
        let den = poly::trim(&poly::from_roots(&poles)).to_vec();
        Ok(Self {
            zeros,
            poles,
            gain,
            num,
            den,
        })
    }

    /// Real-valued convenience constructor.
    pub fn from_real(zeros: &[f64], poles: &[f64], gain: f64) -> Result<Self> {
        let c = |v: &[f64]| v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::new(c(zeros), c(poles), gain)
    }

    /// FIR filter with impulse response `g`.
    pub fn fir(g: &[f64]) -> Result<Self> {
        Self::from_polynomials(g, &[1.0])
    }

    /// Filter `num(z^{-1}) / den(z^{-1})` given by coefficient lists in
    /// ascending powers of `z^{-1}`.
    pub fn from_polynomials(num: &[f64], den: &[f64]) -> Result<Self> {
        let den = poly::trim(den);
        if den.is_empty() || den[0] == 0.0 {
            return Err(invalid("denominator must have a nonzero leading coefficient"));
        }
        let num = poly::trim(num);
        let Some(lead) = num.iter().position(|&v| v != 0.0) else {
            let poles = poly::roots(den);
            return Self::new(Vec::new(), poles, 0.0);
        };
        let order = (num.len() - 1).max(den.len() - 1);
        let mut zeros = poly::roots(num);
        zeros.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), order - (num.len() - 1)));
        let mut poles = poly::roots(den);
        poles.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), order - (den.len() - 1)));
        Self::new(zeros, poles, num[lead] / den[0])
    }

    pub fn zeros(&self) -> &[Complex64] {
        &self.zeros
    }

    pub fn poles(&self) -> &[Complex64] {
        &self.poles
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// Numerator coefficients in ascending powers of `z^{-1}`, without
    /// trailing zeros.
    pub fn numerator(&self) -> &[f64] {
        &self.num
    }

    /// Monic denominator coefficients in ascending powers of `z^{-1}`, without
    /// trailing zeros.
    pub fn denominator(&self) -> &[f64] {
        &self.den
    }

    /// Number of poles.
    pub fn order(&self) -> usize {
        self.poles.len()
    }

    pub fn relative_degree(&self) -> usize {
        self.poles.len() - self.zeros.len()
    }

    pub fn is_biproper(&self) -> bool {
        self.relative_degree() == 0 && self.gain != 0.0
    }

    pub fn max_pole_modulus(&self) -> f64 {
        self.poles.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.max_pole_modulus() < 1.0
    }

    pub fn is_fir(&self) -> bool {
        self.poles.iter().all(|p| p.norm() == 0.0)
    }

    pub fn is_minimum_phase(&self) -> bool {
        self.zeros.iter().all(|z| z.norm() < 1.0)
    }

    pub fn impulse_response(&self, n: usize) -> ImpulseResponse {
        ImpulseResponse {
            samples: poly::series(&self.num, &self.den, n),
        }
    }

    /// `G(e^{j omega})`.
    pub fn frequency_response(&self, omega: f64) -> Complex64 {
        let z = Complex64::from_polar(1.0, omega);
        let num: Complex64 = self.zeros.iter().map(|&r| z - r).product();
        let den: Complex64 = self.poles.iter().map(|&r| z - r).product();
        num / den * self.gain
    }

    fn nearest_unit_distance(&self) -> f64 {
        self.zeros
            .iter()
            .chain(&self.poles)
            .map(|r| (r.norm() - 1.0).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// `(1/2pi) * integral of ln|G(e^{jw})|` on a uniform periodic grid.
    pub fn jensen_log_integral(&self, points: usize) -> Result<JensenEstimate> {
        if points < 512 {
            return Err(invalid("at least 512 quadrature points are required"));
        }
        let step = 2.0 * PI / points as f64;
        let log_gain = self.gain.abs().ln();
        let mut acc = 0.0;
        for k in 0..points {
            let w = Complex64::from_polar(1.0, -(-PI + step * k as f64));
            let mut v = 0.0;
            for r in &self.zeros {
                v += (Complex64::new(1.0, 0.0) - r * w).norm().ln();
            }
            for r in &self.poles {
                v -= (Complex64::new(1.0, 0.0) - r * w).norm().ln();
            }
            acc += v;
        }
        Ok(JensenEstimate {
            nats: log_gain + acc / points as f64,
            points,
            near_unit_circle: self.nearest_unit_distance() < NEAR_UNIT_CIRCLE,
        })
    }

    /// Closed form of the Jensen integral for this filter.
    pub fn jensen_closed_form(&self) -> f64 {
        let out = |v: &[Complex64]| {
            v.iter()
                .filter(|r| r.norm() > 1.0)
                .map(|r| r.norm().ln())
                .sum::<f64>()
        };
        self.gain.abs().ln() + out(&self.zeros) - out(&self.poles)
    }

    pub fn nmp_summary(&self) -> NmpSummary {
        NmpSummary::from_zeros(&self.zeros)
    }

    /// Product `self * other`.
    pub fn cascade(&self, other: &TransferFunction) -> TransferFunction {
        let zeros = self.zeros.iter().chain(&other.zeros).copied().collect();
        let poles = self.poles.iter().chain(&other.poles).copied().collect();
        Self::new(zeros, poles, self.gain * other.gain).expect("roots already validated")
    }

    /// Removes zero/pole pairs closer than `tol` (relative to their modulus).
    pub fn cancel_common(&self, tol: f64) -> TransferFunction {
        let mut zeros = self.zeros.clone();
        let mut poles = self.poles.clone();
        let mut i = 0;
        while i < zeros.len() {
            let z = zeros[i];
            let hit = poles
                .iter()
                .position(|p| (p - z).norm() <= tol * z.norm().max(1.0));
            if let Some(j) = hit {
                zeros.remove(i);
                poles.remove(j);
            } else {
                i += 1;
            }
        }
        Self::new(zeros, poles, self.gain).expect("subset of validated roots")
    }

    pub fn factorize(&self, mode: FactorMode) -> Result<(TransferFunction, TransferFunction)> {
        if !self.is_biproper() {
            return Err(Error::NotBiproper);
        }
        let p = self.order();
        let origin = |k: usize| vec![Complex64::new(0.0, 0.0); k];
        let (a, b) = match mode {
            FactorMode::PolesZeros => (
                Self::new(origin(p), self.poles.clone(), 1.0)?,
                Self::new(self.zeros.clone(), origin(p), self.gain)?,
            ),
            FactorMode::MpNmp => {
                if !self.is_stable() {
                    return Err(Error::Unstable {
                        max_modulus: self.max_pole_modulus(),
                    });
                }
                let (nmp, mut mp): (Vec<_>, Vec<_>) =
                    self.zeros.iter().partition(|z| z.norm() > 1.0);
                let m = nmp.len();
                mp.extend(origin(m));
                (
                    Self::new(mp, self.poles.clone(), self.gain)?,
                    Self::new(nmp, origin(m), 1.0)?,
                )
            }
        };
        let num = poly::mul(&a.num, &b.num);
        let den = poly::mul(&a.den, &b.den);
        let scale = self.num.iter().chain(&self.den).fold(1.0f64, |m, v| m.max(v.abs()));
        let mismatch = |x: &[f64], y: &[f64]| {
            (0..x.len().max(y.len()))
                .map(|k| (x.get(k).unwrap_or(&0.0) - y.get(k).unwrap_or(&0.0)).abs())
                .fold(0.0, f64::max)
        };
        let err = mismatch(&num, &self.num).max(mismatch(&den, &self.den));
        if err > 1e-10 * scale {
            return Err(Error::NumericalFailure {
                n: self.order(),
                condition: err / scale,
            });
        }
        Ok((a, b))
    }
}

/// How `factorize` splits a filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorMode {
    /// `G = P * N`: all-pole `P = 1/den`, FIR `N = num`.
    PolesZeros,
    /// `G = Gt * F`: minimum-phase `Gt`, FIR `F` carrying the zeros outside the unit circle.
    MpNmp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpulseResponse {
    pub samples: Vec<f64>,
}

impl ImpulseResponse {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.samples
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JensenEstimate {
    pub nats: f64,
    pub points: usize,
    pub near_unit_circle: bool,
}

/// Zeros outside the unit circle, grouped and ordered by descending modulus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NmpSummary {
    /// Outside zeros counted with multiplicity.
    pub m: usize,
    /// Distinct outside zeros, largest modulus first.
    pub distinct: Vec<Complex64>,
    pub multiplicities: Vec<usize>,
    /// `iota[k]` is the (0-based) distinct zero owning the `k`-th outside zero.
    pub iota: Vec<usize>,
    /// Sum of `ln|rho|` over outside zeros, in nats.
    pub log_sum: f64,
}

impl NmpSummary {
    pub fn from_zeros(zeros: &[Complex64]) -> Self {
        let mut nmp: Vec<Complex64> = zeros.iter().copied().filter(|z| z.norm() > 1.0).collect();
        nmp.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(a.arg().total_cmp(&b.arg())));
        let mut distinct: Vec<Complex64> = Vec::new();
        let mut multiplicities: Vec<usize> = Vec::new();
        for z in &nmp {
            match distinct.iter().position(|d| (d - z).norm() < CLUSTER_TOL) {
                Some(i) => multiplicities[i] += 1,
                None => {
                    distinct.push(*z);
                    multiplicities.push(1);
                }
            }
        }
        let mut order: Vec<usize> = (0..distinct.len()).collect();
        order.sort_by(|&a, &b| distinct[b].norm().total_cmp(&distinct[a].norm()));
        let distinct: Vec<Complex64> = order.iter().map(|&i| distinct[i]).collect();
        let multiplicities: Vec<usize> = order.iter().map(|&i| multiplicities[i]).collect();
        let iota = multiplicities
            .iter()
            .enumerate()
            .flat_map(|(i, &l)| std::iter::repeat_n(i, l))
            .collect();
        let log_sum = nmp.iter().map(|z| z.norm().ln()).sum();
        Self {
            m: nmp.len(),
            distinct,
            multiplicities,
            iota,
            log_sum,
        }
    }

    /// Number of distinct outside zeros.
    pub fn distinct_count(&self) -> usize {
        self.distinct.len()
    }

    /// `sum_{i < k} ln|rho_{iota(i)}|`; `k` is clamped to `m`.
    pub fn partial_sum(&self, k: usize) -> f64 {
        self.iota
            .iter()
            .take(k)
            .map(|&i| self.distinct[i].norm().ln())
            .sum()
    }
}

/// All-pass filter whose zeros are `poles` (all outside the unit circle) and
/// whose poles are their mirror images `1/p*`.
pub fn blaschke_product(poles: &[Complex64]) -> Result<TransferFunction> {
    for p in poles {
        if (p.norm() - 1.0).abs() < UNIT_CIRCLE_TOL {
            return Err(Error::UnitCircleRoot { re: p.re, im: p.im });
        }
        if p.norm() < 1.0 {
            return Err(invalid(format!("Blaschke pole {p} lies inside the unit circle")));
        }
    }
    let mirrored: Vec<Complex64> = poles.iter().map(|p| p.conj().inv()).collect();
    let prod: Complex64 = poles.iter().map(|p| p.conj()).product();
    TransferFunction::new(poles.to_vec(), mirrored, 1.0 / prod.re)
}

/// Feedback loop of a strictly proper plant `P = N/D` and a channel/controller
/// `T = Gamma/Theta`, viewed from the reference `u` to the error `y`.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    /// `D`, the plant denominator. Its roots include the unstable plant poles.
    pub plant_den: Vec<f64>,
    /// `Theta`, the controller denominator.
    pub controller_den: Vec<f64>,
    /// `Theta*D + N*Gamma`.
    pub characteristic: Vec<f64>,
    /// `Theta / (Theta*D + N*Gamma)`, stable.
    pub stable_factor: TransferFunction,
    /// `D` as an FIR filter.
    pub plant_factor: TransferFunction,
    /// `D*Theta / (Theta*D + N*Gamma)` after cancelling common roots.
    pub combined: TransferFunction,
}

pub fn closed_loop(plant: &TransferFunction, controller: &TransferFunction) -> Result<ClosedLoop> {
    if plant.relative_degree() != 1 || plant.gain() == 0.0 {
        return Err(Error::NotRelativeDegreeOne);
    }
    let d = plant.denominator().to_vec();
    let n = plant.numerator().to_vec();
    let theta = controller.denominator().to_vec();
    let gamma = if controller.gain() == 0.0 {
        vec![0.0]
    } else {
        if controller.relative_degree() != 0 {
            return Err(Error::NotBiproper);
        }
        controller.numerator().to_vec()
    };
    let characteristic = poly::add(&poly::mul(&theta, &d), &poly::mul(&n, &gamma));
    let max_modulus = poly::roots(&characteristic)
        .iter()
        .map(|r| r.norm())
        .fold(0.0, f64::max);
    if max_modulus >= 1.0 {
        return Err(Error::UnstableClosedLoop { max_modulus });
    }
    let stable_factor = TransferFunction::from_polynomials(&theta, &characteristic)?;
    let plant_factor = TransferFunction::from_polynomials(&d, &[1.0])?;
    let combined =
        TransferFunction::from_polynomials(&poly::mul(&d, &theta), &characteristic)?.cancel_common(1e-8);
    Ok(ClosedLoop {
        plant_den: d,
        controller_den: theta,
        characteristic,
        stable_factor,
        plant_factor,
        combined,
    })
}

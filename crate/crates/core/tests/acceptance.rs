//! Acceptance suite: one line per criterion with the measured value, the
//! wall time against its budget and PASS/FAIL. Exits non-zero on any FAIL.

use std::f64::consts::{FRAC_PI_4, PI};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use entropy_gain::experiments::{
    quantized_discrepancy, rdf_gap, run_disturbance, run_effective_gain, run_feedback_collapse, run_initial_state,
    run_input_disturbance, run_networked_mi, run_rdf_gap, run_spectrum, Abscissa, DisturbanceParams,
    EffectiveGainParams, ExperimentReport, FeedbackCollapseParams, InitialStateParams, NetworkedMiParams,
    RdfGapParams, Settings, SpectrumParams,
};
use entropy_gain::gaussian::{disturbance_gain, DisturbanceSpec, InputSpec, Placement};
use entropy_gain::lti::TransferFunction;
use entropy_gain::processes::{mc_disturbance_gain, McSettings, ProcessSpec};
use entropy_gain::toeplitz::{conv_matrix, effective_entropy_gain, svd_spectrum, tall_conv_matrix};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(bool, String), String>;

fn ms(ms: u64) -> Duration {
    Duration::from_millis(ms)
}

fn value_at(r: &ExperimentReport, n: usize) -> f64 {
    r.records
        .iter()
        .find(|x| x.n == Abscissa::Len(n))
        .map_or(f64::NAN, |x| x.value)
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Real root or conjugate pair with modulus drawn from `ranges`.
fn random_roots(rng: &mut ChaCha8Rng, count: usize, ranges: &[(f64, f64)]) -> Vec<Complex64> {
    let mut v = Vec::with_capacity(count);
    while v.len() < count {
        let (lo, hi) = ranges[rng.random_range(0..ranges.len())];
        let r = rng.random_range(lo..hi);
        if count - v.len() >= 2 && rng.random_bool(0.5) {
            let z = Complex64::from_polar(r, rng.random_range(0.1..PI - 0.1));
            v.push(z);
            v.push(z.conj());
        } else {
            v.push(Complex64::new(if rng.random_bool(0.5) { r } else { -r }, 0.0));
        }
    }
    v
}

fn random_biproper(rng: &mut ChaCha8Rng) -> TransferFunction {
    let d = rng.random_range(1..=5);
    let zeros = random_roots(rng, d, &[(0.2, 0.9), (1.1, 3.0)]);
    let poles = random_roots(rng, d, &[(0.2, 0.9)]);
    TransferFunction::new(zeros, poles, 1.0).expect("valid random filter")
}

fn nmp_sum(tf: &TransferFunction) -> f64 {
    tf.zeros().iter().filter(|z| z.norm() > 1.0).map(|z| z.norm().ln()).sum()
}

fn zeros_filter(zeros: &[f64]) -> TransferFunction {
    TransferFunction::from_real(zeros, &vec![0.0; zeros.len()], 1.0).expect("valid FIR")
}

fn lower_toeplitz(h: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| if i >= j { h.get(i - j).copied().unwrap_or(0.0) } else { 0.0 })
}

/// `ln det(M M^T)` through the QR factor of `M^T`.
fn gram_logdet(m: &DMatrix<f64>) -> f64 {
    let r = m.transpose().qr().r();
    2.0 * r.diagonal().iter().map(|d| d.abs().ln()).sum::<f64>()
}

fn c1_svd_exemplar() -> Check {
    let cm = conv_matrix(&[1.0, 2.0], 3).map_err(err)?;
    let s = svd_spectrum(&cm, false).map_err(err)?;
    let want = [0.19394, 1.90321, 2.70928];
    let worst = s.values.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok((worst <= 1e-4, format!("values {:.5?}, max error {worst:.1e}", s.values)))
}

fn c2_jensen_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a656e73);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let tf = random_biproper(&mut rng);
        let q = tf.jensen_log_integral(1 << 16).map_err(err)?;
        worst = worst.max((q.nats - nmp_sum(&tf)).abs());
    }
    Ok((worst <= 1e-6, format!("20 filters, max error {worst:.2e}")))
}

fn c3_decay() -> Check {
    let out = run_spectrum(&SpectrumParams::default(), &Settings::default()).map_err(err)?;
    let rest = out.fit.slopes[out.fit.m..].iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let target = -(1.5f64.ln());
    let rel = (out.fit.slopes[0] - target).abs() / target.abs();
    Ok((
        rel <= 0.01 && rest <= 0.04,
        format!("slope {:.5} vs {target:.5} ({:.2}%), other slopes within {rest:.4}", out.fit.slopes[0], 100.0 * rel),
    ))
}

fn c4_full_disturbance() -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for zeros in [vec![-1.5], vec![-1.5, -1.25]] {
        let k = zeros.len();
        let p = DisturbanceParams {
            filter: zeros_filter(&zeros),
            seed_covariance: (0..k).map(|i| (0..k).map(|j| if i == j { 1e-4 } else { 0.0 }).collect()).collect(),
            ..DisturbanceParams::default()
        };
        let r = run_disturbance(&p, &Settings::default()).map_err(err)?;
        let pass = r.pass && r.tolerance <= 0.02;
        ok &= pass;
        parts.push(format!("{:?}: limit {:.4} target {:.4}", zeros, r.limit.value, r.target));
    }
    Ok((ok, parts.join("; ")))
}

fn c5_bounds() -> Check {
    let filter = zeros_filter(&[-1.5, -1.25]);
    let upper = 1.5f64.ln();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for seed in 0..30 {
        let p = DisturbanceParams {
            filter: filter.clone(),
            placement: Placement::RandomOrthonormal,
            ..DisturbanceParams::default()
        };
        let r = run_disturbance(&p, &Settings::with_seed(seed)).map_err(err)?;
        for x in &r.records {
            lo = lo.min(x.value);
            hi = hi.max(x.value);
        }
    }
    let aligned = DisturbanceParams {
        filter,
        ..DisturbanceParams::default()
    };
    let a = run_disturbance(&aligned, &Settings::default()).map_err(err)?;
    let ok = lo >= -0.005 && hi <= upper + 0.02 && (a.limit.value - upper).abs() <= 0.05;
    Ok((
        ok,
        format!(
            "30 random bases span [{lo:.4}, {hi:.4}] within [-0.005, {:.4}]; aligned limit {:.4} vs {upper:.4}",
            upper + 0.02,
            a.limit.value
        ),
    ))
}

fn c6_no_gain() -> Check {
    let worst = |r: &ExperimentReport| {
        r.records
            .iter()
            .map(|x| x.value.abs() * x.n.as_f64() / 5.0)
            .fold(0.0, f64::max)
    };
    let (mut a, mut b) = (0.0f64, 0.0f64);
    for var in [1e-4, 1.0] {
        let base = DisturbanceParams {
            seed_covariance: vec![vec![var]],
            ..DisturbanceParams::default()
        };
        a = a.max(worst(&run_input_disturbance(&base, &Settings::default()).map_err(err)?));
        let mp = DisturbanceParams {
            filter: TransferFunction::fir(&[1.0, 0.5]).map_err(err)?,
            ..base
        };
        b = b.max(worst(&run_disturbance(&mp, &Settings::default()).map_err(err)?));
    }
    Ok((
        a <= 1.0 && b <= 1.0,
        format!("max |gain| n / 5: input disturbance {a:.3}, minimum-phase filter {b:.3}"),
    ))
}

fn c7_initial_state() -> Check {
    let full = run_initial_state(&InitialStateParams::default(), &Settings::default()).map_err(err)?;
    let partial = InitialStateParams {
        filter: zeros_filter(&[-1.5, -1.25]),
        x0_factor: Some(vec![vec![1.0], vec![0.0]]),
        ..InitialStateParams::default()
    };
    let partial = run_initial_state(&partial, &Settings::default()).map_err(err)?;
    let bound = 1.5f64.ln() + 0.02;
    let ok = full.pass
        && (full.limit.value - full.target).abs() <= 0.02
        && partial.limit.value <= bound;
    Ok((
        ok,
        format!(
            "full rank {:.4} vs {:.4}; rank one {:.4} <= {bound:.4}",
            full.limit.value, full.target, partial.limit.value
        ),
    ))
}

fn c8_effective_gain() -> Check {
    let r = run_effective_gain(&EffectiveGainParams::default(), &Settings::default()).map_err(err)?;
    let at500 = value_at(&r, 500);
    let tf = TransferFunction::fir(&[1.0, 2.0]).map_err(err)?;
    let mut worst = 0.0f64;
    for n in 1..=20 {
        let got = effective_entropy_gain(&tf, n).map_err(err)?;
        // The Gram matrix is tridiagonal Toeplitz (5, 2) with determinant (4^(n+1) - 1) / 3.
        let closed = 0.5 * ((4f64.powi(n as i32 + 1) - 1.0) / 3.0).ln();
        let g = lower_toeplitz(&[1.0, 2.0], n + 1, n);
        let dense = 0.5 * gram_logdet(&g.transpose());
        worst = worst.max((got - closed).abs()).max((got - dense).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x6773);
    for _ in 0..10 {
        let taps: Vec<f64> = std::iter::once(1.0)
            .chain((0..rng.random_range(1..4)).map(|_| rng.random_range(-2.0..2.0)))
            .collect();
        let tf = TransferFunction::fir(&taps).map_err(err)?;
        for n in [3, 11, 20] {
            let got = effective_entropy_gain(&tf, n).map_err(err)?;
            let g = tall_conv_matrix(&taps, n).map_err(err)?.matrix;
            let gram = g.transpose() * &g;
            let chol = gram.cholesky().ok_or("gram not positive definite")?;
            let dense = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            worst = worst.max((got - dense).abs());
        }
    }
    let gap = (at500 - 2f64.ln()).abs();
    Ok((
        gap <= 0.01 && worst <= 1e-8,
        format!("n=500 value {at500:.5} (gap {gap:.1e}); dense oracle max error {worst:.1e}"),
    ))
}

fn c9_rdf() -> Check {
    let r = run_rdf_gap(&RdfGapParams::default(), &Settings::default()).map_err(err)?;
    let at60 = value_at(&r, 60);
    let stable = rdf_gap(&[Complex64::new(1.0 / 1.3, 0.0)], 0.2, None, 60).map_err(err)?;
    let gap = (at60 - 1.3f64.ln()).abs();
    Ok((
        gap <= 0.05 && stable.abs() <= 0.01,
        format!("n=60 gap {at60:.4} vs {:.4}; stable control {stable:.1e}", 1.3f64.ln()),
    ))
}

fn c10_networked() -> Check {
    let r = run_networked_mi(&NetworkedMiParams::default(), &Settings::default()).map_err(err)?;
    let v = value_at(&r, 300);
    Ok(((v - 2f64.ln()).abs() <= 0.05, format!("n=300 rate {v:.4} vs {:.4}", 2f64.ln())))
}

fn c11_collapse() -> Check {
    let r = run_feedback_collapse(&FeedbackCollapseParams::default(), &Settings::default()).map_err(err)?;
    let d = value_at(&r.disturbed, 300);
    let ok = (r.clean.limit.value - r.clean.target).abs() <= 0.05 && d <= 0.05;
    Ok((
        ok,
        format!(
            "clean limit {:.4} vs {:.4}; disturbed n=300 rate {d:.4}",
            r.clean.limit.value, r.clean.target
        ),
    ))
}

fn c12_quantized() -> Check {
    let v = quantized_discrepancy(FRAC_PI_4, 1e-4).map_err(err)?;
    let gap = (v - 0.5 * 2f64.ln()).abs();
    Ok((gap <= 1e-3, format!("discrepancy {v:.5}, gap {gap:.1e}")))
}

/// Trials for the nearest-neighbour check on a single core.
const MC_TRIALS: usize = 20_000;

fn c13_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x70726f70);
    let mut parts = Vec::new();
    let mut ok = true;

    // Log-determinant of square maps with unit leading coefficient.
    let mut det_worst = 0.0f64;
    for _ in 0..30 {
        let tf = random_biproper(&mut rng);
        let top = tf.zeros().iter().map(|z| z.norm()).fold(1.0, f64::max);
        let n_max = ((1e6f64.ln() / top.ln()).floor() as usize).clamp(2, 40);
        let n = rng.random_range(2..=n_max);
        let s = svd_spectrum(&conv_matrix(&tf.impulse_response(n).samples, n).map_err(err)?, false).map_err(err)?;
        det_worst = det_worst.max(s.log_sum().abs() / n as f64);
    }
    ok &= det_worst <= 1e-8;
    parts.push(format!("det {det_worst:.1e}"));

    // Low-rank identity against dense generator log-determinants.
    let mut id_worst = 0.0f64;
    for _ in 0..50 {
        let tf = random_biproper(&mut rng);
        let n = rng.random_range(2..=12);
        let kappa = rng.random_range(1..=3usize).min(n);
        let var = rng.random_range(0.5..2.0);
        let ks = DMatrix::from_diagonal_element(kappa, kappa, rng.random_range(1e-4..1.0));
        let d = DisturbanceSpec::random_orthonormal(n, ks.clone(), &mut rng).map_err(err)?;
        let got = disturbance_gain(&tf, &InputSpec::iid(var), &d, n).map_err(err)?.nats_per_sample;
        let mut m = DMatrix::zeros(n, n + kappa);
        m.view_mut((0, 0), (n, n))
            .copy_from(&(lower_toeplitz(&tf.impulse_response(n).samples, n, n) * var.sqrt()));
        m.view_mut((0, n), (n, kappa)).copy_from(&(d.basis() * ks.map(f64::sqrt)));
        let dense = 0.5 * (gram_logdet(&m) - n as f64 * var.ln()) / n as f64;
        id_worst = id_worst.max((got - dense).abs());
    }
    ok &= id_worst <= 1e-8;
    parts.push(format!("identity {id_worst:.1e}"));

    // Uniform input versus the Gaussian closed form.
    let n = 12;
    let tf = TransferFunction::fir(&[1.0, -1.5]).map_err(err)?;
    let half = 3f64.sqrt();
    let uniform = ProcessSpec::UniformIid { low: -half, high: half };
    let dist = ProcessSpec::GaussianIid { variance: 1.0 };
    let mut phi = DMatrix::zeros(n, 1);
    phi[(0, 0)] = 1.0;
    let mc = McSettings {
        trials: MC_TRIALS,
        seed: 11,
        ..McSettings::default()
    };
    let est = mc_disturbance_gain(&tf, &uniform, &dist, &phi, &mc).map_err(err)?;
    let spec = DisturbanceSpec::first_coordinates(n, DMatrix::from_element(1, 1, 1.0)).map_err(err)?;
    let closed = disturbance_gain(&tf, &InputSpec::iid(1.0), &spec, n).map_err(err)?.nats_per_sample;
    let mc_gap = (est.nats - closed).abs();
    ok &= mc_gap <= 0.1;
    parts.push(format!("uniform {:.4} vs gaussian {closed:.4}", est.nats));

    // Byte-identical reports from identical seeds.
    let p = DisturbanceParams {
        placement: Placement::RandomOrthonormal,
        ..DisturbanceParams::default()
    };
    let s = Settings {
        seed: 42,
        n_grid: Some(vec![20, 50, 100]),
        tolerance: None,
    };
    let a = serde_json::to_vec(&run_disturbance(&p, &s).map_err(err)?).map_err(err)?;
    let b = serde_json::to_vec(&run_disturbance(&p, &s).map_err(err)?).map_err(err)?;
    let mc2 = mc_disturbance_gain(&tf, &uniform, &dist, &phi, &mc).map_err(err)?;
    let same = a == b && mc2.nats.to_bits() == est.nats.to_bits();
    ok &= same;
    parts.push(format!("reproducible {same}"));

    Ok((ok, parts.join("; ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Check); 13] = [
        ("svd exemplar", ms(1), c1_svd_exemplar),
        ("log-integral suite", ms(1_000), c2_jensen_suite),
        ("smallest singular value decay", ms(5_000), c3_decay),
        ("full disturbance gain", ms(10_000), c4_full_disturbance),
        ("partial disturbance bounds", ms(30_000), c5_bounds),
        ("input disturbance and minimum phase", ms(5_000), c6_no_gain),
        ("initial-state gain", ms(10_000), c7_initial_state),
        ("effective gain", ms(10_000), c8_effective_gain),
        ("rate-distortion gap", ms(10_000), c9_rdf),
        ("networked initial-state information", ms(10_000), c10_networked),
        ("feedback rate collapse", ms(10_000), c11_collapse),
        ("quantized discrepancy", ms(1_000), c12_quantized),
        ("property suites", ms(60_000), c13_properties),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let (pass, detail) = match result {
            Ok((ok, d)) => (ok && took <= *budget, d),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {detail} [{:.3} s, budget {:.3} s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            took.as_secs_f64(),
            budget.as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

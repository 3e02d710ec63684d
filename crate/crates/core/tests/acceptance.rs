//! Acceptance suite: one PASS/FAIL line per criterion with the measured
//! quantities and the wall time against its budget. Runs without the libtest
//! harness so the lines appear in order; exits non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use microlocal::counterexample::{build_solution, residual_check, smoothness_probe, CounterexampleSpec, SmoothnessVerdict};
use microlocal::deformation::{deform_weight, verify_monotone, DeformOptions, DeformationGenerator, DomainSpec, WeightFunction};
use microlocal::estimates::{discretize, packet_battery, perturbed_survival, Periodization, Profile, TorusGrid, Verdict};
use microlocal::fbi::{
    fbi_transform, fbi_transform_fn, geometric_ladder, normalized_magnitude, Axis, ComplexGrid, SampledFunction,
    TransformOptions,
};
use microlocal::gevrey::{fit_decay, fit_gevrey_order};
use microlocal::pipeline::{run, Overrides, Pipeline, RunConfig};
use microlocal::realization::{coherent_battery, elliptic_lower_bound, identity_defect, RealSymbol, RealizationOp};
use microlocal::spectral::{anharmonic_eigs, SpectralOptions};
use microlocal::symbolic::{compute_nu, poisson_bracket, rational, Nu, PolySymbol, VectorFieldSystem};
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::Zero;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- oracles

/// Smallest number of leaves of any bracket tree over the fields that is
/// nonzero at `point`.
fn exhaustive_nu(sys: &VectorFieldSystem, point: &[BigRational], max_len: usize) -> Option<usize> {
    let mut memo: Vec<Vec<PolySymbol>> = vec![Vec::new(), sys.fields().to_vec()];
    if memo[1].iter().any(|p| !p.eval(point).is_zero()) {
        return Some(1);
    }
    for m in 2..=max_len {
        let mut level = Vec::new();
        for left in 1..m {
            for a in &memo[left] {
                for b in &memo[m - left] {
                    let c = poisson_bracket(a, b).expect("same dimension");
                    if !c.is_zero() {
                        level.push(c);
                    }
                }
            }
        }
        if level.iter().any(|p| !p.eval(point).is_zero()) {
            return Some(m);
        }
        memo.push(level);
    }
    None
}

/// `e^{−λΦ₀(x)}·√(2π/(λ+1))·exp(−λx²/(2(λ+1)))`, the transform of `e^{−y²/2}`.
fn gaussian_reduced(x: Complex64, lambda: f64) -> Complex64 {
    let log = 0.5 * (2.0 * std::f64::consts::PI / (lambda + 1.0)).ln() - lambda * x * x / (2.0 * (lambda + 1.0))
        - 0.5 * lambda * x.im * x.im;
    log.exp()
}

/// RK4 shooting for `φ″ = (x^p − E)φ` from the origin.
fn shoot(p: i32, e: f64, x_end: f64, steps: usize) -> f64 {
    let h = x_end / steps as f64;
    let (mut y, mut dy) = (1.0, 0.0);
    let f = |x: f64, y: f64| (x.powi(p) - e) * y;
    for i in 0..steps {
        let x = i as f64 * h;
        let k1 = (dy, f(x, y));
        let k2 = (dy + 0.5 * h * k1.1, f(x + 0.5 * h, y + 0.5 * h * k1.0));
        let k3 = (dy + 0.5 * h * k2.1, f(x + 0.5 * h, y + 0.5 * h * k2.0));
        let k4 = (dy + h * k3.1, f(x + h, y + h * k3.0));
        y += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        dy += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    }
    y
}

/// Even ground state of `−φ″ + x⁴φ` by bisection on the tail sign.
fn shooting_quartic_ground_state() -> f64 {
    let (mut lo, mut hi) = (0.5, 2.0);
    let s_lo = shoot(4, lo, 4.5, 20_000).signum();
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if shoot(4, mid, 4.5, 20_000).signum() == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>()
}

// ---------------------------------------------------------------- criteria

fn bracket_order() -> Outcome {
    let point: Vec<BigRational> = [0, 0, 0, 1].iter().map(|&v| rational(v)).collect();
    let mut parts = Vec::new();
    let mut pass = true;
    for k in 2..=5u32 {
        let start = Instant::now();
        let sys = VectorFieldSystem::grushin(k);
        let got = compute_nu(&sys, &point, 6).expect("bracket search").nu;
        let oracle = exhaustive_nu(&sys, &point, 6);
        let secs = start.elapsed().as_secs_f64();
        let ok = got == Nu::Finite(k as usize) && oracle == Some(k as usize) && secs < 5.0;
        pass &= ok;
        parts.push(format!("k={k}: ν={got:?} oracle={oracle:?} {secs:.2}s"));
    }
    outcome(pass, parts.join("; "))
}

fn fbi_closed_form() -> Outcome {
    // 10 real parts × 5 imaginary parts. Off the real axis the reduced value is
    // e^{−λ(Im x)²/2} times the integrand scale, so relative accuracy there is
    // limited by cancellation; |Im x| ≤ 0.05 keeps λ(Im x)²/2 ≤ 5.2 at λ = 4096.
    let grid = ComplexGrid::one_dim(Axis::span(-2.0, 2.0, 10).unwrap(), Axis::span(-0.05, 0.05, 5).unwrap()).unwrap();
    let lambdas = geometric_ladder(4.0, 4096.0, 16);
    let f = match fbi_transform_fn(
        |y| Complex64::new((-0.5 * y[0] * y[0]).exp(), 0.0),
        &[(-12.0, 12.0)],
        &grid,
        &lambdas,
        TransformOptions::default(),
    ) {
        Ok(f) => f,
        Err(e) => return outcome(false, format!("transform failed: {e}")),
    };
    let mut worst = 0.0f64;
    for p in 0..grid.len() {
        let x = grid.point(p)[0];
        for (l, &lam) in lambdas.iter().enumerate() {
            let want = gaussian_reduced(x, lam);
            worst = worst.max((f.reduced(p, l) - want).norm() / want.norm());
        }
    }
    outcome(worst <= 1e-8, format!("{} probe points x {} lambdas in [4, 4096]: max relative error {worst:.2e}", grid.len(), lambdas.len()))
}

fn gevrey_calibration() -> Outcome {
    let lambdas = geometric_ladder(4.0, 4096.0, 16);
    let mut parts = Vec::new();
    let mut pass = true;
    for s in [1.0, 1.5, 2.0, 3.0] {
        let m: Vec<f64> = lambdas.iter().map(|l| (-l.powf(1.0 / s)).exp()).collect();
        match fit_decay(&lambdas, &m).map(|f| f.s_hat) {
            Ok(Some(sh)) => {
                let ok = (sh - s).abs() <= 0.05 * s;
                pass &= ok;
                parts.push(format!("s={s}: ŝ={sh:.4}"));
            }
            other => {
                pass = false;
                parts.push(format!("s={s}: {other:?}"));
            }
        }
    }
    let axis = Axis::span(-1.0, 1.0, 2 * 4096 + 1).unwrap();
    let u = SampledFunction::delta_1d(axis, 0.0).unwrap();
    let grid = ComplexGrid::one_dim(Axis::span(-0.5, 0.5, 3).unwrap(), Axis::span(-1.0, 0.0, 3).unwrap()).unwrap();
    let f = fbi_transform(&u, &grid, &lambdas).unwrap();
    let m = normalized_magnitude(&f);
    let mut fibre_ok = true;
    for p in (0..grid.len()).filter(|&p| grid.point(p)[0].re == 0.0) {
        let fit = fit_gevrey_order(&f, p).unwrap();
        fibre_ok &= fit.s_hat.is_none() && m[p * 16..(p + 1) * 16].iter().all(|&v| (v - 1.0).abs() < 1e-12);
    }
    pass &= fibre_ok;
    parts.push(format!("delta at x'=0: {}", if fibre_ok { "no decay" } else { "decay reported" }));
    outcome(pass, parts.join("; "))
}

fn spectrum() -> Outcome {
    let harmonic = anharmonic_eigs(2, 6, SpectralOptions::default()).unwrap();
    let worst = harmonic
        .iter()
        .enumerate()
        .map(|(n, e)| (e.energy - (2 * n + 1) as f64).abs())
        .fold(0.0, f64::max);
    let quartic = anharmonic_eigs(3, 1, SpectralOptions::default()).unwrap()[0].energy;
    let oracle = shooting_quartic_ground_state();
    let gap = (quartic - oracle).abs();
    outcome(
        worst <= 1e-6 && gap <= 1e-3,
        format!("harmonic n≤5 max |E−(2n+1)| = {worst:.2e}; quartic E₀ = {quartic:.8} vs shooting {oracle:.8} (gap {gap:.1e})"),
    )
}

fn counterexample() -> Outcome {
    let e = anharmonic_eigs(2, 1, SpectralOptions::default()).unwrap().remove(0);
    let spec = CounterexampleSpec::default();
    let cx = build_solution(&spec, &e).unwrap();
    let r = residual_check(&cx.u, &spec, &e).unwrap();
    let coarse = CounterexampleSpec { n1: 41, ..spec.clone() };
    let r_coarse = residual_check(&build_solution(&coarse, &e).unwrap().u, &coarse, &e).unwrap();
    let fine = coarse.refined();
    let r_fine = residual_check(&build_solution(&fine, &e).unwrap().u, &fine, &e).unwrap();
    let probe = smoothness_probe(&cx.u, 0).unwrap();
    let exponent = probe.exponent.unwrap_or(f64::NAN);
    let pass = r <= 1e-4 && r_fine < r_coarse && probe.verdict == SmoothnessVerdict::Finite && (exponent + 4.0).abs() <= 0.3;
    outcome(
        pass,
        format!("residual {r:.2e}; refinement {r_coarse:.2e} -> {r_fine:.2e}; tail exponent {exponent:.3}"),
    )
}

fn threshold_sharpness() -> Outcome {
    let grid = TorusGrid::new([1024, 64], [2.0 * std::f64::consts::PI, 2.0 * std::f64::consts::PI / 256.0]).unwrap();
    let op = discretize(&VectorFieldSystem::grushin(2), grid, [Periodization::Sin, Periodization::Identity], [0, 1]).unwrap();
    let e0 = anharmonic_eigs(2, 1, SpectralOptions::default()).unwrap().remove(0);
    let energy = e0.energy;
    let modes = [1, 2, 4, 8, 16];
    let eigen = packet_battery(&grid, &Profile::Eigen(e0), 2.0, &modes).unwrap();
    let gauss = packet_battery(&grid, &Profile::Gaussian, 2.0, &modes).unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for theta in [0.25, 0.5, 0.75] {
        for c in [1.0, -1.0] {
            for battery in [&eigen, &gauss] {
                let r = perturbed_survival(&op, theta, c, battery, None).unwrap();
                pass &= r.verdict == Verdict::Bounded;
                if battery.descriptor.starts_with("eigen") {
                    parts.push(format!("θ={theta} c={c:+}: slope {:.3}", r.slope));
                }
            }
        }
    }
    let r = perturbed_survival(&op, 1.0, -1.0, &eigen, Some(energy)).unwrap();
    let collapse = r.relative_collapse();
    let failing = matches!(r.verdict, Verdict::Growing { .. }) && collapse < 1e-2;
    pass &= failing;
    parts.push(format!(
        "θ=1 c=−1: {:?}, |⟨(P+Q)u,u⟩|/⟨Pu,u⟩ ≤ {collapse:.1e}",
        r.verdict
    ));
    outcome(pass, parts.join("; "))
}

fn deformation_laws() -> Outcome {
    let axis = Axis::span(-2.0, 2.0, 41).unwrap();
    let grid = ComplexGrid::one_dim(axis, axis).unwrap();
    let base = WeightFunction::phi0(&grid).unwrap();
    let gen = DeformationGenerator::quadratic((0.0, 0.0), 2);
    let dom = DomainSpec::boxes(&grid, Complex64::new(0.0, 0.0), 1.5, 0.5).unwrap();
    let lambda = 4.0;
    let d = deform_weight(&base, &gen, 0.1, lambda, DeformOptions::default()).unwrap();
    let mono = verify_monotone(&d, &dom).unwrap();
    let ratio = mono.c_ratio.unwrap_or(f64::NAN);

    let shifted = DeformationGenerator::quadratic((0.2, -0.3), 2);
    let mut errs = Vec::new();
    for t in [0.0125, 0.025, 0.05, 0.1] {
        let d = deform_weight(&base, &shifted, t, 16.0, DeformOptions::default()).unwrap();
        let err = (0..grid.len())
            .map(|p| (d.weight.values()[p] - base.values()[p] - 0.5 * t * d.h_base[p]).abs())
            .fold(0.0, f64::max);
        errs.push((t, err));
    }
    let slope = log_log_slope(&errs);
    let pass = mono.min_gap >= -1e-9 && slope >= 1.9 && (ratio - 1.0).abs() <= 0.2;
    outcome(
        pass,
        format!(
            "min gap {:.1e}; first-order error slope {slope:.3}; c′/(½ min h) = {ratio:.4}",
            mono.min_gap
        ),
    )
}

fn realization_properties() -> Outcome {
    let ladder = [2.0, 20.0, 200.0, 2000.0];
    let op = RealizationOp::standard(RealSymbol::identity(), 0.0, 0.5, 0.25, 2000.0, 0.5).unwrap();
    let centers = coherent_battery(&op, 20).unwrap();
    let r = identity_defect(&op, &centers, &ladder, 64.0).unwrap();
    let worst: Vec<String> = r.per_lambda.iter().map(|d| format!("{:.1e}", d.worst_ratio)).collect();
    let trustworthy = r.per_lambda.iter().all(|d| d.amplification * f64::EPSILON < 1e-9);
    let uniform = centers.len() == 20 && r.c_prime.is_finite() && r.growth_slope <= 0.0 && trustworthy;

    let ell_ladder = [256.0, 512.0, 1024.0];
    let one = RealizationOp::standard(RealSymbol::identity(), 0.0, 0.5, 0.25, 1024.0, 0.5).unwrap();
    let ell_centers = coherent_battery(&one, 9).unwrap();
    let e = elliptic_lower_bound(&one, 1.0, &ell_centers, &ell_ladder, 8.0).unwrap();
    let elliptic = e.per_lambda.iter().all(|row| row.worst_ratio >= 0.5 * e.c0);
    outcome(
        uniform && elliptic,
        format!(
            "identity defect over λ 2..2000 on 20 states: [{}], C′ = {:.2}, slope {:.2}; q≡1 measured C = {:.4} at λ ∈ [256, 1024] (c₀ = 1)",
            worst.join(", "),
            r.c_prime,
            r.growth_slope,
            e.measured_c
        ),
    )
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let configs: [(Pipeline, &str); 8] = [
        (Pipeline::Nu, "grushin_k = 4"),
        (Pipeline::Fbi, "function = \"gaussian\"\nlambdas = [4, 1024, 6]"),
        (Pipeline::Gevrey, "function = \"delta\"\nlambdas = [4, 1024, 8]"),
        (Pipeline::Eig, "k = 3\ncount = 4"),
        (Pipeline::Counterexample, "k = 2"),
        (Pipeline::Deform, "generator = \"xi1^2\"\nt = 0.05"),
        (Pipeline::Realize, "lambdas = [2, 20, 200]\ncenters = 9"),
        (Pipeline::Estimate, "modes = [1, 2, 4]\ntheta = 0.5\ncoupling = 1"),
    ];
    let mut mismatched = Vec::new();
    let mut files = 0;
    for (pipeline, text) in configs {
        let mut hashes = Vec::new();
        for (run_id, threads) in [(0, 1), (1, 2)] {
            let ov = Overrides {
                output: Some(tmp.path().join(format!("{pipeline}-{run_id}"))),
                seed: Some(17),
                threads: Some(threads),
            };
            let cfg = RunConfig::parse(Some(pipeline), text, Path::new("."), &ov).unwrap();
            match run(&cfg) {
                Ok(o) => hashes.push(o.manifest.outputs),
                Err(e) => return outcome(false, format!("{pipeline} failed: {e}")),
            }
        }
        let dirs = [0, 1].map(|i| tmp.path().join(format!("{pipeline}-{i}")));
        let bytes_equal = hashes[0]
            .iter()
            .all(|f| fs::read(dirs[0].join(&f.path)).ok() == fs::read(dirs[1].join(&f.path)).ok());
        if hashes[0] != hashes[1] || !bytes_equal {
            mismatched.push(pipeline.name());
        }
        files += hashes[0].len();
    }
    outcome(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("8 pipelines rerun with seed 17 on 1 and 2 threads: {files} output files byte-identical")
        } else {
            format!("outputs differ for {mismatched:?}")
        },
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("bracket order", bracket_order, Duration::from_secs(20)),
        ("FBI closed form", fbi_closed_form, Duration::from_secs(30)),
        ("Gevrey calibration", gevrey_calibration, Duration::from_secs(10)),
        ("spectrum", spectrum, Duration::from_secs(60)),
        ("counterexample", counterexample, Duration::from_secs(300)),
        ("threshold sharpness", threshold_sharpness, Duration::from_secs(600)),
        ("deformation laws", deformation_laws, Duration::from_secs(120)),
        ("realization properties", realization_properties, Duration::from_secs(600)),
        ("determinism", determinism, Duration::from_secs(600)),
    ];
    // `cargo test -- --list` and friends expect no work.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let pass = result.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} [{}] {name}: {} ({:.1}s of {}s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

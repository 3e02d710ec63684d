use microlocal::deformation::{
    deform_snapshots, deform_weight, verify_monotone, DeformOptions, DeformationGenerator,
    DomainSpec, WeightFunction,
};
use microlocal::fbi::{Axis, ComplexGrid};
use microlocal::symbolic::parse_symbol;
use num_complex::Complex64;
use proptest::prelude::*;

fn grid(n: usize) -> ComplexGrid {
    let a = Axis::span(-2.0, 2.0, n).unwrap();
    ComplexGrid::one_dim(a, a).unwrap()
}

/// Closed form of the quadratic flow: `Φₜ = Φ₀ + ¼(e^{2ct} − 1)·H₁` with
/// `H₁ = (x′ − y₀)² + (x″ + η₀)²`.
fn exact_quadratic(g: &ComplexGrid, center: (f64, f64), c: f64, t: f64) -> Vec<f64> {
    let a = 0.25 * ((2.0 * c * t).exp() - 1.0);
    (0..g.len())
        .map(|p| {
            let x = g.point(p)[0];
            0.5 * x.im * x.im + a * ((x.re - center.0).powi(2) + (x.im + center.1).powi(2))
        })
        .collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn quadratic_flow_matches_closed_form() {
    let g = grid(41);
    let base = WeightFunction::phi0(&g).unwrap();
    let center = (0.2, -0.3);
    let gen = DeformationGenerator::quadratic(center, 2);
    let lambda: f64 = 16.0;
    let c = lambda.powf(-0.5);
    let d = deform_weight(&base, &gen, 0.2, lambda, DeformOptions::default()).unwrap();
    let exact = exact_quadratic(&g, center, c, 0.2);
    let err = max_diff(d.weight.values(), &exact);
    assert!(err < 1e-4, "error {err}");
    assert!(d.max_rel_imag < 1e-10, "h should stay real: {}", d.max_rel_imag);
    let series = d.series.as_ref().unwrap();
    // The series is exact through t², so it misses O(c³t³).
    assert!(max_diff(series, &exact) < 10.0 * (c * 0.2f64).powi(3));
}

#[test]
fn first_order_law_at_small_time() {
    let g = grid(21);
    let base = WeightFunction::phi0(&g).unwrap();
    let gen = DeformationGenerator::quadratic((0.0, 0.5), 3);
    let lambda = 8.0;
    let t = 1e-3;
    let d = deform_weight(&base, &gen, t, lambda, DeformOptions::default()).unwrap();
    for p in 0..g.len() {
        let rate = (d.weight.values()[p] - base.values()[p]) / t;
        let half_h = 0.5 * gen.on_base(g.point(p)[0], lambda);
        assert!((rate - half_h).abs() <= 1e-2 * (1.0 + half_h), "p={p}: {rate} vs {half_h}");
    }
}

#[test]
fn time_step_refinement_is_first_order() {
    let g = grid(21);
    let base = WeightFunction::phi0(&g).unwrap();
    let center = (0.3, 0.1);
    let gen = DeformationGenerator::quadratic(center, 1);
    let exact = exact_quadratic(&g, center, 1.0, 0.25);
    let mut errs = Vec::new();
    for steps in [50, 100, 200, 400] {
        let opts = DeformOptions {
            cfl: 1e9,
            min_steps: steps,
            t_max: 0.25,
        };
        let d = deform_weight(&base, &gen, 0.25, 1.0, opts).unwrap();
        assert_eq!(d.steps, steps);
        errs.push(max_diff(d.weight.values(), &exact));
    }
    let xs: Vec<f64> = [50f64, 100.0, 200.0, 400.0].iter().map(|s| (0.25 / s).ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!(slope >= 0.9, "slope {slope}, errors {errs:?}");
}

#[test]
fn user_symbol_eta_squared_matches_burgers_solution() {
    let g = grid(41);
    let base = WeightFunction::phi0(&g).unwrap();
    let gen = DeformationGenerator::polynomial(parse_symbol("xi1^2", Some(1)).unwrap(), None).unwrap();
    let t = 0.2;
    let d = deform_weight(&base, &gen, t, 1.0, DeformOptions::default()).unwrap();
    let exact: Vec<f64> = (0..g.len())
        .map(|p| {
            let x = g.point(p)[0];
            x.im * x.im / (2.0 * (1.0 - t))
        })
        .collect();
    let err = max_diff(d.weight.values(), &exact);
    assert!(err < 1e-3, "error {err}");
}

#[test]
fn monotone_with_annulus_growth() {
    let g = grid(41);
    let base = WeightFunction::phi0(&g).unwrap();
    let gen = DeformationGenerator::quadratic((0.0, 0.0), 2);
    let d = deform_weight(&base, &gen, 0.1, 4.0, DeformOptions::default()).unwrap();
    let dom = DomainSpec::boxes(&g, Complex64::new(0.0, 0.0), 1.5, 0.5).unwrap();
    let r = verify_monotone(&d, &dom).unwrap();
    assert!(r.min_gap >= -1e-9);
    let ratio = r.c_ratio.unwrap();
    assert!(r.c_prime.unwrap() > 0.0);
    assert!((ratio - 1.0).abs() <= 0.2, "c′ ratio {ratio}");
    // Euler steps against a trapezoid integral: first order in dt.
    let bound = d.dt * d.h_base.iter().fold(0.0f64, |m, h| m.max(h.abs()));
    assert!(r.integral_residual <= bound, "integral residual {} > {bound}", r.integral_residual);

    let zero = DeformationGenerator::polynomial(parse_symbol("0", Some(1)).unwrap(), None).unwrap();
    let d0 = deform_weight(&base, &zero, 0.1, 4.0, DeformOptions::default()).unwrap();
    let r0 = verify_monotone(&d0, &dom).unwrap();
    assert_eq!(r0.min_gap, 0.0);
    assert_eq!(r0.c_prime, Some(0.0));
}

#[test]
fn quartic_generator_blows_up_in_finite_time() {
    // Grids of 17, 33 and 65 points all lose the solution near t ≈ 0.055.
    let g = grid(33);
    let base = WeightFunction::phi0(&g).unwrap();
    let gen = DeformationGenerator::polynomial(parse_symbol("xi1^2 + 52/100*x1^4", Some(1)).unwrap(), Some(1)).unwrap();
    assert!(deform_weight(&base, &gen, 0.05, 1.0, DeformOptions::default()).is_ok());
    assert!(matches!(
        deform_weight(&base, &gen, 0.1, 1.0, DeformOptions::default()),
        Err(microlocal::deformation::DeformError::Unstable { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn nonnegative_generators_raise_weights_monotonically(
        y0 in -1.0..1.0f64, e0 in -1.0..1.0f64, r in 1u32..4, lambda in 1.0..50.0f64,
        quartic in 0.0..0.2f64,
    ) {
        let g = grid(17);
        let base = WeightFunction::phi0(&g).unwrap();
        let gens = [
            DeformationGenerator::quadratic((y0, e0), r),
            DeformationGenerator::polynomial(
                parse_symbol(&format!("xi1^2 + {}/100*x1^4", (quartic * 100.0).round() as i64), Some(1)).unwrap(),
                Some(r),
            ).unwrap(),
        ];
        for gen in &gens {
            let snaps = deform_snapshots(&base, gen, &[0.0, 0.02, 0.05, 0.1], lambda, DeformOptions::default()).unwrap();
            prop_assert_eq!(snaps[0].weight.values(), base.values());
            for w in snaps.windows(2) {
                for (a, b) in w[0].weight.values().iter().zip(w[1].weight.values()) {
                    prop_assert!(b >= &(a - 1e-9));
                }
            }
        }
    }
}

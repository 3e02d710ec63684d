use microlocal::fbi::{
    fbi_transform, geometric_ladder, normalized_magnitude, phi_norm_sq, transform_at, Axis,
    ComplexGrid, FBIField, SampledFunction,
};
use microlocal::gevrey::{fit_decay, fit_gevrey_order, wf_mask};
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Reduced closed form `e^{−λΦ₀(x)}Tu(x, λ)` for `u = e^{−y²/2}`.
fn gaussian_reduced(x: Complex64, lambda: f64) -> Complex64 {
    let log = 0.5 * (2.0 * std::f64::consts::PI / (lambda + 1.0)).ln() - lambda * x * x / (2.0 * (lambda + 1.0))
        - 0.5 * lambda * x.im * x.im;
    log.exp()
}

fn bump_axis() -> Axis {
    Axis::span(-4.0, 4.0, 8 * 32 + 1).unwrap()
}

fn smooth_sample(a: f64, b: f64, shift: f64) -> SampledFunction {
    SampledFunction::from_fn_1d(bump_axis(), (-3.0, 3.0), move |y| {
        c((-(y - shift) * (y - shift)).exp() * a, b * (y - shift).sin() * (-y * y).exp())
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transform_is_linear(
        a in -2.0..2.0f64, b in -2.0..2.0f64,
        xr in -1.0..1.0f64, xi in -0.5..0.5f64, lam in 1.0..60.0f64,
    ) {
        let u = smooth_sample(1.0, 0.5, 0.2);
        let v = smooth_sample(-0.3, 1.0, -0.4);
        let w = u.linear_combination(c(a, 0.0), &v, c(0.0, b)).unwrap();
        let x = [c(xr, xi)];
        let lhs = transform_at(&w, &x, lam).unwrap();
        let rhs = c(a, 0.0) * transform_at(&u, &x, lam).unwrap()
            + c(0.0, b) * transform_at(&v, &x, lam).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
    }

    #[test]
    fn translation_covariance(
        steps in -16isize..16, xr in -0.5..0.5f64, xi in -0.5..0.5f64, lam in 1.0..60.0f64,
    ) {
        let u = smooth_sample(1.0, 0.7, 0.0);
        let shifted = u.shift(&[steps]).unwrap();
        let y0 = steps as f64 * bump_axis().spacing;
        let lhs = transform_at(&shifted, &[c(xr, xi)], lam).unwrap();
        let rhs = transform_at(&u, &[c(xr - y0, xi)], lam).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
        prop_assert!((lhs.norm() - rhs.norm()).abs() <= 1e-12 * (1.0 + rhs.norm()));
    }

    #[test]
    fn phi_norm_monotone_and_quadratic(
        k in 0.1..5.0f64, lam in 1.0..10.0f64, r1 in 0.2..0.6f64, dr in 0.0..0.4f64,
    ) {
        let a = Axis::span(-1.0, 1.0, 41).unwrap();
        let grid = ComplexGrid::one_dim(a, a).unwrap();
        let phi: Vec<f64> = (0..grid.len()).map(|p| grid.phi0(p)).collect();
        let u: Vec<Complex64> = (0..grid.len())
            .map(|p| { let z = grid.point(p)[0]; (z * z * 0.5 + z).exp() })
            .collect();
        let small = grid.box_mask(&[-r1, -r1], &[r1, r1]);
        let r2 = r1 + dr;
        let big = grid.box_mask(&[-r2, -r2], &[r2, r2]);
        let n1 = phi_norm_sq(&u, &grid, &phi, lam, &small).unwrap();
        let n2 = phi_norm_sq(&u, &grid, &phi, lam, &big).unwrap();
        prop_assert!(n2 >= n1 * (1.0 - 1e-14));
        let ku: Vec<Complex64> = u.iter().map(|v| v * k).collect();
        let nk = phi_norm_sq(&ku, &grid, &phi, lam, &small).unwrap();
        prop_assert!((nk - k * k * n1).abs() <= 1e-12 * nk);
    }

    #[test]
    fn synthetic_fit_recovers_order(s in 1.0..3.0f64, c1 in 0.1..10.0f64, c2 in 0.5..2.0f64) {
        let lambdas = geometric_ladder(4.0, 4096.0, 16);
        let m: Vec<f64> = lambdas.iter().map(|l| c1 * (-l.powf(1.0 / s) / c2).exp()).collect();
        let fit = fit_decay(&lambdas, &m).unwrap();
        prop_assert!((fit.s_hat.unwrap() - s).abs() < 0.05 * s);
    }

    #[test]
    fn mask_monotone_in_order(s in 1.0..2.5f64, c1 in 0.1..10.0f64, c2 in 0.5..2.0f64, ds in 0.01..1.0f64) {
        let lambdas = geometric_ladder(4.0, 4096.0, 16);
        let grid = ComplexGrid::one_dim(
            Axis::span(0.0, 1.0, 2).unwrap(), Axis::span(-1.0, 0.0, 2).unwrap()).unwrap();
        let mut reduced = Vec::new();
        for _ in 0..grid.len() {
            reduced.extend(lambdas.iter().map(|l| c(c1 * (-l.powf(1.0 / s) / c2).exp(), 0.0)));
        }
        let f = FBIField::from_reduced(grid, lambdas.clone(), reduced, vec![0.0; 16]).unwrap();
        let fit = fit_gevrey_order(&f, 0).unwrap();
        let s_star = fit.s_hat.unwrap();
        let mask = wf_mask(&f, s_star + ds, fit.c2_hat).unwrap();
        prop_assert!(mask.iter().all(|&b| b));
    }
}

#[test]
fn gaussian_decays_analytically_off_the_real_axis() {
    let axis = Axis::span(-13.0, 13.0, 26 * 64 + 1).unwrap();
    let u = SampledFunction::from_fn_1d(axis, (-12.0, 12.0), |y| c((-0.5 * y * y).exp(), 0.0)).unwrap();
    let grid = ComplexGrid::one_dim(
        Axis::span(-0.5, 0.5, 3).unwrap(),
        Axis::span(-1.0, 0.0, 2).unwrap(),
    )
    .unwrap();
    let lambdas = geometric_ladder(2.0, 48.0, 12);
    let f = fbi_transform(&u, &grid, &lambdas).unwrap();
    for p in 0..grid.len() {
        let x = grid.point(p)[0];
        for (l, &lam) in lambdas.iter().enumerate() {
            let want = gaussian_reduced(x, lam);
            assert!((f.reduced(p, l) - want).norm() <= 1e-6 * want.norm() + 1e-15);
        }
        let fit = fit_gevrey_order(&f, p).unwrap();
        if x.im == -1.0 {
            let s = fit.s_hat.expect("decay");
            assert!((1.0 / s - 1.0).abs() <= 0.1, "x={x} 1/s={}", 1.0 / s);
        } else {
            assert!(fit.s_hat.is_none(), "x={x} fit={fit:?}");
        }
    }
}

#[test]
fn delta_field_has_no_decay_on_its_fibre() {
    let axis = Axis::span(-1.0, 1.0, 2 * 4096 + 1).unwrap();
    let u = SampledFunction::delta_1d(axis, 0.0).unwrap();
    let grid = ComplexGrid::one_dim(
        Axis::span(-0.5, 0.5, 3).unwrap(),
        Axis::span(-1.0, 0.0, 3).unwrap(),
    )
    .unwrap();
    let lambdas = geometric_ladder(4.0, 4096.0, 16);
    let f = fbi_transform(&u, &grid, &lambdas).unwrap();
    let m = normalized_magnitude(&f);
    let mask = wf_mask(&f, 1.0, 8.5).unwrap();
    for p in 0..grid.len() {
        let x = grid.point(p)[0];
        if x.re == 0.0 {
            assert!(m[p * 16..(p + 1) * 16].iter().all(|&v| (v - 1.0).abs() < 1e-12));
            assert!(fit_gevrey_order(&f, p).unwrap().s_hat.is_none());
            assert!(!mask[p]);
        } else {
            assert!(mask[p], "x={x}");
        }
    }
}

#[test]
fn closed_form_gaussian_mask() {
    let lambdas = geometric_ladder(4.0, 4096.0, 16);
    let grid = ComplexGrid::one_dim(
        Axis::span(-2.0, 2.0, 5).unwrap(),
        Axis::span(-1.0, 0.0, 2).unwrap(),
    )
    .unwrap();
    let mut reduced = Vec::new();
    for p in 0..grid.len() {
        let x = grid.point(p)[0];
        reduced.extend(lambdas.iter().map(|&l| gaussian_reduced(x, l)));
    }
    let f = FBIField::from_reduced(grid.clone(), lambdas, reduced, vec![0.0; 16]).unwrap();
    let mask = wf_mask(&f, 1.0, 2.5).unwrap();
    for p in 0..grid.len() {
        assert_eq!(mask[p], grid.point(p)[0].im == -1.0);
    }
    let zero = FBIField::from_reduced(
        grid.clone(),
        f.lambdas().to_vec(),
        vec![c(0.0, 0.0); grid.len() * 16],
        vec![0.0; 16],
    )
    .unwrap();
    assert!(wf_mask(&zero, 1.0, 1.0).unwrap().iter().all(|&b| b));
}

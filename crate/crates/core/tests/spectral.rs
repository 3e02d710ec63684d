use microlocal::spectral::{anharmonic_eigs, eigen_residual, Parity, SpectralOptions};

/// `φ(X)` for `φ″ = (x^p − E)φ` started at 0 with even or odd data, by RK4.
fn shoot(p: i32, e: f64, odd: bool, x_end: f64, steps: usize) -> f64 {
    let h = x_end / steps as f64;
    let (mut y, mut dy) = if odd { (0.0, 1.0) } else { (1.0, 0.0) };
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

/// Bisection on the sign of the tail for the eigenvalue in `(lo, hi)`.
fn shooting_eigenvalue(p: i32, odd: bool, mut lo: f64, mut hi: f64) -> f64 {
    let x_end = 4.5;
    let s_lo = shoot(p, lo, odd, x_end, 20_000).signum();
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if shoot(p, mid, odd, x_end, 20_000).signum() == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn quartic_ground_state_matches_shooting() {
    let oracle = shooting_eigenvalue(4, false, 0.5, 2.0);
    assert!((oracle - 1.0603620904).abs() < 1e-6, "oracle {oracle}");
    let pairs = anharmonic_eigs(3, 3, SpectralOptions::default()).unwrap();
    assert!((pairs[0].energy - oracle).abs() < 1e-3);
    assert!((pairs[0].energy - oracle).abs() < 1e-6);
    let first_odd = shooting_eigenvalue(4, true, 2.0, 5.0);
    assert!((pairs[1].energy - first_odd).abs() < 1e-6);
}

#[test]
fn harmonic_levels() {
    let pairs = anharmonic_eigs(2, 6, SpectralOptions::default()).unwrap();
    for (n, p) in pairs.iter().enumerate() {
        assert!((p.energy - (2 * n + 1) as f64).abs() < 1e-6);
    }
}

#[test]
fn spectrum_positive_simple_and_parity_alternates() {
    for k in 2..=5 {
        let pairs = anharmonic_eigs(k, 5, SpectralOptions::default()).unwrap();
        assert!(pairs[0].energy > 0.0);
        for w in pairs.windows(2) {
            assert!(w[1].energy - w[0].energy > 0.1, "k={k}");
        }
        for (n, p) in pairs.iter().enumerate() {
            let expect = if n % 2 == 0 { Parity::Even } else { Parity::Odd };
            assert_eq!(p.parity, expect);
            assert!((p.l2_norm() - 1.0).abs() < 1e-10);
            assert_eq!(p.values()[0], 0.0);
            assert_eq!(*p.values().last().unwrap(), 0.0);
            assert!(eigen_residual(p).unwrap() <= 1e-6);
        }
    }
}

#[test]
fn refinement_converges_at_fourth_order() {
    let coarse = SpectralOptions {
        npoints: 501,
        halfwidth: Some(8.0),
        tol: 1e-3,
    };
    let fine = SpectralOptions {
        npoints: 1001,
        ..coarse
    };
    let finer = SpectralOptions {
        npoints: 2001,
        ..coarse
    };
    let e = |o| anharmonic_eigs(3, 3, o).unwrap()[2].energy;
    let (a, b, c) = (e(coarse), e(fine), e(finer));
    let ratio = (a - b).abs() / (b - c).abs();
    // Fourth order gives a factor of about 16 per halving.
    assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
}

#[test]
fn eigenfunctions_decay_exponentially() {
    let pairs = anharmonic_eigs(2, 3, SpectralOptions::default()).unwrap();
    for p in &pairs {
        // Fit log|φ| against |x| on 3 ≤ |x| ≤ 6 for x > 0.
        let (mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (i, &v) in p.values().iter().enumerate() {
            let x = p.axis().coord(i);
            if (3.0..=6.0).contains(&x) && v != 0.0 {
                let y = v.abs().ln();
                sx += x;
                sy += y;
                sxx += x * x;
                sxy += x * y;
                n += 1.0;
            }
        }
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!(slope < -1.0, "index {} slope {slope}", p.index);
    }
}

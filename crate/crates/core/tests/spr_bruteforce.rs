//! Sparse Fienup pieces checked by enumeration on small problems.

use num_complex::Complex64;
use sparse_pr::metrics::{nmse, AlignmentPolicy};
use sparse_pr::operators::MeasurementOperator;
use sparse_pr::signal::{complex_gaussian_vec, generate_sparse_signal, RngSpec};
use sparse_pr::spr::{project_magnitude, project_sparsity, spr_solve, SprConfig};

fn dist(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>()
}

/// Best s-sparse approximation by trying every support.
fn brute_force_projection(x: &[Complex64], s: usize) -> f64 {
    let n = x.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != s {
            continue;
        }
        let y: Vec<Complex64> = (0..n)
            .map(|i| if mask >> i & 1 == 1 { x[i] } else { Complex64::new(0.0, 0.0) })
            .collect();
        best = best.min(dist(x, &y));
    }
    best
}

#[test]
fn sparsity_projection_is_optimal() {
    for seed in 0..300u64 {
        let n = 1 + (seed as usize % 8);
        let s = 1 + (seed as usize / 8) % n;
        let mut rng = RngSpec::new(seed).rng();
        let mut x = complex_gaussian_vec(&mut rng, n);
        if seed % 5 == 0 {
            // exact ties in modulus
            x[0] = Complex64::new(1.0, 0.0);
            x[n - 1] = Complex64::new(0.0, -1.0);
        }
        let y = project_sparsity(&x, s);
        assert!(y.iter().filter(|v| v.norm() != 0.0).count() <= s);
        assert!((dist(&x, &y) - brute_force_projection(&x, s)).abs() < 1e-12, "n={n} s={s}");
    }
}

#[test]
fn magnitude_projection_is_nearest_on_each_bin() {
    // compare with random points of the magnitude set: none may be closer
    let n = 8;
    let op = MeasurementOperator::unitary_dft(n).unwrap();
    for seed in 0..50u64 {
        let mut rng = RngSpec::new(seed).rng();
        let x = complex_gaussian_vec(&mut rng, n);
        let b: Vec<f64> = complex_gaussian_vec(&mut rng, n).iter().map(|v| v.norm()).collect();
        let p = project_magnitude(&x, &b).unwrap();
        let mags = op.magnitudes(&p).unwrap();
        for (m, bi) in mags.iter().zip(&b) {
            assert!((m - bi).abs() < 1e-12);
        }
        let d = dist(&x, &p);
        for trial in 0..50u64 {
            let mut r = RngSpec::new(seed * 100 + trial).rng();
            let phases = complex_gaussian_vec(&mut r, n);
            let y: Vec<Complex64> =
                phases.iter().zip(&b).map(|(c, bi)| c / c.norm() * bi).collect();
            let other = op.adjoint(&y).unwrap();
            assert!(d <= dist(&x, &other) + 1e-12);
        }
    }
}

#[test]
fn recovers_some_very_sparse_signals() {
    let mut ok = 0;
    for seed in 0..20u64 {
        let gt = generate_sparse_signal(16, 2, RngSpec::new(seed), true).unwrap();
        let b = MeasurementOperator::unitary_dft(16).unwrap().magnitudes(&gt.signal).unwrap();
        let out = spr_solve(&b, &SprConfig { rng: RngSpec::new(seed + 50), ..SprConfig::new(2) }).unwrap();
        assert!(out.estimate.l0_norm() <= 2);
        if nmse(&out.estimate, &gt.signal, AlignmentPolicy::FOURIER).unwrap() <= 1e-3 {
            ok += 1;
        }
    }
    assert!(ok > 0);
}

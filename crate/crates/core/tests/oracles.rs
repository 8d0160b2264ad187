//! Closed forms and the crystal eigensolver checked against independent
//! numerics from `lsf-testkit`.

use lsf_core::crystal::{build_crystal, min_gate_time, transverse_hessian, CrystalConfig};
use lsf_core::integrals::{cos_sin, exp_sin, mode_form_entry, sin_sin};
use lsf_testkit::{integrate, integrate_simplex, jacobi_eigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative error with a floor at `floor` for values that cancel to near zero.
fn rel_err(closed: f64, reference: f64, floor: f64) -> f64 {
    (closed - reference).abs() / reference.abs().max(floor)
}

fn mode_form_quadrature(a: f64, p: f64, q: f64) -> f64 {
    -integrate_simplex(
        |t1, t2| (a * (t1 - t2)).sin() * ((p * t1).sin() * (q * t2).sin() + (p * t2).sin() * (q * t1).sin()),
        1e-16,
        1e-13,
    )
}

/// Phase pairs with both generic and near-degenerate detunings.
fn phase_triples(seed: u64, count: usize) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let a: f64 = rng.random_range(20.0..200.0);
            let detune = |rng: &mut ChaCha8Rng, k: usize| match k % 3 {
                0 => rng.random_range(-30.0..30.0),
                1 => rng.random_range(-1e-6..1e-6) * a,
                _ => rng.random_range(-1.0..1.0),
            };
            let p = a + detune(&mut rng, i);
            let q = a + detune(&mut rng, i + 1);
            (a, p, q)
        })
        .collect()
}

#[test]
fn closure_integrals_match_quadrature() {
    for (a, p, _) in phase_triples(1, 40) {
        let ss = integrate(|t| (a * t).sin() * (p * t).sin(), 0.0, 1.0, 1e-16, 1e-14);
        let cs = integrate(|t| (a * t).cos() * (p * t).sin(), 0.0, 1.0, 1e-16, 1e-14);
        assert!(rel_err(sin_sin(a, p), ss, 1e-3) < 1e-9, "sin_sin({a}, {p})");
        assert!(rel_err(cos_sin(a, p), cs, 1e-3) < 1e-9, "cos_sin({a}, {p})");
    }
}

#[test]
fn displacement_integral_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (a, p, _) in phase_triples(3, 40) {
        let u: f64 = rng.random_range(0.05..1.0);
        let re = integrate(|t| (a * t).cos() * (p * t).sin(), 0.0, u, 1e-16, 1e-14);
        let im = integrate(|t| (a * t).sin() * (p * t).sin(), 0.0, u, 1e-16, 1e-14);
        let v = exp_sin(a, p, u);
        let scale = (re * re + im * im).sqrt().max(1e-3);
        assert!((v.re - re).abs() / scale < 1e-9 && (v.im - im).abs() / scale < 1e-9, "exp_sin({a}, {p}, {u})");
    }
}

#[test]
fn mode_form_matches_nested_quadrature() {
    for (a, p, q) in phase_triples(4, 12) {
        let reference = mode_form_quadrature(a, p, q);
        let closed = mode_form_entry(a, p, q);
        assert!(rel_err(closed, reference, 1e-3) < 1e-9, "A({a}, {p}, {q}): {closed} vs {reference}");
    }
}

#[test]
fn exactly_resonant_mode_form() {
    let a = 40.0 * std::f64::consts::PI + 0.3;
    let reference = mode_form_quadrature(a, a, a);
    assert!(rel_err(mode_form_entry(a, a, a), reference, 1e-3) < 1e-9);
}

#[test]
fn crystal_modes_match_jacobi() {
    for n in 2..=9 {
        let cfg = CrystalConfig::calcium(n);
        let c = build_crystal(&cfg).unwrap();
        let h = transverse_hessian(n, cfg.derived_coulomb_ratio());
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| h[(i, j)]).collect()).collect();
        let (vals, vecs) = jacobi_eigen(&rows);
        let raw: Vec<f64> = vals.iter().map(|v| v.sqrt()).collect();
        let lo = c.mode_freqs[0];
        let hi = c.mode_freqs[n - 1];
        for j in 0..n {
            let expected = lo + (raw[j] - raw[0]) / (raw[n - 1] - raw[0]) * (hi - lo);
            assert!((c.mode_freqs[j] - expected).abs() < 1e-9 * hi, "N={n} mode {j}");
            // eigenvectors agree up to sign
            let dot: f64 = (0..n).map(|i| c.participation[(i, j)] * vecs[i][j]).sum();
            assert!((dot.abs() - 1.0).abs() < 1e-10, "N={n} mode {j} overlap {dot}");
        }
    }
}

#[test]
fn participation_is_orthogonal_up_to_64_ions() {
    for n in [2, 5, 16, 33, 64] {
        let c = build_crystal(&CrystalConfig::calcium(n)).unwrap();
        let o = &c.participation;
        let resid = (o * o.transpose() - nalgebra::DMatrix::identity(n, n)).amax();
        assert!(resid < 1e-12, "N={n}: {resid}");
        assert!(c.lamb_dicke.iter().all(|&e| e > 0.0));
    }
}

#[test]
fn min_gate_time_grows_roughly_quadratically() {
    let pts: Vec<(f64, f64)> = [8usize, 16, 32, 64]
        .iter()
        .map(|&n| (n as f64, min_gate_time(&build_crystal(&CrystalConfig::calcium(n)).unwrap()).unwrap()))
        .collect();
    let fit = lsf_core::analysis::power_law_fit(&pts).unwrap();
    assert!((1.7..=2.3).contains(&fit.slope), "exponent {}", fit.slope);
}

#[test]
fn rebuilt_crystal_is_bit_identical() {
    let cfg = CrystalConfig::calcium(12);
    let a = build_crystal(&cfg).unwrap();
    let b = build_crystal(&cfg).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.hash(), b.hash());
}

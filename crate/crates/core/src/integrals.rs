//! Closed-form time integrals of products of harmonic drives and mode
//! propagators.
//!
//! Everything here works in dimensionless time `tau = t / T` on `[0, 1]`, so
//! frequencies enter as phases `a = nu * T`, `p = omega * T`. Physical
//! integrals pick up the appropriate powers of `T` at the call site.
//!
//! Near-resonant tones (|omega - nu| T -> 0) are the physically dominant
//! regime, so every routine is written to stay accurate through those
//! degeneracies: first-order differences go through `sinc`, second-order
//! ones through divided differences of `exp` that switch to a Taylor series
//! when the nodes cluster.

use num_complex::Complex64 as C64;

/// `sin(x) / x`, continuous at zero.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

fn sinhc(z: C64) -> C64 {
    if z.norm() < 0.1 {
        let z2 = z * z;
        // z^10 term is below 1e-17 for |z| < 0.1
        C64::new(1.0, 0.0)
            + z2 / 6.0
                * (C64::new(1.0, 0.0)
                    + z2 / 20.0 * (C64::new(1.0, 0.0) + z2 / 42.0 * (C64::new(1.0, 0.0) + z2 / 72.0)))
    } else {
        z.sinh() / z
    }
}

/// First divided difference of `exp`: `(e^y - e^x) / (y - x)`.
pub fn exp_dd2(x: C64, y: C64) -> C64 {
    ((x + y) * 0.5).exp() * sinhc((y - x) * 0.5)
}

/// Second divided difference `exp[z0, z1, z2]`, symmetric in its arguments.
pub fn exp_dd3(z0: C64, z1: C64, z2: C64) -> C64 {
    let d01 = (z0 - z1).norm();
    let d02 = (z0 - z2).norm();
    let d12 = (z1 - z2).norm();
    let spread = d01.max(d02).max(d12);
    if spread < 1.0 {
        dd3_series(z0, z1, z2)
    } else {
        dd3_recursive(z0, z1, z2)
    }
}

/// `exp[z] = e^m * sum_k h_k(z - m) / (k + 2)!` around the centroid `m`,
/// with `h_k` the complete homogeneous polynomials.
fn dd3_series(z0: C64, z1: C64, z2: C64) -> C64 {
    let m = (z0 + z1 + z2) / 3.0;
        let (w0, w1, w2) = (z0 - m, z1 - m, z2 - m);
        let one = C64::new(1.0, 0.0);
        let (mut h0, mut h01, mut h012) = (one, one, one);
        let mut fact = 2.0_f64;
        let mut sum = h012 / fact;
        for k in 1..28 {
            h0 *= w0;
            h01 = h0 + w1 * h01;
            h012 = h01 + w2 * h012;
            fact *= (k + 2) as f64;
            sum += h012 / fact;
        }
    m.exp() * sum
}

fn dd3_recursive(z0: C64, z1: C64, z2: C64) -> C64 {
    let d01 = (z0 - z1).norm();
    let d02 = (z0 - z2).norm();
    let spread = d01.max(d02).max((z1 - z2).norm());
    // The outer denominator is the widest pair, which bounds cancellation.
    let (x, y, w) = if spread == d02 {
        (z0, z1, z2)
    } else if spread == d01 {
        (z0, z2, z1)
    } else {
        (z1, z0, z2)
    };
    (exp_dd2(x, y) - exp_dd2(y, w)) / (x - w)
}

/// `int_0^1 dt1 int_0^t1 dt2 exp(i (c1 t1 + c2 t2))`.
pub fn simplex_exp(c1: f64, c2: f64) -> C64 {
    exp_dd3(C64::new(0.0, 0.0), C64::new(0.0, c1), C64::new(0.0, c1 + c2))
}

/// `int_0^1 dt1 int_0^t1 dt2 sin(a (t1 - t2)) sin(p t1) sin(q t2)`.
pub fn phase_kernel(a: f64, p: f64, q: f64) -> f64 {
    let mut acc = 0.0;
    for ep in [1.0, -1.0] {
        for eq in [1.0, -1.0] {
            acc += ep * eq * simplex_exp(a + ep * p, -a + eq * q).im;
        }
    }
    -0.25 * acc
}

/// Dimensionless entry of the sine-sine mode form:
/// `-int int sin(a (t1 - t2)) [sin(p t1) sin(q t2) + sin(p t2) sin(q t1)]`.
pub fn mode_form_entry(a: f64, p: f64, q: f64) -> f64 {
    -(phase_kernel(a, p, q) + phase_kernel(a, q, p))
}

/// `int_0^1 sin(a t) sin(b t) dt`.
pub fn sin_sin(a: f64, b: f64) -> f64 {
    0.5 * (sinc(a - b) - sinc(a + b))
}

/// `int_0^1 sin(x t) dt`, continuous at zero.
fn versine_integral(x: f64) -> f64 {
    let h = 0.5 * x;
    h.sin() * sinc(h)
}

/// `int_0^1 cos(a t) sin(b t) dt`.
pub fn cos_sin(a: f64, b: f64) -> f64 {
    0.5 * (versine_integral(b + a) + versine_integral(b - a))
}

/// `int_0^u exp(i x t) dt`.
pub fn exp_integral(x: f64, u: f64) -> C64 {
    let h = 0.5 * x * u;
    C64::new(0.0, h).exp() * (u * sinc(h))
}

/// `int_0^u exp(i a t) sin(b t) dt`.
pub fn exp_sin(a: f64, b: f64, u: f64) -> C64 {
    (exp_integral(a + b, u) - exp_integral(a - b, u)) / C64::new(0.0, 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_exp_at_origin_is_half() {
        let v = simplex_exp(0.0, 0.0);
        assert!((v.re - 0.5).abs() < 1e-15 && v.im.abs() < 1e-15);
    }

    #[test]
    fn dd3_branches_agree_near_switch() {
        for z in [
            [C64::new(0.0, 0.0), C64::new(0.0, 0.5), C64::new(0.0, 1.0)],
            [C64::new(0.0, 3.0), C64::new(0.0, 3.9), C64::new(0.0, 3.2)],
            [C64::new(0.0, -0.7), C64::new(0.0, 0.2), C64::new(0.0, -0.7)],
        ] {
            let a = dd3_series(z[0], z[1], z[2]);
            let b = dd3_recursive(z[0], z[1], z[2]);
            assert!((a - b).norm() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn dd3_is_symmetric() {
        let a = C64::new(0.0, 13.7);
        let b = C64::new(0.0, -2.1);
        let c = C64::new(0.0, 13.7 + 1e-9);
        let v = exp_dd3(a, b, c);
        for p in [exp_dd3(b, a, c), exp_dd3(c, b, a), exp_dd3(a, c, b)] {
            assert!((v - p).norm() < 1e-13 * v.norm().max(1.0));
        }
    }

    #[test]
    fn sin_sin_resonant_is_half() {
        let a = 2.0 * std::f64::consts::PI * 17.0;
        assert!((sin_sin(a, a) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn exp_integral_zero_frequency() {
        let v = exp_integral(0.0, 0.3);
        assert!((v.re - 0.3).abs() < 1e-16 && v.im == 0.0);
    }
}

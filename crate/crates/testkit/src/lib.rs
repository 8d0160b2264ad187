//! Reference numerics for tests, written without any linear-algebra or
//! special-function dependency so they share no code with the library.

/// Gauss-Kronrod 7/15 nodes on `[-1, 1]` (non-negative half, Kronrod order).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Kronrod estimate, error bound and absolute integral of one panel. The
/// bound is zero once it falls to the rounding level.
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut abs = WGK[7] * fc.abs();
    for i in 0..7 {
        let x = h * XGK[i];
        let (l, r) = (f(c - x), f(c + x));
        kron += WGK[i] * (l + r);
        abs += WGK[i] * (l.abs() + r.abs());
        if i % 2 == 1 {
            gauss += WG[i / 2] * (l + r);
        }
    }
    let err = ((kron - gauss) * h).abs();
    let rounding = 50.0 * f64::EPSILON * abs * h.abs();
    (kron * h, if err <= rounding { 0.0 } else { err }, abs * h.abs())
}

/// Adaptive G7K15 quadrature of `f` over `[a, b]`, bisecting until each
/// piece's error estimate is within its share of
/// `max(abs_tol, rel_tol |I|, 1e3 eps int |f|)`. The last term keeps
/// integrals that cancel from chasing the noise of `f` itself.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    // start from a few panels so oscillatory integrands are sampled fairly
    let panels = 8;
    let mut stack: Vec<(f64, f64, f64, f64, f64)> = (0..panels)
        .map(|i| {
            let lo = a + (b - a) * i as f64 / panels as f64;
            let hi = a + (b - a) * (i + 1) as f64 / panels as f64;
            let (v, e, m) = gk15(&mut f, lo, hi);
            (lo, hi, v, e, m)
        })
        .collect();
    let mut total: f64 = stack.iter().map(|s| s.2).sum();
    let mut total_abs: f64 = stack.iter().map(|s| s.4).sum();
    let mut done = 0.0;
    let width = (b - a).abs();
    while let Some((lo, hi, v, e, m)) = stack.pop() {
        let tol = abs_tol.max(rel_tol * total.abs()).max(1e3 * f64::EPSILON * total_abs);
        if e <= tol * (hi - lo).abs() / width || (hi - lo).abs() < 1e-12 * width {
            done += v;
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let (v1, e1, m1) = gk15(&mut f, lo, mid);
        let (v2, e2, m2) = gk15(&mut f, mid, hi);
        total += v1 + v2 - v;
        total_abs += m1 + m2 - m;
        stack.push((lo, mid, v1, e1, m1));
        stack.push((mid, hi, v2, e2, m2));
    }
    done
}

/// `int_0^1 dt1 int_0^t1 dt2 f(t1, t2)` by nested adaptive quadrature.
pub fn integrate_simplex<F: Fn(f64, f64) -> f64>(f: F, abs_tol: f64, rel_tol: f64) -> f64 {
    integrate(|t1| integrate(|t2| f(t1, t2), 0.0, t1, abs_tol, rel_tol), 0.0, 1.0, abs_tol, rel_tol)
}

/// Eigenvalues (ascending) and column eigenvectors of a symmetric matrix by
/// cyclic Jacobi rotations. `m` is row-major `n x n`.
pub fn jacobi_eigen(m: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = (0..n).map(|r| order.iter().map(|&i| v[r][i]).collect()).collect();
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_oscillatory_integrals() {
        assert!((integrate(|x| x * x, 0.0, 3.0, 1e-14, 1e-14) - 9.0).abs() < 1e-12);
        let v = integrate(|x| (50.0 * x).sin(), 0.0, 1.0, 1e-15, 1e-13);
        assert!((v - (1.0 - 50f64.cos()) / 50.0).abs() < 1e-13);
    }

    #[test]
    fn simplex_area_and_moment() {
        assert!((integrate_simplex(|_, _| 1.0, 1e-14, 1e-14) - 0.5).abs() < 1e-13);
        // int_0^1 int_0^t1 t1 t2 = 1/8
        assert!((integrate_simplex(|a, b| a * b, 1e-14, 1e-14) - 0.125).abs() < 1e-13);
    }

    #[test]
    fn jacobi_on_a_known_matrix() {
        let m = vec![vec![2.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 2.0]];
        let (vals, vecs) = jacobi_eigen(&m);
        let s2 = 2f64.sqrt();
        for (v, e) in vals.iter().zip([2.0 - s2, 2.0, 2.0 + s2]) {
            assert!((v - e).abs() < 1e-13);
        }
        for k in 0..3 {
            for i in 0..3 {
                let mv: f64 = (0..3).map(|j| m[i][j] * vecs[j][k]).sum();
                assert!((mv - vals[k] * vecs[i][k]).abs() < 1e-12);
            }
        }
    }
}

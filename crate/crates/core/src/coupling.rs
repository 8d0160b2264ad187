//! Quadratic forms linking drive amplitudes to entanglement phases, and the
//! spin-dependent displacement of each mode.
//!
//! Forms are stored in a dimensionless normalization. A physical amplitude
//! vector `r` (rad/s) maps to optimizer coordinates `x = s r` with
//! `s = base_rabi * mean(eta) * T`, and the phase between ions `n`, `m` is
//! `x_n^T A_nm x_m` with
//!
//! `A_nm = sum_j -(eta_j / mean(eta))^2 O_j^n O_j^m B^T F_j B`,
//!
//! where `F_j` is the dimensionless double integral over `[0, 1]` returned by
//! [`crate::integrals::mode_form_entry`] and `B` the kernel basis.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::crystal::IonCrystal;
use crate::error::{LsfError, Result};
use crate::integrals::{exp_sin, mode_form_entry};
use crate::linalg::PairJacobian;
use crate::spectrum::{KernelBasis, ToneGrid};

/// Factor converting physical amplitudes (rad/s) into optimizer coordinates.
pub fn drive_scale(crystal: &IonCrystal, gate_time: f64) -> f64 {
    crystal.config.base_rabi * crystal.mean_lamb_dicke() * gate_time
}

/// Dimensionless `M x M` form of a mode at angular frequency `nu`.
pub fn raw_mode_form(nu: f64, grid: &ToneGrid) -> DMatrix<f64> {
    let t = grid.gate_time;
    let a = nu * t;
    let m = grid.len();
    let p: Vec<f64> = grid.tone_freqs.iter().map(|w| w * t).collect();
    let mut f = DMatrix::zeros(m, m);
    for i in 0..m {
        for l in i..m {
            let v = mode_form_entry(a, p[i], p[l]);
            f[(i, l)] = v;
            f[(l, i)] = v;
        }
    }
    f
}

/// Kernel-reduced form `B^T F B` of a mode.
pub fn mode_form(nu: f64, grid: &ToneGrid, kernel: &KernelBasis) -> DMatrix<f64> {
    let raw = raw_mode_form(nu, grid);
    let reduced = kernel.basis.tr_mul(&(&raw * &kernel.basis));
    // exact symmetry, the product only loses it at rounding level
    (&reduced + reduced.transpose()) * 0.5
}

#[derive(Debug, Clone)]
pub struct CouplingSet {
    /// Kernel-reduced per-mode forms, `K x K`.
    pub mode_forms: Vec<DMatrix<f64>>,
    /// `(eta_j / mean eta)^2`.
    pub mode_weights: DVector<f64>,
    /// Ion-by-mode participation, copied from the crystal.
    pub participation: DMatrix<f64>,
    pub raw_dim: usize,
    pub gate_time: f64,
    pub drive_scale: f64,
}

impl CouplingSet {
    pub fn build(crystal: &IonCrystal, grid: &ToneGrid, kernel: &KernelBasis) -> Result<Self> {
        if kernel.raw_dim() != grid.len() {
            return Err(LsfError::Dimension(format!(
                "kernel has {} rows but the grid has {} tones",
                kernel.raw_dim(),
                grid.len()
            )));
        }
        let mode_forms: Vec<DMatrix<f64>> =
            crystal.mode_freqs.as_slice().par_iter().map(|&nu| mode_form(nu, grid, kernel)).collect();
        let mean = crystal.mean_lamb_dicke();
        Ok(Self {
            mode_forms,
            mode_weights: crystal.lamb_dicke.map(|e| (e / mean).powi(2)),
            participation: crystal.participation.clone(),
            raw_dim: grid.len(),
            gate_time: grid.gate_time,
            drive_scale: drive_scale(crystal, grid.gate_time),
        })
    }

    pub fn n_ions(&self) -> usize {
        self.participation.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.mode_forms.len()
    }

    /// Kernel dimension `K`.
    pub fn dim(&self) -> usize {
        self.mode_forms.first().map_or(0, |f| f.nrows())
    }

    /// Weight of mode `j` in the pair form of ions `n`, `m`.
    pub fn pair_weight(&self, n: usize, m: usize, j: usize) -> f64 {
        -self.mode_weights[j] * self.participation[(n, j)] * self.participation[(m, j)]
    }

    pub fn pair_coupling(&self, n: usize, m: usize) -> DMatrix<f64> {
        let k = self.dim();
        let mut acc = DMatrix::zeros(k, k);
        for (j, form) in self.mode_forms.iter().enumerate() {
            acc += form * self.pair_weight(n, m, j);
        }
        acc
    }

    /// All unordered ion pairs `(n, m)` with `n < m`, in row-major order.
    pub fn all_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n_ions();
        (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect()
    }

    /// `z^T F_j z` for every mode.
    pub fn mode_phases(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.n_modes(), self.mode_forms.iter().map(|f| z.dot(&(f * z))))
    }

    /// Rows `2 F_j z`, the gradient of each mode phase.
    pub fn mode_jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.n_modes(), z.len());
        for (j, f) in self.mode_forms.iter().enumerate() {
            jac.set_row(j, &(f * z * 2.0).transpose());
        }
        jac
    }

    fn check_stacked(&self, x: &DVector<f64>) {
        assert_eq!(x.len(), self.n_ions() * self.dim(), "stacked vector must have N*K entries");
    }

    /// `images[m][j] = F_j x_m`.
    fn mode_images(&self, x: &DVector<f64>) -> Vec<Vec<DVector<f64>>> {
        self.check_stacked(x);
        let k = self.dim();
        (0..self.n_ions())
            .map(|m| {
                let xm = x.rows(m * k, k);
                self.mode_forms.iter().map(|f| f * xm).collect()
            })
            .collect()
    }

    /// Symmetric, zero-diagonal matrix of `x_n^T A_nm x_m`.
    pub fn pair_phases(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let images = self.mode_images(x);
        let (n, k) = (self.n_ions(), self.dim());
        let mut phi = DMatrix::zeros(n, n);
        for a in 0..n {
            let xa = x.rows(a * k, k);
            for b in a + 1..n {
                let v: f64 = (0..self.n_modes()).map(|j| self.pair_weight(a, b, j) * xa.dot(&images[b][j])).sum();
                phi[(a, b)] = v;
                phi[(b, a)] = v;
            }
        }
        phi
    }

    /// Jacobian of the listed pair phases with respect to the stacked vector.
    pub fn pair_jacobian(&self, x: &DVector<f64>, pairs: &[(usize, usize)]) -> PairJacobian {
        let images = self.mode_images(x);
        let k = self.dim();
        let combine = |a: usize, b: usize, of: usize| {
            let mut v = DVector::zeros(k);
            for (j, img) in images[of].iter().enumerate() {
                v.axpy(self.pair_weight(a, b, j), img, 1.0);
            }
            v
        };
        let (left, right) = pairs.iter().map(|&(a, b)| (combine(a, b, b), combine(a, b, a))).unzip();
        PairJacobian { n_ions: self.n_ions(), block: k, pairs: pairs.to_vec(), left, right }
    }
}

/// Pair phase as one symmetric form over the stacked `N K` vector: half of
/// `A_nm` in block `(n, m)`, half of its transpose in block `(m, n)`.
pub fn assemble_constraint_form(set: &CouplingSet, n: usize, m: usize) -> Result<DMatrix<f64>> {
    let ions = set.n_ions();
    if n == m {
        return Err(LsfError::InvalidTarget(format!("pair ({n}, {m}) is diagonal; self-pairs only add a global phase")));
    }
    if n >= ions || m >= ions {
        return Err(LsfError::InvalidTarget(format!("pair ({n}, {m}) out of range for {ions} ions")));
    }
    let k = set.dim();
    let a = set.pair_coupling(n, m);
    let mut form = DMatrix::zeros(ions * k, ions * k);
    form.view_mut((n * k, m * k), (k, k)).copy_from(&(&a * 0.5));
    form.view_mut((m * k, n * k), (k, k)).copy_from(&(a.transpose() * 0.5));
    Ok(form)
}

/// Mode displacement `alpha[(j, n)]` caused by ion `n` at time `t`, for
/// physical tone amplitudes `amplitudes[(n, tone)]` in rad/s.
pub fn displacement_trajectory(
    amplitudes: &DMatrix<f64>,
    crystal: &IonCrystal,
    grid: &ToneGrid,
    t: f64,
) -> DMatrix<C64> {
    let n = crystal.n_ions();
    assert_eq!(amplitudes.nrows(), n, "one amplitude row per ion");
    assert_eq!(amplitudes.ncols(), grid.len(), "one amplitude column per tone");
    let gt = grid.gate_time;
    let u = t / gt;
    let rabi = crystal.config.base_rabi;
    let mut alpha = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for j in 0..n {
        let a = crystal.mode_freqs[j] * gt;
        // response of mode j to a unit-amplitude tone, shared by all ions
        let response: Vec<C64> = grid.tone_freqs.iter().map(|w| exp_sin(a, w * gt, u) * gt).collect();
        for ion in 0..n {
            let drive: C64 = amplitudes.row(ion).iter().zip(&response).map(|(&r, &e)| e * r).sum();
            let coupling = rabi * crystal.lamb_dicke[j] * crystal.participation[(ion, j)];
            alpha[(j, ion)] = C64::new(0.0, coupling) * drive;
        }
    }
    alpha
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal::{build_crystal, CrystalConfig};
    use crate::spectrum::{build_l_matrix, build_tone_grid, default_margin, kernel_basis};

    fn setup(n: usize, ratio: f64) -> (IonCrystal, ToneGrid, KernelBasis, CouplingSet) {
        let c = build_crystal(&CrystalConfig::calcium(n)).unwrap();
        let t = ratio * crate::crystal::min_gate_time(&c).unwrap();
        let g = build_tone_grid(&c, t, default_margin(t)).unwrap();
        let k = kernel_basis(&build_l_matrix(&c, &g), 1e-9).unwrap();
        let s = CouplingSet::build(&c, &g, &k).unwrap();
        (c, g, k, s)
    }

    #[test]
    fn forms_are_symmetric() {
        let (.., s) = setup(3, 2.0);
        for f in &s.mode_forms {
            assert!((f - f.transpose()).amax() == 0.0);
        }
    }

    #[test]
    fn pair_phases_match_constraint_form() {
        let (.., s) = setup(3, 2.0);
        let x = DVector::from_fn(3 * s.dim(), |i, _| ((i * 37 % 11) as f64 - 5.0) * 0.1);
        let phi = s.pair_phases(&x);
        for (a, b) in s.all_pairs() {
            let form = assemble_constraint_form(&s, a, b).unwrap();
            let v = x.dot(&(&form * &x));
            assert!((v - phi[(a, b)]).abs() < 1e-12 * phi.amax().max(1.0));
        }
        assert!(assemble_constraint_form(&s, 1, 1).is_err());
    }

    #[test]
    fn pair_jacobian_is_the_gradient() {
        let (.., s) = setup(3, 2.0);
        let k = s.dim();
        let x = DVector::from_fn(3 * k, |i, _| (i as f64 * 0.37).cos());
        let pairs = s.all_pairs();
        let jac = crate::linalg::Jacobian::Pairs(s.pair_jacobian(&x, &pairs));
        let dir = DVector::from_fn(3 * k, |i, _| (i as f64 * 1.1).sin());
        let h = 1e-6;
        let fd = (s.pair_phases(&(&x + &dir * h)) - s.pair_phases(&(&x - &dir * h))) / (2.0 * h);
        let lin = jac.mul(&dir);
        for (c, &(a, b)) in pairs.iter().enumerate() {
            assert!((fd[(a, b)] - lin[c]).abs() < 1e-6 * lin.amax());
        }
    }

    #[test]
    fn trajectory_starts_at_rest() {
        let (c, g, ..) = setup(3, 2.0);
        let r = DMatrix::from_element(3, g.len(), 1.0);
        assert_eq!(displacement_trajectory(&r, &c, &g, 0.0).map(|z| z.norm()).amax(), 0.0);
    }
}

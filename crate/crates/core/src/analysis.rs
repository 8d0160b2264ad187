//! Quality metrics and power predictions for drive solutions.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coupling::{displacement_trajectory, CouplingSet};
use crate::crystal::IonCrystal;
use crate::error::{LsfError, Result};
use crate::lsf::DriveSolution;
use crate::spectrum::ToneGrid;
use crate::targets::TargetMatrix;

/// How pairs enter the phase-error sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairCounting {
    /// Every unordered pair twice, as in a sum over the full symmetric matrix.
    #[default]
    Ordered,
    Unordered,
}

/// Phases `x_n^T A_nm x_m` achieved by a solution.
pub fn realized_phases(solution: &DriveSolution, set: &CouplingSet) -> Result<TargetMatrix> {
    let x = solution.scaled_coords(set)?;
    TargetMatrix::new(set.pair_phases(&x), "realized")
}

/// Sum of squared phase errors over ion pairs.
pub fn infidelity(actual: &DMatrix<f64>, ideal: &DMatrix<f64>, counting: PairCounting) -> f64 {
    assert_eq!(actual.shape(), ideal.shape(), "phase matrices must have the same shape");
    let n = actual.nrows();
    let mut sum = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            sum += (ideal[(a, b)] - actual[(a, b)]).powi(2);
        }
    }
    match counting {
        PairCounting::Ordered => 2.0 * sum,
        PairCounting::Unordered => sum,
    }
}

/// Sum of singular values.
pub fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().sum()
}

/// Nuclear norm of the elementwise absolute value.
pub fn abs_nuclear_norm(target: &TargetMatrix) -> f64 {
    nuclear_norm(&target.phases.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default = "default_k")]
    pub k_nuc: f64,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
}

fn default_k() -> f64 {
    4.0
}
fn default_exponent() -> f64 {
    0.5
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { k_nuc: default_k(), exponent: default_exponent() }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_nuc > 0.0) || !(self.exponent > 0.0 && self.exponent < 1.0) {
            return Err(LsfError::InvalidConfig(format!(
                "estimator needs k > 0 and exponent in (0, 1), got k = {}, exponent = {}",
                self.k_nuc, self.exponent
            )));
        }
        Ok(())
    }

    /// Refits both constants from observed `(N nuc(|phi|), |r| sqrt(2 pi) <eta> T)`
    /// pairs by least squares in log-log space.
    pub fn refit(samples: &[(f64, f64)]) -> Result<Self> {
        let fit = power_law_fit(samples)?;
        let cfg = Self { k_nuc: fit.intercept.exp(), exponent: fit.slope };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Predicted total drive amplitude (rad/s at unit base Rabi frequency):
/// `k (N nuc(|phi|))^p / (sqrt(2 pi) <eta> T)`.
pub fn nuclear_norm_estimate(target: &TargetMatrix, crystal: &IonCrystal, gate_time: f64, config: &EstimatorConfig) -> f64 {
    let n = target.n_ions() as f64;
    let nuc = abs_nuclear_norm(target);
    config.k_nuc * (n * nuc).powf(config.exponent) / ((2.0 * PI).sqrt() * crystal.mean_lamb_dicke() * gate_time)
}

/// Rabi frequency of a single-pair gate at phase `phi`.
pub fn ms_reference_rabi(phi: f64, eta: f64, gate_time: f64) -> f64 {
    phi.abs().sqrt() / ((2.0 * PI).sqrt() * eta * gate_time)
}

/// Per-mode variance `4 sum_n (Re alpha_j^n)^2` at time `t`.
pub fn mode_variance(amplitudes: &DMatrix<f64>, crystal: &IonCrystal, grid: &ToneGrid, t: f64) -> DVector<f64> {
    let alpha = displacement_trajectory(amplitudes, crystal, grid, t);
    DVector::from_iterator(alpha.nrows(), alpha.row_iter().map(|row| 4.0 * row.iter().map(|a| a.re * a.re).sum::<f64>()))
}

/// Variance of ion `n`'s displacement, `sum_j (O_j^n)^2 <x_j^2>`.
pub fn ion_variance(amplitudes: &DMatrix<f64>, crystal: &IonCrystal, grid: &ToneGrid, ion: usize, t: f64) -> f64 {
    let var = mode_variance(amplitudes, crystal, grid, t);
    (0..var.len()).map(|j| crystal.participation[(ion, j)].powi(2) * var[j]).sum()
}

/// Time average of every ion's variance over `samples` uniform instants.
pub fn mean_ion_variances(amplitudes: &DMatrix<f64>, crystal: &IonCrystal, grid: &ToneGrid, samples: usize) -> DVector<f64> {
    let n = crystal.n_ions();
    let mut acc = DVector::zeros(n);
    let weights = crystal.participation.map(|o| o * o);
    for s in 0..samples {
        let t = grid.gate_time * (s as f64 + 0.5) / samples as f64;
        acc += &weights * mode_variance(amplitudes, crystal, grid, t);
    }
    acc / samples.max(1) as f64
}

pub fn overlap(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    crate::zeropool::abs_overlap(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<LineFit> {
    if points.len() < 2 {
        return Err(LsfError::InvalidConfig(format!("a line fit needs two points, got {}", points.len())));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(LsfError::InvalidConfig("line fit abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LineFit { slope, intercept: my - slope * mx, r_squared })
}

/// Line fit of `ln y` against `ln x`; non-positive points are rejected.
pub fn power_law_fit(points: &[(f64, f64)]) -> Result<LineFit> {
    if points.iter().any(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
        return Err(LsfError::InvalidConfig("power-law fit needs positive data".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|p| (p.0.ln(), p.1.ln())).collect();
    linear_fit(&logs)
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal::{build_crystal, CrystalConfig};
    use crate::targets::{target_all_to_all, target_surface_code_cross};

    #[test]
    fn infidelity_arithmetic() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        assert_eq!(infidelity(&a, &a, PairCounting::Ordered), 0.0);
        let b = a.add_scalar(0.01);
        let mut b = b;
        b[(0, 0)] = 0.0;
        b[(1, 1)] = 0.0;
        assert!((infidelity(&b, &a, PairCounting::Ordered) - 2e-4).abs() < 1e-15);
        assert!((infidelity(&b, &a, PairCounting::Unordered) - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn estimate_scales_inversely_with_time() {
        let c = build_crystal(&CrystalConfig::calcium(5)).unwrap();
        let t = target_all_to_all(5, &[0, 1, 2, 3, 4], PI / 4.0).unwrap();
        let cfg = EstimatorConfig::default();
        let e1 = nuclear_norm_estimate(&t, &c, 1e-4, &cfg);
        let e2 = nuclear_norm_estimate(&t, &c, 2e-4, &cfg);
        assert!((e1 / e2 - 2.0).abs() < 1e-12);
        assert_eq!(nuclear_norm_estimate(&TargetMatrix::zeros(5), &c, 1e-4, &cfg), 0.0);
    }

    #[test]
    fn ms_reference_substitution() {
        let v = ms_reference_rabi(PI / 4.0, 0.1, 1e-3);
        assert!((v - (PI / 4.0).sqrt() / ((2.0 * PI).sqrt() * 0.1e-3)).abs() < 1e-9);
        assert!((ms_reference_rabi(PI, 0.1, 1e-3) / v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cross_map_is_cheaper_than_all_to_all() {
        let cross = target_surface_code_cross(49, 7, PI / 4.0, None).unwrap();
        let all = target_all_to_all(49, &cross.coupled_set, PI / 4.0).unwrap();
        let ratio = abs_nuclear_norm(&cross) / abs_nuclear_norm(&all);
        assert!((ratio - 0.5489).abs() < 1e-3, "{ratio}");
    }

    #[test]
    fn fits_recover_exact_lines() {
        let pts: Vec<_> = (1..6).map(|i| (i as f64, 3.0 * (i as f64).powf(0.55))).collect();
        let f = power_law_fit(&pts).unwrap();
        assert!((f.slope - 0.55).abs() < 1e-12 && (f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let cfg = EstimatorConfig::refit(&pts).unwrap();
        assert!((cfg.k_nuc - 3.0).abs() < 1e-10);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}

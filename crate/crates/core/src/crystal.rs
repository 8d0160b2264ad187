//! Equally spaced linear ion crystal and its transverse normal modes.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{LsfError, Result};

const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
const HBAR: f64 = 1.054_571_817e-34;

/// Physical description of the crystal.
///
/// Frequencies are ordinary frequencies in MHz, spacing in µm, mass in
/// atomic mass units, wavenumber in 1/m. `base_rabi` scales every drive
/// amplitude (amplitudes are reported in units of rad/s at `base_rabi = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalConfig {
    pub n_ions: usize,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    #[serde(default = "default_low")]
    pub mode_freq_low: f64,
    #[serde(default = "default_high")]
    pub mode_freq_high: f64,
    #[serde(default = "default_mass")]
    pub ion_mass: f64,
    #[serde(default = "default_wavenumber")]
    pub drive_wavenumber: f64,
    #[serde(default = "default_rabi")]
    pub base_rabi: f64,
    /// Overrides the Coulomb-to-trap curvature ratio derived from spacing,
    /// mass and the top of the band.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coulomb_ratio: Option<f64>,
}

fn default_spacing() -> f64 {
    5.0
}
fn default_low() -> f64 {
    3.0
}
fn default_high() -> f64 {
    3.5
}
fn default_mass() -> f64 {
    40.0
}
/// Effective wavenumber giving eta ~ 0.01 for 40Ca+ at 3 MHz.
fn default_wavenumber() -> f64 {
    1.6e6
}
fn default_rabi() -> f64 {
    1.0
}

impl CrystalConfig {
    /// 40Ca+ at 5 µm with transverse modes spanning 3 to 3.5 MHz.
    pub fn calcium(n_ions: usize) -> Self {
        Self {
            n_ions,
            spacing: default_spacing(),
            mode_freq_low: default_low(),
            mode_freq_high: default_high(),
            ion_mass: default_mass(),
            drive_wavenumber: default_wavenumber(),
            base_rabi: default_rabi(),
            coulomb_ratio: None,
        }
    }

    pub fn with_wavenumber(mut self, k: f64) -> Self {
        self.drive_wavenumber = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ions < 2 {
            return Err(LsfError::InvalidConfig(format!("n_ions must be >= 2, got {}", self.n_ions)));
        }
        if !(self.mode_freq_low > 0.0 && self.mode_freq_low < self.mode_freq_high) {
            return Err(LsfError::InvalidConfig(format!(
                "mode band must satisfy 0 < low < high, got [{}, {}]",
                self.mode_freq_low, self.mode_freq_high
            )));
        }
        let positive = [
            ("spacing", self.spacing),
            ("ion_mass", self.ion_mass),
            ("drive_wavenumber", self.drive_wavenumber),
            ("base_rabi", self.base_rabi),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LsfError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(c) = self.coulomb_ratio {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(LsfError::InvalidConfig(format!("coulomb_ratio must be >= 0, got {c}")));
            }
        }
        Ok(())
    }

    /// Coulomb curvature over trap curvature, `e^2 / (4 pi eps0 m d^3 w_x^2)`,
    /// taking the top of the band as the transverse trap frequency.
    pub fn derived_coulomb_ratio(&self) -> f64 {
        self.coulomb_ratio.unwrap_or_else(|| {
            let mass = self.ion_mass * ATOMIC_MASS_UNIT;
            let d = self.spacing * 1e-6;
            let wx = 2.0 * PI * self.mode_freq_high * 1e6;
            ELEMENTARY_CHARGE.powi(2) / (4.0 * PI * VACUUM_PERMITTIVITY * mass * d.powi(3)) / (wx * wx)
        })
    }
}

/// Normal-mode description of a crystal.
///
/// `participation[(n, j)]` is the normalized participation of ion `n` in
/// mode `j`; modes are ordered by ascending frequency, so the
/// center-of-mass mode is last.
#[derive(Debug, Clone, PartialEq)]
pub struct IonCrystal {
    pub config: CrystalConfig,
    /// Angular frequencies in rad/s, ascending.
    pub mode_freqs: DVector<f64>,
    pub participation: DMatrix<f64>,
    pub lamb_dicke: DVector<f64>,
}

#[derive(Serialize)]
struct CrystalRecord<'a> {
    n_ions: usize,
    mode_freqs: &'a [f64],
    participation: Vec<f64>,
    lamb_dicke: &'a [f64],
}

impl IonCrystal {
    pub fn n_ions(&self) -> usize {
        self.mode_freqs.len()
    }

    pub fn mean_lamb_dicke(&self) -> f64 {
        self.lamb_dicke.mean()
    }

    /// Index of the center-of-mass mode (uniform participation).
    pub fn com_mode(&self) -> usize {
        let n = self.n_ions();
        (0..n)
            .max_by(|&a, &b| {
                let sa: f64 = self.participation.column(a).sum().abs();
                let sb: f64 = self.participation.column(b).sum().abs();
                sa.total_cmp(&sb)
            })
            .unwrap_or(n - 1)
    }

    /// Canonical JSON used for provenance hashing: mode frequencies,
    /// participation in row-major order, Lamb-Dicke parameters.
    pub fn to_json(&self) -> String {
        let n = self.n_ions();
        let participation = (0..n).flat_map(|r| (0..n).map(move |c| (r, c))).map(|(r, c)| self.participation[(r, c)]);
        let rec = CrystalRecord {
            n_ions: n,
            mode_freqs: self.mode_freqs.as_slice(),
            participation: participation.collect(),
            lamb_dicke: self.lamb_dicke.as_slice(),
        };
        serde_json::to_string(&rec).expect("crystal record serializes")
    }

    pub fn hash(&self) -> String {
        crate::io::sha256_hex(self.to_json().as_bytes())
    }
}

/// Dimensionless transverse Hessian in units of the trap curvature.
pub fn transverse_hessian(n: usize, coulomb_ratio: f64) -> DMatrix<f64> {
    let mut h = DMatrix::identity(n, n);
    for a in 0..n {
        for b in 0..n {
            if a != b {
                let k = coulomb_ratio / ((a as f64 - b as f64).abs().powi(3));
                h[(a, a)] -= k;
                h[(a, b)] += k;
            }
        }
    }
    h
}

pub fn build_crystal(config: &CrystalConfig) -> Result<IonCrystal> {
    config.validate()?;
    let n = config.n_ions;
    let hessian = transverse_hessian(n, config.derived_coulomb_ratio());
    let eig = SymmetricEigen::new(hessian);

    let mut modes: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|j| {
            let mut v: Vec<f64> = eig.eigenvectors.column(j).iter().cloned().collect();
            // sign convention: first component that is clearly nonzero is positive
            if let Some(&lead) = v.iter().find(|x| x.abs() > 1e-9) {
                if lead < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
            }
            (eig.eigenvalues[j], v)
        })
        .collect();
    modes.sort_by(|a, b| {
        a.0.total_cmp(&b.0).then_with(|| {
            a.1.iter()
                .zip(&b.1)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });

    let min_eig = modes[0].0;
    if min_eig <= 0.0 {
        return Err(LsfError::UnstableCrystal { min_eigenvalue: min_eig });
    }

    let raw: Vec<f64> = modes.iter().map(|m| m.0.sqrt()).collect();
    let (rmin, rmax) = (raw[0], raw[n - 1]);
    let lo = 2.0 * PI * config.mode_freq_low * 1e6;
    let hi = 2.0 * PI * config.mode_freq_high * 1e6;
    let span = rmax - rmin;
    let mode_freqs = DVector::from_iterator(
        n,
        raw.iter().map(|&r| if span > 0.0 { lo + (r - rmin) / span * (hi - lo) } else { lo }),
    );

    let mut participation = DMatrix::zeros(n, n);
    for (j, (_, v)) in modes.iter().enumerate() {
        for (ion, &x) in v.iter().enumerate() {
            participation[(ion, j)] = x;
        }
    }

    let mass = config.ion_mass * ATOMIC_MASS_UNIT;
    let lamb_dicke = mode_freqs.map(|nu| config.drive_wavenumber * (HBAR / (2.0 * mass * nu)).sqrt());

    Ok(IonCrystal { config: config.clone(), mode_freqs, participation, lamb_dicke })
}

/// Smallest gap between adjacent used modes, in rad/s. `used` holds mode
/// indices; `None` means all modes.
pub fn min_mode_gap(crystal: &IonCrystal, used: Option<&[usize]>) -> Result<f64> {
    let n = crystal.n_ions();
    let mut freqs: Vec<f64> = match used {
        Some(idx) => {
            if let Some(&bad) = idx.iter().find(|&&j| j >= n) {
                return Err(LsfError::InvalidConfig(format!("mode index {bad} out of range for {n} modes")));
            }
            idx.iter().map(|&j| crystal.mode_freqs[j]).collect()
        }
        None => crystal.mode_freqs.iter().cloned().collect(),
    };
    freqs.sort_by(f64::total_cmp);
    freqs.dedup();
    if freqs.len() < 2 {
        return Err(LsfError::TooFewModes(freqs.len()));
    }
    Ok(freqs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min))
}

/// `2 pi / gap` with the gap taken as an angular frequency.
pub fn min_gate_time(crystal: &IonCrystal) -> Result<f64> {
    Ok(2.0 * PI / min_mode_gap(crystal, None)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_ions_have_symmetric_modes() {
        let c = build_crystal(&CrystalConfig::calcium(2)).unwrap();
        let s = 1.0 / 2f64.sqrt();
        // stretch mode is lower for transverse motion
        assert!((c.participation[(0, 0)] - s).abs() < 1e-12);
        assert!((c.participation[(1, 0)] + s).abs() < 1e-12);
        assert!((c.participation[(0, 1)] - s).abs() < 1e-12);
        assert!((c.participation[(1, 1)] - s).abs() < 1e-12);
        assert_eq!(c.com_mode(), 1);
    }

    #[test]
    fn band_edges_are_exact() {
        let c = build_crystal(&CrystalConfig::calcium(7)).unwrap();
        assert!((c.mode_freqs[0] - 2.0 * PI * 3e6).abs() < 1e-6);
        assert!((c.mode_freqs[6] - 2.0 * PI * 3.5e6).abs() < 1e-6);
        assert!(c.lamb_dicke.iter().all(|&e| e > 0.0));
    }

    #[test]
    fn weak_trap_is_unstable() {
        let mut cfg = CrystalConfig::calcium(10);
        cfg.coulomb_ratio = Some(0.5);
        assert!(matches!(build_crystal(&cfg), Err(LsfError::UnstableCrystal { .. })));
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = CrystalConfig::calcium(1);
        assert!(build_crystal(&cfg).is_err());
        cfg.n_ions = 3;
        cfg.mode_freq_low = 4.0;
        assert!(build_crystal(&cfg).is_err());
    }

    #[test]
    fn gap_of_single_pair() {
        let mut c = build_crystal(&CrystalConfig::calcium(2)).unwrap();
        c.mode_freqs = DVector::from_vec(vec![2.0 * PI * 3.0e6, 2.0 * PI * 3.1e6]);
        let g = min_mode_gap(&c, None).unwrap();
        assert!((g - 2.0 * PI * 0.1e6).abs() < 1e-6);
        assert!(min_mode_gap(&c, Some(&[1])).is_err());
    }

    #[test]
    fn gate_time_from_gap() {
        let mut c = build_crystal(&CrystalConfig::calcium(3)).unwrap();
        c.mode_freqs = DVector::from_vec(vec![0.0, 2.0 * PI * 100.0, 2.0 * PI * 250.0]);
        assert!((min_gate_time(&c).unwrap() - 0.01).abs() < 1e-15);
        c.mode_freqs *= 2.0;
        assert!((min_gate_time(&c).unwrap() - 0.005).abs() < 1e-15);
    }

    #[test]
    fn equal_spacing_gap_is_the_spacing() {
        let mut c = build_crystal(&CrystalConfig::calcium(5)).unwrap();
        c.mode_freqs = DVector::from_fn(5, |j, _| 10.0 + 0.25 * j as f64);
        assert!((min_mode_gap(&c, None).unwrap() - 0.25).abs() < 1e-12);
    }
}

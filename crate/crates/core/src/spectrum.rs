//! Drive-tone grid and the kernel basis of the displacement-closure matrix.
//!
//! Drives are pure sine quadratures on a set of tones. Closing every
//! mode's phase-space loop at the gate time is linear in the amplitudes, so
//! it is imposed once by expanding each ion's drive in an orthonormal basis
//! of the closure matrix's null space.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::crystal::IonCrystal;
use crate::error::{LsfError, Result};
use crate::integrals::{cos_sin, sin_sin};
use crate::linalg::null_space;

pub const DEFAULT_KERNEL_TOLERANCE: f64 = 1e-9;

/// Relative tolerance for treating a band edge as landing on a harmonic.
const SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ToneGrid {
    pub gate_time: f64,
    /// Harmonic numbers of the tones; empty for an explicit tone list.
    pub harmonics: Vec<u64>,
    /// Tone angular frequencies, ascending.
    pub tone_freqs: DVector<f64>,
    pub margin: f64,
}

impl ToneGrid {
    /// Grid built from arbitrary distinct tones (not necessarily harmonic).
    pub fn from_tones(gate_time: f64, mut tones: Vec<f64>) -> Result<Self> {
        if !(gate_time > 0.0 && gate_time.is_finite()) {
            return Err(LsfError::InvalidConfig(format!("gate time must be positive, got {gate_time}")));
        }
        if tones.is_empty() {
            return Err(LsfError::InvalidConfig("empty tone list".into()));
        }
        tones.sort_by(f64::total_cmp);
        if tones.windows(2).any(|w| w[0] == w[1]) {
            return Err(LsfError::InvalidConfig("tone frequencies must be distinct".into()));
        }
        Ok(Self { gate_time, harmonics: Vec::new(), tone_freqs: DVector::from_vec(tones), margin: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.tone_freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tone_freqs.is_empty()
    }

    /// Harmonic spacing `2 pi / T`.
    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.gate_time
    }

    pub fn hash(&self) -> String {
        let head = [self.gate_time, self.margin, self.len() as f64];
        crate::io::hash_f64(head.into_iter().chain(self.tone_freqs.iter().cloned()))
    }
}

/// Default band padding, three harmonic spacings.
pub fn default_margin(gate_time: f64) -> f64 {
    3.0 * 2.0 * PI / gate_time
}

/// Default restriction window, four harmonic spacings.
pub fn default_window(gate_time: f64) -> f64 {
    4.0 * 2.0 * PI / gate_time
}

fn snap_ceil(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= SNAP * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

fn snap_floor(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= SNAP * x.abs().max(1.0) {
        r
    } else {
        x.floor()
    }
}

/// Every harmonic `2 pi h / T` inside `[nu_1 - margin, nu_N + margin]`.
pub fn build_tone_grid(crystal: &IonCrystal, gate_time: f64, margin: f64) -> Result<ToneGrid> {
    if !(gate_time > 0.0 && gate_time.is_finite()) {
        return Err(LsfError::InvalidConfig(format!("gate time must be positive, got {gate_time}")));
    }
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(LsfError::InvalidConfig(format!("margin must be >= 0, got {margin}")));
    }
    let n = crystal.n_ions();
    let low = (crystal.mode_freqs[0] - margin).max(0.0);
    let high = crystal.mode_freqs[n - 1] + margin;
    let h_lo = snap_ceil(low * gate_time / (2.0 * PI)).max(1.0);
    let h_hi = snap_floor(high * gate_time / (2.0 * PI));
    if h_hi < h_lo {
        // next longer gate time at which the first harmonic above the band enters it
        let h_next = h_lo.max(1.0);
        return Err(LsfError::EmptyToneGrid { gate_time, min_gate_time: 2.0 * PI * h_next / high });
    }
    let harmonics: Vec<u64> = (h_lo as u64..=h_hi as u64).collect();
    let tone_freqs = DVector::from_iterator(harmonics.len(), harmonics.iter().map(|&h| 2.0 * PI * h as f64 / gate_time));
    Ok(ToneGrid { gate_time, harmonics, tone_freqs, margin })
}

/// Keeps the tones lying within `window` of some mode frequency.
pub fn restrict_tones_near_modes(grid: &ToneGrid, crystal: &IonCrystal, window: f64) -> Result<ToneGrid> {
    if !(window > 0.0) {
        return Err(LsfError::InvalidConfig(format!("window must be positive, got {window}")));
    }
    let near = |w: f64| crystal.mode_freqs.iter().any(|&nu| (w - nu).abs() <= window * (1.0 + SNAP));
    let keep: Vec<usize> = (0..grid.len()).filter(|&i| near(grid.tone_freqs[i])).collect();
    if keep.is_empty() {
        return Err(LsfError::EmptyRestriction { window });
    }
    let harmonics = if grid.harmonics.is_empty() { Vec::new() } else { keep.iter().map(|&i| grid.harmonics[i]).collect() };
    Ok(ToneGrid {
        gate_time: grid.gate_time,
        harmonics,
        tone_freqs: DVector::from_iterator(keep.len(), keep.iter().map(|&i| grid.tone_freqs[i])),
        margin: grid.margin,
    })
}

/// Displacement-closure matrix, `2N x M`.
///
/// Row `j` is `int_0^T sin(nu_j t) sin(w_m t) dt` and row `N + j` is
/// `int_0^T cos(nu_j t) sin(w_m t) dt`; together they are the imaginary and
/// real parts of the final displacement of mode `j` per unit tone amplitude.
pub fn build_l_matrix(crystal: &IonCrystal, grid: &ToneGrid) -> DMatrix<f64> {
    let n = crystal.n_ions();
    let t = grid.gate_time;
    DMatrix::from_fn(2 * n, grid.len(), |row, m| {
        let a = crystal.mode_freqs[row % n] * t;
        let b = grid.tone_freqs[m] * t;
        if row < n {
            t * sin_sin(a, b)
        } else {
            t * cos_sin(a, b)
        }
    })
}

#[derive(Debug, Clone)]
pub struct KernelBasis {
    pub l_matrix: DMatrix<f64>,
    /// `M x K`, orthonormal columns spanning the numerical null space.
    pub basis: DMatrix<f64>,
    pub tolerance: f64,
    pub rank: usize,
}

impl KernelBasis {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn raw_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Tone amplitudes for one ion from its kernel coordinates.
    pub fn expand(&self, coords: &DVector<f64>) -> DVector<f64> {
        &self.basis * coords
    }

    /// `max |L B| / max |L|`.
    pub fn closure_residual(&self) -> f64 {
        let lmax = self.l_matrix.amax();
        if lmax == 0.0 {
            return 0.0;
        }
        (&self.l_matrix * &self.basis).amax() / lmax
    }
}

pub fn kernel_basis(l: &DMatrix<f64>, tolerance: f64) -> Result<KernelBasis> {
    if !(tolerance > 0.0 && tolerance < 1.0) {
        return Err(LsfError::InvalidConfig(format!("kernel tolerance must lie in (0, 1), got {tolerance}")));
    }
    let (basis, rank) = null_space(l, tolerance);
    if basis.ncols() == 0 {
        return Err(LsfError::TrivialKernel { tones: l.ncols(), rank });
    }
    Ok(KernelBasis { l_matrix: l.clone(), basis, tolerance, rank })
}

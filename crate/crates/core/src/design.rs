//! Everything derived from a crystal and a gate time, built once and shared.

use crate::coupling::CouplingSet;
use crate::crystal::IonCrystal;
use crate::error::Result;
use crate::spectrum::{
    build_l_matrix, build_tone_grid, default_margin, kernel_basis, restrict_tones_near_modes, KernelBasis, ToneGrid,
    DEFAULT_KERNEL_TOLERANCE,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptions {
    /// Band extension beyond the outermost modes; three tone spacings when absent.
    pub margin: Option<f64>,
    /// Keep only tones this close to a mode.
    pub window: Option<f64>,
    pub kernel_tolerance: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self { margin: None, window: None, kernel_tolerance: DEFAULT_KERNEL_TOLERANCE }
    }
}

#[derive(Debug, Clone)]
pub struct GateDesign {
    pub crystal: IonCrystal,
    pub grid: ToneGrid,
    pub kernel: KernelBasis,
    pub couplings: CouplingSet,
}

impl GateDesign {
    pub fn new(crystal: IonCrystal, gate_time: f64, options: &GridOptions) -> Result<Self> {
        let grid = Self::tone_grid(&crystal, gate_time, options)?;
        let kernel = kernel_basis(&build_l_matrix(&crystal, &grid), options.kernel_tolerance)?;
        Self::from_parts(crystal, grid, kernel)
    }

    /// The tone grid [`GateDesign::new`] would use.
    pub fn tone_grid(crystal: &IonCrystal, gate_time: f64, options: &GridOptions) -> Result<ToneGrid> {
        let margin = options.margin.unwrap_or_else(|| default_margin(gate_time));
        let grid = build_tone_grid(crystal, gate_time, margin)?;
        match options.window {
            Some(window) => restrict_tones_near_modes(&grid, crystal, window),
            None => Ok(grid),
        }
    }

    /// Assembles a design around a kernel computed elsewhere, e.g. loaded from a cache.
    pub fn from_parts(crystal: IonCrystal, grid: ToneGrid, kernel: KernelBasis) -> Result<Self> {
        let couplings = CouplingSet::build(&crystal, &grid, &kernel)?;
        Ok(Self { crystal, grid, kernel, couplings })
    }

    pub fn n_ions(&self) -> usize {
        self.crystal.n_ions()
    }

    pub fn gate_time(&self) -> f64 {
        self.grid.gate_time
    }

    pub fn crystal_hash(&self) -> String {
        self.crystal.hash()
    }

    pub fn grid_hash(&self) -> String {
        self.grid.hash()
    }
}

//! On-disk cache of kernel bases keyed by crystal, tone grid and tolerance.

use std::path::{Path, PathBuf};

use lsf_core::crystal::IonCrystal;
use lsf_core::design::{GateDesign, GridOptions};
use lsf_core::io::{pack_f64, sha256_hex, unpack_f64};
use lsf_core::spectrum::{build_l_matrix, kernel_basis, KernelBasis, ToneGrid};
use lsf_core::LsfError;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{read_file, write_file, CliResult};

const KERNEL_FORMAT: &str = "lsf-kernel-v1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelRecord {
    format: String,
    key: String,
    tones: usize,
    dim: usize,
    rank: usize,
    tolerance: f64,
    /// Column-major `tones x dim`.
    basis: String,
}

pub fn kernel_key(crystal: &IonCrystal, grid: &ToneGrid, tolerance: f64) -> String {
    sha256_hex(format!("{}:{}:{:016x}", crystal.hash(), grid.hash(), tolerance.to_bits()).as_bytes())
}

fn path_for(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("kernel-{key}.json"))
}

fn load(path: &Path, key: &str, l_matrix: &DMatrix<f64>) -> CliResult<Option<KernelBasis>> {
    if !path.exists() {
        return Ok(None);
    }
    let rec: KernelRecord = serde_json::from_str(&read_file(path)?)?;
    if rec.format != KERNEL_FORMAT || rec.key != key || rec.tones != l_matrix.ncols() {
        return Ok(None);
    }
    let values = unpack_f64(&rec.basis)?;
    if values.len() != rec.tones * rec.dim {
        return Err(LsfError::Format(format!("cached kernel {} has {} values", path.display(), values.len())).into());
    }
    Ok(Some(KernelBasis {
        l_matrix: l_matrix.clone(),
        basis: DMatrix::from_column_slice(rec.tones, rec.dim, &values),
        tolerance: rec.tolerance,
        rank: rec.rank,
    }))
}

/// Builds the design, reusing a cached kernel from `cache` when present.
pub fn build_design(crystal: IonCrystal, gate_time: f64, options: &GridOptions, cache: Option<&Path>) -> CliResult<GateDesign> {
    let Some(dir) = cache else {
        return Ok(GateDesign::new(crystal, gate_time, options)?);
    };
    let grid = GateDesign::tone_grid(&crystal, gate_time, options)?;
    let l_matrix = build_l_matrix(&crystal, &grid);
    let key = kernel_key(&crystal, &grid, options.kernel_tolerance);
    let path = path_for(dir, &key);
    let kernel = match load(&path, &key, &l_matrix)? {
        Some(k) => k,
        None => {
            let k = kernel_basis(&l_matrix, options.kernel_tolerance)?;
            std::fs::create_dir_all(dir).map_err(LsfError::from)?;
            let rec = KernelRecord {
                format: KERNEL_FORMAT.into(),
                key: key.clone(),
                tones: k.raw_dim(),
                dim: k.dim(),
                rank: k.rank,
                tolerance: k.tolerance,
                basis: pack_f64(k.basis.as_slice()),
            };
            write_file(&path, &serde_json::to_string(&rec)?)?;
            k
        }
    };
    Ok(GateDesign::from_parts(crystal, grid, kernel)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lsf_core::crystal::{build_crystal, min_gate_time, CrystalConfig};

    #[test]
    fn cached_kernel_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let c = build_crystal(&CrystalConfig::calcium(4)).unwrap();
        let t = 2.0 * min_gate_time(&c).unwrap();
        let opts = GridOptions::default();
        let fresh = build_design(c.clone(), t, &opts, Some(dir.path())).unwrap();
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        let cached = build_design(c.clone(), t, &opts, Some(dir.path())).unwrap();
        let direct = GateDesign::new(c, t, &opts).unwrap();
        assert_eq!(fresh.kernel.basis, cached.kernel.basis);
        assert_eq!(direct.kernel.basis, cached.kernel.basis);
        assert_eq!(direct.couplings.mode_forms, cached.couplings.mode_forms);
    }
}

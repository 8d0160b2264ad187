//! Desk-scale studies shared by the CLI verbs and the acceptance suite.

use std::f64::consts::PI;
use std::path::Path;

use lsf_core::analysis::{abs_nuclear_norm, median, nuclear_norm_estimate, power_law_fit, LineFit};
use lsf_core::crystal::{build_crystal, min_gate_time, CrystalConfig};
use lsf_core::design::GateDesign;
use lsf_core::lsf::{convert, expand_global, refine, solve, DriveSolution, SolverConfig};
use lsf_core::targets::{parse_target_spec, TargetMatrix};
use lsf_core::zeropool::{abs_overlap, aggregate_pool, Ansatz, PoolRequest, SolutionPool};
use rayon::prelude::*;

use crate::cache::build_design;
use crate::config::{GateTimeSpec, GridConfig, RunConfig};
use crate::error::{CliError, CliResult};

/// Normalization applied to the scaling data.
pub const NORMALIZED_POWER: &str = "normalized_power = |r| / (Omega_nuc * T/T_min)";
pub const OMEGA_NUC: &str = "Omega_nuc = k_nuc (N nuc(|phi|))^exponent / (sqrt(2 pi) <eta> T)";

/// Design for `crystal` at the configured gate time.
pub fn design_for(crystal: &CrystalConfig, gate_time: GateTimeSpec, grid: &GridConfig, cache: Option<&Path>) -> CliResult<GateDesign> {
    let c = build_crystal(crystal)?;
    let t = gate_time.resolve(&c)?;
    build_design(c, t, &grid.options(t), cache)
}

pub fn pool_for(design: &GateDesign, request: &PoolRequest) -> CliResult<SolutionPool> {
    Ok(aggregate_pool(&design.couplings, request, &design.crystal_hash(), &design.grid_hash())?)
}

/// Ranked solutions for `target` from a fresh pool.
pub fn solve_fresh(design: &GateDesign, target: &TargetMatrix, request: &PoolRequest, solver: &SolverConfig) -> CliResult<Vec<DriveSolution>> {
    let pool = pool_for(design, request)?;
    Ok(solve(&pool, &design.couplings, &design.kernel, target, solver)?)
}

/// Random targets of varied density and strength, as spec strings.
pub fn assorted_targets(count: usize) -> Vec<String> {
    (0..count as u64)
        .map(|s| {
            let density = 0.2 + 0.8 * (s % 5) as f64 / 4.0;
            let amplitude = PI / 4.0 * (0.25 + 0.75 * ((s / 5) % 4) as f64 / 3.0);
            format!("random:{density}:{s}:{amplitude}")
        })
        .collect()
}

/// One solved configuration of a power study.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerPoint {
    pub n_ions: usize,
    pub time_ratio: f64,
    pub gate_time: f64,
    pub total_rabi: f64,
    pub omega_nuc: f64,
    pub nuc: f64,
    pub infidelity: f64,
    pub label: String,
}

impl PowerPoint {
    pub fn normalized_power(&self) -> f64 {
        self.total_rabi / (self.omega_nuc * self.time_ratio)
    }
}

fn best_point(design: &GateDesign, target: &TargetMatrix, t_min: f64, cfg: &RunConfig, pool_count: usize) -> CliResult<PowerPoint> {
    let mut request = cfg.pool.request(cfg.seed);
    request.ansatz = Ansatz::Multi;
    request.count = pool_count;
    request.max_attempts = 4 * pool_count + 16;
    let best = solve_fresh(design, target, &request, &cfg.solver)?.remove(0);
    let t = design.gate_time();
    Ok(PowerPoint {
        n_ions: design.n_ions(),
        time_ratio: t / t_min,
        gate_time: t,
        total_rabi: best.total_rabi,
        omega_nuc: nuclear_norm_estimate(target, &design.crystal, t, &cfg.estimator),
        nuc: abs_nuclear_norm(target),
        infidelity: best.infidelity,
        label: target.label.clone(),
    })
}

/// Best power over the `ions x time_ratios` grid of the scaling settings.
pub fn scaling(cfg: &RunConfig, cache: Option<&Path>) -> CliResult<Vec<PowerPoint>> {
    let s = &cfg.scaling;
    let mut points = Vec::new();
    for &n in &s.ions {
        cfg.check_multi_size(n)?;
        let crystal_cfg = CrystalConfig { n_ions: n, ..cfg.crystal.clone() };
        let crystal = build_crystal(&crystal_cfg)?;
        let t_min = min_gate_time(&crystal)?;
        let target = parse_target_spec(&s.target, n)?;
        for &ratio in &s.time_ratios {
            let design = design_for(&crystal_cfg, GateTimeSpec::MultipleOfTMin(ratio), &cfg.grid, cache)?;
            points.push(best_point(&design, &target, t_min, cfg, s.pool_count)?);
        }
    }
    Ok(points)
}

/// Log-log fit of normalized power against `T / T_min`.
pub fn scaling_fit(points: &[PowerPoint]) -> CliResult<LineFit> {
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.time_ratio, p.normalized_power())).collect();
    Ok(power_law_fit(&xy)?)
}

/// Best power for each collapse target at the run's crystal and gate time.
pub fn collapse(cfg: &RunConfig, cache: Option<&Path>) -> CliResult<Vec<PowerPoint>> {
    let n = cfg.crystal.n_ions;
    cfg.check_multi_size(n)?;
    let specs = if cfg.collapse.targets.is_empty() { assorted_targets(cfg.collapse.count) } else { cfg.collapse.targets.clone() };
    if specs.is_empty() {
        return Err(CliError::Config("collapse needs at least one target".into()));
    }
    let design = design_for(&cfg.crystal, cfg.gate_time, &cfg.grid, cache)?;
    let t_min = min_gate_time(&design.crystal)?;
    let mut points = Vec::new();
    for spec in &specs {
        let target = parse_target_spec(spec, n)?;
        if target.coupled_set.is_empty() {
            continue;
        }
        points.push(best_point(&design, &target, t_min, cfg, cfg.collapse.pool_count)?);
    }
    Ok(points)
}

/// Log-log fit of best power against `nuc(|phi|)`.
pub fn collapse_fit(points: &[PowerPoint]) -> CliResult<LineFit> {
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.nuc, p.total_rabi)).collect();
    Ok(power_law_fit(&xy)?)
}

/// A multi-address entry paired with its closest global entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub target: String,
    pub multi_seed: u64,
    pub global_seed: u64,
    /// Overlap of the two zero-phase vectors.
    pub zero_overlap: f64,
    /// Overlap of the two refined solutions.
    pub solution_overlap: f64,
    pub multi_rabi: f64,
    pub global_rabi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub target: String,
    pub rows: Vec<CompareRow>,
    /// Median global-derived power over median multi-derived power.
    pub power_ratio: f64,
    pub median_zero_overlap: f64,
    pub median_solution_overlap: f64,
}

fn convert_refine(entry: &lsf_core::zeropool::ZeroPhaseSolution, design: &GateDesign, target: &TargetMatrix, solver: &SolverConfig) -> Option<DriveSolution> {
    let c = convert(&entry.coords, &design.couplings, &design.kernel, target, solver).ok()?;
    refine(&c, &design.couplings, &design.kernel, target, solver).ok()
}

/// Global and multi-address pools of `count` entries each, converted to every target.
pub fn compare_ansatz(design: &GateDesign, targets: &[TargetMatrix], count: usize, seed: u64, solver: &SolverConfig) -> CliResult<Vec<Comparison>> {
    let n = design.n_ions();
    let request = |ansatz| PoolRequest { first_seed: seed, ..PoolRequest::new(ansatz, count) };
    let global = pool_for(design, &request(Ansatz::Global))?;
    let multi = pool_for(design, &request(Ansatz::Multi))?;
    let stacked: Vec<_> = global.entries.iter().map(|g| expand_global(&g.coords, n)).collect();
    let partner: Vec<usize> = multi
        .entries
        .iter()
        .map(|m| (0..stacked.len()).max_by(|&a, &b| abs_overlap(&stacked[a], &m.coords).total_cmp(&abs_overlap(&stacked[b], &m.coords))).unwrap_or(0))
        .collect();
    let mut out = Vec::new();
    for target in targets {
        let gs: Vec<Option<DriveSolution>> = global.entries.par_iter().map(|e| convert_refine(e, design, target, solver)).collect();
        let ms: Vec<Option<DriveSolution>> = multi.entries.par_iter().map(|e| convert_refine(e, design, target, solver)).collect();
        let mut rows = Vec::new();
        for (i, m) in multi.entries.iter().enumerate() {
            let gi = partner[i];
            let (Some(ms), Some(gsol)) = (&ms[i], &gs[gi]) else { continue };
            rows.push(CompareRow {
                target: target.label.clone(),
                multi_seed: m.seed,
                global_seed: global.entries[gi].seed,
                zero_overlap: abs_overlap(&stacked[gi], &m.coords),
                solution_overlap: abs_overlap(&gsol.coords, &ms.coords),
                multi_rabi: ms.total_rabi,
                global_rabi: gsol.total_rabi,
            });
        }
        if rows.is_empty() {
            return Err(lsf_core::LsfError::NoUsableEntries.into());
        }
        let rg: Vec<f64> = gs.iter().flatten().map(|s| s.total_rabi).collect();
        let rm: Vec<f64> = ms.iter().flatten().map(|s| s.total_rabi).collect();
        let oz: Vec<f64> = rows.iter().map(|r| r.zero_overlap).collect();
        let or: Vec<f64> = rows.iter().map(|r| r.solution_overlap).collect();
        out.push(Comparison {
            target: target.label.clone(),
            power_ratio: median(&rg) / median(&rm),
            median_zero_overlap: median(&oz),
            median_solution_overlap: median(&or),
            rows,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assorted_targets_parse_and_vary() {
        let specs = assorted_targets(20);
        assert_eq!(specs.len(), 20);
        let nucs: Vec<f64> = specs.iter().map(|s| abs_nuclear_norm(&parse_target_spec(s, 12).unwrap())).collect();
        assert!(nucs.iter().all(|&v| v > 0.0));
        let max = nucs.iter().cloned().fold(0.0, f64::max);
        let min = nucs.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min > 5.0);
    }

    #[test]
    fn degenerate_two_ion_comparison_completes() {
        let design = design_for(&CrystalConfig::calcium(2), GateTimeSpec::MultipleOfTMin(2.0), &GridConfig::default(), None).unwrap();
        let t = parse_target_spec("pairs:0-1", 2).unwrap();
        let cmp = compare_ansatz(&design, &[t], 3, 0, &SolverConfig::default()).unwrap();
        assert_eq!(cmp.len(), 1);
        assert!(!cmp[0].rows.is_empty());
        assert!(cmp[0].power_ratio.is_finite());
    }
}

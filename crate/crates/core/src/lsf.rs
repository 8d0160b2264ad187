//! From zero-phase vectors to drives for arbitrary targets.
//!
//! A pool entry `z` carries no phase, so `lambda z + u / lambda` with
//! `J(z) u = phi` hits the target up to the quadratic remainder
//! `u^T A u / lambda^2`. Picking `lambda` bounds that remainder, and a
//! projected descent then trades the remaining slack for lower total power.
//!
//! All arithmetic happens in the dimensionless coordinates of
//! [`CouplingSet`]; [`DriveSolution`] stores physical amplitudes.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{infidelity, PairCounting};
use crate::coupling::CouplingSet;
use crate::crystal::{min_mode_gap, IonCrystal};
use crate::error::{LsfError, Result};
use crate::integrals::mode_form_entry;
use crate::io::{pack_f64, unpack_f64};
use crate::linalg::{min_norm_solve, Jacobian};
use crate::spectrum::{KernelBasis, ToneGrid};
use crate::targets::TargetMatrix;
use crate::zeropool::SolutionPool;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Bound on every constraint's quadratic remainder after conversion.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Relative norm reduction requested per descent step.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_patience")]
    pub stall_patience: usize,
    /// Relative change of `|r|` over `stall_patience` steps counted as a stall.
    #[serde(default = "default_stall_tol")]
    pub stall_tolerance: f64,
    /// Newton corrections applied after each descent step.
    #[serde(default = "default_projection_steps")]
    pub projection_steps: usize,
    /// Infidelity at which the Newton corrections stop.
    #[serde(default = "default_polish_target")]
    pub polish_target: f64,
    /// Solutions above this infidelity are ranked after all others.
    #[serde(default = "default_rank_threshold")]
    pub rank_threshold: f64,
    #[serde(default)]
    pub counting: PairCounting,
}

fn default_epsilon() -> f64 {
    1e-3
}
fn default_delta() -> f64 {
    0.02
}
fn default_max_iters() -> usize {
    2000
}
fn default_patience() -> usize {
    10
}
fn default_stall_tol() -> f64 {
    1e-4
}
fn default_projection_steps() -> usize {
    6
}
fn default_polish_target() -> f64 {
    1e-10
}
fn default_rank_threshold() -> f64 {
    1e-4
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: default_epsilon(),
            delta: default_delta(),
            max_iters: default_max_iters(),
            stall_patience: default_patience(),
            stall_tolerance: default_stall_tol(),
            projection_steps: default_projection_steps(),
            polish_target: default_polish_target(),
            rank_threshold: default_rank_threshold(),
            counting: PairCounting::Ordered,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !(self.delta >= 0.0) {
            return Err(LsfError::InvalidConfig(format!(
                "solver needs epsilon > 0 and delta >= 0, got {} and {}",
                self.epsilon, self.delta
            )));
        }
        Ok(())
    }

    /// Largest per-constraint remainder that keeps the converted
    /// infidelity at or below `budget` for `pairs` constraints.
    pub fn epsilon_for_budget(budget: f64, pairs: usize, counting: PairCounting) -> f64 {
        let copies = match counting {
            PairCounting::Ordered => 2.0,
            PairCounting::Unordered => 1.0,
        };
        (budget / (copies * pairs.max(1) as f64)).sqrt()
    }
}

/// Drive amplitudes for every ion.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveSolution {
    /// Stacked per-ion kernel coordinates in rad/s, `N K` entries.
    pub coords: DVector<f64>,
    /// Tone amplitudes in rad/s, one row per ion.
    pub amplitudes: DMatrix<f64>,
    /// Euclidean norm of `coords`.
    pub total_rabi: f64,
    pub lambda: f64,
    /// Seed of the pool entry the solution came from.
    pub origin: Option<u64>,
    pub infidelity: f64,
    /// `|r|` after conversion and after every accepted descent step.
    pub rabi_trace: Vec<f64>,
    pub warning: Option<String>,
}

impl DriveSolution {
    pub fn from_coords(coords: DVector<f64>, kernel: &KernelBasis, n_ions: usize) -> Result<Self> {
        let k = kernel.dim();
        if coords.len() != n_ions * k {
            return Err(LsfError::Dimension(format!("expected {} coordinates, got {}", n_ions * k, coords.len())));
        }
        let mut amplitudes = DMatrix::zeros(n_ions, kernel.raw_dim());
        for n in 0..n_ions {
            let row = &kernel.basis * coords.rows(n * k, k);
            amplitudes.set_row(n, &row.transpose());
        }
        let total_rabi = coords.norm();
        Ok(Self {
            coords,
            amplitudes,
            total_rabi,
            lambda: 1.0,
            origin: None,
            infidelity: f64::NAN,
            rabi_trace: Vec::new(),
            warning: None,
        })
    }

    pub fn n_ions(&self) -> usize {
        self.amplitudes.nrows()
    }

    /// Coordinates in the dimensionless units of `set`.
    pub fn scaled_coords(&self, set: &CouplingSet) -> Result<DVector<f64>> {
        if self.coords.len() != set.n_ions() * set.dim() {
            return Err(LsfError::Dimension(format!(
                "solution has {} coordinates, coupling set expects {}",
                self.coords.len(),
                set.n_ions() * set.dim()
            )));
        }
        Ok(&self.coords * set.drive_scale)
    }

    /// `|r_n|` per ion.
    pub fn ion_power(&self) -> DVector<f64> {
        DVector::from_iterator(self.n_ions(), self.amplitudes.row_iter().map(|r| r.norm()))
    }

    /// Mean and standard deviation over ions of each tone's |amplitude|.
    pub fn tone_statistics(&self) -> Vec<(f64, f64)> {
        let n = self.n_ions() as f64;
        self.amplitudes
            .column_iter()
            .map(|c| {
                let mean = c.iter().map(|v| v.abs()).sum::<f64>() / n;
                let var = c.iter().map(|v| (v.abs() - mean).powi(2)).sum::<f64>() / n;
                (mean, var.sqrt())
            })
            .collect()
    }
}

/// Stacks `n` copies of a shared spectrum and renormalizes.
pub fn expand_global(z: &DVector<f64>, n: usize) -> DVector<f64> {
    let k = z.len();
    let stacked = DVector::from_fn(n * k, |i, _| z[i % k]);
    stacked.normalize()
}

/// Upper-triangle target phases in the order of `set.all_pairs()`.
fn target_vector(set: &CouplingSet, target: &TargetMatrix) -> DVector<f64> {
    let pairs = set.all_pairs();
    DVector::from_iterator(pairs.len(), pairs.iter().map(|&(a, b)| target.phases[(a, b)]))
}

fn pair_vector(set: &CouplingSet, phases: &DMatrix<f64>) -> DVector<f64> {
    let pairs = set.all_pairs();
    DVector::from_iterator(pairs.len(), pairs.iter().map(|&(a, b)| phases[(a, b)]))
}

fn check_target(set: &CouplingSet, target: &TargetMatrix) -> Result<()> {
    if target.n_ions() != set.n_ions() {
        return Err(LsfError::Dimension(format!(
            "target has {} ions, couplings have {}",
            target.n_ions(),
            set.n_ions()
        )));
    }
    Ok(())
}

fn stacked_entry(set: &CouplingSet, z: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, k) = (set.n_ions(), set.dim());
    if z.len() == n * k {
        Ok(z.normalize())
    } else if z.len() == k {
        Ok(expand_global(z, n))
    } else {
        Err(LsfError::Dimension(format!("pool entry has {} coordinates; expected {k} or {}", z.len(), n * k)))
    }
}

/// Linear part of a conversion: `u` with `J(z) u = phi` and the scale
/// `lambda` bounding the quadratic remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub z: DVector<f64>,
    pub u: DVector<f64>,
    pub lambda: f64,
}

impl Linearization {
    /// `lambda z + u / lambda` in dimensionless coordinates.
    pub fn point(&self) -> DVector<f64> {
        &self.z * self.lambda + &self.u / self.lambda
    }

    pub fn point_at(&self, lambda: f64) -> DVector<f64> {
        &self.z * lambda + &self.u / lambda
    }
}

/// Solves `J(z) u = phi` in the minimum-norm sense and picks
/// `lambda = sqrt(max_c |u^T A_c u| / epsilon)`.
pub fn choose_lambda(z: &DVector<f64>, set: &CouplingSet, target: &TargetMatrix, epsilon: f64) -> Result<Linearization> {
    check_target(set, target)?;
    let z = stacked_entry(set, z)?;
    let phi = target_vector(set, target);
    if phi.iter().all(|&v| v == 0.0) {
        return Ok(Linearization { u: DVector::zeros(z.len()), z, lambda: 1.0 });
    }
    let jac = Jacobian::Pairs(set.pair_jacobian(&z, &set.all_pairs()));
    let u = min_norm_solve(&jac, None, &phi);
    let miss = (jac.mul(&u) - &phi).amax();
    if !u.iter().all(|v| v.is_finite()) || miss > 1e-6 * phi.amax() {
        return Err(LsfError::UnusablePoolEntry(format!(
            "linearized system misses the target by {miss:.3e}; the entry does not span the target"
        )));
    }
    let remainder = pair_vector(set, &set.pair_phases(&u)).amax();
    let lambda = if remainder > 0.0 { (remainder / epsilon).sqrt() } else { 1.0 };
    Ok(Linearization { z, u, lambda })
}

/// Converted solution, before refinement.
pub fn convert(
    z: &DVector<f64>,
    set: &CouplingSet,
    kernel: &KernelBasis,
    target: &TargetMatrix,
    config: &SolverConfig,
) -> Result<DriveSolution> {
    let lin = choose_lambda(z, set, target, config.epsilon)?;
    let x = lin.point();
    let mut sol = DriveSolution::from_coords(&x / set.drive_scale, kernel, set.n_ions())?;
    sol.lambda = lin.lambda;
    sol.infidelity = infidelity(&set.pair_phases(&x), &target.phases, config.counting);
    sol.rabi_trace = vec![sol.total_rabi];
    Ok(sol)
}

/// Outcome of [`refine_coords`], in dimensionless coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub x: DVector<f64>,
    pub infidelity: f64,
    /// `|x|` at the start and after every accepted step.
    pub norm_trace: Vec<f64>,
    pub iterations: usize,
    pub warning: Option<String>,
}

struct Evaluated {
    x: DVector<f64>,
    residual: DVector<f64>,
    infidelity: f64,
    norm: f64,
}

fn evaluate(set: &CouplingSet, phi: &DVector<f64>, target: &TargetMatrix, x: DVector<f64>, counting: PairCounting) -> Evaluated {
    let phases = set.pair_phases(&x);
    let residual = phi - pair_vector(set, &phases);
    let infidelity = infidelity(&phases, &target.phases, counting);
    let norm = x.norm();
    Evaluated { x, residual, infidelity, norm }
}

/// Projected descent: each step solves `J d = residual` together with
/// `x_hat . d = -delta |x|`, then Newton corrections `J c = residual`
/// pull the point back onto the target set. A step is accepted only if it
/// shrinks `|x|` without raising the infidelity. Before the descent the
/// input itself is corrected as far as that does not grow `|x|`.
pub fn refine_coords(x0: &DVector<f64>, set: &CouplingSet, target: &TargetMatrix, config: &SolverConfig) -> Result<Refinement> {
    check_target(set, target)?;
    config.validate()?;
    let pairs = set.all_pairs();
    let phi = target_vector(set, target);
    let counting = config.counting;
    let start = evaluate(set, &phi, target, x0.clone(), counting);

    let solve_step = |cur: &Evaluated, shrink: Option<f64>| -> Option<DVector<f64>> {
        let jac = Jacobian::Pairs(set.pair_jacobian(&cur.x, &pairs));
        let d = match shrink {
            Some(s) if cur.norm > 0.0 => {
                let xhat = &cur.x / cur.norm;
                let mut rhs = DVector::zeros(pairs.len() + 1);
                rhs.rows_mut(0, pairs.len()).copy_from(&cur.residual);
                rhs[pairs.len()] = -s;
                min_norm_solve(&jac, Some(&xhat), &rhs)
            }
            Some(_) => return None,
            None => min_norm_solve(&jac, None, &cur.residual),
        };
        d.iter().all(|v| v.is_finite()).then_some(d)
    };
    // Newton corrections; each must lower the infidelity and, with `cap`, keep |x| below it
    let project = |mut cur: Evaluated, cap: Option<f64>| -> Evaluated {
        for _ in 0..config.projection_steps {
            if cur.infidelity <= config.polish_target {
                break;
            }
            let Some(c) = solve_step(&cur, None) else { break };
            let trial = evaluate(set, &phi, target, &cur.x + c, counting);
            if trial.infidelity < cur.infidelity && cap.is_none_or(|m| trial.norm <= m) {
                cur = trial;
            } else {
                break;
            }
        }
        cur
    };

    let mut cur = project(evaluate(set, &phi, target, x0.clone(), counting), Some(start.norm));
    let mut trace = vec![start.norm];
    if cur.norm != start.norm {
        trace.push(cur.norm);
    }
    let mut warning = None;
    let mut delta = config.delta;
    let min_delta = config.delta * 1e-6;
    let mut iterations = 0;

    while config.delta > 0.0 && iterations < config.max_iters && delta >= min_delta {
        iterations += 1;
        let Some(d) = solve_step(&cur, Some(delta * cur.norm)) else {
            warning = Some("linear solve failed during descent".into());
            break;
        };
        let trial = project(evaluate(set, &phi, target, &cur.x + d, counting), None);
        if trial.norm < cur.norm && trial.infidelity <= cur.infidelity.max(config.polish_target) {
            cur = trial;
            trace.push(cur.norm);
            delta = (delta * 2.0).min(config.delta);
            let p = config.stall_patience;
            if trace.len() > p {
                let before = trace[trace.len() - 1 - p];
                if (before - cur.norm) / before < config.stall_tolerance {
                    break;
                }
            }
        } else {
            delta *= 0.5;
        }
    }

    if cur.infidelity > start.infidelity {
        warning = Some("refinement did not improve on its input".into());
        cur = start;
        trace.truncate(1);
    }
    Ok(Refinement { x: cur.x, infidelity: cur.infidelity, norm_trace: trace, iterations, warning })
}

/// Refines a solution; the returned infidelity never exceeds the input's.
pub fn refine(
    solution: &DriveSolution,
    set: &CouplingSet,
    kernel: &KernelBasis,
    target: &TargetMatrix,
    config: &SolverConfig,
) -> Result<DriveSolution> {
    let x0 = solution.scaled_coords(set)?;
    let r = refine_coords(&x0, set, target, config)?;
    let mut out = DriveSolution::from_coords(&r.x / set.drive_scale, kernel, set.n_ions())?;
    out.lambda = solution.lambda;
    out.origin = solution.origin;
    out.infidelity = r.infidelity;
    let mut trace = solution.rabi_trace.clone();
    if trace.is_empty() {
        trace.push(solution.total_rabi);
    }
    trace.extend(r.norm_trace.iter().skip(1).map(|v| v / set.drive_scale));
    out.rabi_trace = trace;
    out.warning = r.warning;
    Ok(out)
}

/// Converts and refines every pool entry, then ranks: entries within the
/// infidelity threshold by ascending power, the rest by infidelity.
/// Unusable entries are skipped.
pub fn solve(
    pool: &SolutionPool,
    set: &CouplingSet,
    kernel: &KernelBasis,
    target: &TargetMatrix,
    config: &SolverConfig,
) -> Result<Vec<DriveSolution>> {
    let results: Vec<Option<DriveSolution>> = pool
        .entries
        .par_iter()
        .map(|entry| {
            let converted = convert(&entry.coords, set, kernel, target, config).ok()?;
            let mut refined = refine(&converted, set, kernel, target, config).ok()?;
            refined.origin = Some(entry.seed);
            Some(refined)
        })
        .collect();
    let mut solutions: Vec<DriveSolution> = results.into_iter().flatten().collect();
    if solutions.is_empty() {
        return Err(LsfError::NoUsableEntries);
    }
    rank_solutions(&mut solutions, config.rank_threshold);
    Ok(solutions)
}

pub fn rank_solutions(solutions: &mut [DriveSolution], threshold: f64) {
    solutions.sort_by(|a, b| {
        let fa = a.infidelity <= threshold;
        let fb = b.infidelity <= threshold;
        fb.cmp(&fa).then_with(|| {
            if fa {
                a.total_rabi.total_cmp(&b.total_rabi)
            } else {
                a.infidelity.total_cmp(&b.infidelity)
            }
            .then(a.origin.cmp(&b.origin))
        })
    });
}

/// Single-tone-per-pair construction for long gates.
#[derive(Debug, Clone)]
pub struct AdiabaticDesign {
    pub solution: DriveSolution,
    pub grid: ToneGrid,
    /// Identity basis: the tones are not closure-constrained.
    pub kernel: KernelBasis,
    pub couplings: CouplingSet,
}

pub const DEFAULT_ADIABATIC_RATIO: f64 = 50.0;

/// Mode shared by ions `n`, `m`: the center-of-mass mode unless their
/// participation product there is negligible.
fn shared_mode(crystal: &IonCrystal, n: usize, m: usize) -> usize {
    let com = crystal.com_mode();
    let prod = |j: usize| (crystal.participation[(n, j)] * crystal.participation[(m, j)]).abs();
    let best = (0..crystal.n_ions()).max_by(|&a, &b| prod(a).total_cmp(&prod(b))).unwrap_or(com);
    if prod(com) >= 1e-3 * prod(best) {
        com
    } else {
        best
    }
}

/// Drives pair `(n, m)` with one tone detuned `2 pi s / T` above a shared
/// mode, `s = N n + m`, on ions `n` and `m` only. The amplitude follows the
/// `1 / s` law of the resonant diagonal form, with its constant taken from
/// the exact form at `s = 1`.
pub fn adiabatic_solution(
    crystal: &IonCrystal,
    target: &TargetMatrix,
    gate_time: f64,
    min_ratio: f64,
) -> Result<AdiabaticDesign> {
    let n = crystal.n_ions();
    if target.n_ions() != n {
        return Err(LsfError::Dimension(format!("target has {} ions, crystal has {n}", target.n_ions())));
    }
    let ratio = gate_time * min_mode_gap(crystal, None)? / (2.0 * PI);
    if ratio < min_ratio {
        return Err(LsfError::NotAdiabatic { ratio, required: min_ratio });
    }
    let links = target.links();
    let mean_eta = crystal.mean_lamb_dicke();
    let spacing = 2.0 * PI / gate_time;

    struct Assignment {
        a: usize,
        b: usize,
        amp_a: f64,
        amp_b: f64,
        tone: f64,
    }
    let mut assignments = Vec::with_capacity(links.len());
    for &(a, b, phi) in &links {
        let j = shared_mode(crystal, a, b);
        let s = (n * a + b) as f64;
        let nu_t = crystal.mode_freqs[j] * gate_time;
        let kappa = mode_form_entry(nu_t, nu_t + 2.0 * PI, nu_t + 2.0 * PI);
        let weight =
            -(crystal.lamb_dicke[j] / mean_eta).powi(2) * crystal.participation[(a, j)] * crystal.participation[(b, j)];
        let per_amp = weight * kappa / s;
        let amp = (phi / per_amp).abs().sqrt();
        let sign = if phi / per_amp < 0.0 { -1.0 } else { 1.0 };
        assignments.push(Assignment { a, b, amp_a: amp, amp_b: sign * amp, tone: crystal.mode_freqs[j] + s * spacing });
    }

    let tones: Vec<f64> = if assignments.is_empty() {
        // a zero target still needs one (undriven) tone to define the grid
        vec![crystal.mode_freqs[crystal.com_mode()] + spacing]
    } else {
        assignments.iter().map(|x| x.tone).collect()
    };
    let grid = ToneGrid::from_tones(gate_time, tones)?;
    let m = grid.len();
    let kernel = KernelBasis {
        l_matrix: DMatrix::zeros(0, m),
        basis: DMatrix::identity(m, m),
        tolerance: crate::spectrum::DEFAULT_KERNEL_TOLERANCE,
        rank: 0,
    };
    let couplings = CouplingSet::build(crystal, &grid, &kernel)?;
    let scale = couplings.drive_scale;
    let mut coords = DVector::zeros(n * m);
    for asg in &assignments {
        let col = grid.tone_freqs.iter().position(|&w| w == asg.tone).expect("tone is on the grid");
        coords[asg.a * m + col] = asg.amp_a / scale;
        coords[asg.b * m + col] = asg.amp_b / scale;
    }
    let mut solution = DriveSolution::from_coords(coords, &kernel, n)?;
    let x = solution.scaled_coords(&couplings)?;
    solution.infidelity = infidelity(&couplings.pair_phases(&x), &target.phases, PairCounting::Ordered);
    solution.rabi_trace = vec![solution.total_rabi];
    Ok(AdiabaticDesign { solution, grid, kernel, couplings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionRecord {
    pub origin: Option<u64>,
    pub total_rabi: f64,
    pub lambda: f64,
    pub infidelity: f64,
    pub n_ions: usize,
    pub n_tones: usize,
    pub coords: String,
    pub amplitudes: String,
    pub rabi_trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub format: String,
    pub crystal_hash: String,
    pub grid_hash: String,
    pub target: crate::targets::TargetFile,
    pub solutions: Vec<SolutionRecord>,
}

pub const SOLUTION_FORMAT: &str = "lsf-solutions-v1";

impl SolutionRecord {
    pub fn from_solution(s: &DriveSolution) -> Self {
        let row_major: Vec<f64> = s.amplitudes.transpose().as_slice().to_vec();
        Self {
            origin: s.origin,
            total_rabi: s.total_rabi,
            lambda: s.lambda,
            infidelity: s.infidelity,
            n_ions: s.amplitudes.nrows(),
            n_tones: s.amplitudes.ncols(),
            coords: pack_f64(s.coords.as_slice()),
            amplitudes: pack_f64(&row_major),
            rabi_trace: s.rabi_trace.clone(),
            warning: s.warning.clone(),
        }
    }

    pub fn to_solution(&self) -> Result<DriveSolution> {
        let amps = unpack_f64(&self.amplitudes)?;
        if amps.len() != self.n_ions * self.n_tones {
            return Err(LsfError::Format(format!(
                "amplitude array has {} values for {}x{}",
                amps.len(),
                self.n_ions,
                self.n_tones
            )));
        }
        Ok(DriveSolution {
            coords: DVector::from_vec(unpack_f64(&self.coords)?),
            amplitudes: DMatrix::from_row_slice(self.n_ions, self.n_tones, &amps),
            total_rabi: self.total_rabi,
            lambda: self.lambda,
            origin: self.origin,
            infidelity: self.infidelity,
            rabi_trace: self.rabi_trace.clone(),
            warning: self.warning.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> CouplingSet {
        // two ions sharing one mode; pair weight -(1)(1)(-1) = 1 with O = (1, -1)
        CouplingSet {
            mode_forms: vec![DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -2.0]))],
            mode_weights: DVector::from_element(1, 1.0),
            participation: DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
            raw_dim: 2,
            gate_time: 1.0,
            drive_scale: 1.0,
        }
    }

    fn identity_kernel(m: usize) -> KernelBasis {
        KernelBasis { l_matrix: DMatrix::zeros(0, m), basis: DMatrix::identity(m, m), tolerance: 1e-9, rank: 0 }
    }

    #[test]
    fn expand_global_is_unit_and_identity_for_one_ion() {
        let z = DVector::from_vec(vec![0.6, 0.8]);
        assert_eq!(expand_global(&z, 1), z);
        assert!((expand_global(&z, 5).norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_target_keeps_the_pool_entry() {
        let set = toy();
        let z = DVector::from_vec(vec![2f64.sqrt(), 1.0, 2f64.sqrt(), 1.0]).normalize();
        let lin = choose_lambda(&z, &set, &TargetMatrix::zeros(2), 1e-3).unwrap();
        assert_eq!(lin.lambda, 1.0);
        assert!((lin.point() - &z).amax() < 1e-15);
    }

    #[test]
    fn lambda_is_homogeneous_in_the_target() {
        let set = toy();
        let z = DVector::from_vec(vec![2f64.sqrt(), 1.0, 2f64.sqrt(), 1.0]).normalize();
        let t1 = crate::targets::target_pairwise(2, &[(0, 1, 0.3)]).unwrap();
        let t4 = crate::targets::target_pairwise(2, &[(0, 1, 1.2)]).unwrap();
        let l1 = choose_lambda(&z, &set, &t1, 1e-3).unwrap();
        let l4 = choose_lambda(&z, &set, &t4, 1e-3).unwrap();
        assert!((l4.lambda / l1.lambda - 4.0).abs() < 1e-12);
        assert!((&l4.u - &l1.u * 4.0).amax() < 1e-12);
    }

    #[test]
    fn conversion_lands_within_epsilon() {
        let set = toy();
        let z = DVector::from_vec(vec![2f64.sqrt(), 1.0, 2f64.sqrt(), 1.0]).normalize();
        let target = crate::targets::target_pairwise(2, &[(0, 1, 2.0)]).unwrap();
        let cfg = SolverConfig { epsilon: 1e-4, ..Default::default() };
        let sol = convert(&z, &set, &identity_kernel(2), &target, &cfg).unwrap();
        let phi = set.pair_phases(&sol.coords)[(0, 1)];
        assert!((phi - 2.0).abs() <= 1e-4 * (1.0 + 1e-9));
    }

    #[test]
    fn refinement_never_increases_power_or_error() {
        let set = toy();
        let z = DVector::from_vec(vec![2f64.sqrt(), 1.0, 2f64.sqrt(), 1.0]).normalize();
        let target = crate::targets::target_pairwise(2, &[(0, 1, 2.0)]).unwrap();
        let kernel = identity_kernel(2);
        let cfg = SolverConfig { epsilon: 1e-3, ..Default::default() };
        let conv = convert(&z, &set, &kernel, &target, &cfg).unwrap();
        let refined = refine(&conv, &set, &kernel, &target, &cfg).unwrap();
        assert!(refined.infidelity <= conv.infidelity);
        assert!(refined.rabi_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(refined.total_rabi <= conv.total_rabi);
    }

    #[test]
    fn ranking_puts_feasible_cheapest_first() {
        let base = DriveSolution::from_coords(DVector::zeros(2), &identity_kernel(1), 2).unwrap();
        let mk = |rabi: f64, inf: f64, id: u64| DriveSolution { total_rabi: rabi, infidelity: inf, origin: Some(id), ..base.clone() };
        let mut v = vec![mk(1.0, 1e-2, 0), mk(3.0, 1e-9, 1), mk(2.0, 1e-9, 2)];
        rank_solutions(&mut v, 1e-4);
        assert_eq!(v.iter().map(|s| s.origin.unwrap()).collect::<Vec<_>>(), vec![2, 1, 0]);
    }
}

//! Zero-phase solutions: unit drive vectors that accumulate no entanglement
//! phase at all, found by a randomized Newton search on the unit sphere.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::CouplingSet;
use crate::error::{LsfError, Result};
use crate::io::{pack_f64, unpack_f64};
use crate::linalg::{min_norm_solve, Jacobian};

pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const DEFAULT_OVERLAP_THRESHOLD: f64 = 0.9;

/// Which constraint family a zero-phase vector satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ansatz {
    /// One spectrum shared by every ion; one constraint per mode.
    Global,
    /// Independent spectrum per ion; one constraint per ion pair.
    Multi,
}

impl Ansatz {
    pub fn coords_len(self, set: &CouplingSet) -> usize {
        match self {
            Ansatz::Global => set.dim(),
            Ansatz::Multi => set.n_ions() * set.dim(),
        }
    }

    pub fn n_constraints(self, set: &CouplingSet) -> usize {
        let n = set.n_ions();
        match self {
            Ansatz::Global => set.n_modes(),
            Ansatz::Multi => n * (n - 1) / 2,
        }
    }
}

/// Constraint values for `z` under `ansatz`: mode phases or upper-triangle
/// pair phases in row-major order.
pub fn constraint_values(set: &CouplingSet, ansatz: Ansatz, z: &DVector<f64>) -> DVector<f64> {
    match ansatz {
        Ansatz::Global => set.mode_phases(z),
        Ansatz::Multi => {
            let phi = set.pair_phases(z);
            let pairs = set.all_pairs();
            DVector::from_iterator(pairs.len(), pairs.iter().map(|&(a, b)| phi[(a, b)]))
        }
    }
}

fn constraint_jacobian(set: &CouplingSet, ansatz: Ansatz, z: &DVector<f64>) -> Jacobian {
    match ansatz {
        Ansatz::Global => Jacobian::Dense(set.mode_jacobian(z)),
        Ansatz::Multi => Jacobian::Pairs(set.pair_jacobian(z, &set.all_pairs())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchParams {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Initial fraction of the Newton step; halved on non-improvement.
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_max_iter() -> usize {
    100
}
fn default_step() -> f64 {
    1.0
}

impl Default for SearchParams {
    fn default() -> Self {
        Self { epsilon: DEFAULT_EPSILON, max_iter: default_max_iter(), step: default_step() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroPhaseSolution {
    /// Unit vector; `K` entries for the global ansatz, `N K` for multi.
    pub coords: DVector<f64>,
    /// Largest absolute constraint value.
    pub residual: f64,
    pub seed: u64,
    pub ansatz: Ansatz,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Converged(ZeroPhaseSolution),
    Failed { seed: u64, residual: f64, iterations: usize },
}

impl SearchOutcome {
    pub fn solution(self) -> Option<ZeroPhaseSolution> {
        match self {
            SearchOutcome::Converged(s) => Some(s),
            SearchOutcome::Failed { .. } => None,
        }
    }
}

pub fn random_unit(len: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = DVector::from_fn(len, |_, _| StandardNormal.sample(&mut rng));
    v.normalize()
}

/// Newton search from the seeded random start.
pub fn zero_phase_search(set: &CouplingSet, ansatz: Ansatz, seed: u64, params: &SearchParams) -> SearchOutcome {
    let z = random_unit(ansatz.coords_len(set), seed);
    zero_phase_search_from(set, ansatz, z, seed, params)
}

/// Newton search from a given start. Each iteration takes the minimum-norm
/// correction `d` with `J d = -c(z)` and `z . d = 0`, then renormalizes.
pub fn zero_phase_search_from(
    set: &CouplingSet,
    ansatz: Ansatz,
    start: DVector<f64>,
    seed: u64,
    params: &SearchParams,
) -> SearchOutcome {
    const MAX_HALVINGS: usize = 30;
    const MAX_PERTURBATIONS: usize = 3;

    let mut z = start.normalize();
    let mut values = constraint_values(set, ansatz, &z);
    let mut residual = values.amax();
    let mut step = params.step;
    let mut perturbations = 0;
    let mut iterations = 0;
    while residual > params.epsilon && iterations < params.max_iter {
        iterations += 1;
        let jac = constraint_jacobian(set, ansatz, &z);
        let mut rhs = DVector::zeros(values.len() + 1);
        rhs.rows_mut(0, values.len()).copy_from(&(-&values));
        let d = min_norm_solve(&jac, Some(&z), &rhs);
        if !d.iter().all(|v| v.is_finite()) {
            if perturbations == MAX_PERTURBATIONS {
                break;
            }
            perturbations += 1;
            let kick = random_unit(z.len(), seed ^ (0x9e37_79b9_7f4a_7c15 * perturbations as u64));
            z = (&z + kick * 1e-6).normalize();
            values = constraint_values(set, ansatz, &z);
            residual = values.amax();
            continue;
        }
        let norm = values.norm();
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial = (&z + &d * step).normalize();
            let trial_values = constraint_values(set, ansatz, &trial);
            if trial_values.norm() < norm {
                z = trial;
                values = trial_values;
                residual = values.amax();
                step = (step * 2.0).min(params.step);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if residual <= params.epsilon {
        SearchOutcome::Converged(ZeroPhaseSolution { coords: z, residual, seed, ansatz, iterations })
    } else {
        SearchOutcome::Failed { seed, residual, iterations }
    }
}

/// `|a . b| / (|a| |b|)`, zero when either vector vanishes.
pub fn abs_overlap(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        0.0
    } else {
        (a.dot(b) / denom).abs()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolStats {
    pub attempts: usize,
    pub converged: usize,
    pub admitted: usize,
    pub rejected_overlap: usize,
}

impl PoolStats {
    pub fn success_rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.converged as f64 / self.attempts as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPool {
    pub entries: Vec<ZeroPhaseSolution>,
    pub ansatz: Ansatz,
    pub crystal_hash: String,
    pub grid_hash: String,
    pub epsilon: f64,
    pub overlap_threshold: f64,
    pub stats: PoolStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolRequest {
    pub ansatz: Ansatz,
    pub count: usize,
    pub params: SearchParams,
    pub overlap_threshold: f64,
    pub first_seed: u64,
    /// Seeds tried before giving up.
    pub max_attempts: usize,
}

impl PoolRequest {
    pub fn new(ansatz: Ansatz, count: usize) -> Self {
        Self {
            ansatz,
            count,
            params: SearchParams::default(),
            overlap_threshold: DEFAULT_OVERLAP_THRESHOLD,
            first_seed: 0,
            max_attempts: 4 * count.max(1) + 16,
        }
    }
}

fn admits(entries: &[ZeroPhaseSolution], cand: &ZeroPhaseSolution, threshold: f64) -> bool {
    threshold >= 1.0 || entries.iter().all(|e| abs_overlap(&e.coords, &cand.coords) < threshold)
}

/// Runs seeded searches in batches and admits results in seed order, so the
/// pool does not depend on scheduling.
pub fn aggregate_pool(
    set: &CouplingSet,
    request: &PoolRequest,
    crystal_hash: &str,
    grid_hash: &str,
) -> Result<SolutionPool> {
    if request.count == 0 {
        return Err(LsfError::InvalidConfig("pool count must be at least 1".into()));
    }
    if !(request.params.epsilon > 0.0) {
        return Err(LsfError::InvalidConfig("pool epsilon must be positive".into()));
    }
    let batch = rayon::current_num_threads().max(1) * 4;
    let mut entries: Vec<ZeroPhaseSolution> = Vec::new();
    let mut stats = PoolStats::default();
    let mut next = 0usize;
    while entries.len() < request.count && next < request.max_attempts {
        let upto = (next + batch).min(request.max_attempts);
        let outcomes: Vec<SearchOutcome> = (next..upto)
            .into_par_iter()
            .map(|i| zero_phase_search(set, request.ansatz, request.first_seed + i as u64, &request.params))
            .collect();
        for outcome in outcomes {
            if entries.len() == request.count {
                break;
            }
            stats.attempts += 1;
            let Some(sol) = outcome.solution() else { continue };
            // re-verify independently of the search's own bookkeeping
            let check = constraint_values(set, request.ansatz, &sol.coords).amax();
            if check > request.params.epsilon {
                continue;
            }
            stats.converged += 1;
            if admits(&entries, &sol, request.overlap_threshold) {
                entries.push(ZeroPhaseSolution { residual: check, ..sol });
            } else {
                stats.rejected_overlap += 1;
            }
        }
        next = upto;
    }
    stats.admitted = entries.len();
    if entries.is_empty() {
        return Err(LsfError::EmptyPool { attempts: stats.attempts });
    }
    Ok(SolutionPool {
        entries,
        ansatz: request.ansatz,
        crystal_hash: crystal_hash.to_string(),
        grid_hash: grid_hash.to_string(),
        epsilon: request.params.epsilon,
        overlap_threshold: request.overlap_threshold,
        stats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolEntryRecord {
    seed: u64,
    residual: f64,
    iterations: usize,
    coords: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolRecord {
    format: String,
    ansatz: Ansatz,
    crystal_hash: String,
    grid_hash: String,
    epsilon: f64,
    overlap_threshold: f64,
    dim: usize,
    stats: PoolStats,
    entries: Vec<PoolEntryRecord>,
}

const POOL_FORMAT: &str = "lsf-pool-v1";

impl SolutionPool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn check_provenance(&self, crystal_hash: &str, grid_hash: &str) -> Result<()> {
        if self.crystal_hash != crystal_hash {
            return Err(LsfError::Provenance(format!(
                "pool was built for crystal {} but the run uses {}",
                self.crystal_hash, crystal_hash
            )));
        }
        if self.grid_hash != grid_hash {
            return Err(LsfError::Provenance(format!(
                "pool was built for tone grid {} but the run uses {}",
                self.grid_hash, grid_hash
            )));
        }
        Ok(())
    }

    /// Largest pairwise absolute overlap among the entries.
    pub fn max_overlap(&self) -> f64 {
        let mut best: f64 = 0.0;
        for (i, a) in self.entries.iter().enumerate() {
            for b in &self.entries[i + 1..] {
                best = best.max(abs_overlap(&a.coords, &b.coords));
            }
        }
        best
    }

    pub fn to_json(&self) -> String {
        let record = PoolRecord {
            format: POOL_FORMAT.into(),
            ansatz: self.ansatz,
            crystal_hash: self.crystal_hash.clone(),
            grid_hash: self.grid_hash.clone(),
            epsilon: self.epsilon,
            overlap_threshold: self.overlap_threshold,
            dim: self.entries.first().map_or(0, |e| e.coords.len()),
            stats: self.stats,
            entries: self
                .entries
                .iter()
                .map(|e| PoolEntryRecord {
                    seed: e.seed,
                    residual: e.residual,
                    iterations: e.iterations,
                    coords: pack_f64(e.coords.as_slice()),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&record).expect("pool record serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: PoolRecord = serde_json::from_str(text)?;
        if record.format != POOL_FORMAT {
            return Err(LsfError::Format(format!("unsupported pool format '{}'", record.format)));
        }
        let mut entries = Vec::with_capacity(record.entries.len());
        for e in record.entries {
            let coords = unpack_f64(&e.coords)?;
            if coords.len() != record.dim {
                return Err(LsfError::Format(format!("entry {} has {} coordinates, expected {}", e.seed, coords.len(), record.dim)));
            }
            entries.push(ZeroPhaseSolution {
                coords: DVector::from_vec(coords),
                residual: e.residual,
                seed: e.seed,
                ansatz: record.ansatz,
                iterations: e.iterations,
            });
        }
        Ok(Self {
            entries,
            ansatz: record.ansatz,
            crystal_hash: record.crystal_hash,
            grid_hash: record.grid_hash,
            epsilon: record.epsilon,
            overlap_threshold: record.overlap_threshold,
            stats: record.stats,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Coordinates as columns, for bulk overlap statistics.
    pub fn coords_matrix(&self) -> DMatrix<f64> {
        let cols: Vec<_> = self.entries.iter().map(|e| e.coords.clone()).collect();
        DMatrix::from_columns(&cols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Single mode with form `diag(1, -2)` and one ion.
    fn toy() -> CouplingSet {
        CouplingSet {
            mode_forms: vec![DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -2.0]))],
            mode_weights: DVector::from_element(1, 1.0),
            participation: DMatrix::from_element(1, 1, 1.0),
            raw_dim: 2,
            gate_time: 1.0,
            drive_scale: 1.0,
        }
    }

    #[test]
    fn toy_solutions_lie_on_the_zero_contour() {
        let set = toy();
        for seed in 0..10 {
            let sol = zero_phase_search(&set, Ansatz::Global, seed, &SearchParams::default()).solution().unwrap();
            let (a, b) = (sol.coords[0], sol.coords[1]);
            assert!((a * a - 2.0 * b * b).abs() <= 1e-8);
            assert!((b.abs() - (1.0f64 / 3.0).sqrt()).abs() < 1e-8);
        }
    }

    #[test]
    fn converged_start_takes_no_iterations() {
        let set = toy();
        let z = DVector::from_vec(vec![2f64.sqrt(), 1.0]);
        match zero_phase_search_from(&set, Ansatz::Global, z.clone(), 0, &SearchParams::default()) {
            SearchOutcome::Converged(s) => {
                assert_eq!(s.iterations, 0);
                assert!((s.coords - z.normalize()).amax() == 0.0);
            }
            f => panic!("{f:?}"),
        }
    }

    #[test]
    fn definite_form_fails_as_data() {
        let mut set = toy();
        set.mode_forms[0] = DMatrix::identity(2, 2);
        assert!(matches!(
            zero_phase_search(&set, Ansatz::Global, 3, &SearchParams::default()),
            SearchOutcome::Failed { .. }
        ));
        let req = PoolRequest::new(Ansatz::Global, 2);
        assert!(matches!(aggregate_pool(&set, &req, "c", "g"), Err(LsfError::EmptyPool { .. })));
    }

    #[test]
    fn overlap_threshold_limits() {
        let set = toy();
        // the toy has only two zero directions up to sign
        let mut req = PoolRequest::new(Ansatz::Global, 5);
        req.overlap_threshold = 0.99;
        let pool = aggregate_pool(&set, &req, "c", "g").unwrap();
        assert_eq!(pool.len(), 2);
        req.overlap_threshold = 1.0;
        assert_eq!(aggregate_pool(&set, &req, "c", "g").unwrap().len(), 5);
    }

    #[test]
    fn overlap_is_absolute() {
        let a = DVector::from_vec(vec![1.0, 2.0]);
        assert!((abs_overlap(&a, &-&a) - 1.0).abs() < 1e-15);
        assert_eq!(abs_overlap(&a, &DVector::from_vec(vec![-2.0, 1.0])), 0.0);
    }

    #[test]
    fn pool_file_round_trip() {
        let set = toy();
        let pool = aggregate_pool(&set, &PoolRequest::new(Ansatz::Global, 2), "abc", "def").unwrap();
        let back = SolutionPool::from_json(&pool.to_json()).unwrap();
        assert_eq!(back, pool);
        assert!(back.check_provenance("abc", "def").is_ok());
        assert!(back.check_provenance("abc", "xyz").is_err());
    }
}

//! Small-register spin-phonon simulator.
//!
//! Modes couple to the spins through commuting terms, so the register is
//! evolved one mode at a time: spin state times the mode's ground state,
//! propagated over the whole gate, then the mode is traced out. Each stage
//! needs a Hilbert space of only `2^N * cutoff`. Propagation uses a fourth
//! order commutator-free Magnus step with Taylor-series exponentials.
//!
//! Basis index is `spin * cutoff + phonon`, with qubit `n` stored in bit
//! `N - 1 - n` of `spin` (qubit 0 is the leftmost symbol of a ket label).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::coupling::{displacement_trajectory, raw_mode_form};
use crate::crystal::IonCrystal;
use crate::error::{LsfError, Result};
use crate::spectrum::ToneGrid;

pub const MAX_SIM_IONS: usize = 6;

/// Population above which the phonon truncation is considered unreliable.
pub const LEAKAGE_LIMIT: f64 = 1e-5;

/// Fock level above which population is reported separately.
pub const HIGH_LEVEL: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_cutoff")]
    pub phonon_cutoff: usize,
    /// Steps per period of the fastest `nu + omega` beat.
    #[serde(default = "default_steps")]
    pub steps_per_period: usize,
    #[serde(default)]
    pub carrier: bool,
    #[serde(default)]
    pub debye_waller: bool,
    /// Time-series samples recorded per mode stage.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Order in which modes are processed; ascending when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_order: Option<Vec<usize>>,
    #[serde(default = "default_trace_tol")]
    pub trace_tolerance: f64,
    /// Spin state to start from; `|0...0>` when absent.
    #[serde(skip)]
    pub initial_state: Option<DVector<C64>>,
}

fn default_cutoff() -> usize {
    14
}
fn default_steps() -> usize {
    32
}
fn default_samples() -> usize {
    64
}
fn default_trace_tol() -> f64 {
    1e-9
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            phonon_cutoff: default_cutoff(),
            steps_per_period: default_steps(),
            carrier: false,
            debye_waller: false,
            samples: default_samples(),
            mode_order: None,
            trace_tolerance: default_trace_tol(),
            initial_state: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSeries {
    pub mode: usize,
    pub times: Vec<f64>,
    /// Mean phonon number of the stage's mode.
    pub occupation: Vec<f64>,
    /// `<(a + a^dagger)^2>` of the stage's mode.
    pub x_squared: Vec<f64>,
    /// Spin-basis populations, one vector per sample.
    pub populations: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub final_spin_state: DMatrix<C64>,
    pub fidelity: f64,
    /// Largest population seen in the top Fock level.
    pub leakage: f64,
    /// Largest population seen above [`HIGH_LEVEL`].
    pub high_population: f64,
    pub valid: bool,
    pub max_trace_drift: f64,
    pub stages: Vec<StageSeries>,
    pub carrier: bool,
    pub debye_waller: bool,
}

/// Computational basis state `|bits>` with qubit 0 as the leftmost bit.
pub fn basis_state(n_qubits: usize, bits: &str) -> Result<DVector<C64>> {
    if bits.len() != n_qubits || !bits.chars().all(|c| c == '0' || c == '1') {
        return Err(LsfError::InvalidConfig(format!("'{bits}' is not a {n_qubits}-qubit basis label")));
    }
    let idx = usize::from_str_radix(bits, 2).expect("validated binary label");
    let mut v = DVector::from_element(1 << n_qubits, C64::new(0.0, 0.0));
    v[idx] = C64::new(1.0, 0.0);
    Ok(v)
}

fn walsh_hadamard(v: &mut [C64]) {
    let n = v.len();
    let mut h = 1;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            for j in i..i + h {
                let (a, b) = (v[j], v[j + h]);
                v[j] = a + b;
                v[j + h] = a - b;
            }
        }
        h *= 2;
    }
    let norm = (n as f64).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

/// `exp(i sum_{n<m} phi_nm X_n X_m) |psi>`.
pub fn apply_xx_phases(phases: &DMatrix<f64>, psi: &DVector<C64>) -> DVector<C64> {
    let n = phases.nrows();
    let mut v: Vec<C64> = psi.iter().cloned().collect();
    walsh_hadamard(&mut v);
    for (idx, amp) in v.iter_mut().enumerate() {
        // in the X eigenbasis bit 0 is eigenvalue +1, bit 1 is -1
        let s = |q: usize| if idx >> (n - 1 - q) & 1 == 0 { 1.0 } else { -1.0 };
        let mut angle = 0.0;
        for a in 0..n {
            for b in a + 1..n {
                angle += phases[(a, b)] * s(a) * s(b);
            }
        }
        *amp *= C64::from_polar(1.0, angle);
    }
    walsh_hadamard(&mut v);
    DVector::from_vec(v)
}

/// `<psi| rho |psi>`.
pub fn state_fidelity(rho: &DMatrix<C64>, psi: &DVector<C64>) -> f64 {
    (psi.adjoint() * rho * psi)[(0, 0)].re
}

/// Magnus-exact description of a drive: pair phases and final displacements.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticGate {
    pub phases: DMatrix<f64>,
    /// `alpha[(j, n)]` at the gate time.
    pub displacement: DMatrix<C64>,
}

/// Phases and closing displacements from the closed-form integrals, for
/// any tone set and any register size.
pub fn analytic_unitary(amplitudes: &DMatrix<f64>, crystal: &IonCrystal, grid: &ToneGrid) -> AnalyticGate {
    let n = crystal.n_ions();
    let t = grid.gate_time;
    let rabi = crystal.config.base_rabi;
    let mut phases = DMatrix::zeros(n, n);
    for j in 0..n {
        let form = raw_mode_form(crystal.mode_freqs[j], grid) * (t * t);
        let images: Vec<DVector<f64>> = (0..n).map(|m| &form * amplitudes.row(m).transpose()).collect();
        let eta2 = (rabi * crystal.lamb_dicke[j]).powi(2);
        for a in 0..n {
            for b in a + 1..n {
                let w = -eta2 * crystal.participation[(a, j)] * crystal.participation[(b, j)];
                let v = w * amplitudes.row(a).transpose().dot(&images[b]);
                phases[(a, b)] += v;
                phases[(b, a)] += v;
            }
        }
    }
    AnalyticGate { phases, displacement: displacement_trajectory(amplitudes, crystal, grid, t) }
}

/// Per-step operator coefficients for one mode stage.
struct StageDrive {
    /// Spin-motion coupling per ion at a given time.
    coupling: Vec<C64>,
    /// Carrier coefficient per ion.
    carrier: Vec<f64>,
}

struct ModeSystem<'a> {
    n_qubits: usize,
    cutoff: usize,
    /// `ladder[n][k]`: matrix element of the raising operator `|k> -> |k+1>`
    /// as seen by ion `n`.
    ladder: Vec<Vec<f64>>,
    nu: f64,
    coupling: Vec<f64>,
    amplitudes: &'a DMatrix<f64>,
    tones: &'a DVector<f64>,
    carrier: bool,
    rabi: f64,
}

impl ModeSystem<'_> {
    fn drive_at(&self, t: f64) -> StageDrive {
        let n = self.n_qubits;
        let sines: Vec<f64> = self.tones.iter().map(|w| (w * t).sin()).collect();
        let phase = C64::from_polar(1.0, self.nu * t);
        let coupling = (0..n)
            .map(|ion| {
                let f: f64 = self.amplitudes.row(ion).iter().zip(&sines).map(|(r, s)| r * s).sum();
                phase * (self.coupling[ion] * f)
            })
            .collect();
        let carrier = if self.carrier {
            let cosines: Vec<f64> = self.tones.iter().map(|w| (w * t).cos()).collect();
            (0..n)
                .map(|ion| {
                    let c: f64 = self.amplitudes.row(ion).iter().zip(&cosines).map(|(r, c)| r * c).sum();
                    2.0 * self.rabi * c / n as f64
                })
                .collect()
        } else {
            vec![0.0; n]
        };
        StageDrive { coupling, carrier }
    }

    /// `out = K psi` for the Hermitian generator with the given coefficients.
    fn apply(&self, drive: &StageDrive, psi: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
        let l = self.cutoff;
        let spins = 1usize << self.n_qubits;
        let i = C64::new(0.0, 1.0);
        for ion in 0..self.n_qubits {
            let bit = 1usize << (self.n_qubits - 1 - ion);
            let g = drive.coupling[ion];
            let gc = g.conj();
            let ladder = &self.ladder[ion];
            let c = drive.carrier[ion];
            for s in 0..spins {
                let flipped = s ^ bit;
                let src = &psi[s * l..(s + 1) * l];
                let dst = &mut out[flipped * l..(flipped + 1) * l];
                for k in 0..l - 1 {
                    // raising |k> -> |k+1>, lowering |k+1> -> |k>
                    dst[k + 1] += g * ladder[k] * src[k];
                    dst[k] += gc * ladder[k] * src[k + 1];
                }
                if c != 0.0 {
                    let factor = if s & bit == 0 { i * c } else { -i * c };
                    for k in 0..l {
                        dst[k] += factor * src[k];
                    }
                }
            }
        }
    }

    /// `psi <- exp(-i h K) psi` by Taylor series.
    fn exp_step(&self, drive: &StageDrive, h: f64, psi: &mut Vec<C64>, term: &mut Vec<C64>, scratch: &mut Vec<C64>) {
        term.copy_from_slice(psi);
        let norm0 = psi.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        for k in 1..60 {
            self.apply(drive, term, scratch);
            let f = C64::new(0.0, -h / k as f64);
            let mut tn = 0.0;
            for (t, s) in term.iter_mut().zip(scratch.iter()) {
                *t = f * s;
                tn += t.norm_sqr();
            }
            for (p, t) in psi.iter_mut().zip(term.iter()) {
                *p += t;
            }
            if tn.sqrt() <= 1e-16 * norm0 {
                break;
            }
        }
    }
}

const CF4_C1: f64 = 0.5 - 0.288_675_134_594_812_9; // 1/2 - sqrt(3)/6
const CF4_C2: f64 = 0.5 + 0.288_675_134_594_812_9;
const CF4_A1: f64 = (3.0 - 2.0 * 1.732_050_807_568_877_2) / 12.0;
const CF4_A2: f64 = (3.0 + 2.0 * 1.732_050_807_568_877_2) / 12.0;

fn combine(a: &StageDrive, wa: f64, b: &StageDrive, wb: f64) -> StageDrive {
    StageDrive {
        coupling: a.coupling.iter().zip(&b.coupling).map(|(x, y)| x * wa + y * wb).collect(),
        carrier: a.carrier.iter().zip(&b.carrier).map(|(x, y)| x * wa + y * wb).collect(),
    }
}

fn hermitian_branches(rho: &DMatrix<C64>) -> Vec<(f64, DVector<C64>)> {
    let eig = rho.clone().symmetric_eigen();
    (0..rho.nrows())
        .filter(|&i| eig.eigenvalues[i] > 1e-13)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).into_owned()))
        .collect()
}

/// Evolves the spin register under the drive and returns the final reduced
/// state, its fidelity with `target_state`, and per-stage time series.
pub fn simulate(
    amplitudes: &DMatrix<f64>,
    crystal: &IonCrystal,
    grid: &ToneGrid,
    target_state: &DVector<C64>,
    config: &SimConfig,
) -> Result<SimulationResult> {
    let n = crystal.n_ions();
    if n > MAX_SIM_IONS {
        return Err(LsfError::SimulationTooLarge { requested: n, max: MAX_SIM_IONS });
    }
    if config.phonon_cutoff < 2 {
        return Err(LsfError::InvalidConfig("phonon cutoff must be at least 2".into()));
    }
    if config.steps_per_period == 0 {
        return Err(LsfError::InvalidConfig("steps_per_period must be positive".into()));
    }
    if amplitudes.shape() != (n, grid.len()) {
        return Err(LsfError::Dimension(format!(
            "amplitudes are {:?}, expected ({n}, {})",
            amplitudes.shape(),
            grid.len()
        )));
    }
    let spins = 1usize << n;
    if target_state.len() != spins {
        return Err(LsfError::Dimension(format!("target state has {} entries, expected {spins}", target_state.len())));
    }
    let order: Vec<usize> = config.mode_order.clone().unwrap_or_else(|| (0..n).collect());
    {
        let mut sorted = order.clone();
        sorted.sort_unstable();
        if sorted != (0..n).collect::<Vec<_>>() {
            return Err(LsfError::InvalidConfig(format!("mode order {order:?} is not a permutation of 0..{n}")));
        }
    }
    let init = match &config.initial_state {
        Some(s) if s.len() == spins => s.normalize(),
        Some(s) => return Err(LsfError::Dimension(format!("initial state has {} entries, expected {spins}", s.len()))),
        None => basis_state(n, &"0".repeat(n))?,
    };
    let l = config.phonon_cutoff;
    let dim = spins * l;
    let gate_time = grid.gate_time;
    let omega_max = grid.tone_freqs.iter().cloned().fold(0.0_f64, f64::max);
    let rabi = crystal.config.base_rabi;

    let mut rho = &init * init.adjoint();
    let mut leakage: f64 = 0.0;
    let mut high_population: f64 = 0.0;
    let mut max_drift: f64 = 0.0;
    let mut stages = Vec::with_capacity(n);

    for (stage, &j) in order.iter().enumerate() {
        let nu = crystal.mode_freqs[j];
        let coupling: Vec<f64> = (0..n).map(|ion| rabi * crystal.lamb_dicke[j] * crystal.participation[(ion, j)]).collect();
        let ladder: Vec<Vec<f64>> = (0..n)
            .map(|ion| {
                let eta_ion = crystal.lamb_dicke[j] * crystal.participation[(ion, j)];
                (0..l)
                    .map(|k| {
                        let up = (k + 1) as f64;
                        if config.debye_waller {
                            up.sqrt() * (1.0 - 0.5 * eta_ion * eta_ion * up)
                        } else {
                            up.sqrt()
                        }
                    })
                    .collect()
            })
            .collect();
        let system = ModeSystem {
            n_qubits: n,
            cutoff: l,
            ladder,
            nu,
            coupling,
            amplitudes,
            tones: &grid.tone_freqs,
            carrier: config.carrier,
            rabi,
        };

        let periods = gate_time * (nu + omega_max) / (2.0 * PI);
        let steps = ((periods * config.steps_per_period as f64).ceil() as usize).max(config.samples.max(1));
        let h = gate_time / steps as f64;
        // precomputed generators for every step
        let generators: Vec<(StageDrive, StageDrive)> = (0..steps)
            .map(|s| {
                let t0 = s as f64 * h;
                let d1 = system.drive_at(t0 + CF4_C1 * h);
                let d2 = system.drive_at(t0 + CF4_C2 * h);
                (combine(&d1, CF4_A2, &d2, CF4_A1), combine(&d1, CF4_A1, &d2, CF4_A2))
            })
            .collect();
        let sample_steps: Vec<usize> = (0..=config.samples).map(|s| s * steps / config.samples.max(1)).collect();

        let samples = sample_steps.len();
        let mut occupation = vec![0.0; samples];
        let mut x_squared = vec![0.0; samples];
        let mut populations = vec![vec![0.0; spins]; samples];
        let mut new_rho = DMatrix::from_element(spins, spins, C64::new(0.0, 0.0));

        for (p, branch) in hermitian_branches(&rho) {
            let mut psi = vec![C64::new(0.0, 0.0); dim];
            for s in 0..spins {
                psi[s * l] = branch[s];
            }
            let mut term = vec![C64::new(0.0, 0.0); dim];
            let mut scratch = vec![C64::new(0.0, 0.0); dim];
            let mut next_sample = 0;
            for step in 0..=steps {
                while next_sample < samples && sample_steps[next_sample] == step {
                    record(&psi, spins, l, p, next_sample, &mut occupation, &mut x_squared, &mut populations, &mut leakage, &mut high_population);
                    next_sample += 1;
                }
                if step == steps {
                    break;
                }
                let (first, second) = &generators[step];
                system.exp_step(first, h, &mut psi, &mut term, &mut scratch);
                system.exp_step(second, h, &mut psi, &mut term, &mut scratch);
            }
            for a in 0..spins {
                for b in 0..spins {
                    let mut acc = C64::new(0.0, 0.0);
                    for k in 0..l {
                        acc += psi[a * l + k] * psi[b * l + k].conj();
                    }
                    new_rho[(a, b)] += acc * p;
                }
            }
        }
        let drift = (new_rho.trace().re - rho.trace().re).abs();
        max_drift = max_drift.max(drift);
        if drift > config.trace_tolerance {
            return Err(LsfError::TraceDrift { drift, stage });
        }
        rho = (&new_rho + new_rho.adjoint()) * C64::new(0.5, 0.0);
        let times = sample_steps.iter().map(|&s| s as f64 * h).collect();
        stages.push(StageSeries { mode: j, times, occupation, x_squared, populations });
    }

    let fidelity = state_fidelity(&rho, target_state);
    Ok(SimulationResult {
        final_spin_state: rho,
        fidelity,
        leakage,
        high_population,
        valid: leakage <= LEAKAGE_LIMIT,
        max_trace_drift: max_drift,
        stages,
        carrier: config.carrier,
        debye_waller: config.debye_waller,
    })
}

#[allow(clippy::too_many_arguments)]
fn record(
    psi: &[C64],
    spins: usize,
    l: usize,
    weight: f64,
    sample: usize,
    occupation: &mut [f64],
    x_squared: &mut [f64],
    populations: &mut [Vec<f64>],
    leakage: &mut f64,
    high: &mut f64,
) {
    let mut fock = vec![0.0; l];
    let mut x2 = 0.0;
    for s in 0..spins {
        let block = &psi[s * l..(s + 1) * l];
        let mut pop = 0.0;
        for (k, amp) in block.iter().enumerate() {
            let pk = amp.norm_sqr();
            fock[k] += pk;
            pop += pk;
            // <x^2> = <2n + 1> + 2 Re <a^2>
            x2 += (2 * k + 1) as f64 * pk;
            if k + 2 < l {
                x2 += 2.0 * (block[k].conj() * block[k + 2]).re * (((k + 1) * (k + 2)) as f64).sqrt();
            }
        }
        populations[sample][s] += weight * pop;
    }
    occupation[sample] += weight * fock.iter().enumerate().map(|(k, p)| k as f64 * p).sum::<f64>();
    x_squared[sample] += weight * x2;
    *leakage = leakage.max(fock[l - 1]);
    *high = high.max(fock.iter().skip(HIGH_LEVEL + 1).sum::<f64>());
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal::{build_crystal, CrystalConfig};

    #[test]
    fn cluster_phases_give_the_cluster_state() {
        let mut phases = DMatrix::zeros(4, 4);
        for (a, b) in [(0, 1), (2, 3), (0, 2), (1, 3)] {
            phases[(a, b)] = PI / 4.0;
            phases[(b, a)] = PI / 4.0;
        }
        let out = apply_xx_phases(&phases, &basis_state(4, "0000").unwrap());
        let mut expected = DVector::from_element(16, C64::new(0.0, 0.0));
        expected[0b0000] = C64::new(0.5, 0.0);
        expected[0b0110] = C64::new(-0.5, 0.0);
        expected[0b1001] = C64::new(-0.5, 0.0);
        expected[0b1111] = C64::new(-0.5, 0.0);
        assert!((out - expected).norm() < 1e-14);
    }

    #[test]
    fn zero_drive_is_identity() {
        let c = build_crystal(&CrystalConfig::calcium(2)).unwrap();
        let grid = ToneGrid::from_tones(1e-5, vec![2.0 * PI * 3.2e6]).unwrap();
        let amps = DMatrix::zeros(2, 1);
        let init = basis_state(2, "00").unwrap();
        let cfg = SimConfig { steps_per_period: 2, samples: 4, ..Default::default() };
        let res = simulate(&amps, &c, &grid, &init, &cfg).unwrap();
        assert!((res.fidelity - 1.0).abs() < 1e-14);
        let other = basis_state(2, "01").unwrap();
        assert!(simulate(&amps, &c, &grid, &other, &cfg).unwrap().fidelity.abs() < 1e-14);
    }

    #[test]
    fn rejects_large_registers() {
        let c = build_crystal(&CrystalConfig::calcium(7)).unwrap();
        let grid = ToneGrid::from_tones(1e-5, vec![2.0 * PI * 3.2e6]).unwrap();
        let res = simulate(&DMatrix::zeros(7, 1), &c, &grid, &DVector::zeros(128), &SimConfig::default());
        assert!(matches!(res, Err(LsfError::SimulationTooLarge { requested: 7, max: 6 })));
    }

    #[test]
    fn basis_labels() {
        let v = basis_state(3, "100").unwrap();
        assert_eq!(v[4], C64::new(1.0, 0.0));
        assert!(basis_state(3, "10").is_err());
    }
}

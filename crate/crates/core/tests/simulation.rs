//! The time-stepping simulator against the closed-form gate description.

use std::f64::consts::PI;
use std::sync::OnceLock;

use lsf_core::analysis::mode_variance;
use lsf_core::crystal::{build_crystal, min_gate_time, CrystalConfig};
use lsf_core::design::{GateDesign, GridOptions};
use lsf_core::lsf::{solve, DriveSolution, SolverConfig};
use lsf_core::simkit::{analytic_unitary, apply_xx_phases, basis_state, simulate, SimConfig};
use lsf_core::targets::{parse_target_spec, TargetMatrix};
use lsf_core::zeropool::{aggregate_pool, Ansatz, PoolRequest};

struct Case {
    design: GateDesign,
    target: TargetMatrix,
    best: DriveSolution,
}

fn solved(n: usize, spec: &str, ratio: f64) -> Case {
    let c = build_crystal(&CrystalConfig::calcium(n)).unwrap();
    let t = ratio * min_gate_time(&c).unwrap();
    let design = GateDesign::new(c, t, &GridOptions::default()).unwrap();
    let target = parse_target_spec(spec, n).unwrap();
    let pool = aggregate_pool(&design.couplings, &PoolRequest::new(Ansatz::Multi, 4), "c", "g").unwrap();
    let best = solve(&pool, &design.couplings, &design.kernel, &target, &SolverConfig::default()).unwrap().remove(0);
    Case { design, target, best }
}

fn cluster() -> &'static Case {
    static CASE: OnceLock<Case> = OnceLock::new();
    CASE.get_or_init(|| solved(4, "cluster:2x2", 3.0))
}

fn ideal(case: &Case) -> nalgebra::DVector<num_complex::Complex64> {
    let n = case.design.n_ions();
    apply_xx_phases(&case.target.phases, &basis_state(n, &"0".repeat(n)).unwrap())
}

#[test]
fn two_ion_gate_reaches_the_target_phase() {
    let case = solved(2, "pairs:0-1@0.7853981633974483", 3.0);
    let gate = analytic_unitary(&case.best.amplitudes, &case.design.crystal, &case.design.grid);
    assert!((gate.phases[(0, 1)] - PI / 4.0).abs() < 1e-6, "{}", gate.phases[(0, 1)]);
    let res = simulate(&case.best.amplitudes, &case.design.crystal, &case.design.grid, &ideal(&case), &SimConfig::default()).unwrap();
    assert!(res.fidelity > 1.0 - 1e-6, "{}", res.fidelity);
    assert!(res.max_trace_drift <= 1e-9);
}

#[test]
fn cluster_gate_populations() {
    let case = cluster();
    let res = simulate(&case.best.amplitudes, &case.design.crystal, &case.design.grid, &ideal(case), &SimConfig::default()).unwrap();
    assert!(res.fidelity > 0.9999, "{}", res.fidelity);
    let last = res.stages.last().unwrap().populations.last().unwrap();
    for (idx, p) in last.iter().enumerate() {
        if [0b0000, 0b0110, 0b1001, 0b1111].contains(&idx) {
            assert!((p - 0.25).abs() < 1e-3, "state {idx:04b}: {p}");
        } else {
            assert!(*p < 1e-3, "state {idx:04b}: {p}");
        }
    }
    assert!(res.high_population < 1e-5 && res.valid);
}

#[test]
fn mode_order_does_not_matter() {
    let case = cluster();
    let base = SimConfig { steps_per_period: 16, samples: 4, ..SimConfig::default() };
    let forward = simulate(&case.best.amplitudes, &case.design.crystal, &case.design.grid, &ideal(case), &base).unwrap();
    let reversed = SimConfig { mode_order: Some(vec![3, 1, 0, 2]), ..base };
    let other = simulate(&case.best.amplitudes, &case.design.crystal, &case.design.grid, &ideal(case), &reversed).unwrap();
    assert!((forward.fidelity - other.fidelity).abs() < 1e-9);
    assert!((forward.final_spin_state - other.final_spin_state).camax() < 1e-9);
}

#[test]
fn phonon_cutoff_is_converged() {
    let case = cluster();
    let run = |cutoff| {
        let cfg = SimConfig { phonon_cutoff: cutoff, steps_per_period: 16, samples: 4, ..SimConfig::default() };
        simulate(&case.best.amplitudes, &case.design.crystal, &case.design.grid, &ideal(case), &cfg).unwrap().fidelity
    };
    let (f14, f20) = (run(14), run(20));
    assert!((f14 - f20).abs() < 1e-6, "{f14} vs {f20}");
}

#[test]
fn position_variance_matches_the_displacements() {
    let case = cluster();
    let cfg = SimConfig { samples: 8, ..SimConfig::default() };
    let res = simulate(&case.best.amplitudes, &case.design.crystal, &case.design.grid, &ideal(case), &cfg).unwrap();
    // the first stage starts from a pure spin state, so the comparison is exact
    let stage = &res.stages[0];
    for (s, &t) in stage.times.iter().enumerate() {
        let expected = mode_variance(&case.best.amplitudes, &case.design.crystal, &case.design.grid, t)[stage.mode];
        assert!((stage.x_squared[s] - 1.0 - expected).abs() <= 1e-6 * (1.0 + expected), "t={t}");
    }
}

#[test]
fn coarse_steps_converge_at_fourth_order() {
    let case = cluster();
    let run = |spp| {
        let cfg = SimConfig { steps_per_period: spp, samples: 1, ..SimConfig::default() };
        simulate(&case.best.amplitudes, &case.design.crystal, &case.design.grid, &ideal(case), &cfg).unwrap().final_spin_state
    };
    let reference = run(32);
    let e2 = (run(2) - &reference).camax();
    let e4 = (run(4) - &reference).camax();
    // halving the step shrinks the error by about 2^4
    assert!(e2 / e4 > 10.0, "{e2:e} / {e4:e}");
}

#[test]
fn halving_the_step_is_below_tolerance() {
    let case = cluster();
    let run = |spp| {
        let cfg = SimConfig { steps_per_period: spp, samples: 1, ..SimConfig::default() };
        simulate(&case.best.amplitudes, &case.design.crystal, &case.design.grid, &ideal(case), &cfg).unwrap().fidelity
    };
    let default = SimConfig::default().steps_per_period;
    assert!((run(default) - run(2 * default)).abs() < 1e-8);
}

#[test]
fn zero_drive_with_error_terms_is_identity() {
    let case = cluster();
    let zero = nalgebra::DMatrix::zeros(4, case.design.grid.len());
    let init = basis_state(4, "0000").unwrap();
    let cfg = SimConfig { carrier: true, debye_waller: true, samples: 2, steps_per_period: 4, ..SimConfig::default() };
    let res = simulate(&zero, &case.design.crystal, &case.design.grid, &init, &cfg).unwrap();
    assert!((res.fidelity - 1.0).abs() < 1e-14);
    assert!(res.carrier && res.debye_waller);
}

fn solved_with(cfg: &CrystalConfig, spec: &str, gate_time: impl Fn(f64) -> f64) -> Case {
    let c = build_crystal(cfg).unwrap();
    let t = gate_time(min_gate_time(&c).unwrap());
    let design = GateDesign::new(c, t, &GridOptions::default()).unwrap();
    let target = parse_target_spec(spec, cfg.n_ions).unwrap();
    let pool = aggregate_pool(&design.couplings, &PoolRequest::new(Ansatz::Multi, 4), "c", "g").unwrap();
    let best = solve(&pool, &design.couplings, &design.kernel, &target, &SolverConfig::default()).unwrap().remove(0);
    Case { design, target, best }
}

#[test]
fn large_lamb_dicke_makes_debye_waller_visible() {
    // eta^2 of about 0.05
    let case = solved_with(&CrystalConfig::calcium(4).with_wavenumber(3.5e7), "cluster:2x2", |t| 3.0 * t);
    let eta2 = case.design.crystal.lamb_dicke.iter().map(|e| e * e).fold(0.0, f64::max);
    assert!(eta2 > 0.04 && eta2 < 0.07, "{eta2}");
    let run = |dw| {
        let cfg = SimConfig { debye_waller: dw, samples: 2, ..SimConfig::default() };
        simulate(&case.best.amplitudes, &case.design.crystal, &case.design.grid, &ideal(&case), &cfg).unwrap().fidelity
    };
    let (plain, dw) = (run(false), run(true));
    assert!(plain - dw > 1e-3, "{plain} vs {dw}");
}

#[test]
fn carrier_matters_more_at_lower_mode_frequencies() {
    // same absolute gate time, band scaled down
    let base = CrystalConfig::calcium(2).with_wavenumber(8e6);
    let gate_time = 10.0 * min_gate_time(&build_crystal(&base).unwrap()).unwrap();
    let mut losses = Vec::new();
    for scale in [1.0, 0.5, 0.25] {
        // keep the mode structure, move the band
        let mut cfg = base.clone();
        cfg.coulomb_ratio = Some(base.derived_coulomb_ratio());
        cfg.mode_freq_low *= scale;
        cfg.mode_freq_high *= scale;
        let case = solved_with(&cfg, "pairs:0-1", |_| gate_time);
        let run = |carrier| {
            let cfg = SimConfig { carrier, samples: 2, ..SimConfig::default() };
            simulate(&case.best.amplitudes, &case.design.crystal, &case.design.grid, &ideal(&case), &cfg).unwrap().fidelity
        };
        losses.push(run(false) - run(true));
    }
    assert!(losses.windows(2).all(|w| w[1] > w[0]), "{losses:?}");
}

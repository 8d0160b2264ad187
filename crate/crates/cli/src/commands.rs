//! One function per verb. Each writes its files under the output directory
//! and returns a short report for stdout.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lsf_core::analysis::{abs_nuclear_norm, ms_reference_rabi, nuclear_norm_estimate};
use lsf_core::crystal::{build_crystal, min_gate_time};
use lsf_core::design::GateDesign;
use lsf_core::lsf::{rank_solutions, refine, solve, DriveSolution, SolutionFile, SolutionRecord, SOLUTION_FORMAT};
use lsf_core::simkit::{apply_xx_phases, basis_state, simulate, MAX_SIM_IONS};
use lsf_core::targets::{parse_target_spec, TargetMatrix};
use lsf_core::zeropool::{Ansatz, PoolStats, SolutionPool};
use lsf_core::LsfError;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{read_file, write_file, CliError, CliResult};
use crate::experiments::{self, PowerPoint, NORMALIZED_POWER, OMEGA_NUC};
use crate::output::{num, write_csv, Header};

/// Effective configuration plus where results go.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub config_hash: String,
    pub out: PathBuf,
}

impl Context {
    /// Applies command-line overrides; the hash covers the effective configuration.
    pub fn new(mut config: RunConfig, seed: Option<u64>, out: Option<PathBuf>) -> CliResult<Self> {
        if let Some(s) = seed {
            config.seed = s;
        }
        if let Some(o) = out {
            config.output_dir = o;
        }
        config.validate()?;
        let out = config.output_dir.clone();
        std::fs::create_dir_all(&out).map_err(|source| CliError::File { path: out.display().to_string(), source })?;
        Ok(Self { config_hash: config.hash(), config, out })
    }

    fn header(&self, verb: &str) -> Header {
        Header::new(verb, &self.config_hash, &[self.config.seed])
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn cache(&self) -> Option<&Path> {
        self.config.kernel_cache.as_deref()
    }

    fn design(&self) -> CliResult<GateDesign> {
        experiments::design_for(&self.config.crystal, self.config.gate_time, &self.config.grid, self.cache())
    }

    fn target(&self) -> CliResult<TargetMatrix> {
        Ok(parse_target_spec(&self.config.target, self.config.crystal.n_ions)?)
    }
}

pub fn crystal(ctx: &Context) -> CliResult<String> {
    let c = build_crystal(&ctx.config.crystal)?;
    let n = c.n_ions();
    let t_min = min_gate_time(&c)?;
    write_file(&ctx.path("crystal.json"), &c.to_json())?;
    let mut columns = vec!["mode".to_string(), "freq_rad_s".into(), "freq_mhz".into(), "lamb_dicke".into()];
    columns.extend((0..n).map(|i| format!("ion{i}")));
    let rows: Vec<Vec<String>> = (0..n)
        .map(|j| {
            let nu = c.mode_freqs[j];
            let mut row = vec![j.to_string(), num(nu), num(nu / (2.0 * std::f64::consts::PI * 1e6)), num(c.lamb_dicke[j])];
            row.extend((0..n).map(|i| num(c.participation[(i, j)])));
            row
        })
        .collect();
    let header = ctx.header("crystal").with("crystal_sha256", c.hash()).with("t_min_s", num(t_min)).with("formula", "T_min = 2 pi / min_j (nu_{j+1} - nu_j)");
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    write_csv(&ctx.path("modes.csv"), &header, &cols, &rows)?;
    Ok(format!("crystal: {n} ions, hash {}, T_min = {t_min:.6e} s, mean eta = {:.4e}", c.hash(), c.mean_lamb_dicke()))
}

fn pool_report(ctx: &Context, stats: &PoolStats, design: &GateDesign, ansatz: Ansatz, max_residual: f64) -> CliResult<()> {
    let header = ctx
        .header("pool")
        .with("crystal_sha256", design.crystal_hash())
        .with("grid_sha256", design.grid_hash())
        .with("formula", "success_rate = converged / attempts")
        .with("formula", "failure_rate = 1 - admitted / attempts");
    let row = vec![
        format!("{ansatz:?}").to_lowercase(),
        num(design.gate_time()),
        stats.attempts.to_string(),
        stats.converged.to_string(),
        stats.admitted.to_string(),
        stats.rejected_overlap.to_string(),
        num(stats.success_rate()),
        num(failure_rate(stats)),
        num(max_residual),
    ];
    let cols = ["ansatz", "gate_time_s", "attempts", "converged", "admitted", "rejected_overlap", "success_rate", "failure_rate", "max_residual"];
    write_csv(&ctx.path("pool_report.csv"), &header, &cols, &[row])
}

/// Share of attempts that did not yield a new pool entry.
fn failure_rate(stats: &PoolStats) -> f64 {
    if stats.attempts == 0 {
        1.0
    } else {
        1.0 - stats.admitted as f64 / stats.attempts as f64
    }
}

pub fn pool(ctx: &Context) -> CliResult<String> {
    let cfg = &ctx.config;
    if cfg.pool.ansatz == Ansatz::Multi {
        cfg.check_multi_size(cfg.crystal.n_ions)?;
    }
    let design = ctx.design()?;
    let request = cfg.pool.request(cfg.seed);
    let pool = match experiments::pool_for(&design, &request) {
        Ok(p) => p,
        Err(CliError::Core(LsfError::EmptyPool { attempts })) => {
            let stats = PoolStats { attempts, ..PoolStats::default() };
            pool_report(ctx, &stats, &design, request.ansatz, f64::NAN)?;
            return Err(LsfError::EmptyPool { attempts }.into());
        }
        Err(e) => return Err(e),
    };
    let max_residual = pool.entries.iter().map(|e| e.residual).fold(0.0, f64::max);
    pool_report(ctx, &pool.stats, &design, pool.ansatz, max_residual)?;
    pool.write(&ctx.path("pool.json"))?;
    let rows: Vec<Vec<String>> = pool.entries.iter().map(|e| vec![e.seed.to_string(), num(e.residual), e.iterations.to_string()]).collect();
    write_csv(&ctx.path("pool_entries.csv"), &ctx.header("pool"), &["seed", "residual", "iterations"], &rows)?;
    Ok(format!(
        "pool: {} of {} requested entries, success rate {:.3}, failure rate {:.3} over {} attempts, max residual {max_residual:.3e}",
        pool.len(),
        request.count,
        pool.stats.success_rate(),
        failure_rate(&pool.stats),
        pool.stats.attempts
    ))
}

fn write_solutions(ctx: &Context, stem: &str, design: &GateDesign, target: &TargetMatrix, solutions: &[DriveSolution]) -> CliResult<()> {
    let file = SolutionFile {
        format: SOLUTION_FORMAT.into(),
        crystal_hash: design.crystal_hash(),
        grid_hash: design.grid_hash(),
        target: target.to_triplets(),
        solutions: solutions.iter().map(SolutionRecord::from_solution).collect(),
    };
    write_file(&ctx.path(&format!("{stem}.json")), &serde_json::to_string_pretty(&file)?)?;
    let estimate = nuclear_norm_estimate(target, &design.crystal, design.gate_time(), &ctx.config.estimator);
    let rows: Vec<Vec<String>> = solutions
        .iter()
        .enumerate()
        .map(|(rank, s)| {
            vec![
                rank.to_string(),
                s.origin.map_or(String::new(), |o| o.to_string()),
                num(s.total_rabi),
                num(s.infidelity),
                num(s.lambda),
                s.rabi_trace.len().saturating_sub(1).to_string(),
                s.warning.clone().unwrap_or_default(),
            ]
        })
        .collect();
    let header = ctx.header(stem).with("target", &target.label).with("omega_nuc", num(estimate)).with("formula", OMEGA_NUC);
    write_csv(
        &ctx.path(&format!("{stem}.csv")),
        &header,
        &["rank", "origin_seed", "total_rabi", "infidelity", "lambda", "descent_steps", "warning"],
        &rows,
    )
}

fn emit_spectrum(ctx: &Context, design: &GateDesign, target: &TargetMatrix, best: &DriveSolution) -> CliResult<()> {
    let power = best.ion_power();
    let rows: Vec<Vec<String>> = (0..power.len())
        .map(|i| vec![i.to_string(), num(power[i]), u8::from(target.coupled_set.contains(&i)).to_string()])
        .collect();
    let header = ctx.header("solve").with("target", &target.label).with("formula", "power_n = |amplitudes row n|");
    write_csv(&ctx.path("ion_power.csv"), &header, &["ion", "power", "coupled"], &rows)?;
    let modes = &design.crystal.mode_freqs;
    let rows: Vec<Vec<String>> = best
        .tone_statistics()
        .iter()
        .enumerate()
        .map(|(k, &(mean, std))| {
            let w = design.grid.tone_freqs[k];
            let nearest = modes.iter().map(|nu| w - nu).min_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(f64::NAN);
            vec![k.to_string(), num(w), num(nearest), num(mean), num(std)]
        })
        .collect();
    let header = ctx.header("solve").with("target", &target.label).with("formula", "mean/std over ions of |amplitude|");
    write_csv(&ctx.path("tone_stats.csv"), &header, &["tone", "freq_rad_s", "detuning_from_nearest_mode", "mean_abs", "std_abs"], &rows)
}

pub fn solve_cmd(ctx: &Context, pool_path: &Path, spectrum: bool) -> CliResult<String> {
    let cfg = &ctx.config;
    cfg.check_multi_size(cfg.crystal.n_ions)?;
    let pool = SolutionPool::from_json(&read_file(pool_path)?)?;
    let design = ctx.design()?;
    pool.check_provenance(&design.crystal_hash(), &design.grid_hash())?;
    let target = ctx.target()?;
    let solutions = solve(&pool, &design.couplings, &design.kernel, &target, &cfg.solver)?;
    write_solutions(ctx, "solutions", &design, &target, &solutions)?;
    let best = &solutions[0];
    if spectrum {
        emit_spectrum(ctx, &design, &target, best)?;
    }
    Ok(format!(
        "solve: {} solutions for '{}', best |r| = {:.6e} rad/s at infidelity {:.3e}",
        solutions.len(),
        target.label,
        best.total_rabi,
        best.infidelity
    ))
}

fn read_solutions(ctx: &Context, path: &Path) -> CliResult<(GateDesign, TargetMatrix, Vec<DriveSolution>)> {
    let file: SolutionFile = serde_json::from_str(&read_file(path)?)?;
    if file.format != SOLUTION_FORMAT {
        return Err(LsfError::Format(format!("unsupported solution format '{}'", file.format)).into());
    }
    let design = ctx.design()?;
    if file.crystal_hash != design.crystal_hash() || file.grid_hash != design.grid_hash() {
        return Err(LsfError::Provenance("solution file was built for a different crystal or tone grid".into()).into());
    }
    let target = TargetMatrix::from_triplets(&file.target)?;
    let solutions = file.solutions.iter().map(SolutionRecord::to_solution).collect::<Result<Vec<_>, _>>()?;
    if solutions.is_empty() {
        return Err(LsfError::Format("solution file holds no solutions".into()).into());
    }
    Ok((design, target, solutions))
}

pub fn refine_cmd(ctx: &Context, path: &Path) -> CliResult<String> {
    let (design, target, solutions) = read_solutions(ctx, path)?;
    let mut refined = solutions
        .iter()
        .map(|s| refine(s, &design.couplings, &design.kernel, &target, &ctx.config.solver))
        .collect::<Result<Vec<_>, _>>()?;
    rank_solutions(&mut refined, ctx.config.solver.rank_threshold);
    write_solutions(ctx, "refined", &design, &target, &refined)?;
    Ok(format!("refine: best |r| = {:.6e} rad/s at infidelity {:.3e}", refined[0].total_rabi, refined[0].infidelity))
}

#[derive(Serialize)]
struct SimulationSummary {
    config_sha256: String,
    solution_index: usize,
    target: String,
    fidelity: f64,
    predicted_infidelity: f64,
    leakage: f64,
    high_population: f64,
    valid: bool,
    max_trace_drift: f64,
    carrier: bool,
    debye_waller: bool,
    phonon_cutoff: usize,
}

pub fn simulate_cmd(ctx: &Context, path: &Path, index: usize) -> CliResult<String> {
    let n = ctx.config.crystal.n_ions;
    if n > MAX_SIM_IONS {
        return Err(LsfError::SimulationTooLarge { requested: n, max: MAX_SIM_IONS }.into());
    }
    let (design, target, solutions) = read_solutions(ctx, path)?;
    let sol = solutions
        .get(index)
        .ok_or_else(|| CliError::Config(format!("solution index {index} out of range ({} available)", solutions.len())))?;
    let sim = &ctx.config.simulation;
    let init = basis_state(n, &"0".repeat(n))?;
    let ideal = apply_xx_phases(&target.phases, &init);
    let res = simulate(&sol.amplitudes, &design.crystal, &design.grid, &ideal, sim)?;

    let header = ctx
        .header("simulate")
        .with("target", &target.label)
        .with("carrier", res.carrier)
        .with("debye_waller", res.debye_waller)
        .with("formula", "p_b = <b|rho_spin|b>, qubit 0 is the leftmost bit");
    let mut columns = vec!["stage".to_string(), "mode".into(), "time_s".into()];
    columns.extend((0..1usize << n).map(|b| format!("p_{b:0n$b}")));
    let mut pop_rows = Vec::new();
    let mut occ_rows = Vec::new();
    for (stage, s) in res.stages.iter().enumerate() {
        for (k, &t) in s.times.iter().enumerate() {
            let mut row = vec![stage.to_string(), s.mode.to_string(), num(t)];
            row.extend(s.populations[k].iter().map(|&p| num(p)));
            pop_rows.push(row);
            occ_rows.push(vec![stage.to_string(), s.mode.to_string(), num(t), num(s.occupation[k]), num(s.x_squared[k])]);
        }
    }
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    write_csv(&ctx.path("populations.csv"), &header, &cols, &pop_rows)?;
    let header = header.with("occupation", "<n_j>").with("x_squared", "<(a + a^dagger)^2>");
    write_csv(&ctx.path("occupations.csv"), &header, &["stage", "mode", "time_s", "occupation", "x_squared"], &occ_rows)?;
    let summary = SimulationSummary {
        config_sha256: ctx.config_hash.clone(),
        solution_index: index,
        target: target.label.clone(),
        fidelity: res.fidelity,
        predicted_infidelity: sol.infidelity,
        leakage: res.leakage,
        high_population: res.high_population,
        valid: res.valid,
        max_trace_drift: res.max_trace_drift,
        carrier: res.carrier,
        debye_waller: res.debye_waller,
        phonon_cutoff: sim.phonon_cutoff,
    };
    write_file(&ctx.path("simulation.json"), &serde_json::to_string_pretty(&summary)?)?;
    let mut report = format!("simulate: fidelity {:.9}, predicted infidelity {:.3e}, leakage {:.3e}", res.fidelity, sol.infidelity, res.leakage);
    if !res.valid {
        report.push_str(" (INVALID: population reached the phonon cutoff)");
    }
    Ok(report)
}

pub fn estimate_cmd(ctx: &Context) -> CliResult<String> {
    let c = build_crystal(&ctx.config.crystal)?;
    let t_min = min_gate_time(&c)?;
    let t = ctx.config.gate_time.resolve(&c)?;
    let target = ctx.target()?;
    let nuc = abs_nuclear_norm(&target);
    let omega = nuclear_norm_estimate(&target, &c, t, &ctx.config.estimator);
    let ms = ms_reference_rabi(std::f64::consts::FRAC_PI_4, c.mean_lamb_dicke(), t);
    let header = ctx
        .header("estimate")
        .with("formula", OMEGA_NUC)
        .with("k_nuc", num(ctx.config.estimator.k_nuc))
        .with("exponent", num(ctx.config.estimator.exponent));
    let row = vec![c.n_ions().to_string(), num(t), num(t_min), num(t / t_min), num(nuc), num(omega), num(ms), target.label.clone()];
    write_csv(
        &ctx.path("estimate.csv"),
        &header,
        &["N", "gate_time_s", "t_min_s", "T/T_min", "nuc", "Omega_nuc", "ms_rabi", "target_label"],
        &[row],
    )?;
    let mut s = String::new();
    let _ = writeln!(s, "Omega_nuc = {omega:.6e} rad/s");
    let _ = writeln!(s, "T_min     = {t_min:.6e} s (T/T_min = {:.3})", t / t_min);
    let _ = write!(s, "MS pair   = {ms:.6e} rad/s at phase pi/4");
    Ok(s)
}

fn power_rows(points: &[PowerPoint]) -> Vec<Vec<String>> {
    points
        .iter()
        .map(|p| {
            vec![
                p.n_ions.to_string(),
                num(p.time_ratio),
                num(p.total_rabi),
                num(p.omega_nuc),
                p.label.clone(),
                num(p.nuc),
                num(p.normalized_power()),
                num(p.infidelity),
                num(p.gate_time),
            ]
        })
        .collect()
}

const POWER_COLUMNS: [&str; 9] = ["N", "T/T_min", "|r|", "Omega_nuc", "target_label", "nuc", "normalized_power", "infidelity", "gate_time_s"];

pub fn scaling_cmd(ctx: &Context) -> CliResult<String> {
    let points = experiments::scaling(&ctx.config, ctx.cache())?;
    let fit = experiments::scaling_fit(&points)?;
    let header = ctx
        .header("scaling")
        .with("formula", NORMALIZED_POWER)
        .with("formula", OMEGA_NUC)
        .with("fit", format!("log normalized_power = {} log(T/T_min) + {}; R^2 = {}", num(fit.slope), num(fit.intercept), num(fit.r_squared)));
    write_csv(&ctx.path("scaling.csv"), &header, &POWER_COLUMNS, &power_rows(&points))?;
    Ok(format!("scaling: {} runs, log-log slope {:.4} (R^2 {:.4})", points.len(), fit.slope, fit.r_squared))
}

pub fn collapse_cmd(ctx: &Context) -> CliResult<String> {
    let points = experiments::collapse(&ctx.config, ctx.cache())?;
    let fit = experiments::collapse_fit(&points)?;
    let header = ctx
        .header("collapse")
        .with("formula", OMEGA_NUC)
        .with("fit", format!("log |r| = {} log nuc(|phi|) + {}; R^2 = {}", num(fit.slope), num(fit.intercept), num(fit.r_squared)));
    write_csv(&ctx.path("collapse.csv"), &header, &POWER_COLUMNS, &power_rows(&points))?;
    Ok(format!("collapse: {} targets, log-log slope {:.4} (R^2 {:.4})", points.len(), fit.slope, fit.r_squared))
}

pub fn compare_cmd(ctx: &Context) -> CliResult<String> {
    let cfg = &ctx.config;
    let n = cfg.crystal.n_ions;
    cfg.check_multi_size(n)?;
    let design = ctx.design()?;
    let targets = cfg.compare.targets.iter().map(|s| parse_target_spec(s, n)).collect::<Result<Vec<_>, _>>()?;
    if targets.is_empty() {
        return Err(CliError::Config("compare needs at least one target".into()));
    }
    let results = experiments::compare_ansatz(&design, &targets, cfg.compare.count, cfg.seed, &cfg.solver)?;
    let rows: Vec<Vec<String>> = results
        .iter()
        .flat_map(|c| &c.rows)
        .map(|r| {
            vec![
                r.target.clone(),
                r.multi_seed.to_string(),
                r.global_seed.to_string(),
                num(r.zero_overlap),
                num(r.solution_overlap),
                num(r.multi_rabi),
                num(r.global_rabi),
            ]
        })
        .collect();
    let header = ctx
        .header("compare-ansatz")
        .with("formula", "overlap(a, b) = |a . b| / (|a| |b|); each multi entry is paired with its closest global entry");
    write_csv(
        &ctx.path("compare.csv"),
        &header,
        &["target_label", "multi_seed", "global_seed", "zero_overlap", "solution_overlap", "multi_rabi", "global_rabi"],
        &rows,
    )?;
    let summary: Vec<Vec<String>> = results
        .iter()
        .map(|c| vec![c.target.clone(), num(c.power_ratio), num(c.median_zero_overlap), num(c.median_solution_overlap), c.rows.len().to_string()])
        .collect();
    let header = ctx.header("compare-ansatz").with("formula", "power_ratio = median |r_global| / median |r_multi|");
    write_csv(
        &ctx.path("compare_summary.csv"),
        &header,
        &["target_label", "power_ratio", "median_zero_overlap", "median_solution_overlap", "pairs"],
        &summary,
    )?;
    let mut s = String::from("compare-ansatz:");
    for c in &results {
        let _ = write!(
            s,
            "\n  {}: power ratio {:.4}, median zero overlap {:.3}, median solution overlap {:.3}",
            c.target, c.power_ratio, c.median_zero_overlap, c.median_solution_overlap
        );
    }
    Ok(s)
}

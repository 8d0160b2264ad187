//! Run configuration: one JSON document drives every verb.

use std::path::{Path, PathBuf};

use lsf_core::analysis::EstimatorConfig;
use lsf_core::crystal::{min_gate_time, CrystalConfig, IonCrystal};
use lsf_core::design::GridOptions;
use lsf_core::io::sha256_hex;
use lsf_core::lsf::SolverConfig;
use lsf_core::simkit::SimConfig;
use lsf_core::spectrum::DEFAULT_KERNEL_TOLERANCE;
use lsf_core::zeropool::{Ansatz, PoolRequest, SearchParams, DEFAULT_OVERLAP_THRESHOLD};
use serde::{Deserialize, Serialize};

use crate::error::{read_file, CliError, CliResult};

/// Gate duration, absolute or relative to the crystal's shortest gate time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GateTimeSpec {
    MultipleOfTMin(f64),
    Seconds(f64),
}

impl Default for GateTimeSpec {
    fn default() -> Self {
        GateTimeSpec::MultipleOfTMin(2.0)
    }
}

impl GateTimeSpec {
    pub fn resolve(&self, crystal: &IonCrystal) -> CliResult<f64> {
        let t = match *self {
            GateTimeSpec::MultipleOfTMin(r) => r * min_gate_time(crystal)?,
            GateTimeSpec::Seconds(s) => s,
        };
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Config(format!("gate time must be positive, got {t}")));
        }
        Ok(t)
    }
}

/// Tone grid settings in units of the harmonic spacing `2 pi / T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_margin")]
    pub margin_spacings: f64,
    /// Keep only tones within `window_spacings` of a mode.
    #[serde(default)]
    pub restrict: bool,
    #[serde(default = "default_window")]
    pub window_spacings: f64,
    #[serde(default = "default_kernel_tolerance")]
    pub kernel_tolerance: f64,
}

fn default_margin() -> f64 {
    3.0
}
fn default_window() -> f64 {
    4.0
}
fn default_kernel_tolerance() -> f64 {
    DEFAULT_KERNEL_TOLERANCE
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            margin_spacings: default_margin(),
            restrict: false,
            window_spacings: default_window(),
            kernel_tolerance: default_kernel_tolerance(),
        }
    }
}

impl GridConfig {
    pub fn options(&self, gate_time: f64) -> GridOptions {
        let spacing = 2.0 * std::f64::consts::PI / gate_time;
        GridOptions {
            margin: Some(self.margin_spacings * spacing),
            window: self.restrict.then_some(self.window_spacings * spacing),
            kernel_tolerance: self.kernel_tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    #[serde(default = "default_ansatz")]
    pub ansatz: Ansatz,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub search: SearchParams,
    #[serde(default = "default_overlap")]
    pub overlap_threshold: f64,
    /// Seeds tried before giving up; four per requested entry plus 16 when absent.
    #[serde(default)]
    pub max_attempts: Option<usize>,
}

fn default_ansatz() -> Ansatz {
    Ansatz::Multi
}
fn default_count() -> usize {
    16
}
fn default_overlap() -> f64 {
    DEFAULT_OVERLAP_THRESHOLD
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            ansatz: default_ansatz(),
            count: default_count(),
            search: SearchParams::default(),
            overlap_threshold: default_overlap(),
            max_attempts: None,
        }
    }
}

impl PoolConfig {
    pub fn request(&self, first_seed: u64) -> PoolRequest {
        let mut req = PoolRequest::new(self.ansatz, self.count);
        req.params = self.search;
        req.overlap_threshold = self.overlap_threshold;
        req.first_seed = first_seed;
        if let Some(m) = self.max_attempts {
            req.max_attempts = m;
        }
        req
    }
}

/// Power versus crystal size and gate time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    #[serde(default = "default_ions")]
    pub ions: Vec<usize>,
    #[serde(default = "default_ratios")]
    pub time_ratios: Vec<f64>,
    #[serde(default = "default_scaling_target")]
    pub target: String,
    #[serde(default = "default_small_pool")]
    pub pool_count: usize,
}

fn default_ions() -> Vec<usize> {
    vec![6, 10, 14]
}
fn default_ratios() -> Vec<f64> {
    vec![1.5, 2.0, 3.0]
}
fn default_scaling_target() -> String {
    "random:0.5:7".into()
}
fn default_small_pool() -> usize {
    8
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self { ions: default_ions(), time_ratios: default_ratios(), target: default_scaling_target(), pool_count: default_small_pool() }
    }
}

/// Power versus target at the run's crystal and gate time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseConfig {
    /// Explicit target specs; an assorted random family of `count` targets when empty.
    #[serde(default)]
    pub targets: Vec<String>,
    #[serde(default = "default_family")]
    pub count: usize,
    #[serde(default = "default_small_pool")]
    pub pool_count: usize,
}

fn default_family() -> usize {
    20
}

impl Default for CollapseConfig {
    fn default() -> Self {
        Self { targets: Vec::new(), count: default_family(), pool_count: default_small_pool() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// Entries per ansatz.
    #[serde(default = "default_compare_count")]
    pub count: usize,
    #[serde(default = "default_compare_targets")]
    pub targets: Vec<String>,
}

fn default_compare_count() -> usize {
    50
}
fn default_compare_targets() -> Vec<String> {
    vec!["cluster:2x2".into()]
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self { count: default_compare_count(), targets: default_compare_targets() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub crystal: CrystalConfig,
    #[serde(default)]
    pub gate_time: GateTimeSpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub pool: PoolConfig,
    #[serde(default = "default_target")]
    pub target: String,
    /// First seed of the pool search; seeds run consecutively from here.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub simulation: SimConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub scaling: ScalingConfig,
    #[serde(default)]
    pub collapse: CollapseConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    /// Largest crystal the multi-address pipeline accepts.
    #[serde(default = "default_max_multi")]
    pub max_multi_ions: usize,
    /// Directory for cached kernel bases; no caching when absent.
    #[serde(default)]
    pub kernel_cache: Option<PathBuf>,
}

fn default_target() -> String {
    "all".into()
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_max_multi() -> usize {
    20
}

impl RunConfig {
    pub fn new(crystal: CrystalConfig) -> Self {
        serde_json::from_value(serde_json::json!({ "crystal": crystal })).expect("defaults deserialize")
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::from_json(&read_file(path)?)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.crystal.validate()?;
        self.solver.validate()?;
        self.estimator.validate()?;
        let g = &self.grid;
        if !(g.margin_spacings >= 0.0) || !(g.window_spacings > 0.0) {
            return Err(CliError::Config("grid margin must be >= 0 and window > 0".into()));
        }
        if self.pool.count == 0 {
            return Err(CliError::Config("pool count must be at least 1".into()));
        }
        if self.scaling.ions.is_empty() || self.scaling.time_ratios.is_empty() {
            return Err(CliError::Config("scaling needs at least one ion count and one time ratio".into()));
        }
        if self.scaling.ions.iter().any(|&n| n < 2) || self.scaling.time_ratios.iter().any(|&r| !(r > 0.0)) {
            return Err(CliError::Config("scaling ion counts must be >= 2 and time ratios positive".into()));
        }
        Ok(())
    }

    /// Canonical JSON of the effective configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hash of the configuration content; file locations are excluded.
    pub fn hash(&self) -> String {
        let content = Self { output_dir: default_output(), kernel_cache: None, ..self.clone() };
        sha256_hex(content.canonical_json().as_bytes())
    }

    /// Rejects multi-address work on crystals above the size guard.
    pub fn check_multi_size(&self, n_ions: usize) -> CliResult<()> {
        if n_ions > self.max_multi_ions {
            return Err(CliError::Config(format!(
                "{n_ions} ions exceeds max_multi_ions = {}; raise it in the config to proceed",
                self.max_multi_ions
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = RunConfig::from_json(r#"{"crystal": {"n_ions": 4}}"#).unwrap();
        assert_eq!(cfg.gate_time, GateTimeSpec::MultipleOfTMin(2.0));
        assert_eq!(cfg.pool.ansatz, Ansatz::Multi);
        assert_eq!(cfg.max_multi_ions, 20);
        assert_eq!(cfg, RunConfig::new(CrystalConfig::calcium(4)));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            r#"{"crystal": {"n_ions": 4}, "colour": 1}"#,
            r#"{"crystal": {"n_ions": 4, "colour": 1}}"#,
            r#"{"crystal": {"n_ions": 4}, "pool": {"size": 3}}"#,
            r#"{"crystal": {"n_ions": 4}, "gate_time": {"minutes": 3}}"#,
        ] {
            assert!(matches!(RunConfig::from_json(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn gate_time_forms() {
        let a = RunConfig::from_json(r#"{"crystal": {"n_ions": 3}, "gate_time": {"seconds": 1e-4}}"#).unwrap();
        assert_eq!(a.gate_time, GateTimeSpec::Seconds(1e-4));
        let b = RunConfig::from_json(r#"{"crystal": {"n_ions": 3}, "gate_time": {"multiple_of_t_min": 3}}"#).unwrap();
        assert_eq!(b.gate_time, GateTimeSpec::MultipleOfTMin(3.0));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::new(CrystalConfig::calcium(4));
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.output_dir = PathBuf::from("elsewhere");
        b.kernel_cache = Some(PathBuf::from("kernels"));
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}

//! Entanglement target matrices for the coupling geometries of interest.

use std::f64::consts::FRAC_PI_4;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LsfError, Result};

/// Maximally entangling XX phase.
pub const DEFAULT_PHASE: f64 = FRAC_PI_4;

#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatrix {
    /// Symmetric with zero diagonal.
    pub phases: DMatrix<f64>,
    pub label: String,
    /// Ions with at least one nonzero phase, ascending.
    pub coupled_set: Vec<usize>,
}

impl TargetMatrix {
    pub fn new(phases: DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        let n = phases.nrows();
        if phases.ncols() != n {
            return Err(LsfError::InvalidTarget(format!("target must be square, got {}x{}", n, phases.ncols())));
        }
        for a in 0..n {
            if phases[(a, a)] != 0.0 {
                return Err(LsfError::InvalidTarget(format!("diagonal entry {a} is nonzero")));
            }
            for b in 0..n {
                let v = phases[(a, b)];
                if !v.is_finite() {
                    return Err(LsfError::InvalidTarget(format!("entry ({a}, {b}) is not finite")));
                }
                if v != phases[(b, a)] {
                    return Err(LsfError::InvalidTarget(format!("entries ({a}, {b}) and ({b}, {a}) differ")));
                }
            }
        }
        let coupled_set = (0..n).filter(|&a| phases.row(a).iter().any(|&v| v != 0.0)).collect();
        Ok(Self { phases, label: label.into(), coupled_set })
    }

    pub fn zeros(n: usize) -> Self {
        Self { phases: DMatrix::zeros(n, n), label: "zero".into(), coupled_set: Vec::new() }
    }

    pub fn n_ions(&self) -> usize {
        self.phases.nrows()
    }

    /// Nonzero upper-triangle entries `(n, m, phase)` with `n < m`.
    pub fn links(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n_ions();
        (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .filter_map(|(a, b)| {
                let v = self.phases[(a, b)];
                (v != 0.0).then_some((a, b, v))
            })
            .collect()
    }

    pub fn uncoupled_set(&self) -> Vec<usize> {
        (0..self.n_ions()).filter(|a| !self.coupled_set.contains(a)).collect()
    }

    pub fn to_triplets(&self) -> TargetFile {
        TargetFile {
            n_ions: self.n_ions(),
            label: self.label.clone(),
            entries: self.links().into_iter().map(|(n, m, phi)| Triplet { n, m, phi }).collect(),
        }
    }

    pub fn from_triplets(file: &TargetFile) -> Result<Self> {
        let pairs: Vec<_> = file.entries.iter().map(|t| (t.n, t.m, t.phi)).collect();
        let mut t = target_pairwise(file.n_ions, &pairs)?;
        t.label = file.label.clone();
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub n: usize,
    pub m: usize,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetFile {
    pub n_ions: usize,
    pub label: String,
    pub entries: Vec<Triplet>,
}

fn check_ion(n_ions: usize, ion: usize) -> Result<()> {
    if ion >= n_ions {
        return Err(LsfError::InvalidTarget(format!("ion {ion} out of range for {n_ions} ions")));
    }
    Ok(())
}

/// Sets exactly the listed pairs; later entries overwrite earlier ones.
pub fn target_pairwise(n_ions: usize, pairs: &[(usize, usize, f64)]) -> Result<TargetMatrix> {
    let mut phases = DMatrix::zeros(n_ions, n_ions);
    for &(a, b, phi) in pairs {
        check_ion(n_ions, a)?;
        check_ion(n_ions, b)?;
        if a == b {
            return Err(LsfError::InvalidTarget(format!("self-pair ({a}, {a})")));
        }
        phases[(a, b)] = phi;
        phases[(b, a)] = phi;
    }
    TargetMatrix::new(phases, format!("pairwise:{}", pairs.len()))
}

pub fn target_all_to_all(n_ions: usize, subset: &[usize], phi: f64) -> Result<TargetMatrix> {
    let mut pairs = Vec::new();
    for (i, &a) in subset.iter().enumerate() {
        for &b in &subset[i + 1..] {
            if a == b {
                return Err(LsfError::InvalidTarget(format!("ion {a} repeated in subset")));
            }
            pairs.push((a, b, phi));
        }
    }
    for &a in subset {
        check_ion(n_ions, a)?;
    }
    let mut t = target_pairwise(n_ions, &pairs)?;
    t.label = format!("all:{}", subset.len());
    Ok(t)
}

/// Each pair is linked with probability `density`, at a phase drawn
/// uniformly from `(-amplitude, amplitude)`.
pub fn target_random(n_ions: usize, density: f64, amplitude: f64, seed: u64) -> Result<TargetMatrix> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(LsfError::InvalidTarget(format!("density must lie in (0, 1], got {density}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for a in 0..n_ions {
        for b in a + 1..n_ions {
            let keep = rng.random::<f64>() < density;
            let phi = amplitude * (2.0 * rng.random::<f64>() - 1.0);
            if keep && phi != 0.0 {
                pairs.push((a, b, phi));
            }
        }
    }
    let mut t = target_pairwise(n_ions, &pairs)?;
    t.label = format!("random:{density}:{seed}");
    Ok(t)
}

/// Grid site `(row, col)` to ion index; row-major when `mapping` is `None`.
fn site_to_ion(mapping: Option<&[usize]>, cols: usize, row: usize, col: usize) -> usize {
    let site = row * cols + col;
    mapping.map_or(site, |m| m[site])
}

fn check_mapping(n_ions: usize, sites: usize, mapping: Option<&[usize]>) -> Result<()> {
    if sites > n_ions {
        return Err(LsfError::InvalidTarget(format!("{sites} grid sites do not fit on {n_ions} ions")));
    }
    if let Some(m) = mapping {
        if m.len() != sites {
            return Err(LsfError::InvalidTarget(format!("mapping has {} entries for {sites} sites", m.len())));
        }
        let mut seen = vec![false; n_ions];
        for &ion in m {
            check_ion(n_ions, ion)?;
            if std::mem::replace(&mut seen[ion], true) {
                return Err(LsfError::InvalidTarget(format!("ion {ion} mapped twice")));
            }
        }
    }
    Ok(())
}

/// Nearest-neighbour links of a `rows x cols` grid.
pub fn target_cluster_grid(
    n_ions: usize,
    rows: usize,
    cols: usize,
    phi: f64,
    mapping: Option<&[usize]>,
) -> Result<TargetMatrix> {
    if rows == 0 || cols == 0 {
        return Err(LsfError::InvalidTarget("grid needs at least one row and column".into()));
    }
    check_mapping(n_ions, rows * cols, mapping)?;
    let mut pairs = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let here = site_to_ion(mapping, cols, r, c);
            if c + 1 < cols {
                pairs.push((here, site_to_ion(mapping, cols, r, c + 1), phi));
            }
            if r + 1 < rows {
                pairs.push((here, site_to_ion(mapping, cols, r + 1, c), phi));
            }
        }
    }
    let mut t = target_pairwise(n_ions, &pairs)?;
    t.label = format!("cluster:{rows}x{cols}");
    Ok(t)
}

/// Stabilizer layout on an odd `side x side` grid: an ancilla at every
/// odd-odd site, linked to its four edge neighbours.
pub fn target_surface_code_cross(n_ions: usize, side: usize, phi: f64, mapping: Option<&[usize]>) -> Result<TargetMatrix> {
    if side % 2 == 0 || side < 3 {
        return Err(LsfError::InvalidTarget(format!("cross layout needs an odd side >= 3, got {side}")));
    }
    check_mapping(n_ions, side * side, mapping)?;
    let mut pairs = Vec::new();
    for r in (1..side).step_by(2) {
        for c in (1..side).step_by(2) {
            let anc = site_to_ion(mapping, side, r, c);
            for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let nr = (r as i64 + dr) as usize;
                let nc = (c as i64 + dc) as usize;
                pairs.push((anc, site_to_ion(mapping, side, nr, nc), phi));
            }
        }
    }
    let mut t = target_pairwise(n_ions, &pairs)?;
    t.label = format!("cross:{side}");
    Ok(t)
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| LsfError::InvalidTarget(format!("cannot parse {what} from '{s}'")))
}

fn parse_ion_list(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (parse_num(a, "ion")?, parse_num(b, "ion")?);
                if b < a {
                    return Err(LsfError::InvalidTarget(format!("descending range '{part}'")));
                }
                out.extend(a..=b);
            }
            None => out.push(parse_num(part, "ion")?),
        }
    }
    Ok(out)
}

/// Parses a target description.
///
/// Accepted forms, each optionally followed by `@phase`:
/// `cross:7`, `cluster:2x2`, `random:density:seed[:amplitude]`,
/// `all` or `all:0-32` (inclusive ranges and commas), `pairs:0-1,2-3`,
/// `zero`.
pub fn parse_target_spec(spec: &str, n_ions: usize) -> Result<TargetMatrix> {
    let (body, phi) = match spec.split_once('@') {
        Some((b, p)) => (b, parse_num::<f64>(p, "phase")?),
        None => (spec, DEFAULT_PHASE),
    };
    let mut parts = body.split(':');
    let kind = parts.next().unwrap_or_default().trim();
    let args: Vec<&str> = parts.collect();
    let arity = |lo: usize, hi: usize| {
        if args.len() < lo || args.len() > hi {
            Err(LsfError::InvalidTarget(format!("'{kind}' takes {lo} to {hi} arguments, got {}", args.len())))
        } else {
            Ok(())
        }
    };
    let mut t = match kind {
        "zero" => {
            arity(0, 0)?;
            TargetMatrix::zeros(n_ions)
        }
        "cross" => {
            arity(1, 1)?;
            target_surface_code_cross(n_ions, parse_num(args[0], "grid side")?, phi, None)?
        }
        "cluster" => {
            arity(1, 1)?;
            let (r, c) = args[0]
                .split_once('x')
                .ok_or_else(|| LsfError::InvalidTarget(format!("cluster shape '{}' is not RxC", args[0])))?;
            target_cluster_grid(n_ions, parse_num(r, "rows")?, parse_num(c, "cols")?, phi, None)?
        }
        "random" => {
            arity(2, 3)?;
            let amp = if args.len() == 3 { parse_num(args[2], "amplitude")? } else { phi };
            target_random(n_ions, parse_num(args[0], "density")?, amp, parse_num(args[1], "seed")?)?
        }
        "all" => {
            arity(0, 1)?;
            let subset = if args.is_empty() { (0..n_ions).collect() } else { parse_ion_list(args[0])? };
            target_all_to_all(n_ions, &subset, phi)?
        }
        "pairs" => {
            arity(1, 1)?;
            let mut pairs = Vec::new();
            for p in args[0].split(',') {
                let (a, b) = p
                    .split_once('-')
                    .ok_or_else(|| LsfError::InvalidTarget(format!("pair '{p}' is not n-m")))?;
                pairs.push((parse_num(a, "ion")?, parse_num(b, "ion")?, phi));
            }
            target_pairwise(n_ions, &pairs)?
        }
        other => return Err(LsfError::InvalidTarget(format!("unknown target kind '{other}'"))),
    };
    t.label = spec.to_string();
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sets_both_halves() {
        let t = target_pairwise(4, &[(0, 1, FRAC_PI_4), (2, 3, FRAC_PI_4)]).unwrap();
        assert_eq!(t.links().len(), 2);
        assert_eq!(t.phases[(1, 0)], FRAC_PI_4);
        assert_eq!(t.coupled_set, vec![0, 1, 2, 3]);
        assert_eq!(target_pairwise(4, &[]).unwrap().phases, DMatrix::zeros(4, 4));
    }

    #[test]
    fn all_to_all_small_subsets() {
        assert!(target_all_to_all(5, &[3], 1.0).unwrap().links().is_empty());
        let two = target_all_to_all(5, &[1, 3], 0.5).unwrap();
        assert_eq!(two.phases, target_pairwise(5, &[(1, 3, 0.5)]).unwrap().phases);
    }

    #[test]
    fn random_is_reproducible_and_dense_at_one() {
        let a = target_random(8, 1.0, 1.0, 7).unwrap();
        assert_eq!(a.links().len(), 28);
        assert_eq!(a, target_random(8, 1.0, 1.0, 7).unwrap());
        assert_ne!(a.phases, target_random(8, 1.0, 1.0, 8).unwrap().phases);
    }

    #[test]
    fn cluster_edge_counts() {
        assert_eq!(target_cluster_grid(2, 1, 2, 1.0, None).unwrap().links().len(), 1);
        assert_eq!(target_cluster_grid(49, 7, 7, 1.0, None).unwrap().links().len(), 84);
        let sq = target_cluster_grid(4, 2, 2, 1.0, None).unwrap();
        let links: Vec<_> = sq.links().iter().map(|&(a, b, _)| (a, b)).collect();
        assert_eq!(links, vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn cross_layouts() {
        let t = target_surface_code_cross(49, 7, 1.0, None).unwrap();
        assert_eq!(t.links().len(), 36);
        assert_eq!(t.coupled_set.len(), 33);
        assert_eq!(t.uncoupled_set().len(), 16);
        let deg = |i: usize| t.phases.row(i).iter().filter(|v| **v != 0.0).count();
        for anc in [8, 10, 12, 22, 24, 26, 36, 38, 40] {
            assert_eq!(deg(anc), 4);
        }
        let one = target_surface_code_cross(9, 3, 1.0, None).unwrap();
        assert_eq!(one.links().len(), 4);
        assert!(target_surface_code_cross(16, 4, 1.0, None).is_err());
    }

    #[test]
    fn mapping_permutes_sites() {
        let perm: Vec<usize> = (0..4).rev().collect();
        let t = target_cluster_grid(4, 1, 2, 1.0, Some(&perm[..3])).unwrap_err();
        assert!(matches!(t, LsfError::InvalidTarget(_)));
        let t = target_cluster_grid(4, 2, 2, 1.0, Some(&perm)).unwrap();
        assert_eq!(t.phases[(3, 2)], 1.0);
    }

    #[test]
    fn spec_strings() {
        assert_eq!(parse_target_spec("cross:7", 49).unwrap().links().len(), 36);
        assert_eq!(parse_target_spec("cluster:2x2@0.5", 4).unwrap().phases[(0, 1)], 0.5);
        assert_eq!(parse_target_spec("all:0-2,5", 6).unwrap().links().len(), 6);
        assert_eq!(parse_target_spec("pairs:0-1,2-3", 4).unwrap().links().len(), 2);
        assert!(parse_target_spec("random:0.1:3", 10).is_ok());
        assert!(parse_target_spec("hexagon:3", 10).is_err());
        assert!(parse_target_spec("cross:7", 20).is_err());
    }

    #[test]
    fn triplets_round_trip() {
        let t = parse_target_spec("random:0.5:11", 6).unwrap();
        let json = serde_json::to_string(&t.to_triplets()).unwrap();
        let back = TargetMatrix::from_triplets(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, t);
    }
}

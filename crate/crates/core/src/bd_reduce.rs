//! Block-degraded structure: sources that equal another source plus
//! independent noise, and the smaller problem obtained by dropping them.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bt_solver::{solve, MTProblem};
use crate::error::{Error, Result};
use crate::matlib::SymMatrix;
use crate::report::CheckReport;

/// Relative tolerance for matching covariance entries during detection.
pub const MATCH_TOL: f64 = 1e-6;

/// Partition of the terminals into groups `{leader, members...}` with
/// `Y_j = Y_leader + Z_j` for every non-leader `j`.
///
/// Indices are 0-based in memory and 1-based when serialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "RawStructure", try_from = "RawStructure")]
pub struct BDStructure {
    pub partition: Vec<Vec<usize>>,
    pub leaders: Vec<usize>,
    pub sigma_z: SymMatrix,
    pub induced_sigma_y: SymMatrix,
    pub induced_d: Vec<f64>,
}

#[derive(Clone, Serialize, Deserialize)]
struct RawStructure {
    partition: Vec<Vec<usize>>,
    leaders: Vec<usize>,
    sigma_z: SymMatrix,
    induced_sigma_y: SymMatrix,
    induced_d: Vec<f64>,
}

impl From<BDStructure> for RawStructure {
    fn from(b: BDStructure) -> Self {
        RawStructure {
            partition: b.partition.iter().map(|g| g.iter().map(|i| i + 1).collect()).collect(),
            leaders: b.leaders.iter().map(|i| i + 1).collect(),
            sigma_z: b.sigma_z,
            induced_sigma_y: b.induced_sigma_y,
            induced_d: b.induced_d,
        }
    }
}

impl TryFrom<RawStructure> for BDStructure {
    type Error = String;
    fn try_from(r: RawStructure) -> std::result::Result<Self, String> {
        let dec = |i: usize| i.checked_sub(1).ok_or_else(|| "indices are 1-based".to_string());
        Ok(BDStructure {
            partition: r
                .partition
                .iter()
                .map(|g| g.iter().map(|&i| dec(i)).collect::<std::result::Result<Vec<_>, _>>())
                .collect::<std::result::Result<_, _>>()?,
            leaders: r.leaders.into_iter().map(dec).collect::<std::result::Result<_, _>>()?,
            sigma_z: r.sigma_z,
            induced_sigma_y: r.induced_sigma_y,
            induced_d: r.induced_d,
        })
    }
}

impl BDStructure {
    /// Number of groups.
    pub fn k(&self) -> usize {
        self.partition.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.partition.iter().all(|g| g.len() == 1)
    }

    /// Membership matrix `G` (`L × K`) with `G[j, k] = 1` iff `j` is in group `k`.
    pub fn membership(&self, l: usize) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(l, self.k());
        for (k, group) in self.partition.iter().enumerate() {
            for &j in group {
                g[(j, k)] = 1.0;
            }
        }
        g
    }

    /// The all-singleton structure of `p`.
    pub fn trivial(p: &MTProblem) -> Self {
        let l = p.dim();
        BDStructure {
            partition: (0..l).map(|i| vec![i]).collect(),
            leaders: (0..l).collect(),
            sigma_z: SymMatrix::from_diagonal(&vec![0.0; l]),
            induced_sigma_y: p.sigma_y.clone(),
            induced_d: p.d.clone(),
        }
    }
}

fn scale_tol(p: &MTProblem, tol: f64) -> f64 {
    tol * (1.0 + p.sigma_y.max_abs())
}

/// Whether `Y_j = Y_i + Z` with independent `Z` of positive variance, and the
/// target at `j` is loose enough for `j` to be redundant.
fn is_child(p: &MTProblem, i: usize, j: usize, tol: f64) -> bool {
    let s = &p.sigma_y;
    let var = s.get(j, j) - s.get(i, i);
    if var <= tol || (s.get(i, j) - s.get(i, i)).abs() > tol {
        return false;
    }
    let cols_match = (0..p.dim())
        .filter(|&m| m != i && m != j)
        .all(|m| (s.get(m, j) - s.get(m, i)).abs() <= tol);
    cols_match && p.d[j] >= p.d[i] + var - tol
}

/// Finds a non-trivial block-degraded partition, merging greedily by
/// ascending leader index.
pub fn detect(p: &MTProblem, tol: f64) -> Option<BDStructure> {
    let l = p.dim();
    let t = scale_tol(p, tol);
    let mut owner: Vec<Option<usize>> = vec![None; l];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..l {
        if owner[i].is_some() {
            continue;
        }
        let mut group = vec![i];
        for j in 0..l {
            if j != i && owner[j].is_none() && is_child(p, i, j, t) {
                group.push(j);
            }
        }
        if group.len() > 1 {
            for &j in &group {
                owner[j] = Some(i);
            }
            groups.push(group);
        }
    }
    if groups.is_empty() {
        return None;
    }
    for i in 0..l {
        if owner[i].is_none() {
            groups.push(vec![i]);
        }
    }
    groups.sort_by_key(|g| g[0]);
    for g in &mut groups {
        g[1..].sort_unstable();
    }
    let leaders: Vec<usize> = groups.iter().map(|g| g[0]).collect();
    let mut z = vec![0.0; l];
    for g in &groups {
        for &j in &g[1..] {
            z[j] = p.sigma_y.get(j, j) - p.sigma_y.get(g[0], g[0]);
        }
    }
    let partition = groups
        .into_iter()
        .map(|mut g| {
            g.sort_unstable();
            g
        })
        .collect();
    Some(BDStructure {
        partition,
        induced_sigma_y: p.sigma_y.principal(&leaders),
        induced_d: leaders.iter().map(|&i| p.d[i]).collect(),
        leaders,
        sigma_z: SymMatrix::from_diagonal(&z),
    })
}

/// Checks the three structural conditions, naming the first that fails.
pub fn check_structure(p: &MTProblem, bd: &BDStructure, tol: f64) -> Result<()> {
    let l = p.dim();
    let k = bd.k();
    let mut seen = vec![false; l];
    for (g, &leader) in bd.partition.iter().zip(&bd.leaders) {
        if !g.contains(&leader) {
            return Err(Error::InvalidInput(format!("leader {} is not in its group", leader + 1)));
        }
        for &j in g {
            if j >= l || std::mem::replace(&mut seen[j], true) {
                return Err(Error::InvalidInput("groups must partition the terminals".into()));
            }
        }
    }
    if seen.iter().any(|s| !s) || bd.leaders.len() != k {
        return Err(Error::InvalidInput("groups must partition the terminals".into()));
    }
    if bd.sigma_z.dim() != l || bd.induced_sigma_y.dim() != k || bd.induced_d.len() != k {
        return Err(Error::InvalidInput("structure dimensions do not match the problem".into()));
    }
    if bd.sigma_z.max_off_diagonal() > 0.0 {
        return Err(Error::InvalidInput("sigma_z must be diagonal".into()));
    }
    let t = scale_tol(p, tol);
    let g = bd.membership(l);
    let rebuilt = &g * bd.induced_sigma_y.as_matrix() * g.transpose() + bd.sigma_z.as_matrix();
    let err = (rebuilt - p.sigma_y.as_matrix()).amax();
    if err > t {
        return Err(Error::InvalidInput(format!("covariance decomposition off by {err:.3e}")));
    }
    for (kk, (grp, &leader)) in bd.partition.iter().zip(&bd.leaders).enumerate() {
        if bd.sigma_z.get(leader, leader).abs() > t {
            return Err(Error::InvalidInput(format!("leader {} has nonzero noise", leader + 1)));
        }
        if (p.d[leader] - bd.induced_d[kk]).abs() > t {
            return Err(Error::InvalidInput(format!("leader {} target differs from induced target", leader + 1)));
        }
        for &j in grp.iter().filter(|&&j| j != leader) {
            let z = bd.sigma_z.get(j, j);
            if z <= t {
                return Err(Error::InvalidInput(format!("terminal {} has no independent noise", j + 1)));
            }
            if p.d[j] < bd.induced_d[kk] + z - t {
                return Err(Error::InvalidInput(format!("target at terminal {} is below leader target plus noise", j + 1)));
            }
        }
    }
    Ok(())
}

/// The induced problem on the leaders.
pub fn reduce(p: &MTProblem, bd: &BDStructure) -> Result<MTProblem> {
    check_structure(p, bd, 1e-8)?;
    MTProblem::new(bd.induced_sigma_y.clone(), bd.induced_d.clone())
}

/// Compares BT sum-rates of the original and induced problems.
pub fn bt_sum_rate_preserved(p: &MTProblem, bd: &BDStructure) -> Result<CheckReport> {
    let reduced = reduce(p, bd)?;
    let full = solve(p)?.sum_rate;
    let small = solve(&reduced)?.sum_rate;
    let mut report = CheckReport::new(1e-6);
    report.residual("sum_rate_difference", (full - small).abs());
    report.value("original_sum_rate", full);
    report.value("induced_sum_rate", small);
    Ok(report.finish())
}

//! Berger-Tung minimum sum-rate: minimize `½ log det(I + Σ_Y diag(w))` over
//! `w ≥ 0` subject to `[(Σ_Y⁻¹ + diag w)⁻¹]_jj ≤ D_j`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matlib::{block_circulant_basis, is_block_circulant, star, SymMatrix};
use crate::report::{CheckReport, Verdict};

const MAX_ITERATIONS: usize = 200;
const RESIDUAL_TOL: f64 = 1e-10;
const EQUAL_DISTORTION_TOL: f64 = 1e-12;
const CIRCULANT_TOL: f64 = 1e-9;

/// Source covariance and per-terminal target distortions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MTProblem {
    pub sigma_y: SymMatrix,
    pub d: Vec<f64>,
}

impl MTProblem {
    pub fn new(sigma_y: SymMatrix, d: Vec<f64>) -> Result<Self> {
        if d.len() != sigma_y.dim() {
            return Err(Error::DimensionMismatch { expected: sigma_y.dim(), found: d.len() });
        }
        if d.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::InvalidInput("target distortions must be positive".into()));
        }
        if !sigma_y.is_positive_definite() {
            return Err(Error::NotPositiveDefinite("source covariance".into()));
        }
        Ok(MTProblem { sigma_y, d })
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    /// Terminals whose target is at least the source variance.
    pub fn vacuous_constraints(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&j| self.d[j] >= self.sigma_y.get(j, j)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BTSolution {
    pub d_tilde: SymMatrix,
    pub w: Vec<f64>,
    pub active: Vec<bool>,
    /// Nats.
    pub sum_rate: f64,
    pub converged: bool,
    pub residual: f64,
    pub iterations: usize,
}

/// `(Σ_Y⁻¹ + diag w)⁻¹`.
pub fn distortion_at(p: &MTProblem, w: &[f64]) -> Result<SymMatrix> {
    distortion_from_precision(&p.sigma_y.inverse()?, w)
}

fn distortion_from_precision(sigma_inv: &SymMatrix, w: &[f64]) -> Result<SymMatrix> {
    sigma_inv.add(&SymMatrix::from_diagonal(w))?.inverse()
}

/// BT objective at an arbitrary `w ≥ 0`, in nats.
pub fn sum_rate_at(p: &MTProblem, w: &[f64]) -> Result<f64> {
    if w.len() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: w.len() });
    }
    if w.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::InvalidInput("w must be non-negative".into()));
    }
    let n = p.dim();
    let m = DMatrix::identity(n, n) + p.sigma_y.as_matrix() * DMatrix::from_diagonal(&DVector::from_column_slice(w));
    Ok(0.5 * m.determinant().ln())
}

fn rate_of(p: &MTProblem, d_tilde: &SymMatrix) -> Result<f64> {
    Ok(0.5 * (p.sigma_y.log_det()? - d_tilde.log_det()?))
}

/// Active-set damped Newton on the diagonal-matching equations.
pub fn solve(p: &MTProblem) -> Result<BTSolution> {
    let n = p.dim();
    let sinv = p.sigma_y.inverse()?;
    let mut w: Vec<f64> = (0..n)
        .map(|j| (1.0 / p.d[j] - 1.0 / p.sigma_y.get(j, j)).max(0.0))
        .collect();
    let mut active: Vec<bool> = w.iter().map(|&x| x > 0.0).collect();
    let mut iterations = 0;
    let mut dt = distortion_from_precision(&sinv, &w)?;

    loop {
        let idx: Vec<usize> = (0..n).filter(|&j| active[j]).collect();
        let res = |dt: &SymMatrix| -> Vec<f64> { idx.iter().map(|&j| dt.get(j, j) - p.d[j]).collect() };
        let norm = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let r = res(&dt);
        let rn = norm(&r);

        if rn <= RESIDUAL_TOL {
            // Inner system solved; check the inactive constraints.
            let violated = (0..n)
                .filter(|&j| !active[j] && dt.get(j, j) > p.d[j] * (1.0 + 1e-12))
                .max_by(|&a, &b| {
                    (dt.get(a, a) / p.d[a]).total_cmp(&(dt.get(b, b) / p.d[b]))
                });
            match violated {
                Some(j) => {
                    active[j] = true;
                    continue;
                }
                None => break,
            }
        }
        if iterations >= MAX_ITERATIONS {
            return Err(Error::NoConvergence { iterations, residual: rn });
        }
        iterations += 1;

        let k = idx.len();
        let jac = DMatrix::from_fn(k, k, |a, b| -dt.get(idx[a], idx[b]).powi(2));
        let step = jac
            .lu()
            .solve(&DVector::from_iterator(k, r.iter().map(|x| -x)))
            .ok_or_else(|| Error::Singular("Newton Jacobian".into()))?;

        // Longest step keeping every active w non-negative.
        let mut t_max = 1.0;
        let mut blocking = None;
        for (a, &j) in idx.iter().enumerate() {
            if step[a] < 0.0 {
                let t = -w[j] / step[a];
                if t < t_max {
                    t_max = t;
                    blocking = Some(j);
                }
            }
        }

        let mut t = t_max;
        let mut accepted = false;
        while t > 1e-14 {
            let mut cand = w.clone();
            for (a, &j) in idx.iter().enumerate() {
                cand[j] = (w[j] + t * step[a]).max(0.0);
            }
            if let Some(j) = blocking {
                if t == t_max {
                    cand[j] = 0.0;
                }
            }
            let cdt = distortion_from_precision(&sinv, &cand)?;
            if norm(&res(&cdt)) < rn || (t == t_max && blocking.is_some()) {
                w = cand;
                dt = cdt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence { iterations, residual: rn });
        }
        // A multiplier pinned at zero drops out of the active set.
        for &j in &idx {
            if w[j] <= 1e-12 {
                w[j] = 0.0;
                active[j] = false;
            }
        }
    }

    let residual = (0..n)
        .map(|j| {
            let gap = dt.get(j, j) - p.d[j];
            if active[j] {
                gap.abs()
            } else {
                gap.max(0.0)
            }
        })
        .fold(0.0, f64::max);
    Ok(BTSolution {
        sum_rate: rate_of(p, &dt)?,
        d_tilde: dt,
        w,
        active,
        converged: true,
        residual,
        iterations,
    })
}

/// Closed form for block-circulant sources with equal targets:
/// `D̃ = Σ_Y ⋆ qI` with `q` water-filled over the eigenvalues of `Σ_Y`.
pub fn solve_block_circulant(p: &MTProblem) -> Result<BTSolution> {
    let n = p.dim();
    if !is_block_circulant(&p.sigma_y, CIRCULANT_TOL)? {
        return Err(Error::NotBlockCirculant("source covariance layout".into()));
    }
    let target = p.d[0];
    if p.d.iter().any(|x| (x - target).abs() > EQUAL_DISTORTION_TOL * target.max(1.0)) {
        return Err(Error::InvalidInput("block-circulant path requires equal distortions".into()));
    }
    let lambdas = circulant_eigenvalues(&p.sigma_y)?;
    let total: f64 = lambdas.iter().sum();
    let goal = n as f64 * target;
    if goal >= total {
        return Err(Error::Infeasible(format!(
            "distortion {target} is not below the mean eigenvalue {}",
            total / n as f64
        )));
    }
    let filled = |q: f64| lambdas.iter().map(|l| 1.0 / (1.0 / l + 1.0 / q)).sum::<f64>();
    let mut lo = 1e-12;
    let mut hi = 1.0;
    while filled(hi) < goal {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Infeasible("water-filling bracket diverged".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if filled(mid) < goal {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    let q = 0.5 * (lo + hi);
    let d_tilde = star(&p.sigma_y, &SymMatrix::identity(n).scale(q))?;
    let residual = (0..n).map(|j| (d_tilde.get(j, j) - target).abs()).fold(0.0, f64::max);
    Ok(BTSolution {
        sum_rate: rate_of(p, &d_tilde)?,
        d_tilde,
        w: vec![1.0 / q; n],
        active: vec![true; n],
        converged: true,
        residual,
        iterations: 0,
    })
}

/// Eigenvalues of a block-circulant matrix read off `G_Lᵀ Σ G_L`.
pub fn circulant_eigenvalues(sigma: &SymMatrix) -> Result<Vec<f64>> {
    let g = block_circulant_basis(sigma.dim())?;
    let diag = g.transpose() * sigma.as_matrix() * &g;
    Ok(diag.diagonal().iter().copied().collect())
}

/// Re-checks a solution without trusting its `w`.
pub fn verify(p: &MTProblem, sol: &BTSolution, tol: f64) -> CheckReport {
    let mut report = CheckReport::new(tol);
    let n = p.dim();
    if sol.d_tilde.dim() != n || sol.w.len() != n {
        report.verdict = Verdict::Fail;
        report.note("dimension mismatch between problem and solution");
        return report;
    }
    let implied = match (sol.d_tilde.inverse(), p.sigma_y.inverse()) {
        (Ok(di), Ok(si)) => di.sub(&si).expect("same dimension"),
        _ => {
            report.verdict = Verdict::Fail;
            report.note("D~ or Sigma_Y is singular");
            return report;
        }
    };
    let w: Vec<f64> = implied.diagonal();
    report.residual("structure_offdiag", implied.max_off_diagonal());
    report.margin("structure_min_w", w.iter().copied().fold(f64::INFINITY, f64::min));
    let excess = (0..n).map(|j| sol.d_tilde.get(j, j) - p.d[j]).fold(f64::NEG_INFINITY, f64::max);
    report.margin("distortion", -excess);
    let comp = (0..n)
        .map(|j| (w[j] * (sol.d_tilde.get(j, j) - p.d[j])).abs())
        .fold(0.0, f64::max);
    report.residual("complementarity", comp);
    let rate = match rate_of(p, &sol.d_tilde) {
        Ok(r) => (r - sol.sum_rate).abs(),
        Err(_) => f64::INFINITY,
    };
    report.residual("sum_rate", rate);
    report.finish()
}

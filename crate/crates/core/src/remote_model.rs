//! Remote-source factorization `Y = HᵀX + N` for block-diagonal noise, and the
//! L-terminal sum-rate lower bound built on it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bt_solver::{solve, MTProblem};
use crate::error::{Error, Result};
use crate::matlib::{block_submatrix, is_psd, psd_leq, BlockPattern, SymMatrix, DEFAULT_PSD_TOL};
use crate::two_terminal::{gradients, TwoTermInstance};

const RANK_CUTOFF: f64 = 1e-10;
const PATTERN_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;

/// Block pattern plus a conforming positive definite noise covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisePattern {
    pub pattern: BlockPattern,
    pub sigma_n: SymMatrix,
}

impl NoisePattern {
    pub fn new(pattern: BlockPattern, sigma_n: SymMatrix) -> Result<Self> {
        if sigma_n.dim() != pattern.len() {
            return Err(Error::DimensionMismatch { expected: pattern.len(), found: sigma_n.dim() });
        }
        if !sigma_n.is_positive_definite() {
            return Err(Error::NotPositiveDefinite("noise covariance".into()));
        }
        let off = pattern.max_off_pattern(&sigma_n)?;
        if off > PATTERN_TOL * (1.0 + sigma_n.max_abs()) {
            return Err(Error::PatternViolation { max_entry: off });
        }
        Ok(NoisePattern { pattern, sigma_n })
    }

    pub fn dim(&self) -> usize {
        self.pattern.len()
    }

    /// Smallest eigenvalue of `Σ_Y − Σ_N`.
    pub fn dominance_margin(&self, sigma_y: &SymMatrix) -> Result<f64> {
        Ok(sigma_y.sub(&self.sigma_n)?.min_eigenvalue())
    }

    pub fn is_dominated_by(&self, sigma_y: &SymMatrix, tol: f64) -> Result<bool> {
        psd_leq(&self.sigma_n, sigma_y, tol)
    }
}

/// Remote sources `X` (M of them) with `Σ_Y = Hᵀ Σ_X H + Σ_N`.
#[derive(Clone, Debug, PartialEq)]
pub struct RemoteModel {
    pub m: usize,
    /// Diagonal of `Σ_X`, descending.
    pub sigma_x: Vec<f64>,
    /// `M × L`.
    pub h: DMatrix<f64>,
    /// `Σ_X H Σ_Y⁻¹`, `M × L`.
    pub a: DMatrix<f64>,
    /// `Σ_X − Σ_X H Σ_Y⁻¹ Hᵀ Σ_X`, `M × M`.
    pub b: DMatrix<f64>,
    /// `‖Hᵀ Σ_X H + Σ_N − Σ_Y‖_∞`.
    pub reconstruction_residual: f64,
    /// Whether `Σ_N ⪯ Σ_Y` held.
    pub dominated: bool,
}

impl RemoteModel {
    /// Singular value decomposition of `Σ_Y − Σ_N` without requiring
    /// `Σ_N ⪯ Σ_Y`. When the difference is indefinite the reconstruction
    /// residual reports the mismatch.
    pub fn from_svd(sigma_y: &SymMatrix, sigma_n: &SymMatrix) -> Result<Self> {
        let diff = sigma_y.sub(sigma_n)?;
        let l = diff.dim();
        let eig = diff.eigen();
        let mut order: Vec<usize> = (0..l).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].abs().total_cmp(&eig.eigenvalues[i].abs()));
        let scale: f64 = eig.eigenvalues.iter().map(|x| x.abs()).sum();
        let kept: Vec<usize> = order
            .into_iter()
            .filter(|&i| scale > 0.0 && eig.eigenvalues[i].abs() > RANK_CUTOFF * scale)
            .collect();
        let m = kept.len();
        let sigma_x: Vec<f64> = kept.iter().map(|&i| eig.eigenvalues[i].abs()).collect();
        let mut h = DMatrix::zeros(m, l);
        for (r, &i) in kept.iter().enumerate() {
            h.set_row(r, &eig.eigenvectors.column(i).transpose());
        }
        let sx = DMatrix::from_diagonal(&DVector::from_column_slice(&sigma_x));
        let sy_inv = sigma_y.inverse()?;
        let a = &sx * &h * sy_inv.as_matrix();
        let b = &sx - &a * h.transpose() * &sx;
        let b = (&b + b.transpose()) * 0.5;
        let recon = h.transpose() * &sx * &h + sigma_n.as_matrix() - sigma_y.as_matrix();
        Ok(RemoteModel {
            m,
            sigma_x,
            h,
            a,
            b,
            reconstruction_residual: recon.amax(),
            dominated: is_psd(&diff, DEFAULT_PSD_TOL),
        })
    }

    /// `½ log |Σ_X| − ½ log |A D Aᵀ + B|`; zero when `M = 0`.
    pub fn remote_term(&self, d: &SymMatrix) -> Result<f64> {
        if self.m == 0 {
            return Ok(0.0);
        }
        let inner = self.inner(d)?;
        let logdet_x: f64 = self.sigma_x.iter().map(|x| x.ln()).sum();
        Ok(0.5 * (logdet_x - inner.log_det()?))
    }

    fn inner(&self, d: &SymMatrix) -> Result<SymMatrix> {
        SymMatrix::new(&self.a * d.as_matrix() * self.a.transpose() + &self.b)
    }

    /// Gradient of [`Self::remote_term`] in `D`: `−½ Aᵀ (A D Aᵀ + B)⁻¹ A`.
    pub fn remote_gradient(&self, d: &SymMatrix) -> Result<SymMatrix> {
        let l = d.dim();
        if self.m == 0 {
            return SymMatrix::new(DMatrix::zeros(l, l));
        }
        let inv = self.inner(d)?.inverse()?;
        SymMatrix::new(self.a.transpose() * inv.as_matrix() * &self.a * -0.5)
    }
}

/// Builds the remote model, requiring `Σ_N ⪯ Σ_Y`.
pub fn build(p: &MTProblem, np: &NoisePattern) -> Result<RemoteModel> {
    if np.dim() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: np.dim() });
    }
    if !np.is_dominated_by(&p.sigma_y, DEFAULT_PSD_TOL)? {
        return Err(Error::NoiseNotDominated { min_eigenvalue: np.dominance_margin(&p.sigma_y)? });
    }
    RemoteModel::from_svd(&p.sigma_y, &np.sigma_n)
}

/// `Γ̃ = (D̃⁻¹ + Σ_N⁻¹ − Σ_Y⁻¹)⁻¹`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaTilde {
    pub gamma: SymMatrix,
}

pub fn gamma_tilde(p: &MTProblem, np: &NoisePattern, d_tilde: &SymMatrix) -> Result<GammaTilde> {
    let gamma = coupling_bound(p, np, d_tilde)?;
    let off = np.pattern.max_off_pattern(&gamma)?;
    if off > 1e-8 * (1.0 + gamma.max_abs()) {
        return Err(Error::PatternViolation { max_entry: off });
    }
    Ok(GammaTilde { gamma })
}

/// `(D⁻¹ + Σ_N⁻¹ − Σ_Y⁻¹)⁻¹`.
pub fn coupling_bound(p: &MTProblem, np: &NoisePattern, d: &SymMatrix) -> Result<SymMatrix> {
    coupling_precision(p, np, d)?.inverse()
}

fn coupling_precision(p: &MTProblem, np: &NoisePattern, d: &SymMatrix) -> Result<SymMatrix> {
    d.inverse()?.add(&np.sigma_n.inverse()?)?.sub(&p.sigma_y.inverse()?)
}

/// Value of the lower bound, split by term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundValue {
    pub value: f64,
    pub remote_term: f64,
    pub pair_terms: Vec<f64>,
    pub singleton_terms: Vec<f64>,
}

/// Two-terminal lower bound `max(R_μ, R_lb)` of the noise block against a
/// distortion block.
fn pair_instance(noise: &SymMatrix, g: &SymMatrix) -> Result<TwoTermInstance> {
    let (s1, s2) = (noise.get(0, 0).sqrt(), noise.get(1, 1).sqrt());
    let (g1, g2) = (g.get(0, 0), g.get(1, 1));
    TwoTermInstance::new(
        s1 / g1.sqrt(),
        s2 / g2.sqrt(),
        noise.get(0, 1) / (s1 * s2),
        g.get(0, 1) / (g1 * g2).sqrt(),
    )
}

/// Constraint violations of `(d, gamma)`, by name.
pub fn constraint_violations(p: &MTProblem, np: &NoisePattern, d: &SymMatrix, gamma: &SymMatrix) -> Vec<String> {
    let mut v = Vec::new();
    let l = p.dim();
    if d.dim() != l || gamma.dim() != l {
        v.push(format!("dimension: expected {l}"));
        return v;
    }
    if !d.is_positive_definite() {
        v.push("D must be positive definite".into());
        return v;
    }
    if !gamma.is_positive_definite() {
        v.push("Gamma must be positive definite".into());
        return v;
    }
    for j in 0..l {
        if d.get(j, j) > p.d[j] * (1.0 + FEAS_TOL) {
            v.push(format!("diag(D)[{}] = {} exceeds target {}", j + 1, d.get(j, j), p.d[j]));
        }
    }
    match np.pattern.max_off_pattern(gamma) {
        Ok(off) if off > PATTERN_TOL * (1.0 + gamma.max_abs()) => {
            v.push(format!("Gamma violates the block pattern (entry {off:.3e})"))
        }
        _ => {}
    }
    for j in 1..=np.pattern.k() {
        let (g, n) = (block_submatrix(gamma, &np.pattern, j), block_submatrix(&np.sigma_n, &np.pattern, j));
        if let (Ok(g), Ok(n)) = (g, n) {
            if !psd_leq(&g, &n, FEAS_TOL).unwrap_or(false) {
                v.push(format!("Gamma block {j} exceeds the noise block"));
            }
        }
    }
    for i in np.pattern.singletons() {
        if gamma.get(i, i) > np.sigma_n.get(i, i) * (1.0 + FEAS_TOL) {
            v.push(format!("gamma[{}] exceeds the noise variance", i + 1));
        }
    }
    match coupling_precision(p, np, d) {
        Ok(prec) => match gamma.inverse() {
            Ok(gi) => {
                if !is_psd(&gi.sub(&prec).expect("same dimension"), FEAS_TOL) {
                    v.push("Gamma exceeds (D^-1 + Sigma_N^-1 - Sigma_Y^-1)^-1".into());
                }
            }
            Err(_) => v.push("Gamma is singular".into()),
        },
        Err(_) => v.push("coupling matrix is singular".into()),
    }
    v
}

/// Evaluates the lower bound at `(d, gamma)`, in nats.
pub fn lower_bound_eval(
    p: &MTProblem,
    np: &NoisePattern,
    rm: &RemoteModel,
    d: &SymMatrix,
    gamma: &GammaTilde,
) -> Result<LowerBoundValue> {
    let violations = constraint_violations(p, np, d, &gamma.gamma);
    if !violations.is_empty() {
        return Err(Error::ConstraintViolations(violations));
    }
    evaluate(np, rm, d, &gamma.gamma)
}

fn evaluate(np: &NoisePattern, rm: &RemoteModel, d: &SymMatrix, gamma: &SymMatrix) -> Result<LowerBoundValue> {
    let remote_term = rm.remote_term(d)?;
    let mut pair_terms = Vec::with_capacity(np.pattern.k());
    for j in 1..=np.pattern.k() {
        let inst = pair_instance(
            &block_submatrix(&np.sigma_n, &np.pattern, j)?,
            &block_submatrix(gamma, &np.pattern, j)?,
        )?;
        pair_terms.push(inst.lower_bound());
    }
    let singleton_terms: Vec<f64> = np
        .pattern
        .singletons()
        .into_iter()
        .map(|i| 0.5 * (np.sigma_n.get(i, i) / gamma.get(i, i)).ln())
        .collect();
    let value = remote_term + pair_terms.iter().sum::<f64>() + singleton_terms.iter().sum::<f64>();
    if !value.is_finite() {
        return Err(Error::Singular("lower bound is not finite".into()));
    }
    Ok(LowerBoundValue { value, remote_term, pair_terms, singleton_terms })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    pub iterations: usize,
    /// Step scale as a fraction of the starting value.
    pub step_fraction: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions { iterations: 5000, step_fraction: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub value: f64,
    pub d: SymMatrix,
    pub gamma: SymMatrix,
    pub start_value: f64,
    pub bt_sum_rate: f64,
    pub iterations: usize,
    /// Set when no step made progress for the last quarter of the run.
    pub stalled: bool,
}

/// Optimization variables: `D` and the pattern-structured `Γ`.
#[derive(Clone)]
struct Point {
    d: SymMatrix,
    gamma: SymMatrix,
}

/// Projected subgradient descent for the lower-bound program, started at the
/// BT point `(D̃, Γ̃)`.
pub fn lower_bound_optimize(p: &MTProblem, np: &NoisePattern, opts: OptimizeOptions) -> Result<OptimizeResult> {
    let rm = build(p, np)?;
    let bt = solve(p)?;
    let start = Point { d: bt.d_tilde.clone(), gamma: gamma_tilde(p, np, &bt.d_tilde)?.gamma };
    let start_value = evaluate(np, &rm, &start.d, &start.gamma)?.value;
    let c = opts.step_fraction * start_value.abs().max(1e-3);

    let feasible = |x: &Point| is_feasible(p, np, x);
    let mut cur = start.clone();
    let mut best = (start_value, start.clone());
    let mut last_improvement = 0;

    for t in 1..=opts.iterations {
        let (gd, gg) = subgradient(np, &rm, &cur)?;
        let norm = (gd.as_matrix().norm_squared() + gg.as_matrix().norm_squared()).sqrt();
        if !(norm > 0.0) {
            break;
        }
        let step = c / (t as f64).sqrt() / norm;
        let raw = Point {
            d: cur.d.sub(&gd.scale(step))?,
            gamma: cur.gamma.sub(&gg.scale(step))?,
        };
        let cand = project(p, np, raw)?;
        let next = match pull_back(&cur, &cand, feasible) {
            Some(x) => x,
            None => continue,
        };
        if let Ok(v) = evaluate(np, &rm, &next.d, &next.gamma) {
            if v.value < best.0 {
                best = (v.value, next.clone());
                last_improvement = t;
            }
            cur = next;
        }
    }

    let (value, pt) = best;
    Ok(OptimizeResult {
        value,
        d: pt.d,
        gamma: pt.gamma,
        start_value,
        bt_sum_rate: bt.sum_rate,
        iterations: opts.iterations,
        stalled: last_improvement < opts.iterations * 3 / 4,
    })
}

fn subgradient(np: &NoisePattern, rm: &RemoteModel, x: &Point) -> Result<(SymMatrix, SymMatrix)> {
    let gd = rm.remote_gradient(&x.d)?;
    let l = x.d.dim();
    let mut gg = DMatrix::zeros(l, l);
    for j in 1..=np.pattern.k() {
        let (a, b) = np.pattern.pair(j)?;
        let g = block_submatrix(&x.gamma, &np.pattern, j)?;
        let inst = pair_instance(&block_submatrix(&np.sigma_n, &np.pattern, j)?, &g)?;
        let (glb, gmu) = gradients(&inst, g.get(0, 0), g.get(1, 1))?;
        let chosen = if inst.r_lb() > inst.r_mu() { glb } else { gmu };
        let idx = [a, b];
        for r in 0..2 {
            for s in 0..2 {
                gg[(idx[r], idx[s])] = chosen.get(r, s);
            }
        }
    }
    for i in np.pattern.singletons() {
        gg[(i, i)] = -0.5 / x.gamma.get(i, i);
    }
    Ok((gd, SymMatrix::new(gg)?))
}

/// Approximate projection: eigenvalue clipping in whitened coordinates for
/// the order constraints, congruence scaling for the diagonal targets.
fn project(p: &MTProblem, np: &NoisePattern, x: Point) -> Result<Point> {
    let eps = 1e-9;
    let d = clip_between(&x.d, &p.sigma_y, eps)?;
    let scale: Vec<f64> = (0..p.dim()).map(|j| (p.d[j] / d.get(j, j)).sqrt().min(1.0)).collect();
    let d = d.congruence(&DMatrix::from_diagonal(&DVector::from_vec(scale)))?;

    let l = p.dim();
    let mut g = DMatrix::zeros(l, l);
    for j in 1..=np.pattern.k() {
        let (a, b) = np.pattern.pair(j)?;
        let block = clip_between(
            &block_submatrix(&x.gamma, &np.pattern, j)?,
            &block_submatrix(&np.sigma_n, &np.pattern, j)?,
            eps,
        )?;
        let idx = [a, b];
        for r in 0..2 {
            for s in 0..2 {
                g[(idx[r], idx[s])] = block.get(r, s);
            }
        }
    }
    for i in np.pattern.singletons() {
        let var = np.sigma_n.get(i, i);
        g[(i, i)] = x.gamma.get(i, i).clamp(eps * var, var);
    }
    Ok(Point { d, gamma: SymMatrix::new(g)? })
}

/// Clips `m` into `{eps·U ⪯ X ⪯ U}` through the whitening of `upper`.
fn clip_between(m: &SymMatrix, upper: &SymMatrix, eps: f64) -> Result<SymMatrix> {
    let u = upper.eigen();
    let half = u.map(|x| x.sqrt());
    let inv_half = u.map(|x| 1.0 / x.sqrt());
    let white = m.congruence(inv_half.as_matrix())?;
    let clipped = white.eigen().map(|x| x.clamp(eps, 1.0));
    clipped.congruence(half.as_matrix())
}

/// Largest feasible point on the segment from `from` (feasible) to `to`.
fn pull_back(from: &Point, to: &Point, feasible: impl Fn(&Point) -> bool) -> Option<Point> {
    let lerp = |t: f64| -> Option<Point> {
        let d = SymMatrix::new(from.d.as_matrix() * (1.0 - t) + to.d.as_matrix() * t).ok()?;
        let gamma = SymMatrix::new(from.gamma.as_matrix() * (1.0 - t) + to.gamma.as_matrix() * t).ok()?;
        Some(Point { d, gamma })
    };
    let full = lerp(1.0)?;
    if feasible(&full) {
        return Some(full);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        match lerp(mid) {
            Some(x) if feasible(&x) => lo = mid,
            _ => hi = mid,
        }
    }
    if lo == 0.0 {
        return None;
    }
    lerp(lo)
}

fn is_feasible(p: &MTProblem, np: &NoisePattern, x: &Point) -> bool {
    let slack = 1e-12;
    if x.d.min_eigenvalue() <= 0.0 || x.gamma.min_eigenvalue() <= 0.0 {
        return false;
    }
    if p.sigma_y.sub(&x.d).map(|m| m.min_eigenvalue() < -slack).unwrap_or(true) {
        return false;
    }
    if (0..p.dim()).any(|j| x.d.get(j, j) > p.d[j] * (1.0 + FEAS_TOL)) {
        return false;
    }
    for j in 1..=np.pattern.k() {
        let ok = match (block_submatrix(&x.gamma, &np.pattern, j), block_submatrix(&np.sigma_n, &np.pattern, j)) {
            (Ok(g), Ok(n)) => n.sub(&g).map(|m| m.min_eigenvalue() >= -slack).unwrap_or(false),
            _ => false,
        };
        if !ok {
            return false;
        }
    }
    if np.pattern.singletons().iter().any(|&i| x.gamma.get(i, i) > np.sigma_n.get(i, i)) {
        return false;
    }
    match (coupling_precision(p, np, &x.d), x.gamma.inverse()) {
        (Ok(prec), Ok(gi)) => gi.sub(&prec).map(|m| is_psd(&m, FEAS_TOL)).unwrap_or(false),
        _ => false,
    }
}

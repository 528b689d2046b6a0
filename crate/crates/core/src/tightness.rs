//! Sufficient conditions for tightness of the BT sum-rate: certificate
//! verification, the non-degraded closed-form check, the diagonal-noise
//! condition, its block-circulant specialization, and a noise search.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bt_solver::{solve, solve_block_circulant, BTSolution, MTProblem};
use crate::error::{Error, Result};
use crate::matlib::{block_submatrix, BlockPattern, SymMatrix};
use crate::remote_model::{coupling_bound, gamma_tilde, NoisePattern};
use crate::report::CheckReport;
use crate::two_terminal::subdiff_segment;

/// Relative threshold below which a target counts as not met with equality.
pub const DEGRADED_TOL: f64 = 1e-6;

/// Multipliers `(Λ, Ω, {Θ_j}, diag Π)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub lambda: SymMatrix,
    pub omega: SymMatrix,
    pub thetas: Vec<SymMatrix>,
    pub pi: Vec<f64>,
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        m.amax()
    }
}

pub fn verify_theorem2(
    p: &MTProblem,
    np: &NoisePattern,
    d_tilde: &SymMatrix,
    cert: &Certificate,
    tol: f64,
) -> Result<CheckReport> {
    let l = p.dim();
    for (name, dim) in [
        ("noise", np.dim()),
        ("d_tilde", d_tilde.dim()),
        ("lambda", cert.lambda.dim()),
        ("omega", cert.omega.dim()),
        ("pi", cert.pi.len()),
    ] {
        if dim != l {
            return Err(Error::InvalidInput(format!("{name} has dimension {dim}, expected {l}")));
        }
    }
    let k = np.pattern.k();
    if cert.thetas.len() != k || cert.thetas.iter().any(|t| t.dim() != 2) {
        return Err(Error::InvalidInput(format!("certificate needs {k} 2x2 Theta blocks")));
    }

    let gamma = gamma_tilde(p, np, d_tilde)?.gamma;
    let dt = d_tilde.as_matrix();
    let di = d_tilde.inverse()?;
    let si = p.sigma_y.inverse()?;
    let pi = DMatrix::from_diagonal(&DVector::from_column_slice(&cert.pi));
    let mut report = CheckReport::new(tol);

    // (1) D̃(Π − D̃⁻¹ + D̃⁻¹Γ̃D̃⁻¹)D̃ = Λ − Ω
    let inner = &pi - di.as_matrix() + di.as_matrix() * gamma.as_matrix() * di.as_matrix();
    let lhs = dt * inner * dt;
    let rhs = cert.lambda.as_matrix() - cert.omega.as_matrix();
    report.residual("kkt1_stationarity", max_abs(&(lhs - rhs)));

    // (2) ⟨Λ⟩_j + Θ_j lies on the subdifferential segment.
    for j in 1..=k {
        let m = block_submatrix(&cert.lambda, &np.pattern, j)?.add(&cert.thetas[j - 1])?;
        let g = block_submatrix(&gamma, &np.pattern, j)?;
        let seg = subdiff_segment(&block_submatrix(&np.sigma_n, &np.pattern, j)?, (g.get(0, 0), g.get(1, 1)))?;
        let diag_res = (m.get(0, 0) - g.get(0, 0)).abs().max((m.get(1, 1) - g.get(1, 1)).abs());
        report.residual(format!("kkt2_pair{j}_diagonal"), diag_res);
        report.margin(format!("kkt2_pair{j}_segment"), seg.offdiag_margin(m.get(0, 1)));
        report.value(format!("pair{j}_alpha"), seg.alpha_for(m.get(0, 1)));
        report.value(format!("pair{j}_endpoint_mu"), seg.endpoint_mu.get(0, 1));
        report.value(format!("pair{j}_endpoint_lb"), seg.endpoint_lb.get(0, 1));
    }

    // (3) singleton diagonals
    let singles = np.pattern.singletons();
    let res3 = singles
        .iter()
        .map(|&i| (cert.lambda.get(i, i) - gamma.get(i, i)).abs())
        .fold(0.0, f64::max);
    report.residual("kkt3_singletons", res3);

    // (4) Ω(Σ_Y⁻¹ − D̃⁻¹) = 0
    let res4 = cert.omega.as_matrix() * (si.as_matrix() - di.as_matrix());
    report.residual("kkt4_omega_slackness", max_abs(&res4));

    // (5) Θ_j(⟨Σ_N⟩_j − ⟨Γ̃⟩_j) = 0
    let mut res5: f64 = 0.0;
    for j in 1..=k {
        let diff = block_submatrix(&np.sigma_n, &np.pattern, j)?.sub(&block_submatrix(&gamma, &np.pattern, j)?)?;
        res5 = res5.max(max_abs(&(cert.thetas[j - 1].as_matrix() * diff.as_matrix())));
    }
    report.residual("kkt5_theta_slackness", res5);

    // (6) Π_jj([D̃]_jj − D_j) = 0
    let res6 = (0..l)
        .map(|j| (cert.pi[j] * (d_tilde.get(j, j) - p.d[j])).abs())
        .fold(0.0, f64::max);
    report.residual("kkt6_pi_slackness", res6);

    report.margin("lambda_psd", cert.lambda.min_eigenvalue());
    report.margin("omega_psd", cert.omega.min_eigenvalue());
    for (j, t) in cert.thetas.iter().enumerate() {
        report.margin(format!("theta{}_psd", j + 1), t.min_eigenvalue());
    }
    report.margin("pi_nonnegative", cert.pi.iter().copied().fold(f64::INFINITY, f64::min));

    let dom = np.dominance_margin(&p.sigma_y)?;
    report.value("noise_dominance_min_eigenvalue", dom);
    if dom < -tol {
        report.note(format!(
            "hypothesis Sigma_N <= Sigma_Y does not hold (min eigenvalue {dom:.4e}); verdict covers the multiplier conditions only"
        ));
    }
    report.matrix("gamma_tilde", gamma.to_rows());
    Ok(report.finish())
}

/// BT solution plus the closed-form multipliers of the non-degraded case.
struct Closed {
    bt: BTSolution,
    gamma: SymMatrix,
    lambda: SymMatrix,
    pi: Vec<f64>,
}

/// Non-degraded preconditions; `Err(reason)` when they fail.
fn non_degraded(p: &MTProblem, bt: &BTSolution) -> std::result::Result<(), String> {
    for j in 0..p.dim() {
        if p.d[j] - bt.d_tilde.get(j, j) > DEGRADED_TOL * p.d[j] {
            return Err(format!(
                "degraded: target {} of terminal {} is not met with equality ({:.6})",
                p.d[j],
                j + 1,
                bt.d_tilde.get(j, j)
            ));
        }
    }
    let wmin = bt.w.iter().copied().fold(f64::INFINITY, f64::min);
    if wmin <= 0.0 {
        return Err("D~^-1 - Sigma_Y^-1 is not positive definite".into());
    }
    Ok(())
}

/// `diag((D̃ ⊙ D̃)⁻¹ D_L)`.
pub fn hadamard_pi(d_tilde: &SymMatrix, targets: &[f64]) -> Result<Vec<f64>> {
    let h = d_tilde.hadamard(d_tilde)?;
    let sol = h
        .as_matrix()
        .clone()
        .lu()
        .solve(&DVector::from_column_slice(targets))
        .ok_or_else(|| Error::Singular("Hadamard square of D~".into()))?;
    Ok(sol.iter().copied().collect())
}

/// `D̃ Π D̃ − D̃ + Γ`, which equals `D̃(Π − D̃⁻¹ + D̃⁻¹ΓD̃⁻¹)D̃`.
fn lambda_of(d_tilde: &SymMatrix, pi: &[f64], gamma: &SymMatrix) -> Result<SymMatrix> {
    let dt = d_tilde.as_matrix();
    let pm = DMatrix::from_diagonal(&DVector::from_column_slice(pi));
    SymMatrix::new(dt * pm * dt - dt + gamma.as_matrix())
}

fn closed_form(p: &MTProblem, np: &NoisePattern, bt: BTSolution) -> Result<Closed> {
    let gamma = gamma_tilde(p, np, &bt.d_tilde)?.gamma;
    let pi = hadamard_pi(&bt.d_tilde, &p.d)?;
    let lambda = lambda_of(&bt.d_tilde, &pi, &gamma)?;
    Ok(Closed { bt, gamma, lambda, pi })
}

/// Pair condition: `sign(Γ̃_ab)·Λ_ab − (2|Γ̃_ab| − √(Γ̃_aa Γ̃_bb))`, with the
/// left and right sides.
fn pair_margin(lambda: &SymMatrix, gamma: &SymMatrix, (a, b): (usize, usize)) -> (f64, f64, f64) {
    let g = gamma.get(a, b);
    let s = if g < 0.0 { -1.0 } else { 1.0 };
    let lhs = s * lambda.get(a, b);
    let rhs = 2.0 * g.abs() - (gamma.get(a, a) * gamma.get(b, b)).sqrt();
    (lhs - rhs, lhs, rhs)
}

pub fn check_corollary1(p: &MTProblem, np: &NoisePattern, tol: f64) -> Result<CheckReport> {
    if np.dim() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: np.dim() });
    }
    let bt = solve(p)?;
    if let Err(reason) = non_degraded(p, &bt) {
        return Ok(CheckReport::not_applicable(tol, reason));
    }
    let c = closed_form(p, np, bt)?;
    let mut report = CheckReport::new(tol);
    report.margin("lambda_psd", c.lambda.min_eigenvalue());
    report.margin("noise_dominance", np.dominance_margin(&p.sigma_y)?);
    for (k, pair) in np.pattern.pairs().into_iter().enumerate() {
        let (m, lhs, rhs) = pair_margin(&c.lambda, &c.gamma, pair);
        report.margin(format!("pair{}", k + 1), m);
        report.value(format!("pair{}_lhs", k + 1), lhs);
        report.value(format!("pair{}_rhs", k + 1), rhs);
    }
    report.value("bt_sum_rate", c.bt.sum_rate);
    report.matrix("lambda", c.lambda.to_rows());
    report.matrix("gamma_tilde", c.gamma.to_rows());
    report.matrix("pi", vec![c.pi.clone()]);
    Ok(report.finish())
}

/// Certificate `(Λ, 0, 0, Π)` implied by the closed form.
pub fn corollary1_certificate(p: &MTProblem, np: &NoisePattern) -> Result<(Certificate, SymMatrix)> {
    let bt = solve(p)?;
    if let Err(reason) = non_degraded(p, &bt) {
        return Err(Error::NotApplicable(reason));
    }
    let l = p.dim();
    let c = closed_form(p, np, bt)?;
    let cert = Certificate {
        lambda: c.lambda,
        omega: SymMatrix::new(DMatrix::zeros(l, l))?,
        thetas: vec![SymMatrix::new(DMatrix::zeros(2, 2))?; np.pattern.k()],
        pi: c.pi,
    };
    Ok((cert, c.bt.d_tilde))
}

/// Diagonal-noise condition.
pub fn check_wang(p: &MTProblem, sigma_n_diag: &SymMatrix, tol: f64) -> Result<CheckReport> {
    let l = p.dim();
    if sigma_n_diag.dim() != l {
        return Err(Error::DimensionMismatch { expected: l, found: sigma_n_diag.dim() });
    }
    if sigma_n_diag.max_off_diagonal() > 1e-12 * (1.0 + sigma_n_diag.max_abs()) {
        return Err(Error::InvalidInput("noise covariance must be diagonal".into()));
    }
    let np = NoisePattern::new(BlockPattern::identity(l, 0)?, sigma_n_diag.clone())?;
    let dom = np.dominance_margin(&p.sigma_y)?;
    if !np.is_dominated_by(&p.sigma_y, crate::matlib::DEFAULT_PSD_TOL)? {
        return Err(Error::NoiseNotDominated { min_eigenvalue: dom });
    }
    let bt = solve(p)?;
    if let Err(reason) = non_degraded(p, &bt) {
        return Ok(CheckReport::not_applicable(tol, reason));
    }
    let gamma = coupling_bound(p, &np, &bt.d_tilde)?;
    let pi = hadamard_pi(&bt.d_tilde, &p.d)?;
    let m = lambda_of(&bt.d_tilde, &pi, &gamma)?;
    let mut report = CheckReport::new(tol);
    report.margin("psd", m.min_eigenvalue());
    let diag_res = (0..l).map(|j| (m.get(j, j) - gamma.get(j, j)).abs()).fold(0.0, f64::max);
    report.residual("diagonal", diag_res);
    report.matrix("lambda", m.to_rows());
    Ok(report.finish())
}

/// Block-circulant form of the diagonal-noise condition:
/// `diag((D̃⊙D̃)⁻¹D·1) ⪰ D̃⁻¹ − D̃⁻¹(D̃⁻¹ + λ_min⁻¹I − Σ_Y⁻¹)⁻¹D̃⁻¹`.
pub fn check_wang_block_circulant(p: &MTProblem, tol: f64) -> Result<CheckReport> {
    let bt = solve_block_circulant(p)?;
    let l = p.dim();
    let lam_min = p.sigma_y.min_eigenvalue();
    let di = bt.d_tilde.inverse()?;
    let si = p.sigma_y.inverse()?;
    let lhs = hadamard_pi(&bt.d_tilde, &p.d)?;
    let core = di.add(&SymMatrix::identity(l).scale(1.0 / lam_min))?.sub(&si)?.inverse()?;
    let rhs = di.sub(&core.congruence(di.as_matrix())?)?;
    let diff = SymMatrix::from_diagonal(&lhs).sub(&rhs)?;
    let mut report = CheckReport::new(tol);
    report.margin("psd", diff.min_eigenvalue());
    let mean = lhs.iter().sum::<f64>() / l as f64;
    report.value("lhs", mean);
    report.value("lhs_spread", lhs.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max));
    report.value("lambda_min", lam_min);
    report.matrix("lhs_diagonal", vec![lhs]);
    report.matrix("rhs", rhs.to_rows());
    report.matrix("d_tilde", bt.d_tilde.to_rows());
    Ok(report.finish())
}

/// Result of [`search_noise`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub noise: NoisePattern,
    pub report: CheckReport,
    /// Minimum of the Corollary-1 margins at the returned noise.
    pub score: f64,
    pub evaluations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Objective evaluations across all restarts.
    pub budget: usize,
    pub restarts: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { budget: 5000, restarts: 5, seed: 0, tol: 1e-9 }
    }
}

/// Maps unconstrained parameters to a pattern-conforming noise covariance
/// scaled so that `Σ_N ⪯ Σ_Y`.
struct NoiseMap {
    pattern: BlockPattern,
    whiten: SymMatrix,
    scale: f64,
}

impl NoiseMap {
    fn new(p: &MTProblem, pattern: BlockPattern) -> Self {
        let eig = p.sigma_y.eigen();
        NoiseMap {
            pattern,
            whiten: eig.map(|x| 1.0 / x.sqrt()),
            scale: p.sigma_y.trace() / p.dim() as f64,
        }
    }

    fn n_params(&self) -> usize {
        3 * self.pattern.k() + self.pattern.singletons().len()
    }

    fn noise(&self, x: &[f64]) -> Option<SymMatrix> {
        let l = self.pattern.len();
        let mut m = DMatrix::zeros(l, l);
        let root = self.scale.sqrt();
        for (j, (a, b)) in self.pattern.pairs().into_iter().enumerate() {
            let (l11, l21, l22) = (root * x[3 * j].exp(), root * x[3 * j + 1], root * x[3 * j + 2].exp());
            m[(a, a)] = l11 * l11;
            m[(a, b)] = l11 * l21;
            m[(b, a)] = l11 * l21;
            m[(b, b)] = l21 * l21 + l22 * l22;
        }
        let off = 3 * self.pattern.k();
        for (i, s) in self.pattern.singletons().into_iter().enumerate() {
            m[(s, s)] = self.scale * x[off + i].exp();
        }
        let n = SymMatrix::new(m).ok()?;
        let top = n.congruence(self.whiten.as_matrix()).ok()?.max_eigenvalue();
        if !(top > 0.0 && top.is_finite()) {
            return None;
        }
        let n = n.scale((1.0 - 1e-9) / top.max(1.0 - 1e-9));
        n.is_positive_definite().then_some(n)
    }
}

/// Derivative-free search for a noise covariance with the given pattern that
/// maximizes the smallest closed-form margin.
pub fn search_noise(p: &MTProblem, pattern: &BlockPattern, opts: SearchOptions) -> Result<SearchResult> {
    if pattern.len() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: pattern.len() });
    }
    let bt = solve(p)?;
    if let Err(reason) = non_degraded(p, &bt) {
        return Err(Error::NotApplicable(reason));
    }
    let pi = hadamard_pi(&bt.d_tilde, &p.d)?;
    let di = bt.d_tilde.inverse()?;
    let si = p.sigma_y.inverse()?;
    let base = di.sub(&si)?;
    let map = NoiseMap::new(p, pattern.clone());
    let pairs = pattern.pairs();

    let score = |x: &[f64]| -> f64 {
        let Some(n) = map.noise(x) else { return f64::NEG_INFINITY };
        let Ok(ni) = n.inverse() else { return f64::NEG_INFINITY };
        let Ok(gamma) = base.add(&ni).and_then(|m| m.inverse()) else { return f64::NEG_INFINITY };
        let Ok(lambda) = lambda_of(&bt.d_tilde, &pi, &gamma) else { return f64::NEG_INFINITY };
        let mut s = lambda.min_eigenvalue();
        for &pair in &pairs {
            s = s.min(pair_margin(&lambda, &gamma, pair).0);
        }
        if s.is_nan() {
            f64::NEG_INFINITY
        } else {
            s
        }
    };

    let dim = map.n_params();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let restarts = opts.restarts.max(1);
    let per_restart = (opts.budget / restarts).max(dim + 2);
    let mut used = 0;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..restarts {
        if used >= opts.budget {
            break;
        }
        let x0: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let allowance = per_restart.min(opts.budget - used);
        let (x, f, evals) = nelder_mead(|x| -score(x), x0, 0.5, allowance);
        used += evals;
        let s = -f;
        let better = match &best {
            None => true,
            Some((bs, bx)) => s > *bs || (s == *bs && x.partial_cmp(bx) == Some(std::cmp::Ordering::Less)),
        };
        if better {
            best = Some((s, x));
        }
    }
    let (s, x) = best.ok_or_else(|| Error::SearchFailed("no restart ran".into()))?;
    let noise = map
        .noise(&x)
        .ok_or_else(|| Error::SearchFailed("no positive definite candidate within budget".into()))?;
    let np = NoisePattern::new(pattern.clone(), noise)?;
    let report = check_corollary1(p, &np, opts.tol)?;
    Ok(SearchResult { noise: np, report, score: s, evaluations: used })
}

/// Nelder-Mead minimization with an exact evaluation budget. Returns the best
/// point, its value and the number of evaluations used.
fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: Vec<f64>, step: f64, budget: usize) -> (Vec<f64>, f64, usize) {
    let n = x0.len();
    let mut evals = 0;
    let eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(&x0, &mut evals);
    simplex.push((x0.clone(), v0));
    for i in 0..n {
        if evals >= budget {
            break;
        }
        let mut x = x0.clone();
        x[i] += step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    if simplex.len() < n + 1 || n == 0 {
        let best = simplex.into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).expect("at least one point");
        return (best.0, best.1, evals);
    }

    let lin = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };
    while evals < budget {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if (spread.abs() < 1e-14 && size < 1e-10) || size < 1e-13 {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|i| simplex[..n].iter().map(|(x, _)| x[i]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let xr = lin(&centroid, &worst.0, -1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            if evals >= budget {
                simplex[n] = (xr, fr);
                break;
            }
            let xe = lin(&centroid, &worst.0, -2.0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            if evals >= budget {
                break;
            }
            let (xc, fc) = if fr < worst.1 {
                let xc = lin(&centroid, &worst.0, -0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = lin(&centroid, &worst.0, 0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    if evals >= budget {
                        break;
                    }
                    let x = lin(&best, &item.0, 0.5);
                    let v = eval(&x, &mut evals);
                    *item = (x, v);
                }
            }
        }
    }
    let best = simplex.into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).expect("non-empty simplex");
    (best.0, best.1, evals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::report::Verdict;

    fn ex1_noise() -> (MTProblem, NoisePattern) {
        let ex = fixtures::example1();
        let np = NoisePattern::new(ex.pattern.clone(), ex.sigma_n.clone()).unwrap();
        (ex.problem(), np)
    }

    #[test]
    fn example1_certificate_passes() {
        let (p, np) = ex1_noise();
        let dt = solve(&p).unwrap().d_tilde;
        let r = verify_theorem2(&p, &np, &dt, &fixtures::example1_certificate(), 5e-3).unwrap();
        assert!(r.passed(), "{:?}", r.failures());
        assert!(r.values["noise_dominance_min_eigenvalue"] < 0.0);
        assert!(!r.notes.is_empty());
    }

    #[test]
    fn zero_certificate_fails() {
        let (p, np) = ex1_noise();
        let dt = solve(&p).unwrap().d_tilde;
        let z = SymMatrix::new(DMatrix::zeros(4, 4)).unwrap();
        let cert = Certificate {
            lambda: z.clone(),
            omega: z,
            thetas: vec![SymMatrix::new(DMatrix::zeros(2, 2)).unwrap()],
            pi: vec![0.0; 4],
        };
        let r = verify_theorem2(&p, &np, &dt, &cert, 5e-3).unwrap();
        let f = r.failures();
        assert!(f.contains(&"kkt2_pair1_diagonal".to_string()));
        assert!(f.contains(&"kkt3_singletons".to_string()));
    }

    #[test]
    fn dropping_omega_breaks_stationarity() {
        let (p, np) = ex1_noise();
        let dt = solve(&p).unwrap().d_tilde;
        let mut cert = fixtures::example1_certificate();
        cert.omega = SymMatrix::new(DMatrix::zeros(4, 4)).unwrap();
        let r = verify_theorem2(&p, &np, &dt, &cert, 5e-3).unwrap();
        assert_eq!(r.failures(), vec!["kkt1_stationarity".to_string()]);
    }

    #[test]
    fn corollary_examples() {
        let (p, np) = ex1_noise();
        assert_eq!(check_corollary1(&p, &np, 5e-3).unwrap().verdict, Verdict::NotApplicable);

        let ex = fixtures::example3();
        let np = NoisePattern::new(ex.pattern.clone(), ex.sigma_n.clone()).unwrap();
        let r = check_corollary1(&ex.problem(), &np, 5e-3).unwrap();
        assert!(r.passed(), "{:?}", r.failures());
        assert!((r.values["pair1_lhs"] - 0.3596).abs() < 5e-4);
        assert!((r.values["pair1_rhs"] - 0.2815).abs() < 5e-4);
    }

    #[test]
    fn closed_form_certificate_verifies() {
        let ex = fixtures::example3();
        let np = NoisePattern::new(ex.pattern.clone(), ex.sigma_n.clone()).unwrap();
        let p = ex.problem();
        let (cert, dt) = corollary1_certificate(&p, &np).unwrap();
        let r = verify_theorem2(&p, &np, &dt, &cert, 5e-3).unwrap();
        assert!(r.passed(), "{:?}", r.failures());
        assert!(r.residuals["kkt1_stationarity"] < 1e-10);
    }

    #[test]
    fn wang_bc_identity_passes() {
        let p = MTProblem::new(SymMatrix::identity(4), vec![0.2; 4]).unwrap();
        let r = check_wang_block_circulant(&p, 1e-9).unwrap();
        assert!(r.passed());
        assert!((r.values["lhs"] - 5.0).abs() < 1e-9);
        assert!(check_wang_block_circulant(&fixtures::example1().problem(), 1e-9).is_err());
    }

    #[test]
    fn wang_bc_halved_couplings() {
        let s = fixtures::example2().sigma_y;
        let half = SymMatrix::identity(4).add(&s.sub(&SymMatrix::identity(4)).unwrap().scale(0.5)).unwrap();
        let p = MTProblem::new(half, vec![0.1362; 4]).unwrap();
        let r = check_wang_block_circulant(&p, 1e-9).unwrap();
        assert!(r.passed());
        assert!((r.margins["psd"] - 6.077737).abs() < 1e-5, "{}", r.margins["psd"]);
        assert!((r.values["lhs"] - 7.287815).abs() < 1e-5);
    }

    #[test]
    fn example2_wang_bc_fails() {
        let r = check_wang_block_circulant(&fixtures::example2().problem(), 5e-3).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        let rhs = SymMatrix::from_rows(&r.matrices["rhs"]).unwrap();
        assert!(rhs.max_abs_diff(&fixtures::example2_wang_rhs()) < 5e-3);
    }

    #[test]
    fn two_terminal_wang_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pat = BlockPattern::identity(2, 0).unwrap();
        for _ in 0..10 {
            let r: f64 = rng.gen_range(-0.95..0.95);
            let sigma = SymMatrix::from_row_slice(2, &[1.0, r, r, 1.0]).unwrap();
            let p = MTProblem::new(sigma, vec![rng.gen_range(0.05..0.5), rng.gen_range(0.05..0.5)]).unwrap();
            let bt = solve(&p).unwrap();
            if non_degraded(&p, &bt).is_err() {
                continue;
            }
            let found = search_noise(&p, &pat, SearchOptions { budget: 2000, ..Default::default() }).unwrap();
            assert!(found.report.passed(), "{:?} score {}", p, found.score);
            assert!(check_wang(&p, &found.noise.sigma_n, 1e-9).unwrap().passed());
        }
    }

    #[test]
    fn example3_pair_search_finds_witness() {
        let p = fixtures::example3().problem();
        let pat = BlockPattern::identity(3, 1).unwrap();
        let found = search_noise(&p, &pat, SearchOptions { budget: 5000, ..Default::default() }).unwrap();
        assert!(found.report.passed(), "score {}", found.score);
        assert!(found.score > 0.0);
    }

    #[test]
    fn pair_correlation_equals_kink() {
        let ex = fixtures::example1();
        let np = NoisePattern::new(ex.pattern.clone(), ex.sigma_n.clone()).unwrap();
        let p = ex.problem();
        let dt = solve(&p).unwrap().d_tilde;
        let g = gamma_tilde(&p, &np, &dt).unwrap().gamma;
        let seg = subdiff_segment(&block_submatrix(&ex.sigma_n, &ex.pattern, 1).unwrap(), (g.get(0, 0), g.get(1, 1))).unwrap();
        let corr = g.get(0, 1) / (g.get(0, 0) * g.get(1, 1)).sqrt();
        assert!((corr - seg.sign * seg.theta_tilde).abs() < 1e-10);
    }

    #[test]
    fn wang_rejects_undominated_noise() {
        let p = fixtures::example3().problem();
        let n = SymMatrix::from_diagonal(&[2.0, 0.1, 0.1]);
        assert!(matches!(check_wang(&p, &n, 1e-9), Err(Error::NoiseNotDominated { .. })));
        let full = fixtures::example3().sigma_n;
        assert!(check_wang(&p, &full, 1e-9).is_err());
    }

    #[test]
    fn search_identity_source() {
        let p = MTProblem::new(SymMatrix::identity(3), vec![0.3; 3]).unwrap();
        let pat = BlockPattern::identity(3, 0).unwrap();
        let r = search_noise(&p, &pat, SearchOptions { budget: 200, ..Default::default() }).unwrap();
        assert!(r.report.passed());
    }

    #[test]
    fn search_is_deterministic() {
        let p = fixtures::example3().problem();
        let pat = BlockPattern::identity(3, 1).unwrap();
        let opts = SearchOptions { budget: 300, seed: 7, ..Default::default() };
        let a = search_noise(&p, &pat, opts).unwrap();
        let b = search_noise(&p, &pat, opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nelder_mead_quadratic() {
        let (x, f, n) = nelder_mead(|x| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2), vec![0.0, 0.0], 0.5, 2000);
        assert!(f < 1e-12 && (x[0] - 1.0).abs() < 1e-6 && (x[1] + 2.0).abs() < 1e-6);
        assert!(n <= 2000);
        let (_, _, n) = nelder_mead(|x| x[0] * x[0], vec![3.0], 0.5, 7);
        assert_eq!(n, 7);
    }
}

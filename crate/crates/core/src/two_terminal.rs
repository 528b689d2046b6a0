//! Two-terminal quadratic Gaussian problem under a 2×2 matrix distortion
//! constraint.
//!
//! Everything works in normalized coordinates: source `i` has variance
//! `v_i²`, the distortion matrix is `[[1, θ], [θ, 1]]` and `ρ ≥ 0`. Rates are
//! in nats.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matlib::{psd_leq, SymMatrix, DEFAULT_PSD_TOL};

/// Segment endpoints are undefined when the kink correlation reaches ±1.
const MAX_KINK: f64 = 1.0 - 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoTermInstance {
    pub v1: f64,
    pub v2: f64,
    pub rho: f64,
    pub theta: f64,
    /// Set when source 2 was negated to make `rho` non-negative.
    pub flipped: bool,
}

impl TwoTermInstance {
    pub fn new(v1: f64, v2: f64, rho: f64, theta: f64) -> Result<Self> {
        if !(v1 > 0.0 && v2 > 0.0 && v1.is_finite() && v2.is_finite()) {
            return Err(Error::InvalidInput(format!("v1, v2 must be positive, got {v1}, {v2}")));
        }
        if !rho.is_finite() || !theta.is_finite() {
            return Err(Error::InvalidInput("rho and theta must be finite".into()));
        }
        if 1.0 - rho.abs() < 1e-12 {
            return Err(Error::InvalidInput(format!("|rho| = {} is too close to 1", rho.abs())));
        }
        if theta.abs() >= 1.0 {
            return Err(Error::InvalidInput(format!("|theta| = {} must be < 1", theta.abs())));
        }
        let flipped = rho < 0.0;
        let (rho, theta) = if flipped { (-rho, -theta) } else { (rho, theta) };
        Ok(TwoTermInstance { v1, v2, rho, theta, flipped })
    }

    /// Same source, different distortion correlation (in normalized sign).
    pub fn with_theta(&self, theta: f64) -> Self {
        TwoTermInstance { theta, ..*self }
    }

    fn p(&self) -> f64 {
        self.v1 * self.v2
    }

    fn a(&self) -> f64 {
        self.p() * (1.0 - self.rho * self.rho)
    }

    /// Sign that maps normalized off-diagonals back to the input orientation.
    pub fn sign(&self) -> f64 {
        if self.flipped {
            -1.0
        } else {
            1.0
        }
    }

    pub fn r_mu(&self) -> f64 {
        let (p, a, r, t) = (self.p(), self.a(), self.rho, self.theta);
        0.5 * (p * (a + 2.0 * r * (1.0 + t)) / ((1.0 + t) * (1.0 + t))).ln()
    }

    pub fn r_lb(&self) -> f64 {
        let (p, a, r, t) = (self.p(), self.a(), self.rho, self.theta);
        let one_r = 1.0 - r * r;
        0.5 * (p.powi(3) * one_r * one_r / ((1.0 - t) * (1.0 - t) * (a + 2.0 * r * (1.0 + t)))).ln()
    }

    /// Infinite where the closed form's argument is non-positive (only happens
    /// below the kink, where this branch is unused).
    pub fn r_ub(&self) -> f64 {
        let (p, a, r, t) = (self.p(), self.a(), self.rho, self.theta);
        let arg = a - 2.0 * r * (1.0 - t);
        if arg <= 0.0 {
            return f64::INFINITY;
        }
        0.5 * (p * arg / ((1.0 - t) * (1.0 - t))).ln()
    }

    /// Joint (cooperative) rate `½ log(|Σ|/|D|)`.
    pub fn r_coop(&self) -> f64 {
        let (p, r, t) = (self.p(), self.rho, self.theta);
        0.5 * (p * p * (1.0 - r * r) / (1.0 - t * t)).ln()
    }

    /// `max(R_μ, R_lb)` without a feasibility check.
    pub fn lower_bound(&self) -> f64 {
        self.r_mu().max(self.r_lb())
    }
}

/// Normalizes a 2×2 source covariance and distortion matrix.
pub fn normalize(sigma_y: &SymMatrix, d: &SymMatrix) -> Result<TwoTermInstance> {
    check_2x2(sigma_y)?;
    check_2x2(d)?;
    if !sigma_y.is_positive_definite() {
        return Err(Error::NotPositiveDefinite("two-terminal source covariance".into()));
    }
    if !d.is_positive_definite() {
        return Err(Error::NotPositiveDefinite("two-terminal distortion matrix".into()));
    }
    if !psd_leq(d, sigma_y, DEFAULT_PSD_TOL)? {
        return Err(Error::Infeasible("distortion matrix is not dominated by the source covariance".into()));
    }
    let (s1, s2) = (sigma_y.get(0, 0).sqrt(), sigma_y.get(1, 1).sqrt());
    let (d1, d2) = (d.get(0, 0), d.get(1, 1));
    let rho = sigma_y.get(0, 1) / (s1 * s2);
    let theta = d.get(0, 1) / (d1 * d2).sqrt();
    TwoTermInstance::new(s1 / d1.sqrt(), s2 / d2.sqrt(), rho, theta)
}

fn check_2x2(m: &SymMatrix) -> Result<()> {
    if m.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: m.dim() });
    }
    Ok(())
}

/// Kink correlation: the positive root of `ρθ² + aθ − ρ = 0`, zero at `ρ = 0`.
pub fn theta_tilde(inst: &TwoTermInstance) -> f64 {
    let (a, r) = (inst.a(), inst.rho);
    // Rationalized form; no cancellation for small rho.
    2.0 * r / ((a * a + 4.0 * r * r).sqrt() + a)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSet {
    pub r_mu: f64,
    pub r_lb: f64,
    pub r_ub: f64,
    pub lower_bound: f64,
    pub bt_upper: f64,
    pub wagner_composite: f64,
    pub gap: f64,
    pub theta_tilde: f64,
}

pub fn bounds(inst: &TwoTermInstance) -> Result<BoundSet> {
    let (lo, hi) = feasible_theta_range(inst)?;
    if !(inst.theta > lo && inst.theta < hi) {
        return Err(Error::Infeasible(format!(
            "theta = {} outside the feasible range ({lo}, {hi})",
            inst.theta
        )));
    }
    let tt = theta_tilde(inst);
    let (r_mu, r_lb, r_ub) = (inst.r_mu(), inst.r_lb(), inst.r_ub());
    let lower_bound = r_mu.max(r_lb);
    let (bt_upper, gap) = if inst.theta <= tt {
        (r_mu, 0.0)
    } else {
        (r_ub, r_ub - lower_bound)
    };
    Ok(BoundSet {
        r_mu,
        r_lb,
        r_ub,
        lower_bound,
        bt_upper,
        wagner_composite: inst.r_coop().max(r_mu),
        gap,
        theta_tilde: tt,
    })
}

/// `½ log(1 + 4ρ / (v₁v₂(1−ρ²)))`: the gap as θ → 1.
pub fn gap_supremum(inst: &TwoTermInstance) -> f64 {
    0.5 * (4.0 * inst.rho / inst.a()).ln_1p()
}

/// Range of θ for which `D ⪯ Σ`, clipped to `[−1, 1]`.
///
/// `det(Σ − D) ≥ 0` in normalized coordinates reads
/// `(θ − ρv₁v₂)² ≤ (v₁² − 1)(v₂² − 1)`.
pub fn feasible_theta_range(inst: &TwoTermInstance) -> Result<(f64, f64)> {
    if inst.v1 < 1.0 || inst.v2 < 1.0 {
        return Err(Error::Infeasible(format!(
            "individual distortion exceeds the source variance (v1 = {}, v2 = {})",
            inst.v1, inst.v2
        )));
    }
    let half = ((inst.v1 * inst.v1 - 1.0) * (inst.v2 * inst.v2 - 1.0)).sqrt();
    let c = inst.rho * inst.p();
    Ok(((c - half).max(-1.0), (c + half).min(1.0)))
}

/// Endpoints of the subdifferential segment at the kink.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubdiffSegment {
    pub endpoint_mu: SymMatrix,
    pub endpoint_lb: SymMatrix,
    pub theta_tilde: f64,
    /// `±1`; `+1` when the source correlation is zero.
    pub sign: f64,
    /// Distortion matrix at the kink.
    pub d_tilde: SymMatrix,
}

impl SubdiffSegment {
    pub fn offdiag_range(&self) -> (f64, f64) {
        let (a, b) = (self.endpoint_mu.get(0, 1), self.endpoint_lb.get(0, 1));
        (a.min(b), a.max(b))
    }

    /// Distance inside the off-diagonal interval; negative when outside.
    pub fn offdiag_margin(&self, x: f64) -> f64 {
        let (lo, hi) = self.offdiag_range();
        (x - lo).min(hi - x)
    }

    /// Weight `α` on the μ endpoint that produces off-diagonal `x`.
    pub fn alpha_for(&self, x: f64) -> f64 {
        let (a, b) = (self.endpoint_mu.get(0, 1), self.endpoint_lb.get(0, 1));
        if (a - b).abs() < f64::EPSILON {
            return 1.0;
        }
        (x - b) / (a - b)
    }

    /// `Ψ ↦ −½ D̃⁻¹ Ψ D̃⁻¹`, from a point of the segment to a subgradient.
    pub fn to_subgradient(&self, psi: &SymMatrix) -> Result<SymMatrix> {
        let di = self.d_tilde.inverse()?;
        psi.congruence(di.as_matrix()).map(|m| m.scale(-0.5))
    }
}

pub fn subdiff_segment(sigma: &SymMatrix, d_diag: (f64, f64)) -> Result<SubdiffSegment> {
    check_2x2(sigma)?;
    let (d1, d2) = d_diag;
    if !(d1 > 0.0 && d2 > 0.0) {
        return Err(Error::InvalidInput("segment diagonal must be positive".into()));
    }
    if !sigma.is_positive_definite() {
        return Err(Error::NotPositiveDefinite("segment source covariance".into()));
    }
    let (s1, s2) = (sigma.get(0, 0).sqrt(), sigma.get(1, 1).sqrt());
    let inst = TwoTermInstance::new(s1 / d1.sqrt(), s2 / d2.sqrt(), sigma.get(0, 1) / (s1 * s2), 0.0)?;
    let tt = theta_tilde(&inst);
    if tt > MAX_KINK {
        return Err(Error::Infeasible(format!("kink correlation {tt} is numerically 1")));
    }
    let s = inst.sign();
    let u = (d1 * d2).sqrt();
    let d_tilde = SymMatrix::from_row_slice(2, &[d1, s * tt * u, s * tt * u, d2])?;
    if !psd_leq(&d_tilde, sigma, DEFAULT_PSD_TOL)? {
        return Err(Error::Infeasible("kink distortion matrix is not dominated by the source".into()));
    }
    let endpoint_mu = SymMatrix::from_row_slice(2, &[d1, s * u, s * u, d2])?;
    let off_lb = s * (2.0 * tt - 1.0) * u;
    let endpoint_lb = SymMatrix::from_row_slice(2, &[d1, off_lb, off_lb, d2])?;
    Ok(SubdiffSegment { endpoint_mu, endpoint_lb, theta_tilde: tt, sign: s, d_tilde })
}

/// Gradients `(∇R_lb, ∇R_μ)` with respect to the distortion matrix, at the
/// instance's θ, in the input orientation. Off-diagonal entries are half the
/// partial derivative with respect to the shared off-diagonal value, so that
/// `dR = tr(∇R · dD)`.
pub fn gradients(inst: &TwoTermInstance, d1: f64, d2: f64) -> Result<(SymMatrix, SymMatrix)> {
    let (a, r, t) = (inst.a(), inst.rho, inst.theta);
    let s = inst.sign();
    let u = (d1 * d2).sqrt();
    let b = r / (a + 2.0 * r * (1.0 + t));
    let chi = 0.5 * (b - 1.0 / (1.0 + t));
    let big_a = 1.0 / (1.0 - t);
    let kappa = -0.5 * (big_a + b);
    let x = -s * (big_a - b) / (big_a + b);
    let grad = |c: f64, off: f64| {
        SymMatrix::new(DMatrix::from_row_slice(2, 2, &[c / d1, c * off / u, c * off / u, c / d2]))
    };
    Ok((grad(kappa, x)?, grad(chi, s)?))
}

/// Achievable scheme for `θ ≤ θ̃` in normalized coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Achievability {
    pub q1: f64,
    pub q2: f64,
    pub d_tilde: SymMatrix,
    /// `D − D̃ = c·[[1, −1], [−1, 1]]`.
    pub slack: SymMatrix,
    pub c: f64,
}

pub fn achievability(inst: &TwoTermInstance) -> Result<Achievability> {
    let tt = theta_tilde(inst);
    let (v1, v2, r, t) = (inst.v1, inst.v2, inst.rho, inst.theta);
    if t > tt {
        return Err(Error::NotApplicable(format!("theta = {t} exceeds the kink {tt}")));
    }
    let one_r = 1.0 - r * r;
    let num1 = v1 * v1 * v2 * one_r;
    let num2 = v2 * v2 * v1 * one_r;
    let den1 = num1 - (v2 - r * v1) * (1.0 + t);
    let den2 = num2 - (v1 - r * v2) * (1.0 + t);
    if den1 <= 0.0 || den2 <= 0.0 {
        return Err(Error::Infeasible("test-channel variance is not positive".into()));
    }
    let q1 = num1 * (1.0 + t) / den1;
    let q2 = num2 * (1.0 + t) / den2;
    let sigma = SymMatrix::from_row_slice(2, &[v1 * v1, r * v1 * v2, r * v1 * v2, v2 * v2])?;
    let prec = sigma.inverse()?.add(&SymMatrix::from_diagonal(&[1.0 / q1, 1.0 / q2]))?;
    let d_tilde = prec.inverse()?;
    let d = SymMatrix::from_row_slice(2, &[1.0, t, t, 1.0])?;
    let slack = d.sub(&d_tilde)?;
    let c = (r * (1.0 - t * t) - inst.p() * t * one_r) / (inst.a() + 2.0 * r * (1.0 + t));
    Ok(Achievability { q1, q2, d_tilde, slack, c })
}

/// Sum-rate corner of the classic two-terminal BT region with individual
/// distortions `d1`, `d2`.
pub fn classic_region_sum_rate(sigma_y: &SymMatrix, d1: f64, d2: f64) -> Result<f64> {
    let (s1sq, s2sq, r) = classic_params(sigma_y, d1, d2)?;
    let one_r = 1.0 - r * r;
    let beta = 1.0 + (1.0 + 4.0 * r * r * d1 * d2 / (one_r * one_r * s1sq * s2sq)).sqrt();
    Ok(log_plus(one_r * beta * s1sq * s2sq / (2.0 * d1 * d2)))
}

/// Single-rate boundary of the classic region: the least `R_i` given
/// `R_j = other_rate` (nats). `i` is 0 or 1.
pub fn classic_single_rate(sigma_y: &SymMatrix, d1: f64, d2: f64, i: usize, other_rate: f64) -> Result<f64> {
    let (s1sq, s2sq, r) = classic_params(sigma_y, d1, d2)?;
    let (var, d) = match i {
        0 => (s1sq, d1),
        1 => (s2sq, d2),
        _ => return Err(Error::InvalidInput(format!("terminal index {i} must be 0 or 1"))),
    };
    Ok(log_plus((1.0 - r * r + r * r * (-2.0 * other_rate).exp()) * var / d))
}

fn classic_params(sigma_y: &SymMatrix, d1: f64, d2: f64) -> Result<(f64, f64, f64)> {
    check_2x2(sigma_y)?;
    if !sigma_y.is_positive_definite() {
        return Err(Error::NotPositiveDefinite("two-terminal source covariance".into()));
    }
    if !(d1 > 0.0 && d2 > 0.0) {
        return Err(Error::InvalidInput("distortions must be positive".into()));
    }
    let (s1sq, s2sq) = (sigma_y.get(0, 0), sigma_y.get(1, 1));
    Ok((s1sq, s2sq, sigma_y.get(0, 1) / (s1sq * s2sq).sqrt()))
}

fn log_plus(x: f64) -> f64 {
    0.5 * x.ln().max(0.0)
}

//! Reference instances with published numerical values, rounded to four
//! decimals.

use nalgebra::DMatrix;

use crate::bt_solver::MTProblem;
use crate::matlib::{BlockPattern, SymMatrix};
use crate::tightness::Certificate;

/// A source, distortion targets and a structured noise covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceInstance {
    pub sigma_y: SymMatrix,
    pub d: Vec<f64>,
    pub pattern: BlockPattern,
    pub sigma_n: SymMatrix,
}

impl ReferenceInstance {
    pub fn problem(&self) -> MTProblem {
        MTProblem::new(self.sigma_y.clone(), self.d.clone()).expect("reference instance is valid")
    }
}

fn sym(n: usize, data: &[f64]) -> SymMatrix {
    SymMatrix::from_row_slice(n, data).expect("reference matrix is valid")
}

/// Four terminals, one correlated pair, targets inactive at terminal 4.
pub fn example1() -> ReferenceInstance {
    ReferenceInstance {
        sigma_y: sym(4, &[
            1.0, 0.9, 0.8, 0.8,
            0.9, 1.0, 0.7, 0.7,
            0.8, 0.7, 1.0, 1.0,
            0.8, 0.7, 1.0, 1.1,
        ]),
        d: vec![0.376, 0.35, 0.3, 0.5],
        pattern: BlockPattern::identity(4, 1).expect("valid pattern"),
        sigma_n: sym(4, &[
            0.2942, 0.2852, 0.0, 0.0,
            0.2852, 0.4535, 0.0, 0.0,
            0.0, 0.0, 0.0923, 0.0,
            0.0, 0.0, 0.0, 0.1923,
        ]),
    }
}

pub fn example1_d_tilde() -> SymMatrix {
    sym(4, &[
        0.376, 0.274, 0.1818, 0.1818,
        0.274, 0.35, 0.1231, 0.1231,
        0.1818, 0.1231, 0.3, 0.3,
        0.1818, 0.1231, 0.3, 0.4,
    ])
}

/// Remote source variances, descending.
pub fn example1_sigma_x() -> Vec<f64> {
    vec![3.1162, 0.0923, 0.0377, 0.0061]
}

/// Observation matrix; rows are determined up to sign.
#[allow(clippy::approx_constant)]
pub fn example1_h() -> DMatrix<f64> {
    DMatrix::from_row_slice(4, 4, &[
        -0.4712, -0.4130, -0.5511, -0.5511,
        0.0, 0.0, 0.7071, -0.7071,
        0.5417, 0.5619, -0.4421, -0.4421,
        -0.6961, 0.7167, 0.0290, 0.0290,
    ])
}

pub fn example1_gamma() -> SymMatrix {
    sym(4, &[
        0.2248, 0.1753, 0.0, 0.0,
        0.1753, 0.2791, 0.0, 0.0,
        0.0, 0.0, 0.0783, 0.0,
        0.0, 0.0, 0.0, 0.1923,
    ])
}

pub fn example1_certificate() -> Certificate {
    Certificate {
        lambda: sym(4, &[
            0.2248, 0.2489, 0.0967, 0.0967,
            0.2489, 0.2791, 0.1075, 0.1075,
            0.0967, 0.1075, 0.0783, 0.0,
            0.0967, 0.1075, 0.0, 0.1923,
        ]),
        omega: SymMatrix::from_diagonal(&[0.0, 0.0, 0.0, 0.1]),
        thetas: vec![SymMatrix::from_diagonal(&[0.0, 0.0])],
        pi: vec![1.0377, 1.8957, 2.6331, 0.0],
    }
}

/// Off-diagonal endpoints of the pair-1 subdifferential segment
/// (`∇R_μ` side, `∇R_lb` side).
pub const EXAMPLE1_SEGMENT: (f64, f64) = (0.2505, 0.1001);

/// Induced instance after removing terminal 4: source, targets, and the
/// dependent-noise covariance (zero except the last entry).
pub fn example1_induced() -> (SymMatrix, Vec<f64>, SymMatrix) {
    (
        sym(3, &[1.0, 0.9, 0.8, 0.9, 1.0, 0.7, 0.8, 0.7, 1.0]),
        vec![0.376, 0.35, 0.3],
        SymMatrix::from_diagonal(&[0.0, 0.0, 0.0, 0.1]),
    )
}

/// Block-circulant source with equal targets.
pub fn example2() -> ReferenceInstance {
    ReferenceInstance {
        sigma_y: sym(4, &[
            1.0, 0.5, 0.975, 0.48,
            0.5, 1.0, 0.48, 0.975,
            0.975, 0.48, 1.0, 0.5,
            0.48, 0.975, 0.5, 1.0,
        ]),
        d: vec![0.1362; 4],
        pattern: BlockPattern::identity(4, 2).expect("valid pattern"),
        sigma_n: sym(4, &[
            0.025, 0.02, 0.0, 0.0,
            0.02, 0.025, 0.0, 0.0,
            0.0, 0.0, 0.025, 0.02,
            0.0, 0.0, 0.02, 0.025,
        ]),
    }
}

pub fn example2_d_tilde() -> SymMatrix {
    sym(4, &[
        0.1362, 0.0189, 0.1142, 0.0018,
        0.0189, 0.1362, 0.0018, 0.1142,
        0.1142, 0.0018, 0.1362, 0.0189,
        0.0018, 0.1142, 0.0189, 0.1362,
    ])
}

/// Scalar left side of the block-circulant diagonal-noise condition.
pub const EXAMPLE2_WANG_LHS: f64 = 4.1631;

/// Right side of the block-circulant diagonal-noise condition.
pub fn example2_wang_rhs() -> SymMatrix {
    sym(4, &[
        7.5599, 5.4290, -3.6183, -5.7492,
        5.4290, 7.5599, -5.7492, -3.6183,
        -3.6183, -5.7492, 7.5599, 5.4290,
        -5.7492, -3.6183, 5.4290, 7.5599,
    ])
}

/// Pair condition sides (left, right) for each block of example 2.
pub const EXAMPLE2_PAIR: (f64, f64) = (0.0219, 0.0171);

/// Three terminals, one correlated pair.
pub fn example3() -> ReferenceInstance {
    ReferenceInstance {
        sigma_y: sym(3, &[1.0, 0.95, 0.7, 0.95, 1.0, 0.6, 0.7, 0.6, 1.0]),
        d: vec![0.4, 0.45, 0.3],
        pattern: BlockPattern::identity(3, 1).expect("valid pattern"),
        sigma_n: sym(3, &[0.4827, 0.5074, 0.0, 0.5074, 0.6205, 0.0, 0.0, 0.0, 0.0512]),
    }
}

/// Pair condition sides (left, right) for example 3.
pub const EXAMPLE3_PAIR: (f64, f64) = (0.3596, 0.2815);

/// `F_3 ⊗ F_2` as printed.
pub fn g6_printed() -> DMatrix<f64> {
    DMatrix::from_row_slice(6, 6, &[
        0.4082, 0.4082, 0.0, 0.0, 0.5774, 0.5774,
        0.4082, -0.4082, 0.0, 0.0, 0.5774, -0.5774,
        0.4082, 0.4082, 0.5, 0.5, -0.2887, -0.2887,
        0.4082, -0.4082, 0.5, -0.5, -0.2887, 0.2887,
        0.4082, 0.4082, -0.5, -0.5, -0.2887, -0.2887,
        0.4082, -0.4082, -0.5, 0.5, -0.2887, 0.2887,
    ])
}

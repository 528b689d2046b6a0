#![allow(dead_code)]

use mtrate_core::bt_solver::{sum_rate_at, distortion_at, MTProblem};
use mtrate_core::matlib::{BlockPattern, SymMatrix};
use mtrate_core::remote_model::NoisePattern;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random positive definite covariance with unit-ish diagonal.
pub fn random_covariance(rng: &mut ChaCha8Rng, l: usize) -> SymMatrix {
    let a = DMatrix::from_fn(l, l, |_, _| rng.gen_range(-1.0..1.0));
    let m = &a * a.transpose() + DMatrix::identity(l, l) * 0.2;
    let d = m.diagonal().map(|x: f64| 1.0 / x.sqrt());
    let dd = DMatrix::from_diagonal(&d);
    SymMatrix::new(&dd * m * &dd).unwrap()
}

pub fn random_problem(rng: &mut ChaCha8Rng, l: usize) -> MTProblem {
    let s = random_covariance(rng, l);
    let d = (0..l).map(|j| s.get(j, j) * rng.gen_range(0.1..0.8)).collect();
    MTProblem::new(s, d).unwrap()
}

/// Symmetric block-circulant covariance with `[[x, y], [y, x]]` blocks.
pub fn random_block_circulant(rng: &mut ChaCha8Rng, l: usize) -> SymMatrix {
    let nb = l / 2;
    let mut blocks: Vec<(f64, f64)> = (0..nb).map(|_| (rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4))).collect();
    for i in 1..nb {
        blocks[i] = blocks[i.min(nb - i)];
    }
    blocks[0].0 = 1.0;
    let mut m = DMatrix::zeros(l, l);
    for r in 0..nb {
        for c in 0..nb {
            let (x, y) = blocks[(c + nb - r) % nb];
            m[(2 * r, 2 * c)] = x;
            m[(2 * r + 1, 2 * c + 1)] = x;
            m[(2 * r, 2 * c + 1)] = y;
            m[(2 * r + 1, 2 * c)] = y;
        }
    }
    let min = m.clone().symmetric_eigen().eigenvalues.min();
    if min < 0.1 {
        m += DMatrix::identity(l, l) * (0.1 - min);
    }
    SymMatrix::new(m).unwrap()
}

/// Pattern-conforming noise scaled so that `Σ_Y − Σ_N` keeps a margin.
pub fn random_dominated_noise(rng: &mut ChaCha8Rng, sigma_y: &SymMatrix, pattern: &BlockPattern) -> NoisePattern {
    let l = pattern.len();
    let mut m = DMatrix::zeros(l, l);
    for (a, b) in pattern.pairs() {
        let (x, y, z): (f64, f64, f64) = (rng.gen_range(0.2..1.0), rng.gen_range(-0.9..0.9), rng.gen_range(0.2..1.0));
        m[(a, a)] = x;
        m[(b, b)] = z;
        m[(a, b)] = y * (x * z).sqrt();
        m[(b, a)] = m[(a, b)];
    }
    for s in pattern.singletons() {
        m[(s, s)] = rng.gen_range(0.2..1.0);
    }
    let n = SymMatrix::new(m).unwrap();
    let w = sigma_y.eigen().map(|x| 1.0 / x.sqrt());
    let top = n.congruence(w.as_matrix()).unwrap().max_eigenvalue();
    NoisePattern::new(pattern.clone(), n.scale(rng.gen_range(0.3..0.9) / top)).unwrap()
}

/// Feasibility of multipliers `w` against the targets.
fn feasible(p: &MTProblem, w: &[f64]) -> bool {
    match distortion_at(p, w) {
        Ok(d) => (0..p.dim()).all(|j| d.get(j, j) <= p.d[j] * (1.0 + 1e-12)),
        Err(_) => false,
    }
}

/// Smallest last multiplier meeting the last target, given the others.
fn last_multiplier(p: &MTProblem, head: &[f64], cap: f64) -> Option<f64> {
    let l = p.dim();
    let with = |x: f64| {
        let mut w = head.to_vec();
        w.push(x);
        w
    };
    let meets = |x: f64| distortion_at(p, &with(x)).map(|d| d.get(l - 1, l - 1) <= p.d[l - 1]).unwrap_or(false);
    if meets(0.0) {
        return Some(0.0);
    }
    if !meets(cap) {
        return None;
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if meets(mid) {
            hi = mid
        } else {
            lo = mid
        }
    }
    Some(hi)
}

/// Minimum BT sum-rate by grid search over all but the last multiplier, with
/// bisection on the last and coarse-to-fine refinement. Supports L = 2, 3.
pub fn grid_oracle(p: &MTProblem) -> f64 {
    let l = p.dim();
    assert!(l == 2 || l == 3);
    let caps: Vec<f64> = p.d.iter().map(|d| 2.0 / d).collect();
    let n = 41;
    let mut lo: Vec<f64> = vec![0.0; l - 1];
    let mut hi: Vec<f64> = caps[..l - 1].to_vec();
    let mut best = (f64::INFINITY, vec![0.0; l - 1]);
    for _round in 0..6 {
        let axis = |k: usize, i: usize| lo[k] + (hi[k] - lo[k]) * i as f64 / (n - 1) as f64;
        let mut visit = |head: Vec<f64>| {
            if let Some(last) = last_multiplier(p, &head, caps[l - 1]) {
                let mut w = head.clone();
                w.push(last);
                if feasible(p, &w) {
                    let r = sum_rate_at(p, &w).unwrap();
                    if r < best.0 {
                        best = (r, head);
                    }
                }
            }
        };
        for i in 0..n {
            if l == 2 {
                visit(vec![axis(0, i)]);
            } else {
                for j in 0..n {
                    visit(vec![axis(0, i), axis(1, j)]);
                }
            }
        }
        for k in 0..l - 1 {
            let span = (hi[k] - lo[k]) / 5.0;
            lo[k] = (best.1[k] - span).max(0.0);
            hi[k] = (best.1[k] + span).min(caps[k]);
        }
    }
    best.0
}

//! Dense symmetric-matrix helpers: PSD ordering, spectral decomposition,
//! the star operation, real Fourier bases and permutation-block patterns.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance for PSD tests.
pub const DEFAULT_PSD_TOL: f64 = 1e-9;

/// Square symmetric matrix. Construction symmetrizes the input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 {
            return Err(Error::InvalidInput("matrix must have dimension >= 1".into()));
        }
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidInput(format!(
                "matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let t = m.transpose();
        Ok(SymMatrix((m + t) * 0.5))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: bad.len() });
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Row-major slice constructor, mostly for literals.
    pub fn from_row_slice(n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: data.len() });
        }
        Self::new(DMatrix::from_row_slice(n, n, data))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.0.diagonal().iter().copied().collect()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    pub fn eigen(&self) -> SpectralDecomposition {
        SpectralDecomposition::of(self)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.clone().symmetric_eigenvalues().min()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.0.clone().symmetric_eigenvalues().max()
    }

    pub fn inverse(&self) -> Result<SymMatrix> {
        let inv = self
            .0
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular(format!("{}x{} inverse", self.dim(), self.dim())))?;
        if inv.iter().any(|x| !x.is_finite()) {
            return Err(Error::Singular("inverse has non-finite entries".into()));
        }
        SymMatrix::new(inv)
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    /// Natural log-determinant of a positive definite matrix.
    pub fn log_det(&self) -> Result<f64> {
        let chol = self
            .0
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("log-determinant".into()))?;
        Ok(2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>())
    }

    pub fn is_positive_definite(&self) -> bool {
        self.0.clone().cholesky().is_some() && self.min_eigenvalue() > 0.0
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix(&self.0 * s)
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        same_dim(self, other)?;
        Ok(SymMatrix(&self.0 + &other.0))
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        same_dim(self, other)?;
        Ok(SymMatrix(&self.0 - &other.0))
    }

    /// `a * self * a^T`, which stays symmetric.
    pub fn congruence(&self, a: &DMatrix<f64>) -> Result<SymMatrix> {
        if a.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: a.ncols() });
        }
        SymMatrix::new(a * &self.0 * a.transpose())
    }

    /// Symmetric principal submatrix on `idx`.
    pub fn principal(&self, idx: &[usize]) -> SymMatrix {
        let k = idx.len();
        SymMatrix(DMatrix::from_fn(k, k, |i, j| self.0[(idx[i], idx[j])]))
    }

    /// Entrywise product.
    pub fn hadamard(&self, other: &SymMatrix) -> Result<SymMatrix> {
        same_dim(self, other)?;
        Ok(SymMatrix(self.0.component_mul(&other.0)))
    }

    /// Max absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        (&self.0 - &other.0).amax()
    }

    /// Largest off-diagonal magnitude.
    pub fn max_off_diagonal(&self) -> f64 {
        let n = self.dim();
        let mut m: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m = m.max(self.0[(i, j)].abs());
                }
            }
        }
        m
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        SymMatrix::from_rows(&rows)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.to_rows()
    }
}

fn same_dim(a: &SymMatrix, b: &SymMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    Ok(())
}

/// Eigen-decomposition with eigenvalues in descending order. Each eigenvector's
/// first non-negligible component is positive.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn of(m: &SymMatrix) -> Self {
        let eig = m.as_matrix().clone().symmetric_eigen();
        let n = m.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut eigenvectors = DMatrix::zeros(n, n);
        for (c, &i) in order.iter().enumerate() {
            let mut v = eig.eigenvectors.column(i).into_owned();
            if let Some(first) = v.iter().find(|x| x.abs() > 1e-10) {
                if *first < 0.0 {
                    v = -v;
                }
            }
            eigenvectors.set_column(c, &v);
        }
        SpectralDecomposition { eigenvalues, eigenvectors }
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.eigenvectors
            * DMatrix::from_diagonal(&self.eigenvalues)
            * self.eigenvectors.transpose()
    }

    /// Rebuild with every eigenvalue mapped through `f`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let lam = self.eigenvalues.map(f);
        SymMatrix(
            &self.eigenvectors * DMatrix::from_diagonal(&lam) * self.eigenvectors.transpose(),
        )
        .symmetrized()
    }
}

impl SymMatrix {
    fn symmetrized(self) -> SymMatrix {
        let t = self.0.transpose();
        SymMatrix((self.0 + t) * 0.5)
    }
}

/// `λ_min(m) ≥ −tol·(1 + |tr m|/dim)`.
pub fn is_psd(m: &SymMatrix, tol: f64) -> bool {
    m.min_eigenvalue() >= -psd_slack(m, tol)
}

/// Absolute slack used by [`is_psd`] for `m`.
pub fn psd_slack(m: &SymMatrix, tol: f64) -> f64 {
    tol * (1.0 + m.trace().abs() / m.dim() as f64)
}

/// `a ⪯ b` in the semidefinite order.
pub fn psd_leq(a: &SymMatrix, b: &SymMatrix, tol: f64) -> Result<bool> {
    Ok(is_psd(&b.sub(a)?, tol))
}

/// `A ⋆ B = A − A(A+B)⁻¹A`.
pub fn star(a: &SymMatrix, b: &SymMatrix) -> Result<SymMatrix> {
    let s = a.add(b)?;
    let lu = s.as_matrix().clone().lu();
    let x = lu
        .solve(a.as_matrix())
        .ok_or_else(|| Error::Singular("A + B in star operation".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("A + B in star operation".into()));
    }
    SymMatrix::new(a.as_matrix() - a.as_matrix() * x)
}

/// Orthogonal real DFT basis of size `m`.
///
/// Columns: the constant vector, then a sine/cosine pair for each frequency
/// `1..=(m-1)/2`, then the alternating vector when `m` is even.
pub fn real_fourier(m: usize) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Err(Error::InvalidInput("real Fourier size must be >= 1".into()));
    }
    let mf = m as f64;
    let mut f = DMatrix::zeros(m, m);
    for j in 0..m {
        f[(j, 0)] = 1.0 / mf.sqrt();
    }
    let mut col = 1;
    let c = (2.0 / mf).sqrt();
    for k in 1..=(m - 1) / 2 {
        for j in 0..m {
            let arg = 2.0 * std::f64::consts::PI * (j * k) as f64 / mf;
            f[(j, col)] = c * arg.sin();
            f[(j, col + 1)] = c * arg.cos();
        }
        col += 2;
    }
    if m % 2 == 0 {
        for j in 0..m {
            f[(j, col)] = if j % 2 == 0 { 1.0 } else { -1.0 } / mf.sqrt();
        }
    }
    Ok(f)
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// `F_{L/2} ⊗ F_2`, which diagonalizes block-circulant matrices.
pub fn block_circulant_basis(l: usize) -> Result<DMatrix<f64>> {
    if l == 0 || l % 2 != 0 {
        return Err(Error::NotBlockCirculant(format!("dimension {l} is not even")));
    }
    Ok(kron(&real_fourier(l / 2)?, &real_fourier(2)?))
}

/// Permutation with `k` leading 2×2 blocks. `perm` is 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPattern")]
pub struct BlockPattern {
    perm: Vec<usize>,
    k: usize,
}

#[derive(Deserialize)]
struct RawPattern {
    perm: Vec<usize>,
    k: usize,
}

impl TryFrom<RawPattern> for BlockPattern {
    type Error = Error;
    fn try_from(r: RawPattern) -> Result<Self> {
        BlockPattern::new(r.perm, r.k)
    }
}

impl BlockPattern {
    pub fn new(perm: Vec<usize>, k: usize) -> Result<Self> {
        let l = perm.len();
        if l == 0 {
            return Err(Error::InvalidPattern("empty permutation".into()));
        }
        let mut seen = vec![false; l];
        for &p in &perm {
            if p == 0 || p > l || seen[p - 1] {
                return Err(Error::InvalidPattern(format!(
                    "{perm:?} is not a permutation of 1..={l}"
                )));
            }
            seen[p - 1] = true;
        }
        if 2 * k > l {
            return Err(Error::InvalidPattern(format!("k = {k} exceeds floor({l}/2)")));
        }
        Ok(BlockPattern { perm, k })
    }

    pub fn identity(l: usize, k: usize) -> Result<Self> {
        Self::new((1..=l).collect(), k)
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// 0-based index pair of block `j` (1-based).
    pub fn pair(&self, j: usize) -> Result<(usize, usize)> {
        if j == 0 || j > self.k {
            return Err(Error::InvalidPattern(format!("block {j} out of range 1..={}", self.k)));
        }
        Ok((self.perm[2 * j - 2] - 1, self.perm[2 * j - 1] - 1))
    }

    /// All block index pairs, 0-based.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        (0..self.k).map(|j| (self.perm[2 * j] - 1, self.perm[2 * j + 1] - 1)).collect()
    }

    /// Indices outside every block, 0-based.
    pub fn singletons(&self) -> Vec<usize> {
        self.perm[2 * self.k..].iter().map(|p| p - 1).collect()
    }

    fn allowed(&self, a: usize, b: usize) -> bool {
        a == b
            || self
                .pairs()
                .iter()
                .any(|&(i, j)| (i, j) == (a, b) || (j, i) == (a, b))
    }

    /// Largest entry that the pattern requires to vanish.
    pub fn max_off_pattern(&self, m: &SymMatrix) -> Result<f64> {
        if m.dim() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: m.dim() });
        }
        let n = m.dim();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                if !self.allowed(a, b) {
                    worst = worst.max(m.get(a, b).abs());
                }
            }
        }
        Ok(worst)
    }
}

pub fn conforms_to_pattern(m: &SymMatrix, p: &BlockPattern, tol: f64) -> Result<bool> {
    Ok(p.max_off_pattern(m)? <= tol)
}

/// `⟨m⟩_j`: the 2×2 submatrix on block `j` (1-based).
pub fn block_submatrix(m: &SymMatrix, p: &BlockPattern, j: usize) -> Result<SymMatrix> {
    if m.dim() != p.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), found: m.dim() });
    }
    let (a, b) = p.pair(j)?;
    Ok(m.principal(&[a, b]))
}

/// Checks the circulant layout of symmetric 2×2 blocks `[[x, y], [y, x]]`
/// with `B_i = B_{m+2-i}`.
pub fn is_block_circulant(m: &SymMatrix, tol: f64) -> Result<bool> {
    let l = m.dim();
    if l % 2 != 0 {
        return Err(Error::NotBlockCirculant(format!("dimension {l} is not even")));
    }
    let nb = l / 2;
    let slack = tol * (1.0 + m.max_abs());
    let block = |r: usize, c: usize| -> [f64; 4] {
        [
            m.get(2 * r, 2 * c),
            m.get(2 * r, 2 * c + 1),
            m.get(2 * r + 1, 2 * c),
            m.get(2 * r + 1, 2 * c + 1),
        ]
    };
    let close = |a: [f64; 4], b: [f64; 4]| a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= slack);
    for i in 0..nb {
        let b = block(0, i);
        if (b[0] - b[3]).abs() > slack || (b[1] - b[2]).abs() > slack {
            return Ok(false);
        }
        if i > 0 && !close(b, block(0, nb - i)) {
            return Ok(false);
        }
    }
    for r in 1..nb {
        for c in 0..nb {
            if !close(block(r, c), block(0, (c + nb - r) % nb)) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn psd_examples() {
        assert!(is_psd(&SymMatrix::identity(3), 1e-9));
        assert!(!is_psd(&SymMatrix::from_diagonal(&[1.0, -0.5]), 1e-9));
        assert!(is_psd(&fixtures::example1().sigma_y, 1e-9));
    }

    #[test]
    fn psd_leq_examples() {
        let half = SymMatrix::identity(2).scale(0.5);
        assert!(psd_leq(&half, &SymMatrix::identity(2), 1e-9).unwrap());
        let a = SymMatrix::from_diagonal(&[2.0, 0.0]);
        assert!(!psd_leq(&a, &SymMatrix::identity(2), 1e-9).unwrap());
        assert!(psd_leq(&half, &SymMatrix::identity(3), 1e-9).is_err());
    }

    #[test]
    fn example1_noise_is_not_dominated() {
        // The printed noise covariance exceeds the source covariance along one
        // direction; the difference has eigenvalue ≈ −0.0923.
        let ex = fixtures::example1();
        let diff = ex.sigma_y.sub(&ex.sigma_n).unwrap();
        assert!((diff.min_eigenvalue() + 0.0923).abs() < 5e-4);
        assert!(!psd_leq(&ex.sigma_n, &ex.sigma_y, 1e-9).unwrap());
    }

    #[test]
    fn star_examples() {
        let i2 = SymMatrix::identity(2);
        assert!(star(&i2, &i2).unwrap().max_abs_diff(&i2.scale(0.5)) < 1e-15);
        let two = SymMatrix::from_diagonal(&[2.0]);
        assert!((star(&two, &two).unwrap().get(0, 0) - 1.0).abs() < 1e-15);
        let z = SymMatrix::from_diagonal(&[0.0, 0.0]);
        assert!(matches!(star(&z, &z), Err(Error::Singular(_))));
    }

    #[test]
    fn fourier_small() {
        assert_eq!(real_fourier(1).unwrap(), DMatrix::from_element(1, 1, 1.0));
        let f2 = real_fourier(2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let expect = DMatrix::from_row_slice(2, 2, &[s, s, s, -s]);
        assert!((f2 - expect).amax() < 1e-15);
        assert!(real_fourier(0).is_err());
        for m in 1..8 {
            let f = real_fourier(m).unwrap();
            assert!((&f * f.transpose() - DMatrix::identity(m, m)).amax() < 1e-12);
        }
    }

    #[test]
    fn g6_matches_printed_layout() {
        let g = kron(&real_fourier(3).unwrap(), &real_fourier(2).unwrap());
        assert!((g - fixtures::g6_printed()).amax() < 5e-5);
    }

    #[test]
    fn kron_identities() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert_eq!(kron(&i2, &i2), DMatrix::identity(4, 4));
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 5.0]));
        let k = kron(&a, &b);
        assert_eq!(k.diagonal().as_slice(), &[3.0, 5.0, 6.0, 10.0]);
        assert_eq!(k.sum(), 24.0);
    }

    #[test]
    fn patterns() {
        let ex = fixtures::example1();
        let p = BlockPattern::identity(4, 1).unwrap();
        assert!(conforms_to_pattern(&SymMatrix::from_diagonal(&[1.0, 2.0, 3.0, 4.0]), &p, 0.0).unwrap());
        assert!(conforms_to_pattern(&ex.sigma_n, &p, 1e-12).unwrap());
        assert!(!conforms_to_pattern(&ex.sigma_y, &p, 1e-12).unwrap());
        assert!(BlockPattern::new(vec![1, 1, 2], 0).is_err());
        assert!(BlockPattern::new(vec![1, 2, 3], 2).is_err());
        let p2 = BlockPattern::new(vec![3, 1, 2], 1).unwrap();
        assert_eq!(p2.pairs(), vec![(2, 0)]);
        assert_eq!(p2.singletons(), vec![1]);
    }

    #[test]
    fn block_submatrices() {
        let ex = fixtures::example1();
        let p = BlockPattern::identity(4, 1).unwrap();
        let b = block_submatrix(&ex.sigma_n, &p, 1).unwrap();
        assert_eq!(b.to_rows(), vec![vec![0.2942, 0.2852], vec![0.2852, 0.4535]]);
        let i = block_submatrix(&SymMatrix::identity(4), &p, 1).unwrap();
        assert_eq!(i, SymMatrix::identity(2));
        assert!(block_submatrix(&ex.sigma_n, &p, 2).is_err());
    }

    #[test]
    fn block_circulant_detection() {
        assert!(is_block_circulant(&fixtures::example2().sigma_y, 1e-12).unwrap());
        assert!(!is_block_circulant(&fixtures::example1().sigma_y, 1e-12).unwrap());
        assert!(is_block_circulant(&SymMatrix::identity(6), 1e-12).unwrap());
        assert!(is_block_circulant(&SymMatrix::identity(3), 1e-12).is_err());
    }

    #[test]
    fn spectral_convention() {
        let m = fixtures::example1().sigma_y;
        let s = m.eigen();
        for i in 1..m.dim() {
            assert!(s.eigenvalues[i - 1] >= s.eigenvalues[i]);
        }
        assert!((s.reconstruct() - m.as_matrix()).amax() <= 1e-10 * (1.0 + m.max_abs()));
        let vtv = s.eigenvectors.transpose() * &s.eigenvectors;
        assert!((vtv - DMatrix::identity(4, 4)).amax() <= 1e-10);
        for c in s.eigenvectors.column_iter() {
            assert!(*c.iter().find(|x| x.abs() > 1e-10).unwrap() > 0.0);
        }
    }

    #[test]
    fn serde_round_trip() {
        let m = fixtures::example3().sigma_y;
        let rows: Vec<Vec<f64>> = m.clone().into();
        assert_eq!(SymMatrix::try_from(rows).unwrap(), m);
        assert!(SymMatrix::from_rows(&[vec![1.0, 2.0]]).is_err());
    }
}

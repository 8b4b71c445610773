//! Small dense Hermitian linear-algebra kernels.
//!
//! Everything in this module operates on matrices of modest size — `p×p` Gram
//! and shift matrices, or `q×q` Krylov projections with `q` at most a few
//! dozen — so eigendecomposition-based closed forms are both simple and
//! accurate:
//!
//! * **Lyapunov.** For Hermitian positive definite `S = V diag(d) V*` and
//!   Hermitian `B`, the solution of `S X + X S = B` is `X = V C V*` with
//!   `C_ij = (V* B V)_ij / (d_i + d_j)`.
//! * **Sylvester.** For Hermitian `A = U_A diag(a) U_A*` and
//!   `S = U_S diag(s) U_S*` with disjoint spectra, the solution of
//!   `A Y − Y S = C` is `Y = U_A W U_S*` with
//!   `W_ij = (U_A* C U_S)_ij / (a_i − s_j)`.
//!
//! The rank-revealing QR is a column-pivoted modified Gram-Schmidt with one
//! reorthogonalization pass; columns whose remaining norm falls below a drop
//! tolerance (relative to the largest original column norm) are discarded.

use crate::{C64, CMatrix};
use nalgebra::DVector;

/// Default relative drop tolerance for [`rank_revealing_qr`].
pub const DEFAULT_QR_DROP_TOL: f64 = 1e-10;

/// Iteration cap handed to the QR eigensolver before reporting failure.
const EIG_MAX_SWEEPS: usize = 10_000;

/// Relative floor below which a "positive definite" matrix is rejected.
const PD_FLOOR: f64 = 1e-13;

/// Relative spectral-gap floor below which a Sylvester pencil is rejected.
const PENCIL_GAP_FLOOR: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum MatError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix contains a non-finite entry")]
    NonFinite,
    #[error("eigensolver did not converge for a {dim}x{dim} Hermitian matrix")]
    EigNonConvergence { dim: usize },
    #[error("matrix is not positive definite (smallest eigenvalue {min_eig:.3e})")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("singular Sylvester pencil: spectra overlap (smallest gap {gap:.3e})")]
    SingularPencil { gap: f64 },
}

/// A square matrix kept exactly Hermitian.
///
/// The constructor symmetrizes its input as `(M + M*)/2`, so downstream code
/// can rely on `m[(i,j)] == conj(m[(j,i)])` holding bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct HermMatrix(CMatrix);

impl HermMatrix {
    /// Symmetrize `m` and wrap it. Fails on non-square or non-finite input.
    pub fn new(m: CMatrix) -> Result<Self, MatError> {
        if m.nrows() != m.ncols() {
            return Err(MatError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(MatError::NonFinite);
        }
        let h = (&m + m.adjoint()).scale(0.5);
        Ok(HermMatrix(h))
    }

    pub fn identity(p: usize) -> Self {
        HermMatrix(CMatrix::identity(p, p))
    }

    pub fn zeros(p: usize) -> Self {
        HermMatrix(CMatrix::zeros(p, p))
    }

    /// `s·I` for real `s`.
    pub fn scaled_identity(p: usize, s: f64) -> Self {
        HermMatrix(CMatrix::identity(p, p).scale(s))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    /// Frobenius distance of `m` from its own adjoint (0 for exact Hermitian).
    pub fn deviation(m: &CMatrix) -> f64 {
        (m - m.adjoint()).norm()
    }
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct HermEig {
    /// Real eigenvalues, ascending.
    pub values: DVector<f64>,
    /// Unitary matrix of eigenvectors, columns matching `values`.
    pub vectors: CMatrix,
}

impl HermEig {
    /// Reassemble `V diag(f(d)) V*` for a real function of the eigenvalues.
    pub fn assemble(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let p = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..p {
            let s = C64::new(f(self.values[j]), 0.0);
            scaled.column_mut(j).iter_mut().for_each(|z| *z *= s);
        }
        &scaled * self.vectors.adjoint()
    }
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
pub fn herm_eig(h: &HermMatrix) -> Result<HermEig, MatError> {
    let p = h.dim();
    if p == 0 {
        return Ok(HermEig {
            values: DVector::zeros(0),
            vectors: CMatrix::zeros(0, 0),
        });
    }
    let eig = nalgebra::linalg::SymmetricEigen::try_new(h.0.clone(), f64::EPSILON, EIG_MAX_SWEEPS)
        .ok_or(MatError::EigNonConvergence { dim: p })?;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(p, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = CMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(HermEig { values, vectors })
}

/// Solve `S X + X S = B` for Hermitian positive definite `S` and Hermitian `B`.
pub fn solve_lyapunov(s: &HermMatrix, b: &HermMatrix) -> Result<HermMatrix, MatError> {
    if s.dim() != b.dim() {
        return Err(MatError::DimensionMismatch(format!(
            "lyapunov: S is {0}x{0}, B is {1}x{1}",
            s.dim(),
            b.dim()
        )));
    }
    let eig = herm_eig(s)?;
    check_positive_definite(&eig.values)?;
    let c = solve_lyapunov_with(&eig, b.as_matrix());
    HermMatrix::new(c)
}

/// Lyapunov solve reusing an existing eigendecomposition of `S`.
///
/// `B` is taken as-is (callers pass Hermitian data); the result is Hermitian
/// up to round-off whenever `B` is.
pub(crate) fn solve_lyapunov_with(s_eig: &HermEig, b: &CMatrix) -> CMatrix {
    let p = s_eig.values.len();
    let mut core = s_eig.vectors.adjoint() * b * &s_eig.vectors;
    for i in 0..p {
        for j in 0..p {
            core[(i, j)] /= C64::new(s_eig.values[i] + s_eig.values[j], 0.0);
        }
    }
    &s_eig.vectors * core * s_eig.vectors.adjoint()
}

fn check_positive_definite(values: &DVector<f64>) -> Result<(), MatError> {
    let max = values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let min = values.min();
    if min <= PD_FLOOR * max.max(1.0) {
        return Err(MatError::NotPositiveDefinite { min_eig: min });
    }
    Ok(())
}

/// Solve `A Y − Y S = C` for Hermitian `A` (q×q) and `S` (p×p) with disjoint
/// spectra; `C` is a general q×p right-hand side.
pub fn solve_small_sylvester(
    a: &HermMatrix,
    s: &HermMatrix,
    c: &CMatrix,
) -> Result<CMatrix, MatError> {
    if c.nrows() != a.dim() || c.ncols() != s.dim() {
        return Err(MatError::DimensionMismatch(format!(
            "sylvester: A is {}x{}, S is {}x{}, C is {}x{}",
            a.dim(),
            a.dim(),
            s.dim(),
            s.dim(),
            c.nrows(),
            c.ncols()
        )));
    }
    let ea = herm_eig(a)?;
    let es = herm_eig(s)?;
    sylvester_from_eigs(&ea, &es, c)
}

/// Sylvester solve from precomputed eigendecompositions of both coefficients.
pub(crate) fn sylvester_from_eigs(
    ea: &HermEig,
    es: &HermEig,
    c: &CMatrix,
) -> Result<CMatrix, MatError> {
    let scale = spectral_radius(&ea.values) + spectral_radius(&es.values);
    let mut gap = f64::INFINITY;
    for &ai in ea.values.iter() {
        for &sj in es.values.iter() {
            gap = gap.min((ai - sj).abs());
        }
    }
    if gap <= PENCIL_GAP_FLOOR * scale.max(1.0) {
        return Err(MatError::SingularPencil { gap });
    }
    let mut w = ea.vectors.adjoint() * c * &es.vectors;
    for i in 0..ea.values.len() {
        for j in 0..es.values.len() {
            w[(i, j)] /= C64::new(ea.values[i] - es.values[j], 0.0);
        }
    }
    Ok(&ea.vectors * w * es.vectors.adjoint())
}

fn spectral_radius(values: &DVector<f64>) -> f64 {
    values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}

/// Column-pivoted rank-revealing QR.
///
/// Returns an orthonormal basis `Q` (n×r) for the column space of `m` together
/// with the numerical rank `r`. Columns whose remaining norm after elimination
/// is at most `drop_tol` times the largest original column norm are dropped.
pub fn rank_revealing_qr(m: &CMatrix, drop_tol: f64) -> (CMatrix, usize) {
    let n = m.nrows();
    let cols = m.ncols();
    if cols == 0 || n == 0 {
        return (CMatrix::zeros(n, 0), 0);
    }
    let mut work: Vec<nalgebra::DVector<C64>> =
        (0..cols).map(|j| m.column(j).into_owned()).collect();
    let ref_norm = work.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    if ref_norm == 0.0 {
        return (CMatrix::zeros(n, 0), 0);
    }
    let threshold = drop_tol * ref_norm;
    let mut q: Vec<nalgebra::DVector<C64>> = Vec::new();
    let mut alive: Vec<usize> = (0..cols).collect();
    while !alive.is_empty() && q.len() < n {
        // Pivot on the column with the largest remaining norm.
        let (pos, &pivot) = alive
            .iter()
            .enumerate()
            .max_by(|(_, &a), (_, &b)| work[a].norm().total_cmp(&work[b].norm()))
            .expect("alive is non-empty");
        if work[pivot].norm() <= threshold {
            break;
        }
        alive.swap_remove(pos);
        let mut v = work[pivot].clone();
        // One reorthogonalization pass against the accepted basis.
        for qk in &q {
            let coeff = qk.dotc(&v);
            v.axpy(-coeff, qk, C64::new(1.0, 0.0));
        }
        let norm = v.norm();
        if norm <= threshold {
            continue;
        }
        v.unscale_mut(norm);
        for &j in &alive {
            let coeff = v.dotc(&work[j]);
            work[j].axpy(-coeff, &v, C64::new(1.0, 0.0));
        }
        q.push(v);
    }
    let rank = q.len();
    let mut out = CMatrix::zeros(n, rank);
    for (j, column) in q.iter().enumerate() {
        out.set_column(j, column);
    }
    (out, rank)
}

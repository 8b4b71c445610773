//! The energy-adaptive metric machinery.
//!
//! The energy-adaptive inner product on the tangent space at a frame `φ` is
//! induced by the shifted Hamiltonian
//!
//! ```text
//! H_{φ,Σ}(v) = H_φ v − v Σ,     Σ = Λ_φ − μ I   (per block),
//! ```
//!
//! which is coercive on the tangent space near a minimizer for small `μ > 0`.
//! The Riemannian gradient in this metric is recovered from the solution `x`
//! of the block Sylvester system `H_{φ,Σ}(x) = φ` as
//!
//! ```text
//! G = φ − x ⟨φ, x⟩⁻¹,
//! ```
//!
//! which is horizontal (`⟨φ,G⟩ = 0`) by construction regardless of how
//! accurately `x` was solved. Production paths solve the Sylvester system
//! with a TPA-preconditioned block FOM iteration ([`fom_solve`]); dense
//! eigendecomposition-based equivalents live in [`DenseShiftedOracle`] and
//! exist purely as test oracles for small bases.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::matcore::{
    herm_eig, rank_revealing_qr, solve_small_sylvester, sylvester_from_eigs, HermEig, HermMatrix,
    MatError, DEFAULT_QR_DROP_TOL,
};
use crate::model::{Hamiltonian, ModelError, TpaPreconditioner};
use crate::stiefel::{real_pairing, BlockMat, Frame, Tangent};
use crate::{C64, CMatrix};

/// Condition-number ceiling for the Gram matrix `⟨φ,x⟩` in [`ea_gradient`].
pub const GRAM_COND_LIMIT: f64 = 1e12;

#[derive(Debug, Error)]
pub enum EaError {
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("Gram matrix ⟨φ,x⟩ is ill-conditioned (cond ≈ {cond:.3e})")]
    IllConditionedGram { cond: f64 },
    #[error("oracle linear system is singular: {0}")]
    SingularOracle(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mat(#[from] MatError),
}

/// The per-block shift `Σ = Λ − μI` defining the energy-adaptive metric.
#[derive(Debug, Clone)]
pub struct ShiftSpec {
    sigma: Vec<HermMatrix>,
    mu: f64,
}

impl ShiftSpec {
    pub fn sigma(&self) -> &[HermMatrix] {
        &self.sigma
    }

    pub fn block(&self, k: usize) -> &HermMatrix {
        &self.sigma[k]
    }

    pub fn num_blocks(&self) -> usize {
        self.sigma.len()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

/// Build the corrected shift `Σ = Λ − μI` per block.
pub fn build_shift(lambda: &[HermMatrix], mu: f64) -> Result<ShiftSpec, EaError> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(EaError::BadParameter(format!(
            "shift correction must be finite and positive, got {mu}"
        )));
    }
    let sigma = lambda
        .iter()
        .map(|lam| {
            let p = lam.dim();
            let m = lam.as_matrix() - CMatrix::identity(p, p).scale(mu);
            HermMatrix::new(m)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ShiftSpec { sigma, mu })
}

fn check_shift_shapes(sigma: &ShiftSpec, v: &BlockMat) -> Result<(), EaError> {
    if sigma.num_blocks() != v.num_blocks() {
        return Err(EaError::ShapeMismatch(format!(
            "{} shift blocks for {} matrix blocks",
            sigma.num_blocks(),
            v.num_blocks()
        )));
    }
    for (k, s) in sigma.sigma().iter().enumerate() {
        if v.block(k).ncols() != s.dim() {
            return Err(EaError::ShapeMismatch(format!(
                "block {k} has {} columns for a {}×{} shift",
                v.block(k).ncols(),
                s.dim(),
                s.dim()
            )));
        }
    }
    Ok(())
}

/// Apply the shifted Hamiltonian `v ↦ H v − v Σ` block-wise.
pub fn apply_shifted(
    ham: &Hamiltonian<'_>,
    sigma: &ShiftSpec,
    v: &BlockMat,
) -> Result<BlockMat, EaError> {
    check_shift_shapes(sigma, v)?;
    let hv = ham.apply(v)?;
    let blocks = hv
        .blocks()
        .iter()
        .zip(v.blocks())
        .zip(sigma.sigma())
        .map(|((hvk, vk), s)| hvk - vk * s.as_matrix())
        .collect();
    Ok(BlockMat::new(blocks))
}

/// The energy-adaptive inner product `g(η, ξ) = ⟨H_{φ,Σ}(η), ξ⟩` (real
/// pairing). Symmetric because the shifted operator is Hermitian; positive
/// on tangent vectors wherever the shift is coercive.
pub fn ea_inner(
    ham: &Hamiltonian<'_>,
    sigma: &ShiftSpec,
    eta: &Tangent,
    xi: &Tangent,
) -> Result<f64, EaError> {
    let lhs = apply_shifted(ham, sigma, eta.as_mat())?;
    Ok(real_pairing(&lhs, xi.as_mat()))
}

/// The energy-adaptive gradient `G = φ − x⟨φ,x⟩⁻¹` from an (approximate)
/// Sylvester solution `x`; horizontal by construction.
pub fn ea_gradient(phi: &Frame, x: &BlockMat) -> Result<Tangent, EaError> {
    if !phi.as_mat().same_shape(x) {
        return Err(EaError::ShapeMismatch(
            "Sylvester solution does not match the frame shape".into(),
        ));
    }
    let blocks = phi
        .blocks()
        .iter()
        .zip(x.blocks())
        .map(|(f, xk)| {
            let gram = f.adjoint() * xk;
            let svals = gram.singular_values();
            let smax = svals.max();
            let smin = svals.min();
            if !(smin > 0.0) || smax / smin > GRAM_COND_LIMIT {
                let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
                return Err(EaError::IllConditionedGram { cond });
            }
            let gram_inv = gram
                .lu()
                .try_inverse()
                .ok_or(EaError::IllConditionedGram { cond: smax / smin })?;
            Ok(f - xk * gram_inv)
        })
        .collect::<Result<Vec<_>, EaError>>()?;
    Ok(Tangent::new(BlockMat::new(blocks)))
}

/// Settings for the preconditioned block FOM Sylvester solver.
#[derive(Debug, Clone)]
pub struct FomConfig {
    /// Termination threshold on `‖residual‖_F / ‖initial residual‖_F`.
    pub rel_tol: f64,
    /// Cap on block-Krylov iterations per block.
    pub max_block_iters: usize,
    /// Rank-revealing QR drop tolerance for basis extension.
    pub qr_drop_tol: f64,
}

impl Default for FomConfig {
    fn default() -> Self {
        FomConfig {
            rel_tol: 2.5e-2,
            max_block_iters: 20,
            qr_drop_tol: DEFAULT_QR_DROP_TOL,
        }
    }
}

/// Per-run diagnostics of a [`fom_solve`] call.
#[derive(Debug, Clone, Default)]
pub struct FomStats {
    /// Block-Krylov iterations spent per block.
    pub block_iters: Vec<usize>,
    /// Final relative residual per block.
    pub block_relres: Vec<f64>,
    /// All blocks reached `rel_tol`.
    pub converged: bool,
    /// Some block stopped growing (or hit the iteration cap) above `rel_tol`;
    /// the returned iterate is the best one seen.
    pub stagnated: bool,
}

/// Solve the block Sylvester system `H x − x Σ = rhs` with a preconditioned
/// block FOM iteration, independently per block.
///
/// `x0` is the initial guess; `hx0`, when given, must equal `H·x0` and saves
/// the corresponding application. Returns the final iterate together with
/// per-block statistics; stagnation is reported in the stats rather than as
/// an error, since a slightly inexact direction is still usable.
pub fn fom_solve(
    ham: &Hamiltonian<'_>,
    sigma: &ShiftSpec,
    rhs: &BlockMat,
    x0: &BlockMat,
    hx0: Option<&BlockMat>,
    cfg: &FomConfig,
    precond: &TpaPreconditioner,
) -> Result<(BlockMat, FomStats), EaError> {
    if !(cfg.rel_tol > 0.0 && cfg.rel_tol < 1.0) {
        return Err(EaError::BadParameter(format!(
            "FOM relative tolerance must lie in (0,1), got {}",
            cfg.rel_tol
        )));
    }
    if !rhs.same_shape(x0) {
        return Err(EaError::ShapeMismatch(
            "FOM initial guess does not match the right-hand side".into(),
        ));
    }
    check_shift_shapes(sigma, rhs)?;

    let mut stats = FomStats {
        converged: true,
        ..FomStats::default()
    };
    let mut out_blocks = Vec::with_capacity(rhs.num_blocks());
    for k in 0..rhs.num_blocks() {
        let hx0_k = match hx0 {
            Some(h) => h.block(k).clone(),
            None => ham.apply_block(k, x0.block(k))?,
        };
        let (x, iters, relres, ok) =
            fom_block(ham, sigma, k, rhs.block(k), x0.block(k), hx0_k, cfg, precond)?;
        stats.block_iters.push(iters);
        stats.block_relres.push(relres);
        if !ok {
            stats.converged = false;
            stats.stagnated = true;
        }
        out_blocks.push(x);
    }
    Ok((BlockMat::new(out_blocks), stats))
}

/// One block of the FOM iteration. Returns `(x, iterations, relres, converged)`.
#[allow(clippy::too_many_arguments)]
fn fom_block(
    ham: &Hamiltonian<'_>,
    sigma: &ShiftSpec,
    k: usize,
    rhs: &CMatrix,
    x0: &CMatrix,
    hx0: CMatrix,
    cfg: &FomConfig,
    precond: &TpaPreconditioner,
) -> Result<(CMatrix, usize, f64, bool), EaError> {
    let sig = sigma.block(k).as_matrix();
    let c_mat = rhs - (&hx0 - x0 * sig);
    let c_norm = c_mat.norm();
    if c_norm <= f64::MIN_POSITIVE {
        return Ok((x0.clone(), 0, 0.0, true));
    }

    // Initial basis from the preconditioned residual.
    let r0 = precond.apply_block(k, &c_mat)?;
    let (v1, q1) = rank_revealing_qr(&r0, cfg.qr_drop_tol);
    if q1 == 0 {
        return Ok((x0.clone(), 0, 1.0, false));
    }
    let mut v = v1;
    let mut w = ham.apply_block(k, &v)?;
    let mut a = hermitian_part(&(v.adjoint() * &w));
    let mut c_proj = v.adjoint() * &c_mat;

    let mut best: Option<(f64, CMatrix)> = None;
    for j in 1..=cfg.max_block_iters {
        let a_herm = HermMatrix::new(a.clone())?;
        let y = solve_small_sylvester(&a_herm, sigma.block(k), &c_proj)?;
        let x = x0 + &v * &y;
        // Residual of the full system; exact because `w = H v` column-wise.
        let f_res = &c_mat - (&w * &y - &v * (&y * sig));
        let relres = f_res.norm() / c_norm;
        if best.as_ref().map_or(true, |(b, _)| relres < *b) {
            best = Some((relres, x));
        }
        if relres <= cfg.rel_tol {
            let (r, x) = best.unwrap();
            return Ok((x, j, r, true));
        }
        if j == cfg.max_block_iters {
            break;
        }

        // Deflated basis extension: project the preconditioned residual
        // against the current basis before the rank-revealing QR.
        let mut r_defl = precond.apply_block(k, &f_res)?;
        r_defl -= &v * (v.adjoint() * &r_defl);
        let (v_new, q_new) = rank_revealing_qr(&r_defl, cfg.qr_drop_tol);
        if q_new == 0 {
            let (r, x) = best.unwrap();
            return Ok((x, j, r, false));
        }
        let w_new = ham.apply_block(k, &v_new)?;
        let cross = v.adjoint() * &w_new;
        let diag = hermitian_part(&(v_new.adjoint() * &w_new));
        a = block_2x2(&a, &cross, &cross.adjoint(), &diag);
        c_proj = vcat(&c_proj, &(v_new.adjoint() * &c_mat));
        v = hcat(&v, &v_new);
        w = hcat(&w, &w_new);
    }
    let (r, x) = best.unwrap();
    Ok((x, cfg.max_block_iters, r, false))
}

fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

fn hcat(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((0, a.ncols()), (b.nrows(), b.ncols())).copy_from(b);
    out
}

fn vcat(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((a.nrows(), 0), (b.nrows(), b.ncols())).copy_from(b);
    out
}

fn block_2x2(a: &CMatrix, b: &CMatrix, c: &CMatrix, d: &CMatrix) -> CMatrix {
    let (qa, qb) = (a.nrows(), d.nrows());
    let mut out = CMatrix::zeros(qa + qb, qa + qb);
    out.view_mut((0, 0), (qa, qa)).copy_from(a);
    out.view_mut((0, qa), (qa, qb)).copy_from(b);
    out.view_mut((qa, 0), (qb, qa)).copy_from(c);
    out.view_mut((qa, qa), (qb, qb)).copy_from(d);
    out
}

// ---------------------------------------------------------------------------
// Dense oracles (small bases only).
// ---------------------------------------------------------------------------

/// Dense-eigendecomposition realization of the shifted operator on every
/// block: exact solves, exact projections, exact gradients, and projected
/// quadratic-form spectra. Test oracle — cost is cubic in the block size.
pub struct DenseShiftedOracle {
    h_dense: Vec<CMatrix>,
    h_eigs: Vec<HermEig>,
    s_eigs: Vec<HermEig>,
    sigma: Vec<CMatrix>,
}

impl DenseShiftedOracle {
    pub fn new(ham: &Hamiltonian<'_>, sigma: &ShiftSpec) -> Result<Self, EaError> {
        let kblocks = ham.model().num_blocks();
        if sigma.num_blocks() != kblocks {
            return Err(EaError::ShapeMismatch(format!(
                "{} shift blocks for {} momentum blocks",
                sigma.num_blocks(),
                kblocks
            )));
        }
        let mut h_dense = Vec::with_capacity(kblocks);
        let mut h_eigs = Vec::with_capacity(kblocks);
        let mut s_eigs = Vec::with_capacity(kblocks);
        let mut sig = Vec::with_capacity(kblocks);
        for k in 0..kblocks {
            let h = ham.assemble_dense(k)?;
            h_eigs.push(herm_eig(&h)?);
            h_dense.push(h.into_matrix());
            s_eigs.push(herm_eig(sigma.block(k))?);
            sig.push(sigma.block(k).as_matrix().clone());
        }
        Ok(DenseShiftedOracle {
            h_dense,
            h_eigs,
            s_eigs,
            sigma: sig,
        })
    }

    /// Eigenvalues (ascending) of the dense Hamiltonian of block `k`.
    pub fn hamiltonian_eigenvalues(&self, k: usize) -> &DVector<f64> {
        &self.h_eigs[k].values
    }

    /// Dense `H b − b Σ` on one block.
    pub fn apply_block(&self, k: usize, b: &CMatrix) -> CMatrix {
        &self.h_dense[k] * b - b * &self.sigma[k]
    }

    pub fn apply(&self, v: &BlockMat) -> BlockMat {
        let blocks = v
            .blocks()
            .iter()
            .enumerate()
            .map(|(k, b)| self.apply_block(k, b))
            .collect();
        BlockMat::new(blocks)
    }

    /// Exact solve of `H x − x Σ = b` on one block via eigen-division.
    pub fn solve_block(&self, k: usize, b: &CMatrix) -> Result<CMatrix, EaError> {
        Ok(sylvester_from_eigs(&self.h_eigs[k], &self.s_eigs[k], b)?)
    }

    pub fn solve(&self, v: &BlockMat) -> Result<BlockMat, EaError> {
        let blocks = v
            .blocks()
            .iter()
            .enumerate()
            .map(|(k, b)| self.solve_block(k, b))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BlockMat::new(blocks))
    }

    /// The Hermitian matrix `X_φ` solving the variational normalization
    /// `⟨H⁻¹(φX), φ⟩ + ⟨φ, H⁻¹(φX)⟩ = 2I`, one per block.
    pub fn xphi(&self, phi: &Frame) -> Result<Vec<HermMatrix>, EaError> {
        let p = phi.p();
        let rhs = vec![CMatrix::identity(p, p).scale(2.0); phi.num_blocks()];
        self.solve_variational(phi, &rhs)
    }

    /// The Hermitian `X_v` for a general direction: right-hand side
    /// `⟨v,φ⟩ + ⟨φ,v⟩` per block.
    pub fn xv(&self, phi: &Frame, v: &BlockMat) -> Result<Vec<HermMatrix>, EaError> {
        let rhs = phi
            .blocks()
            .iter()
            .zip(v.blocks())
            .map(|(f, vk)| {
                let a = f.adjoint() * vk;
                &a + a.adjoint()
            })
            .collect::<Vec<_>>();
        self.solve_variational(phi, &rhs)
    }

    /// The exact energy-adaptive projection `P(v) = v − H⁻¹(φ X_v)`.
    pub fn project(&self, phi: &Frame, v: &BlockMat) -> Result<Tangent, EaError> {
        let xv = self.xv(phi, v)?;
        let blocks = v
            .blocks()
            .iter()
            .enumerate()
            .map(|(k, vk)| {
                let img = self.solve_block(k, &(phi.blocks()[k].clone() * xv[k].as_matrix()))?;
                Ok(vk - img)
            })
            .collect::<Result<Vec<_>, EaError>>()?;
        Ok(Tangent::new(BlockMat::new(blocks)))
    }

    /// The exact energy-adaptive gradient `G = φ − H⁻¹(φ X_φ)`.
    pub fn exact_gradient(&self, phi: &Frame) -> Result<Tangent, EaError> {
        let xphi = self.xphi(phi)?;
        let blocks = phi
            .blocks()
            .iter()
            .enumerate()
            .map(|(k, f)| {
                let img = self.solve_block(k, &(f.clone() * xphi[k].as_matrix()))?;
                Ok(f - img)
            })
            .collect::<Result<Vec<_>, EaError>>()?;
        Ok(Tangent::new(BlockMat::new(blocks)))
    }

    /// Solve the per-block real-linear system `L(X) = R` over Hermitian `X`,
    /// where `L(X) = ⟨H⁻¹(φX), φ⟩ + ⟨φ, H⁻¹(φX)⟩`.
    fn solve_variational(
        &self,
        phi: &Frame,
        rhs: &[CMatrix],
    ) -> Result<Vec<HermMatrix>, EaError> {
        let p = phi.p();
        let basis = hermitian_basis(p);
        let dim = basis.len();
        let mut out = Vec::with_capacity(phi.num_blocks());
        for (k, f) in phi.blocks().iter().enumerate() {
            let mut m = DMatrix::<f64>::zeros(dim, dim);
            for (a, e) in basis.iter().enumerate() {
                let img = self.solve_block(k, &(f.clone() * e))?;
                let half = f.adjoint() * &img;
                let l = &half + half.adjoint();
                for (b, eb) in basis.iter().enumerate() {
                    m[(b, a)] = re_inner(eb, &l);
                }
            }
            let r = DVector::from_iterator(dim, basis.iter().map(|eb| re_inner(eb, &rhs[k])));
            let x = m
                .lu()
                .solve(&r)
                .ok_or_else(|| EaError::SingularOracle("variational system has no solution".into()))?;
            let mut xk = CMatrix::zeros(p, p);
            for (a, e) in basis.iter().enumerate() {
                xk += e.scale(x[a]);
            }
            out.push(HermMatrix::new(xk)?);
        }
        Ok(out)
    }

    /// Eigenvalues (ascending) of the quadratic form `v ↦ ⟨H_Σ(v), v⟩`
    /// restricted to the real span of `vectors` (assumed orthonormal under
    /// the real pairing).
    pub fn form_spectrum(&self, vectors: &[BlockMat]) -> Result<Vec<f64>, EaError> {
        let dim = vectors.len();
        if dim == 0 {
            return Ok(Vec::new());
        }
        let images: Vec<BlockMat> = vectors.iter().map(|v| self.apply(v)).collect();
        let mut m = DMatrix::<f64>::zeros(dim, dim);
        for a in 0..dim {
            for b in 0..dim {
                m[(a, b)] = real_pairing(&images[a], &vectors[b]);
            }
        }
        let sym = (&m + m.transpose()).scale(0.5);
        let eig = nalgebra::linalg::SymmetricEigen::new(sym);
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(f64::total_cmp);
        Ok(vals)
    }
}

fn re_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.dotc(b).re
}

/// Orthonormal basis of the Hermitian `p×p` matrices under `Re tr(A†B)`:
/// diagonal units, then symmetric and antisymmetric off-diagonal pairs.
pub fn hermitian_basis(p: usize) -> Vec<CMatrix> {
    let mut basis = Vec::with_capacity(p * p);
    for i in 0..p {
        let mut e = CMatrix::zeros(p, p);
        e[(i, i)] = C64::new(1.0, 0.0);
        basis.push(e);
    }
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..p {
        for j in (i + 1)..p {
            let mut e = CMatrix::zeros(p, p);
            e[(i, j)] = C64::new(inv_sqrt2, 0.0);
            e[(j, i)] = C64::new(inv_sqrt2, 0.0);
            basis.push(e);
            let mut e = CMatrix::zeros(p, p);
            e[(i, j)] = C64::new(0.0, inv_sqrt2);
            e[(j, i)] = C64::new(0.0, -inv_sqrt2);
            basis.push(e);
        }
    }
    basis
}

/// Orthonormal basis of the skew-Hermitian `p×p` matrices under `Re tr(A†B)`.
pub fn skew_hermitian_basis(p: usize) -> Vec<CMatrix> {
    hermitian_basis(p)
        .into_iter()
        .map(|e| e.map(|z| z * C64::new(0.0, 1.0)))
        .collect()
}

/// Real-orthonormal basis of the horizontal tangent subspace at `phi`:
/// directions `B Z` with `B` spanning the orthogonal complement of each
/// block's column space. `2(n_k − p)·p` elements per block, embedded into
/// the product space with zero blocks elsewhere.
pub fn horizontal_tangent_basis(phi: &Frame) -> Vec<BlockMat> {
    let p = phi.p();
    let dims = phi.block_dims();
    let mut out = Vec::new();
    for (k, f) in phi.blocks().iter().enumerate() {
        let n = dims[k];
        let proj = CMatrix::identity(n, n) - f * f.adjoint();
        let (b, rank) = rank_revealing_qr(&proj, 1e-8);
        assert_eq!(rank, n - p, "complement basis has the wrong dimension");
        for a in 0..rank {
            for j in 0..p {
                for unit in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                    let mut block = CMatrix::zeros(n, p);
                    for i in 0..n {
                        block[(i, j)] = unit * b[(i, a)];
                    }
                    out.push(embed_block(&dims, p, k, block));
                }
            }
        }
    }
    out
}

/// Real-orthonormal basis of the vertical (gauge) subspace at `phi`:
/// directions `φM` with `M` skew-Hermitian. `p²` elements per block.
pub fn vertical_tangent_basis(phi: &Frame) -> Vec<BlockMat> {
    let p = phi.p();
    let dims = phi.block_dims();
    let mut out = Vec::new();
    for (k, f) in phi.blocks().iter().enumerate() {
        for m in skew_hermitian_basis(p) {
            out.push(embed_block(&dims, p, k, f * m));
        }
    }
    out
}

fn embed_block(dims: &[usize], p: usize, k: usize, block: CMatrix) -> BlockMat {
    let blocks = dims
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            if i == k {
                block.clone()
            } else {
                CMatrix::zeros(n, p)
            }
        })
        .collect();
    BlockMat::new(blocks)
}

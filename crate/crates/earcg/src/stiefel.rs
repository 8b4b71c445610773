//! Product Stiefel manifold geometry: frames, tangents, the polar retraction
//! and its differentiated vector transport.
//!
//! A point is a *frame* `Φ = (Φ_1, …, Φ_K)` with `Φ_k ∈ C^{n_k×p}` and
//! `Φ_k* Φ_k = I_p` per block; tangent vectors satisfy
//! `Φ_k* H_k + H_k* Φ_k = 0`. All maps act block-wise.
//!
//! **Polar retraction.** `R_Φ(η) = pf(Φ + η)` where `pf(ψ) = ψ (ψ*ψ)^{-1/2}`
//! is the polar factor. For tangent `η` the Gram matrix simplifies to
//! `⟨ψ,ψ⟩ = I + τ²⟨η,η⟩` along the ray `ψ = Φ + τη`, which is what
//! [`polar_transport`] exploits.
//!
//! **Differentiated retraction.** With `sf(ψ) = (ψ*ψ)^{1/2}`, the derivative
//! of the polar factor is
//! `dpf(ψ)[v] = (v − pf(ψ) X) sf(ψ)^{-1}` where `X` solves the Lyapunov
//! equation `sf(ψ) X + X sf(ψ) = ⟨ψ,v⟩ + ⟨v,ψ⟩`. Transporting the search
//! direction along its own retraction has the closed form
//! `T_{τη}(η) = η S^{-1} − τ R_Φ(τη) ⟨η S^{-1}, η S^{-1}⟩` with
//! `S = sf(Φ + τη)`.

use crate::matcore::{herm_eig, HermEig, HermMatrix, MatError};
use crate::{C64, CMatrix};
use rand::Rng;

/// Absolute floor on the smallest Gram eigenvalue before a polar factor (and
/// hence a retraction or transport) is declared rank-deficient.
pub const RANK_FLOOR: f64 = 1e-13;

/// Default orthonormality tolerance for frame validation.
pub const ORTHO_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("rank-deficient update: smallest Gram eigenvalue {min_eig:.3e}")]
    RankDeficient { min_eig: f64 },
    #[error("frame columns are not orthonormal (deviation {dev:.3e})")]
    NotOrthonormal { dev: f64 },
    #[error("block structure mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Mat(#[from] MatError),
}

/// A block matrix: one `n_k×p` complex matrix per momentum block.
///
/// This is the shared carrier for frames, tangents, residuals, and solver
/// right-hand sides; the typed wrappers [`Frame`] and [`Tangent`] add the
/// manifold semantics on top.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMat {
    blocks: Vec<CMatrix>,
}

impl BlockMat {
    pub fn new(blocks: Vec<CMatrix>) -> Self {
        debug_assert!(!blocks.is_empty(), "a block matrix needs at least one block");
        debug_assert!(
            blocks.windows(2).all(|w| w[0].ncols() == w[1].ncols()),
            "all blocks must share the column count"
        );
        BlockMat { blocks }
    }

    pub fn zeros_like(other: &BlockMat) -> Self {
        BlockMat {
            blocks: other
                .blocks
                .iter()
                .map(|b| CMatrix::zeros(b.nrows(), b.ncols()))
                .collect(),
        }
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &CMatrix {
        &self.blocks[k]
    }

    pub fn block_mut(&mut self, k: usize) -> &mut CMatrix {
        &mut self.blocks[k]
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Shared column count.
    pub fn p(&self) -> usize {
        self.blocks[0].ncols()
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.nrows()).collect()
    }

    pub fn same_shape(&self, other: &BlockMat) -> bool {
        self.blocks.len() == other.blocks.len()
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|(a, b)| a.shape() == b.shape())
    }

    pub fn scale(&self, s: f64) -> BlockMat {
        BlockMat {
            blocks: self.blocks.iter().map(|b| b.scale(s)).collect(),
        }
    }

    /// `self + s · other`.
    pub fn add_scaled(&self, s: f64, other: &BlockMat) -> BlockMat {
        debug_assert!(self.same_shape(other));
        BlockMat {
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a + b.scale(s))
                .collect(),
        }
    }

    pub fn sub(&self, other: &BlockMat) -> BlockMat {
        self.add_scaled(-1.0, other)
    }

    /// Right-multiply each block by the matching small matrix: `v_k M_k`.
    pub fn mul_small(&self, ms: &[CMatrix]) -> BlockMat {
        debug_assert_eq!(self.blocks.len(), ms.len());
        BlockMat {
            blocks: self
                .blocks
                .iter()
                .zip(ms)
                .map(|(b, m)| b * m)
                .collect(),
        }
    }

    /// Global Frobenius norm across all blocks.
    pub fn norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    pub fn block_norms(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.norm()).collect()
    }

    pub fn max_block_norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm()).fold(0.0, f64::max)
    }
}

/// Block-wise outer products `⟨v_k, w_k⟩ = v_k* w_k` (each `p×p`).
pub fn outer(v: &BlockMat, w: &BlockMat) -> Vec<CMatrix> {
    debug_assert!(v.same_shape(w));
    v.blocks
        .iter()
        .zip(&w.blocks)
        .map(|(a, b)| a.adjoint() * b)
        .collect()
}

/// Real duality pairing `⟨v, w⟩_R = Σ_k Re tr(v_k* w_k)`.
pub fn real_pairing(v: &BlockMat, w: &BlockMat) -> f64 {
    debug_assert!(v.same_shape(w));
    v.blocks
        .iter()
        .zip(&w.blocks)
        .map(|(a, b)| a.dotc(b).re)
        .sum()
}

/// A point on the product Stiefel manifold: orthonormal columns per block.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    mat: BlockMat,
}

impl Frame {
    /// Validate orthonormality (tolerance [`ORTHO_TOL`]) and wrap.
    pub fn from_blocks(blocks: Vec<CMatrix>) -> Result<Self, GeometryError> {
        let frame = Frame {
            mat: BlockMat::new(blocks),
        };
        let dev = frame.orthonormality_error();
        if dev > ORTHO_TOL {
            return Err(GeometryError::NotOrthonormal { dev });
        }
        Ok(frame)
    }

    /// Wrap without validation; for internal constructions that are
    /// orthonormal by construction (retraction output, eigenvector columns).
    pub fn from_blocks_unchecked(blocks: Vec<CMatrix>) -> Self {
        let frame = Frame {
            mat: BlockMat::new(blocks),
        };
        debug_assert!(
            frame.orthonormality_error() <= ORTHO_TOL,
            "unchecked frame violates orthonormality: {:.3e}",
            frame.orthonormality_error()
        );
        frame
    }

    pub fn as_mat(&self) -> &BlockMat {
        &self.mat
    }

    pub fn blocks(&self) -> &[CMatrix] {
        self.mat.blocks()
    }

    pub fn num_blocks(&self) -> usize {
        self.mat.num_blocks()
    }

    pub fn p(&self) -> usize {
        self.mat.p()
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.mat.block_dims()
    }

    /// `max_k ‖Φ_k*Φ_k − I‖_F`.
    pub fn orthonormality_error(&self) -> f64 {
        let p = self.p();
        let id = CMatrix::identity(p, p);
        self.mat
            .blocks()
            .iter()
            .map(|b| (b.adjoint() * b - &id).norm())
            .fold(0.0, f64::max)
    }
}

/// A tangent vector attached (by convention, not by type) to some frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    mat: BlockMat,
}

impl Tangent {
    pub fn new(mat: BlockMat) -> Self {
        Tangent { mat }
    }

    pub fn as_mat(&self) -> &BlockMat {
        &self.mat
    }

    pub fn into_mat(self) -> BlockMat {
        self.mat
    }

    pub fn scale(&self, s: f64) -> Tangent {
        Tangent {
            mat: self.mat.scale(s),
        }
    }

    pub fn norm(&self) -> f64 {
        self.mat.norm()
    }
}

/// Is `phi` on the manifold, up to `tol`?
pub fn is_on_manifold(phi: &Frame, tol: f64) -> bool {
    phi.orthonormality_error() <= tol
}

/// Is `eta` tangent at `phi`, up to `tol` (absolute, on the symmetrized
/// Gram `⟨Φ,η⟩ + ⟨η,Φ⟩`)?
pub fn is_tangent(phi: &Frame, eta: &Tangent, tol: f64) -> bool {
    if !phi.as_mat().same_shape(eta.as_mat()) {
        return false;
    }
    phi.blocks()
        .iter()
        .zip(eta.as_mat().blocks())
        .map(|(f, e)| {
            let g = f.adjoint() * e;
            (&g + g.adjoint()).norm()
        })
        .fold(0.0, f64::max)
        <= tol
}

/// Polar retraction `R_Φ(η) = pf(Φ + η)` via the full Gram matrix of `Φ + η`.
///
/// Robust to non-tangent `η`; fails if `Φ + η` loses rank.
pub fn polar_retract(phi: &Frame, eta: &Tangent) -> Result<Frame, GeometryError> {
    check_shapes(phi.as_mat(), eta.as_mat(), "polar_retract")?;
    let psi = phi.as_mat().add_scaled(1.0, eta.as_mat());
    let mut blocks = Vec::with_capacity(psi.num_blocks());
    for b in psi.blocks() {
        let gram = HermMatrix::new(b.adjoint() * b)?;
        let eig = herm_eig(&gram)?;
        let min_eig = eig.values[0];
        if min_eig <= RANK_FLOOR {
            return Err(GeometryError::RankDeficient { min_eig });
        }
        blocks.push(polish(b * inv_sqrt(&eig))?);
    }
    Ok(Frame::from_blocks_unchecked(blocks))
}

/// Retract `Φ + τη` **and** transport `η` to the new point in one pass.
///
/// Uses the tangent-ray Gram identity `⟨ψ,ψ⟩ = I + τ²⟨η,η⟩`, so both outputs
/// share the same polar factor `S`. Returns `(R_Φ(τη), T_{τη}(η))`.
pub fn retract_transport_scaled(
    phi: &Frame,
    tau: f64,
    eta: &Tangent,
) -> Result<(Frame, Tangent), GeometryError> {
    check_shapes(phi.as_mat(), eta.as_mat(), "retract_transport_scaled")?;
    debug_assert!(
        is_tangent(phi, eta, 1e-6 * (1.0 + eta.norm())),
        "retract_transport_scaled expects a tangent direction"
    );
    let p = phi.p();
    let id = CMatrix::identity(p, p);
    let mut frame_blocks = Vec::with_capacity(phi.num_blocks());
    let mut transport_blocks = Vec::with_capacity(phi.num_blocks());
    for (f, e) in phi.blocks().iter().zip(eta.as_mat().blocks()) {
        let a = e.adjoint() * e;
        let gram = HermMatrix::new(&id + a.scale(tau * tau))?;
        let eig = herm_eig(&gram)?;
        let min_eig = eig.values[0];
        if min_eig <= RANK_FLOOR {
            return Err(GeometryError::RankDeficient { min_eig });
        }
        let s_inv = inv_sqrt(&eig);
        let retracted = polish((f + e.scale(tau)) * &s_inv)?;
        let eta_sinv = e * &s_inv;
        let inner = eta_sinv.adjoint() * &eta_sinv;
        let transported = &eta_sinv - (&retracted * inner).scale(tau);
        frame_blocks.push(retracted);
        transport_blocks.push(transported);
    }
    Ok((
        Frame::from_blocks_unchecked(frame_blocks),
        Tangent::new(BlockMat::new(transport_blocks)),
    ))
}

/// Transport of the search direction along its own retraction:
/// `T_{τη}(η) = η S^{-1} − τ R_Φ(τη) ⟨η S^{-1}, η S^{-1}⟩`.
pub fn polar_transport(phi: &Frame, tau: f64, eta: &Tangent) -> Result<Tangent, GeometryError> {
    retract_transport_scaled(phi, tau, eta).map(|(_, t)| t)
}

/// Derivative of the polar factor: `dpf(ψ)[v] = (v − pf(ψ) X) sf(ψ)^{-1}`
/// with `sf(ψ) X + X sf(ψ) = ⟨ψ,v⟩ + ⟨v,ψ⟩`.
pub fn dpf(psi: &BlockMat, v: &BlockMat) -> Result<BlockMat, GeometryError> {
    check_shapes(psi, v, "dpf")?;
    let mut blocks = Vec::with_capacity(psi.num_blocks());
    for (b, vb) in psi.blocks().iter().zip(v.blocks()) {
        let gram = HermMatrix::new(b.adjoint() * b)?;
        let eig = herm_eig(&gram)?;
        let min_eig = eig.values[0];
        if min_eig <= RANK_FLOOR {
            return Err(GeometryError::RankDeficient { min_eig });
        }
        // sf, sf^{-1}, pf share the Gram eigenbasis.
        let sqrt_eig = HermEig {
            values: eig.values.map(f64::sqrt),
            vectors: eig.vectors.clone(),
        };
        let sf_inv = sqrt_eig.assemble(|d| 1.0 / d);
        let pf = b * &sf_inv;
        let bv = b.adjoint() * vb;
        let rhs = &bv + bv.adjoint();
        let x = crate::matcore::solve_lyapunov_with(&sqrt_eig, &rhs);
        blocks.push((vb - pf * x) * &sf_inv);
    }
    Ok(BlockMat::new(blocks))
}

/// General vector transport along the polar retraction:
/// `T_{τη}(ξ) = dpf(Φ + τη)[ξ]`.
pub fn vector_transport(
    phi: &Frame,
    tau: f64,
    eta: &Tangent,
    xi: &Tangent,
) -> Result<Tangent, GeometryError> {
    let psi = phi.as_mat().add_scaled(tau, eta.as_mat());
    dpf(&psi, xi.as_mat()).map(Tangent::new)
}

/// `V f(diag(d))^{-1/2} V*` from a Gram eigendecomposition.
fn inv_sqrt(eig: &HermEig) -> CMatrix {
    eig.assemble(|d| 1.0 / d.sqrt())
}

/// Second polar pass on a nearly orthonormal block. The Gram matrix is within
/// round-off of the identity, so this sharpens orthonormality to machine
/// precision at the cost of one `p×p` eigendecomposition.
fn polish(m: CMatrix) -> Result<CMatrix, GeometryError> {
    let gram = HermMatrix::new(m.adjoint() * &m)?;
    let eig = herm_eig(&gram)?;
    Ok(&m * inv_sqrt(&eig))
}

fn check_shapes(a: &BlockMat, b: &BlockMat, op: &str) -> Result<(), GeometryError> {
    if !a.same_shape(b) {
        return Err(GeometryError::ShapeMismatch(format!(
            "{op}: blocks {:?} vs {:?}",
            a.blocks().iter().map(|m| m.shape()).collect::<Vec<_>>(),
            b.blocks().iter().map(|m| m.shape()).collect::<Vec<_>>(),
        )));
    }
    Ok(())
}

/// Random frame with orthonormal columns per block (complex Gaussian entries,
/// then orthonormalization). Deterministic for a fixed RNG state.
pub fn random_frame(block_dims: &[usize], p: usize, rng: &mut impl Rng) -> Frame {
    let blocks = block_dims
        .iter()
        .map(|&n| {
            assert!(n >= p, "block dimension {n} below band count {p}");
            loop {
                let raw = CMatrix::from_fn(n, p, |_, _| {
                    C64::new(standard_normal(rng), standard_normal(rng))
                });
                let (q, rank) = crate::matcore::rank_revealing_qr(&raw, 1e-12);
                if rank == p {
                    return q;
                }
            }
        })
        .collect();
    Frame::from_blocks_unchecked(blocks)
}

/// Random tangent vector at `phi`: project a Gaussian block matrix onto the
/// tangent space via `Z − Φ sym(⟨Φ,Z⟩)` with `sym(M) = (M + M*)/2`.
pub fn random_tangent(phi: &Frame, rng: &mut impl Rng) -> Tangent {
    let blocks = phi
        .blocks()
        .iter()
        .map(|f| {
            let z = CMatrix::from_fn(f.nrows(), f.ncols(), |_, _| {
                C64::new(standard_normal(rng), standard_normal(rng))
            });
            let g = f.adjoint() * &z;
            let sym = (&g + g.adjoint()).scale(0.5);
            &z - f * sym
        })
        .collect();
    Tangent::new(BlockMat::new(blocks))
}

pub(crate) fn standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller; avoids an extra distribution dependency.
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    let v: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    (-2.0 * u.ln()).sqrt() * v.cos()
}

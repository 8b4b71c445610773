//! Discrete Kohn–Sham-type models: plane-wave discretization, density,
//! energy functional, Hamiltonian application, and the TPA preconditioner.
//!
//! The energy of a frame `Φ = (φ_1,…,φ_p)` (per momentum block, equal
//! weights) is
//!
//! ```text
//! E(Φ) = ½ Σ ‖∇φ_j‖²  +  K·[ ∫ v_ion ρ + ½∫ ρ v_H(ρ) + (κ/2)∫ρ² + c_x ∫ρ^{4/3} ]
//! ```
//!
//! with the density `ρ = (1/K) Σ_{k,j} |φ_{j,k}|²` averaged over the `K`
//! momentum blocks. The associated Hamiltonian pairs with the energy through
//! `DE(Φ)[W] = real_pairing(HΦ, W)`, which fixes the factor conventions:
//! the Laplacian enters `H` unscaled (spectral symbol `|G+k|²`) and every
//! local potential enters doubled,
//!
//! ```text
//! H_φ v = −Δv + 2(v_ion + v_H(ρ) + v_xc(ρ)) v,   v_xc = κρ + (4/3)c_x ρ^{1/3}.
//! ```
//!
//! Orbitals are stored as plane-wave coefficient columns; potentials act on
//! the collocation grid via the FFT pair [`KohnShamModel::to_grid`] /
//! [`KohnShamModel::from_grid`], which are exact adjoints with respect to
//! the grid quadrature. All Hamiltonian applications are tallied by an
//! atomic [`OpCounter`] so solver traces can report cost honestly.

pub mod basis;
mod counter;
mod fft;
pub mod presets;

pub use basis::{KBlock, PlaneWaveBasis};
pub use counter::{OpCounter, OpCounts};
pub use fft::FftGrid;
pub use presets::{BuiltinModel, InitRule, PotentialSpec};

use std::sync::OnceLock;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::matcore::{HermMatrix, MatError};
use crate::parallel::par_map_indexed;
use crate::stiefel::{BlockMat, Frame};
use crate::{C64, CMatrix};

/// Largest per-block basis size for which dense Hamiltonian assembly is
/// permitted; beyond this the explicit matrix stops being a sane object.
pub const MAX_DENSE_DIM: usize = 4096;

/// Lower bound for the per-orbital TPA shift.
pub const TPA_SHIFT_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model geometry: {0}")]
    BadGeometry(String),
    #[error("grid axis {dim} needs {need} points to hold the basis without aliasing, got {have}")]
    GridTooCoarse { dim: usize, need: usize, have: usize },
    #[error("kinetic cutoff admits no plane-wave modes")]
    EmptyBasis,
    #[error("invalid coefficient: {0}")]
    BadCoefficient(String),
    #[error("potential field invalid: {0}")]
    BadPotential(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dense assembly refused: block dimension {n} exceeds the {max} guard")]
    DenseTooLarge { n: usize, max: usize },
    #[error("Hartree term is disabled in this model")]
    HartreeDisabled,
    #[error(transparent)]
    Mat(#[from] MatError),
}

/// An electron density sampled on the collocation grid, together with its
/// quadrature weight and cached integral. Values are clamped at zero from
/// below (round-off can leave `−1e-12`-sized negatives after mixing).
#[derive(Debug, Clone)]
pub struct DensityField {
    values: Vec<f64>,
    weight: f64,
    integral: f64,
}

impl DensityField {
    pub fn new(values: Vec<f64>, weight: f64) -> Self {
        let values: Vec<f64> = values
            .into_iter()
            .map(|v| {
                debug_assert!(v > -1e-9, "density value {v} is negative beyond round-off");
                v.max(0.0)
            })
            .collect();
        let integral = weight * values.iter().sum::<f64>();
        DensityField {
            values,
            weight,
            integral,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Quadrature weight of one grid point.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Cached `∫ρ`; equals the number of orbitals for a frame density.
    pub fn integral(&self) -> f64 {
        self.integral
    }

    /// Damped-mixing update `(1−α)·self + α·other`.
    pub fn mix(&self, other: &DensityField, alpha: f64) -> DensityField {
        assert_eq!(self.len(), other.len(), "mixing densities from different grids");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (1.0 - alpha) * a + alpha * b)
            .collect();
        DensityField::new(values, self.weight)
    }

    /// Quadrature `L²` distance `‖self − other‖₂`.
    pub fn l2_distance(&self, other: &DensityField) -> f64 {
        assert_eq!(self.len(), other.len(), "comparing densities from different grids");
        let sq: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        (self.weight * sq).sqrt()
    }
}

/// A plane-wave Kohn–Sham-type model: basis, external potential, and the
/// coefficients of the local nonlinearities.
#[derive(Debug)]
pub struct KohnShamModel {
    basis: PlaneWaveBasis,
    fft: FftGrid,
    v_ion: Vec<f64>,
    kappa: f64,
    c_x: f64,
    hartree_on: bool,
    /// `4π/|G|²` per grid bin, zero at `G = 0`; present iff `hartree_on`.
    hartree_kernel: Option<Vec<f64>>,
    counter: OpCounter,
}

impl KohnShamModel {
    /// Create a model from an external potential sampled on the grid
    /// (row-major) and nonlinearity coefficients `κ ≥ 0` (quadratic term)
    /// and `c_x ≤ 0` (`ρ^{4/3}` exchange-like term).
    pub fn new(
        basis: PlaneWaveBasis,
        v_ion: Vec<f64>,
        kappa: f64,
        c_x: f64,
        hartree_on: bool,
    ) -> Result<Self, ModelError> {
        if v_ion.len() != basis.n_grid() {
            return Err(ModelError::BadPotential(format!(
                "potential has {} samples for a grid of {} points",
                v_ion.len(),
                basis.n_grid()
            )));
        }
        if v_ion.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::BadPotential("non-finite sample".into()));
        }
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(ModelError::BadCoefficient(format!(
                "quadratic coefficient must be finite and ≥ 0, got {kappa}"
            )));
        }
        if !(c_x.is_finite() && c_x <= 0.0) {
            return Err(ModelError::BadCoefficient(format!(
                "exchange-like coefficient must be finite and ≤ 0, got {c_x}"
            )));
        }
        let hartree_kernel = hartree_on.then(|| build_hartree_kernel(&basis));
        let fft = FftGrid::new(basis.grid());
        Ok(KohnShamModel {
            basis,
            fft,
            v_ion,
            kappa,
            c_x,
            hartree_on,
            hartree_kernel,
            counter: OpCounter::default(),
        })
    }

    /// Create a model by sampling `v_ion` from a function of the grid point.
    pub fn with_potential_fn(
        basis: PlaneWaveBasis,
        v_ion: impl Fn(&[f64]) -> f64,
        kappa: f64,
        c_x: f64,
        hartree_on: bool,
    ) -> Result<Self, ModelError> {
        let samples = (0..basis.n_grid())
            .map(|i| v_ion(&basis.grid_point(i)))
            .collect();
        KohnShamModel::new(basis, samples, kappa, c_x, hartree_on)
    }

    pub fn basis(&self) -> &PlaneWaveBasis {
        &self.basis
    }

    pub fn v_ion(&self) -> &[f64] {
        &self.v_ion
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn c_x(&self) -> f64 {
        self.c_x
    }

    pub fn hartree_on(&self) -> bool {
        self.hartree_on
    }

    pub fn counter(&self) -> &OpCounter {
        &self.counter
    }

    /// Number of momentum blocks.
    pub fn num_blocks(&self) -> usize {
        self.basis.num_blocks()
    }

    fn check_frame(&self, phi: &Frame) {
        assert_eq!(
            phi.block_dims(),
            self.basis.block_dims(),
            "frame does not match the plane-wave basis"
        );
    }

    fn check_block_mat(&self, v: &BlockMat) -> Result<(), ModelError> {
        if v.block_dims() != self.basis.block_dims() {
            return Err(ModelError::ShapeMismatch(format!(
                "block rows {:?} do not match basis dimensions {:?}",
                v.block_dims(),
                self.basis.block_dims()
            )));
        }
        Ok(())
    }

    /// Synthesize one coefficient column of block `k` on the real grid:
    /// `φ(x_m) = |Ω|^{-1/2} Σ_G c_G e^{i(G+k)x_m}`.
    pub fn to_grid(&self, k: usize, coeffs: &[C64]) -> Result<Vec<C64>, ModelError> {
        let block = &self.basis.blocks()[k];
        if coeffs.len() != block.n_modes() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} coefficients for a block of {} modes",
                coeffs.len(),
                block.n_modes()
            )));
        }
        Ok(self.to_grid_unchecked(block, coeffs))
    }

    fn to_grid_unchecked(&self, block: &KBlock, coeffs: &[C64]) -> Vec<C64> {
        let mut grid = vec![C64::new(0.0, 0.0); self.basis.n_grid()];
        for (c, &bin) in coeffs.iter().zip(block.bins()) {
            grid[bin] = *c;
        }
        self.fft.inverse(&mut grid);
        let scale = 1.0 / self.basis.volume().sqrt();
        match block.phase() {
            Some(phase) => {
                for (g, ph) in grid.iter_mut().zip(phase) {
                    *g *= ph * scale;
                }
            }
            None => {
                for g in grid.iter_mut() {
                    *g *= scale;
                }
            }
        }
        self.counter.record_ffts(1);
        grid
    }

    /// Adjoint of [`Self::to_grid`] with respect to the grid quadrature:
    /// `from_grid(g)[G] = w Σ_m |Ω|^{-1/2} e^{-i(G+k)x_m} g(x_m)`.
    pub fn from_grid(&self, k: usize, grid: &[C64]) -> Result<Vec<C64>, ModelError> {
        let block = &self.basis.blocks()[k];
        if grid.len() != self.basis.n_grid() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} grid samples for a grid of {} points",
                grid.len(),
                self.basis.n_grid()
            )));
        }
        Ok(self.from_grid_unchecked(block, grid.to_vec()))
    }

    fn from_grid_unchecked(&self, block: &KBlock, mut grid: Vec<C64>) -> Vec<C64> {
        if let Some(phase) = block.phase() {
            for (g, ph) in grid.iter_mut().zip(phase) {
                *g *= ph.conj();
            }
        }
        self.fft.forward(&mut grid);
        let scale = self.basis.volume().sqrt() / self.basis.n_grid() as f64;
        self.counter.record_ffts(1);
        block.bins().iter().map(|&bin| grid[bin] * scale).collect()
    }

    /// Block-averaged density `ρ = (1/K) Σ_{k,j} |φ_{j,k}|²`; its integral
    /// equals the number of orbitals for an orthonormal frame.
    pub fn density(&self, phi: &Frame) -> DensityField {
        self.check_frame(phi);
        let p = phi.p();
        let kblocks = self.num_blocks();
        let tasks: Vec<(usize, usize)> = (0..kblocks)
            .flat_map(|k| (0..p).map(move |j| (k, j)))
            .collect();
        let grids = par_map_indexed(tasks.len(), |t| {
            let (k, j) = tasks[t];
            let coeffs: Vec<C64> = phi.blocks()[k].column(j).iter().copied().collect();
            self.to_grid_unchecked(&self.basis.blocks()[k], &coeffs)
        });
        let mut rho = vec![0.0f64; self.basis.n_grid()];
        for grid in &grids {
            for (r, g) in rho.iter_mut().zip(grid) {
                *r += g.norm_sqr();
            }
        }
        let inv_k = 1.0 / kblocks as f64;
        for r in rho.iter_mut() {
            *r *= inv_k;
        }
        DensityField::new(rho, self.basis.weight())
    }

    /// Spectral kinetic energy `½ Σ_{k,j} Σ_G |G+k|² |c|²`.
    pub fn kinetic_energy(&self, phi: &Frame) -> f64 {
        self.check_frame(phi);
        let mut acc = 0.0;
        for (block, mat) in self.basis.blocks().iter().zip(phi.blocks()) {
            for j in 0..mat.ncols() {
                for (g, c) in block.kin_half().iter().zip(mat.column(j).iter()) {
                    acc += g * c.norm_sqr();
                }
            }
        }
        acc
    }

    /// Periodic Hartree potential of `ρ`: `v̂_H(G) = 4π ρ̂(G)/|G|²` with the
    /// neutralizing gauge `v̂_H(0) = 0`.
    pub fn hartree_potential(&self, rho: &DensityField) -> Result<Vec<f64>, ModelError> {
        let kernel = self
            .hartree_kernel
            .as_ref()
            .ok_or(ModelError::HartreeDisabled)?;
        if rho.len() != self.basis.n_grid() {
            return Err(ModelError::ShapeMismatch(format!(
                "density has {} samples for a grid of {} points",
                rho.len(),
                self.basis.n_grid()
            )));
        }
        let mut g: Vec<C64> = rho.values().iter().map(|&r| C64::new(r, 0.0)).collect();
        self.fft.forward(&mut g);
        for (gm, &ker) in g.iter_mut().zip(kernel) {
            *gm *= ker;
        }
        self.fft.inverse(&mut g);
        self.counter.record_ffts(2);
        let scale = 1.0 / self.basis.n_grid() as f64;
        Ok(g.iter().map(|z| z.re * scale).collect())
    }

    /// Freeze the effective potential at a given density.
    pub fn hamiltonian_from_density(
        &self,
        rho: &DensityField,
    ) -> Result<Hamiltonian<'_>, ModelError> {
        if rho.len() != self.basis.n_grid() {
            return Err(ModelError::ShapeMismatch(format!(
                "density has {} samples for a grid of {} points",
                rho.len(),
                self.basis.n_grid()
            )));
        }
        let v_h = if self.hartree_on {
            Some(self.hartree_potential(rho)?)
        } else {
            None
        };
        let v_eff: Vec<f64> = (0..rho.len())
            .map(|m| {
                let r = rho.values()[m];
                let mut v = self.v_ion[m] + self.kappa * r + (4.0 / 3.0) * self.c_x * r.cbrt();
                if let Some(vh) = &v_h {
                    v += vh[m];
                }
                v
            })
            .collect();
        Ok(Hamiltonian {
            model: self,
            density: rho.clone(),
            v_h,
            v_eff,
            vhat: OnceLock::new(),
        })
    }

    /// Freeze the effective potential at the density of `phi`.
    pub fn hamiltonian(&self, phi: &Frame) -> Result<Hamiltonian<'_>, ModelError> {
        self.hamiltonian_from_density(&self.density(phi))
    }

    /// Apply the self-consistent Hamiltonian `H_{ρ(φ)}` to `v`.
    ///
    /// One-shot convenience; solvers keep a [`Hamiltonian`] context alive
    /// instead so the density is not rebuilt on every application.
    pub fn apply_hamiltonian(&self, phi: &Frame, v: &BlockMat) -> Result<BlockMat, ModelError> {
        self.hamiltonian(phi)?.apply(v)
    }

    /// Total energy of a frame.
    pub fn energy(&self, phi: &Frame) -> f64 {
        let ham = self
            .hamiltonian(phi)
            .expect("density built from this model matches its own grid");
        self.kinetic_energy(phi) + ham.local_energy()
    }

    /// Symmetrized Rayleigh-quotient matrices `Λ_k = ⟨φ_k, H φ_k⟩`.
    pub fn rayleigh_matrix(&self, phi: &Frame) -> Result<Vec<HermMatrix>, ModelError> {
        Ok(self.hamiltonian(phi)?.residual_parts(phi)?.lambda)
    }

    /// Residual `HΦ − ΦΛ` together with `HΦ` and `Λ` (one application).
    pub fn residual_parts(&self, phi: &Frame) -> Result<ResidualParts, ModelError> {
        self.hamiltonian(phi)?.residual_parts(phi)
    }

    /// TPA preconditioner with per-orbital shifts set to the orbital-wise
    /// mean kinetic energy of `phi` (floored at [`TPA_SHIFT_FLOOR`]).
    pub fn tpa_preconditioner(&self, phi: &Frame) -> TpaPreconditioner {
        self.check_frame(phi);
        let shifts: Vec<Vec<f64>> = self
            .basis
            .blocks()
            .iter()
            .zip(phi.blocks())
            .map(|(block, mat)| {
                (0..mat.ncols())
                    .map(|j| {
                        let mut num = 0.0;
                        let mut den = 0.0;
                        for (g, c) in block.kin_half().iter().zip(mat.column(j).iter()) {
                            let w = c.norm_sqr();
                            num += g * w;
                            den += w;
                        }
                        if den > 0.0 {
                            (num / den).max(TPA_SHIFT_FLOOR)
                        } else {
                            TPA_SHIFT_FLOOR
                        }
                    })
                    .collect()
            })
            .collect();
        self.tpa_with_shifts(&shifts)
            .expect("shifts constructed from the frame have matching shape")
    }

    /// TPA preconditioner with explicit per-block, per-column shifts.
    pub fn tpa_with_shifts(&self, shifts: &[Vec<f64>]) -> Result<TpaPreconditioner, ModelError> {
        if shifts.len() != self.num_blocks() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} shift blocks for {} momentum blocks",
                shifts.len(),
                self.num_blocks()
            )));
        }
        if shifts.iter().flatten().any(|&a| !(a.is_finite() && a > 0.0)) {
            return Err(ModelError::BadCoefficient(
                "TPA shifts must be finite and positive".into(),
            ));
        }
        let inv_diag = self
            .basis
            .blocks()
            .iter()
            .zip(shifts)
            .map(|(block, alphas)| {
                let n = block.n_modes();
                DMatrix::from_fn(n, alphas.len(), |g, j| 1.0 / (block.kin_half()[g] + alphas[j]))
            })
            .collect();
        Ok(TpaPreconditioner {
            shifts: shifts.to_vec(),
            inv_diag,
        })
    }

    /// Dense Hermitian assembly of `H_ρ` for every block (test oracle).
    pub fn assemble_dense(&self, phi: &Frame) -> Result<Vec<HermMatrix>, ModelError> {
        let ham = self.hamiltonian(phi)?;
        (0..self.num_blocks()).map(|k| ham.assemble_dense(k)).collect()
    }
}

fn build_hartree_kernel(basis: &PlaneWaveBasis) -> Vec<f64> {
    let tau = std::f64::consts::TAU;
    (0..basis.n_grid())
        .map(|bin| {
            let freq = basis.bin_freq(bin);
            let g2: f64 = freq
                .iter()
                .zip(basis.box_lengths())
                .map(|(&f, &l)| {
                    let g = tau * f as f64 / l;
                    g * g
                })
                .sum();
            if g2 > 0.0 {
                4.0 * std::f64::consts::PI / g2
            } else {
                0.0
            }
        })
        .collect()
}

/// The Hamiltonian with its effective potential frozen at a fixed density.
///
/// Inside one outer solver iteration the density does not change, so the
/// potential tables are built once and reused for every application — the
/// inner Sylvester solves apply this operator many times.
pub struct Hamiltonian<'m> {
    model: &'m KohnShamModel,
    density: DensityField,
    v_h: Option<Vec<f64>>,
    v_eff: Vec<f64>,
    /// Forward FFT of `v_eff`, built lazily for dense assembly.
    vhat: OnceLock<Vec<C64>>,
}

/// Shared-evaluation bundle: `HΦ`, the Rayleigh matrices, and the residual
/// `HΦ − ΦΛ`, all from a single Hamiltonian application.
pub struct ResidualParts {
    pub h_phi: BlockMat,
    pub lambda: Vec<HermMatrix>,
    pub residual: BlockMat,
}

impl ResidualParts {
    /// Frobenius norm of the residual over all blocks.
    pub fn residual_norm(&self) -> f64 {
        self.residual.norm()
    }
}

impl<'m> Hamiltonian<'m> {
    pub fn model(&self) -> &'m KohnShamModel {
        self.model
    }

    pub fn density(&self) -> &DensityField {
        &self.density
    }

    pub fn v_eff(&self) -> &[f64] {
        &self.v_eff
    }

    pub fn hartree(&self) -> Option<&[f64]> {
        self.v_h.as_deref()
    }

    /// The local (non-kinetic) part of the energy at the frozen density.
    pub fn local_energy(&self) -> f64 {
        let model = self.model;
        let mut acc = 0.0;
        for (m, &r) in self.density.values().iter().enumerate() {
            let mut f = model.v_ion[m] * r + 0.5 * model.kappa * r * r
                + model.c_x * r * r.cbrt();
            if let Some(vh) = &self.v_h {
                f += 0.5 * vh[m] * r;
            }
            acc += f;
        }
        model.num_blocks() as f64 * self.density.weight() * acc
    }

    /// Apply `H` to one block's coefficient matrix. Counts as one
    /// Hamiltonian application.
    pub fn apply_block(&self, k: usize, m: &CMatrix) -> Result<CMatrix, ModelError> {
        let block = &self.model.basis.blocks()[k];
        if m.nrows() != block.n_modes() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} rows for a block of {} modes",
                m.nrows(),
                block.n_modes()
            )));
        }
        self.model.counter.record_apply(m.ncols() as u64);
        Ok(self.apply_block_uncounted(k, m))
    }

    fn apply_block_uncounted(&self, k: usize, m: &CMatrix) -> CMatrix {
        let block = &self.model.basis.blocks()[k];
        let cols = par_map_indexed(m.ncols(), |j| {
            let coeffs: Vec<C64> = m.column(j).iter().copied().collect();
            let mut grid = self.model.to_grid_unchecked(block, &coeffs);
            for (g, &v) in grid.iter_mut().zip(&self.v_eff) {
                *g *= v;
            }
            let pot = self.model.from_grid_unchecked(block, grid);
            coeffs
                .iter()
                .zip(block.kin_half())
                .zip(&pot)
                .map(|((c, &g), p)| 2.0 * (g * c + p))
                .collect::<Vec<C64>>()
        });
        let mut out = CMatrix::zeros(m.nrows(), m.ncols());
        for (j, col) in cols.iter().enumerate() {
            for (i, &z) in col.iter().enumerate() {
                out[(i, j)] = z;
            }
        }
        out
    }

    /// Apply `H` block-wise to a full frame-shaped matrix. Counts as one
    /// Hamiltonian application.
    pub fn apply(&self, v: &BlockMat) -> Result<BlockMat, ModelError> {
        self.model.check_block_mat(v)?;
        self.model.counter.record_apply((v.num_blocks() * v.p()) as u64);
        let blocks = v
            .blocks()
            .iter()
            .enumerate()
            .map(|(k, m)| self.apply_block_uncounted(k, m))
            .collect();
        Ok(BlockMat::new(blocks))
    }

    /// `HΦ`, symmetrized `Λ = ⟨φ, Hφ⟩`, and residual `HΦ − ΦΛ`, sharing one
    /// Hamiltonian application.
    pub fn residual_parts(&self, phi: &Frame) -> Result<ResidualParts, ModelError> {
        let h_phi = self.apply(phi.as_mat())?;
        let lambda = phi
            .blocks()
            .iter()
            .zip(h_phi.blocks())
            .map(|(f, hf)| HermMatrix::new(f.adjoint() * hf))
            .collect::<Result<Vec<_>, _>>()?;
        let lam_mats: Vec<CMatrix> =
            lambda.iter().map(|l| l.as_matrix().clone()).collect();
        let residual = h_phi.sub(&phi.as_mat().mul_small(&lam_mats));
        Ok(ResidualParts {
            h_phi,
            lambda,
            residual,
        })
    }

    fn vhat(&self) -> &[C64] {
        self.vhat.get_or_init(|| {
            let mut g: Vec<C64> = self.v_eff.iter().map(|&v| C64::new(v, 0.0)).collect();
            self.model.fft.forward(&mut g);
            self.model.counter.record_ffts(1);
            g
        })
    }

    /// Explicit Hermitian matrix of block `k` (test oracle, `n ≤ 4096`):
    /// `H[i,j] = |G_i+k|² δ_ij + (2/N) v̂_eff(m_i − m_j)`.
    pub fn assemble_dense(&self, k: usize) -> Result<HermMatrix, ModelError> {
        let basis = &self.model.basis;
        let block = &basis.blocks()[k];
        let n = block.n_modes();
        if n > MAX_DENSE_DIM {
            return Err(ModelError::DenseTooLarge {
                n,
                max: MAX_DENSE_DIM,
            });
        }
        let vhat = self.vhat();
        let scale = 2.0 / basis.n_grid() as f64;
        let grid = basis.grid();
        let d = grid.len();
        let mut h = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut flat = 0usize;
                for dim in 0..d {
                    let diff = block.modes()[i][dim] - block.modes()[j][dim];
                    flat = flat * grid[dim] + diff.rem_euclid(grid[dim] as i64) as usize;
                }
                h[(i, j)] = vhat[flat] * scale;
            }
            h[(i, i)] += 2.0 * block.kin_half()[i];
        }
        Ok(HermMatrix::new(h)?)
    }
}

/// Teter–Payne–Allan preconditioner: the inverse shifted kinetic operator
/// `(½|G+k|² + α_j)⁻¹`, diagonal in the plane-wave basis with one shift per
/// orbital column.
#[derive(Debug, Clone)]
pub struct TpaPreconditioner {
    shifts: Vec<Vec<f64>>,
    /// Per block: `n × p` table of `1/(½|G+k|² + α_j)`.
    inv_diag: Vec<DMatrix<f64>>,
}

impl TpaPreconditioner {
    /// The per-block, per-column shifts `α_j`.
    pub fn shifts(&self) -> &[Vec<f64>] {
        &self.shifts
    }

    /// Apply the inverse to one block; columns must correspond to orbitals.
    pub fn apply_block(&self, k: usize, m: &CMatrix) -> Result<CMatrix, ModelError> {
        let table = &self.inv_diag[k];
        if m.nrows() != table.nrows() || m.ncols() != table.ncols() {
            return Err(ModelError::ShapeMismatch(format!(
                "block of {}×{} for a preconditioner table of {}×{}",
                m.nrows(),
                m.ncols(),
                table.nrows(),
                table.ncols()
            )));
        }
        Ok(CMatrix::from_fn(m.nrows(), m.ncols(), |g, j| {
            m[(g, j)] * table[(g, j)]
        }))
    }

    /// Apply the inverse block-wise to a frame-shaped matrix.
    pub fn apply(&self, v: &BlockMat) -> Result<BlockMat, ModelError> {
        if v.num_blocks() != self.inv_diag.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} blocks for a preconditioner with {}",
                v.num_blocks(),
                self.inv_diag.len()
            )));
        }
        let blocks = v
            .blocks()
            .iter()
            .enumerate()
            .map(|(k, m)| self.apply_block(k, m))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BlockMat::new(blocks))
    }
}

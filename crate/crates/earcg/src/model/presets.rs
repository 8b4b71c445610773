//! Named external potentials and the built-in reference models.
//!
//! Three models ship with the library, replacing large pseudopotential
//! benchmarks with desk-scale analogues:
//!
//! * `gp-1d` — a Gross–Pitaevskii-type problem in a shallow cosine well;
//!   small and smooth, the fast-CI reference.
//! * `stiff-1d` — a band-limited random multi-well potential at a large
//!   kinetic cutoff; the dense cluster of low-lying levels plus the wide
//!   spectral spread makes unpreconditioned gradients crawl, which is what
//!   the energy-adaptive metric is for.
//! * `gp-3d-smoke` — a 16³ grid with Hartree and `ρ^{4/3}` terms enabled;
//!   exercises the 3-D and full-nonlinearity code paths.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{KohnShamModel, ModelError, PlaneWaveBasis};
use crate::stiefel::standard_normal;

/// A named external-potential recipe, sampled onto a basis grid.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    /// `v(x) = amplitude · Σ_d cos(2π x_d / L_d)` — one smooth well per axis.
    CosineWell { amplitude: f64 },
    /// Two Gaussian-like wells of different depth along the first axis:
    /// `v = base − Σ_i depth_i · exp(sharpness·(cos(2π(x−c_i)/L) − 1))`
    /// with centers at `L/4` and `3L/4`. Unequal depths split the wells'
    /// levels and shrink the spectral gap.
    DoubleWell {
        base: f64,
        depth_a: f64,
        depth_b: f64,
        sharpness: f64,
    },
    /// Band-limited random potential: seeded Gaussian coefficients on all
    /// modes with `0 < |m|_∞ ≤ max_mode`, damped by `1/(1+|m|²)`.
    RandomSmooth {
        seed: u64,
        amplitude: f64,
        max_mode: i64,
    },
}

impl PotentialSpec {
    /// Sample the potential at every grid point of `basis` (row-major).
    pub fn sample(&self, basis: &PlaneWaveBasis) -> Vec<f64> {
        let n = basis.n_grid();
        let tau = std::f64::consts::TAU;
        match *self {
            PotentialSpec::CosineWell { amplitude } => (0..n)
                .map(|i| {
                    let x = basis.grid_point(i);
                    amplitude
                        * x.iter()
                            .zip(basis.box_lengths())
                            .map(|(&xi, &l)| (tau * xi / l).cos())
                            .sum::<f64>()
                })
                .collect(),
            PotentialSpec::DoubleWell {
                base,
                depth_a,
                depth_b,
                sharpness,
            } => {
                let l = basis.box_lengths()[0];
                (0..n)
                    .map(|i| {
                        let x = basis.grid_point(i)[0];
                        let well = |center: f64, depth: f64| {
                            depth * (sharpness * ((tau * (x - center) / l).cos() - 1.0)).exp()
                        };
                        base - well(0.25 * l, depth_a) - well(0.75 * l, depth_b)
                    })
                    .collect()
            }
            PotentialSpec::RandomSmooth {
                seed,
                amplitude,
                max_mode,
            } => {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                let d = basis.dim();
                let modes = half_space_modes(d, max_mode);
                let coeffs: Vec<(f64, f64)> = modes
                    .iter()
                    .map(|m| {
                        let damp = 1.0 / (1.0 + m.iter().map(|&c| (c * c) as f64).sum::<f64>());
                        (
                            damp * standard_normal(&mut rng),
                            damp * standard_normal(&mut rng),
                        )
                    })
                    .collect();
                (0..n)
                    .map(|i| {
                        let x = basis.grid_point(i);
                        let mut v = 0.0;
                        for (m, &(a, b)) in modes.iter().zip(&coeffs) {
                            let theta: f64 = m
                                .iter()
                                .zip(&x)
                                .zip(basis.box_lengths())
                                .map(|((&mi, &xi), &l)| tau * mi as f64 * xi / l)
                                .sum();
                            v += a * theta.cos() + b * theta.sin();
                        }
                        amplitude * v
                    })
                    .collect()
            }
        }
    }
}

/// Nonzero integer modes with `|m|_∞ ≤ max_mode`, one representative per
/// `±m` pair (first nonzero component positive), in lexicographic order.
fn half_space_modes(d: usize, max_mode: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut m = vec![-max_mode; d];
    'scan: loop {
        if m.iter().any(|&c| c != 0) {
            let lead = m.iter().copied().find(|&c| c != 0).unwrap();
            if lead > 0 {
                out.push(m.clone());
            }
        }
        for dim in (0..d).rev() {
            m[dim] += 1;
            if m[dim] <= max_mode {
                continue 'scan;
            }
            m[dim] = -max_mode;
        }
        break;
    }
    out
}

/// How an experiment produces its starting frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitRule {
    /// Seeded random orthonormal frame refined by damped SCF until the
    /// density difference drops below 0.1.
    Scf,
    /// Seeded random orthonormal frame, used as-is.
    Random,
}

/// The built-in reference models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinModel {
    Gp1d,
    Stiff1d,
    Gp3dSmoke,
}

impl BuiltinModel {
    pub const ALL: [BuiltinModel; 3] =
        [BuiltinModel::Gp1d, BuiltinModel::Stiff1d, BuiltinModel::Gp3dSmoke];

    pub fn name(&self) -> &'static str {
        match self {
            BuiltinModel::Gp1d => "gp-1d",
            BuiltinModel::Stiff1d => "stiff-1d",
            BuiltinModel::Gp3dSmoke => "gp-3d-smoke",
        }
    }

    pub fn from_name(name: &str) -> Option<BuiltinModel> {
        BuiltinModel::ALL.iter().copied().find(|m| m.name() == name)
    }

    pub fn names() -> Vec<&'static str> {
        BuiltinModel::ALL.iter().map(|m| m.name()).collect()
    }

    /// Number of orbitals the model is meant to be solved with.
    pub fn orbitals(&self) -> usize {
        2
    }

    /// Default initialization rule for experiments on this model.
    ///
    /// All presets refine the random frame with a few damped-mixing
    /// sweeps: on the 3D model in particular, a raw random frame sits
    /// far enough from the basin that the first line search stalls.
    pub fn init(&self) -> InitRule {
        InitRule::Scf
    }

    pub fn potential(&self) -> PotentialSpec {
        match self {
            BuiltinModel::Gp1d => PotentialSpec::CosineWell { amplitude: 3.0 },
            BuiltinModel::Stiff1d => PotentialSpec::RandomSmooth {
                seed: 10,
                amplitude: 20.0,
                max_mode: 12,
            },
            BuiltinModel::Gp3dSmoke => PotentialSpec::CosineWell { amplitude: 1.5 },
        }
    }

    pub fn build(&self) -> Result<KohnShamModel, ModelError> {
        let (basis, kappa, c_x, hartree) = match self {
            BuiltinModel::Gp1d => (
                PlaneWaveBasis::new(&[10.0], &[64], 40.0, &[vec![0.0]])?,
                10.0,
                0.0,
                false,
            ),
            BuiltinModel::Stiff1d => (
                PlaneWaveBasis::new(&[8.0], &[192], 1264.0, &[vec![0.0]])?,
                5.0,
                0.0,
                false,
            ),
            // Unequal box lengths split the axis-permutation degeneracy of
            // the per-axis cosine wells; a cubic box would leave the first
            // excited level threefold degenerate and the two-orbital
            // minimizer gapless.
            BuiltinModel::Gp3dSmoke => (
                PlaneWaveBasis::new(&[6.0, 6.6, 7.4], &[16, 16, 16], 6.0, &[vec![0.0; 3]])?,
                5.0,
                -0.5,
                true,
            ),
        };
        let v_ion = self.potential().sample(&basis);
        KohnShamModel::new(basis, v_ion, kappa, c_x, hartree)
    }
}

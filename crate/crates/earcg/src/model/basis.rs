//! Plane-wave bases over periodic boxes with optional momentum offsets.
//!
//! Orbitals are expanded as `φ(x) = |Ω|^{-1/2} Σ_G c_G e^{i(G+k)·x}` with
//! reciprocal vectors `G = 2π m / L` (componentwise, integer `m`) retained
//! whenever `½|G+k|² ≤ E_cut`. Each momentum offset `k` (given in fractions
//! of the reciprocal cell) owns one block; the grid must satisfy
//! `N_d ≥ 2·max|m_d| + 1` per dimension so that products of two retained
//! modes are integrated exactly by the grid quadrature (no aliasing).

use super::ModelError;
use crate::C64;

#[derive(Debug, Clone)]
pub struct KBlock {
    k_frac: Vec<f64>,
    /// Retained integer mode vectors, lexicographic.
    modes: Vec<Vec<i64>>,
    /// `½|G+k|²` per mode.
    kin_half: Vec<f64>,
    /// Flat row-major grid bin per mode.
    bins: Vec<usize>,
    /// `e^{ik·x}` on the grid; `None` when `k = 0`.
    phase: Option<Vec<C64>>,
}

impl KBlock {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn k_frac(&self) -> &[f64] {
        &self.k_frac
    }

    pub fn modes(&self) -> &[Vec<i64>] {
        &self.modes
    }

    pub fn kin_half(&self) -> &[f64] {
        &self.kin_half
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    pub fn phase(&self) -> Option<&[C64]> {
        self.phase.as_deref()
    }
}

#[derive(Debug, Clone)]
pub struct PlaneWaveBasis {
    box_lengths: Vec<f64>,
    grid: Vec<usize>,
    ecut: f64,
    volume: f64,
    n_grid: usize,
    blocks: Vec<KBlock>,
}

impl PlaneWaveBasis {
    /// Build a basis over the box `[0,L_1)×…×[0,L_d)` with collocation grid
    /// `grid`, kinetic cutoff `ecut`, and one block per momentum offset in
    /// `k_fracs` (each entry is a `d`-vector of reciprocal-cell fractions).
    pub fn new(
        box_lengths: &[f64],
        grid: &[usize],
        ecut: f64,
        k_fracs: &[Vec<f64>],
    ) -> Result<Self, ModelError> {
        let d = box_lengths.len();
        if d == 0 || d > 3 {
            return Err(ModelError::BadGeometry(format!(
                "dimension must be 1..=3, got {d}"
            )));
        }
        if grid.len() != d {
            return Err(ModelError::BadGeometry(format!(
                "grid has {} entries for a {d}-dimensional box",
                grid.len()
            )));
        }
        if box_lengths.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(ModelError::BadGeometry(
                "box lengths must be finite and positive".into(),
            ));
        }
        if grid.iter().any(|&n| n == 0) {
            return Err(ModelError::BadGeometry("grid dimensions must be ≥ 1".into()));
        }
        if !(ecut.is_finite() && ecut > 0.0) {
            return Err(ModelError::BadGeometry("cutoff must be finite and positive".into()));
        }
        if k_fracs.is_empty() {
            return Err(ModelError::BadGeometry("at least one momentum offset required".into()));
        }
        if k_fracs.iter().any(|k| k.len() != d) {
            return Err(ModelError::BadGeometry(
                "every momentum offset needs one fraction per dimension".into(),
            ));
        }
        if k_fracs
            .iter()
            .any(|k| k.iter().any(|f| !f.is_finite()))
        {
            return Err(ModelError::BadGeometry("momentum offsets must be finite".into()));
        }

        let volume: f64 = box_lengths.iter().product();
        let n_grid: usize = grid.iter().product();
        let blocks = k_fracs
            .iter()
            .map(|k| build_block(box_lengths, grid, ecut, k))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PlaneWaveBasis {
            box_lengths: box_lengths.to_vec(),
            grid: grid.to_vec(),
            ecut,
            volume,
            n_grid,
            blocks,
        })
    }

    pub fn dim(&self) -> usize {
        self.box_lengths.len()
    }

    pub fn box_lengths(&self) -> &[f64] {
        &self.box_lengths
    }

    pub fn grid(&self) -> &[usize] {
        &self.grid
    }

    pub fn ecut(&self) -> f64 {
        self.ecut
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    /// Quadrature weight `|Ω| / N_grid` of one grid point.
    pub fn weight(&self) -> f64 {
        self.volume / self.n_grid as f64
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[KBlock] {
        &self.blocks
    }

    /// Retained mode count per block.
    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.n_modes()).collect()
    }

    /// Cartesian coordinates of flat grid point `i` (row-major).
    pub fn grid_point(&self, mut i: usize) -> Vec<f64> {
        let d = self.dim();
        let mut x = vec![0.0; d];
        for dim in (0..d).rev() {
            let n = self.grid[dim];
            x[dim] = (i % n) as f64 * self.box_lengths[dim] / n as f64;
            i /= n;
        }
        x
    }

    /// Signed integer frequency of flat grid bin `i` (row-major), following
    /// the usual convention that bins above `N/2` represent negative modes.
    pub fn bin_freq(&self, mut i: usize) -> Vec<i64> {
        let d = self.dim();
        let mut m = vec![0i64; d];
        for dim in (0..d).rev() {
            let n = self.grid[dim] as i64;
            let b = (i % self.grid[dim]) as i64;
            m[dim] = if b <= n / 2 { b } else { b - n };
            i /= self.grid[dim];
        }
        m
    }
}

fn build_block(
    box_lengths: &[f64],
    grid: &[usize],
    ecut: f64,
    k_frac: &[f64],
) -> Result<KBlock, ModelError> {
    let d = box_lengths.len();
    let tau = std::f64::consts::TAU;

    // Scan box: the per-dimension kinetic contribution alone bounds |m|.
    let ranges: Vec<(i64, i64)> = (0..d)
        .map(|dim| {
            let reach = box_lengths[dim] * (2.0 * ecut).sqrt() / tau;
            let lo = (-reach - k_frac[dim]).floor() as i64;
            let hi = (reach - k_frac[dim]).ceil() as i64;
            (lo, hi)
        })
        .collect();

    let mut modes = Vec::new();
    let mut kin_half = Vec::new();
    let mut m = ranges.iter().map(|&(lo, _)| lo).collect::<Vec<i64>>();
    'scan: loop {
        let kin: f64 = (0..d)
            .map(|dim| {
                let g = tau * (m[dim] as f64 + k_frac[dim]) / box_lengths[dim];
                0.5 * g * g
            })
            .sum();
        if kin <= ecut {
            modes.push(m.clone());
            kin_half.push(kin);
        }
        // Odometer increment, last dimension fastest.
        for dim in (0..d).rev() {
            m[dim] += 1;
            if m[dim] <= ranges[dim].1 {
                continue 'scan;
            }
            m[dim] = ranges[dim].0;
        }
        break;
    }
    if modes.is_empty() {
        return Err(ModelError::EmptyBasis);
    }

    // Anti-aliasing: products of two retained modes must live on the grid.
    for dim in 0..d {
        let max_abs = modes.iter().map(|m| m[dim].unsigned_abs()).max().unwrap() as usize;
        let need = 2 * max_abs + 1;
        if grid[dim] < need {
            return Err(ModelError::GridTooCoarse {
                dim,
                need,
                have: grid[dim],
            });
        }
    }

    let bins = modes
        .iter()
        .map(|m| {
            let mut flat = 0usize;
            for dim in 0..d {
                let n = grid[dim] as i64;
                flat = flat * grid[dim] as usize + m[dim].rem_euclid(n) as usize;
            }
            flat
        })
        .collect();

    let phase = if k_frac.iter().all(|&f| f == 0.0) {
        None
    } else {
        let n_grid: usize = grid.iter().product();
        let mut ph = Vec::with_capacity(n_grid);
        for i in 0..n_grid {
            let mut idx = i;
            let mut theta = 0.0;
            for dim in (0..d).rev() {
                let n = grid[dim];
                theta += tau * k_frac[dim] * (idx % n) as f64 / n as f64;
                idx /= n;
            }
            ph.push(C64::new(theta.cos(), theta.sin()));
        }
        Some(ph)
    };

    Ok(KBlock {
        k_frac: k_frac.to_vec(),
        modes,
        kin_half,
        bins,
        phase,
    })
}

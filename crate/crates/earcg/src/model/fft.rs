//! Multidimensional FFT on row-major grids, composed from cached 1-D plans.
//!
//! Both directions are unnormalized: `forward` applies `Σ_m x_m e^{-2πi km/N}`
//! along every axis, `inverse` the conjugate kernel. Callers own the
//! normalization, which keeps the scaling conventions in one place
//! ([`super::KohnShamModel::to_grid`] / [`super::KohnShamModel::from_grid`]).

use crate::C64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub struct FftGrid {
    dims: Vec<usize>,
    n_total: usize,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    // (Debug is implemented manually: plan handles are opaque.)
    inv: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for FftGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftGrid").field("dims", &self.dims).finish()
    }
}

impl FftGrid {
    pub fn new(dims: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = dims.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inv = dims.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        FftGrid {
            dims: dims.to_vec(),
            n_total: dims.iter().product(),
            fwd,
            inv,
        }
    }

    pub fn len(&self) -> usize {
        self.n_total
    }

    pub fn is_empty(&self) -> bool {
        self.n_total == 0
    }

    /// In-place unnormalized transform with the `e^{-i}` kernel on every axis.
    pub fn forward(&self, data: &mut [C64]) {
        self.transform(data, &self.fwd);
    }

    /// In-place unnormalized transform with the `e^{+i}` kernel on every axis.
    pub fn inverse(&self, data: &mut [C64]) {
        self.transform(data, &self.inv);
    }

    fn transform(&self, data: &mut [C64], plans: &[Arc<dyn Fft<f64>>]) {
        assert_eq!(data.len(), self.n_total, "grid buffer length mismatch");
        for (axis, plan) in plans.iter().enumerate() {
            let n = self.dims[axis];
            if n == 1 {
                continue;
            }
            // Row-major layout: the stride of `axis` is the product of the
            // dimensions after it.
            let stride: usize = self.dims[axis + 1..].iter().product();
            let outer: usize = self.dims[..axis].iter().product();
            let mut line = vec![C64::new(0.0, 0.0); n];
            let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * n * stride + s;
                    for i in 0..n {
                        line[i] = data[base + i * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for i in 0..n {
                        data[base + i * stride] = line[i];
                    }
                }
            }
        }
    }
}

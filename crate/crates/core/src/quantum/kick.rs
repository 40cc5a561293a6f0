use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::HilbertSpace;
use crate::params::MapParams;

type C64 = Complex64;

/// Kick unitary `U = exp(-i (k / hbar_eff) cos x)` acting as `rho -> U rho U^H`.
///
/// `U` is diagonal on the `dim`-point angle grid `x_j = 2 pi j / dim`, whose
/// kernel `<x_j|n> = exp(i n x_j) / sqrt(dim)` is unitary on the truncated
/// basis. In momentum space `U psi = FFT(D . IFFT(psi)) / dim`.
pub struct KickPropagator {
    dim: usize,
    diag: Vec<C64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl KickPropagator {
    pub fn new(space: &HilbertSpace, params: &MapParams) -> Self {
        let dim = space.dim;
        let strength = params.k / space.hbar_eff;
        let diag = (0..dim)
            .map(|j| {
                let x = TAU * j as f64 / dim as f64;
                C64::from_polar(1.0, -strength * x.cos())
            })
            .collect();
        let mut planner = FftPlanner::new();
        Self {
            dim,
            diag,
            forward: planner.plan_fft_forward(dim),
            inverse: planner.plan_fft_inverse(dim),
        }
    }

    /// Diagonal of `U` on the angle grid.
    pub fn diagonal(&self) -> &[C64] {
        &self.diag
    }

    fn rows(&self, data: &mut [C64], first: &Arc<dyn Fft<f64>>, second: &Arc<dyn Fft<f64>>, conj: bool) {
        let dim = self.dim;
        data.par_chunks_mut(dim * 16).for_each(|block| {
            let mut scratch =
                vec![C64::new(0.0, 0.0); first.get_inplace_scratch_len().max(second.get_inplace_scratch_len())];
            first.process_with_scratch(block, &mut scratch);
            for row in block.chunks_mut(dim) {
                for (z, d) in row.iter_mut().zip(&self.diag) {
                    *z *= if conj { d.conj() } else { *d };
                }
            }
            second.process_with_scratch(block, &mut scratch);
        });
    }

    /// `U psi` for a single state vector.
    pub fn apply_state(&self, psi: &mut [C64]) {
        let mut scratch = vec![C64::new(0.0, 0.0); self.forward.get_inplace_scratch_len().max(self.inverse.get_inplace_scratch_len())];
        self.inverse.process_with_scratch(psi, &mut scratch);
        for (z, d) in psi.iter_mut().zip(&self.diag) {
            *z *= d;
        }
        self.forward.process_with_scratch(psi, &mut scratch);
        let s = 1.0 / self.dim as f64;
        psi.iter_mut().for_each(|z| *z *= s);
    }

    /// `rho -> U rho U^H` on a row-major matrix.
    pub fn apply(&self, data: &mut [C64]) {
        let dim = self.dim;
        // right factor: each row r -> IFFT(conj(D) . FFT(r)) / dim
        self.rows(data, &self.forward, &self.inverse, true);
        transpose(data, dim);
        // left factor on columns: each column c -> FFT(D . IFFT(c)) / dim
        self.rows(data, &self.inverse, &self.forward, false);
        transpose(data, dim);
        let s = 1.0 / (dim * dim) as f64;
        data.par_chunks_mut(dim * 16).for_each(|c| c.iter_mut().for_each(|z| *z *= s));
    }
}

fn transpose(data: &mut [C64], dim: usize) {
    const B: usize = 32;
    for ib in (0..dim).step_by(B) {
        for jb in (ib..dim).step_by(B) {
            for i in ib..(ib + B).min(dim) {
                let j0 = if ib == jb { i + 1 } else { jb };
                for j in j0..(jb + B).min(dim) {
                    data.swap(i * dim + j, j * dim + i);
                }
            }
        }
    }
}

//! Ulam discretization of the Perron–Frobenius operator.
//!
//! The padded trapping rectangle `[0, 2pi) x [-P, P]` is tiled into
//! `nx x np` cells. Each cell is sampled on a jittered lattice, every sample
//! is advanced one step, and column `j` of the matrix holds the fraction of
//! cell `j`'s samples landing in each target cell.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{map_step, PhasePoint};
use crate::eigen::{arnoldi_top, ArnoldiConfig, LinearOperator, SpectrumResult};
use crate::error::{Error, Result};
use crate::params::MapParams;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UlamGrid {
    pub nx: usize,
    pub np: usize,
    pub p_min: f64,
    pub p_max: f64,
}

impl UlamGrid {
    /// Grid over `[-p_pad p_band, p_pad p_band]`.
    pub fn for_params(params: &MapParams, nx: usize, np: usize, p_pad: f64) -> Result<Self> {
        if p_pad < 1.0 {
            return Err(Error::InvalidParams(format!("p_pad = {p_pad} must be >= 1")));
        }
        let half = p_pad * params.finite_band()?;
        Self::with_extent(nx, np, -half, half)
    }

    pub fn with_extent(nx: usize, np: usize, p_min: f64, p_max: f64) -> Result<Self> {
        if nx == 0 || np == 0 {
            return Err(Error::InvalidParams("Ulam grid needs nx, np >= 1".into()));
        }
        if !(p_max > p_min) {
            return Err(Error::InvalidParams(format!(
                "empty momentum extent [{p_min}, {p_max}]"
            )));
        }
        Ok(Self {
            nx,
            np,
            p_min,
            p_max,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.np
    }

    pub fn cell_width(&self) -> (f64, f64) {
        (
            TAU / self.nx as f64,
            (self.p_max - self.p_min) / self.np as f64,
        )
    }

    /// Cell index `ip * nx + ix`; momenta outside the extent are clipped to
    /// the boundary row.
    pub fn cell_of(&self, z: PhasePoint) -> usize {
        let (dx, dp) = self.cell_width();
        let ix = ((z.x / dx) as usize).min(self.nx - 1);
        let t = ((z.p - self.p_min) / dp).floor();
        let ip = if t < 0.0 {
            0
        } else {
            (t as usize).min(self.np - 1)
        };
        ip * self.nx + ix
    }

    /// Lower-left corner of a cell.
    pub fn cell_origin(&self, cell: usize) -> (f64, f64) {
        let (dx, dp) = self.cell_width();
        let (ip, ix) = (cell / self.nx, cell % self.nx);
        (ix as f64 * dx, self.p_min + ip as f64 * dp)
    }

    pub fn cell_center(&self, cell: usize) -> PhasePoint {
        let (dx, dp) = self.cell_width();
        let (x, p) = self.cell_origin(cell);
        PhasePoint::new(x + 0.5 * dx, p + 0.5 * dp)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UlamSampling {
    pub samples_per_cell: usize,
    /// Jitter amplitude as a fraction of the lattice spacing; 0 gives the
    /// plain midpoint lattice.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for UlamSampling {
    fn default() -> Self {
        Self {
            samples_per_cell: 64,
            jitter: 0.25,
            seed: 0,
        }
    }
}

/// Column-stochastic sparse matrix in compressed-column form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferOperator {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
    pub samples_per_cell: usize,
    pub seed: u64,
}

impl TransferOperator {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        self.column(j).map(|(_, v)| v).sum()
    }

    /// Dense copy (row-major), for small grids.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n * self.n];
        for j in 0..self.n {
            for (i, v) in self.column(j) {
                d[i * self.n + j] += v;
            }
        }
        d
    }

    /// Coordinate text export: a header, then `row col value` triples.
    pub fn write_coo<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# ulam nrows={} ncols={} nnz={} samples_per_cell={} seed={}",
            self.n,
            self.n,
            self.nnz(),
            self.samples_per_cell,
            self.seed
        )?;
        for j in 0..self.n {
            for (i, v) in self.column(j) {
                writeln!(out, "{i} {j} {v:.16e}")?;
            }
        }
        Ok(())
    }
}

impl LinearOperator for TransferOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        y.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for (j, xj) in x.iter().enumerate() {
            for (i, v) in self.column(j) {
                y[i] += v * xj;
            }
        }
    }
}

/// Sample points of one cell: a `side x side` midpoint lattice (row-major,
/// truncated to `s` points) displaced by seeded jitter.
fn cell_samples(grid: &UlamGrid, cell: usize, sampling: &UlamSampling) -> Vec<PhasePoint> {
    let s = sampling.samples_per_cell;
    let side = (s as f64).sqrt().ceil() as usize;
    let (dx, dp) = grid.cell_width();
    let (x0, p0) = grid.cell_origin(cell);
    let (hx, hp) = (dx / side as f64, dp / side as f64);
    let mut r = rng::stream(sampling.seed, cell as u64);
    (0..s)
        .map(|t| {
            let (a, b) = (t % side, t / side);
            let (mut jx, mut jp) = (0.0, 0.0);
            if sampling.jitter > 0.0 {
                jx = (r.gen::<f64>() - 0.5) * sampling.jitter * hx;
                jp = (r.gen::<f64>() - 0.5) * sampling.jitter * hp;
            }
            PhasePoint::new(
                x0 + (a as f64 + 0.5) * hx + jx,
                p0 + (b as f64 + 0.5) * hp + jp,
            )
        })
        .collect()
}

pub fn build_ulam_matrix(
    params: &MapParams,
    grid: &UlamGrid,
    sampling: &UlamSampling,
) -> Result<TransferOperator> {
    let s = sampling.samples_per_cell;
    if s == 0 {
        return Err(Error::InvalidParams("samples_per_cell must be >= 1".into()));
    }
    let columns: Vec<Vec<(usize, f64)>> = (0..grid.n_cells())
        .into_par_iter()
        .map(|cell| {
            let mut targets: Vec<usize> = cell_samples(grid, cell, sampling)
                .into_iter()
                .map(|z| grid.cell_of(map_step(z, params)))
                .collect();
            targets.sort_unstable();
            let mut col: Vec<(usize, usize)> = Vec::new();
            for t in targets {
                match col.last_mut() {
                    Some((row, count)) if *row == t => *count += 1,
                    _ => col.push((t, 1)),
                }
            }
            col.into_iter()
                .map(|(row, count)| (row, count as f64 / s as f64))
                .collect()
        })
        .collect();

    let mut col_ptr = Vec::with_capacity(columns.len() + 1);
    col_ptr.push(0);
    let nnz: usize = columns.iter().map(Vec::len).sum();
    let mut row_idx = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    for col in columns {
        for (r, v) in col {
            row_idx.push(r);
            values.push(v);
        }
        col_ptr.push(row_idx.len());
    }
    Ok(TransferOperator {
        n: grid.n_cells(),
        col_ptr,
        row_idx,
        values,
        samples_per_cell: s,
        seed: sampling.seed,
    })
}

/// Leading eigenpairs of the transfer operator. The start vector is the
/// uniform measure plus seeded noise.
pub fn ulam_spectrum(op: &TransferOperator, config: &ArnoldiConfig) -> Result<SpectrumResult> {
    if config.n_eigs >= op.n {
        return Err(Error::InvalidParams(format!(
            "n_eigs = {} must be below the matrix dimension {}",
            config.n_eigs, op.n
        )));
    }
    arnoldi_top(op, config, None)
}

//! The classical dissipative standard map and its ensemble diagnostics.
//!
//! The map acts on the cylinder `(x mod 2pi, p)`:
//!
//! ```text
//! p' = gamma p + k sin x
//! x' = x + p'
//! ```
//!
//! Its Jacobian determinant is `gamma` everywhere and the momentum band
//! `|p| <= k / (1 - gamma)` is forward invariant.

use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::MapParams;
use crate::rng;

/// A point on the cylinder. `x` is kept reduced to `[0, 2pi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: f64,
    pub p: f64,
}

impl PhasePoint {
    pub fn new(x: f64, p: f64) -> Self {
        Self {
            x: reduce_angle(x),
            p,
        }
    }
}

/// Reduce an angle into `[0, 2pi)`.
pub fn reduce_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Shortest signed distance between two angles, in `[-pi, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > std::f64::consts::PI {
        d - TAU
    } else {
        d
    }
}

/// One step on the universal cover: `x` is not reduced.
#[inline]
pub fn lift_step(x: f64, p: f64, params: &MapParams) -> (f64, f64) {
    let p_new = params.gamma * p + params.k * x.sin();
    (x + p_new, p_new)
}

#[inline]
pub fn map_step(z: PhasePoint, params: &MapParams) -> PhasePoint {
    let (x, p) = lift_step(z.x, z.p, params);
    PhasePoint::new(x, p)
}

/// Tangent map `[[dx'/dx, dx'/dp], [dp'/dx, dp'/dp]]` at angle `x`.
#[inline]
pub fn jacobian(x: f64, params: &MapParams) -> [[f64; 2]; 2] {
    let kc = params.k * x.cos();
    [[1.0 + kc, params.gamma], [kc, params.gamma]]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub points: Vec<PhasePoint>,
    pub seed: u64,
}

impl Ensemble {
    /// `size` points uniform over `[0, 2pi) x [-p_band, p_band]`. Point `i`
    /// comes from RNG stream `i`, so any prefix of a larger ensemble is
    /// identical to the smaller ensemble.
    pub fn uniform(params: &MapParams, size: usize, seed: u64) -> Result<Self> {
        let band = params.finite_band()?;
        let points = (0..size)
            .into_par_iter()
            .map(|i| {
                let mut r = rng::stream(seed, i as u64);
                let x = r.gen::<f64>() * TAU;
                let p = (2.0 * r.gen::<f64>() - 1.0) * band;
                PhasePoint::new(x, p)
            })
            .collect();
        Ok(Self { points, seed })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn evolve_point(mut z: PhasePoint, params: &MapParams, steps: usize) -> PhasePoint {
    for _ in 0..steps {
        z = map_step(z, params);
    }
    z
}

pub fn evolve_ensemble(ens: &Ensemble, params: &MapParams, steps: usize) -> Ensemble {
    let points = ens
        .points
        .par_iter()
        .map(|&z| evolve_point(z, params, steps))
        .collect();
    Ensemble {
        points,
        seed: ens.seed,
    }
}

/// Normalized histogram of momenta over `[-p_band, p_band]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentumDistribution {
    pub bins: Vec<f64>,
    pub n_bins: usize,
    pub p_band: f64,
    /// Samples that fell outside the band and were not counted.
    pub out_of_band: usize,
}

impl MomentumDistribution {
    pub fn bin_center(&self, i: usize) -> f64 {
        if self.p_band == 0.0 {
            return 0.0;
        }
        -self.p_band + (i as f64 + 0.5) * 2.0 * self.p_band / self.n_bins as f64
    }

    pub fn occupied(&self) -> usize {
        self.bins.iter().filter(|&&b| b > 0.0).count()
    }
}

fn bin_index(p: f64, band: f64, n_bins: usize) -> Option<usize> {
    if !(p.abs() <= band) {
        return None;
    }
    if band == 0.0 {
        return Some(n_bins / 2);
    }
    let t = ((p + band) / (2.0 * band) * n_bins as f64).floor() as usize;
    Some(t.min(n_bins - 1))
}

fn histogram_from<I: IntoIterator<Item = f64>>(
    momenta: I,
    band: f64,
    n_bins: usize,
) -> Result<MomentumDistribution> {
    if n_bins == 0 {
        return Err(Error::InvalidParams("n_bins must be >= 1".into()));
    }
    let mut counts = vec![0u64; n_bins];
    let mut out_of_band = 0usize;
    for p in momenta {
        match bin_index(p, band, n_bins) {
            Some(i) => counts[i] += 1,
            None => out_of_band += 1,
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::AllPointsOutOfBand { out_of_band });
    }
    let bins = counts
        .iter()
        .map(|&c| c as f64 / total as f64)
        .collect();
    Ok(MomentumDistribution {
        bins,
        n_bins,
        p_band: band,
        out_of_band,
    })
}

pub fn momentum_histogram(
    ens: &Ensemble,
    params: &MapParams,
    n_bins: usize,
) -> Result<MomentumDistribution> {
    let band = params.finite_band()?;
    histogram_from(ens.points.iter().map(|z| z.p), band, n_bins)
}

/// `(sum_i P_i^2)^-1 / n_bins`, in `[1/n_bins, 1]`.
pub fn participation_ratio(dist: &MomentumDistribution) -> Result<f64> {
    let sq: f64 = dist.bins.iter().map(|b| b * b).sum();
    if sq <= 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    Ok(1.0 / sq / dist.n_bins as f64)
}

/// Which time steps feed the momentum histogram.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Sampling {
    /// Only the state after the last step.
    #[default]
    Final,
    /// Every one of the last `last` steps.
    TailAverage { last: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub ensemble_size: usize,
    pub steps: usize,
    pub n_bins: usize,
    pub seed: u64,
    pub sampling: Sampling,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 10_000,
            steps: 10_000,
            n_bins: 1000,
            seed: 0,
            sampling: Sampling::Final,
        }
    }
}

impl EnsembleConfig {
    /// Seed used for the cell at `(k, gamma)`; depends only on the parameters.
    pub fn cell_seed(&self, params: &MapParams) -> u64 {
        rng::derive(self.seed, &[params.k.to_bits(), params.gamma.to_bits()])
    }
}

/// Evolve a fresh uniform ensemble and histogram the settled momenta.
pub fn settled_distribution(
    params: &MapParams,
    config: &EnsembleConfig,
) -> Result<MomentumDistribution> {
    let ens = Ensemble::uniform(params, config.ensemble_size, config.cell_seed(params))?;
    match config.sampling {
        Sampling::Final => {
            let settled = evolve_ensemble(&ens, params, config.steps);
            momentum_histogram(&settled, params, config.n_bins)
        }
        Sampling::TailAverage { last } => {
            let last = last.clamp(1, config.steps.max(1));
            let warmup = config.steps.saturating_sub(last);
            let band = params.finite_band()?;
            let momenta: Vec<f64> = ens
                .points
                .par_iter()
                .flat_map_iter(|&z| {
                    let mut z = evolve_point(z, params, warmup);
                    (0..last).map(move |_| {
                        z = map_step(z, params);
                        z.p
                    })
                })
                .collect();
            histogram_from(momenta, band, config.n_bins)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    AllOutOfBand,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    pub k: f64,
    pub gamma: f64,
    /// NaN when `status` is not `Ok`.
    pub eta: f64,
    pub out_of_band: usize,
    pub status: CellStatus,
}

pub fn scan_cell(params: &MapParams, config: &EnsembleConfig) -> Result<ScanCell> {
    params.validate()?;
    let (eta, out_of_band, status) = match settled_distribution(params, config) {
        Ok(dist) => (participation_ratio(&dist)?, dist.out_of_band, CellStatus::Ok),
        Err(Error::AllPointsOutOfBand { out_of_band }) => {
            (f64::NAN, out_of_band, CellStatus::AllOutOfBand)
        }
        Err(e) => return Err(e),
    };
    Ok(ScanCell {
        k: params.k,
        gamma: params.gamma,
        eta,
        out_of_band,
        status,
    })
}

/// Inclusive grid of `n` values; a single value sits at `lo`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Participation-ratio grid, gamma-major (`cells[ig * n_k + ik]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub ks: Vec<f64>,
    pub gammas: Vec<f64>,
    pub cells: Vec<ScanCell>,
}

/// Scan one row of fixed `gamma`.
pub fn scan_row(
    gamma: f64,
    ks: &[f64],
    hbar_eff: f64,
    config: &EnsembleConfig,
) -> Result<Vec<ScanCell>> {
    ks.par_iter()
        .map(|&k| scan_cell(&MapParams { k, gamma, hbar_eff }, config))
        .collect()
}

pub fn scan_parameter_space(
    k_range: (f64, f64),
    gamma_range: (f64, f64),
    resolution: (usize, usize),
    config: &EnsembleConfig,
) -> Result<ScanGrid> {
    let ks = linspace(k_range.0, k_range.1, resolution.0);
    let gammas = linspace(gamma_range.0, gamma_range.1, resolution.1);
    if ks.is_empty() || gammas.is_empty() {
        return Err(Error::InvalidParams("empty scan range".into()));
    }
    let hbar = MapParams::default().hbar_eff;
    let mut cells = Vec::with_capacity(ks.len() * gammas.len());
    for &g in &gammas {
        cells.extend(scan_row(g, &ks, hbar, config)?);
    }
    Ok(ScanGrid { ks, gammas, cells })
}

/// Settled momentum distribution for each `k` at fixed `gamma`.
pub fn bifurcation_diagram(
    gamma: f64,
    k_range: (f64, f64),
    n_k: usize,
    config: &EnsembleConfig,
) -> Result<Vec<(f64, MomentumDistribution)>> {
    let ks = linspace(k_range.0, k_range.1, n_k);
    if ks.is_empty() {
        return Err(Error::InvalidParams("empty k range".into()));
    }
    ks.par_iter()
        .map(|&k| {
            let params = MapParams::new(k, gamma, MapParams::default().hbar_eff)?;
            settled_distribution(&params, config).map(|d| (k, d))
        })
        .collect()
}

/// Long-time point cloud of the attractor(s) reached from a uniform
/// ensemble: `transient` steps discarded, then `record` steps kept per
/// trajectory.
pub fn attractor_points(
    params: &MapParams,
    n_traj: usize,
    transient: usize,
    record: usize,
    seed: u64,
) -> Result<Vec<PhasePoint>> {
    let ens = Ensemble::uniform(params, n_traj, seed)?;
    Ok(ens
        .points
        .par_iter()
        .flat_map_iter(|&z| {
            let mut z = evolve_point(z, params, transient);
            (0..record).map(move |_| {
                z = map_step(z, params);
                z
            })
        })
        .collect())
}

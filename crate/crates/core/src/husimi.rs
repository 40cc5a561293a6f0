//! Husimi functions on the cylinder and the scar-localization metric.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{angle_diff, PhasePoint};
use crate::error::{Error, Result};
use crate::orbits::{parity_mirror, PeriodicOrbit};
use crate::quantum::{DensityMatrix, HilbertSpace};

type C64 = Complex64;

pub const DEFAULT_P_PAD: f64 = 1.05;

/// Gaussian tails below `exp(-TAIL)` relative to the peak are dropped.
const TAIL: f64 = 40.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HusimiMode {
    /// `Re <z|A|z>` if `A` is Hermitian, `|<z|A|z>|` otherwise.
    Auto,
    Real,
    Modulus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub nx: usize,
    pub np: usize,
    pub p_pad: f64,
    /// Momentum width of the coherent states; `None` means `sqrt(hbar_eff / 2)`.
    pub width: Option<f64>,
    pub normalize: bool,
    pub mode: HusimiMode,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nx: 256,
            np: 256,
            p_pad: DEFAULT_P_PAD,
            width: None,
            normalize: true,
            mode: HusimiMode::Auto,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HusimiGrid {
    pub nx: usize,
    pub np: usize,
    pub p_min: f64,
    pub p_max: f64,
    /// Momentum band used for the metric scale.
    pub p_band: f64,
    /// `values[ix * np + ip]`
    pub values: Vec<f64>,
    pub normalized: bool,
    /// Smallest raw value before clipping (real mode only).
    pub min_raw: f64,
}

impl HusimiGrid {
    pub fn x(&self, ix: usize) -> f64 {
        TAU * ix as f64 / self.nx as f64
    }

    pub fn p(&self, ip: usize) -> f64 {
        self.p_min + (ip as f64 + 0.5) * (self.p_max - self.p_min) / self.np as f64
    }

    pub fn get(&self, ix: usize, ip: usize) -> f64 {
        self.values[ix * self.np + ip]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Same geometry, constant values.
    pub fn uniform_like(&self) -> Self {
        Self {
            values: vec![1.0; self.values.len()],
            normalized: true,
            min_raw: 1.0,
            ..self.clone()
        }
    }
}

fn default_width(space: &HilbertSpace) -> f64 {
    (0.5 * space.hbar_eff).sqrt()
}

/// Unnormalized Gaussian envelope around `p0`, restricted to the basis
/// indices where it is not negligible. Returns the first index and weights.
fn envelope(space: &HilbertSpace, p0: f64, width: f64) -> (usize, Vec<f64>) {
    let h = space.hbar_eff;
    let half = (2.0 * width * TAIL.sqrt() / h).ceil() as i64;
    let centre = (p0 / h).round() as i64;
    let m = space.m_max as i64;
    let lo = (centre - half).clamp(-m, m);
    let hi = (centre + half).clamp(-m, m);
    if centre - half > m || centre + half < -m {
        return (0, Vec::new());
    }
    let w = (lo..=hi)
        .map(|n| {
            let d = h * n as f64 - p0;
            (-d * d / (4.0 * width * width)).exp()
        })
        .collect();
    (space.index(lo), w)
}

/// `<n|z>` with `z = (x0, p0)`, unit norm.
pub fn coherent_state(space: &HilbertSpace, x0: f64, p0: f64) -> Vec<C64> {
    coherent_state_with_width(space, x0, p0, default_width(space))
}

pub fn coherent_state_with_width(space: &HilbertSpace, x0: f64, p0: f64, width: f64) -> Vec<C64> {
    let mut psi: Vec<C64> = (0..space.dim)
        .map(|a| {
            let n = space.quantum_number(a) as f64;
            let d = space.hbar_eff * n - p0;
            C64::from_polar((-d * d / (4.0 * width * width)).exp(), -n * x0)
        })
        .collect();
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        psi.iter_mut().for_each(|z| *z /= norm);
    }
    psi
}

/// `<z|A|z>` over a grid of coherent states.
pub fn husimi(op: &DensityMatrix, space: &HilbertSpace, spec: &GridSpec) -> Result<HusimiGrid> {
    if op.dim != space.dim {
        return Err(Error::ShapeMismatch {
            expected: space.dim,
            got: op.dim,
        });
    }
    if spec.nx == 0 || spec.np == 0 || !(spec.p_pad > 0.0) {
        return Err(Error::InvalidParams("empty Husimi grid".into()));
    }
    let width = spec.width.unwrap_or_else(|| default_width(space));
    let p_band = if space.p_band > 0.0 {
        space.p_band
    } else {
        space.hbar_eff * space.m_max as f64
    };
    let (p_min, p_max) = (-spec.p_pad * p_band, spec.p_pad * p_band);
    let real = match spec.mode {
        HusimiMode::Real => true,
        HusimiMode::Modulus => false,
        HusimiMode::Auto => op.hermiticity_error() <= 1e-10 * op.frobenius_norm().max(1e-300),
    };
    let dim = space.dim;
    let nx = spec.nx;

    // rows[ip][ix]
    let rows: Vec<Vec<C64>> = (0..spec.np)
        .into_par_iter()
        .map(|ip| {
            let p0 = p_min + (ip as f64 + 0.5) * (p_max - p_min) / spec.np as f64;
            let (start, g) = envelope(space, p0, width);
            let len = g.len();
            if len == 0 {
                return vec![C64::new(0.0, 0.0); nx];
            }
            // full (untruncated) normalization of the coherent state
            let norm_sq: f64 = (0..dim)
                .map(|a| {
                    let d = space.momentum(a) - p0;
                    (-d * d / (2.0 * width * width)).exp()
                })
                .sum();
            // b[d + len - 1] = sum_{n - m = d} g_n g_m A_nm
            let mut b = vec![C64::new(0.0, 0.0); 2 * len - 1];
            for i in 0..len {
                let row = &op.data[(start + i) * dim + start..(start + i) * dim + start + len];
                for (j, a) in row.iter().enumerate() {
                    b[i + len - 1 - j] += (g[i] * g[j]) * a;
                }
            }
            (0..nx)
                .map(|ix| {
                    let x0 = TAU * ix as f64 / nx as f64;
                    let step = C64::from_polar(1.0, x0);
                    // Horner in e^{i x0} from d = len - 1 down to -(len - 1)
                    let mut acc = C64::new(0.0, 0.0);
                    for z in b.iter().rev() {
                        acc = acc * step + z;
                    }
                    acc * C64::from_polar(1.0, -((len - 1) as f64) * x0) / norm_sq
                })
                .collect()
        })
        .collect();

    let mut values = vec![0.0; nx * spec.np];
    let mut min_raw = f64::INFINITY;
    for (ip, row) in rows.iter().enumerate() {
        for (ix, z) in row.iter().enumerate() {
            let v = if real { z.re } else { z.norm() };
            min_raw = min_raw.min(v);
            values[ix * spec.np + ip] = v.max(0.0);
        }
    }
    if spec.normalize {
        let max = values.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            values.iter_mut().for_each(|v| *v /= max);
        }
    }
    Ok(HusimiGrid {
        nx,
        np: spec.np,
        p_min,
        p_max,
        p_band,
        values,
        normalized: spec.normalize,
        min_raw,
    })
}

/// Distance on the cylinder with momentum measured in units of `p_band / pi`.
pub fn phase_distance(a: PhasePoint, b: PhasePoint, p_band: f64) -> f64 {
    let scale = p_band / PI;
    angle_diff(a.x, b.x).abs().hypot((a.p - b.p) / scale)
}

/// Fraction of grid mass within `radius` of any of `points`.
pub fn mass_near_points(grid: &HusimiGrid, points: &[PhasePoint], radius: f64) -> f64 {
    let total = grid.total();
    if total <= 0.0 || points.is_empty() {
        return 0.0;
    }
    let near: f64 = (0..grid.nx)
        .into_par_iter()
        .map(|ix| {
            let x = grid.x(ix);
            (0..grid.np)
                .filter(|&ip| {
                    let z = PhasePoint { x, p: grid.p(ip) };
                    points
                        .iter()
                        .any(|&q| phase_distance(z, q, grid.p_band) <= radius)
                })
                .map(|ip| grid.get(ix, ip))
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    (near / total).clamp(0.0, 1.0)
}

pub fn scar_localization(grid: &HusimiGrid, orbit: &PeriodicOrbit, radius: f64) -> f64 {
    mass_near_points(grid, &orbit.points, radius)
}

/// Localization of a constant grid with the same geometry.
pub fn uniform_baseline(grid: &HusimiGrid, orbit: &PeriodicOrbit, radius: f64) -> f64 {
    scar_localization(&grid.uniform_like(), orbit, radius)
}

/// Localization on an orbit together with its parity image, divided by the
/// uniform baseline of the same point set. Eigenstates of a parity-symmetric
/// map may favour either copy, so this is the figure of merit for scarring.
pub fn symmetric_scar_ratio(grid: &HusimiGrid, orbit: &PeriodicOrbit, radius: f64) -> f64 {
    let mut points = orbit.points.clone();
    points.extend(parity_mirror(orbit).points);
    let base = mass_near_points(&grid.uniform_like(), &points, radius);
    if base <= 0.0 {
        return 0.0;
    }
    mass_near_points(grid, &points, radius) / base
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::MapParams;
    use crate::quantum::build_space;

    fn space() -> HilbertSpace {
        let p = MapParams::new(4.0, 0.33, 0.042).unwrap();
        build_space(&p, 1.5, 4001).unwrap()
    }

    fn overlap(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>().norm()
    }

    #[test]
    fn coherent_state_normalization_and_decay() {
        let s = space();
        let z = coherent_state(&s, 1.0, 2.0);
        assert!((overlap(&z, &z) - 1.0).abs() < 1e-14);
        let near = overlap(&coherent_state(&s, 1.1, 2.0), &z);
        let far = overlap(&coherent_state(&s, 1.0 + PI, 2.0), &z);
        assert!(far < 1e-6 * near, "{far} vs {near}");
    }

    #[test]
    fn coherent_state_mean_momentum() {
        let s = space();
        for p0 in [-3.0, 0.0, 1.234, 5.5] {
            let z = coherent_state(&s, 0.3, p0);
            let mean: f64 = z
                .iter()
                .enumerate()
                .map(|(a, c)| s.quantum_number(a) as f64 * c.norm_sqr())
                .sum();
            assert!((mean - p0 / s.hbar_eff).abs() < 0.5);
        }
    }

    #[test]
    fn grid_matches_direct_expectation() {
        let s = HilbertSpace::with_m_max(40, 0.1);
        let rho = DensityMatrix::random(s.dim, 3);
        let spec = GridSpec {
            nx: 16,
            np: 12,
            normalize: false,
            mode: HusimiMode::Modulus,
            ..GridSpec::default()
        };
        let g = husimi(&rho, &s, &spec).unwrap();
        for (ix, ip) in [(0, 0), (3, 5), (15, 11), (8, 6)] {
            let z = coherent_state(&s, g.x(ix), g.p(ip));
            let mut direct = C64::new(0.0, 0.0);
            for a in 0..s.dim {
                for b in 0..s.dim {
                    direct += z[a].conj() * rho.get(a, b) * z[b];
                }
            }
            assert!((g.get(ix, ip) - direct.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn momentum_eigenstate_gives_ridge() {
        let s = space();
        let rho = DensityMatrix::basis_state(&s, 50);
        let g = husimi(&rho, &s, &GridSpec::default()).unwrap();
        assert!(g.min_raw >= -1e-12);
        let best = (0..g.np)
            .max_by(|&a, &b| g.get(0, a).total_cmp(&g.get(0, b)))
            .unwrap();
        let dp = (g.p_max - g.p_min) / g.np as f64;
        assert!((g.p(best) - 50.0 * s.hbar_eff).abs() <= dp);
        for ix in 0..g.nx {
            assert!((g.get(ix, best) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn mixed_state_is_flat() {
        let s = space();
        let rho = DensityMatrix::maximally_mixed(s.dim);
        let g = husimi(&rho, &s, &GridSpec::default()).unwrap();
        let inner: Vec<f64> = (0..g.np)
            .filter(|&ip| g.p(ip).abs() < 0.9 * s.hbar_eff * s.m_max as f64 - 1.0)
            .map(|ip| g.get(7, ip))
            .collect();
        let (lo, hi) = inner
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi - lo < 1e-6);
    }

    #[test]
    fn point_masses_and_uniform_baseline() {
        let s = space();
        let rho = DensityMatrix::maximally_mixed(s.dim);
        let mut g = husimi(&rho, &s, &GridSpec::default()).unwrap();
        g.values.iter_mut().for_each(|v| *v = 0.0);
        g.values[10 * g.np + 100] = 1.0;
        let orbit = PeriodicOrbit {
            points: vec![PhasePoint { x: g.x(10), p: g.p(100) }],
            period_q: 1,
            winding_w: 0,
            multipliers: [C64::new(0.0, 0.0); 2],
            residual: 0.0,
        };
        assert_eq!(scar_localization(&g, &orbit, 0.05), 1.0);
        let base = uniform_baseline(&g, &orbit, 0.3);
        // disc of radius r in (x, p / scale) coordinates over 2 pi x 2 pi p_pad
        let expected = PI * 0.09 / (TAU * TAU * g.p_max / g.p_band);
        assert!((base - expected).abs() < 0.2 * expected, "{base} vs {expected}");
    }
}

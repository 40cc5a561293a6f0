//! Quantum dissipative standard map on a truncated momentum basis.
//!
//! States live on `|n>, n = -m_max..=m_max`, with momentum `p = hbar_eff n`.
//! One period of the map composes three channels:
//!
//! * free rotation `exp(-i hbar_eff n^2 / 2)`,
//! * the kick `exp(-i (k / hbar_eff) cos x)`,
//! * unit-time Lindblad damping with `L1 = g sum sqrt(n+1) |n><n+1|`,
//!   `L2 = g sum sqrt(n+1) |-n><-n-1|` and `g^2 = -ln gamma`.
//!
//! Density matrices are stored row-major, entry `(a, b)` for basis indices
//! `a = n + m_max`, `b = m + m_max`.

mod damping;
mod kick;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::eigen::LinearOperator;
use crate::error::{Error, Result};
use crate::params::MapParams;
use crate::rng;

pub use damping::{damping_channel, damping_channel_checked, dissipator, rk4_substeps, DampingMethod, DampingPropagator};
pub use kick::KickPropagator;

type C64 = Complex64;

/// Smallest `m_max` ever used.
pub const MIN_M_MAX: usize = 32;

/// Default cap on the basis dimension.
pub const DEFAULT_DIM_CAP: usize = 4001;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HilbertSpace {
    pub m_max: usize,
    pub dim: usize,
    pub hbar_eff: f64,
    pub margin: f64,
    /// Classical momentum band the basis was sized for.
    pub p_band: f64,
}

impl HilbertSpace {
    pub fn with_m_max(m_max: usize, hbar_eff: f64) -> Self {
        Self {
            m_max,
            dim: 2 * m_max + 1,
            hbar_eff,
            margin: f64::NAN,
            p_band: hbar_eff * m_max as f64,
        }
    }

    /// Basis index of momentum quantum number `n`.
    #[inline]
    pub fn index(&self, n: i64) -> usize {
        (n + self.m_max as i64) as usize
    }

    /// Momentum quantum number of basis index `a`.
    #[inline]
    pub fn quantum_number(&self, a: usize) -> i64 {
        a as i64 - self.m_max as i64
    }

    pub fn momentum(&self, a: usize) -> f64 {
        self.hbar_eff * self.quantum_number(a) as f64
    }
}

/// `m_max = max(ceil(margin p_band / hbar_eff), 32)`.
pub fn build_space(params: &MapParams, margin: f64, dim_cap: usize) -> Result<HilbertSpace> {
    params.validate()?;
    if !(margin >= 1.0) {
        return Err(Error::InvalidParams(format!("margin = {margin} must be >= 1")));
    }
    let band = params.finite_band()?;
    let need = (margin * band / params.hbar_eff).ceil();
    if need > (dim_cap / 2) as f64 {
        return Err(Error::TruncationTooLarge {
            dim: 2 * need as usize + 1,
            cap: dim_cap,
        });
    }
    let m_max = (need as usize).max(MIN_M_MAX);
    let dim = 2 * m_max + 1;
    if dim > dim_cap {
        return Err(Error::TruncationTooLarge { dim, cap: dim_cap });
    }
    Ok(HilbertSpace {
        m_max,
        dim,
        hbar_eff: params.hbar_eff,
        margin,
        p_band: band,
    })
}

/// Square complex matrix in the momentum basis, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    pub dim: usize,
    pub data: Vec<C64>,
}

impl DensityMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![C64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn from_data(dim: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::ShapeMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    /// `|psi><psi|`
    pub fn pure(psi: &[C64]) -> Self {
        let dim = psi.len();
        let mut rho = Self::zeros(dim);
        for a in 0..dim {
            for b in 0..dim {
                rho.data[a * dim + b] = psi[a] * psi[b].conj();
            }
        }
        rho
    }

    /// Momentum eigenstate `|n><n|`.
    pub fn basis_state(space: &HilbertSpace, n: i64) -> Self {
        let mut rho = Self::zeros(space.dim);
        let a = space.index(n);
        rho.data[a * space.dim + a] = C64::new(1.0, 0.0);
        rho
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let mut rho = Self::zeros(dim);
        for a in 0..dim {
            rho.data[a * dim + a] = C64::new(1.0 / dim as f64, 0.0);
        }
        rho
    }

    /// `G G^H / Tr` for a seeded Ginibre matrix `G`.
    pub fn random(dim: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, 0);
        let g: Vec<C64> = (0..dim * dim)
            .map(|_| C64::new(r.gen::<f64>() - 0.5, r.gen::<f64>() - 0.5))
            .collect();
        let mut rho = Self::zeros(dim);
        for a in 0..dim {
            for b in a..dim {
                let s: C64 = (0..dim)
                    .map(|c| g[a * dim + c] * g[b * dim + c].conj())
                    .sum();
                rho.data[a * dim + b] = s;
                rho.data[b * dim + a] = s.conj();
            }
        }
        let tr = rho.trace().re;
        rho.data.iter_mut().for_each(|z| *z /= tr);
        rho
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> C64 {
        self.data[a * self.dim + b]
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|a| self.get(a, a)).sum()
    }

    /// `max |rho - rho^H|`
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..self.dim {
            for b in a..self.dim {
                worst = worst.max((self.get(a, b) - self.get(b, a).conj()).norm());
            }
        }
        worst
    }

    pub fn purity(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.purity().sqrt()
    }

    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = DMatrix::from_fn(self.dim, self.dim, |a, b| {
            0.5 * (self.get(a, b) + self.get(b, a).conj())
        });
        m.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim).map(|a| self.get(a, a).re).collect()
    }

    pub fn scaled(mut self, s: C64) -> Self {
        self.data.iter_mut().for_each(|z| *z *= s);
        self
    }
}

/// `sum_n n rho_nn`
pub fn expectation_n(rho: &DensityMatrix) -> f64 {
    let m_max = (rho.dim / 2) as i64;
    (0..rho.dim)
        .map(|a| (a as i64 - m_max) as f64 * rho.get(a, a).re)
        .sum()
}

pub fn apply_rotation(rho: &mut DensityMatrix, space: &HilbertSpace) {
    let phases = rotation_phases(space);
    apply_rotation_with(&mut rho.data, &phases);
}

fn rotation_phases(space: &HilbertSpace) -> Vec<C64> {
    (0..space.dim)
        .map(|a| {
            let n = space.quantum_number(a) as f64;
            // reduce n^2 hbar / 2 modulo 2 pi before exponentiating
            let phase = (0.5 * space.hbar_eff * n * n).rem_euclid(std::f64::consts::TAU);
            C64::from_polar(1.0, -phase)
        })
        .collect()
}

fn apply_rotation_with(data: &mut [C64], phases: &[C64]) {
    let dim = phases.len();
    for (a, row) in data.chunks_mut(dim).enumerate() {
        let pa = phases[a];
        for (z, pb) in row.iter_mut().zip(phases) {
            *z *= pa * pb.conj();
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Rotation,
    Damping,
    Kick,
}

/// How one period is assembled from its three channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Splitting {
    /// Stages applied left to right.
    Sequential { stages: [Stage; 3] },
    /// Rotation and damping integrated together over unit time (RK4 in the
    /// rotation's interaction picture, at least `n_sub` steps), followed by
    /// the kick.
    Simultaneous { n_sub: usize },
}

impl Default for Splitting {
    fn default() -> Self {
        Splitting::Sequential {
            stages: [Stage::Damping, Stage::Kick, Stage::Rotation],
        }
    }
}

impl Splitting {
    /// Every sequential ordering plus the simultaneous mode.
    pub fn all(n_sub: usize) -> Vec<Splitting> {
        use Stage::*;
        let perms = [
            [Damping, Kick, Rotation],
            [Rotation, Damping, Kick],
            [Kick, Rotation, Damping],
            [Damping, Rotation, Kick],
            [Rotation, Kick, Damping],
            [Kick, Damping, Rotation],
        ];
        perms
            .into_iter()
            .map(|stages| Splitting::Sequential { stages })
            .chain(std::iter::once(Splitting::Simultaneous { n_sub }))
            .collect()
    }

    pub fn label(&self) -> String {
        match self {
            Splitting::Sequential { stages } => stages
                .iter()
                .map(|s| match s {
                    Stage::Rotation => "rotation",
                    Stage::Damping => "damping",
                    Stage::Kick => "kick",
                })
                .collect::<Vec<_>>()
                .join(","),
            Splitting::Simultaneous { n_sub } => format!("simultaneous(n_sub={n_sub})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeriodConfig {
    pub splitting: Splitting,
    pub damping: DampingMethod,
}

impl Default for PeriodConfig {
    fn default() -> Self {
        Self {
            splitting: Splitting::default(),
            damping: DampingMethod::Exact,
        }
    }
}

/// One period of the quantum map as a matrix-free superoperator acting on
/// row-major vectorized matrices.
pub struct PeriodMap {
    pub space: HilbertSpace,
    pub params: MapParams,
    pub config: PeriodConfig,
    kick: KickPropagator,
    damping: DampingPropagator,
    phases: Vec<C64>,
}

impl PeriodMap {
    pub fn new(space: HilbertSpace, params: MapParams, config: PeriodConfig) -> Result<Self> {
        params.validate()?;
        if let DampingMethod::Rk4 { n_sub } = config.damping {
            if n_sub == 0 {
                return Err(Error::InvalidParams("rk4 needs n_sub >= 1".into()));
            }
        }
        if let Splitting::Simultaneous { n_sub } = config.splitting {
            if n_sub == 0 {
                return Err(Error::InvalidParams("simultaneous mode needs n_sub >= 1".into()));
            }
        }
        Ok(Self {
            kick: KickPropagator::new(&space, &params),
            damping: DampingPropagator::new(&space, &params),
            phases: rotation_phases(&space),
            space,
            params,
            config,
        })
    }

    fn stage(&self, stage: Stage, data: &mut [C64]) {
        match stage {
            Stage::Rotation => apply_rotation_with(data, &self.phases),
            Stage::Kick => self.kick.apply(data),
            Stage::Damping => match self.config.damping {
                DampingMethod::Exact => self.damping.apply(data),
                DampingMethod::Rk4 { n_sub } => {
                    damping::rk4_in_place(data, &self.space, &self.params, n_sub, false)
                }
            },
        }
    }

    /// Advance a vectorized matrix by one period, in place.
    pub fn apply_in_place(&self, data: &mut [C64]) {
        match self.config.splitting {
            Splitting::Sequential { stages } => {
                for s in stages {
                    self.stage(s, data);
                }
            }
            Splitting::Simultaneous { n_sub } => {
                damping::rk4_in_place(data, &self.space, &self.params, n_sub, true);
                self.kick.apply(data);
            }
        }
    }

    pub fn apply_to(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim != self.space.dim {
            return Err(Error::ShapeMismatch {
                expected: self.space.dim,
                got: rho.dim,
            });
        }
        let mut out = rho.clone();
        self.apply_in_place(&mut out.data);
        Ok(out)
    }

    pub fn kick(&self) -> &KickPropagator {
        &self.kick
    }
}

impl LinearOperator for PeriodMap {
    fn dim(&self) -> usize {
        self.space.dim * self.space.dim
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        y.copy_from_slice(x);
        self.apply_in_place(y);
    }
}

/// Convenience wrapper: one period with the default configuration.
pub fn period_superoperator_apply(
    rho: &DensityMatrix,
    space: &HilbertSpace,
    params: &MapParams,
) -> Result<DensityMatrix> {
    PeriodMap::new(*space, *params, PeriodConfig::default())?.apply_to(rho)
}

pub fn apply_kick(rho: &DensityMatrix, space: &HilbertSpace, params: &MapParams) -> DensityMatrix {
    let mut out = rho.clone();
    KickPropagator::new(space, params).apply(&mut out.data);
    out
}

/// Population on `|n| > m_max - edge`.
pub fn edge_population(rho: &DensityMatrix, space: &HilbertSpace, edge: usize) -> f64 {
    let cut = space.m_max.saturating_sub(edge) as i64;
    (0..rho.dim)
        .filter(|&a| space.quantum_number(a).abs() > cut)
        .map(|a| rho.get(a, a).re)
        .sum()
}

/// Reshape an eigenvector of the period map into an operator, fix its phase
/// so the largest entry is real positive, and give it unit Frobenius norm.
pub fn eigen_operator(vec: &[C64], dim: usize) -> Result<DensityMatrix> {
    let mut v = vec.to_vec();
    crate::eigen::normalize_phase(&mut v);
    DensityMatrix::from_data(dim, v)
}

/// Rescale an operator to unit trace (for the invariant state).
pub fn to_unit_trace(op: &DensityMatrix) -> DensityMatrix {
    let tr = op.trace();
    op.clone().scaled(C64::new(1.0, 0.0) / tr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(k: f64) -> MapParams {
        MapParams::new(k, 0.33, 0.042).unwrap()
    }

    #[test]
    fn space_size_from_band() {
        let s = build_space(&params(4.0), 1.5, DEFAULT_DIM_CAP).unwrap();
        assert_eq!(s.m_max, 214);
        assert_eq!(s.dim, 429);
        assert!(s.hbar_eff * s.m_max as f64 >= 1.5 * params(4.0).p_band());
    }

    #[test]
    fn degenerate_band_uses_floor() {
        let s = build_space(&params(0.0), 1.0, DEFAULT_DIM_CAP).unwrap();
        assert_eq!(s.m_max, MIN_M_MAX);
        assert_eq!(s.dim % 2, 1);
    }

    #[test]
    fn margin_monotonicity() {
        let p = MapParams::new(4.0, 0.33, 0.1).unwrap();
        let a = build_space(&p, 1.5, DEFAULT_DIM_CAP).unwrap();
        let b = build_space(&p, 3.0, DEFAULT_DIM_CAP).unwrap();
        assert!(b.m_max >= 2 * a.m_max - 1);
        assert!(b.m_max as f64 >= 2.0 * (1.5 * p.p_band() / p.hbar_eff));
    }

    #[test]
    fn cap_and_margin_errors() {
        assert!(matches!(
            build_space(&params(4.0), 1.5, 101),
            Err(Error::TruncationTooLarge { .. })
        ));
        assert!(build_space(&params(4.0), 0.5, DEFAULT_DIM_CAP).is_err());
    }

    #[test]
    fn expectation_values() {
        let s = HilbertSpace::with_m_max(10, 0.1);
        assert_eq!(expectation_n(&DensityMatrix::basis_state(&s, 0)), 0.0);
        assert_eq!(expectation_n(&DensityMatrix::basis_state(&s, 5)), 5.0);
        let mut mix = DensityMatrix::basis_state(&s, 3);
        let other = DensityMatrix::basis_state(&s, -3);
        for (a, b) in mix.data.iter_mut().zip(&other.data) {
            *a = 0.5 * (*a + b);
        }
        assert_eq!(expectation_n(&mix), 0.0);
    }

    #[test]
    fn rotation_phases() {
        let s = HilbertSpace::with_m_max(4, 0.042);
        let rho = DensityMatrix::random(s.dim, 1);
        let mut r = rho.clone();
        apply_rotation(&mut r, &s);
        for a in 0..s.dim {
            assert!((r.get(a, a) - rho.get(a, a)).norm() < 1e-15);
        }
        let (p1, m1) = (s.index(1), s.index(-1));
        assert!((r.get(p1, m1) - rho.get(p1, m1)).norm() < 1e-15);
        let (p2, z) = (s.index(2), s.index(0));
        let expected = rho.get(p2, z) * C64::from_polar(1.0, -0.042 * 2.0);
        assert!((r.get(p2, z) - expected).norm() < 1e-15);
    }

    #[test]
    fn random_states_are_valid() {
        let rho = DensityMatrix::random(15, 4);
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
        assert!(rho.hermiticity_error() < 1e-15);
        assert!(rho.min_eigenvalue() > -1e-12);
    }

    #[test]
    fn splitting_labels() {
        assert_eq!(Splitting::default().label(), "damping,kick,rotation");
        assert_eq!(Splitting::all(32).len(), 7);
    }
}

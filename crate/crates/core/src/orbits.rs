//! Periodic orbits (limit cycles) of the classical map.
//!
//! A `(q, w)` orbit returns to its starting point after `q` steps having
//! advanced by `2 pi w` in `x` on the universal cover. Orbits are found by
//! damped Newton iteration on `G(z) = f^q(z) - z - (2 pi w, 0)` with the
//! analytic tangent map, and classified by the eigenvalues of the monodromy
//! matrix.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{angle_diff, jacobian, lift_step, linspace, reduce_angle, PhasePoint};
use crate::error::{Error, Result};
use crate::params::MapParams;

pub type Mat2 = [[f64; 2]; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub points: Vec<PhasePoint>,
    pub period_q: usize,
    pub winding_w: i64,
    pub multipliers: [Complex64; 2],
    pub residual: f64,
}

impl PeriodicOrbit {
    pub fn max_multiplier(&self) -> f64 {
        self.multipliers[0].norm().max(self.multipliers[1].norm())
    }

    pub fn is_stable(&self) -> bool {
        self.max_multiplier() < 1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
            max_halvings: 8,
        }
    }
}

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

fn det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// `q`-fold composition on the lift together with its tangent map.
fn compose(x: f64, p: f64, q: usize, params: &MapParams) -> ((f64, f64), Mat2) {
    let mut m = [[1.0, 0.0], [0.0, 1.0]];
    let (mut x, mut p) = (x, p);
    for _ in 0..q {
        m = mat_mul(&jacobian(x, params), &m);
        (x, p) = lift_step(x, p, params);
    }
    ((x, p), m)
}

fn closure_residual(x: f64, p: f64, q: usize, w: i64, params: &MapParams) -> ([f64; 2], Mat2) {
    let ((xq, pq), m) = compose(x, p, q, params);
    ([xq - x - TAU * w as f64, pq - p], m)
}

fn norm2(v: &[f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Eigenvalues of a real 2x2 matrix.
pub fn eigenvalues2(m: &Mat2) -> [Complex64; 2] {
    let half_tr = 0.5 * (m[0][0] + m[1][1]);
    let disc = Complex64::new(half_tr * half_tr - det(m), 0.0).sqrt();
    let h = Complex64::new(half_tr, 0.0);
    [h + disc, h - disc]
}

/// Product of single-step Jacobians along the orbit, latest step leftmost.
pub fn monodromy(orbit: &PeriodicOrbit, params: &MapParams) -> Mat2 {
    orbit
        .points
        .iter()
        .fold([[1.0, 0.0], [0.0, 1.0]], |m, z| {
            mat_mul(&jacobian(z.x, params), &m)
        })
}

pub fn find_periodic_orbit(
    params: &MapParams,
    q: usize,
    w: i64,
    guess: PhasePoint,
    config: &NewtonConfig,
) -> Result<PeriodicOrbit> {
    if q == 0 {
        return Err(Error::InvalidParams("period q must be >= 1".into()));
    }
    if !(guess.x.is_finite() && guess.p.is_finite()) {
        return Err(Error::InvalidParams("non-finite initial guess".into()));
    }
    let (mut x, mut p) = (guess.x, guess.p);
    let (mut g, mut m) = closure_residual(x, p, q, w, params);
    let mut g_norm = norm2(&g);
    let mut iter = 0;
    while g_norm >= config.tol {
        if iter == config.max_iter || !g_norm.is_finite() {
            return Err(Error::NoConvergence {
                max_iter: config.max_iter,
                residual: g_norm,
            });
        }
        iter += 1;
        // (M - I) dz = -G
        let a = [[m[0][0] - 1.0, m[0][1]], [m[1][0], m[1][1] - 1.0]];
        let d = det(&a);
        let scale = (a[0][0].abs() + a[0][1].abs()) * (a[1][0].abs() + a[1][1].abs());
        if d.abs() <= 1e-14 * scale.max(1.0) {
            return Err(Error::SingularJacobian { det: d });
        }
        let dx = -(a[1][1] * g[0] - a[0][1] * g[1]) / d;
        let dp = -(-a[1][0] * g[0] + a[0][0] * g[1]) / d;

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let (xn, pn) = (x + step * dx, p + step * dp);
            let (gn, mn) = closure_residual(xn, pn, q, w, params);
            let nn = norm2(&gn);
            if nn < g_norm {
                accepted = Some((xn, pn, gn, mn, nn));
                break;
            }
            accepted = Some((xn, pn, gn, mn, nn));
            step *= 0.5;
        }
        let (xn, pn, gn, mn, nn) = accepted.expect("at least one trial step");
        (x, p, g, m, g_norm) = (xn, pn, gn, mn, nn);
    }

    let mut points = Vec::with_capacity(q);
    let (mut xi, mut pi) = (x, p);
    for _ in 0..q {
        points.push(PhasePoint::new(xi, pi));
        (xi, pi) = lift_step(xi, pi, params);
    }
    Ok(PeriodicOrbit {
        points,
        period_q: q,
        winding_w: w,
        multipliers: eigenvalues2(&m),
        residual: g_norm,
    })
}

fn points_close(a: &PhasePoint, b: &PhasePoint, tol: f64) -> bool {
    angle_diff(a.x, b.x).abs() < tol && (a.p - b.p).abs() < tol
}

/// Smallest period of the point sequence (divides `q`).
fn minimal_period(orbit: &PeriodicOrbit, tol: f64) -> usize {
    let q = orbit.period_q;
    (1..q)
        .filter(|d| q.is_multiple_of(*d))
        .find(|&d| points_close(&orbit.points[0], &orbit.points[d], tol))
        .unwrap_or(q)
}

/// Image under the map's parity symmetry `(x, p) -> (-x, -p)`. The
/// winding number flips sign and the multipliers are unchanged.
pub fn parity_mirror(orbit: &PeriodicOrbit) -> PeriodicOrbit {
    PeriodicOrbit {
        points: orbit
            .points
            .iter()
            .map(|z| PhasePoint::new(reduce_angle(-z.x), -z.p))
            .collect(),
        period_q: orbit.period_q,
        winding_w: -orbit.winding_w,
        multipliers: orbit.multipliers,
        residual: orbit.residual,
    }
}

/// Whether two orbits trace the same cycle, up to a cyclic shift.
pub fn same_orbit(a: &PeriodicOrbit, b: &PeriodicOrbit, tol: f64) -> bool {
    if a.period_q != b.period_q || a.winding_w != b.winding_w {
        return false;
    }
    let q = a.period_q;
    (0..q).any(|s| (0..q).all(|i| points_close(&a.points[i], &b.points[(i + s) % q], tol)))
}

/// Merge duplicate orbits (first occurrence wins) and sort by residual, then
/// by largest multiplier modulus.
pub fn dedup_orbits(orbits: Vec<PeriodicOrbit>) -> Vec<PeriodicOrbit> {
    let mut unique: Vec<PeriodicOrbit> = Vec::new();
    for o in orbits {
        if !unique.iter().any(|u| same_orbit(u, &o, 1e-6)) {
            unique.push(o);
        }
    }
    unique.sort_by(|a, b| {
        a.residual
            .total_cmp(&b.residual)
            .then(a.max_multiplier().total_cmp(&b.max_multiplier()))
    });
    unique
}

/// Newton from every node of a `grid_n x grid_n` lattice over
/// `[0, 2pi) x [-p_band, p_band]`. Only orbits whose minimal period is `q`
/// are kept, so a `(2, 2)` search does not report the `(1, 1)` orbit.
pub fn seed_orbit_search(
    params: &MapParams,
    q: usize,
    w: i64,
    grid_n: usize,
    config: &NewtonConfig,
) -> Result<Vec<PeriodicOrbit>> {
    if grid_n < 2 {
        return Err(Error::InvalidParams("grid_n must be >= 2".into()));
    }
    let band = params.finite_band()?;
    let xs: Vec<f64> = (0..grid_n).map(|i| TAU * i as f64 / grid_n as f64).collect();
    let ps = linspace(-band, band, grid_n);
    let seeds: Vec<PhasePoint> = ps
        .iter()
        .flat_map(|&p| xs.iter().map(move |&x| PhasePoint::new(x, p)))
        .collect();
    let found: Vec<PeriodicOrbit> = seeds
        .par_iter()
        .filter_map(|&s| find_periodic_orbit(params, q, w, s, config).ok())
        .filter(|o| minimal_period(o, 1e-6) == q)
        .collect();
    Ok(dedup_orbits(found))
}

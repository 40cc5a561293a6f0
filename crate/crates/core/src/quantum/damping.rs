//! Lindblad amplitude damping toward `n = 0` from both sides of the ladder.
//!
//! `L1` lowers `n >= 1` and `L2` raises `n <= -1`; `L1^H L1` and `L2^H L2`
//! have disjoint supports, so each half-ladder is an ordinary amplitude
//! damping channel with survival probability `eta = exp(-g^2) = gamma` per
//! unit time. In Kraus form, for same-sign entries with `|n| = a`, `|m| = b`:
//!
//! ```text
//! rho'(a, b) = sum_l f(a, l) f(b, l) rho(a + l, b + l)
//! f(a, l)^2  = C(a + l, l) eta^a (1 - eta)^l
//! ```
//!
//! Mixed-sign coherences only decay, by `eta^((a + b) / 2)`. Both ladders end
//! on `|0><0|`, which collects the inflow of each.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DensityMatrix, HilbertSpace};
use crate::error::{Error, Result};
use crate::params::MapParams;

type C64 = Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum DampingMethod {
    /// Closed-form channel.
    Exact,
    /// Classical fourth-order Runge–Kutta over unit time.
    Rk4 { n_sub: usize },
}

/// Precomputed `f(a, l)` table for the exact channel.
#[derive(Clone, Debug)]
pub struct DampingPropagator {
    m_max: usize,
    /// `table[a][l]`, `a + l <= m_max`.
    table: Vec<Vec<f64>>,
}

fn ln_pow(count: usize, ln_base: f64) -> f64 {
    if count == 0 {
        0.0
    } else {
        count as f64 * ln_base
    }
}

impl DampingPropagator {
    pub fn new(space: &HilbertSpace, params: &MapParams) -> Self {
        Self::with_survival(space.m_max, params.gamma)
    }

    /// Channel with survival probability `eta` per quantum.
    pub fn with_survival(m_max: usize, eta: f64) -> Self {
        let mut ln_fact = vec![0.0; m_max + 1];
        for i in 1..=m_max {
            ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
        }
        let (ln_eta, ln_loss) = (eta.ln(), (1.0 - eta).ln());
        let table = (0..=m_max)
            .map(|a| {
                (0..=(m_max - a))
                    .map(|l| {
                        let ln_sq = ln_fact[a + l] - ln_fact[a] - ln_fact[l]
                            + ln_pow(a, ln_eta)
                            + ln_pow(l, ln_loss);
                        (0.5 * ln_sq).exp()
                    })
                    .collect()
            })
            .collect();
        Self { m_max, table }
    }

    fn f(&self, a: usize, l: usize) -> f64 {
        self.table[a][l]
    }

    /// Outputs along one same-sign diagonal. `s[t]` holds the entry with
    /// `(|n|, |m|) = (t + u, t + v)`.
    fn diagonal(&self, s: &[C64], u: usize, v: usize) -> Vec<C64> {
        let len = s.len();
        (0..len)
            .map(|t| {
                let fa = &self.table[t + u];
                let fb = &self.table[t + v];
                let mut acc = C64::new(0.0, 0.0);
                for l in 0..(len - t) {
                    acc += (fa[l] * fb[l]) * s[t + l];
                }
                acc
            })
            .collect()
    }

    /// Apply the channel in place to a row-major matrix.
    pub fn apply(&self, data: &mut [C64]) {
        let m = self.m_max;
        let dim = 2 * m + 1;
        debug_assert_eq!(data.len(), dim * dim);
        let rho00 = data[m * dim + m];

        // (sign, delta) for every same-sign diagonal; sign +1 maps |n| = i to
        // index m + i, sign -1 to m - i.
        let diagonals: Vec<(i64, i64)> = [1i64, -1]
            .iter()
            .flat_map(|&sg| (-(m as i64)..=(m as i64)).map(move |d| (sg, d)))
            .collect();
        let idx = |sg: i64, i: usize| (m as i64 + sg * i as i64) as usize;
        let snapshot: &[C64] = data;
        let results: Vec<Vec<C64>> = diagonals
            .par_iter()
            .map(|&(sg, d)| {
                let (u, v) = ((-d).max(0) as usize, d.max(0) as usize);
                let len = m + 1 - d.unsigned_abs() as usize;
                let s: Vec<C64> = (0..len)
                    .map(|t| snapshot[idx(sg, t + u) * dim + idx(sg, t + v)])
                    .collect();
                self.diagonal(&s, u, v)
            })
            .collect();

        let mut origin = -rho00;
        for (&(sg, d), out) in diagonals.iter().zip(&results) {
            let (u, v) = ((-d).max(0) as usize, d.max(0) as usize);
            for (t, z) in out.iter().enumerate() {
                let (a, b) = (idx(sg, t + u), idx(sg, t + v));
                if a == m && b == m {
                    origin += z;
                } else {
                    data[a * dim + b] = *z;
                }
            }
        }
        data[m * dim + m] = origin;

        // opposite-sign coherences: pure decay
        data.par_chunks_mut(dim).enumerate().for_each(|(a, row)| {
            let n = a as i64 - m as i64;
            if n == 0 {
                return;
            }
            let range = if n > 0 { 0..m } else { (m + 1)..dim };
            for b in range {
                let mm = b as i64 - m as i64;
                row[b] *= self.f(n.unsigned_abs() as usize, 0) * self.f(mm.unsigned_abs() as usize, 0);
            }
        });
    }
}

/// Elementwise Lindblad dissipator `D(rho)`.
pub fn dissipator(rho: &DensityMatrix, space: &HilbertSpace, params: &MapParams) -> DensityMatrix {
    let mut out = DensityMatrix::zeros(rho.dim);
    dissipator_into(&rho.data, &mut out.data, space, params.coupling_sq());
    out
}

/// Writes `D(src)` into `dst`.
fn dissipator_into(src: &[C64], dst: &mut [C64], space: &HilbertSpace, g2: f64) {
    let m = space.m_max as i64;
    let dim = space.dim;
    dst.par_chunks_mut(dim).enumerate().for_each(|(a, row)| {
        let n = a as i64 - m;
        for (b, out) in row.iter_mut().enumerate() {
            let mm = b as i64 - m;
            let mut acc = -0.5 * g2 * (n.abs() + mm.abs()) as f64 * src[a * dim + b];
            if n >= 0 && mm >= 0 && n < m && mm < m {
                acc += g2 * (((n + 1) * (mm + 1)) as f64).sqrt() * src[(a + 1) * dim + b + 1];
            }
            if n <= 0 && mm <= 0 && n > -m && mm > -m {
                acc += g2 * (((1 - n) * (1 - mm)) as f64).sqrt() * src[(a - 1) * dim + b - 1];
            }
            *out = acc;
        }
    });
}

/// Largest RK4 step that keeps the stiffest decay rate `g^2 m_max` inside
/// the real stability interval (about 2.785) with a wide margin; the
/// ladder generator is far from normal and transient growth appears near
/// the edge.
const RK4_STEP_LIMIT: f64 = 1.5;

/// Substeps actually used: `n_sub`, raised if needed for stability.
pub fn rk4_substeps(space: &HilbertSpace, params: &MapParams, n_sub: usize) -> usize {
    let stiff = params.coupling_sq() * space.m_max as f64;
    n_sub.max(1).max((stiff / RK4_STEP_LIMIT).ceil() as usize)
}

/// Fourth-order Runge–Kutta over unit time.
///
/// Without rotation this integrates `d rho / dt = D(rho)`. With it, the free
/// rotation and damping are integrated together in the interaction picture
/// of the rotation: the rotation phases are applied exactly and RK4 acts on
/// the dissipator. Populations never rotate, so trace is conserved as in
/// plain RK4.
pub(crate) fn rk4_in_place(
    data: &mut [C64],
    space: &HilbertSpace,
    params: &MapParams,
    n_sub: usize,
    with_rotation: bool,
) {
    let g2 = params.coupling_sq();
    let n_sub = rk4_substeps(space, params, n_sub);
    let h = 1.0 / n_sub as f64;
    let len = data.len();
    let mut k1 = vec![C64::new(0.0, 0.0); len];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut tmp = k1.clone();
    let d = |src: &[C64], dst: &mut [C64]| dissipator_into(src, dst, space, g2);

    if !with_rotation {
        for _ in 0..n_sub {
            d(data, &mut k1);
            combine(&mut tmp, data, &k1, 0.5 * h);
            d(&tmp, &mut k2);
            combine(&mut tmp, data, &k2, 0.5 * h);
            d(&tmp, &mut k3);
            combine(&mut tmp, data, &k3, h);
            d(&tmp, &mut k4);
            data.par_iter_mut().enumerate().for_each(|(i, z)| {
                *z += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            });
        }
        return;
    }

    let dim = space.dim;
    let rate = |i: usize| -> f64 {
        let (n, m) = (space.quantum_number(i / dim), space.quantum_number(i % dim));
        -0.5 * space.hbar_eff * (n * n - m * m) as f64
    };
    let e_half: Vec<C64> = (0..len).map(|i| C64::from_polar(1.0, 0.5 * h * rate(i))).collect();
    let e_full: Vec<C64> = e_half.iter().map(|z| z * z).collect();
    for _ in 0..n_sub {
        d(data, &mut k1);
        tmp.par_iter_mut().enumerate().for_each(|(i, z)| {
            *z = e_half[i] * (data[i] + 0.5 * h * k1[i]);
        });
        d(&tmp, &mut k2);
        tmp.par_iter_mut().enumerate().for_each(|(i, z)| {
            *z = e_half[i] * data[i] + 0.5 * h * k2[i];
        });
        d(&tmp, &mut k3);
        tmp.par_iter_mut().enumerate().for_each(|(i, z)| {
            *z = e_full[i] * data[i] + h * e_half[i] * k3[i];
        });
        d(&tmp, &mut k4);
        data.par_iter_mut().enumerate().for_each(|(i, z)| {
            *z = e_full[i] * (*z + h / 6.0 * k1[i])
                + h / 3.0 * e_half[i] * (k2[i] + k3[i])
                + h / 6.0 * k4[i];
        });
    }
}

fn combine(out: &mut [C64], base: &[C64], k: &[C64], s: f64) {
    out.par_iter_mut()
        .enumerate()
        .for_each(|(i, z)| *z = base[i] + s * k[i]);
}

/// Integrate the dissipator over unit time.
pub fn damping_channel(
    rho: &DensityMatrix,
    space: &HilbertSpace,
    params: &MapParams,
    method: DampingMethod,
) -> DensityMatrix {
    let mut out = rho.clone();
    match method {
        DampingMethod::Exact => DampingPropagator::new(space, params).apply(&mut out.data),
        DampingMethod::Rk4 { n_sub } => rk4_in_place(&mut out.data, space, params, n_sub, false),
    }
    out
}

/// Exact channel, cross-checked against rk4 with `n_sub` steps.
pub fn damping_channel_checked(
    rho: &DensityMatrix,
    space: &HilbertSpace,
    params: &MapParams,
    n_sub: usize,
    tol: f64,
) -> Result<DensityMatrix> {
    let exact = damping_channel(rho, space, params, DampingMethod::Exact);
    let rk4 = damping_channel(rho, space, params, DampingMethod::Rk4 { n_sub });
    let diff = exact
        .data
        .iter()
        .zip(&rk4.data)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    if diff > tol {
        return Err(Error::MethodMismatch { diff, tol });
    }
    Ok(exact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::expectation_n;

    fn space(m: usize) -> HilbertSpace {
        HilbertSpace::with_m_max(m, 0.1)
    }

    fn params(gamma: f64) -> MapParams {
        MapParams::new(1.0, gamma, 0.1).unwrap()
    }

    /// Dense `L1`, `L2` for the truncated ladder.
    fn jump_operators(s: &HilbertSpace, g: f64) -> [Vec<C64>; 2] {
        let d = s.dim;
        let m = s.m_max as i64;
        let mut l1 = vec![C64::new(0.0, 0.0); d * d];
        let mut l2 = l1.clone();
        for n in 0..m {
            let amp = g * ((n + 1) as f64).sqrt();
            l1[s.index(n) * d + s.index(n + 1)] = C64::new(amp, 0.0);
            l2[s.index(-n) * d + s.index(-n - 1)] = C64::new(amp, 0.0);
        }
        [l1, l2]
    }

    fn matmul(a: &[C64], b: &[C64], d: usize) -> Vec<C64> {
        let mut c = vec![C64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for k in 0..d {
                let aik = a[i * d + k];
                if aik == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..d {
                    c[i * d + j] += aik * b[k * d + j];
                }
            }
        }
        c
    }

    fn adjoint(a: &[C64], d: usize) -> Vec<C64> {
        (0..d * d).map(|i| a[(i % d) * d + i / d].conj()).collect()
    }

    fn brute_dissipator(rho: &[C64], s: &HilbertSpace, g: f64) -> Vec<C64> {
        let d = s.dim;
        let mut out = vec![C64::new(0.0, 0.0); d * d];
        for l in jump_operators(s, g) {
            let ld = adjoint(&l, d);
            let jump = matmul(&matmul(&l, rho, d), &ld, d);
            let ldl = matmul(&ld, &l, d);
            let left = matmul(&ldl, rho, d);
            let right = matmul(rho, &ldl, d);
            for i in 0..d * d {
                out[i] += jump[i] - 0.5 * (left[i] + right[i]);
            }
        }
        out
    }

    #[test]
    fn elementwise_dissipator_matches_operator_form() {
        for m in [1, 3, 10] {
            let s = space(m);
            let p = params(0.33);
            let rho = DensityMatrix::random(s.dim, m as u64);
            let fast = dissipator(&rho, &s, &p);
            let brute = brute_dissipator(&rho.data, &s, p.coupling_sq().sqrt());
            let err = fast
                .data
                .iter()
                .zip(&brute)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-13, "m = {m}: {err}");
        }
    }

    #[test]
    fn ground_state_is_dark() {
        let s = space(8);
        let rho = DensityMatrix::basis_state(&s, 0);
        let d = dissipator(&rho, &s, &params(0.33));
        assert!(d.data.iter().all(|z| z.norm() == 0.0));
        let out = damping_channel(&rho, &s, &params(0.33), DampingMethod::Exact);
        assert!(out.frobenius_distance(&rho) < 1e-15);
    }

    #[test]
    fn dissipator_is_traceless() {
        let s = space(12);
        let mut rho = DensityMatrix::random(s.dim, 5);
        // Hermitian but not positive
        for a in 0..s.dim {
            rho.data[a * s.dim + a] -= C64::new(0.1, 0.0);
        }
        let d = dissipator(&rho, &s, &params(0.33));
        assert!(d.trace().norm() < 1e-12);
    }

    #[test]
    fn mean_momentum_decays_at_rate_g2() {
        // states on n >= 0: d<n>/dt = -g^2 <n>
        let s = space(10);
        let p = params(0.33);
        let mut psi = vec![C64::new(0.0, 0.0); s.dim];
        for n in 0..=10 {
            psi[s.index(n)] = C64::new(1.0 / (1.0 + n as f64), 0.3 * n as f64);
        }
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        psi.iter_mut().for_each(|z| *z /= norm);
        let rho = DensityMatrix::pure(&psi);
        let d = dissipator(&rho, &s, &p);
        assert!((expectation_n(&d) + p.coupling_sq() * expectation_n(&rho)).abs() < 1e-13);
    }

    #[test]
    fn exact_channel_scales_mean_by_gamma() {
        for gamma in [0.1, 0.33, 0.9] {
            let s = space(25);
            let rho = DensityMatrix::random(s.dim, 11);
            let out = damping_channel(&rho, &s, &params(gamma), DampingMethod::Exact);
            assert!((expectation_n(&out) - gamma * expectation_n(&rho)).abs() < 1e-12);
            assert!((out.trace() - rho.trace()).norm() < 1e-13);
            assert!(out.hermiticity_error() < 1e-15);
            assert!(out.min_eigenvalue() > -1e-12);
        }
    }

    #[test]
    fn exact_matches_high_resolution_rk4() {
        // independent reference: rk4 at 256 substeps on dim 7
        let s = space(3);
        for gamma in [0.33, 0.5] {
            let p = params(gamma);
            let rho = DensityMatrix::random(s.dim, 21);
            let exact = damping_channel(&rho, &s, &p, DampingMethod::Exact);
            let rk4 = damping_channel(&rho, &s, &p, DampingMethod::Rk4 { n_sub: 256 });
            let err = exact
                .data
                .iter()
                .zip(&rk4.data)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-10, "gamma = {gamma}: {err}");
        }
    }

    #[test]
    fn rk4_preserves_mean_decay() {
        let s = space(10);
        for gamma in [0.1, 0.33, 0.9] {
            let rho = DensityMatrix::random(s.dim, 2);
            let out = damping_channel(&rho, &s, &params(gamma), DampingMethod::Rk4 { n_sub: 32 });
            assert!((expectation_n(&out) - gamma * expectation_n(&rho)).abs() < 1e-6);
        }
    }

    #[test]
    fn checked_mode_flags_coarse_rk4() {
        let s = space(10);
        let rho = DensityMatrix::random(s.dim, 2);
        let p = params(0.1);
        assert!(damping_channel_checked(&rho, &s, &p, 512, 1e-8).is_ok());
        assert!(matches!(
            damping_channel_checked(&rho, &s, &p, 1, 1e-8),
            Err(Error::MethodMismatch { .. })
        ));
    }

    #[test]
    fn joint_rotation_damping_matches_fine_rk4() {
        // reference: plain RK4 on the full generator with many small steps
        let s = HilbertSpace::with_m_max(3, 0.3);
        let p = MapParams::new(1.0, 0.5, 0.3).unwrap();
        let rho = DensityMatrix::random(s.dim, 4);
        let generator = |x: &[C64]| -> Vec<C64> {
            let mut out = dissipator(&DensityMatrix::from_data(s.dim, x.to_vec()).unwrap(), &s, &p).data;
            for (i, z) in out.iter_mut().enumerate() {
                let (n, m) = (s.quantum_number(i / s.dim), s.quantum_number(i % s.dim));
                *z += C64::new(0.0, -0.5 * 0.3 * (n * n - m * m) as f64) * x[i];
            }
            out
        };
        let steps = 4000;
        let h = 1.0 / steps as f64;
        let mut y = rho.data.clone();
        for _ in 0..steps {
            let add = |a: &[C64], b: &[C64], t: f64| -> Vec<C64> {
                a.iter().zip(b).map(|(u, v)| u + t * v).collect()
            };
            let k1 = generator(&y);
            let k2 = generator(&add(&y, &k1, 0.5 * h));
            let k3 = generator(&add(&y, &k2, 0.5 * h));
            let k4 = generator(&add(&y, &k3, h));
            for i in 0..y.len() {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        let mut fast = rho.data.clone();
        rk4_in_place(&mut fast, &s, &p, 64, true);
        let err = fast.iter().zip(&y).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn substeps_raised_for_stiff_ladders() {
        let p = params(0.33);
        assert_eq!(rk4_substeps(&space(10), &p, 32), 32);
        let big = space(366);
        let n = rk4_substeps(&big, &p, 8);
        assert!(n as f64 >= p.coupling_sq() * 366.0 / 2.5);
        let small = HilbertSpace::with_m_max(50, 0.1);
        let mut rho = DensityMatrix::random(small.dim, 1);
        let before = rho.trace();
        rk4_in_place(&mut rho.data, &small, &params(0.1), 1, true);
        assert!((rho.trace() - before).norm() < 1e-12);
        assert!(rho.data.iter().all(|z| z.norm() <= 1.0));
    }

    #[test]
    fn extreme_survival_values() {
        let s = space(5);
        let rho = DensityMatrix::random(s.dim, 8);
        let frozen = damping_channel(&rho, &s, &params(1.0), DampingMethod::Exact);
        assert!(frozen.frobenius_distance(&rho) < 1e-15);
        let collapsed = damping_channel(&rho, &s, &params(0.0), DampingMethod::Exact);
        let ground = DensityMatrix::basis_state(&s, 0);
        assert!(collapsed.frobenius_distance(&ground) < 1e-14);
    }
}

//! Matrix-free Arnoldi eigensolver for non-Hermitian operators.
//!
//! Krylov–Schur restarting: the Arnoldi factorization `A V = V H + v b^T`
//! is compressed after each sweep to the Schur vectors of the wanted
//! (largest-modulus) Ritz values, then expanded again. Orthogonalization is
//! modified Gram–Schmidt with one reorthogonalization pass. All reductions
//! run over fixed-size chunks summed in order, so results do not depend on
//! the number of worker threads.

use std::f64::consts::PI;

use log::debug;
use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

type C64 = Complex64;

const CHUNK: usize = 1 << 13;

/// A linear map on `C^dim`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64], y: &mut [C64]);
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        (**self).apply(x, y)
    }
}

/// Wraps a closure as an operator.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[C64], &mut [C64]) + Sync> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[C64], &mut [C64]) + Sync> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        (self.f)(x, y)
    }
}

/// Dense row-major operator, for small problems and tests.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    pub n: usize,
    pub data: Vec<C64>,
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        for (row, yi) in self.data.chunks(self.n).zip(y.iter_mut()) {
            *yi = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    let partial: Vec<C64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u.conj() * v).sum())
        .collect();
    partial.iter().sum()
}

pub fn norm(a: &[C64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .map(|x| x.iter().map(|u| u.norm_sqr()).sum())
        .collect();
    partial.iter().sum::<f64>().sqrt()
}

/// `y += alpha x`
pub fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    y.par_chunks_mut(CHUNK)
        .zip(x.par_chunks(CHUNK))
        .for_each(|(yc, xc)| {
            for (u, v) in yc.iter_mut().zip(xc) {
                *u += alpha * v;
            }
        });
}

pub fn scale(alpha: C64, x: &mut [C64]) {
    x.par_chunks_mut(CHUNK).for_each(|c| {
        for u in c {
            *u *= alpha;
        }
    });
}

pub fn random_vector(n: usize, seed: u64) -> Vec<C64> {
    (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut r = rng::stream(seed, c as u64);
            let len = CHUNK.min(n - c * CHUNK);
            (0..len).map(move |_| C64::new(r.gen::<f64>() - 0.5, r.gen::<f64>() - 0.5))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArnoldiConfig {
    pub n_eigs: usize,
    /// Krylov subspace size; `max(4 n_eigs, 60)` when unset.
    pub subspace: Option<usize>,
    pub tol: f64,
    pub max_restarts: usize,
    pub seed: u64,
    pub check_linearity: bool,
}

impl Default for ArnoldiConfig {
    fn default() -> Self {
        Self {
            n_eigs: 10,
            subspace: None,
            tol: 1e-9,
            max_restarts: 300,
            seed: 0,
            check_linearity: true,
        }
    }
}

impl ArnoldiConfig {
    pub fn subspace_size(&self, dim: usize) -> usize {
        self.subspace
            .unwrap_or((4 * self.n_eigs).max(60))
            .min(dim)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    /// Sorted by modulus descending, ties by phase ascending.
    pub eigenvalues: Vec<C64>,
    /// Unit-norm eigenvectors; the largest-modulus entry is real positive.
    pub eigenvectors: Vec<Vec<C64>>,
    /// Explicit `|A v - lambda v|` per pair.
    pub residuals: Vec<f64>,
    pub n_matvecs: usize,
    pub restarts: usize,
    pub norm_estimate: f64,
}

impl SpectrumResult {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

/// Total-order sort key: modulus (descending) on a 1e-10 grid, then phase.
fn order_key(z: &C64) -> (i64, f64) {
    (-(z.norm() * 1e10).round() as i64, z.arg())
}

fn cmp_eig(a: &C64, b: &C64) -> std::cmp::Ordering {
    let (ma, pa) = order_key(a);
    let (mb, pb) = order_key(b);
    ma.cmp(&mb).then(pa.total_cmp(&pb))
}

/// Rotate the phase so the largest-modulus entry is real and positive, and
/// scale to unit norm.
pub fn normalize_phase(v: &mut [C64]) {
    let n = norm(v);
    if n == 0.0 {
        return;
    }
    let (imax, _) = v
        .iter()
        .enumerate()
        .fold((0, -1.0), |(bi, bm), (i, z)| {
            let m = z.norm_sqr();
            if m > bm {
                (i, m)
            } else {
                (bi, bm)
            }
        });
    let phase = v[imax].conj() / v[imax].norm();
    scale(phase / n, v);
}

/// Swap the adjacent diagonal entries `i`, `i+1` of the upper-triangular
/// `t`, updating the unitary `q` so that `q t q^H` is unchanged.
fn swap_schur(t: &mut DMatrix<C64>, q: &mut DMatrix<C64>, i: usize) {
    let m = t.nrows();
    let t11 = t[(i, i)];
    let t22 = t[(i + 1, i + 1)];
    let f = t[(i, i + 1)];
    let g = t22 - t11;
    let (cs, sn) = if g == C64::new(0.0, 0.0) {
        (1.0, C64::new(0.0, 0.0))
    } else if f == C64::new(0.0, 0.0) {
        (0.0, g.conj() / g.norm())
    } else {
        let rho = f.norm().hypot(g.norm());
        (f.norm() / rho, (f / f.norm()) * g.conj() / rho)
    };
    for c in (i + 2)..m {
        let x = t[(i, c)];
        let y = t[(i + 1, c)];
        t[(i, c)] = x * cs + sn * y;
        t[(i + 1, c)] = y * cs - sn.conj() * x;
    }
    let snc = sn.conj();
    for r in 0..i {
        let x = t[(r, i)];
        let y = t[(r, i + 1)];
        t[(r, i)] = x * cs + snc * y;
        t[(r, i + 1)] = y * cs - sn * x;
    }
    t[(i, i)] = t22;
    t[(i + 1, i + 1)] = t11;
    for r in 0..q.nrows() {
        let x = q[(r, i)];
        let y = q[(r, i + 1)];
        q[(r, i)] = x * cs + snc * y;
        q[(r, i + 1)] = y * cs - sn * x;
    }
}

/// Complex Schur form `h = q t q^H` with the diagonal of `t` ordered by
/// `cmp_eig`.
fn sorted_schur(h: DMatrix<C64>) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let m = h.nrows();
    let schur = Schur::try_new(h, f64::EPSILON, 100 * m.max(10)).ok_or(Error::SchurFailed)?;
    let (mut q, mut t) = schur.unpack();
    for c in 0..m {
        for r in (c + 1)..m {
            t[(r, c)] = C64::new(0.0, 0.0);
        }
    }
    for pos in 0..m {
        let best = (pos..m)
            .min_by(|&a, &b| cmp_eig(&t[(a, a)], &t[(b, b)]).then(a.cmp(&b)))
            .expect("nonempty range");
        for i in (pos..best).rev() {
            swap_schur(&mut t, &mut q, i);
        }
    }
    Ok((q, t))
}

/// Eigenvector of upper-triangular `t` for its `i`-th diagonal entry.
fn triangular_eigvec(t: &DMatrix<C64>, i: usize) -> Vec<C64> {
    let lambda = t[(i, i)];
    let tiny = f64::EPSILON * t[(0, 0)].norm().max(1.0);
    let mut s = vec![C64::new(0.0, 0.0); t.nrows()];
    s[i] = C64::new(1.0, 0.0);
    for r in (0..i).rev() {
        let mut acc = t[(r, i)];
        for c in (r + 1)..i {
            acc += t[(r, c)] * s[c];
        }
        let mut d = t[(r, r)] - lambda;
        if d.norm() < tiny {
            d = C64::new(tiny, 0.0);
        }
        s[r] = -acc / d;
    }
    let n = s.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    s.iter_mut().for_each(|z| *z /= n);
    s
}

fn combine(basis: &[Vec<C64>], coeffs: &[C64], n: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n];
    out.par_chunks_mut(CHUNK)
        .enumerate()
        .for_each(|(ci, chunk)| {
            let off = ci * CHUNK;
            let len = chunk.len();
            for (v, &c) in basis.iter().zip(coeffs) {
                if c == C64::new(0.0, 0.0) {
                    continue;
                }
                for (o, x) in chunk.iter_mut().zip(&v[off..off + len]) {
                    *o += c * x;
                }
            }
        });
    out
}

/// Orthogonalize `w` against `basis` (MGS, two passes). Returns the
/// projection coefficients.
fn orthogonalize(basis: &[Vec<C64>], w: &mut [C64]) -> Vec<C64> {
    let mut h = vec![C64::new(0.0, 0.0); basis.len()];
    for _ in 0..2 {
        for (v, hi) in basis.iter().zip(h.iter_mut()) {
            let c = dot(v, w);
            axpy(-c, v, w);
            *hi += c;
        }
    }
    h
}

fn linearity_probe<A: LinearOperator + ?Sized>(op: &A, seed: u64) -> Result<usize> {
    let n = op.dim();
    let u = random_vector(n, rng::derive(seed, &[1]));
    let v = random_vector(n, rng::derive(seed, &[2]));
    let (a, b) = (C64::new(0.7, -0.3), C64::new(-0.2, 1.1));
    let mut mix = u.clone();
    scale(a, &mut mix);
    axpy(b, &v, &mut mix);
    let mut au = vec![C64::new(0.0, 0.0); n];
    let mut av = au.clone();
    let mut amix = au.clone();
    op.apply(&u, &mut au);
    op.apply(&v, &mut av);
    op.apply(&mix, &mut amix);
    axpy(-a, &au, &mut amix);
    axpy(-b, &av, &mut amix);
    let scale_ref = norm(&au) + norm(&av);
    let err = if scale_ref > 0.0 {
        norm(&amix) / scale_ref
    } else {
        norm(&amix)
    };
    if err > 1e-10 {
        return Err(Error::NonLinearOperator(err));
    }
    Ok(3)
}

/// Leading `config.n_eigs` eigenpairs (largest modulus) of `op`.
///
/// `start` overrides the seeded random start vector.
pub fn arnoldi_top<A: LinearOperator + ?Sized>(
    op: &A,
    config: &ArnoldiConfig,
    start: Option<&[C64]>,
) -> Result<SpectrumResult> {
    let n = op.dim();
    let nev = config.n_eigs;
    if nev == 0 || nev >= n {
        return Err(Error::InvalidParams(format!(
            "n_eigs = {nev} must be in 1..{n}"
        )));
    }
    let m = config.subspace_size(n);
    if m <= nev {
        return Err(Error::InvalidParams(format!(
            "subspace {m} leaves no restart headroom over n_eigs = {nev}"
        )));
    }
    let mut n_matvecs = 0;
    if config.check_linearity {
        n_matvecs += linearity_probe(op, config.seed)?;
    }

    let mut v0 = match start {
        Some(s) if s.len() == n => s.to_vec(),
        Some(s) => {
            return Err(Error::ShapeMismatch {
                expected: n,
                got: s.len(),
            })
        }
        None => random_vector(n, config.seed),
    };
    let nv = norm(&v0);
    if nv == 0.0 {
        v0 = random_vector(n, config.seed);
    }
    let nv = norm(&v0);
    scale(C64::new(1.0 / nv, 0.0), &mut v0);

    let mut basis: Vec<Vec<C64>> = vec![v0];
    let mut h = DMatrix::<C64>::zeros(m + 1, m);
    let mut kept = 0;
    let mut norm_est: f64 = 0.0;
    let mut breakdowns = 0u64;
    let mut restarts = 0;

    loop {
        for j in kept..m {
            let mut w = vec![C64::new(0.0, 0.0); n];
            op.apply(&basis[j], &mut w);
            n_matvecs += 1;
            norm_est = norm_est.max(norm(&w));
            let coeffs = orthogonalize(&basis, &mut w);
            for (i, c) in coeffs.into_iter().enumerate() {
                h[(i, j)] = c;
            }
            let beta = norm(&w);
            if beta > 1e-12 * norm_est.max(f64::MIN_POSITIVE) {
                h[(j + 1, j)] = C64::new(beta, 0.0);
                scale(C64::new(1.0 / beta, 0.0), &mut w);
            } else {
                // invariant subspace: continue from a fresh direction
                h[(j + 1, j)] = C64::new(0.0, 0.0);
                if basis.len() < n {
                    breakdowns += 1;
                    debug!("Arnoldi breakdown at step {j}; restarting direction");
                    let mut fresh = random_vector(n, rng::derive(config.seed, &[99, breakdowns]));
                    orthogonalize(&basis, &mut fresh);
                    let nf = norm(&fresh);
                    scale(C64::new(1.0 / nf, 0.0), &mut fresh);
                    w = fresh;
                } else {
                    w.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
                }
            }
            basis.push(w);
        }

        let hm = h.view((0, 0), (m, m)).into_owned();
        let (q, t) = sorted_schur(hm)?;
        let coupling = h.view((m, 0), (1, m)) * &q;

        let mut ritz = Vec::with_capacity(nev);
        let mut converged = 0;
        for i in 0..nev {
            let s = triangular_eigvec(&t, i);
            let r: C64 = s.iter().zip(coupling.iter()).map(|(a, b)| a * b).sum();
            if r.norm() <= config.tol * norm_est {
                converged += 1;
            }
            ritz.push(s);
        }

        if converged == nev || restarts == config.max_restarts {
            let mut result = finalize(op, &basis[..m], &q, &t, &ritz, n, &mut n_matvecs);
            result.n_matvecs = n_matvecs;
            result.restarts = restarts;
            result.norm_estimate = norm_est;
            if converged == nev {
                return Ok(result);
            }
            return Err(Error::ArnoldiNoConvergence {
                restarts,
                converged,
                wanted: nev,
                partial: Box::new(result),
            });
        }

        restarts += 1;
        let keep = (nev + (m - nev) / 2).min(m - 1).max(nev);
        let residual_vec = basis.pop().expect("basis has m + 1 vectors");
        let mut new_basis: Vec<Vec<C64>> = (0..keep)
            .map(|i| {
                let coeffs: Vec<C64> = q.column(i).iter().copied().collect();
                combine(&basis, &coeffs, n)
            })
            .collect();
        new_basis.push(residual_vec);
        basis = new_basis;
        h.fill(C64::new(0.0, 0.0));
        for c in 0..keep {
            for r in 0..=c {
                h[(r, c)] = t[(r, c)];
            }
            h[(keep, c)] = coupling[c];
        }
        kept = keep;
    }
}

fn finalize<A: LinearOperator + ?Sized>(
    op: &A,
    basis: &[Vec<C64>],
    q: &DMatrix<C64>,
    t: &DMatrix<C64>,
    ritz: &[Vec<C64>],
    n: usize,
    n_matvecs: &mut usize,
) -> SpectrumResult {
    let mut pairs: Vec<(C64, Vec<C64>, f64)> = ritz
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let lambda = t[(i, i)];
            let y = q * nalgebra::DVector::from_column_slice(s);
            let mut x = combine(basis, y.as_slice(), n);
            normalize_phase(&mut x);
            let mut ax = vec![C64::new(0.0, 0.0); n];
            op.apply(&x, &mut ax);
            *n_matvecs += 1;
            axpy(-lambda, &x, &mut ax);
            (lambda, x, norm(&ax))
        })
        .collect();
    pairs.sort_by(|a, b| cmp_eig(&a.0, &b.0));
    let mut out = SpectrumResult::default();
    for (l, v, r) in pairs {
        out.eigenvalues.push(l);
        out.eigenvectors.push(v);
        out.residuals.push(r);
    }
    out
}

/// Leading eigenvalue strictly inside the unit disk (the unit-modulus family
/// within 1e-8 is skipped).
pub fn leading_interior(result: &SpectrumResult) -> Option<(usize, C64)> {
    result
        .eigenvalues
        .iter()
        .enumerate()
        .find(|(_, z)| z.norm() < 1.0 - 1e-8)
        .map(|(i, z)| (i, *z))
}

/// `1 - |lambda_1|`.
pub fn spectral_gap(result: &SpectrumResult) -> Result<f64> {
    if result.len() < 2 {
        return Err(Error::InvalidParams(
            "spectral gap needs at least two eigenvalues".into(),
        ));
    }
    leading_interior(result)
        .map(|(_, z)| 1.0 - z.norm())
        .ok_or(Error::DegenerateSpectrum)
}

/// Distance from `phase` to the nearest multiple of `2 pi / q`.
pub fn phase_offset(phase: f64, q: usize) -> f64 {
    let step = 2.0 * PI / q as f64;
    let r = phase.rem_euclid(step);
    r.min(step - r)
}

/// Among eigenvalues whose modulus is within `band` of `|lambda_1|`, the
/// fraction whose phase lies within 0.1 rad of a multiple of `2 pi / q`.
pub fn phase_cluster(result: &SpectrumResult, q: usize, band: f64) -> f64 {
    let Some((_, lead)) = leading_interior(result) else {
        return 0.0;
    };
    let r1 = lead.norm();
    let family: Vec<&C64> = result
        .eigenvalues
        .iter()
        .filter(|z| (z.norm() - r1).abs() <= band)
        .collect();
    if family.is_empty() || q == 0 {
        return 0.0;
    }
    let hits = family
        .iter()
        .filter(|z| phase_offset(z.arg(), q) <= 0.1)
        .count();
    hits as f64 / family.len() as f64
}

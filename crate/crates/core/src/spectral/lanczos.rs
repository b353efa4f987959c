//! Thick-restart block Lanczos for the largest eigenvalues of the
//! shift-invert operator `A = (W - sigma M)^-1 M`, which is self-adjoint in
//! the `M` inner product.
//!
//! The basis `V` is kept `M`-orthonormal by two passes of block classical
//! Gram-Schmidt. Alongside `V` the solver stores `Z = A V`, so the
//! projected matrix `T = V^T M Z` grows by one block column per step and a
//! restart is a pair of matrix products. Each step expands the basis with
//! the residuals of the leading unconverged Ritz pairs; without restarts
//! these span the same space as the next block Krylov vector.
//!
//! Converged pairs whose `theta` dominates the wanted range (the kernel,
//! where `theta` is about `1e8` times larger than the rest) are locked:
//! they leave the active basis and new directions are kept `M`-orthogonal
//! to them. Leaving them in `T` would put a rounding floor of
//! `eps * theta_0` under every other residual. Other pairs are not locked,
//! since locking one member of a cluster at tolerance limits the accuracy
//! of the rest.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::EnvelopeCholesky;

/// Pairs with `theta` above this multiple of the smallest wanted `theta`
/// are locked once converged.
const LOCK_RATIO: f64 = 1e3;

pub(crate) struct ShiftInvert<'a> {
    pub factor: &'a EnvelopeCholesky,
    pub mass: &'a [f64],
}

impl ShiftInvert<'_> {
    fn n(&self) -> usize {
        self.mass.len()
    }

    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n();
        let cols: Vec<Vec<f64>> = (0..x.ncols())
            .into_par_iter()
            .map(|c| {
                let mut b: Vec<f64> = (0..n).map(|i| self.mass[i] * x[(i, c)]).collect();
                self.factor.solve_in_place(&mut b);
                b
            })
            .collect();
        DMatrix::from_fn(n, x.ncols(), |i, c| cols[c][i])
    }
}

pub(crate) struct LanczosParams {
    pub nev: usize,
    pub block: usize,
    pub max_basis: usize,
    pub tol: f64,
    pub max_applications: usize,
    pub seed: u64,
}

pub(crate) struct LanczosOutput {
    /// `M`-orthonormal Ritz vectors for the `nev` largest `theta`.
    pub vectors: DMatrix<f64>,
    pub applications: usize,
}

fn scale_rows(x: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let mut y = x.clone();
    for (i, mut row) in y.row_iter_mut().enumerate() {
        row *= d[i];
    }
    y
}

fn m_norm(x: &DVector<f64>, mass: &[f64]) -> f64 {
    x.iter().zip(mass).map(|(v, m)| m * v * v).sum::<f64>().sqrt()
}

/// `M`-orthonormalizes `block` against `locked`, the first `m` columns of
/// `basis` and within itself. Columns that collapse are replaced by random
/// vectors; columns that still collapse (exhausted space) are dropped.
fn orthonormalize_block(
    locked: &DMatrix<f64>,
    basis: &DMatrix<f64>,
    m: usize,
    mut block: DMatrix<f64>,
    mass: &[f64],
    rng: &mut ChaCha8Rng,
) -> DMatrix<f64> {
    let n = mass.len();
    let mut accepted: Vec<DVector<f64>> = Vec::new();
    let v = basis.columns(0, m);
    for c in 0..block.ncols() {
        let mut x: DVector<f64> = block.column(c).into_owned();
        for attempt in 0..3 {
            let before = m_norm(&x, mass);
            for _ in 0..2 {
                let mx = DVector::from_iterator(n, x.iter().zip(mass).map(|(a, b)| a * b));
                if locked.ncols() > 0 {
                    let coef = locked.tr_mul(&mx);
                    x -= locked * coef;
                }
                if m > 0 {
                    let mx = DVector::from_iterator(n, x.iter().zip(mass).map(|(a, b)| a * b));
                    let coef = v.tr_mul(&mx);
                    x -= v * coef;
                }
                for q in &accepted {
                    let dot: f64 = x.iter().zip(q.iter()).zip(mass).map(|((a, b), w)| a * b * w).sum();
                    x.axpy(-dot, q, 1.0);
                }
            }
            let after = m_norm(&x, mass);
            if after > 1e-8 * before && after > 0.0 {
                x /= after;
                accepted.push(x);
                break;
            }
            if attempt == 2 {
                break;
            }
            x = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        }
    }
    block.resize_mut(n, accepted.len(), 0.0);
    for (c, q) in accepted.into_iter().enumerate() {
        block.set_column(c, &q);
    }
    block
}

/// Removes the components of `z` along the locked vectors.
fn project_out(locked: &DMatrix<f64>, z: &mut DMatrix<f64>, mass: &[f64]) {
    if locked.ncols() == 0 || z.ncols() == 0 {
        return;
    }
    let coef = scale_rows(locked, mass).tr_mul(z);
    *z -= locked * coef;
}

pub(crate) fn run(op: &ShiftInvert<'_>, p: &LanczosParams) -> Result<LanczosOutput> {
    let n = op.n();
    let nev = p.nev;
    let mass = op.mass;
    let cap = p.max_basis.max(nev + p.block).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);

    let mut locked = DMatrix::<f64>::zeros(n, 0);
    let mut v = DMatrix::<f64>::zeros(n, cap);
    let mut z = DMatrix::<f64>::zeros(n, cap);
    let mut t = DMatrix::<f64>::zeros(cap, cap);
    let mut m = 0usize;
    let mut applications = 0usize;

    let start = DMatrix::from_fn(n, p.block.min(n), |_, _| rng.random::<f64>() - 0.5);
    let mut next = orthonormalize_block(&locked, &v, 0, start, mass, &mut rng);

    loop {
        // expand
        if next.ncols() > 0 {
            let b = next.ncols();
            let mut az = op.apply_block(&next);
            applications += b;
            project_out(&locked, &mut az, mass);
            v.columns_mut(m, b).copy_from(&next);
            z.columns_mut(m, b).copy_from(&az);
            let mz = scale_rows(&az, mass);
            let coupling = v.columns(0, m + b).tr_mul(&mz);
            t.view_mut((0, m), (m + b, b)).copy_from(&coupling);
            t.view_mut((m, 0), (b, m + b)).copy_from(&coupling.transpose());
            m += b;
            // keep the new diagonal block exactly symmetric
            for i in m - b..m {
                for j in i + 1..m {
                    let s = 0.5 * (t[(i, j)] + t[(j, i)]);
                    t[(i, j)] = s;
                    t[(j, i)] = s;
                }
            }
        }

        // Rayleigh-Ritz
        let tm = t.view((0, 0), (m, m)).into_owned();
        let eig = SymmetricEigen::new(tm);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let theta: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let y = DMatrix::from_fn(m, m, |r, c| eig.eigenvectors[(r, order[c])]);

        let remaining = nev - locked.ncols();
        let want = remaining.min(m);
        let probe = (remaining + p.block).min(m);
        let yk = y.columns(0, probe);
        let x = v.columns(0, m) * yk;
        let zx = z.columns(0, m) * yk;
        let mut resid = zx.clone();
        let mut unconverged = Vec::new();
        let mut converged = 0;
        let mut leading = true;
        for i in 0..probe {
            let mut r = resid.column_mut(i);
            r.axpy(-theta[i], &x.column(i), 1.0);
            let rn = m_norm(&r.into_owned(), mass);
            let ok = rn <= p.tol * theta[i].abs();
            if i < want {
                if ok && leading {
                    converged += 1;
                } else {
                    leading = false;
                }
            }
            if !ok {
                unconverged.push(i);
            }
        }
        let exhausted = locked.ncols() + m == n;
        if (converged >= remaining && want == remaining) || exhausted {
            let take = remaining.min(m);
            let mut out = DMatrix::<f64>::zeros(n, locked.ncols() + take);
            out.columns_mut(0, locked.ncols()).copy_from(&locked);
            out.columns_mut(locked.ncols(), take).copy_from(&x.columns(0, take));
            return Ok(LanczosOutput {
                vectors: out,
                applications,
            });
        }
        if applications >= p.max_applications {
            return Err(Error::NoConvergence {
                converged: locked.ncols() + converged,
                requested: nev,
                iterations: applications,
            });
        }

        // next block from residuals of the leading unconverged pairs
        let b = p.block.min(n - m - locked.ncols()).min(p.max_applications - applications);
        let picks: Vec<usize> = unconverged.iter().copied().take(b).collect();
        let mut cand = DMatrix::<f64>::zeros(n, picks.len().max(b));
        for (c, &i) in picks.iter().enumerate() {
            cand.set_column(c, &resid.column(i));
        }
        for c in picks.len()..cand.ncols() {
            cand.set_column(c, &DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5));
        }

        // lock converged dominant pairs and restart when full
        let floor = LOCK_RATIO * theta[want - 1].abs();
        let converged = (0..converged).take_while(|&i| theta[i].abs() >= floor).count();
        if converged > 0 || m + cand.ncols() > cap {
            let keep = (remaining + p.block).min(m).min(cap - cand.ncols());
            if converged > 0 {
                let old = locked.ncols();
                locked.resize_horizontally_mut(old + converged, 0.0);
                locked.columns_mut(old, converged).copy_from(&x.columns(0, converged));
            }
            let active = keep.max(converged) - converged;
            let ya = y.columns(converged, active);
            let va = v.columns(0, m) * ya;
            v.columns_mut(0, active).copy_from(&va);
            t.fill(0.0);
            if converged > 0 {
                // The stored Z carries rounding at the scale of the locked
                // theta; rebuild it and the projected matrix from scratch.
                let mut za = op.apply_block(&va);
                applications += active;
                project_out(&locked, &mut za, mass);
                let tm = va.tr_mul(&scale_rows(&za, mass));
                let tm = (&tm + tm.transpose()) * 0.5;
                t.view_mut((0, 0), (active, active)).copy_from(&tm);
                z.columns_mut(0, active).copy_from(&za);
            } else {
                let za = z.columns(0, m) * ya;
                z.columns_mut(0, active).copy_from(&za);
                for i in 0..active {
                    t[(i, i)] = theta[converged + i];
                }
            }
            m = active;
        }
        next = orthonormalize_block(&locked, &v, m, cand, mass, &mut rng);
        if next.ncols() == 0 {
            return Err(Error::NoConvergence {
                converged: locked.ncols(),
                requested: nev,
                iterations: applications,
            });
        }
    }
}

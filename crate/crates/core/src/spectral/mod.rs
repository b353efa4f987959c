//! Smallest eigenpairs of the pencil `(W, M)` and spectrum diagnostics.

mod lanczos;
pub mod monitor;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::laplacian::LaplacianPair;
use crate::sparse::EnvelopeCholesky;

pub use monitor::{monitor_checkpoints, MonitorOptions, MonitorRecord, SpectrumMonitor};

/// Ascending eigenvalues with `M`-orthonormal eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// `n x K`, one eigenvector per column.
    pub eigenvectors: DMatrix<f64>,
    /// Diagonal of the mass matrix the vectors are orthonormal in.
    pub mass: Vec<f64>,
}

impl Spectrum {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n(&self) -> usize {
        self.mass.len()
    }

    pub fn eigenvector(&self, i: usize) -> DVector<f64> {
        self.eigenvectors.column(i).into_owned()
    }

    /// First `k` pairs.
    pub fn truncated(&self, k: usize) -> Spectrum {
        let k = k.min(self.k());
        Spectrum {
            eigenvalues: self.eigenvalues[..k].to_vec(),
            eigenvectors: self.eigenvectors.columns(0, k).into_owned(),
            mass: self.mass.clone(),
        }
    }

    /// `Phi^T M Phi`.
    pub fn gram(&self) -> DMatrix<f64> {
        let mphi = DMatrix::from_fn(self.n(), self.k(), |i, j| self.mass[i] * self.eigenvectors[(i, j)]);
        self.eigenvectors.tr_mul(&mphi)
    }

    /// `index,eigenvalue` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(out, "index,eigenvalue").map_err(io)?;
        for (i, l) in self.eigenvalues.iter().enumerate() {
            writeln!(out, "{i},{l:e}").map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// Column-major little-endian `f64` eigenvectors plus a JSON sidecar at
    /// `<path>.json` describing the shape.
    pub fn write_eigenvectors(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        for v in self.eigenvectors.iter() {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        out.flush().map_err(io)?;

        #[derive(Serialize)]
        struct Sidecar<'a> {
            rows: usize,
            cols: usize,
            dtype: &'a str,
            order: &'a str,
        }
        let sidecar = Sidecar {
            rows: self.n(),
            cols: self.k(),
            dtype: "float64-le",
            order: "column-major",
        };
        let mut side_path = path.as_os_str().to_owned();
        side_path.push(".json");
        let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        std::fs::write(&side_path, json).map_err(|e| Error::io(side_path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub k: usize,
    pub block_size: usize,
    /// Ritz residual tolerance relative to the shift-invert eigenvalue.
    pub tol: f64,
    /// Cap on operator applications; defaults to `50 * k`.
    pub max_applications: Option<usize>,
    /// Basis size that triggers a thick restart; defaults to `2k + 2b`.
    pub max_basis: Option<usize>,
    pub seed: u64,
}

impl EigenOptions {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            block_size: 8,
            tol: 1e-10,
            max_applications: None,
            max_basis: None,
            seed: 0,
        }
    }
}

/// Shift used for the factorization: a tiny negative eigenvalue offset,
/// relative to the typical diagonal ratio of the pencil.
pub fn default_shift(lap: &LaplacianPair) -> f64 {
    let n = lap.n() as f64;
    let mean_w = lap.w.diagonal().iter().sum::<f64>() / n;
    let mean_m = lap.mass.iter().sum::<f64>() / n;
    -1e-8 * mean_w / mean_m
}

pub fn smallest_eigenpairs(lap: &LaplacianPair, k: usize) -> Result<Spectrum> {
    smallest_eigenpairs_with(lap, &EigenOptions::new(k))
}

pub fn smallest_eigenpairs_with(lap: &LaplacianPair, opts: &EigenOptions) -> Result<Spectrum> {
    let n = lap.n();
    let k = opts.k;
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("cannot compute {k} eigenpairs of a {n}x{n} pencil")));
    }
    if opts.block_size == 0 {
        return Err(Error::InvalidInput("block size must be positive".into()));
    }
    let sigma = default_shift(lap);
    let shifted = lap.w.add_diagonal(&lap.mass, -sigma);
    let factor = EnvelopeCholesky::factor(&shifted)?;
    let op = lanczos::ShiftInvert {
        factor: &factor,
        mass: &lap.mass,
    };
    let block = opts.block_size.min(n);
    let mut params = lanczos::LanczosParams {
        nev: k,
        block,
        max_basis: opts.max_basis.unwrap_or(2 * k + 2 * block),
        tol: opts.tol,
        max_applications: opts.max_applications.unwrap_or(50 * k).max(k + block),
        seed: opts.seed,
    };

    let w_norm = lap.w.norm_inf();
    loop {
        let out = lanczos::run(&op, &params)?;
        let spec = rayleigh_ritz(lap, out.vectors);
        if residuals_ok(lap, &spec, w_norm) {
            return Ok(spec);
        }
        // Ritz residuals met but true residuals did not: tighten and retry
        if params.tol < 1e-14 {
            return Err(Error::NoConvergence {
                converged: 0,
                requested: k,
                iterations: out.applications,
            });
        }
        params.tol *= 1e-2;
    }
}

/// `M`-reorthonormalizes `x` and solves the projected problem with `W`.
fn rayleigh_ritz(lap: &LaplacianPair, x: DMatrix<f64>) -> Spectrum {
    let n = lap.n();
    let k = x.ncols();
    let mass = &lap.mass;
    let mx = DMatrix::from_fn(n, k, |i, j| mass[i] * x[(i, j)]);
    let g = x.tr_mul(&mx);
    let g = (&g + g.transpose()) * 0.5;
    let x = match g.clone().cholesky() {
        Some(ch) => {
            let l = ch.l();
            // X L^-T
            let lt_inv = l.transpose().try_inverse().expect("triangular factor is invertible");
            x * lt_inv
        }
        None => x,
    };
    let mut wx = DMatrix::<f64>::zeros(n, k);
    for j in 0..k {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        wx.set_column(j, &DVector::from_vec(lap.w.mul_vec(&col)));
    }
    let h = x.tr_mul(&wx);
    let h = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let u = DMatrix::from_fn(k, k, |r, c| eig.eigenvectors[(r, order[c])]);
    let mut phi = x * u;
    for mut col in phi.column_iter_mut() {
        let mut best = 0;
        for i in 1..n {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
    Spectrum {
        eigenvalues: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        eigenvectors: phi,
        mass: mass.clone(),
    }
}

fn residuals_ok(lap: &LaplacianPair, spec: &Spectrum, w_norm: f64) -> bool {
    (0..spec.k()).all(|i| {
        let (wphi, mphi_l, norm) = residual_parts(lap, spec, i);
        let r: f64 = wphi.iter().zip(&mphi_l).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let wn: f64 = wphi.iter().map(|a| a * a).sum::<f64>().sqrt();
        r <= 1e-7 * wn + 1e-12 * w_norm * norm
    })
}

fn residual_parts(lap: &LaplacianPair, spec: &Spectrum, i: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let phi: Vec<f64> = spec.eigenvectors.column(i).iter().copied().collect();
    let wphi = lap.w.mul_vec(&phi);
    let l = spec.eigenvalues[i];
    let mphi_l: Vec<f64> = phi.iter().zip(&lap.mass).map(|(p, m)| l * m * p).collect();
    let norm = phi.iter().map(|p| p * p).sum::<f64>().sqrt();
    (wphi, mphi_l, norm)
}

/// `||W phi_i - lambda_i M phi_i||_2` for every pair.
pub fn residual_norms(lap: &LaplacianPair, spec: &Spectrum) -> Vec<f64> {
    (0..spec.k())
        .map(|i| {
            let (a, b, _) = residual_parts(lap, spec, i);
            a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        })
        .collect()
}

pub const DEFAULT_ZERO_TOL: f64 = 1e-6;

/// Number of eigenvalues below `tol_rel` times the largest computed one.
pub fn count_zero_eigenvalues(eigenvalues: &[f64], tol_rel: f64) -> Result<usize> {
    let largest = eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(largest > 0.0) {
        return Err(Error::IncreaseK(eigenvalues.len()));
    }
    let threshold = tol_rel * largest;
    let count = eigenvalues.iter().filter(|&&l| l < threshold).count();
    if count == eigenvalues.len() {
        return Err(Error::IncreaseK(eigenvalues.len()));
    }
    Ok(count)
}

/// `S * |lambda_i - lambda_i^gt|` elementwise.
pub fn eigenvalue_error(eigenvalues: &[f64], ground_truth: &[f64], area: f64) -> Result<Vec<f64>> {
    if eigenvalues.len() != ground_truth.len() {
        return Err(Error::DimensionMismatch {
            expected: ground_truth.len(),
            got: eigenvalues.len(),
        });
    }
    Ok(eigenvalues
        .iter()
        .zip(ground_truth)
        .map(|(a, b)| area * (a - b).abs())
        .collect())
}

//! Functional maps from ground-truth correspondences, spectral
//! nearest-neighbor recovery and geodesic correspondence error.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::Correspondence;
use crate::error::{Error, Result};
use crate::heat::GeodesicProvider;

/// `k x k` map between truncated eigenbases.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalMap {
    pub c: DMatrix<f64>,
}

impl FunctionalMap {
    pub fn k(&self) -> usize {
        self.c.nrows()
    }

    /// Largest deviation of `|C|` from the identity.
    pub fn diagonal_deviation(&self) -> f64 {
        let k = self.k();
        let mut worst: f64 = 0.0;
        for i in 0..k {
            for j in 0..k {
                let e = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.c[(i, j)].abs() - e).abs());
            }
        }
        worst
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        for row in self.c.row_iter() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", line.join(",")).map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// `C = Phi_t^T M_t Pi Phi_s` truncated to `k` functions, where
/// `Pi[corr(i), i] = 1`. Targets hit by several sources sum their rows;
/// targets hit by none contribute zero rows.
pub fn functional_map(
    phi_s: &DMatrix<f64>,
    phi_t: &DMatrix<f64>,
    mass_t: &[f64],
    corr: &Correspondence,
    k: usize,
) -> Result<FunctionalMap> {
    if k == 0 || k > phi_s.ncols() || k > phi_t.ncols() {
        return Err(Error::InvalidInput(format!(
            "functional map of size {k} needs that many eigenvectors on both shapes"
        )));
    }
    if corr.source_n() != phi_s.nrows() || corr.target_n != phi_t.nrows() || mass_t.len() != phi_t.nrows() {
        return Err(Error::DimensionMismatch {
            expected: phi_s.nrows(),
            got: corr.source_n(),
        });
    }
    let mut pulled = DMatrix::<f64>::zeros(phi_t.nrows(), k);
    for (i, &t) in corr.map.iter().enumerate() {
        for j in 0..k {
            pulled[(t, j)] += phi_s[(i, j)];
        }
    }
    for (t, m) in mass_t.iter().enumerate() {
        for j in 0..k {
            pulled[(t, j)] *= m;
        }
    }
    Ok(FunctionalMap {
        c: phi_t.columns(0, k).tr_mul(&pulled),
    })
}

/// For every source vertex, the target vertex whose spectral embedding is
/// nearest to row `i` of `Phi_s C^T` (ties to the smaller index).
pub fn spectral_nn_correspondence(phi_s: &DMatrix<f64>, phi_t: &DMatrix<f64>, fmap: &FunctionalMap) -> Result<Correspondence> {
    let k = fmap.k();
    if k > phi_s.ncols() || k > phi_t.ncols() {
        return Err(Error::InvalidInput("functional map larger than the eigenbases".into()));
    }
    let aligned = phi_s.columns(0, k) * fmap.c.transpose();
    let target = phi_t.columns(0, k).into_owned();
    let nt = target.nrows();
    // row-major copies keep the inner loop contiguous
    let trows: Vec<f64> = (0..nt).flat_map(|r| (0..k).map(move |c| (r, c))).map(|(r, c)| target[(r, c)]).collect();
    let map: Vec<usize> = (0..aligned.nrows())
        .into_par_iter()
        .map(|i| {
            let q: Vec<f64> = (0..k).map(|c| aligned[(i, c)]).collect();
            let mut best = (f64::INFINITY, 0usize);
            for t in 0..nt {
                let row = &trows[t * k..(t + 1) * k];
                let d: f64 = row.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 {
                    best = (d, t);
                }
            }
            best.1
        })
        .collect();
    Correspondence::new(map, nt)
}

/// Default number of sampled source vertices.
pub const DEFAULT_CORR_SAMPLES: usize = 1000;

/// `dist_t(q_gt, q_pred) / sqrt(S_t)` for uniformly sampled source vertices.
/// Returns `(sampled source indices, errors)`.
pub fn correspondence_error(
    predicted: &Correspondence,
    ground_truth: &Correspondence,
    geodesics: &dyn GeodesicProvider,
    area_t: f64,
    samples: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<f64>)> {
    if predicted.source_n() != ground_truth.source_n() {
        return Err(Error::DimensionMismatch {
            expected: ground_truth.source_n(),
            got: predicted.source_n(),
        });
    }
    if geodesics.n() != ground_truth.target_n {
        return Err(Error::DimensionMismatch {
            expected: ground_truth.target_n,
            got: geodesics.n(),
        });
    }
    let n = predicted.source_n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = sample(&mut rng, n, samples.min(n)).into_vec();
    picked.sort_unstable();

    let mut targets: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &i in &picked {
        targets.entry(ground_truth.map[i]).or_default();
    }
    let keys: Vec<usize> = targets.keys().copied().collect();
    let fields: Vec<Vec<f64>> = keys
        .par_iter()
        .map(|&q| geodesics.distance_from(q))
        .collect::<Result<_>>()?;
    for (q, f) in keys.into_iter().zip(fields) {
        targets.insert(q, f);
    }

    let scale = area_t.sqrt();
    let errors = picked
        .iter()
        .map(|&i| {
            let q_pred = predicted.map[i];
            let d = targets[&ground_truth.map[i]][q_pred];
            if d.is_finite() {
                Ok(d / scale)
            } else {
                Err(Error::Unreachable(q_pred))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((picked, errors))
}

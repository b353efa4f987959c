#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use splatlbo::laplacian::LaplacianPair;
use splatlbo::splat_io::{GaussianSplat, SplatSet};
use splatlbo::synthetic;
use splatlbo::{Metric, Vec3};

/// Eigenvalues of `(W, M)` from a dense solve of `M^-1/2 W M^-1/2`.
pub fn dense_eigenvalues(lap: &LaplacianPair) -> Vec<f64> {
    let w = lap.w.to_dense();
    let n = lap.n();
    let s: Vec<f64> = lap.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let c = DMatrix::from_fn(n, n, |i, j| s[i] * w[(i, j)] * s[j]);
    let c = (&c + c.transpose()) * 0.5;
    let mut e: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

/// Inverse covariance built directly from scales and the rotation matrix.
fn precision(s: &GaussianSplat) -> nalgebra::Matrix3<f64> {
    let r = s.rotation.to_rotation_matrix().into_inner();
    let d = nalgebra::Matrix3::from_diagonal(&s.scale.map(|x| 1.0 / (x * x)));
    r * d * r.transpose()
}

/// Mutual kNN edges by exhaustive scan.
pub fn brute_mutual_edges(set: &SplatSet, k: usize, metric: Metric) -> Vec<(usize, usize)> {
    let n = set.len();
    let prec: Vec<_> = set.splats.iter().map(precision).collect();
    let lists: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut all: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let v = set.splats[j].mean - set.splats[i].mean;
                    let d = match metric {
                        Metric::Euclidean => v.norm(),
                        Metric::Mahalanobis => (v.transpose() * prec[i] * v)[(0, 0)].sqrt(),
                    };
                    (d, j)
                })
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            all.into_iter().take(k).map(|x| x.1).collect()
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for &j in &lists[i] {
            if i < j && lists[j].contains(&i) {
                edges.push((i, j));
            }
        }
    }
    edges.sort_unstable();
    edges
}

/// Disk splats on a Fibonacci sphere with spacing-relative scales.
pub fn fibonacci_disk_splats(n: usize, radius: f64) -> SplatSet {
    let pts = synthetic::fibonacci_sphere(n, radius);
    let h = radius * (4.0 * std::f64::consts::PI / n as f64).sqrt();
    let normals: Vec<Vec3> = pts.iter().map(|p| p.normalize()).collect();
    synthetic::disk_splats(&pts, &normals, 1.5 * h, 0.05 * h)
}

/// Applies a rigid motion to every splat (means and orientations).
pub fn rigid_motion(set: &SplatSet, rot: &nalgebra::UnitQuaternion<f64>, shift: Vec3) -> SplatSet {
    let mut out = set.clone();
    for s in &mut out.splats {
        s.mean = rot * s.mean + shift;
        s.rotation = rot * s.rotation;
    }
    out
}

/// Scales means and splat extents by `factor`.
pub fn scaled(set: &SplatSet, factor: f64) -> SplatSet {
    let mut out = set.clone();
    for s in &mut out.splats {
        s.mean *= factor;
        s.scale *= factor;
    }
    out
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

//! Eigenfunction comparison between a reference operator and a second
//! representation pulled back onto the reference vertices.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Plain and mass-weighted distances between normalized eigenfunctions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenDistance {
    pub l2: f64,
    pub l2w: f64,
}

fn m_dot(a: &DVector<f64>, b: &DVector<f64>, mass: &[f64]) -> f64 {
    a.iter().zip(b.iter()).zip(mass).map(|((x, y), m)| x * y * m).sum()
}

/// `L2 = || f/|f| - f'/|f'| ||` and the same with the norm
/// `|x|_w = sqrt(x^T M x)`, after flipping `f'` when `<f, f'>_M < 0`.
pub fn eigenfunction_distance(f: &DVector<f64>, g: &DVector<f64>, mass: &[f64]) -> Result<EigenDistance> {
    if f.len() != g.len() || f.len() != mass.len() {
        return Err(Error::DimensionMismatch {
            expected: mass.len(),
            got: if f.len() != mass.len() { f.len() } else { g.len() },
        });
    }
    let g = if m_dot(f, g, mass) < 0.0 { -g } else { g.clone() };
    let (nf, ng) = (f.norm(), g.norm());
    let (wf, wg) = (m_dot(f, f, mass).sqrt(), m_dot(&g, &g, mass).sqrt());
    if !(nf > 0.0 && ng > 0.0 && wf > 0.0 && wg > 0.0) {
        return Err(Error::InvalidInput("eigenfunction with zero norm".into()));
    }
    let d = f / nf - &g / ng;
    let dw = f / wf - &g / wg;
    Ok(EigenDistance {
        l2: d.norm(),
        l2w: m_dot(&dw, &dw, mass).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenfunctionReport {
    pub per_function: Vec<EigenDistance>,
    /// Functions whose reference eigenvalue sits in a numerically repeated
    /// group; their per-function numbers depend on an arbitrary basis.
    pub repeated: Vec<bool>,
    pub mean_l2: f64,
    pub mean_l2w: f64,
    /// Largest principal angle (radians) between the two spans, measured in
    /// the reference mass inner product.
    pub max_subspace_angle: f64,
}

/// Flags eigenvalues whose relative gap to a neighbor is below `rel_gap`.
pub fn repeated_groups(eigenvalues: &[f64], rel_gap: f64) -> Vec<bool> {
    let n = eigenvalues.len();
    let close = |a: f64, b: f64| (a - b).abs() <= rel_gap * a.abs().max(b.abs());
    (0..n)
        .map(|i| {
            (i > 0 && close(eigenvalues[i - 1], eigenvalues[i]))
                || (i + 1 < n && close(eigenvalues[i], eigenvalues[i + 1]))
        })
        .collect()
}

fn m_orthonormal_basis(x: &DMatrix<f64>, mass: &[f64]) -> DMatrix<f64> {
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for c in 0..x.ncols() {
        let mut v: DVector<f64> = x.column(c).into_owned();
        for _ in 0..2 {
            for q in &cols {
                let d = m_dot(&v, q, mass);
                v.axpy(-d, q, 1.0);
            }
        }
        let n = m_dot(&v, &v, mass).sqrt();
        if n > 1e-12 {
            cols.push(v / n);
        }
    }
    if cols.is_empty() {
        return DMatrix::zeros(x.nrows(), 0);
    }
    DMatrix::from_columns(&cols)
}

/// Largest principal angle between `span(a)` and `span(b)`.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>, mass: &[f64]) -> f64 {
    let qa = m_orthonormal_basis(a, mass);
    let qb = m_orthonormal_basis(b, mass);
    if qa.ncols() == 0 || qb.ncols() == 0 {
        return std::f64::consts::FRAC_PI_2;
    }
    let mqb = DMatrix::from_fn(qb.nrows(), qb.ncols(), |i, j| mass[i] * qb[(i, j)]);
    let s = qa.tr_mul(&mqb).singular_values();
    let smallest = s.iter().copied().fold(f64::INFINITY, f64::min).clamp(0.0, 1.0);
    if qa.ncols() != qb.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    smallest.acos()
}

/// Compares the first `count` columns of `reference` with those of `other`
/// (already pulled back to the reference vertices).
pub fn eigenfunction_distances(
    reference: &DMatrix<f64>,
    reference_eigenvalues: &[f64],
    other: &DMatrix<f64>,
    mass: &[f64],
    count: usize,
) -> Result<EigenfunctionReport> {
    if reference.nrows() != other.nrows() {
        return Err(Error::DimensionMismatch {
            expected: reference.nrows(),
            got: other.nrows(),
        });
    }
    let count = count.min(reference.ncols()).min(other.ncols());
    if count == 0 {
        return Err(Error::InvalidInput("no eigenfunctions to compare".into()));
    }
    let per_function: Vec<EigenDistance> = (0..count)
        .map(|i| {
            eigenfunction_distance(
                &reference.column(i).into_owned(),
                &other.column(i).into_owned(),
                mass,
            )
        })
        .collect::<Result<_>>()?;
    let repeated = repeated_groups(&reference_eigenvalues[..count.min(reference_eigenvalues.len())], 1e-6);
    let mean_l2 = per_function.iter().map(|d| d.l2).sum::<f64>() / count as f64;
    let mean_l2w = per_function.iter().map(|d| d.l2w).sum::<f64>() / count as f64;
    let max_subspace_angle = max_principal_angle(
        &reference.columns(0, count).into_owned(),
        &other.columns(0, count).into_owned(),
        mass,
    );
    Ok(EigenfunctionReport {
        per_function,
        repeated,
        mean_l2,
        mean_l2w,
        max_subspace_angle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identical_and_flipped() {
        let f = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let m = [0.5, 1.0, 2.0, 1.5];
        let d = eigenfunction_distance(&f, &f, &m).unwrap();
        assert_eq!((d.l2, d.l2w), (0.0, 0.0));
        let d = eigenfunction_distance(&f, &(-&f), &m).unwrap();
        assert!(d.l2 < 1e-15 && d.l2w < 1e-15);
    }

    #[test]
    fn orthogonal_unit_vectors() {
        let f = DVector::from_vec(vec![1.0, 0.0]);
        let g = DVector::from_vec(vec![0.0, 1.0]);
        let d = eigenfunction_distance(&f, &g, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(d.l2, 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn zero_norm_rejected() {
        let f = DVector::from_vec(vec![1.0, 0.0]);
        let z = DVector::zeros(2);
        assert!(eigenfunction_distance(&f, &z, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn repeated_flags() {
        assert_eq!(
            repeated_groups(&[0.0, 2.0, 2.0 + 1e-9, 6.0], 1e-6),
            vec![false, true, true, false]
        );
    }

    #[test]
    fn rotated_basis_has_zero_angle() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, -1.0, 0.0, 0.0]);
        assert!(max_principal_angle(&a, &b, &[1.0; 3]) < 1e-7);
        let c = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_relative_eq!(max_principal_angle(&a, &c, &[1.0; 3]), std::f64::consts::FRAC_PI_2, epsilon = 1e-7);
    }
}

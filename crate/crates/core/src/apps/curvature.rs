//! Mean curvature from the Laplacian of the embedding.

use crate::error::{Error, Result};
use crate::laplacian::LaplacianPair;
use crate::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct Curvature {
    /// Mean curvature normal `H n`.
    pub vector: Vec<Vec3>,
    /// `|H|`.
    pub magnitude: Vec<f64>,
    /// `H n . normal`, when normals were supplied.
    pub signed: Option<Vec<f64>>,
}

/// `H n = (M^-1 W p) / 2`. With `W` positive semidefinite this is
/// `-Delta p / 2`, so a sphere of radius `R` gives `H = 1/R` along the
/// outward normal.
pub fn mean_curvature(lap: &LaplacianPair, positions: &[Vec3], normals: Option<&[Vec3]>) -> Result<Curvature> {
    let n = lap.n();
    if positions.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: positions.len(),
        });
    }
    if let Some(nr) = normals {
        if nr.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: nr.len(),
            });
        }
    }
    let mut vector = vec![Vec3::zeros(); n];
    for axis in 0..3 {
        let coord: Vec<f64> = positions.iter().map(|p| p[axis]).collect();
        let lp = lap.apply(&coord);
        for (v, l) in vector.iter_mut().zip(lp) {
            v[axis] = 0.5 * l;
        }
    }
    let magnitude = vector.iter().map(|v| v.norm()).collect();
    let signed = normals.map(|nr| vector.iter().zip(nr).map(|(v, n)| v.dot(n)).collect());
    Ok(Curvature {
        vector,
        magnitude,
        signed,
    })
}

/// Mean absolute difference.
pub fn curvature_l1(h: &[f64], h_gt: &[f64]) -> Result<f64> {
    if h.len() != h_gt.len() || h.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: h_gt.len(),
            got: h.len(),
        });
    }
    Ok(h.iter().zip(h_gt).map(|(a, b)| (a - b).abs()).sum::<f64>() / h.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_metric() {
        assert_eq!(curvature_l1(&[1.0, 2.0], &[1.5, 1.0]).unwrap(), 0.75);
        assert!(curvature_l1(&[1.0], &[1.0, 2.0]).is_err());
    }
}

//! Low-pass filtering by projection onto the leading eigenfunctions.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::spectral::Spectrum;
use crate::splat_io::SplatSet;
use crate::Vec3;

pub const DEFAULT_K_SMOOTH: usize = 500;

/// `Phi (Phi^T M v)`.
pub fn spectral_smoothing(spec: &Spectrum, field: &[f64]) -> Result<Vec<f64>> {
    if field.len() != spec.n() {
        return Err(Error::DimensionMismatch {
            expected: spec.n(),
            got: field.len(),
        });
    }
    let mv = DVector::from_iterator(field.len(), field.iter().zip(&spec.mass).map(|(v, m)| v * m));
    let coeffs = spec.eigenvectors.tr_mul(&mv);
    Ok((&spec.eigenvectors * coeffs).iter().copied().collect())
}

/// Smooths each coordinate function independently.
pub fn smooth_positions(spec: &Spectrum, positions: &[Vec3]) -> Result<Vec<Vec3>> {
    let mut out = vec![Vec3::zeros(); positions.len()];
    for axis in 0..3 {
        let coord: Vec<f64> = positions.iter().map(|p| p[axis]).collect();
        for (o, v) in out.iter_mut().zip(spectral_smoothing(spec, &coord)?) {
            o[axis] = v;
        }
    }
    Ok(out)
}

/// Replaces splat means with their smoothed positions; every other splat
/// attribute is kept as is.
pub fn smooth_splats(set: &SplatSet, spec: &Spectrum) -> Result<SplatSet> {
    let smoothed = smooth_positions(spec, &set.positions())?;
    let mut out = set.clone();
    for (s, p) in out.splats.iter_mut().zip(smoothed) {
        s.mean = p;
    }
    Ok(out)
}

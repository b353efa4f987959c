//! Applications built on the operator: eigenfunction comparison, mean
//! curvature, functional maps, spectral smoothing and the cross
//! representation evaluation pipeline.

pub mod curvature;
pub mod evaluation;
pub mod functional_maps;
pub mod metrics;
pub mod smoothing;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::Vec3;

pub use curvature::{curvature_l1, mean_curvature, Curvature};
pub use functional_maps::{
    correspondence_error, functional_map, spectral_nn_correspondence, FunctionalMap,
};
pub use metrics::{eigenfunction_distance, eigenfunction_distances, EigenDistance, EigenfunctionReport};
pub use smoothing::{smooth_positions, smooth_splats, spectral_smoothing};

/// Vertex map from a source index set into a target index set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Correspondence {
    pub map: Vec<usize>,
    pub target_n: usize,
}

impl Correspondence {
    pub fn new(map: Vec<usize>, target_n: usize) -> Result<Self> {
        if let Some((i, &t)) = map.iter().enumerate().find(|(_, &t)| t >= target_n) {
            return Err(Error::InvalidInput(format!(
                "correspondence entry {i} -> {t} outside target of size {target_n}"
            )));
        }
        Ok(Self { map, target_n })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            map: (0..n).collect(),
            target_n: n,
        }
    }

    pub fn source_n(&self) -> usize {
        self.map.len()
    }

    /// Fraction of entries that agree with `other`.
    pub fn agreement(&self, other: &Correspondence) -> f64 {
        let same = self.map.iter().zip(&other.map).filter(|(a, b)| a == b).count();
        same as f64 / self.map.len().max(1) as f64
    }

    /// Rows of `values` gathered through the map: row `i` of the result is
    /// row `map[i]` of `values`.
    pub fn pull_back(&self, values: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.map.len(), values.ncols(), |i, j| values[(self.map[i], j)])
    }

    pub fn pull_back_field(&self, values: &[f64]) -> Vec<f64> {
        self.map.iter().map(|&t| values[t]).collect()
    }

    /// `source_index,target_index` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(out, "source_index,target_index").map_err(io)?;
        for (i, t) in self.map.iter().enumerate() {
            writeln!(out, "{i},{t}").map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// Reads `source_index,target_index` rows (header optional). Every
    /// source index in `0..source_n` must appear exactly once.
    pub fn read_csv(path: impl AsRef<Path>, target_n: usize) -> Result<Self> {
        let path = path.as_ref();
        let ctx = path.display().to_string();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::parse(&ctx, format!("line {}: expected two columns", lineno + 1)));
            };
            match (a.parse::<usize>(), b.parse::<usize>()) {
                (Ok(s), Ok(t)) => pairs.push((s, t)),
                _ if lineno == 0 => continue,
                _ => return Err(Error::parse(&ctx, format!("line {}: bad indices `{line}`", lineno + 1))),
            }
        }
        let n = pairs.len();
        let mut map = vec![usize::MAX; n];
        for (s, t) in pairs {
            if s >= n || map[s] != usize::MAX {
                return Err(Error::parse(&ctx, format!("source index {s} missing, repeated or out of range")));
            }
            map[s] = t;
        }
        Self::new(map, target_n)
    }
}

/// Maps every source point to its Euclidean-nearest target point (ties to
/// the smaller index).
pub fn project_representation(source: &[Vec3], target: &[Vec3]) -> Result<Correspondence> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::InvalidInput("projection needs nonempty point sets".into()));
    }
    let tree = KdTree::new(target);
    let map = source
        .iter()
        .map(|p| tree.nearest(p).expect("tree is nonempty").0)
        .collect();
    Ok(Correspondence {
        map,
        target_n: target.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_examples() {
        let t = [Vec3::zeros(), Vec3::x() * 10.0];
        let s = [Vec3::x(), Vec3::x() * 9.0, Vec3::x() * 5.0];
        let c = project_representation(&s, &t).unwrap();
        assert_eq!(c.map, vec![0, 1, 0]);
        let same = project_representation(&t, &t).unwrap();
        assert_eq!(same, Correspondence::identity(2));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let c = Correspondence::new(vec![2, 0, 1, 1], 3).unwrap();
        c.write_csv(&p).unwrap();
        assert_eq!(Correspondence::read_csv(&p, 3).unwrap(), c);
        assert!(Correspondence::read_csv(&p, 2).is_err());
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(Correspondence::new(vec![0, 5], 3).is_err());
    }
}

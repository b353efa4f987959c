//! End-to-end comparison of a splat scene against a reference mesh of the
//! same object.
//!
//! The mesh operator is the reference. Splat quantities are pulled back to
//! mesh vertices through the nearest splat center of each vertex. Each
//! metric is computed independently; a failure in one is reported next to
//! the others instead of aborting the run.

use serde::Serialize;

use super::{
    correspondence_error, curvature_l1, eigenfunction_distances, functional_map, mean_curvature,
    project_representation, spectral_nn_correspondence, EigenfunctionReport,
};
use crate::error::{Error, Result};
use crate::heat::{geodesic_error, EdgeGraph, GeodesicError, GeodesicProvider, HeatSolver};
use crate::laplacian::{mesh_laplacian, splat_laplacian, SplatLaplacianOptions, TriangleSoup};
use crate::neighborhood::{build_graph_with, prune_components, GraphOptions};
use crate::spectral::{eigenvalue_error, smallest_eigenpairs_with, EigenOptions};
use crate::splat_io::{SplatSet, TriangleMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceGeodesics {
    /// Heat method on the reference mesh.
    #[default]
    Heat,
    /// Shortest paths along mesh edges.
    Dijkstra,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationOptions {
    pub k_eigen: usize,
    pub laplacian: SplatLaplacianOptions,
    pub keep_components: usize,
    pub opacity_min: f64,
    pub eigenfunctions: usize,
    pub geodesic_sources: usize,
    pub corr_samples: usize,
    pub fmap_k: usize,
    pub heat_c: f64,
    pub reference: ReferenceGeodesics,
    pub seed: u64,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        Self {
            k_eigen: 100,
            laplacian: SplatLaplacianOptions::default(),
            keep_components: 1,
            opacity_min: 0.0,
            eigenfunctions: 10,
            geodesic_sources: 100,
            corr_samples: super::functional_maps::DEFAULT_CORR_SAMPLES,
            fmap_k: 30,
            heat_c: 1.0,
            reference: ReferenceGeodesics::Heat,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric<T> {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl<T> From<Result<T>> for Metric<T> {
    fn from(r: Result<T>) -> Self {
        match r {
            Ok(v) => Metric {
                value: Some(v),
                error: None,
            },
            Err(e) => Metric {
                value: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenvalueReport {
    /// `S |lambda_i - lambda_i^gt|`
    pub normalized_error: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrespondenceReport {
    pub samples: usize,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub mesh_vertices: usize,
    pub splats_total: usize,
    pub splats_kept: usize,
    pub mesh_area: f64,
    pub eigenvalues: Metric<EigenvalueReport>,
    pub eigenfunctions: Metric<EigenfunctionReport>,
    pub geodesics: Metric<GeodesicError>,
    pub curvature_l1: Metric<f64>,
    pub correspondence: Metric<CorrespondenceReport>,
}

fn sample_sources(n: usize, count: usize, seed: u64) -> Vec<usize> {
    use rand::seq::index::sample;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut v = sample(&mut rng, n, count.min(n)).into_vec();
    v.sort_unstable();
    v
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn evaluate(mesh: &TriangleMesh, splats: &SplatSet, opts: &EvaluationOptions) -> Result<EvaluationReport> {
    let mesh_lap = mesh_laplacian(mesh)?;
    let area = mesh_lap.area();
    let mut eig = EigenOptions::new(opts.k_eigen.min(mesh.n_vertices()));
    eig.seed = opts.seed;
    let mesh_spec = smallest_eigenpairs_with(&mesh_lap, &eig)?;

    let splats_total = splats.len();
    let (filtered, _) = splats.drop_low_opacity(opts.opacity_min);
    let graph = build_graph_with(
        &filtered,
        &GraphOptions {
            k: opts.laplacian.k,
            metric: opts.laplacian.metric,
            strategy: opts.laplacian.strategy,
        },
    )?;
    let kept = prune_components(&filtered, &graph, opts.keep_components);
    let op = splat_laplacian(&kept, &opts.laplacian)?;
    let mut eig_s = EigenOptions::new(opts.k_eigen.min(kept.len()));
    eig_s.seed = opts.seed;
    let splat_spec = smallest_eigenpairs_with(&op.laplacian, &eig_s)?;

    let centers = kept.positions();
    let to_splat = project_representation(&mesh.vertices, &centers)?;

    let k = mesh_spec.k().min(splat_spec.k());
    let eigenvalues = eigenvalue_error(&splat_spec.eigenvalues[..k], &mesh_spec.eigenvalues[..k], area).map(|e| {
        let mean = e.iter().sum::<f64>() / e.len().max(1) as f64;
        EigenvalueReport {
            normalized_error: e,
            mean,
        }
    });

    let pulled = to_splat.pull_back(&splat_spec.eigenvectors);
    let eigenfunctions = eigenfunction_distances(
        &mesh_spec.eigenvectors,
        &mesh_spec.eigenvalues,
        &pulled,
        &mesh_lap.mass,
        opts.eigenfunctions,
    );

    let mesh_soup = TriangleSoup::from_faces(&mesh.vertices, mesh.faces.clone());
    let reference: Box<dyn GeodesicProvider> = match opts.reference {
        ReferenceGeodesics::Heat => Box::new(HeatSolver::new(&mesh_lap, &mesh_soup, opts.heat_c)?),
        ReferenceGeodesics::Dijkstra => Box::new(EdgeGraph::from_faces(&mesh.vertices, &mesh.faces)),
    };

    let geodesics = (|| -> Result<GeodesicError> {
        let solver = HeatSolver::new(&op.laplacian, &op.soup, opts.heat_c)?;
        let sources = sample_sources(mesh.n_vertices(), opts.geodesic_sources, opts.seed);
        let mut exact = Vec::with_capacity(sources.len());
        let mut approx = Vec::with_capacity(sources.len());
        for &s in &sources {
            exact.push(reference.distance_from(s)?);
            let field = solver.distance(&[to_splat.map[s]])?;
            approx.push(to_splat.pull_back_field(&field.values));
        }
        geodesic_error(&approx, &exact, area)
    })();

    let curvature = (|| -> Result<f64> {
        let h_gt = mean_curvature(&mesh_lap, &mesh.vertices, None)?;
        let h = mean_curvature(&op.laplacian, &centers, None)?;
        curvature_l1(&to_splat.pull_back_field(&h.magnitude), &h_gt.magnitude)
    })();

    let correspondence = (|| -> Result<CorrespondenceReport> {
        let gt = project_representation(&centers, &mesh.vertices)?;
        let kf = opts.fmap_k.min(k);
        let fmap = functional_map(&splat_spec.eigenvectors, &mesh_spec.eigenvectors, &mesh_lap.mass, &gt, kf)?;
        let predicted = spectral_nn_correspondence(&splat_spec.eigenvectors, &mesh_spec.eigenvectors, &fmap)?;
        let (_, errors) = correspondence_error(&predicted, &gt, reference.as_ref(), area, opts.corr_samples, opts.seed)?;
        if errors.is_empty() {
            return Err(Error::InvalidInput("no correspondence samples".into()));
        }
        Ok(CorrespondenceReport {
            samples: errors.len(),
            mean: errors.iter().sum::<f64>() / errors.len() as f64,
            median: median(&errors),
            max: errors.iter().copied().fold(0.0, f64::max),
        })
    })();

    Ok(EvaluationReport {
        mesh_vertices: mesh.n_vertices(),
        splats_total,
        splats_kept: kept.len(),
        mesh_area: area,
        eigenvalues: eigenvalues.into(),
        eigenfunctions: eigenfunctions.into(),
        geodesics: geodesics.into(),
        curvature_l1: curvature.into(),
        correspondence: correspondence.into(),
    })
}

//! Geodesic distance with the heat method, plus a Dijkstra baseline.
//!
//! The heat solver works purely intrinsically: every soup face is laid out
//! in the plane from its (mollified) edge lengths, so gradients and
//! divergences never see the inconsistent 3D embedding of overlapping soup
//! faces.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{Matrix2, SVector, Vector2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::laplacian::{LaplacianPair, TriangleSoup};
use crate::neighborhood::label_components;
use crate::sparse::EnvelopeCholesky;
use crate::splat_io::write_scalar_ply;
use crate::Vec3;

/// Per-vertex real values over some representation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::splat_io::write_scalar_csv(&self.values, path)
    }

    pub fn write_ply(&self, positions: &[Vec3], faces: Option<&[[usize; 3]]>, path: impl AsRef<Path>) -> Result<()> {
        write_scalar_ply(positions, faces, &self.values, path)
    }
}

impl From<Vec<f64>> for ScalarField {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

/// Gram-matrix form of the linear-element gradient on a triangle with
/// corners `p`, valid in any ambient dimension.
fn linear_gradient<const D: usize>(p: &[SVector<f64, D>; 3], u: [f64; 3]) -> Option<SVector<f64, D>> {
    let e1 = p[1] - p[0];
    let e2 = p[2] - p[0];
    let g = Matrix2::new(e1.dot(&e1), e1.dot(&e2), e1.dot(&e2), e2.dot(&e2));
    let inv = g.try_inverse()?;
    if !inv.iter().all(|v| v.is_finite()) || g.determinant() <= 0.0 {
        return None;
    }
    let c = inv * Vector2::new(u[1] - u[0], u[2] - u[0]);
    Some(e1 * c[0] + e2 * c[1])
}

/// Adds the integrated divergence of the constant face vector `x` to the
/// three corners: `1/2 sum (cot_k e_ij . X + cot_j e_ik . X)`.
fn accumulate_divergence<const D: usize>(p: &[SVector<f64, D>; 3], x: &SVector<f64, D>, out: &mut [f64; 3]) {
    let e1 = p[1] - p[0];
    let e2 = p[2] - p[0];
    let twice_area = (e1.dot(&e1) * e2.dot(&e2) - e1.dot(&e2).powi(2)).max(0.0).sqrt();
    if twice_area == 0.0 {
        return;
    }
    let cot = |c: usize| {
        let a = p[(c + 1) % 3] - p[c];
        let b = p[(c + 2) % 3] - p[c];
        a.dot(&b) / twice_area
    };
    let cots = [cot(0), cot(1), cot(2)];
    for i in 0..3 {
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        let eij = p[j] - p[i];
        let eik = p[k] - p[i];
        out[i] += 0.5 * (cots[k] * eij.dot(x) + cots[j] * eik.dot(x));
    }
}

/// Gradient of the linear interpolant of `values` on the triangle `corners`.
pub fn face_gradient(corners: [Vec3; 3], values: [f64; 3]) -> Result<Vec3> {
    linear_gradient(&corners, values).ok_or_else(|| {
        Error::InvalidInput(format!("zero-area face {corners:?}"))
    })
}

/// Integrated divergence at each vertex of a per-face vector field.
pub fn integrated_divergence(positions: &[Vec3], faces: &[[usize; 3]], field: &[Vec3]) -> Result<Vec<f64>> {
    if field.len() != faces.len() {
        return Err(Error::DimensionMismatch {
            expected: faces.len(),
            got: field.len(),
        });
    }
    let mut div = vec![0.0; positions.len()];
    for (f, x) in faces.iter().zip(field) {
        let p = f.map(|i| positions[i]);
        let mut acc = [0.0; 3];
        accumulate_divergence(&p, x, &mut acc);
        for c in 0..3 {
            div[f[c]] += acc[c];
        }
    }
    Ok(div)
}

/// Planar layout of a face from its edge lengths (`l[c]` opposite corner `c`).
fn layout(l: &[f64; 3]) -> [Vector2<f64>; 3] {
    let l01 = l[2];
    let l02 = l[1];
    let l12 = l[0];
    let x = (l01 * l01 + l02 * l02 - l12 * l12) / (2.0 * l01);
    let y = (l02 * l02 - x * x).max(0.0).sqrt();
    [Vector2::zeros(), Vector2::new(l01, 0.0), Vector2::new(x, y)]
}

/// Anything that can produce single-source distance fields.
pub trait GeodesicProvider: Sync {
    fn n(&self) -> usize;
    fn distance_from(&self, source: usize) -> Result<Vec<f64>>;
}

/// Prefactored heat method on a fixed operator.
#[derive(Debug, Clone)]
pub struct HeatSolver {
    heat: EnvelopeCholesky,
    poisson: EnvelopeCholesky,
    faces: Vec<[usize; 3]>,
    layouts: Vec<[Vector2<f64>; 3]>,
    component: Vec<usize>,
    n_components: usize,
    /// diffusion time `c * h^2`
    pub time: f64,
}

impl HeatSolver {
    /// `c` scales the diffusion time `t = c h^2` with `h` the mean intrinsic
    /// edge length.
    pub fn new(lap: &LaplacianPair, soup: &TriangleSoup, c: f64) -> Result<Self> {
        let n = lap.n();
        if soup.faces.iter().flatten().any(|&v| v >= n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: soup.n,
            });
        }
        if !(c > 0.0) {
            return Err(Error::InvalidInput(format!("heat time factor must be positive, got {c}")));
        }
        let h = soup.mean_edge_length();
        let time = c * h * h;
        let heat = EnvelopeCholesky::factor(&lap.w.scaled(time).add_diagonal(&lap.mass, 1.0))?;

        let mean_w = lap.w.diagonal().iter().sum::<f64>() / n as f64;
        let mean_m = lap.mass.iter().sum::<f64>() / n as f64;
        let eps = 1e-10 * mean_w / mean_m;
        let poisson = EnvelopeCholesky::factor(&lap.w.add_diagonal(&lap.mass, eps))?;

        let component = label_components(n, &soup.edges());
        let n_components = component.iter().max().map_or(0, |c| c + 1);
        Ok(Self {
            heat,
            poisson,
            faces: soup.faces.clone(),
            layouts: soup.edge_lengths.iter().map(layout).collect(),
            component,
            n_components,
            time,
        })
    }

    /// Convenience for a triangle mesh operator built from `soup`.
    pub fn from_mesh(lap: &LaplacianPair, mesh: &crate::TriangleMesh, c: f64) -> Result<Self> {
        let soup = TriangleSoup::from_faces(&mesh.vertices, mesh.faces.clone());
        Self::new(lap, &soup, c)
    }

    pub fn n(&self) -> usize {
        self.heat.n()
    }

    /// Distance to the nearest of `sources`. Vertices in components without
    /// a source are `+inf`.
    pub fn distance(&self, sources: &[usize]) -> Result<ScalarField> {
        let n = self.n();
        if sources.is_empty() {
            return Err(Error::InvalidInput("no heat sources given".into()));
        }
        if let Some(&s) = sources.iter().find(|&&s| s >= n) {
            return Err(Error::InvalidInput(format!("source {s} out of range for {n} vertices")));
        }
        let mut u = vec![0.0; n];
        for &s in sources {
            u[s] = 1.0;
        }
        self.heat.solve_in_place(&mut u);

        let mut div = vec![0.0; n];
        for (f, p) in self.faces.iter().zip(&self.layouts) {
            let vals = f.map(|i| u[i]);
            let Some(g) = linear_gradient(p, vals) else { continue };
            let norm = g.norm();
            if !(norm > 0.0) || !norm.is_finite() {
                continue;
            }
            let x = -g / norm;
            let mut acc = [0.0; 3];
            accumulate_divergence(p, &x, &mut acc);
            for c in 0..3 {
                // W is the negated cotan Laplacian, so W phi = -div X
                div[f[c]] -= acc[c];
            }
        }

        // remove the per-component mean so the right-hand side lies in the
        // range of W
        let mut sum = vec![0.0; self.n_components];
        let mut count = vec![0usize; self.n_components];
        for i in 0..n {
            sum[self.component[i]] += div[i];
            count[self.component[i]] += 1;
        }
        for i in 0..n {
            let c = self.component[i];
            div[i] -= sum[c] / count[c] as f64;
        }
        self.poisson.solve_in_place(&mut div);
        let mut phi = div;

        let mut offset = vec![f64::INFINITY; self.n_components];
        for &s in sources {
            let c = self.component[s];
            offset[c] = offset[c].min(phi[s]);
        }
        for i in 0..n {
            let o = offset[self.component[i]];
            phi[i] = if o.is_finite() {
                (phi[i] - o).max(0.0)
            } else {
                f64::INFINITY
            };
        }
        Ok(ScalarField::new(phi))
    }

    /// One field per source, computed concurrently.
    pub fn distances_per_source(&self, sources: &[usize]) -> Result<Vec<ScalarField>> {
        sources.par_iter().map(|&s| self.distance(&[s])).collect()
    }
}

impl GeodesicProvider for HeatSolver {
    fn n(&self) -> usize {
        HeatSolver::n(self)
    }

    fn distance_from(&self, source: usize) -> Result<Vec<f64>> {
        Ok(self.distance(&[source])?.values)
    }
}

/// Heat-method distance from `sources` with the default time factor.
pub fn heat_distance(lap: &LaplacianPair, soup: &TriangleSoup, sources: &[usize]) -> Result<ScalarField> {
    HeatSolver::new(lap, soup, 1.0)?.distance(sources)
}

/// Weighted undirected graph for shortest paths.
#[derive(Debug, Clone)]
pub struct EdgeGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl EdgeGraph {
    /// Face edges weighted by Euclidean length.
    pub fn from_faces(positions: &[Vec3], faces: &[[usize; 3]]) -> Self {
        let mut edges: Vec<(usize, usize)> = faces
            .iter()
            .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        let weighted: Vec<(usize, usize, f64)> = edges
            .into_iter()
            .map(|(a, b)| (a, b, (positions[a] - positions[b]).norm()))
            .collect();
        Self::from_edges(positions.len(), &weighted)
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b, w) in edges {
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        }
        Self { adjacency }
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    /// Shortest-path distances from the nearest source; unreachable vertices
    /// are `+inf`.
    pub fn shortest_paths(&self, sources: &[usize]) -> Vec<f64> {
        #[derive(PartialEq)]
        struct Key(f64);
        impl Eq for Key {}
        impl PartialOrd for Key {
            fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Key {
            fn cmp(&self, other: &Self) -> std::cmp::Ordering {
                self.0.total_cmp(&other.0)
            }
        }

        let mut dist = vec![f64::INFINITY; self.n()];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            dist[s] = 0.0;
            heap.push(Reverse((Key(0.0), s)));
        }
        while let Some(Reverse((Key(d), v))) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &(w, len) in &self.adjacency[v] {
                let nd = d + len;
                if nd < dist[w] {
                    dist[w] = nd;
                    heap.push(Reverse((Key(nd), w)));
                }
            }
        }
        dist
    }
}

impl GeodesicProvider for EdgeGraph {
    fn n(&self) -> usize {
        EdgeGraph::n(self)
    }

    fn distance_from(&self, source: usize) -> Result<Vec<f64>> {
        if source >= self.n() {
            return Err(Error::InvalidInput(format!("source {source} out of range")));
        }
        Ok(self.shortest_paths(&[source]))
    }
}

/// Dijkstra over face edges with Euclidean weights.
pub fn dijkstra_distance(positions: &[Vec3], faces: &[[usize; 3]], source: usize) -> Result<ScalarField> {
    let g = EdgeGraph::from_faces(positions, faces);
    Ok(ScalarField::new(g.distance_from(source)?))
}

/// Geodesic error with the raw vertex sum and its per-vertex normalization.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GeodesicError {
    /// `(1 / n_src) (1 / sqrt S) sum_src sum_vertices |d - d_approx|`
    pub e_geo: f64,
    /// `e_geo / N`
    pub e_geo_per_vertex: f64,
}

pub fn geodesic_error(approx: &[Vec<f64>], exact: &[Vec<f64>], area: f64) -> Result<GeodesicError> {
    if approx.len() != exact.len() {
        return Err(Error::DimensionMismatch {
            expected: exact.len(),
            got: approx.len(),
        });
    }
    if approx.is_empty() {
        return Err(Error::InvalidInput("no source fields".into()));
    }
    let n = exact[0].len();
    let mut total = 0.0;
    for (a, e) in approx.iter().zip(exact) {
        if a.len() != e.len() || e.len() != n {
            return Err(Error::DimensionMismatch {
                expected: e.len(),
                got: a.len(),
            });
        }
        for (x, y) in a.iter().zip(e) {
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::InvalidInput("distance field contains unreachable vertices".into()));
            }
            total += (x - y).abs();
        }
    }
    let e_geo = total / (approx.len() as f64 * area.sqrt());
    Ok(GeodesicError {
        e_geo,
        e_geo_per_vertex: e_geo / n as f64,
    })
}

/// Writes `source,vertex,distance` rows for a set of per-source fields.
pub fn write_distance_table(sources: &[usize], fields: &[ScalarField], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(out, "source,vertex,distance").map_err(io)?;
    for (s, f) in sources.iter().zip(fields) {
        for (v, d) in f.values.iter().enumerate() {
            writeln!(out, "{s},{v},{d}").map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gradient_of_linear_function() {
        let c = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.3, 1.5, 0.0)];
        let g = face_gradient(c, [c[0].x, c[1].x, c[2].x]).unwrap();
        assert_relative_eq!(g, Vec3::x(), epsilon = 1e-12);
        let g = face_gradient(c, [4.0; 3]).unwrap();
        assert_relative_eq!(g, Vec3::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn gradient_on_tilted_face_is_tangent() {
        let c = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 1.0), Vec3::new(0.0, 1.0, 0.0)];
        let g = face_gradient(c, [0.0, 1.0, 0.5]).unwrap();
        let n = (c[1] - c[0]).cross(&(c[2] - c[0]));
        assert!(g.dot(&n).abs() < 1e-12);
        assert_relative_eq!(g.dot(&(c[1] - c[0])), 1.0, epsilon = 1e-12);
        assert_relative_eq!(g.dot(&(c[2] - c[0])), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_face_gradient_errors() {
        let c = [Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0];
        assert!(face_gradient(c, [0.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn layout_preserves_lengths() {
        let l = [1.3, 0.9, 1.7];
        let p = layout(&l);
        assert_relative_eq!((p[2] - p[1]).norm(), l[0], epsilon = 1e-12);
        assert_relative_eq!((p[0] - p[2]).norm(), l[1], epsilon = 1e-12);
        assert_relative_eq!((p[1] - p[0]).norm(), l[2], epsilon = 1e-12);
    }

    #[test]
    fn two_vertex_dijkstra() {
        let g = EdgeGraph::from_edges(2, &[(0, 1, 2.0)]);
        assert_eq!(g.shortest_paths(&[0]), vec![0.0, 2.0]);
        let g = EdgeGraph::from_edges(3, &[(0, 1, 2.0)]);
        assert!(g.shortest_paths(&[0])[2].is_infinite());
    }

    #[test]
    fn geodesic_error_formula() {
        let exact = vec![vec![0.0, 1.0, 2.0, 3.0], vec![1.0; 4]];
        let mut approx = exact.clone();
        let e = geodesic_error(&approx, &exact, 4.0).unwrap();
        assert_eq!(e.e_geo, 0.0);
        for v in &mut approx[0] {
            *v += 0.25;
        }
        let e = geodesic_error(&approx, &exact, 4.0).unwrap();
        // 0.25 * 4 / (2 * 2)
        assert_relative_eq!(e.e_geo, 0.25, epsilon = 1e-15);
        assert_relative_eq!(e.e_geo_per_vertex, 0.0625, epsilon = 1e-15);
        approx[1][0] = f64::INFINITY;
        assert!(geodesic_error(&approx, &exact, 4.0).is_err());
    }
}

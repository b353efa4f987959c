//! Weak-form Laplace-Beltrami operators: a cotan stiffness matrix `W` and a
//! lumped mass matrix `M`.
//!
//! Sign convention: `W` is positive semidefinite (diagonal positive,
//! off-diagonals `-1/2 (cot a + cot b)`), so the pencil `(W, M)` has
//! nonnegative eigenvalues and `M^-1 W` approximates `-Delta`.
//!
//! On splat scenes the operator is built from a triangle soup: every vertex
//! projects its graph neighbors onto its tangent plane, keeps the Delaunay
//! triangles incident to itself, and the union of those stars is assembled
//! with intrinsic edge lengths. Edges shared by more than two soup faces
//! accumulate the cotans of all of them.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::delaunay::{angular_fan, delaunay_star, Point2};
use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::neighborhood::{build_graph_with, GraphOptions, KnnStrategy, Metric, NeighborGraph};
use crate::sparse::CsrMatrix;
use crate::splat_io::{canonical_sign, normal_of, write_faces_ply, SplatSet, TriangleMesh};
use crate::{mtx, Vec3};

/// Orthonormal right-handed frame `(t1, t2, normal)` anchored at `origin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentFrame {
    pub origin: Vec3,
    pub t1: Vec3,
    pub t2: Vec3,
    pub normal: Vec3,
}

impl TangentFrame {
    pub fn project(&self, p: &Vec3) -> Point2 {
        let d = p - self.origin;
        [d.dot(&self.t1), d.dot(&self.t2)]
    }
}

/// Builds `t1` from the global axis least aligned with `normal`.
pub fn tangent_frame(center: Vec3, normal: Vec3) -> TangentFrame {
    let n = normal.normalize();
    let mut axis = 0;
    for i in 1..3 {
        if n[i].abs() < n[axis].abs() {
            axis = i;
        }
    }
    let e = Vec3::ith(axis, 1.0);
    let t1 = (e - n * n.dot(&e)).normalize();
    let t2 = n.cross(&t1);
    TangentFrame {
        origin: center,
        t1,
        t2,
        normal: n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalStatus {
    Delaunay,
    /// Projected points were collinear with the center.
    Fan,
    /// Fewer than two distinct projected neighbors.
    Isolated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalTriangulation {
    /// Faces `[center, a, b]`, counterclockwise in the tangent frame.
    pub faces: Vec<[usize; 3]>,
    pub status: LocalStatus,
}

/// Triangles incident to `center` in the Delaunay triangulation of its
/// neighbors projected onto `frame`.
pub fn local_triangulation(
    center: usize,
    neighbors: &[usize],
    positions: &[Vec3],
    frame: &TangentFrame,
) -> LocalTriangulation {
    let c2 = frame.project(&positions[center]);
    let mut order: Vec<usize> = neighbors.iter().copied().filter(|&j| j != center).collect();
    order.sort_unstable();
    order.dedup();
    let projected: Vec<Point2> = order.iter().map(|&j| frame.project(&positions[j])).collect();
    let scale = projected
        .iter()
        .map(|p| (p[0] - c2[0]).hypot(p[1] - c2[1]))
        .fold(0.0, f64::max);
    let tol = 1e-12 * scale;

    let mut points: Vec<Point2> = vec![c2];
    let mut global = vec![center];
    for (&j, &p) in order.iter().zip(&projected) {
        let clash = points
            .iter()
            .any(|q| (p[0] - q[0]).hypot(p[1] - q[1]) <= tol);
        if !clash {
            points.push(p);
            global.push(j);
        }
    }
    if points.len() < 3 {
        return LocalTriangulation {
            faces: Vec::new(),
            status: LocalStatus::Isolated,
        };
    }
    let mut star = delaunay_star(&points, &global);
    let mut status = LocalStatus::Delaunay;
    if star.is_empty() {
        star = angular_fan(&points);
        status = LocalStatus::Fan;
    }
    LocalTriangulation {
        faces: star
            .into_iter()
            .map(|(a, b)| [center, global[a], global[b]])
            .collect(),
        status,
    }
}

/// Union of local triangulations with per-face intrinsic edge lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleSoup {
    pub n: usize,
    pub faces: Vec<[usize; 3]>,
    /// `edge_lengths[f][c]` is the length of the edge opposite corner `c`.
    pub edge_lengths: Vec<[f64; 3]>,
    /// Vertices that belong to no face.
    pub isolated: Vec<usize>,
}

impl TriangleSoup {
    /// Soup with exact Euclidean lengths taken from `positions`.
    pub fn from_faces(positions: &[Vec3], faces: Vec<[usize; 3]>) -> Self {
        let n = positions.len();
        let edge_lengths = faces.iter().map(|f| face_lengths(positions, f)).collect();
        let isolated = isolated_vertices(n, &faces);
        Self {
            n,
            faces,
            edge_lengths,
            isolated,
        }
    }

    pub fn mean_edge_length(&self) -> f64 {
        if self.faces.is_empty() {
            return 0.0;
        }
        self.edge_lengths.iter().flatten().sum::<f64>() / (3 * self.faces.len()) as f64
    }

    /// Unique undirected edges `(i, j)`, `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    pub fn write_ply(&self, positions: &[Vec3], path: impl AsRef<Path>) -> Result<()> {
        write_faces_ply(positions, &self.faces, path)
    }
}

fn face_lengths(positions: &[Vec3], f: &[usize; 3]) -> [f64; 3] {
    let [a, b, c] = f.map(|i| positions[i]);
    [(c - b).norm(), (a - c).norm(), (b - a).norm()]
}

fn isolated_vertices(n: usize, faces: &[[usize; 3]]) -> Vec<usize> {
    let mut used = vec![false; n];
    for f in faces {
        for &v in f {
            used[v] = true;
        }
    }
    (0..n).filter(|&i| !used[i]).collect()
}

/// Relative floor and triangle-inequality slack used by mollification.
pub const MOLLIFY_REL: f64 = 1e-6;

/// Builds the soup from per-vertex neighbor lists and unit normals.
pub fn build_soup(positions: &[Vec3], neighbors: &[Vec<usize>], normals: &[Vec3]) -> TriangleSoup {
    let n = positions.len();
    assert_eq!(neighbors.len(), n);
    assert_eq!(normals.len(), n);
    let locals: Vec<LocalTriangulation> = (0..n)
        .into_par_iter()
        .map(|i| {
            let frame = tangent_frame(positions[i], normals[i]);
            local_triangulation(i, &neighbors[i], positions, &frame)
        })
        .collect();

    let mut seen = HashSet::new();
    let mut faces = Vec::new();
    for local in locals {
        for f in local.faces {
            let mut key = f;
            key.sort_unstable();
            if seen.insert(key) {
                faces.push(f);
            }
        }
    }
    let mut soup = TriangleSoup::from_faces(positions, faces);
    mollify(&mut soup);
    soup
}

/// Intrinsic mollification: floors every length at `1e-6 * mean` and then
/// raises each face's lengths uniformly until every triangle inequality
/// holds with slack `1e-6 * mean`.
pub fn mollify(soup: &mut TriangleSoup) {
    let mean = soup.mean_edge_length();
    if mean <= 0.0 {
        return;
    }
    let floor = MOLLIFY_REL * mean;
    let delta = MOLLIFY_REL * mean;
    for l in &mut soup.edge_lengths {
        for x in l.iter_mut() {
            *x = x.max(floor);
        }
        let slack = |l: &[f64; 3]| {
            (0..3)
                .map(|c| l[(c + 1) % 3] + l[(c + 2) % 3] - l[c])
                .fold(f64::INFINITY, f64::min)
        };
        let s = slack(l);
        if s < delta {
            let mut raise = delta - s;
            loop {
                let raised = l.map(|x| x + raise);
                if slack(&raised) >= delta {
                    *l = raised;
                    break;
                }
                raise += delta * 1e-6;
            }
        }
    }
}

/// Triangle area from side lengths (Kahan's stable Heron formula).
pub fn triangle_area(a: f64, b: f64, c: f64) -> f64 {
    let mut s = [a, b, c];
    s.sort_by(|x, y| y.total_cmp(x));
    let [a, b, c] = s;
    let p = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
    if p <= 0.0 {
        0.0
    } else {
        0.25 * p.sqrt()
    }
}

/// Cotangent of the angle opposite side `a` in a triangle with sides
/// `a, b, c`.
pub fn cotan_from_lengths(a: f64, b: f64, c: f64) -> Result<f64> {
    let area = triangle_area(a, b, c);
    if !(area > 0.0) {
        return Err(Error::InvalidInput(format!(
            "zero-area triangle with sides ({a}, {b}, {c})"
        )));
    }
    Ok((b * b + c * c - a * a) / (4.0 * area))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MassLumping {
    /// One third of each incident face area.
    #[default]
    Barycentric,
    /// Mixed Voronoi areas (obtuse faces fall back to area splits).
    Voronoi,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AssemblyOptions {
    /// Clamp assembled off-diagonals to `<= 0` (nonnegative edge weights).
    pub clamp_negative_weights: bool,
    pub mass: MassLumping,
}

/// Stiffness and lumped mass of the weak Laplace-Beltrami operator.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianPair {
    pub w: CsrMatrix,
    /// Diagonal of `M`.
    pub mass: Vec<f64>,
}

impl LaplacianPair {
    pub fn n(&self) -> usize {
        self.mass.len()
    }

    /// Total surface area, the sum of the lumped masses.
    pub fn area(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// `M^-1 W x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.w.mul_vec(x);
        for (yi, m) in y.iter_mut().zip(&self.mass) {
            *yi /= m;
        }
        y
    }

    /// Exports `W` (symmetric) and `M` (diagonal) in Matrix Market format.
    pub fn write_matrix_market(&self, w_path: impl AsRef<Path>, m_path: impl AsRef<Path>) -> Result<()> {
        mtx::write_symmetric(&self.w, w_path)?;
        mtx::write_symmetric(&CsrMatrix::from_diagonal(&self.mass), m_path)
    }
}

pub fn assemble(soup: &TriangleSoup, n: usize) -> Result<LaplacianPair> {
    assemble_with(soup, n, &AssemblyOptions::default())
}

pub fn assemble_with(soup: &TriangleSoup, n: usize, opts: &AssemblyOptions) -> Result<LaplacianPair> {
    if soup.faces.is_empty() {
        return Err(Error::InvalidInput("cannot assemble an empty soup".into()));
    }
    let mut upper: Vec<(usize, usize, f64)> = Vec::with_capacity(3 * soup.faces.len());
    let mut mass = vec![0.0; n];
    for (f, l) in soup.faces.iter().zip(&soup.edge_lengths) {
        if f.iter().any(|&v| v >= n) {
            return Err(Error::InvalidInput(format!("face {f:?} out of range for n = {n}")));
        }
        let area = triangle_area(l[0], l[1], l[2]);
        if !(area > 0.0) {
            return Err(Error::DegenerateTriangle(*f));
        }
        let mut cot = [0.0; 3];
        for c in 0..3 {
            let (a, b, cc) = (l[c], l[(c + 1) % 3], l[(c + 2) % 3]);
            cot[c] = (b * b + cc * cc - a * a) / (4.0 * area);
        }
        for c in 0..3 {
            let (i, j) = (f[(c + 1) % 3], f[(c + 2) % 3]);
            upper.push((i.min(j), i.max(j), -0.5 * cot[c]));
        }
        match opts.mass {
            MassLumping::Barycentric => {
                for &v in f {
                    mass[v] += area / 3.0;
                }
            }
            MassLumping::Voronoi => {
                let obtuse = (0..3).find(|&c| cot[c] < 0.0);
                for c in 0..3 {
                    let share = match obtuse {
                        None => {
                            // edges from corner c: opposite corners c+2 and c+1
                            let l_next = l[(c + 2) % 3];
                            let l_prev = l[(c + 1) % 3];
                            (l_next * l_next * cot[(c + 2) % 3] + l_prev * l_prev * cot[(c + 1) % 3]) / 8.0
                        }
                        Some(o) if o == c => area / 2.0,
                        Some(_) => area / 4.0,
                    };
                    mass[f[c]] += share;
                }
            }
        }
    }

    let merged = CsrMatrix::from_triplets(n, &upper);
    let mut triplets = Vec::with_capacity(2 * merged.nnz() + n);
    let mut diag = vec![0.0; n];
    for (i, j, v) in merged.entries() {
        let v = if opts.clamp_negative_weights { v.min(0.0) } else { v };
        triplets.push((i, j, v));
        triplets.push((j, i, v));
    }
    for &(i, _, v) in &triplets {
        diag[i] -= v;
    }
    triplets.extend(diag.iter().enumerate().map(|(i, &d)| (i, i, d)));
    let w = CsrMatrix::from_triplets(n, &triplets);

    let positive: Vec<f64> = mass.iter().copied().filter(|&m| m > 0.0).collect();
    let mean = positive.iter().sum::<f64>() / positive.len().max(1) as f64;
    for m in &mut mass {
        if *m <= 0.0 {
            *m = 1e-12 * mean;
        }
    }
    Ok(LaplacianPair { w, mass })
}

/// Cotan operator of a triangle mesh with exact Euclidean lengths.
pub fn mesh_laplacian(mesh: &TriangleMesh) -> Result<LaplacianPair> {
    mesh_laplacian_with(mesh, &AssemblyOptions::default())
}

pub fn mesh_laplacian_with(mesh: &TriangleMesh, opts: &AssemblyOptions) -> Result<LaplacianPair> {
    let soup = TriangleSoup::from_faces(&mesh.vertices, mesh.faces.clone());
    assemble_with(&soup, mesh.n_vertices(), opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalSource {
    /// Smallest-variance axis of each splat's covariance.
    #[default]
    Covariance,
    /// Smallest principal direction of the Euclidean neighborhood of each
    /// center.
    Pca,
}

impl fmt::Display for NormalSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormalSource::Covariance => "covariance",
            NormalSource::Pca => "pca",
        })
    }
}

impl FromStr for NormalSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "covariance" => Ok(Self::Covariance),
            "pca" => Ok(Self::Pca),
            other => Err(Error::InvalidInput(format!("unknown normal source `{other}`"))),
        }
    }
}

/// PCA normals from the `k` Euclidean nearest neighbors (plus the point
/// itself), sign-normalized like splat normals.
pub fn pca_normals(positions: &[Vec3], k: usize) -> Vec<Vec3> {
    let tree = KdTree::new(positions);
    positions
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut pts: Vec<Vec3> = vec![*p];
            pts.extend(tree.knn(p, k, Some(i)).into_iter().map(|(j, _)| positions[j]));
            let mean = pts.iter().sum::<Vec3>() / pts.len() as f64;
            let mut cov = nalgebra::Matrix3::<f64>::zeros();
            for q in &pts {
                let d = q - mean;
                cov += d * d.transpose();
            }
            let eig = nalgebra::SymmetricEigen::new(cov);
            let imin = eig.eigenvalues.imin();
            canonical_sign(eig.eigenvectors.column(imin).into_owned().normalize())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplatLaplacianOptions {
    pub k: usize,
    pub metric: Metric,
    pub normal_source: NormalSource,
    /// Neighborhood size for PCA normals; defaults to `k`.
    pub normal_k: Option<usize>,
    pub strategy: KnnStrategy,
    pub assembly: AssemblyOptions,
}

impl Default for SplatLaplacianOptions {
    fn default() -> Self {
        Self {
            k: 8,
            metric: Metric::Mahalanobis,
            normal_source: NormalSource::Covariance,
            normal_k: None,
            strategy: KnnStrategy::Auto,
            assembly: AssemblyOptions::default(),
        }
    }
}

/// Everything produced while building a splat operator.
#[derive(Debug, Clone)]
pub struct SplatOperator {
    pub laplacian: LaplacianPair,
    pub graph: NeighborGraph,
    pub soup: TriangleSoup,
    pub normals: Vec<Vec3>,
}

/// Graph, normals, soup and assembly in one call.
pub fn splat_laplacian(set: &SplatSet, opts: &SplatLaplacianOptions) -> Result<SplatOperator> {
    let graph = build_graph_with(
        set,
        &GraphOptions {
            k: opts.k,
            metric: opts.metric,
            strategy: opts.strategy,
        },
    )?;
    let positions = set.positions();
    let normals = match opts.normal_source {
        NormalSource::Covariance => set.splats.iter().map(|s| normal_of(s).normal).collect(),
        NormalSource::Pca => pca_normals(&positions, opts.normal_k.unwrap_or(opts.k)),
    };
    let soup = build_soup(&positions, &graph.adjacency(), &normals);
    let laplacian = assemble_with(&soup, set.len(), &opts.assembly)?;
    Ok(SplatOperator {
        laplacian,
        graph,
        soup,
        normals,
    })
}

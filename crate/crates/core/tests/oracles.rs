//! Cross-checks of library routines against independent reference
//! implementations written here.

mod common;

use std::collections::BTreeSet;
use std::io::Write;

use approx::assert_relative_eq;
use nalgebra::UnitQuaternion;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatlbo::heat::{integrated_divergence, EdgeGraph};
use splatlbo::laplacian::{
    assemble, cotan_from_lengths, local_triangulation, mesh_laplacian, splat_laplacian, tangent_frame, LocalStatus,
    SplatLaplacianOptions, TriangleSoup,
};
use splatlbo::neighborhood::{KnnIndex, KnnStrategy};
use splatlbo::spectral::{count_zero_eigenvalues, smallest_eigenpairs, DEFAULT_ZERO_TOL};
use splatlbo::splat_io::{read_splat_ply, write_splat_ply, TriangleMesh};
use splatlbo::synthetic::{self, icosphere};
use splatlbo::{mtx, Metric, SplatSet, Vec3};

/// Circumcircle test in plain floating point; fine for random inputs.
fn in_circumcircle(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let m = |p: [f64; 2]| {
        let (x, y) = (p[0] - d[0], p[1] - d[1]);
        [x, y, x * x + y * y]
    };
    let (p, q, r) = (m(a), m(b), m(c));
    let det = p[0] * (q[1] * r[2] - q[2] * r[1]) - p[1] * (q[0] * r[2] - q[2] * r[0]) + p[2] * (q[0] * r[1] - q[1] * r[0]);
    let orient = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    det * orient.signum() > 0.0
}

#[test]
fn local_star_matches_exhaustive_delaunay() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..40 {
        let m = rng.random_range(4..12);
        let pts: Vec<[f64; 2]> = (0..m)
            .map(|i| {
                if i == 0 {
                    [0.0, 0.0]
                } else {
                    [rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0]
                }
            })
            .collect();
        // every triangle through point 0 with an empty circumcircle
        let mut expect = BTreeSet::new();
        for a in 1..m {
            for b in a + 1..m {
                let empty = (1..m)
                    .filter(|&q| q != a && q != b)
                    .all(|q| !in_circumcircle(pts[0], pts[a], pts[b], pts[q]));
                if empty {
                    expect.insert((a, b));
                }
            }
        }
        let positions: Vec<Vec3> = pts.iter().map(|p| Vec3::new(p[0], p[1], 0.0)).collect();
        let neighbors: Vec<usize> = (1..m).collect();
        let local = local_triangulation(0, &neighbors, &positions, &tangent_frame(positions[0], Vec3::z()));
        if expect.is_empty() {
            assert_ne!(local.status, LocalStatus::Delaunay, "trial {trial}");
            continue;
        }
        assert_eq!(local.status, LocalStatus::Delaunay, "trial {trial}");
        let got: BTreeSet<(usize, usize)> = local.faces.iter().map(|f| (f[1].min(f[2]), f[1].max(f[2]))).collect();
        assert_eq!(got, expect, "trial {trial}");
        for f in &local.faces {
            let [a, b, c] = f.map(|i| positions[i]);
            assert!((b - a).cross(&(c - a)).z > 0.0, "faces are counterclockwise");
        }
    }
}

#[test]
fn cotan_matches_coordinate_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let p: Vec<Vec3> = (0..3).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
        let (u, v) = (p[1] - p[0], p[2] - p[0]);
        let expect = u.dot(&v) / u.cross(&v).norm();
        let a = (p[2] - p[1]).norm();
        let got = cotan_from_lengths(a, v.norm(), u.norm()).unwrap();
        assert_relative_eq!(got, expect, epsilon = 1e-9, max_relative = 1e-9);
    }
}

/// Cotan stiffness and barycentric mass assembled densely from vertex
/// coordinates.
fn dense_cotan(mesh: &TriangleMesh) -> (nalgebra::DMatrix<f64>, Vec<f64>) {
    let n = mesh.n_vertices();
    let mut w = nalgebra::DMatrix::zeros(n, n);
    let mut mass = vec![0.0; n];
    for f in &mesh.faces {
        let area = 0.5 * (mesh.vertices[f[1]] - mesh.vertices[f[0]]).cross(&(mesh.vertices[f[2]] - mesh.vertices[f[0]])).norm();
        for c in 0..3 {
            let (o, i, j) = (f[c], f[(c + 1) % 3], f[(c + 2) % 3]);
            let (u, v) = (mesh.vertices[i] - mesh.vertices[o], mesh.vertices[j] - mesh.vertices[o]);
            let cot = u.dot(&v) / u.cross(&v).norm();
            w[(i, j)] -= 0.5 * cot;
            w[(j, i)] -= 0.5 * cot;
            w[(i, i)] += 0.5 * cot;
            w[(j, j)] += 0.5 * cot;
            mass[o] += area / 3.0;
        }
    }
    (w, mass)
}

#[test]
fn mesh_assembly_matches_dense_cotan() {
    for mesh in [icosphere(1), synthetic::grid(6, 4, 2.0, 1.0), synthetic::radial_noise(&icosphere(2), 0.05, 1)] {
        let lap = mesh_laplacian(&mesh).unwrap();
        let (w, mass) = dense_cotan(&mesh);
        let got = lap.w.to_dense();
        let scale = w.amax();
        assert!((got - &w).amax() <= 1e-12 * scale);
        for (a, b) in lap.mass.iter().zip(&mass) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }
}

#[test]
fn grid_interior_is_five_point_stencil() {
    let n = 5;
    let mesh = synthetic::grid(n, n, 1.0, 1.0);
    let w = mesh_laplacian(&mesh).unwrap().w.to_dense();
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let v = j * n + i;
            for u in 0..n * n {
                let (ui, uj) = (u % n, u / n);
                let d = (ui as i64 - i as i64).abs() + (uj as i64 - j as i64).abs();
                let expect = match d {
                    0 => 4.0,
                    1 => -1.0,
                    _ => 0.0,
                };
                assert!((w[(v, u)] - expect).abs() < 1e-12, "W[{v},{u}] = {}", w[(v, u)]);
            }
        }
    }
}

#[test]
fn icosahedron_splats_reproduce_the_icosahedron() {
    let mesh = icosphere(0);
    let set = synthetic::sphere_disk_splats(&mesh);
    let op = splat_laplacian(
        &set,
        &SplatLaplacianOptions {
            k: 5,
            metric: Metric::Euclidean,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(op.graph.edges.len(), 30);
    let key = |f: &[usize; 3]| {
        let mut k = *f;
        k.sort_unstable();
        k
    };
    let got: BTreeSet<[usize; 3]> = op.soup.faces.iter().map(key).collect();
    let expect: BTreeSet<[usize; 3]> = mesh.faces.iter().map(key).collect();
    assert_eq!(op.soup.faces.len(), 20);
    assert_eq!(got, expect);
    let reference = mesh_laplacian(&mesh).unwrap();
    assert!((op.laplacian.w.to_dense() - reference.w.to_dense()).amax() < 1e-9);
}

#[test]
fn soup_from_mesh_faces_assembles_like_the_mesh() {
    let mesh = synthetic::radial_noise(&icosphere(2), 0.02, 4);
    let soup = TriangleSoup::from_faces(&mesh.vertices, mesh.faces.clone());
    let a = assemble(&soup, mesh.n_vertices()).unwrap();
    let b = mesh_laplacian(&mesh).unwrap();
    assert!((a.w.to_dense() - b.w.to_dense()).amax() < 1e-12);
    assert_eq!(a.mass, b.mass);
}

#[test]
fn knn_matches_exhaustive_scan() {
    let set = synthetic::random_splats(300, 17);
    for metric in [Metric::Euclidean, Metric::Mahalanobis] {
        let index = KnnIndex::new(&set, metric, KnnStrategy::Tree).unwrap();
        for i in (0..set.len()).step_by(7) {
            let got: Vec<usize> = index.query(i, 6).unwrap().into_iter().map(|x| x.0).collect();
            let mut all: Vec<(f64, usize)> = (0..set.len())
                .filter(|&j| j != i)
                .map(|j| {
                    let v = set.splats[j].mean - set.splats[i].mean;
                    let d = match metric {
                        Metric::Euclidean => v.norm(),
                        Metric::Mahalanobis => {
                            let s = &set.splats[i];
                            let local = s.rotation.inverse() * v;
                            local.component_div(&s.scale).norm()
                        }
                    };
                    (d, j)
                })
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let expect: Vec<usize> = all.iter().take(6).map(|x| x.1).collect();
            assert_eq!(got, expect, "{metric} query {i}");
        }
    }
}

#[test]
fn dijkstra_matches_floyd_warshall() {
    let mesh = synthetic::grid(5, 5, 1.0, 2.0);
    let n = mesh.n_vertices();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for f in &mesh.faces {
        for c in 0..3 {
            let (a, b) = (f[c], f[(c + 1) % 3]);
            let l = (mesh.vertices[a] - mesh.vertices[b]).norm();
            d[a][b] = d[a][b].min(l);
            d[b][a] = d[b][a].min(l);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    let graph = EdgeGraph::from_faces(&mesh.vertices, &mesh.faces);
    for s in 0..n {
        let got = graph.shortest_paths(&[s]);
        for t in 0..n {
            assert_relative_eq!(got[t], d[s][t], epsilon = 1e-12);
        }
    }
}

#[test]
fn divergence_of_any_field_sums_to_zero_on_closed_surface() {
    let mesh = icosphere(2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let field: Vec<Vec3> = (0..mesh.faces.len())
        .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()) - Vec3::repeat(0.5))
        .collect();
    let div = integrated_divergence(&mesh.vertices, &mesh.faces, &field).unwrap();
    let total: f64 = div.iter().sum();
    let scale: f64 = div.iter().map(|x| x.abs()).sum();
    assert!(total.abs() < 1e-12 * scale);
}

fn disjoint_union(a: &TriangleMesh, b: &TriangleMesh, offset: Vec3) -> TriangleMesh {
    let n = a.n_vertices();
    let mut vertices = a.vertices.clone();
    vertices.extend(b.vertices.iter().map(|p| p + offset));
    let mut faces = a.faces.clone();
    faces.extend(b.faces.iter().map(|f| f.map(|v| v + n)));
    TriangleMesh::new(vertices, faces).unwrap()
}

#[test]
fn two_components_have_two_zero_eigenvalues() {
    let mesh = disjoint_union(&icosphere(2), &icosphere(1), Vec3::new(5.0, 0.0, 0.0));
    let spec = smallest_eigenpairs(&mesh_laplacian(&mesh).unwrap(), 8).unwrap();
    assert_eq!(count_zero_eigenvalues(&spec.eigenvalues, DEFAULT_ZERO_TOL).unwrap(), 2);

    let mut set = common::fibonacci_disk_splats(600, 1.0);
    let other = common::fibonacci_disk_splats(400, 0.5);
    set.splats.extend(other.splats.into_iter().map(|mut s| {
        s.mean += Vec3::new(3.0, 0.0, 0.0);
        s
    }));
    let op = splat_laplacian(&set, &Default::default()).unwrap();
    assert_eq!(op.graph.n_components(), 2);
    let spec = smallest_eigenpairs(&op.laplacian, 8).unwrap();
    assert_eq!(count_zero_eigenvalues(&spec.eigenvalues, DEFAULT_ZERO_TOL).unwrap(), 2);
}

#[test]
fn disjoint_union_spectrum_is_union_of_spectra() {
    let (a, b) = (icosphere(2), synthetic::grid(8, 8, 1.0, 1.0));
    let k = 10;
    let sa = smallest_eigenpairs(&mesh_laplacian(&a).unwrap(), k).unwrap().eigenvalues;
    let sb = smallest_eigenpairs(&mesh_laplacian(&b).unwrap(), k).unwrap().eigenvalues;
    let mut expect: Vec<f64> = sa.iter().chain(&sb).copied().collect();
    expect.sort_by(f64::total_cmp);
    let both = disjoint_union(&a, &b, Vec3::new(4.0, 0.0, 0.0));
    let got = smallest_eigenpairs(&mesh_laplacian(&both).unwrap(), k).unwrap().eigenvalues;
    for (g, e) in got.iter().zip(&expect) {
        assert!((g - e).abs() <= 1e-8 * e.abs().max(1.0), "{g} vs {e}");
    }
}

#[test]
fn eigensolver_matches_dense_solve() {
    let lap = mesh_laplacian(&synthetic::radial_noise(&icosphere(2), 0.03, 9)).unwrap();
    let dense = common::dense_eigenvalues(&lap);
    let spec = smallest_eigenpairs(&lap, 25).unwrap();
    for (g, e) in spec.eigenvalues.iter().zip(&dense) {
        assert!((g - e).abs() <= 1e-8 * e.abs().max(1.0), "{g} vs {e}");
    }
    let residuals = splatlbo::spectral::residual_norms(&lap, &spec);
    assert!(residuals.iter().all(|r| *r < 1e-6));
}

#[test]
fn splat_ply_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.ply");
    let set = synthetic::random_splats(50, 5);
    write_splat_ply(&set, &path).unwrap();
    let back = read_splat_ply(&path).unwrap();
    assert_eq!(back.len(), set.len());
    for (a, b) in set.splats.iter().zip(&back.splats) {
        assert!((a.mean - b.mean).norm() < 1e-6);
        assert!(((a.scale - b.scale).component_div(&a.scale)).amax() < 1e-5);
        assert!(a.rotation.angle_to(&b.rotation) < 1e-5);
        assert!((a.opacity - b.opacity).abs() < 1e-5);
    }
}

#[test]
fn ascii_checkpoint_decodes_log_scale_logit_opacity_and_wxyz() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ascii.ply");
    let mut f = std::fs::File::create(&path).unwrap();
    let props = [
        "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1",
        "rot_2", "rot_3",
    ];
    writeln!(f, "ply\nformat ascii 1.0\nelement vertex 1").unwrap();
    for p in props {
        writeln!(f, "property float {p}").unwrap();
    }
    writeln!(f, "end_header").unwrap();
    // rotation of 90 degrees about z, unnormalized
    let h = std::f64::consts::FRAC_1_SQRT_2 * 2.0;
    writeln!(f, "1 2 3 0.1 0.2 0.3 0 {} {} {} {h} 0 0 {h}", 0f64.ln(), 2f64.ln(), 0.5f64.ln()).unwrap();
    drop(f);
    // ln(0) is -inf, which the reader must reject
    assert!(read_splat_ply(&path).is_err());

    let text = std::fs::read_to_string(&path).unwrap().replace("-inf", &1f64.ln().to_string());
    std::fs::write(&path, text).unwrap();
    let set = read_splat_ply(&path).unwrap();
    let s = &set.splats[0];
    assert_relative_eq!(s.mean, Vec3::new(1.0, 2.0, 3.0));
    assert_relative_eq!(s.scale, Vec3::new(1.0, 2.0, 0.5), epsilon = 1e-6);
    assert_relative_eq!(s.opacity, 0.5);
    let expect = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), std::f64::consts::FRAC_PI_2);
    assert!(s.rotation.angle_to(&expect) < 1e-6);
    assert_eq!(s.sh, vec![0.1f32, 0.2, 0.3]);
    assert_eq!(set.sh_names, vec!["f_dc_0", "f_dc_1", "f_dc_2"]);
}

#[test]
fn matrix_market_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let lap = mesh_laplacian(&icosphere(1)).unwrap();
    let (wp, mp) = (dir.path().join("W.mtx"), dir.path().join("M.mtx"));
    lap.write_matrix_market(&wp, &mp).unwrap();
    let w = mtx::read(&wp).unwrap();
    assert!((w.to_dense() - lap.w.to_dense()).amax() < 1e-15 * lap.w.norm_inf());
    let m = mtx::read(&mp).unwrap();
    for (i, v) in lap.mass.iter().enumerate() {
        assert_relative_eq!(m.get(i, i), *v, max_relative = 1e-15);
    }
}

#[test]
fn filtering_removes_isolated_outliers() {
    let surface = common::fibonacci_disk_splats(1000, 1.0);
    let mut splats = surface.splats.clone();
    splats.extend(synthetic::interior_outliers(20, 0.5, 0.01, 1));
    let set = SplatSet::new(splats);
    let graph = splatlbo::neighborhood::build_graph(&set, 8, Metric::Mahalanobis).unwrap();
    let (kept, map) = splatlbo::neighborhood::prune_components_with_map(&set, &graph, 1);
    assert!(map[1000..].iter().all(|m| m.is_none()));
    assert!(kept.len() >= 950);
}

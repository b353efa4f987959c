//! Synthetic meshes and splat scenes with known geometry, used by tests,
//! benchmarks and demos.

use std::collections::HashMap;

use nalgebra::{Quaternion, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::splat_io::{GaussianSplat, SplatSet, TriangleMesh};
use crate::Vec3;

/// Icosahedron with one vertex at `(0, 0, 1)`, subdivided `level` times and
/// projected to the unit sphere. Level `l` has `10 * 4^l + 2` vertices;
/// faces are counterclockwise seen from outside.
pub fn icosphere(level: usize) -> TriangleMesh {
    let z = 1.0 / 5f64.sqrt();
    let r = 2.0 / 5f64.sqrt();
    let mut vertices = vec![Vec3::z()];
    for k in 0..5 {
        let a = (k as f64) * 72f64.to_radians();
        vertices.push(Vec3::new(r * a.cos(), r * a.sin(), z));
    }
    for k in 0..5 {
        let a = (36.0 + 72.0 * k as f64).to_radians();
        vertices.push(Vec3::new(r * a.cos(), r * a.sin(), -z));
    }
    vertices.push(-Vec3::z());

    let mut faces = Vec::new();
    for k in 0..5 {
        let u0 = 1 + k;
        let u1 = 1 + (k + 1) % 5;
        let l0 = 6 + k;
        let l1 = 6 + (k + 1) % 5;
        faces.push([0, u0, u1]);
        faces.push([u0, l0, u1]);
        faces.push([u1, l0, l1]);
        faces.push([11, l1, l0]);
    }

    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vec3>| {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriangleMesh::new(vertices, faces).expect("icosphere is a valid mesh")
}

/// Planar grid in `z = 0` with `nx x ny` vertices spanning
/// `[0, width] x [0, height]`; every cell is split along the same diagonal.
/// Vertex `(i, j)` has index `j * nx + i`.
pub fn grid(nx: usize, ny: usize, width: f64, height: f64) -> TriangleMesh {
    assert!(nx >= 2 && ny >= 2);
    let mut vertices = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            vertices.push(Vec3::new(
                width * i as f64 / (nx - 1) as f64,
                height * j as f64 / (ny - 1) as f64,
                0.0,
            ));
        }
    }
    let mut faces = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let v = j * nx + i;
            faces.push([v, v + 1, v + nx + 1]);
            faces.push([v, v + nx + 1, v + nx]);
        }
    }
    TriangleMesh::new(vertices, faces).expect("grid is a valid mesh")
}

/// Area-weighted vertex normals.
pub fn vertex_normals(mesh: &TriangleMesh) -> Vec<Vec3> {
    let mut normals = vec![Vec3::zeros(); mesh.n_vertices()];
    for f in &mesh.faces {
        let [a, b, c] = f.map(|i| mesh.vertices[i]);
        let n = (b - a).cross(&(c - a));
        for &i in f {
            normals[i] += n;
        }
    }
    normals.iter().map(|n| n.normalize()).collect()
}

/// Mean edge length of a mesh.
pub fn mean_edge_length(mesh: &TriangleMesh) -> f64 {
    let mut total = 0.0;
    for f in &mesh.faces {
        for c in 0..3 {
            total += (mesh.vertices[f[c]] - mesh.vertices[f[(c + 1) % 3]]).norm();
        }
    }
    total / (3 * mesh.faces.len()) as f64
}

/// Rotation taking the local `z` axis to `normal`.
pub fn rotation_to(normal: &Vec3) -> UnitQuaternion<f64> {
    let n = normal.normalize();
    UnitQuaternion::rotation_between(&Vec3::z(), &n)
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vec3::x_axis(), std::f64::consts::PI))
}

/// Flat disks: in-plane standard deviation `in_plane`, `thickness` along
/// the normal.
pub fn disk_splats(points: &[Vec3], normals: &[Vec3], in_plane: f64, thickness: f64) -> SplatSet {
    SplatSet::new(
        points
            .iter()
            .zip(normals)
            .map(|(p, n)| GaussianSplat::new(*p, Vec3::new(in_plane, in_plane, thickness), rotation_to(n), 1.0))
            .collect(),
    )
}

/// Disk splats at the vertices of a sphere mesh centered at the origin,
/// with radial normals, in-plane scale `1.5 h` and thickness `0.05 h` for
/// mean edge length `h`.
pub fn sphere_disk_splats(mesh: &TriangleMesh) -> SplatSet {
    let h = mean_edge_length(mesh);
    let normals: Vec<Vec3> = mesh.vertices.iter().map(|p| p.normalize()).collect();
    disk_splats(&mesh.vertices, &normals, 1.5 * h, 0.05 * h)
}

/// `n` roughly uniform points on a sphere (Fibonacci lattice).
pub fn fibonacci_sphere(n: usize, radius: f64) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let a = golden * i as f64;
            Vec3::new(r * a.cos(), r * a.sin(), z) * radius
        })
        .collect()
}

/// Isotropic splats scattered uniformly inside a ball of radius
/// `max_radius`.
pub fn interior_outliers(count: usize, max_radius: f64, sigma: f64, seed: u64) -> Vec<GaussianSplat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = Vec3::new(rng.random(), rng.random(), rng.random()) * 2.0 - Vec3::repeat(1.0);
        if p.norm() <= 1.0 {
            out.push(GaussianSplat::isotropic(p * max_radius, sigma));
        }
    }
    out
}

/// Random anisotropic splats in the unit cube with log-uniform scales in
/// `[0.005, 0.05]` and uniformly random rotations.
pub fn random_splats(n: usize, seed: u64) -> SplatSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let splats = (0..n)
        .map(|_| {
            let mean = Vec3::new(rng.random(), rng.random(), rng.random());
            let scale = Vec3::from_fn(|_, _| 0.005 * 10f64.powf(rng.random::<f64>()));
            let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let rotation = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
            GaussianSplat::new(mean, scale, rotation, rng.random())
        })
        .collect();
    SplatSet::new(splats)
}

/// Copy of `mesh` with every vertex moved radially by Gaussian noise of
/// standard deviation `sigma` (absolute units).
pub fn radial_noise(mesh: &TriangleMesh, sigma: f64, seed: u64) -> TriangleMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vertices = mesh
        .vertices
        .iter()
        .map(|p| {
            let e: f64 = StandardNormal.sample(&mut rng);
            p + p.normalize() * (sigma * e)
        })
        .collect();
    TriangleMesh::new(vertices, mesh.faces.clone()).expect("small radial noise keeps faces valid")
}

/// Copy of `mesh` with vertices reordered so that new vertex `i` is old
/// vertex `perm[i]`.
pub fn permute_vertices(mesh: &TriangleMesh, perm: &[usize]) -> TriangleMesh {
    let mut inverse = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inverse[old] = new;
    }
    let vertices = perm.iter().map(|&old| mesh.vertices[old]).collect();
    let faces = mesh.faces.iter().map(|f| f.map(|v| inverse[v])).collect();
    TriangleMesh::new(vertices, faces).expect("permutation keeps the mesh valid")
}

/// Uniformly random permutation.
pub fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng);
    p
}

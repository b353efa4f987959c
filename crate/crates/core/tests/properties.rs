mod common;

use nalgebra::{Quaternion, UnitQuaternion};
use proptest::prelude::*;
use splatlbo::laplacian::{splat_laplacian, triangle_area};
use splatlbo::neighborhood::mahalanobis_distance;
use splatlbo::spectral::SpectrumMonitor;
use splatlbo::splat_io::{canonical_sign, normal_of};
use splatlbo::synthetic;
use splatlbo::{Correspondence, GaussianSplat, Vec3};

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn rotation() -> impl Strategy<Value = UnitQuaternion<f64>> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("nonzero quaternion", |q| q.0 * q.0 + q.1 * q.1 + q.2 * q.2 + q.3 * q.3 > 1e-3)
        .prop_map(|(w, x, y, z)| UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)))
}

fn splat() -> impl Strategy<Value = GaussianSplat> {
    (vec3(2.0), (0.01..2.0f64, 0.01..2.0f64, 0.01..2.0f64), rotation())
        .prop_map(|(m, s, r)| GaussianSplat::new(m, Vec3::new(s.0, s.1, s.2), r, 1.0))
}

proptest! {
    #[test]
    fn mahalanobis_is_rigid_invariant(s in splat(), p in vec3(3.0), r in rotation(), t in vec3(5.0)) {
        let d = mahalanobis_distance(&p, &s).unwrap();
        let mut moved = s.clone();
        moved.mean = r * s.mean + t;
        moved.rotation = r * s.rotation;
        let d2 = mahalanobis_distance(&(r * p + t), &moved).unwrap();
        prop_assert!((d - d2).abs() <= 1e-9 * d.max(1.0));
    }

    #[test]
    fn mahalanobis_matches_local_coordinates(s in splat(), p in vec3(3.0)) {
        let local = s.rotation.inverse() * (p - s.mean);
        let expect = local.component_div(&s.scale).norm();
        let d = mahalanobis_distance(&p, &s).unwrap();
        prop_assert!((d - expect).abs() <= 1e-9 * expect.max(1.0));
    }

    #[test]
    fn heron_area_matches_cross_product(a in vec3(1.0), b in vec3(1.0), c in vec3(1.0)) {
        let expect = 0.5 * (b - a).cross(&(c - a)).norm();
        let got = triangle_area((c - b).norm(), (c - a).norm(), (b - a).norm());
        let scale = (b - a).norm().max((c - a).norm()).powi(2);
        prop_assert!((got - expect).abs() <= 1e-9 * scale);
    }

    #[test]
    fn canonical_sign_is_idempotent_and_sign_invariant(v in vec3(1.0)) {
        prop_assume!(v.norm() > 1e-6);
        let c = canonical_sign(v);
        prop_assert_eq!(canonical_sign(c), c);
        prop_assert_eq!(canonical_sign(-v), c);
        prop_assert!(c == v || c == -v);
    }

    #[test]
    fn splat_normal_is_axis_of_smallest_scale(r in rotation(), s in (0.5..2.0f64, 0.5..2.0f64, 0.01..0.1f64)) {
        let g = GaussianSplat::new(Vec3::zeros(), Vec3::new(s.0, s.1, s.2), r, 1.0);
        let n = normal_of(&g).normal;
        let axis = r * Vec3::z();
        prop_assert!((n.dot(&axis).abs() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn correspondence_csv_round_trip(map in prop::collection::vec(0usize..40, 1..60)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corr.csv");
        let c = Correspondence::new(map, 40).unwrap();
        c.write_csv(&path).unwrap();
        prop_assert_eq!(Correspondence::read_csv(&path, 40).unwrap(), c);
    }

    #[test]
    fn monitor_on_identical_spectra_is_stable_after_three(len in 3usize..8, eigs in prop::collection::vec(0.1..10.0f64, 5)) {
        let mut monitor = SpectrumMonitor::new(0.01, 2);
        let mut eigs = eigs;
        eigs.sort_by(f64::total_cmp);
        let records: Vec<_> = (0..len).map(|i| monitor.push(format!("c{i}"), Ok(eigs.clone()))).collect();
        for (i, r) in records.iter().enumerate() {
            prop_assert_eq!(r.stable, i >= 2);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn splat_operator_invariants(n in 200usize..500, jitter in 0.0..0.3f64, seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut set = common::fibonacci_disk_splats(n, 1.0);
        let h = (4.0 * std::f64::consts::PI / n as f64).sqrt();
        for s in &mut set.splats {
            let d = Vec3::new(rng.random(), rng.random(), rng.random()) - Vec3::repeat(0.5);
            s.mean += d * (jitter * h);
        }
        let lap = splat_laplacian(&set, &Default::default()).unwrap().laplacian;
        prop_assert_eq!(lap.w.max_asymmetry(), 0.0);
        prop_assert!(lap.mass.iter().all(|&m| m > 0.0));
        let sums = lap.w.mul_vec(&vec![1.0; lap.n()]);
        for (i, s) in sums.iter().enumerate() {
            let abs: f64 = lap.w.row(i).map(|(_, v)| v.abs()).sum();
            prop_assert!(s.abs() <= 1e-9 * abs.max(f64::MIN_POSITIVE));
        }
        // positive semidefinite on random vectors
        for _ in 0..5 {
            let x: Vec<f64> = (0..lap.n()).map(|_| rng.random::<f64>() - 0.5).collect();
            let q: f64 = x.iter().zip(lap.w.mul_vec(&x)).map(|(a, b)| a * b).sum();
            prop_assert!(q >= -1e-10 * lap.w.norm_inf());
        }
    }

    #[test]
    fn splat_operator_is_permutation_equivariant(seed in 0u64..1000) {
        let set = common::fibonacci_disk_splats(300, 1.0);
        let perm = synthetic::random_permutation(set.len(), seed);
        let permuted = splatlbo::SplatSet::new(perm.iter().map(|&i| set.splats[i].clone()).collect());
        let a = splat_laplacian(&set, &Default::default()).unwrap().laplacian;
        let b = splat_laplacian(&permuted, &Default::default()).unwrap().laplacian;
        let scale = a.w.norm_inf();
        for (new_i, &old_i) in perm.iter().enumerate() {
            prop_assert!((a.mass[old_i] - b.mass[new_i]).abs() <= 1e-12 * a.mass[old_i]);
            for (new_j, &old_j) in perm.iter().enumerate() {
                let (x, y) = (a.w.get(old_i, old_j), b.w.get(new_i, new_j));
                prop_assert!((x - y).abs() <= 1e-12 * scale, "W[{},{}]: {} vs {}", old_i, old_j, x, y);
            }
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use splatlbo::splat_io::{read_mesh, read_splat_ply, write_splat_ply};
use splatlbo::synthetic::{icosphere, sphere_disk_splats};
use splatlbo::{SplatSet, Vec3};
use tempfile::TempDir;

fn splatlbo(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splatlbo"))
        .current_dir(dir)
        .arg("-q")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_json(out: &Output) -> Vec<Value> {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).expect("stdout is JSON lines"))
        .collect()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mesh = icosphere(3);
        mesh.write_off(dir.path().join("sphere.off")).unwrap();
        write_splat_ply(&sphere_disk_splats(&mesh), dir.path().join("sphere.ply")).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        splatlbo(self.dir.path(), args)
    }
}

fn read_column(path: &Path) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect()
}

#[test]
fn mesh_spectrum_matches_sphere_harmonics() {
    let fx = Fixture::new();
    let json = ok_json(&fx.run(&["spectrum", "sphere.off", "--out", "eig.csv", "--k-eigen", "16"]));
    assert_eq!(json[0]["k"], 16);
    assert_eq!(json[0]["zero_eigenvalues"], 1);
    let eigs = read_column(&fx.path("eig.csv"));
    assert_eq!(eigs.len(), 16);
    let mut i = 1;
    for l in 1..=3usize {
        let exact = (l * (l + 1)) as f64;
        for _ in 0..(2 * l + 1) {
            assert!((eigs[i] - exact).abs() / exact < 0.05, "lambda_{i} = {} vs {exact}", eigs[i]);
            i += 1;
        }
    }
}

#[test]
fn spectrum_vectors_have_a_shape_sidecar() {
    let fx = Fixture::new();
    ok_json(&fx.run(&["spectrum", "sphere.ply", "--out", "e.csv", "--vectors", "v.bin", "--k-eigen", "6"]));
    let side: Value = serde_json::from_str(&std::fs::read_to_string(fx.path("v.bin.json")).unwrap()).unwrap();
    let bytes = std::fs::metadata(fx.path("v.bin")).unwrap().len();
    let (rows, cols) = (side["rows"].as_u64().unwrap(), side["cols"].as_u64().unwrap());
    assert_eq!((rows, cols), (642, 6));
    assert_eq!(side["dtype"], "float64-le");
    assert_eq!(rows * cols * 8, bytes, "{side}");
}

#[test]
fn full_band_smoothing_is_identity() {
    let fx = Fixture::new();
    let mesh = icosphere(1);
    mesh.write_off(fx.path("small.off")).unwrap();
    let n = mesh.n_vertices();
    let json = ok_json(&fx.run(&["smooth", "small.off", "out.off", "--k-smooth", "500", "--k-eigen", "4"]));
    assert_eq!(json[0]["k_smooth"], n);
    let out = read_mesh(fx.path("out.off")).unwrap();
    for (a, b) in out.vertices.iter().zip(&mesh.vertices) {
        assert!((a - b).norm() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn smoothing_splats_keeps_their_count() {
    let fx = Fixture::new();
    ok_json(&fx.run(&["smooth", "sphere.ply", "smooth.ply", "--k-smooth", "20"]));
    let before = read_splat_ply(fx.path("sphere.ply")).unwrap();
    let after = read_splat_ply(fx.path("smooth.ply")).unwrap();
    assert_eq!(before.len(), after.len());
}

#[test]
fn monitor_on_repeated_checkpoint_has_zero_drift() {
    let fx = Fixture::new();
    let json = ok_json(&fx.run(&["monitor", "sphere.ply", "sphere.ply", "sphere.ply", "--k-eigen", "8"]));
    assert_eq!(json.len(), 3);
    assert!(json[0]["drift"].is_null());
    assert_eq!(json[1]["drift"].as_f64(), Some(0.0));
    assert_eq!(json[2]["drift"].as_f64(), Some(0.0));
    assert_eq!(json[2]["stable"], true);
}

#[test]
fn monitor_glob_is_sorted() {
    let fx = Fixture::new();
    for name in ["ckpt_2.ply", "ckpt_1.ply"] {
        std::fs::copy(fx.path("sphere.ply"), fx.path(name)).unwrap();
    }
    let json = ok_json(&fx.run(&["monitor", "--glob", "ckpt_*.ply", "--k-eigen", "4"]));
    let paths: Vec<&str> = json.iter().map(|v| v["path"].as_str().unwrap()).collect();
    assert_eq!(paths, ["ckpt_1.ply", "ckpt_2.ply"]);
}

fn two_clusters() -> SplatSet {
    let mesh = icosphere(2);
    let mut splats = sphere_disk_splats(&mesh).splats;
    let small = icosphere(1);
    let shifted = small.map_vertices(|p| p * 0.5 + Vec3::new(10.0, 0.0, 0.0));
    let mut other = sphere_disk_splats(&shifted).splats;
    // Re-center the disk normals on the shifted sphere.
    for (s, p) in other.iter_mut().zip(&small.vertices) {
        s.rotation = splatlbo::synthetic::rotation_to(p);
    }
    splats.append(&mut other);
    SplatSet::new(splats)
}

#[test]
fn filter_keeps_components_and_is_idempotent() {
    let fx = Fixture::new();
    let set = two_clusters();
    write_splat_ply(&set, fx.path("two.ply")).unwrap();

    let one = ok_json(&fx.run(&["filter", "two.ply", "one.ply"]));
    assert_eq!(one[0]["components"], 2);
    assert_eq!(one[0]["component_sizes"], serde_json::json!([162, 42]));
    assert_eq!(one[0]["retained"], 162);

    let both = ok_json(&fx.run(&["filter", "two.ply", "both.ply", "--keep-components", "2"]));
    assert_eq!(both[0]["retained"], set.len());

    let again = ok_json(&fx.run(&["filter", "one.ply", "again.ply"]));
    assert_eq!(again[0]["retained"], 162);
    assert_eq!(
        std::fs::read(fx.path("one.ply")).unwrap(),
        std::fs::read(fx.path("again.ply")).unwrap()
    );
}

#[test]
fn geodesic_sources_refer_to_input_indices() {
    let fx = Fixture::new();
    let set = two_clusters();
    write_splat_ply(&set, fx.path("two.ply")).unwrap();
    let n = set.len().to_string();
    // The last splat belongs to the small cluster, which filtering drops.
    let out = fx.run(&["geodesic", "two.ply", "--source", &(set.len() - 1).to_string(), "--out", "g.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("removed by filtering"));
    let out = fx.run(&["geodesic", "two.ply", "--source", &n, "--out", "g.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!fx.path("g.csv").exists());

    ok_json(&fx.run(&["geodesic", "two.ply", "--source", "0", "--out", "g.csv"]));
    let d = read_column(&fx.path("g.csv"));
    assert_eq!(d.len(), 162);
    assert_eq!(d[0], 0.0);
}

#[test]
fn heat_is_close_and_edge_paths_are_bounded() {
    let fx = Fixture::new();
    ok_json(&fx.run(&["geodesic", "sphere.off", "--source", "0", "--out", "heat.csv"]));
    ok_json(&fx.run(&["geodesic", "sphere.off", "--source", "0", "--out", "dij.csv", "--method", "dijkstra"]));
    let heat = read_column(&fx.path("heat.csv"));
    let dij = read_column(&fx.path("dij.csv"));
    // Vertex 0 is the north pole, so the exact distance is the polar angle.
    let mesh = read_mesh(fx.path("sphere.off")).unwrap();
    for ((h, d), p) in heat.iter().zip(&dij).zip(&mesh.vertices) {
        let exact = p.z.clamp(-1.0, 1.0).acos();
        assert!((h - exact).abs() < 0.03 * std::f64::consts::PI, "heat {h} vs {exact}");
        // Edge paths are never shorter than the chord; graph metrication
        // makes them up to about 20% longer than the arc.
        let chord = (p - Vec3::z()).norm();
        assert!(*d >= chord - 1e-9 && *d <= 1.25 * exact + 1e-9, "dijkstra {d} vs {exact}");
    }
}

#[test]
fn curvature_of_unit_sphere() {
    let fx = Fixture::new();
    let json = ok_json(&fx.run(&["curvature", "sphere.ply", "--out", "h.csv", "--ply", "h.ply"]));
    let median = json[0]["mean_curvature"]["median"].as_f64().unwrap();
    assert!((median - 1.0).abs() < 0.05, "{median}");
    assert!(fx.path("h.ply").exists());
}

#[test]
fn laplacian_exports_matrix_market() {
    let fx = Fixture::new();
    let json = ok_json(&fx.run(&[
        "laplacian",
        "sphere.ply",
        "--w",
        "w.mtx",
        "--m",
        "m.mtx",
        "--soup",
        "soup.ply",
        "--edges",
        "edges.csv",
        "--labels",
        "labels.csv",
    ]));
    let area = json[0]["area"].as_f64().unwrap();
    assert!((area - 4.0 * std::f64::consts::PI).abs() / (4.0 * std::f64::consts::PI) < 0.02, "{area}");
    let w = std::fs::read_to_string(fx.path("w.mtx")).unwrap();
    assert!(w.starts_with("%%MatrixMarket matrix coordinate real"));
    for f in ["m.mtx", "soup.ply", "edges.csv", "labels.csv"] {
        assert!(fx.path(f).exists(), "{f}");
    }
    let out = fx.run(&["laplacian", "sphere.off", "--w", "w2.mtx", "--m", "m2.mtx", "--edges", "e2.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn match_eval_on_identity_correspondence() {
    let fx = Fixture::new();
    let n = icosphere(3).n_vertices();
    let gt: String = std::iter::once("source_index,target_index\n".to_string())
        .chain((0..n).map(|i| format!("{i},{i}\n")))
        .collect();
    std::fs::write(fx.path("gt.csv"), gt).unwrap();
    let json = ok_json(&fx.run(&[
        "match-eval",
        "sphere.off",
        "sphere.ply",
        "--gt",
        "gt.csv",
        "--k-eigen",
        "30",
        "--samples",
        "50",
        "--pred-out",
        "pred.csv",
        "--fmap-out",
        "c.csv",
        "--errors-out",
        "err.csv",
    ]));
    assert_eq!(json[0]["fmap_k"], 30);
    assert_eq!(json[0]["e_corr"]["count"], 50);
    let mean = json[0]["e_corr"]["mean"].as_f64().unwrap();
    assert!(mean < 0.05, "{mean}");
    for f in ["pred.csv", "c.csv", "err.csv"] {
        assert!(fx.path(f).exists(), "{f}");
    }
}

#[test]
fn usage_errors_exit_with_one() {
    let fx = Fixture::new();
    assert_eq!(fx.run(&["--bogus", "spectrum"]).status.code(), Some(1));
    assert_eq!(fx.run(&["spectrum", "sphere.off"]).status.code(), Some(1));
    std::fs::write(fx.path("bad.cfg"), "colour = red\n").unwrap();
    let out = fx.run(&["--config", "bad.cfg", "spectrum", "sphere.off", "--out", "e.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
    let out = fx.run(&["spectrum", "sphere.off", "--out", "e.csv", "--k-eigen", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(fx.run(&["monitor"]).status.code(), Some(1));
    assert_eq!(fx.run(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_with_two_and_leave_no_outputs() {
    let fx = Fixture::new();
    let out = fx.run(&["spectrum", "missing.ply", "--out", "e.csv"]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(fx.path("broken.ply"), "ply\nformat ascii 1.0\nelement vertex 3\nend_header\n").unwrap();
    assert_eq!(fx.run(&["filter", "broken.ply", "out.ply"]).status.code(), Some(2));

    // The eigenvalue file is written before the vector path fails.
    let out = fx.run(&[
        "spectrum",
        "sphere.off",
        "--out",
        "e.csv",
        "--vectors",
        "no/such/dir/v.bin",
        "--k-eigen",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!fx.path("e.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let fx = Fixture::new();
    for tag in ["a", "b"] {
        ok_json(&fx.run(&[
            "spectrum",
            "sphere.ply",
            "--out",
            &format!("e_{tag}.csv"),
            "--vectors",
            &format!("v_{tag}.bin"),
            "--k-eigen",
            "12",
        ]));
        ok_json(&fx.run(&["geodesic", "sphere.ply", "--source", "3", "--out", &format!("g_{tag}.csv")]));
    }
    for f in ["e", "v", "g"] {
        let ext = if f == "v" { "bin" } else { "csv" };
        assert_eq!(
            std::fs::read(fx.path(&format!("{f}_a.{ext}"))).unwrap(),
            std::fs::read(fx.path(&format!("{f}_b.{ext}"))).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn flags_override_the_config_file() {
    let fx = Fixture::new();
    std::fs::write(fx.path("run.cfg"), "# eigenpairs\nk_eigen = 5\nseed = 3\n").unwrap();
    let json = ok_json(&fx.run(&["--config", "run.cfg", "spectrum", "sphere.off", "--out", "a.csv"]));
    assert_eq!(json[0]["k"], 5);
    let json = ok_json(&fx.run(&["--config", "run.cfg", "spectrum", "sphere.off", "--out", "b.csv", "--k-eigen", "7"]));
    assert_eq!(json[0]["k"], 7);
}

#[test]
fn evaluate_writes_the_report() {
    let fx = Fixture::new();
    let json = ok_json(&fx.run(&[
        "evaluate",
        "sphere.off",
        "sphere.ply",
        "--out",
        "report.json",
        "--k-eigen",
        "20",
        "--geodesic-sources",
        "5",
        "--samples",
        "20",
        "--fmap-k",
        "10",
    ]));
    assert_eq!(json[0]["mesh_vertices"], 642);
    assert_eq!(json[0]["splats_kept"], 642);
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(fx.path("report.json")).unwrap()).unwrap();
    assert_eq!(saved, json[0]);
}

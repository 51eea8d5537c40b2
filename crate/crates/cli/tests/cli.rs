use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::{DMatrix, Matrix2};
use serde_json::Value;
use sha2::{Digest, Sha256};

const SQUARE: &str = "OFF\n4 2 0\n0 0 0\n1 0 0\n0 1 0\n1 1 0\n3 0 1 3\n3 0 3 2\n";
const TRIANGLE: &str = "OFF\n3 1 0\n0 0 0\n1 0 0\n0.5 0.8660254037844386 0\n3 0 1 2\n";

fn fbmi(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbmi"))
        .current_dir(dir)
        .env("FBMI_THREADS", "2")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = fbmi(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    fbmi(dir, args).status.code().expect("exit code")
}

fn json(path: impl AsRef<Path>) -> Value {
    let text = std::fs::read_to_string(path.as_ref()).unwrap();
    assert_eq!(text.lines().count(), 1, "one object per line");
    serde_json::from_str(&text).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

/// P1 matrices (stiffness, mass, boundary mass) from planar coordinates.
fn p1_matrices(coords: &[[f64; 2]], tris: &[[usize; 3]]) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = coords.len();
    let (mut s, mut m, mut b) = (DMatrix::zeros(n, n), DMatrix::zeros(n, n), DMatrix::zeros(n, n));
    let mut edge_use = std::collections::BTreeMap::new();
    for t in tris {
        let p: Vec<[f64; 2]> = t.iter().map(|&v| coords[v]).collect();
        let jac = Matrix2::new(p[1][0] - p[0][0], p[2][0] - p[0][0], p[1][1] - p[0][1], p[2][1] - p[0][1]);
        let area = jac.determinant().abs() / 2.0;
        let inv_t = jac.try_inverse().unwrap().transpose();
        let ref_grads = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
        let grads: Vec<[f64; 2]> = ref_grads
            .iter()
            .map(|g| {
                let v = inv_t * nalgebra::Vector2::new(g[0], g[1]);
                [v[0], v[1]]
            })
            .collect();
        for a in 0..3 {
            for c in 0..3 {
                s[(t[a], t[c])] += area * (grads[a][0] * grads[c][0] + grads[a][1] * grads[c][1]);
                m[(t[a], t[c])] += area / 12.0 * if a == c { 2.0 } else { 1.0 };
            }
            let (u, v) = (t[a].min(t[(a + 1) % 3]), t[a].max(t[(a + 1) % 3]));
            *edge_use.entry((u, v)).or_insert(0) += 1;
        }
    }
    for (&(u, v), &count) in &edge_use {
        if count == 1 {
            let len = ((coords[u][0] - coords[v][0]).powi(2) + (coords[u][1] - coords[v][1]).powi(2)).sqrt();
            b[(u, u)] += len / 3.0;
            b[(v, v)] += len / 3.0;
            b[(u, v)] += len / 6.0;
            b[(v, u)] += len / 6.0;
        }
    }
    (s, m, b)
}

/// Sorted eigenvalues of `A u = λ M u` with `M` positive definite.
fn generalized_eigenvalues(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Vec<f64> {
    let l = m.clone().cholesky().unwrap().l();
    let li = l.try_inverse().unwrap();
    let c = &li * a * li.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut e: Vec<f64> = c.symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

#[test]
fn cap_reference_at_pi_over_three() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["cap-reference", "--r", "1.0471975512", "--k", "2", "--geometry", "spherical"]);
    let r = json(dir.path().join("cap-reference.json"));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["command"], "cap-reference");
    assert!((f(&r["theta0"]) + 1.732_050_8).abs() < 1e-7);
    assert!((f(&r["xi_value"]) - std::f64::consts::TAU).abs() < 1e-7);
    assert_eq!(r["multiplicity"], 2);
}

#[test]
fn xi_plus_on_the_unit_square_matches_a_dense_oracle_and_reproduces_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "square.off", SQUARE);
    let r = "0.7853981634";
    let args = |out: &'static str| ["functional", "square.off", "--family", "xi-plus", "--r", r, "--i", "1", "--out", out];
    ok(dir.path(), &args("a"));
    ok(dir.path(), &args("b"));
    let a = std::fs::read(dir.path().join("a/functional.json")).unwrap();
    let b = std::fs::read(dir.path().join("b/functional.json")).unwrap();
    assert_eq!(a, b);

    let report = json(dir.path().join("a/functional.json"));
    let coords = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
    let (s, m, bm) = p1_matrices(&coords, &[[0, 1, 3], [0, 3, 2]]);
    let rr: f64 = r.parse().unwrap();
    let lambda0 = generalized_eigenvalues(&(&s + &bm * rr.tan()), &m)[0];
    let lambda1 = generalized_eigenvalues(&(&s - &bm / rr.tan()), &m)[1];
    let expected = lambda0.min(lambda1) * 1.0;
    assert!((f(&report["value"]) - expected).abs() < 1e-9 * expected.abs(), "{} vs {expected}", report["value"]);
    assert!((f(&report["area"]) - 1.0).abs() < 1e-14);
}

#[test]
fn neumann_ground_state_on_a_triangle() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "tri.off", TRIANGLE);
    ok(dir.path(), &["spectrum", "tri.off", "--kind", "robin", "--param", "0", "--count", "1", "--csv"]);
    let r = json(dir.path().join("spectrum.json"));
    let l0 = f(&r["spectrum"]["eigenvalues"][0]);
    assert!(l0.abs() < 1e-12, "{l0}");
    let csv = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("index,eigenvalue"));
}

#[test]
fn manifest_lists_outputs_and_input_digests() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = write(dir.path(), "square.off", SQUARE);
    ok(dir.path(), &["mesh-info", "square.off", "--csv", "--out", "run"]);
    let text = std::fs::read_to_string(dir.path().join("run/mesh-info.manifest.json")).unwrap();
    let m: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(m["schema_version"], 1);
    assert_eq!(m["command"], "mesh-info");
    assert_eq!(m["threads"], 2);
    assert_eq!(m["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(m["parameters"]["mesh"], "square.off");
    assert_eq!(m["parameters"]["mass_mode"], "consistent");
    let digest = hex::encode(Sha256::digest(std::fs::read(&mesh).unwrap()));
    assert_eq!(m["inputs"][0]["sha256"], digest.as_str());
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for name in ["mesh-info.json", "mesh-info.csv", "mesh-info.manifest.json"] {
        assert!(outputs.iter().any(|o| o.ends_with(name)), "{outputs:?}");
    }
    for o in &outputs {
        assert!(dir.path().join(o).exists(), "{o}");
    }
    assert!(m["timings"].as_array().unwrap().iter().any(|t| t["stage"] == "total"));

    let info = json(dir.path().join("run/mesh-info.json"));
    assert_eq!(info["topology"]["genus"], 0);
    assert_eq!(info["topology"]["boundary_components"], 1);
    assert_eq!(info["topology"]["euler_characteristic"], 1);
    assert!((f(&info["area"]) - 1.0).abs() < 1e-14);
    assert!((f(&info["boundary_length"]) - 4.0).abs() < 1e-14);
}

#[test]
fn built_meshes_round_trip_through_the_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["build-mesh", "--kind", "cap", "--r", "1.0471975512", "--refinement", "4", "--output", "cap.off"]);
    assert!(dir.path().join("cap.lengths").exists());
    ok(dir.path(), &["mesh-info", "cap.off", "--lengths", "cap.lengths"]);
    let info = json(dir.path().join("mesh-info.json"));
    let built = json(dir.path().join("build-mesh.json"));
    assert_eq!(info["area"], built["area"]);
    // Cap of radius π/3: area 2π(1 − cos r) = π, approached from below.
    let area = f(&info["area"]);
    assert!(area < std::f64::consts::PI && area > 0.95 * std::f64::consts::PI, "{area}");
}

#[test]
fn conformal_factor_files_rescale_the_metric() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "square.off", SQUARE);
    write(dir.path(), "phi.txt", "0 0.5\n1 0.5\n2 0.5\n3 0.5\n");
    ok(dir.path(), &["mesh-info", "square.off", "--conformal", "phi.txt"]);
    let info = json(dir.path().join("mesh-info.json"));
    assert_eq!(info["metric_representation"], "conformal");
    assert!((f(&info["area"]) - 1f64.exp()).abs() < 1e-12);
    assert!((f(&info["boundary_length"]) - 4.0 * 0.5f64.exp()).abs() < 1e-12);
}

#[test]
fn grad_check_reports_small_errors() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["build-mesh", "--kind", "disk", "--refinement", "3", "--perturb", "0.1", "--seed", "4", "--output", "disk.off"],
    );
    for target in [
        vec!["--family", "robin", "--param", "-0.5", "--i", "1"],
        vec!["--family", "freq-steklov", "--param", "2", "--i", "0"],
        vec!["--family", "theta", "--r", "0.8", "--i", "1"],
    ] {
        let mut args = vec!["grad-check", "disk.off", "--lengths", "disk.lengths", "--trials", "3", "--csv"];
        args.extend(target.iter().copied());
        ok(dir.path(), &args);
        let r = json(dir.path().join("grad-check.json"));
        let err = f(&r["max_relative_error"]);
        assert!(err < 1e-5, "{target:?}: {err}");
        assert_eq!(r["checks"].as_array().unwrap().len(), 3);
        let csv = std::fs::read_to_string(dir.path().join("grad-check.csv")).unwrap();
        assert_eq!(csv.lines().count(), 4);
    }
}

#[test]
fn optimize_writes_the_final_metric_and_resumes_from_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["build-mesh", "--kind", "cap", "--r", "1.0471975512", "--refinement", "4", "--perturb", "0.05", "--output", "cap.off"],
    );
    let base = [
        "optimize", "cap.off", "--lengths", "cap.lengths", "--objective", "xi-plus", "--r", "1.0471975512", "--i", "1",
        "--dofs", "edges", "--max-iter", "5", "--seed", "3", "--checkpoint", "run.ckpt", "--checkpoint-interval", "2",
        "--quiet", "--csv",
    ];
    let mut full = base.to_vec();
    full.extend(["--out", "full"]);
    ok(dir.path(), &full);
    let report = json(dir.path().join("full/optimize.json"));
    let records = report["records"].as_array().unwrap();
    assert!(!records.is_empty());
    assert!(f(&report["final_value"]) >= f(&report["initial_value"]));
    assert!(dir.path().join("full/optimize.lengths").exists());
    let csv = std::fs::read_to_string(dir.path().join("full/optimize.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + records.len());
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("full/optimize.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["parameters"]["config"]["max_iterations"], 5);
    assert!(manifest["outputs"].as_array().unwrap().iter().any(|o| o == "run.ckpt"));

    ok(dir.path(), &["mesh-info", "cap.off", "--lengths", "full/optimize.lengths", "--out", "final"]);
    let area = f(&json(dir.path().join("final/mesh-info.json"))["area"]);
    assert!((area - f(&report["target_area"])).abs() < 1e-9 * area);

    let mut resumed = base.to_vec();
    resumed.extend(["--resume", "run.ckpt", "--out", "resumed"]);
    ok(dir.path(), &resumed);
    let again = json(dir.path().join("resumed/optimize.json"));
    assert_eq!(again["records"], report["records"]);
    assert_eq!(
        std::fs::read(dir.path().join("resumed/optimize.lengths")).unwrap(),
        std::fs::read(dir.path().join("full/optimize.lengths")).unwrap()
    );

    // A checkpoint from a different configuration is refused.
    let mut other = base.to_vec();
    other[15] = "4";
    other.extend(["--resume", "run.ckpt", "--out", "other"]);
    assert_eq!(code(dir.path(), &other), 1);
}

#[test]
fn certificate_on_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["build-mesh", "--kind", "cap", "--r", "1.0471975512", "--refinement", "8", "--output", "cap.off"]);
    ok(
        dir.path(),
        &["certify", "cap.off", "--lengths", "cap.lengths", "--geometry", "spherical", "--r", "1.0471975512", "--i", "1", "--csv"],
    );
    let c = json(dir.path().join("certify.json"));
    assert!(f(&c["residuals"]["sphere"]) < 5e-2);
    assert_eq!(c["ambient_dimension"], 2);
    let csv = std::fs::read_to_string(dir.path().join("certify.csv")).unwrap();
    assert!(csv.starts_with("vertex,v0,v1,v2"));
}

#[test]
fn degeneration_table_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["build-mesh", "--kind", "disk", "--refinement", "4", "--output", "disk.off"]);
    ok(dir.path(), &["degenerate", "disk.off", "--r", "1", "--i", "1", "--epsilons", "0.3,0.1", "--csv"]);
    let t = json(dir.path().join("degenerate.json"));
    let rows = t["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(f(&rows[1]["xi_minus"]) < f(&rows[0]["xi_minus"]));
    let csv = std::fs::read_to_string(dir.path().join("degenerate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "square.off", SQUARE);
    assert_eq!(code(d, &["mesh-info", "missing.off"]), 2);
    assert_eq!(code(d, &["mesh-info", "square.off", "--lengths", "missing.lengths"]), 2);
    assert_eq!(code(d, &["mesh-info", "square.off", "--bogus"]), 2);
    assert_eq!(code(d, &["frobnicate"]), 2);
    assert_eq!(code(d, &["spectrum", "square.off", "--kind", "neumann", "--count", "1"]), 2);
    assert_eq!(code(d, &["spectrum", "square.off", "--kind", "robin", "--count", "1"]), 2);
    assert_eq!(code(d, &["functional", "square.off", "--family", "general", "--r", "0.5", "--i", "1"]), 2);
    assert_eq!(code(d, &["cap-reference", "--r", "pi/3", "--k", "2", "--geometry", "spherical"]), 2);
    assert_eq!(code(d, &["degenerate", "square.off", "--r", "1", "--i", "1", "--epsilons", "0.3,x"]), 2);
    let threads = Command::new(env!("CARGO_BIN_EXE_fbmi"))
        .current_dir(d)
        .env("FBMI_THREADS", "many")
        .args(["cap-reference", "--r", "1", "--k", "2", "--geometry", "spherical"])
        .status()
        .unwrap();
    assert_eq!(threads.code(), Some(2));
}

#[test]
fn domain_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "square.off", SQUARE);
    write(d, "bad.off", "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n");
    write(d, "bowtie.off", "OFF\n5 2 0\n0 0 0\n1 0 0\n0 1 0\n-1 0 0\n0 -1 0\n3 0 1 2\n3 0 3 4\n");
    write(d, "flat.lengths", "0 1 1\n0 2 1\n0 3 5\n1 3 1\n2 3 1\n");
    assert_eq!(code(d, &["mesh-info", "bad.off"]), 1);
    assert_eq!(code(d, &["mesh-info", "bowtie.off"]), 1);
    assert_eq!(code(d, &["mesh-info", "square.off", "--lengths", "flat.lengths"]), 1);
    assert_eq!(code(d, &["cap-reference", "--r", "2.0", "--k", "2", "--geometry", "spherical"]), 1);
    assert_eq!(code(d, &["spectrum", "square.off", "--kind", "robin", "--param", "0", "--count", "9"]), 1);
    assert_eq!(code(d, &["degenerate", "square.off", "--r", "1", "--i", "1", "--epsilons", "0.1,0.3"]), 1);

    // The disk of radius j₀,₁/√2 has c = 2 on its Dirichlet spectrum.
    let rho = format!("{}", 2.404_825_557_695_773 / 2f64.sqrt());
    ok(d, &["build-mesh", "--kind", "disk", "--r", &rho, "--refinement", "8", "--output", "disk.off"]);
    let args = ["spectrum", "disk.off", "--lengths", "disk.lengths", "--kind", "freq-steklov", "--param", "2", "--count", "2"];
    let out = fbmi(d, &args);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("inadmissible"));
    ok(d, &["build-mesh", "--kind", "disk", "--r", "1", "--refinement", "8", "--output", "unit.off"]);
    ok(d, &["spectrum", "unit.off", "--lengths", "unit.lengths", "--kind", "freq-steklov", "--param", "2", "--count", "2"]);
    let r = json(d.join("spectrum.json"));
    assert_eq!(r["admissibility"]["status"], "admissible");
}

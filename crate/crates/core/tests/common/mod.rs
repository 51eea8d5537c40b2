#![allow(dead_code)]

use fbmi_core::assembly::OperatorSet;
use fbmi_core::linalg::CsrMatrix;
use fbmi_core::mesh::{
    build_annulus_mesh, build_cap_mesh, build_flat_disk_mesh, perturb_metric, square_grid, DiscreteMetric, SimplicialMesh,
};
use nalgebra::DMatrix;

pub const PI_3: f64 = std::f64::consts::FRAC_PI_3;

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Flat disk of the given radius with seeded ±`amp` edge-length noise.
pub fn random_disk(radius: f64, m: usize, amp: f64, seed: u64) -> (SimplicialMesh, DiscreteMetric) {
    let (mesh, metric) = build_flat_disk_mesh(radius, m).unwrap();
    let metric = perturb_metric(&mesh, &metric, amp, seed).unwrap();
    (mesh, metric)
}

/// Same disk with per-vertex conformal noise over the flat base lengths.
pub fn random_conformal_disk(m: usize, amp: f64, seed: u64) -> (SimplicialMesh, DiscreteMetric) {
    use rand::{Rng, SeedableRng};
    let (mesh, metric) = build_flat_disk_mesh(1.0, m).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let phi = (0..mesh.vertex_count()).map(|_| amp * rng.gen_range(-1.0..1.0)).collect();
    let base = metric.lengths(&mesh);
    (mesh, DiscreteMetric::conformal(base, phi))
}

/// Independent dense oracle: eigenvalues of `a x = λ b x` via `L⁻¹ a L⁻ᵀ`.
pub fn dense_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let l = b.clone().cholesky().expect("b is positive definite").l();
    let li = l.try_inverse().unwrap();
    let c = &li * a * li.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut v: Vec<f64> = c.symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn dense(m: &CsrMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, j, v) in m.iter() {
        d[(i, j)] += v;
    }
    d
}

pub fn pick(d: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| d[(rows[i], cols[j])])
}

pub fn steklov_oracle(ops: &OperatorSet, c: f64) -> Vec<f64> {
    let p = dense(&ops.stiffness) - dense(&ops.mass) * c;
    let (b, i) = (&ops.boundary_index_map, &ops.interior_vertices);
    let mut schur = pick(&p, b, b);
    if !i.is_empty() {
        let pii = pick(&p, i, i).lu();
        let pib = pick(&p, i, b);
        schur -= pick(&p, b, i) * pii.solve(&pib).unwrap();
    }
    dense_eigenvalues(&schur, &pick(&dense(&ops.boundary_mass), b, b))
}

pub fn tiny_meshes() -> Vec<(SimplicialMesh, DiscreteMetric)> {
    vec![
        build_flat_disk_mesh(1.0, 2).unwrap(),
        random_disk(1.0, 3, 0.2, 1),
        square_grid(4).unwrap(),
        build_cap_mesh(0.9, 3).unwrap(),
        build_annulus_mesh(1.0, 2.0, 2, 8).unwrap(),
    ]
}

mod common;

use common::{random_disk, rel, PI_3};
use fbmi_core::assembly::*;
use fbmi_core::linalg::EnvelopeLdlt;
use fbmi_core::mesh::*;
use fbmi_core::spectra::{dirichlet_spectrum, robin_spectrum};

#[test]
fn equilateral_off_diagonal_stiffness() {
    let (mesh, metric) = single_triangle();
    let ops = assemble(&mesh, &metric, MassMode::Consistent).unwrap();
    let expected = -1.0 / (2.0 * 3f64.sqrt());
    for (i, j) in [(0, 1), (1, 2), (0, 2)] {
        assert!((ops.stiffness.get(i, j) - expected).abs() < 1e-15);
    }
}

#[test]
fn constants_span_the_stiffness_kernel() {
    for seed in 0..5 {
        let (mesh, metric) = random_disk(1.0, 4, 0.2, seed);
        let ops = assemble(&mesh, &metric, MassMode::Consistent).unwrap();
        let s1 = ops.stiffness.mul_vec(&vec![1.0; mesh.vertex_count()]);
        let worst = s1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-12 * ops.stiffness.max_abs());
    }
}

#[test]
fn totals_equal_measures_in_both_modes() {
    let (mesh, metric) = unit_square();
    for mode in [MassMode::Consistent, MassMode::Lumped] {
        let ops = assemble(&mesh, &metric, mode).unwrap();
        let one = vec![1.0; 4];
        assert!((ops.mass.quad_form(&one) - 1.0).abs() < 1e-14);
        assert!((ops.boundary_mass.quad_form(&one) - 4.0).abs() < 1e-14);
    }
    let (mesh, metric) = random_disk(1.3, 5, 0.15, 9);
    let a = assemble(&mesh, &metric, MassMode::Consistent).unwrap();
    let b = assemble(&mesh, &metric, MassMode::Lumped).unwrap();
    let one = vec![1.0; mesh.vertex_count()];
    let m = measures(&mesh, &metric).unwrap();
    assert!(rel(a.mass.quad_form(&one), m.area) < 1e-12);
    assert!(rel(b.mass.quad_form(&one), a.mass.quad_form(&one)) < 1e-12);
    assert!(rel(a.boundary_mass.quad_form(&one), m.boundary_length) < 1e-12);
}

#[test]
fn zero_shift_is_the_stiffness() {
    let (mesh, metric) = random_disk(1.0, 3, 0.1, 1);
    let ops = assemble(&mesh, &metric, MassMode::Consistent).unwrap();
    let p = shifted_pencil(&ops, 0.0);
    assert!(p.iter().all(|(i, j, v)| v == ops.stiffness.get(i, j)));
}

#[test]
fn interior_block_of_cap_pencil_counts_dirichlet_eigenvalues() {
    let (mesh, metric) = build_cap_mesh(PI_3, 8).unwrap();
    let ops = assemble(&mesh, &metric, MassMode::Consistent).unwrap();
    let p = shifted_pencil(&ops, 2.0);
    let ii = ops.interior_vertices.clone();
    let f = EnvelopeLdlt::factor(&p.submatrix(&ii, &ii)).unwrap();
    let dir = dirichlet_spectrum(&ops, 3).unwrap();
    let below = dir.eigenvalues.iter().filter(|&&v| v < 2.0).count();
    assert_eq!(f.inertia().negative, below);
    assert!(dir.eigenvalues.iter().all(|v| (v - 2.0).abs() > 1e-3));
    assert!(f.min_abs_pivot() > 0.0);
}

#[test]
fn negative_shift_is_positive_definite() {
    let (mesh, metric) = random_disk(1.0, 6, 0.2, 3);
    let ops = assemble(&mesh, &metric, MassMode::Consistent).unwrap();
    let f = EnvelopeLdlt::factor(&shifted_pencil(&ops, -2.0)).unwrap();
    let i = f.inertia();
    assert_eq!((i.negative, i.zero), (0, 0));
}

#[test]
fn neumann_eigenvalue_on_square_converges_at_second_order() {
    let errors: Vec<f64> = [4, 8, 16]
        .iter()
        .map(|&n| {
            let (mesh, metric) = square_grid(n).unwrap();
            let ops = assemble(&mesh, &metric, MassMode::Consistent).unwrap();
            let s = robin_spectrum(&ops, 0.0, 3).unwrap();
            (s.eigenvalues[1] - std::f64::consts::PI.powi(2)).abs()
        })
        .collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((1.7..2.5).contains(&order), "order {order} from {errors:?}");
    }
}

#[test]
fn dirichlet_energy_is_conformally_invariant() {
    use rand::{Rng, SeedableRng};
    let (mesh, metric) = random_disk(1.0, 5, 0.2, 4);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let phi: Vec<f64> = (0..mesh.vertex_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let u: Vec<f64> = (0..mesh.vertex_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let base = assemble(&mesh, &metric, MassMode::Consistent).unwrap();
    let conf = assemble_conformal(&mesh, &metric, &phi, MassMode::Consistent).unwrap();
    assert!(rel(conf.stiffness.quad_form(&u), base.stiffness.quad_form(&u)) < 1e-10);
    assert!(conf.mass.quad_form(&vec![1.0; mesh.vertex_count()]) != base.area);
}

#[test]
fn matrices_are_bit_identical_across_runs() {
    let (mesh, metric) = random_disk(1.0, 6, 0.2, 8);
    let a = assemble(&mesh, &metric, MassMode::Consistent).unwrap();
    let b = assemble(&mesh, &metric, MassMode::Consistent).unwrap();
    assert!(a.stiffness.iter().zip(b.stiffness.iter()).all(|(x, y)| x == y));
    assert!(a.mass.iter().zip(b.mass.iter()).all(|(x, y)| x == y));
}

#[test]
fn coordinate_dump_lists_every_nonzero() {
    let (mesh, metric) = unit_square();
    let ops = assemble(&mesh, &metric, MassMode::Consistent).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.txt");
    write_coordinate_matrix(&p, &ops.stiffness).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().count(), ops.stiffness.nnz());
}

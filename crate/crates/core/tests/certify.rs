mod common;

use std::f64::consts::{FRAC_PI_2, PI};

use common::{rel, PI_3};
use fbmi_core::certify::*;
use fbmi_core::mesh::*;

#[test]
fn cap_reference_at_pi_over_three() {
    let c = cap_reference(PI_3, 2, Geometry::Spherical).unwrap();
    assert!((c.theta0.unwrap() + 3f64.sqrt()).abs() < 1e-14);
    assert!((c.theta1.unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-14);
    assert_eq!(c.multiplicity, 2);
    assert_eq!(c.lambda, 2.0);
    assert!((c.xi_value - 2.0 * PI).abs() < 1e-13);
    // Cap area 2π(1 − cos r) and boundary circle 2π sin r.
    assert!((c.area - PI).abs() < 1e-13);
    assert!((c.boundary_length - 2.0 * PI * PI_3.sin()).abs() < 1e-13);
    assert!((c.theta_value.unwrap() - 2.0 * PI).abs() < 1e-13);
}

#[test]
fn ball_reference_at_radius_one() {
    let c = cap_reference(1.0, 2, Geometry::Hyperbolic).unwrap();
    assert!((c.omega0.unwrap() - 0.761_594_155_955_764_9).abs() < 1e-14);
    assert!((c.omega1.unwrap() - 1.313_035_285_499_331_3).abs() < 1e-14);
    assert!(c.theta0.is_none());
    // Hyperbolic disk area 2π(cosh r − 1) and boundary 2π sinh r.
    assert!((c.area - 2.0 * PI * (1f64.cosh() - 1.0)).abs() < 1e-13);
    assert!((c.boundary_length - 2.0 * PI * 1f64.sinh()).abs() < 1e-13);
}

#[test]
fn hemisphere_limit() {
    let mut last = f64::NEG_INFINITY;
    for d in [1e-2, 1e-4, 1e-6, 1e-8] {
        let c = cap_reference(FRAC_PI_2 - d, 2, Geometry::Spherical).unwrap();
        assert!(c.xi_value > last);
        last = c.xi_value;
        assert!(c.theta0.unwrap() < -0.5 / d);
    }
    assert!(rel(last, 4.0 * PI) < 1e-7);
}

#[test]
fn out_of_range_references_are_rejected() {
    assert!(cap_reference(FRAC_PI_2, 2, Geometry::Spherical).is_err());
    assert!(cap_reference(0.0, 2, Geometry::Spherical).is_err());
    assert!(cap_reference(-1.0, 2, Geometry::Hyperbolic).is_err());
    assert!(cap_reference(1.0, 1, Geometry::Hyperbolic).is_err());
}

#[test]
fn theta_cancellation_holds_on_a_dense_grid() {
    for j in 1..2000 {
        let r = FRAC_PI_2 * j as f64 / 2000.0;
        let c = cap_reference(r, 2, Geometry::Spherical).unwrap();
        let (s, co) = r.sin_cos();
        let cancel = c.theta0.unwrap() * co * co + c.theta1.unwrap() * s * s;
        assert!(cancel.abs() < 1e-14, "r = {r}: {cancel}");
    }
}

#[test]
fn cap_certificate() {
    let (mesh, metric) = build_cap_mesh(PI_3, 32).unwrap();
    let c = fbmi_certificate(&mesh, &metric, PI_3, 1, Geometry::Spherical).unwrap();
    assert!(c.residuals.sphere < 1e-2, "{:?}", c.residuals);
    assert!(c.residuals.metric < 5e-2);
    assert!(c.residuals.boundary < 1e-2);
    assert!(c.residuals.eigenvalues.iter().all(|&e| e < 1e-2));
    assert_eq!(c.ambient_dimension, 2);
    assert_eq!(c.functions.len(), 3);
    assert!(c.mixing.iter().all(|&t| (t - 0.5).abs() < 0.05), "{:?}", c.mixing);
    assert!((c.mixing.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(10.0 * c.residuals.sphere < c.rank_one_sphere_residual);
}

#[test]
fn ball_certificate() {
    let (mesh, metric) = build_hyperbolic_ball_mesh(1.0, 16).unwrap();
    let c = fbmi_certificate(&mesh, &metric, 1.0, 1, Geometry::Hyperbolic).unwrap();
    assert!(c.residuals.sphere < 1e-2, "{:?}", c.residuals);
    assert!(c.residuals.metric < 5e-2);
    assert!(c.residuals.boundary < 1e-2);
    assert!(c.residuals.eigenvalues.iter().all(|&e| e < 1e-2));
    assert_eq!(c.ambient_dimension, 2);
    for &v in mesh.boundary_vertices().iter() {
        assert!((c.functions[0][v] - 1f64.cosh()).abs() < 1e-2);
    }
}

#[test]
fn perturbation_spoils_the_pullback() {
    let (mesh, metric) = build_cap_mesh(PI_3, 16).unwrap();
    let cap = fbmi_certificate(&mesh, &metric, PI_3, 1, Geometry::Spherical).unwrap();
    let p = perturb_metric(&mesh, &metric, 0.1, 7).unwrap();
    let pert = fbmi_certificate(&mesh, &p, PI_3, 1, Geometry::Spherical).unwrap();
    assert!(pert.residuals.metric > 10.0 * cap.residuals.metric);
}

#[test]
fn residuals_decrease_under_refinement() {
    for geometry in [Geometry::Spherical, Geometry::Hyperbolic] {
        let certs: Vec<Certificate> = [8, 16, 32]
            .into_iter()
            .map(|m| {
                let (mesh, metric) = match geometry {
                    Geometry::Spherical => build_cap_mesh(PI_3, m).unwrap(),
                    Geometry::Hyperbolic => build_hyperbolic_ball_mesh(1.0, m).unwrap(),
                };
                let r = if geometry == Geometry::Spherical { PI_3 } else { 1.0 };
                fbmi_certificate(&mesh, &metric, r, 1, geometry).unwrap()
            })
            .collect();
        for w in certs.windows(2) {
            let (a, b) = (&w[0].residuals, &w[1].residuals);
            assert!(b.sphere < a.sphere && b.metric < a.metric && b.boundary < a.boundary);
            for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
                assert!(y < x);
            }
        }
    }
}

#[test]
fn fitted_form_is_positive_semidefinite() {
    for (m, amp, seed) in [(8, 0.0, 0), (8, 0.1, 3), (16, 0.05, 5)] {
        let (mesh, metric) = build_cap_mesh(PI_3, m).unwrap();
        let metric = if amp > 0.0 { perturb_metric(&mesh, &metric, amp, seed).unwrap() } else { metric };
        let Ok(c) = fbmi_certificate(&mesh, &metric, PI_3, 1, Geometry::Spherical) else {
            continue;
        };
        let n = c.quadratic_form.len();
        let q = nalgebra::DMatrix::from_fn(n, n, |i, j| c.quadratic_form[i][j]);
        let min = q.clone().symmetric_eigen().eigenvalues.min();
        assert!(min >= -1e-10 * q.trace(), "{min}");
        assert!(c.mixing.iter().all(|&t| t >= 0.0));
    }
}

#[test]
fn fit_spans_the_whole_eigenvalue_cluster() {
    let (mesh, metric) = build_cap_mesh(PI_3, 8).unwrap();
    let opts = CertificateOptions {
        min_functions: 1,
        ..CertificateOptions::default()
    };
    let c = fbmi_certificate_with(&mesh, &metric, PI_3, 1, Geometry::Spherical, &opts).unwrap();
    assert_eq!(c.cluster, vec![1, 2]);
}

#[test]
fn a_split_cluster_with_one_function_is_no_candidate() {
    let (mesh, metric) = build_cap_mesh(PI_3, 8).unwrap();
    let p = perturb_metric(&mesh, &metric, 0.1, 7).unwrap();
    let opts = CertificateOptions {
        min_functions: 1,
        ..CertificateOptions::default()
    };
    let err = fbmi_certificate_with(&mesh, &p, PI_3, 1, Geometry::Spherical, &opts).unwrap_err();
    assert!(err.to_string().contains("candidate"), "{err}");
}

#[test]
fn degeneration_on_the_flat_disk() {
    let (mesh, metric) = build_flat_disk_mesh(1.0, 8).unwrap();
    let t = degeneration_experiment(&mesh, &metric, 1.0, 1, &[0.3, 0.1, 0.03, 0.01]).unwrap();
    assert!(t.strictly_decreasing);
    for w in t.rows.windows(2) {
        assert!(w[1].xi_minus < w[0].xi_minus);
    }
    let first = t.rows[0].xi_minus;
    let last = t.rows.last().unwrap().xi_minus;
    assert!(last < -10.0 * first.abs(), "{first} -> {last}");
    assert!(t.rows.iter().all(|r| r.strip_vertices > 0));
    let csv = t.to_csv();
    assert_eq!(csv.lines().count(), 1 + t.rows.len());
}

#[test]
fn degeneration_area_tracks_the_first_order_correction() {
    let (mesh, metric) = build_flat_disk_mesh(1.0, 8).unwrap();
    let t = degeneration_experiment(&mesh, &metric, 1.0, 1, &[0.3, 0.1, 0.03, 0.01]).unwrap();
    for r in &t.rows {
        let expected = t.base_area + PI * r.epsilon * r.epsilon * t.base_boundary_length;
        assert!(
            (r.area - expected).abs() <= 0.2 * r.area_correction,
            "ε = {}: area {} vs {expected}",
            r.epsilon,
            r.area
        );
    }
}

#[test]
fn unit_epsilon_is_the_identity() {
    let (mesh, metric) = build_flat_disk_mesh(1.0, 6).unwrap();
    let t = degeneration_experiment(&mesh, &metric, 1.0, 1, &[1.0]).unwrap();
    let row = &t.rows[0];
    assert_eq!(row.xi_minus, t.base_xi_minus);
    assert_eq!(row.area, t.base_area);
    assert_eq!(row.area_drift, 0.0);
}

#[test]
fn degeneration_rejects_bad_epsilon_lists() {
    let (mesh, metric) = build_flat_disk_mesh(1.0, 4).unwrap();
    for eps in [vec![], vec![0.1, 0.3], vec![0.0], vec![1.5]] {
        assert!(degeneration_experiment(&mesh, &metric, 1.0, 1, &eps).is_err());
    }
}

#[test]
fn unresolvable_strips_are_reported() {
    let (mesh, metric) = build_flat_disk_mesh(1.0, 4).unwrap();
    let opts = DegenerationOptions {
        max_passes: 1,
        ..DegenerationOptions::default()
    };
    let err = degeneration_experiment_with(&mesh, &metric, 1.0, 1, &[0.3, 0.01], &opts).unwrap_err();
    assert!(err.to_string().contains("strip"), "{err}");
}

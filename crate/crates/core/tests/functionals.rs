mod common;

use std::f64::consts::PI;

use common::{random_conformal_disk, random_disk, rel, PI_3};
use fbmi_core::assembly::{assemble, MassMode};
use fbmi_core::functionals::*;
use fbmi_core::linalg::{dot, norm};
use fbmi_core::mesh::*;
use fbmi_core::spectra::robin_spectrum;

#[test]
fn xi_plus_at_cap_tends_to_two_pi() {
    let (mesh, metric) = build_cap_mesh(PI_3, 16).unwrap();
    let r = eval_functional(&FunctionalSpec::xi_plus(PI_3, 1), &mesh, &metric).unwrap();
    assert!(rel(r.value, 2.0 * PI) < 1e-2, "{}", r.value);
}

#[test]
fn theta_at_cap_cancels_to_twice_the_area() {
    let (mesh, metric) = build_cap_mesh(PI_3, 16).unwrap();
    let r = eval_functional(&FunctionalSpec::theta(PI_3, 1), &mesh, &metric).unwrap();
    assert!(rel(r.value, 2.0 * r.area) < 1e-2);
    assert!(rel(r.value, 2.0 * PI) < 1e-2);
    assert!(r.admissibility_margin.unwrap() > 0.0);
}

#[test]
fn degenerate_general_family_is_twice_the_area() {
    let (mesh, metric) = random_disk(1.0, 4, 0.1, 1);
    let c = GeneralCoefficients {
        alpha1: 0.0,
        beta1: 1.0,
        alpha2: 2.0,
        beta2: 1.0,
    };
    let r = eval_functional(&FunctionalSpec::general(0.8, 1, c), &mesh, &metric).unwrap();
    assert_eq!(r.value, 2.0 * r.area);
}

#[test]
fn general_family_with_unit_coefficients_is_theta() {
    let (mesh, metric) = random_disk(1.0, 4, 0.1, 2);
    let g = eval_functional(&FunctionalSpec::general(0.8, 1, GeneralCoefficients::default()), &mesh, &metric);
    let t = eval_functional(&FunctionalSpec::theta(0.8, 1), &mesh, &metric);
    assert_eq!(g.unwrap().value, t.unwrap().value);
}

#[test]
fn reports_recompute_their_value() {
    let registry = FunctionalRegistry::default();
    let (mesh, metric) = random_disk(1.0, 4, 0.1, 3);
    for spec in [
        FunctionalSpec::theta(0.8, 1),
        FunctionalSpec::omega(1.0, 1),
        FunctionalSpec::xi_plus(0.8, 1),
        FunctionalSpec::xi_minus(1.0, 2),
    ] {
        let r = eval_functional(&spec, &mesh, &metric).unwrap();
        assert!((r.recompute(&registry).unwrap() - r.value).abs() <= 1e-12 * r.value.abs().max(1.0));
    }
}

#[test]
fn xi_families_are_scale_invariant() {
    let (mesh, metric) = random_disk(1.0, 4, 0.15, 4);
    for spec in [FunctionalSpec::xi_plus(0.8, 1), FunctionalSpec::xi_minus(1.0, 1)] {
        let a = eval_functional(&spec, &mesh, &metric).unwrap().value;
        let b = eval_functional(&spec, &mesh, &metric.scaled(2.3)).unwrap().value;
        assert!(rel(b, a) < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn xi_families_follow_the_robin_scaling_law() {
    // Scaling lengths by t fixes S, scales B by t and M by t², so
    // Ξ(t·ℓ) = min_j λ_j(ℓ, tσ_j)·A(ℓ).
    let (mesh, metric) = random_disk(1.0, 4, 0.15, 4);
    let ops = assemble(&mesh, &metric, MassMode::Consistent).unwrap();
    let t = 2.3;
    for (spec, sigmas) in [
        (FunctionalSpec::xi_plus(0.8, 1), [-(0.8f64.tan()), 1.0 / 0.8f64.tan()]),
        (FunctionalSpec::xi_minus(1.0, 1), [1f64.tanh(), 1.0 / 1f64.tanh()]),
    ] {
        let lam = |s: f64, i: usize| robin_spectrum(&ops, s, i + 3).unwrap().eigenvalues[i];
        let expected = (lam(t * sigmas[0], 0)).min(lam(t * sigmas[1], 1)) * ops.area;
        let scaled = eval_functional(&spec, &mesh, &metric.scaled(t)).unwrap().value;
        assert!(rel(scaled, expected) < 1e-9, "{scaled} vs {expected}");
    }
}

#[test]
fn xi_plus_slope_along_uniform_scaling_matches_scaling_law() {
    let (mesh, metric) = random_disk(1.0, 4, 0.15, 8);
    let spec = FunctionalSpec::xi_plus(0.8, 1);
    let g = grad_functional(&spec, &mesh, &metric).unwrap();
    let active = g.gradients[0].branch;
    let v = &g.smooth().unwrap().vector;
    let slope = dot(v, &metric.lengths(&mesh));
    // d/dt[λ(tσ)·A] at t = 1 is σ·∂λ/∂σ·A.
    let ops = assemble(&mesh, &metric, MassMode::Consistent).unwrap();
    let (sigma, i) = if active == 0 { (-(0.8f64.tan()), 0) } else { (1.0 / 0.8f64.tan(), 1) };
    let lam = |s: f64| robin_spectrum(&ops, s, i + 3).unwrap().eigenvalues[i];
    let h = 1e-5;
    let expected = sigma * (lam(sigma + h) - lam(sigma - h)) / (2.0 * h) * ops.area;
    assert!(rel(slope, expected) < 1e-6, "{slope} vs {expected}");
}

#[test]
fn robin_gradient_along_uniform_scaling_matches_scaling_law() {
    let (mesh, metric) = random_disk(1.0, 4, 0.15, 5);
    let ops = assemble(&mesh, &metric, MassMode::Consistent).unwrap();
    let (sigma, i) = (0.5, 1);
    let g = grad_robin_eigenvalue(&ops, &mesh, &metric, sigma, i).unwrap();
    let l = metric.lengths(&mesh);
    let analytic = dot(&g.vector, &l);
    // d/dt[λ(g, tσ)/t²] at t = 1 = σ·∂λ/∂σ − 2λ, with ∂λ/∂σ by differences in σ.
    let lam = |s: f64| robin_spectrum(&ops, s, i + 3).unwrap().eigenvalues[i];
    let h = 1e-5;
    let dsigma = (lam(sigma + h) - lam(sigma - h)) / (2.0 * h);
    let expected = sigma * dsigma - 2.0 * lam(sigma);
    assert!(rel(analytic, expected) < 1e-6, "{analytic} vs {expected}");
}

#[test]
fn neumann_ground_state_has_zero_gradient() {
    let (mesh, metric) = random_disk(1.0, 4, 0.15, 6);
    let ops = assemble(&mesh, &metric, MassMode::Consistent).unwrap();
    let g = grad_robin_eigenvalue(&ops, &mesh, &metric, 0.0, 0).unwrap();
    assert!(norm(&g.vector) < 1e-9);
}

fn check(target: GradTarget, mesh: &SimplicialMesh, metric: &DiscreteMetric) {
    check_with(target, mesh, metric, GradCheckOptions::default());
}

fn check_with(target: GradTarget, mesh: &SimplicialMesh, metric: &DiscreteMetric, opts: GradCheckOptions) {
    let r = grad_check(&target, mesh, metric, &opts).unwrap();
    assert!(r.max_relative_error < 1e-5, "{target:?}: {}", r.max_relative_error);
}

#[test]
fn eigenvalue_gradients_match_finite_differences() {
    for seed in 0..10 {
        let (mesh, metric) = random_disk(1.0, 3, 0.15, seed);
        for sigma in [-0.5, 0.5] {
            check(GradTarget::RobinEigenvalue { sigma, index: 1 }, &mesh, &metric);
        }
        for c in [-2.0, 2.0] {
            check(GradTarget::FreqSteklovEigenvalue { c, index: 0 }, &mesh, &metric);
        }
    }
}

#[test]
fn functional_gradients_match_finite_differences_in_both_dof_kinds() {
    // Directional derivatives can be tiny here, so use the stencil's noise-optimal step.
    let opts = GradCheckOptions {
        step: 1e-4,
        ..GradCheckOptions::default()
    };
    let check = |t, m: &SimplicialMesh, g: &DiscreteMetric| check_with(t, m, g, opts.clone());
    for seed in 0..4 {
        for (mesh, metric) in [random_disk(1.0, 3, 0.15, seed), random_conformal_disk(3, 0.2, seed)] {
            for spec in [FunctionalSpec::theta(0.8, 1), FunctionalSpec::omega(1.0, 1), FunctionalSpec::xi_minus(1.0, 1)] {
                check(GradTarget::Functional { spec }, &mesh, &metric);
            }
            let spec = FunctionalSpec::xi_plus(0.8, 1);
            if !eval_functional(&spec, &mesh, &metric).unwrap().is_tied() {
                check(GradTarget::Functional { spec }, &mesh, &metric);
            }
        }
    }
}

#[test]
fn cap_ground_steklov_derivative_is_interior_pairing_away_from_boundary() {
    let (mesh, metric) = build_cap_mesh(PI_3, 8).unwrap();
    let l = metric.lengths(&mesh);
    let conf = DiscreteMetric::conformal(l.clone(), vec![0.0; mesh.vertex_count()]);
    let ops = assemble(&mesh, &conf, MassMode::Consistent).unwrap();
    let g = grad_freq_steklov_eigenvalue(&ops, &mesh, &conf, 2.0, 0).unwrap();
    let dist = boundary_distance(&mesh, &l);
    let strip = 3.0 * l.iter().cloned().fold(0.0, f64::max);
    let psi: Vec<f64> = dist.iter().map(|&d| if d > strip { (d - strip).sin() + 0.3 } else { 0.0 }).collect();
    assert!(psi.iter().any(|&p| p != 0.0));
    let dl: Vec<f64> = mesh
        .edges()
        .iter()
        .zip(&l)
        .map(|(&[a, b], &le)| le * 0.5 * (psi[a] + psi[b]))
        .collect();
    assert!(mesh.boundary_edges().iter().all(|&[a, b]| dl[mesh.edge_index(a, b).unwrap()] == 0.0));
    let derivative = dot(&g.vector, &psi);
    let pairing = pair_tensor_field(&g.interior_tensor_field, &metric_variation(&mesh, &l, &dl));
    assert!(rel(pairing, derivative) < 1e-9, "{pairing} vs {derivative}");
}

#[test]
fn tied_cap_branches_bracket_one_sided_differences() {
    let r = PI_3;
    let (mesh, metric) = build_cap_mesh(r, 8).unwrap();
    let spec = FunctionalSpec::xi_plus(r, 1);
    let g = grad_functional(&spec, &mesh, &metric).unwrap();
    assert!(g.nonsmooth && g.report.is_tied());
    let branches: std::collections::BTreeSet<usize> = g.gradients.iter().map(|t| t.branch).collect();
    assert_eq!(branches.len(), 2);
    // A rotationally symmetric direction keeps the cluster degenerate, so the
    // one-sided derivative is the smaller of the branch derivatives.
    let coords = mesh.coordinates().unwrap();
    let rad: Vec<f64> = coords.iter().map(|p| p[0].clamp(-1.0, 1.0).acos()).collect();
    let l = metric.lengths(&mesh);
    let d: Vec<f64> = mesh
        .edges()
        .iter()
        .zip(&l)
        .map(|(&[a, b], &le)| le * (3.0 * (rad[a] + rad[b]) / 2.0).cos())
        .collect();
    let slopes: Vec<f64> = g.gradients.iter().map(|t| dot(&t.gradient.vector, &d)).collect();
    let (lo, hi) = slopes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
    let value = |t: f64| {
        let y: Vec<f64> = l.iter().zip(&d).map(|(a, b)| a + t * b).collect();
        eval_functional(&spec, &mesh, &DiscreteMetric::from_lengths(y)).unwrap().value
    };
    let h = 1e-6;
    let forward = (value(h) - g.report.value) / h;
    let backward = (g.report.value - value(-h)) / h;
    let slack = 1e-4 * (hi - lo).abs().max(1.0);
    for fd in [forward, backward] {
        assert!(fd >= lo - slack && fd <= hi + slack, "{fd} outside [{lo}, {hi}]");
    }
}

#[test]
fn xi_plus_is_flat_along_uniform_scaling() {
    let (mesh, metric) = random_disk(1.0, 4, 0.15, 8);
    let spec = FunctionalSpec::xi_plus(0.8, 1);
    let g = grad_functional(&spec, &mesh, &metric).unwrap();
    let v = &g.smooth().unwrap().vector;
    let l = metric.lengths(&mesh);
    assert!(dot(v, &l).abs() < 1e-9 * norm(v) * norm(&l));
}

#[test]
fn criticality_residual_vanishes_at_cap_and_not_when_perturbed() {
    let opts = CriticalityOptions::default();
    let (mesh, metric) = build_cap_mesh(PI_3, 16).unwrap();
    let cap = criticality_residual_theta(&mesh, &metric, PI_3, 1, &opts).unwrap();
    assert!(cap.relative_residual < 1e-2, "{}", cap.relative_residual);
    assert!((cap.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(cap.samples.len(), 2 + opts.samples);
    let p = perturb_metric(&mesh, &metric, 0.1, 7).unwrap();
    let pert = criticality_residual_theta(&mesh, &p, PI_3, 1, &opts).unwrap();
    assert!(pert.relative_residual > 10.0 * cap.relative_residual);
}

#[test]
fn singleton_sample_residual_is_the_gradient_norm() {
    let (mesh, metric) = random_disk(1.0, 4, 0.15, 9);
    let w = criticality_residual_theta(&mesh, &metric, 0.8, 1, &CriticalityOptions::default()).unwrap();
    assert_eq!(w.samples.len(), 1);
    assert_eq!(w.weights, vec![1.0]);
    let g = grad_functional(&FunctionalSpec::theta(0.8, 1), &mesh, &metric).unwrap();
    assert!(rel(w.residual, g.smooth().unwrap().norm()) < 1e-10);
}

#[test]
fn registry_accepts_custom_families() {
    struct DoubleArea;
    impl Functional for DoubleArea {
        fn name(&self) -> &'static str {
            "double_area"
        }
        fn validate(&self, _: &FunctionalSpec) -> fbmi_core::Result<()> {
            Ok(())
        }
        fn branches(&self, _: &FunctionalSpec) -> Vec<Branch> {
            vec![Branch {
                label: "area".into(),
                eigen: vec![],
            }]
        }
        fn branch_value(&self, _: &FunctionalSpec, _: usize, _: &[f64], _: f64, area: f64) -> f64 {
            2.0 * area
        }
        fn branch_partials(&self, _: &FunctionalSpec, _: usize, _: &[f64], _: f64, _: f64) -> Partials {
            Partials {
                eigen: vec![],
                boundary_length: 0.0,
                area: 2.0,
            }
        }
    }
    let mut registry = FunctionalRegistry::default();
    registry.register(std::sync::Arc::new(DoubleArea));
    let (mesh, metric) = unit_square();
    let spec = FunctionalSpec::new("double-area", 0.5, 1);
    let r = eval_functional_with(&registry, &spec, &mesh, &metric, &Default::default()).unwrap();
    assert_eq!(r.value, 2.0);
    assert!(registry.get("nope").is_err());
}

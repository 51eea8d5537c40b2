//! The built-in functional families.

use std::f64::consts::FRAC_PI_2;

use super::{Branch, EigenRequest, Functional, FunctionalSpec, Partials};
use crate::error::{Error, Result};
use crate::spectra::ProblemKind;

fn check_index(spec: &FunctionalSpec) -> Result<()> {
    if spec.i == 0 {
        return Err(Error::OutOfRange("eigenvalue index i must be at least 1".into()));
    }
    if spec.k < 2 {
        return Err(Error::OutOfRange(format!("dimension k = {} must be at least 2", spec.k)));
    }
    Ok(())
}

fn check_spherical(spec: &FunctionalSpec) -> Result<()> {
    check_index(spec)?;
    if !(spec.r > 0.0 && spec.r < FRAC_PI_2) {
        return Err(Error::OutOfRange(format!("spherical radius r = {} must lie in (0, π/2)", spec.r)));
    }
    Ok(())
}

fn check_hyperbolic(spec: &FunctionalSpec) -> Result<()> {
    check_index(spec)?;
    if !(spec.r > 0.0 && spec.r.is_finite()) {
        return Err(Error::OutOfRange(format!("hyperbolic radius r = {} must be positive", spec.r)));
    }
    Ok(())
}

fn steklov_pair(c: f64, i: usize) -> Vec<EigenRequest> {
    let problem = ProblemKind::FreqSteklov { c };
    vec![EigenRequest { problem, index: 0 }, EigenRequest { problem, index: i }]
}

fn robin(sigma: f64, index: usize) -> Vec<EigenRequest> {
    vec![EigenRequest {
        problem: ProblemKind::Robin { sigma },
        index,
    }]
}

/// `w₀θ₀ + wᵢθᵢ` weighted by `a`, plus `2A`.
fn weighted_value(w: [f64; 2], eig: &[f64], a: f64, area: f64) -> f64 {
    (eig[0] * w[0] + eig[1] * w[1]) * a + 2.0 * area
}

fn weighted_partials(w: [f64; 2], eig: &[f64], a: f64) -> Partials {
    Partials {
        eigen: vec![w[0] * a, w[1] * a],
        boundary_length: eig[0] * w[0] + eig[1] * w[1],
        area: 2.0,
    }
}

/// `λ·A^{2/k}` for a single Robin eigenvalue.
fn normalized_value(spec: &FunctionalSpec, eig: &[f64], area: f64) -> f64 {
    eig[0] * area.powf(2.0 / spec.k as f64)
}

fn normalized_partials(spec: &FunctionalSpec, eig: &[f64], area: f64) -> Partials {
    let p = 2.0 / spec.k as f64;
    Partials {
        eigen: vec![area.powf(p)],
        boundary_length: 0.0,
        area: eig[0] * p * area.powf(p - 1.0),
    }
}

/// `Θ_{r,i} = (θ₀cos²r + θᵢsin²r)a + 2A` with frequency `k`.
pub struct Theta;

impl Functional for Theta {
    fn name(&self) -> &'static str {
        "theta"
    }

    fn validate(&self, spec: &FunctionalSpec) -> Result<()> {
        check_spherical(spec)
    }

    fn branches(&self, spec: &FunctionalSpec) -> Vec<Branch> {
        vec![Branch {
            label: "theta".into(),
            eigen: steklov_pair(spec.k as f64, spec.i),
        }]
    }

    fn branch_value(&self, spec: &FunctionalSpec, _: usize, eig: &[f64], a: f64, area: f64) -> f64 {
        weighted_value(spherical_weights(spec.r), eig, a, area)
    }

    fn branch_partials(&self, spec: &FunctionalSpec, _: usize, eig: &[f64], a: f64, _: f64) -> Partials {
        weighted_partials(spherical_weights(spec.r), eig, a)
    }
}

fn spherical_weights(r: f64) -> [f64; 2] {
    let (s, c) = r.sin_cos();
    [c * c, s * s]
}

fn hyperbolic_weights(r: f64) -> [f64; 2] {
    let (s, c) = (r.sinh(), r.cosh());
    [-c * c, s * s]
}

/// `Ω_{r,i} = (−ω₀cosh²r + ωᵢsinh²r)a + 2A` with frequency `−k`.
pub struct Omega;

impl Functional for Omega {
    fn name(&self) -> &'static str {
        "omega"
    }

    fn validate(&self, spec: &FunctionalSpec) -> Result<()> {
        check_hyperbolic(spec)
    }

    fn branches(&self, spec: &FunctionalSpec) -> Vec<Branch> {
        vec![Branch {
            label: "omega".into(),
            eigen: steklov_pair(-(spec.k as f64), spec.i),
        }]
    }

    fn branch_value(&self, spec: &FunctionalSpec, _: usize, eig: &[f64], a: f64, area: f64) -> f64 {
        weighted_value(hyperbolic_weights(spec.r), eig, a, area)
    }

    fn branch_partials(&self, spec: &FunctionalSpec, _: usize, eig: &[f64], a: f64, _: f64) -> Partials {
        weighted_partials(hyperbolic_weights(spec.r), eig, a)
    }
}

/// `Ξ⁺_{r,i} = min(λ₀(−tan r), λᵢ(cot r))·A^{2/k}`.
pub struct XiPlus;

impl Functional for XiPlus {
    fn name(&self) -> &'static str {
        "xi_plus"
    }

    fn validate(&self, spec: &FunctionalSpec) -> Result<()> {
        check_spherical(spec)
    }

    fn branches(&self, spec: &FunctionalSpec) -> Vec<Branch> {
        let t = spec.r.tan();
        vec![
            Branch {
                label: "lambda0(-tan r)".into(),
                eigen: robin(-t, 0),
            },
            Branch {
                label: format!("lambda{}(cot r)", spec.i),
                eigen: robin(1.0 / t, spec.i),
            },
        ]
    }

    fn branch_value(&self, spec: &FunctionalSpec, _: usize, eig: &[f64], _: f64, area: f64) -> f64 {
        normalized_value(spec, eig, area)
    }

    fn branch_partials(&self, spec: &FunctionalSpec, _: usize, eig: &[f64], _: f64, area: f64) -> Partials {
        normalized_partials(spec, eig, area)
    }
}

/// `Ξ⁻_{r,i} = min(λ₀(tanh r), λᵢ(coth r))·A^{2/k}`.
pub struct XiMinus;

impl Functional for XiMinus {
    fn name(&self) -> &'static str {
        "xi_minus"
    }

    fn validate(&self, spec: &FunctionalSpec) -> Result<()> {
        check_hyperbolic(spec)
    }

    fn branches(&self, spec: &FunctionalSpec) -> Vec<Branch> {
        let t = spec.r.tanh();
        vec![
            Branch {
                label: "lambda0(tanh r)".into(),
                eigen: robin(t, 0),
            },
            Branch {
                label: format!("lambda{}(coth r)", spec.i),
                eigen: robin(1.0 / t, spec.i),
            },
        ]
    }

    fn branch_value(&self, spec: &FunctionalSpec, _: usize, eig: &[f64], _: f64, area: f64) -> f64 {
        normalized_value(spec, eig, area)
    }

    fn branch_partials(&self, spec: &FunctionalSpec, _: usize, eig: &[f64], _: f64, area: f64) -> Partials {
        normalized_partials(spec, eig, area)
    }
}

/// `(cos²r θ₀ + sin²r θᵢ)α₁a^{β₁} + α₂A^{β₂}` with frequency `k`.
pub struct GeneralFamily;

impl Functional for GeneralFamily {
    fn name(&self) -> &'static str {
        "general"
    }

    fn validate(&self, spec: &FunctionalSpec) -> Result<()> {
        check_spherical(spec)?;
        let c = spec.coefficients;
        if ![c.alpha1, c.beta1, c.alpha2, c.beta2].iter().all(|x| x.is_finite()) {
            return Err(Error::OutOfRange("general coefficients must be finite".into()));
        }
        Ok(())
    }

    fn branches(&self, spec: &FunctionalSpec) -> Vec<Branch> {
        vec![Branch {
            label: "general".into(),
            eigen: steklov_pair(spec.k as f64, spec.i),
        }]
    }

    fn branch_value(&self, spec: &FunctionalSpec, _: usize, eig: &[f64], a: f64, area: f64) -> f64 {
        let w = spherical_weights(spec.r);
        let c = spec.coefficients;
        (eig[0] * w[0] + eig[1] * w[1]) * c.alpha1 * a.powf(c.beta1) + c.alpha2 * area.powf(c.beta2)
    }

    fn branch_partials(&self, spec: &FunctionalSpec, _: usize, eig: &[f64], a: f64, area: f64) -> Partials {
        let w = spherical_weights(spec.r);
        let c = spec.coefficients;
        let scale = c.alpha1 * a.powf(c.beta1);
        Partials {
            eigen: vec![w[0] * scale, w[1] * scale],
            boundary_length: (eig[0] * w[0] + eig[1] * w[1]) * c.alpha1 * c.beta1 * a.powf(c.beta1 - 1.0),
            area: c.alpha2 * c.beta2 * area.powf(c.beta2 - 1.0),
        }
    }
}

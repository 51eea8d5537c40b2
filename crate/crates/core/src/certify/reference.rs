//! Closed-form spectra and measures of geodesic balls in the round sphere
//! and in hyperbolic space.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::Geometry;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapReference {
    pub r: f64,
    pub k: usize,
    pub geometry: Geometry,
    /// Frequency-`k` Steklov ground value `−tan r` (spherical cap).
    pub theta0: Option<f64>,
    /// `cot r`, with multiplicity `k` (spherical cap).
    pub theta1: Option<f64>,
    /// Frequency-`(−k)` Steklov ground value `tanh r` (hyperbolic ball).
    pub omega0: Option<f64>,
    /// `coth r`, with multiplicity `k` (hyperbolic ball).
    pub omega1: Option<f64>,
    pub multiplicity: usize,
    /// Matched Robin eigenvalue: `k` on the cap, `−k` on the ball.
    pub lambda: f64,
    /// `k`-dimensional volume of the ball.
    pub area: f64,
    /// `(k−1)`-dimensional volume of its boundary sphere.
    pub boundary_length: f64,
    /// `λ·area^{2/k}`: Ξ⁺ on the cap (`4π(1 − cos r)` for `k = 2`), Ξ⁻ on the ball.
    pub xi_value: f64,
    /// `2·area`: the value of Θ (cap) or Ω (ball) for `k = 2`.
    pub theta_value: Option<f64>,
}

/// `|S^{n}|` for `n ≥ 0`.
fn sphere_volume(n: usize) -> f64 {
    // |S^n| = 2π^{(n+1)/2} / Γ((n+1)/2)
    let half = n + 1; // Γ(half/2)
    let mut gamma = if half.is_multiple_of(2) { 1.0 } else { PI.sqrt() };
    let mut x = if half.is_multiple_of(2) { 1.0 } else { 0.5 };
    while x < half as f64 / 2.0 - 1e-12 {
        gamma *= x;
        x += 1.0;
    }
    2.0 * PI.powf(half as f64 / 2.0) / gamma
}

/// `∫₀^r sⁿ(t) dt` with `s = sin` (`hyperbolic = false`) or `sinh`.
fn power_integral(n: usize, r: f64, hyperbolic: bool) -> f64 {
    let (s, c) = if hyperbolic { (r.sinh(), r.cosh()) } else { r.sin_cos() };
    match n {
        0 => r,
        1 => {
            if hyperbolic {
                c - 1.0
            } else {
                1.0 - c
            }
        }
        _ => {
            let nf = n as f64;
            let tail = power_integral(n - 2, r, hyperbolic) * (nf - 1.0) / nf;
            if hyperbolic {
                s.powi(n as i32 - 1) * c / nf - tail
            } else {
                -s.powi(n as i32 - 1) * c / nf + tail
            }
        }
    }
}

pub fn cap_reference(r: f64, k: usize, geometry: Geometry) -> Result<CapReference> {
    if k < 2 {
        return Err(Error::OutOfRange(format!("dimension k = {k} must be at least 2")));
    }
    let hyperbolic = geometry == Geometry::Hyperbolic;
    let ok = if hyperbolic {
        r > 0.0 && r.is_finite()
    } else {
        r > 0.0 && r < FRAC_PI_2
    };
    if !ok {
        return Err(Error::OutOfRange(format!(
            "radius {r} out of range for {} geometry",
            if hyperbolic { "hyperbolic" } else { "spherical" }
        )));
    }
    let kf = k as f64;
    let sphere = sphere_volume(k - 1);
    let area = sphere * power_integral(k - 1, r, hyperbolic);
    let s = if hyperbolic { r.sinh() } else { r.sin() };
    let boundary_length = sphere * s.powi(k as i32 - 1);
    let lambda = if hyperbolic { -kf } else { kf };
    let (theta0, theta1, omega0, omega1) = if hyperbolic {
        (None, None, Some(r.tanh()), Some(1.0 / r.tanh()))
    } else {
        (Some(-r.tan()), Some(1.0 / r.tan()), None, None)
    };
    Ok(CapReference {
        r,
        k,
        geometry,
        theta0,
        theta1,
        omega0,
        omega1,
        multiplicity: k,
        lambda,
        area,
        boundary_length,
        xi_value: lambda * area.powf(2.0 / kf),
        theta_value: (k == 2).then_some(2.0 * area),
    })
}

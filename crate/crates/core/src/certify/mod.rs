//! Numerical certificates of extremality, closed-form references and the
//! boundary-concentration experiment.

mod certificate;
mod degeneration;
mod reference;

pub use certificate::{fbmi_certificate, fbmi_certificate_with, Certificate, CertificateOptions, CertificateResiduals};
pub use degeneration::{
    degeneration_experiment, degeneration_experiment_with, DegenerationOptions, DegenerationRow, DegenerationTable,
};
pub use reference::{cap_reference, CapReference};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    Spherical,
    Hyperbolic,
}

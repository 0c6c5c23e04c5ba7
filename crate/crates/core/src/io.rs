//! JSON instance and certificate files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assumptions::GrowthCertificate;
use crate::capacity::{build_capacity_model, CapacityModel, CapacityParams};
use crate::constant_rate::{ConstantRateModel, ConstantRateSpec};
use crate::error::{Error, Result};
use crate::model::{ensure_valid, tabulate, FiniteInstance};
use crate::operators::QuadratureConfig;

/// On-disk instance, discriminated by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceFile {
    Tabulated(FiniteInstance),
    CapacityExpansion(CapacityParams),
    ConstantRate(ConstantRateSpec),
}

/// A parsed instance, with its dynamics when the file describes a model.
#[derive(Debug, Clone)]
pub enum LoadedInstance {
    Tabulated(FiniteInstance),
    Capacity(CapacityModel),
    ConstantRate(ConstantRateModel),
}

impl LoadedInstance {
    pub fn from_file(file: InstanceFile) -> Result<Self> {
        Ok(match file {
            InstanceFile::Tabulated(inst) => {
                ensure_valid(&inst)?;
                LoadedInstance::Tabulated(inst)
            }
            InstanceFile::CapacityExpansion(p) => LoadedInstance::Capacity(build_capacity_model(p)?),
            InstanceFile::ConstantRate(s) => LoadedInstance::ConstantRate(ConstantRateModel::new(s)?),
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LoadedInstance::Tabulated(_) => "tabulated",
            LoadedInstance::Capacity(_) => "capacity_expansion",
            LoadedInstance::ConstantRate(_) => "constant_rate",
        }
    }

    /// The finite instance: stored rows, or quadrature tabulation of the model.
    pub fn tabulate(&self, quad: &QuadratureConfig) -> Result<FiniteInstance> {
        match self {
            LoadedInstance::Tabulated(inst) => Ok(inst.clone()),
            LoadedInstance::Capacity(m) => tabulate(m, quad),
            LoadedInstance::ConstantRate(m) => tabulate(m, quad),
        }
    }
}

pub fn parse_instance(text: &str) -> Result<LoadedInstance> {
    LoadedInstance::from_file(serde_json::from_str(text)?)
}

pub fn load_instance(path: &Path) -> Result<LoadedInstance> {
    let text = std::fs::read_to_string(path)?;
    parse_instance(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Serializes a finite instance as a `tabulated` file.
pub fn tabulated_json(inst: &FiniteInstance) -> Result<String> {
    Ok(serde_json::to_string_pretty(&InstanceFile::Tabulated(inst.clone()))?)
}

/// On-disk growth certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CertificateFile {
    /// `v = lam exp(a1 m)`, `b = 0`, `c = -rho alpha` for the capacity model.
    CapacityExponential { rho: f64 },
    /// Per-state `v` and `b` for models without flow.
    Tabulated { v: Vec<f64>, b: Vec<f64>, c: f64 },
}

pub fn parse_certificate(text: &str) -> Result<CertificateFile> {
    Ok(serde_json::from_str(text)?)
}

/// Per-state certificate on a constant-rate model, whose points are state indices.
pub fn tabulated_certificate(v: Vec<f64>, b: Vec<f64>, c: f64, states: usize) -> Result<GrowthCertificate<usize>> {
    if v.len() != states || b.len() != states {
        return Err(Error::Incompatible(format!(
            "certificate has {} values of v and {} of b for {states} states",
            v.len(),
            b.len()
        )));
    }
    Ok(GrowthCertificate::new(move |x: &usize| v[*x], move |x: &usize| b[*x], c).with_derivative(|_| 0.0))
}

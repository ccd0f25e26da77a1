//! JSON overrides for the metric and mesh.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context};
use cmpc_core::contraction::{ConstantMetric, MeshSpec, MetricConfig};
use nalgebra::DMatrix;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub kappa: Option<f64>,
    pub gamma: Option<f64>,
    pub beta_x: Option<f64>,
    pub beta_z: Option<f64>,
    pub beta_p: Option<f64>,
    /// Constant `P` as rows.
    #[serde(rename = "P")]
    pub p: Option<Vec<Vec<f64>>>,
    /// Constant `Q` as rows.
    #[serde(rename = "Q")]
    pub q: Option<Vec<Vec<f64>>>,
    /// Replaces the mesh preset.
    pub mesh: Option<MeshSpec>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn metric(&self) -> anyhow::Result<MetricConfig> {
        let mut cfg = MetricConfig::benchmark();
        if let Some(v) = self.kappa {
            cfg.kappa = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.beta_x {
            cfg.beta_x = v;
        }
        if let Some(v) = self.beta_z {
            cfg.beta_z = v;
        }
        if let Some(v) = self.beta_p {
            cfg.beta_p = v;
        }
        if let Some(rows) = &self.p {
            cfg.p = Arc::new(ConstantMetric::new(square("P", rows, 4)?));
        }
        if let Some(rows) = &self.q {
            cfg.q = Arc::new(ConstantMetric::new(square("Q", rows, 6)?));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn square(name: &str, rows: &[Vec<f64>], dim: usize) -> anyhow::Result<DMatrix<f64>> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        bail!("{name} must be {dim}x{dim}");
    }
    let m = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
    if m.clone().cholesky().is_none() {
        bail!("{name} must be symmetric positive definite");
    }
    Ok(m)
}

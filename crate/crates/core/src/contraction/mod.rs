//! Contraction analysis of the continuation-method closed loop.
//!
//! The metric is `M(s, t) = blockdiag(P(x, t), 0) + κ (∂ζ/∂s)ᵀ Q(ζ, t) (∂ζ/∂s)`.
//! Matrix inequalities on `P` and `Q` are certified numerically on meshes by
//! symmetric eigenvalue checks.

mod certificate;
mod lemma3;
mod mesh;
mod metric;
mod operator;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::symmetrize;

pub use certificate::{
    check_assumption1, check_ineq_gk, check_ineq_p_full, check_ineq_p_opt, check_ineq_q,
    estimate_constants, CertificateReport, Constants, Criterion, Inequality, ZERO_TOLERANCE,
};
pub use lemma3::{
    decomposition_matrix, lemma3_decomposition, verify_lemma3, Lemma3Options, Lemma3Result,
    Lemma3Row, Lemma3Run,
};
pub use mesh::{Axis, MeshPoint, MeshPreset, MeshSpec, DEFAULT_GUARD};
pub use metric::{k_from_parts, k_matrix, metric_m, metric_from_derivatives, p_xu_bar, p_xu_matrix};
pub use operator::{l_operator, l_operator_with_jacobian, LOperatorOptions};

/// A symmetric positive-definite matrix field `(arg, t) ↦ P(arg, t)`.
pub trait MetricField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, arg: &DVector<f64>, t: f64) -> DMatrix<f64>;
    /// Constant fields skip the Lie-derivative and time-derivative terms of `L`.
    fn is_constant(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantMetric {
    matrix: DMatrix<f64>,
}

impl ConstantMetric {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Self {
            matrix: symmetrize(&matrix),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim))
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        Self::new(DMatrix::identity(dim, dim) * scale)
    }
}

impl MetricField for ConstantMetric {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn eval(&self, _arg: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        self.matrix.clone()
    }

    fn is_constant(&self) -> bool {
        true
    }
}

/// `P`, `Q`, `κ`, `γ` and the rate constants of the certificate.
#[derive(Clone)]
pub struct MetricConfig {
    pub p: Arc<dyn MetricField>,
    pub q: Arc<dyn MetricField>,
    pub kappa: f64,
    pub gamma: f64,
    pub beta_x: f64,
    pub beta_z: f64,
    pub beta_p: f64,
}

impl fmt::Debug for MetricConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricConfig")
            .field("p_dim", &self.p.dim())
            .field("q_dim", &self.q.dim())
            .field("kappa", &self.kappa)
            .field("gamma", &self.gamma)
            .field("beta_x", &self.beta_x)
            .field("beta_z", &self.beta_z)
            .field("beta_p", &self.beta_p)
            .finish()
    }
}

impl MetricConfig {
    /// `P = I₄`, `Q = I₆`, `κ = 1`, `γ = 0.1`, `β_x = 0.1`, `β_z = 0.4`,
    /// `β_p = 0.032`.
    pub fn benchmark() -> Self {
        Self {
            p: Arc::new(ConstantMetric::identity(4)),
            q: Arc::new(ConstantMetric::identity(6)),
            kappa: 1.0,
            gamma: 0.1,
            beta_x: 0.1,
            beta_z: 0.4,
            beta_p: 0.032,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("beta_x", self.beta_x),
            ("beta_z", self.beta_z),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.beta_p >= 0.0 && self.beta_p.is_finite()) {
            return Err(Error::Config(format!(
                "beta_p must be non-negative, got {}",
                self.beta_p
            )));
        }
        Ok(())
    }

    /// The split certificate needs `β_x > β_p > 0`.
    pub fn validate_split(&self) -> Result<()> {
        self.validate()?;
        if !(self.beta_x > self.beta_p && self.beta_p > 0.0) {
            return Err(Error::Config(format!(
                "split certificate needs beta_x > beta_p > 0 (beta_x = {}, beta_p = {})",
                self.beta_x, self.beta_p
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_config_is_valid() {
        let cfg = MetricConfig::benchmark();
        cfg.validate_split().unwrap();
        assert!(cfg.p.is_constant());
        assert_eq!(cfg.q.dim(), 6);
    }

    #[test]
    fn split_requires_ordered_rates() {
        let mut cfg = MetricConfig::benchmark();
        cfg.beta_p = 0.2;
        assert!(cfg.validate_split().is_err());
        cfg.beta_p = 0.0;
        assert!(cfg.validate().is_ok());
        assert!(cfg.validate_split().is_err());
        cfg.kappa = 0.0;
        assert!(cfg.validate().is_err());
    }
}

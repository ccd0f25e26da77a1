use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::{fd_step, sym_part, symmetrize};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LOperatorOptions {
    /// Base step for the central differences (scaled by `1 + |coordinate|`).
    pub step: f64,
    /// Skip the Lie-derivative and `∂M/∂t` terms.
    pub constant_metric: bool,
}

impl Default for LOperatorOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            constant_metric: false,
        }
    }
}

/// `L[M, φ, s, γ] = L_φ M + ∂M/∂t + ⟨M ∂φ/∂s⟩ + γM`.
///
/// `∂φ/∂s` is taken by central differences of `field`.
pub fn l_operator<MF, VF>(
    metric: MF,
    field: VF,
    s: &DVector<f64>,
    t: f64,
    gamma: f64,
    opts: &LOperatorOptions,
) -> Result<DMatrix<f64>>
where
    MF: Fn(&DVector<f64>, f64) -> Result<DMatrix<f64>>,
    VF: Fn(&DVector<f64>, f64) -> Result<DVector<f64>>,
{
    let value = field(s, t)?;
    let mut jac = DMatrix::zeros(value.len(), s.len());
    let mut probe = s.clone();
    for j in 0..s.len() {
        let h = fd_step(opts.step, s[j]);
        probe[j] = s[j] + h;
        let plus = field(&probe, t)?;
        probe[j] = s[j] - h;
        let minus = field(&probe, t)?;
        probe[j] = s[j];
        jac.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    l_operator_with_jacobian(metric, &value, &jac, s, t, gamma, opts)
}

/// [`l_operator`] with the field value and Jacobian supplied by the caller.
///
/// The Lie derivative `Σ φ_i ∂M/∂s_i` is the central difference of `M` along
/// the direction `φ`.
pub fn l_operator_with_jacobian<MF>(
    metric: MF,
    field_value: &DVector<f64>,
    field_jacobian: &DMatrix<f64>,
    s: &DVector<f64>,
    t: f64,
    gamma: f64,
    opts: &LOperatorOptions,
) -> Result<DMatrix<f64>>
where
    MF: Fn(&DVector<f64>, f64) -> Result<DMatrix<f64>>,
{
    let m = metric(s, t)?;
    let mut l = sym_part(&(&m * field_jacobian)) + &m * gamma;
    if !opts.constant_metric {
        let speed = field_value.amax();
        if speed > 0.0 {
            let eps = fd_step(opts.step, s.amax()) / speed;
            let plus = metric(&(s + field_value * eps), t)?;
            let minus = metric(&(s - field_value * eps), t)?;
            l += (plus - minus) / (2.0 * eps);
        }
        let h = fd_step(opts.step, t);
        l += (metric(s, t + h)? - metric(s, t - h)?) / (2.0 * h);
    }
    Ok(symmetrize(&l))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(m: DMatrix<f64>) -> impl Fn(&DVector<f64>, f64) -> Result<DMatrix<f64>> {
        move |_, _| Ok(m.clone())
    }

    #[test]
    fn constant_metric_linear_field() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.5, -3.0]);
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let s = DVector::from_vec(vec![0.7, -0.4]);
        let aa = a.clone();
        let l = l_operator(
            constant(m.clone()),
            move |s, _| Ok(&aa * s),
            &s,
            0.3,
            0.5,
            &LOperatorOptions::default(),
        )
        .unwrap();
        let exact = &m * &a + (&m * &a).transpose() + &m * 0.5;
        assert!((l - exact).amax() <= 1e-9);
    }

    #[test]
    fn scalar_decay() {
        let l = l_operator(
            constant(DMatrix::identity(1, 1)),
            |s, _| Ok(-s.clone()),
            &DVector::from_element(1, 2.0),
            0.0,
            1.0,
            &LOperatorOptions::default(),
        )
        .unwrap();
        assert!((l[(0, 0)] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn lie_and_time_terms() {
        // M(s, t) = (1 + s² + t²), φ = 3: L = 3·2s + 2t + 0 + γM.
        let metric = |s: &DVector<f64>, t: f64| Ok(DMatrix::from_element(1, 1, 1.0 + s[0] * s[0] + t * t));
        let s = DVector::from_element(1, 0.4);
        let l = l_operator(
            metric,
            |_s, _t| Ok(DVector::from_element(1, 3.0)),
            &s,
            0.7,
            0.2,
            &LOperatorOptions::default(),
        )
        .unwrap();
        let exact = 6.0 * 0.4 + 2.0 * 0.7 + 0.2 * (1.0 + 0.16 + 0.49);
        assert!((l[(0, 0)] - exact).abs() < 1e-8, "{}", l[(0, 0)]);
    }
}

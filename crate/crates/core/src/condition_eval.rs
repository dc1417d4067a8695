//! Confidence of the map-inverted SOC: Fisher information of the regression
//! window, the OCV variance bound it implies and its projection onto SOC
//! through the local inverse slope of the map.

use nalgebra::{DMatrix, Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SocError};
use crate::linalg::Equilibrated;
use crate::ocv_map::OcvMap;
use crate::param_estimation::{RegressorWindow, PARAM_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConditionConfig {
    /// Terminal voltage noise std, V.
    pub sigma_vt: f64,
    /// Tikhonov ridge added to the Fisher information.
    pub epsilon: f64,
    /// Largest SOC covariance ever reported, fraction².
    pub cov_ceiling: f64,
}

impl Default for ConditionConfig {
    fn default() -> Self {
        Self {
            sigma_vt: 2e-3,
            epsilon: 1e-8,
            cov_ceiling: 1e4,
        }
    }
}

impl ConditionConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("condition.sigma_vt", self.sigma_vt),
            ("condition.epsilon", self.epsilon),
            ("condition.cov_ceiling", self.cov_ceiling),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(SocError::config(field, format!("must be finite and > 0, got {value}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// V².
    pub cov_ocv: f64,
    /// `dSOC/dOCV`, fraction/V.
    pub slope: f64,
    /// fraction², after capping.
    pub cov_soc: f64,
    pub capped: bool,
}

/// `∂V̂/∂θ` for every row of a full window. The model is linear in θ, so
/// this is the stacked regressor matrix.
pub fn sensitivity_matrix(window: &RegressorWindow) -> Result<DMatrix<f64>> {
    window.ensure_full()?;
    let n = window.len();
    let mut s = DMatrix::zeros(n, PARAM_COUNT);
    for (k, row) in window.rows().enumerate() {
        for (j, v) in row.phi().iter().enumerate() {
            s[(k, j)] = *v;
        }
    }
    Ok(s)
}

/// `F = SᵀS/σ² + εI`.
pub fn fisher(s: &DMatrix<f64>, cfg: &ConditionConfig) -> Result<Matrix6<f64>> {
    if s.ncols() != PARAM_COUNT {
        return Err(SocError::config(
            "sensitivity",
            format!("expected {PARAM_COUNT} columns, got {}", s.ncols()),
        ));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(SocError::NonFinite("sensitivity matrix"));
    }
    let gram = s.tr_mul(s);
    Ok(fisher_from_gram(&Matrix6::from_fn(|i, j| gram[(i, j)]), cfg))
}

/// Same as [`fisher`], starting from an already accumulated `SᵀS`.
pub fn fisher_from_gram(gram: &Matrix6<f64>, cfg: &ConditionConfig) -> Matrix6<f64> {
    gram / (cfg.sigma_vt * cfg.sigma_vt) + Matrix6::identity() * cfg.epsilon
}

/// `[F⁻¹]₁₁` from a Cholesky solve of `F x = e₁`.
pub fn cov_ocv(f: &Matrix6<f64>) -> Result<f64> {
    let factor = Equilibrated::factor(f).ok_or(SocError::Factorization("Fisher information"))?;
    let x = factor.solve(&Vector6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0));
    if !x[0].is_finite() {
        return Err(SocError::NonFinite("OCV covariance"));
    }
    Ok(x[0].max(0.0))
}

/// Projects `cov_ocv` onto SOC with the inverse slope of the map at
/// `(h, soc_prev)`.
pub fn cov_soc(cov_ocv: f64, h: f64, soc_prev: f64, map: &OcvMap, cfg: &ConditionConfig) -> ConditionReport {
    let slope = map.inv_slope(h, soc_prev);
    scale_covariance(cov_ocv, slope, cfg.cov_ceiling)
}

/// `slope²·cov_ocv`, capped at `ceiling`.
pub fn scale_covariance(cov_ocv: f64, slope: f64, ceiling: f64) -> ConditionReport {
    let raw = slope * slope * cov_ocv;
    let capped = !(raw <= ceiling);
    ConditionReport {
        cov_ocv,
        slope,
        cov_soc: if capped { ceiling } else { raw },
        capped,
    }
}

//! Scalar Kalman filter: Coulomb-counting prediction corrected by the
//! map-inverted SOC measurement.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SocError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Cell capacity, A·s.
    pub capacity: f64,
    /// Current measurement noise std used to derive `v_i`, A.
    pub sigma_i: f64,
    /// Explicit process noise per step; overrides `sigma_i` when set.
    pub process_noise: Option<f64>,
    pub initial_soc: f64,
    pub initial_p: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            capacity: 4320.0,
            sigma_i: 0.01,
            process_noise: None,
            initial_soc: 0.5,
            initial_p: 0.25,
        }
    }
}

impl FusionConfig {
    pub fn build(&self, dt: f64) -> Result<FusionState> {
        if !self.sigma_i.is_finite() || self.sigma_i <= 0.0 {
            return Err(SocError::config(
                "fusion.sigma_i",
                format!("must be finite and > 0, got {}", self.sigma_i),
            ));
        }
        let v_i = self
            .process_noise
            .unwrap_or((self.sigma_i * dt / self.capacity).powi(2));
        FusionState::new(self.initial_soc, self.initial_p, v_i, self.capacity, dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionState {
    soc_est: f64,
    p_m: f64,
    v_i: f64,
    c_p: f64,
    dt: f64,
}

/// Output of [`FusionState::predict`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub soc_cc: f64,
    pub p_p: f64,
}

/// Output of [`FusionState::update`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub soc_est: f64,
    pub p_m: f64,
    pub gain: f64,
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(SocError::config(field, format!("must be finite and > 0, got {v}")))
    }
}

impl FusionState {
    pub fn new(soc0: f64, p0: f64, v_i: f64, c_p: f64, dt: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&soc0) {
            return Err(SocError::config(
                "fusion.initial_soc",
                format!("must lie in [0, 1], got {soc0}"),
            ));
        }
        if !p0.is_finite() || p0 < 0.0 {
            return Err(SocError::config(
                "fusion.initial_p",
                format!("must be finite and >= 0, got {p0}"),
            ));
        }
        positive("fusion.process_noise", v_i)?;
        positive("fusion.capacity", c_p)?;
        positive("dt", dt)?;
        Ok(Self {
            soc_est: soc0,
            p_m: p0,
            v_i,
            c_p,
            dt,
        })
    }

    pub fn soc_est(&self) -> f64 {
        self.soc_est
    }

    pub fn p_m(&self) -> f64 {
        self.p_m
    }

    pub fn v_i(&self) -> f64 {
        self.v_i
    }

    pub fn capacity(&self) -> f64 {
        self.c_p
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Coulomb-counting step with the previous sample's current (positive =
    /// discharge).
    pub fn predict(&self, i_prev: f64) -> Prediction {
        Prediction {
            soc_cc: (self.soc_est - i_prev * self.dt / self.c_p).clamp(0.0, 1.0),
            p_p: self.p_m + self.v_i,
        }
    }

    /// Measurement update. A non-positive or NaN `cov_meas` is treated as the
    /// smallest positive variance so the gain stays below one.
    pub fn update(&mut self, pred: Prediction, soc_meas: f64, cov_meas: f64) -> Correction {
        let cov = if cov_meas > 0.0 { cov_meas } else { f64::MIN_POSITIVE };
        let gain = if pred.p_p > 0.0 {
            pred.p_p / (pred.p_p + cov)
        } else {
            0.0
        };
        let raw = pred.soc_cc + gain * (soc_meas - pred.soc_cc);
        self.soc_est = if raw.is_finite() {
            raw.clamp(0.0, 1.0)
        } else {
            pred.soc_cc
        };
        self.p_m = (1.0 - gain) * pred.p_p;
        Correction {
            soc_est: self.soc_est,
            p_m: self.p_m,
            gain,
        }
    }

    /// Accepts the prediction without a measurement (gain 0).
    pub fn coast(&mut self, pred: Prediction) -> Correction {
        self.soc_est = pred.soc_cc;
        self.p_m = pred.p_p;
        Correction {
            soc_est: self.soc_est,
            p_m: self.p_m,
            gain: 0.0,
        }
    }
}

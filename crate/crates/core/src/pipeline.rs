//! Per-sample estimator: filter, identify, invert, gate, fuse.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::condition_eval::{self, ConditionConfig};
use crate::error::{Result, SocError};
use crate::fusion::{FusionConfig, FusionState};
use crate::hysteresis::{HysteresisState, DEFAULT_RATE};
use crate::ocv_map::OcvMap;
use crate::param_estimation::{self, Estimate, RegressorRow, RegressorWindow};
use crate::signal_filter::{design_filter, FilterBank, FilterDesign};

/// Allowed deviation of a sample's spacing from `dt`, s.
pub const SPACING_TOLERANCE: f64 = 1e-6;

/// One measurement (positive current = discharge).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    pub t: f64,
    pub i: f64,
    #[serde(rename = "v")]
    pub v_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub t: f64,
    pub soc_est: f64,
    pub soc_ocv_h: f64,
    pub cov_soc: f64,
    pub ocv_est: f64,
    pub h: f64,
    pub gain: f64,
    pub warmup: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub filter: FilterDesign,
    pub window_len: usize,
    /// Re-estimate every `stride` samples once the window is full.
    pub stride: usize,
    pub hysteresis_rate: f64,
    pub initial_h: f64,
    pub condition: ConditionConfig,
    pub fusion: FusionConfig,
    #[serde(skip)]
    pub map: Option<Arc<OcvMap>>,
}

impl Default for PipelineConfig {
    /// Defaults with no map attached.
    fn default() -> Self {
        Self {
            filter: FilterDesign::default(),
            window_len: 100,
            stride: 1,
            hysteresis_rate: DEFAULT_RATE,
            initial_h: 0.0,
            condition: ConditionConfig::default(),
            fusion: FusionConfig::default(),
            map: None,
        }
    }
}

impl PipelineConfig {
    pub fn with_map(map: Arc<OcvMap>) -> Self {
        Self {
            map: Some(map),
            ..Self::default()
        }
    }
}

/// Last identification result kept between strided estimates.
#[derive(Debug, Clone, Copy)]
struct Measurement {
    ocv: f64,
    cov_ocv: f64,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    map: Arc<OcvMap>,
    condition: ConditionConfig,
    stride: usize,
    dt: f64,
    v_bank: FilterBank,
    i_bank: FilterBank,
    window: RegressorWindow,
    hyst: HysteresisState,
    fusion: FusionState,
    last: Option<TelemetrySample>,
    since_estimate: usize,
    measurement: Option<Measurement>,
    estimate: Option<Estimate>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        let map = config
            .map
            .clone()
            .ok_or(SocError::config("map", "no OCV map configured"))?;
        config.condition.validate()?;
        if config.stride == 0 {
            return Err(SocError::config("stride", "must be at least 1"));
        }
        let dt = config.filter.ts;
        Ok(Self {
            condition: config.condition,
            stride: config.stride,
            v_bank: design_filter(config.filter)?,
            i_bank: design_filter(config.filter)?,
            window: RegressorWindow::new(config.window_len)?,
            hyst: HysteresisState::new(config.initial_h, config.hysteresis_rate)?,
            fusion: config.fusion.build(dt)?,
            dt,
            map,
            last: None,
            since_estimate: 0,
            measurement: None,
            estimate: None,
        })
    }

    pub fn window(&self) -> &RegressorWindow {
        &self.window
    }

    pub fn fusion(&self) -> &FusionState {
        &self.fusion
    }

    pub fn hysteresis(&self) -> &HysteresisState {
        &self.hyst
    }

    /// Most recent least-squares fit, if the window has filled.
    pub fn last_estimate(&self) -> Option<&Estimate> {
        self.estimate.as_ref()
    }

    fn check(&self, s: &TelemetrySample) -> Result<()> {
        if !(s.t.is_finite() && s.i.is_finite() && s.v_t.is_finite()) {
            return Err(SocError::NonFinite("telemetry sample"));
        }
        if let Some(prev) = &self.last {
            let expected = prev.t + self.dt;
            if (s.t - expected).abs() > SPACING_TOLERANCE {
                return Err(SocError::OutOfOrder { expected, got: s.t });
            }
        }
        Ok(())
    }

    /// Consumes one sample. A rejected sample leaves the pipeline untouched.
    pub fn step(&mut self, s: &TelemetrySample) -> Result<EstimateRecord> {
        self.check(s)?;
        let i_prev = match &self.last {
            Some(prev) => prev.i,
            None => {
                self.v_bank.reset(s.v_t);
                self.i_bank.reset(s.i);
                0.0
            }
        };
        let v = self.v_bank.step(s.v_t)?;
        let i = self.i_bank.step(s.i)?;
        self.window.push_row(RegressorRow::from_filtered(&v, &i)?);

        if self.window.is_full() && (self.measurement.is_none() || self.since_estimate + 1 >= self.stride) {
            let (gram, rhs) = self.window.normal_equations();
            let est = param_estimation::solve_normal_equations(&gram, &rhs)?;
            let f = condition_eval::fisher_from_gram(&gram, &self.condition);
            self.measurement = Some(Measurement {
                ocv: est.theta.ocv,
                cov_ocv: condition_eval::cov_ocv(&f)?,
            });
            self.estimate = Some(est);
            self.since_estimate = 0;
        } else {
            self.since_estimate += 1;
        }

        let h = if self.last.is_some() {
            self.hyst.update(i_prev)
        } else {
            self.hyst.h()
        };
        let soc_prev = self.fusion.soc_est();
        let pred = self.fusion.predict(i_prev);
        let record = match (self.window.is_full(), self.measurement) {
            (true, Some(m)) => {
                let soc_meas = self.map.invert_soc(m.ocv, h).value;
                let report = condition_eval::cov_soc(m.cov_ocv, h, soc_prev, &self.map, &self.condition);
                let c = self.fusion.update(pred, soc_meas, report.cov_soc);
                EstimateRecord {
                    t: s.t,
                    soc_est: c.soc_est,
                    soc_ocv_h: soc_meas,
                    cov_soc: report.cov_soc,
                    ocv_est: m.ocv,
                    h,
                    gain: c.gain,
                    warmup: false,
                }
            }
            _ => {
                let c = self.fusion.coast(pred);
                EstimateRecord {
                    t: s.t,
                    soc_est: c.soc_est,
                    soc_ocv_h: self.map.invert_soc(v.value, h).value,
                    cov_soc: self.condition.cov_ceiling,
                    ocv_est: v.value,
                    h,
                    gain: 0.0,
                    warmup: true,
                }
            }
        };
        self.last = Some(*s);
        Ok(record)
    }

    /// Runs a whole stream, stopping at the first rejected sample.
    pub fn run(&mut self, samples: &[TelemetrySample]) -> Result<Vec<EstimateRecord>> {
        samples.iter().map(|s| self.step(s)).collect()
    }
}

//! Recursive hysteresis factor.
//!
//! `H(k) = w·H(k−1) + (1 − w)·sign(−I(k−1))` with `w = exp(−|I(k−1)/C|)`.
//! Positive current is discharge, so sustained discharge drives `H → −1` and
//! sustained charge drives `H → +1`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SocError};

/// Default rate constant `C` in amperes, applied per sample at 1 Hz.
pub const DEFAULT_RATE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HysteresisState {
    h: f64,
    rate: f64,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl HysteresisState {
    pub fn new(h0: f64, rate: f64) -> Result<Self> {
        if !rate.is_finite() || rate <= 0.0 {
            return Err(SocError::config(
                "hysteresis_rate",
                format!("must be finite and > 0, got {rate}"),
            ));
        }
        if !(-1.0..=1.0).contains(&h0) {
            return Err(SocError::config("initial_h", format!("must lie in [-1, 1], got {h0}")));
        }
        Ok(Self { h: h0, rate })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// One recursion step driven by the previous sample's current.
    pub fn update(&mut self, i_prev: f64) -> f64 {
        if !i_prev.is_finite() {
            return self.h;
        }
        let w = (-(i_prev / self.rate).abs()).exp();
        self.h = (w * self.h + (1.0 - w) * sign(-i_prev)).clamp(-1.0, 1.0);
        self.h
    }
}

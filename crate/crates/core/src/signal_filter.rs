//! Second-order state-variable filter bank.
//!
//! Each raw stream (terminal voltage, current) passes through three discrete
//! realizations sharing the denominator of `λ₀ / (s² + λ₁s + λ₀)`:
//! `G₀ = λ₀/D(s)`, `G₁ = λ₀s/D(s)` and `G₂ = λ₀s²/D(s)`. They are discretized
//! with the substitution `s ← (z − 1)/(T_s z)`, which keeps the relations
//! `G₁ = G₀·∇` and `G₂ = G₀·∇²` exact, where `∇` is the backward difference
//! divided by `T_s`.

use nalgebra::{Matrix2, RowVector2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SocError};

/// Continuous prototype coefficients and sampling period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterDesign {
    /// λ₀ in 1/s².
    pub lambda0: f64,
    /// λ₁ in 1/s.
    pub lambda1: f64,
    /// Sample period in seconds.
    pub ts: f64,
}

impl Default for FilterDesign {
    /// Critically damped at ω = 0.5 rad/s, sampled at 1 Hz.
    fn default() -> Self {
        Self::critically_damped(0.5, 1.0)
    }
}

impl FilterDesign {
    pub fn new(lambda0: f64, lambda1: f64, ts: f64) -> Result<Self> {
        let design = Self { lambda0, lambda1, ts };
        design.validate()?;
        Ok(design)
    }

    /// `λ₁ = 2ω`, `λ₀ = ω²` (double pole at `−ω`).
    pub fn critically_damped(omega: f64, ts: f64) -> Self {
        Self {
            lambda0: omega * omega,
            lambda1: 2.0 * omega,
            ts,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("filter.lambda0", self.lambda0),
            ("filter.lambda1", self.lambda1),
            ("filter.ts", self.ts),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(SocError::config(field, format!("must be finite and > 0, got {value}")));
            }
        }
        Ok(())
    }

    /// Normalized denominator `[1, a1, a2]` in powers of `z⁻¹`.
    fn denominator(&self) -> [f64; 3] {
        let (l0, l1, ts) = (self.lambda0, self.lambda1, self.ts);
        let a0 = 1.0 + l1 * ts + l0 * ts * ts;
        [1.0, -(2.0 + l1 * ts) / a0, 1.0 / a0]
    }

    /// Numerators of `G₀, G₁, G₂` in powers of `z⁻¹`, scaled by the same `a0`.
    fn numerators(&self) -> [[f64; 3]; 3] {
        let (l0, l1, ts) = (self.lambda0, self.lambda1, self.ts);
        let a0 = 1.0 + l1 * ts + l0 * ts * ts;
        [
            [l0 * ts * ts / a0, 0.0, 0.0],
            [l0 * ts / a0, -l0 * ts / a0, 0.0],
            [l0 / a0, -2.0 * l0 / a0, l0 / a0],
        ]
    }
}

/// Second-order SISO system `x⁺ = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSiso {
    a: Matrix2<f64>,
    b: Vector2<f64>,
    c: RowVector2<f64>,
    d: f64,
    state: Vector2<f64>,
}

impl DiscreteSiso {
    /// Controllable canonical realization of
    /// `(n0 + n1 z⁻¹ + n2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`.
    pub fn from_transfer(num: [f64; 3], den: [f64; 3]) -> Self {
        let [_, a1, a2] = den;
        let [n0, n1, n2] = num;
        Self {
            a: Matrix2::new(-a1, -a2, 1.0, 0.0),
            b: Vector2::new(1.0, 0.0),
            c: RowVector2::new(n1 - a1 * n0, n2 - a2 * n0),
            d: n0,
            state: Vector2::zeros(),
        }
    }

    pub fn a(&self) -> &Matrix2<f64> {
        &self.a
    }

    pub fn b(&self) -> &Vector2<f64> {
        &self.b
    }

    pub fn c(&self) -> &RowVector2<f64> {
        &self.c
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn state(&self) -> &Vector2<f64> {
        &self.state
    }

    pub fn step(&mut self, u: f64) -> f64 {
        let y = (self.c * self.state)[0] + self.d * u;
        self.state = self.a * self.state + self.b * u;
        y
    }

    /// Output produced from the current state for input `u`, without advancing.
    pub fn peek(&self, u: f64) -> f64 {
        (self.c * self.state)[0] + self.d * u
    }

    /// Largest pole magnitude.
    pub fn spectral_radius(&self) -> f64 {
        // Poles are roots of z² − tr(A) z + det(A).
        let tr = self.a.trace();
        let det = self.a.determinant();
        let disc = tr * tr - 4.0 * det;
        if disc >= 0.0 {
            let s = disc.sqrt();
            ((tr + s) / 2.0).abs().max(((tr - s) / 2.0).abs())
        } else {
            det.sqrt()
        }
    }

    /// Transfer function evaluated at `z = 1`.
    pub fn dc_gain(&self) -> f64 {
        let steady = self.steady_state(1.0);
        (self.c * steady)[0] + self.d
    }

    /// Fixed point of the state recursion under a constant input.
    fn steady_state(&self, u: f64) -> Vector2<f64> {
        let m = Matrix2::identity() - self.a;
        // (I − A) is invertible whenever the realization is stable.
        m.try_inverse()
            .map(|inv| inv * self.b * u)
            .unwrap_or_else(Vector2::zeros)
    }

    pub fn reset_to(&mut self, steady_value: f64) {
        self.state = self.steady_state(steady_value);
    }
}

/// Filtered value with its first and second derivatives.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FilteredSample {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// Realizations of `G₀`, `G₁`, `G₂` for one input stream.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    design: FilterDesign,
    g0: DiscreteSiso,
    g1: DiscreteSiso,
    g2: DiscreteSiso,
}

pub fn design_filter(design: FilterDesign) -> Result<FilterBank> {
    design.validate()?;
    let den = design.denominator();
    let [n0, n1, n2] = design.numerators();
    Ok(FilterBank {
        design,
        g0: DiscreteSiso::from_transfer(n0, den),
        g1: DiscreteSiso::from_transfer(n1, den),
        g2: DiscreteSiso::from_transfer(n2, den),
    })
}

impl FilterBank {
    pub fn design(&self) -> &FilterDesign {
        &self.design
    }

    pub fn realizations(&self) -> [&DiscreteSiso; 3] {
        [&self.g0, &self.g1, &self.g2]
    }

    /// Advances all three realizations by one sample.
    pub fn step(&mut self, u: f64) -> Result<FilteredSample> {
        if !u.is_finite() {
            return Err(SocError::NonFinite("filter input"));
        }
        Ok(FilteredSample {
            value: self.g0.step(u),
            d1: self.g1.step(u),
            d2: self.g2.step(u),
        })
    }

    /// Places every realization at the fixed point for a constant input
    /// `steady_value`, so that stepping with that value yields `(steady_value, 0, 0)`.
    pub fn reset(&mut self, steady_value: f64) {
        self.g0.reset_to(steady_value);
        self.g1.reset_to(steady_value);
        self.g2.reset_to(steady_value);
    }
}

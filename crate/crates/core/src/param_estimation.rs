//! Moving-window batch least squares over the filtered linear-in-parameters
//! model `V̂_T = θ · [1, −Î″, −Î′, −Î, −V̂_T″, −V̂_T′]`.

use std::collections::VecDeque;

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SocError};
use crate::linalg;
use crate::signal_filter::FilteredSample;

pub const PARAM_COUNT: usize = 6;

/// Ridge added to the equilibrated normal matrix when it is numerically rank deficient.
pub const RIDGE_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressorRow {
    phi: [f64; PARAM_COUNT],
    target: f64,
}

impl RegressorRow {
    pub fn new(phi: [f64; PARAM_COUNT], target: f64) -> Result<Self> {
        if phi[0] != 1.0 {
            return Err(SocError::config(
                "regressor.phi[0]",
                format!("must be exactly 1, got {}", phi[0]),
            ));
        }
        if !target.is_finite() || phi.iter().any(|x| !x.is_finite()) {
            return Err(SocError::NonFinite("regressor row"));
        }
        Ok(Self { phi, target })
    }

    /// Row built from the filtered voltage and current at one instant.
    pub fn from_filtered(voltage: &FilteredSample, current: &FilteredSample) -> Result<Self> {
        Self::new(
            [1.0, -current.d2, -current.d1, -current.value, -voltage.d2, -voltage.d1],
            voltage.value,
        )
    }

    pub fn phi(&self) -> &[f64; PARAM_COUNT] {
        &self.phi
    }

    pub fn target(&self) -> f64 {
        self.target
    }
}

/// FIFO of the most recent `capacity` regressor rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorWindow {
    rows: VecDeque<RegressorRow>,
    capacity: usize,
}

impl RegressorWindow {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(SocError::config("window_len", "must be at least 1"));
        }
        Ok(Self {
            rows: VecDeque::with_capacity(capacity + 1),
            capacity,
        })
    }

    pub fn push_row(&mut self, row: RegressorRow) {
        if self.rows.len() == self.capacity {
            self.rows.pop_front();
        }
        self.rows.push_back(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_full(&self) -> bool {
        self.rows.len() == self.capacity
    }

    /// Rows in arrival order, oldest first.
    pub fn rows(&self) -> impl ExactSizeIterator<Item = &RegressorRow> + '_ {
        self.rows.iter()
    }

    pub fn clear(&mut self) {
        self.rows.clear();
    }

    pub(crate) fn ensure_full(&self) -> Result<()> {
        if self.is_full() {
            Ok(())
        } else {
            Err(SocError::NotReady {
                filled: self.rows.len(),
                capacity: self.capacity,
            })
        }
    }

    /// `(ΦᵀΦ, Φᵀy)` over the current contents.
    pub fn normal_equations(&self) -> (Matrix6<f64>, Vector6<f64>) {
        let mut gram = Matrix6::zeros();
        let mut rhs = Vector6::zeros();
        for row in &self.rows {
            let phi = Vector6::from_row_slice(&row.phi);
            gram.ger(1.0, &phi, &phi, 1.0);
            rhs.axpy(row.target, &phi, 1.0);
        }
        (gram, rhs)
    }

    /// Root-mean-square of `target − φ·θ` over the window.
    pub fn residual_rms(&self, theta: &ParameterVector) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        let t = theta.as_array();
        let sum: f64 = self
            .rows
            .iter()
            .map(|r| {
                let fit: f64 = r.phi.iter().zip(t.iter()).map(|(p, q)| p * q).sum();
                (r.target - fit).powi(2)
            })
            .sum();
        (sum / self.rows.len() as f64).sqrt()
    }
}

/// Fitted `[OCV, a, b, c, d, e]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    /// Open-circuit voltage, V.
    pub ocv: f64,
    /// `τ₁τ₂R₀`, Ω·s².
    pub a: f64,
    /// `R₀τ₁ + R₀τ₂ + R₁τ₂ + R₂τ₁`, Ω·s.
    pub b: f64,
    /// `R₀ + R₁ + R₂`, Ω.
    pub c: f64,
    /// `τ₁τ₂`, s².
    pub d: f64,
    /// `τ₁ + τ₂`, s.
    pub e: f64,
}

/// Diagnostic sign checks on a fitted parameter vector. Never enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plausibility {
    pub c_positive: bool,
    pub d_positive: bool,
    pub e_positive: bool,
    pub real_time_constants: bool,
}

impl Plausibility {
    pub fn all(&self) -> bool {
        self.c_positive && self.d_positive && self.e_positive && self.real_time_constants
    }
}

impl ParameterVector {
    pub fn from_array(v: [f64; PARAM_COUNT]) -> Self {
        let [ocv, a, b, c, d, e] = v;
        Self { ocv, a, b, c, d, e }
    }

    pub fn as_array(&self) -> [f64; PARAM_COUNT] {
        [self.ocv, self.a, self.b, self.c, self.d, self.e]
    }

    /// Coefficients implied by a two-RC circuit.
    pub fn from_circuit(r0: f64, r1: f64, c1: f64, r2: f64, c2: f64, ocv: f64) -> Self {
        let (t1, t2) = (r1 * c1, r2 * c2);
        Self {
            ocv,
            a: t1 * t2 * r0,
            b: r0 * t1 + r0 * t2 + r1 * t2 + r2 * t1,
            c: r0 + r1 + r2,
            d: t1 * t2,
            e: t1 + t2,
        }
    }

    pub fn plausibility(&self) -> Plausibility {
        Plausibility {
            c_positive: self.c > 0.0,
            d_positive: self.d > 0.0,
            e_positive: self.e > 0.0,
            real_time_constants: self.e * self.e >= 4.0 * self.d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub theta: ParameterVector,
    /// Condition number of `ΦᵀΦ`.
    pub condition: f64,
    /// True when the window was rank deficient and the ridge was applied.
    pub ridged: bool,
}

/// Least-squares fit over a full window.
///
/// The normal equations are solved after symmetric diagonal equilibration;
/// when the equilibrated matrix has a pivot below [`RIDGE_EPSILON`] (a rank
/// deficient window, e.g. constant signals) the ridge `εI` is added instead of
/// failing.
pub fn estimate(window: &RegressorWindow) -> Result<Estimate> {
    window.ensure_full()?;
    let (gram, rhs) = window.normal_equations();
    solve_normal_equations(&gram, &rhs)
}

pub(crate) fn solve_normal_equations(gram: &Matrix6<f64>, rhs: &Vector6<f64>) -> Result<Estimate> {
    let factor = linalg::Equilibrated::factor_with_ridge(gram, RIDGE_EPSILON)
        .ok_or(SocError::Factorization("regularized normal equations"))?;
    let x = factor.solve(rhs);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SocError::NonFinite("parameter estimate"));
    }
    Ok(Estimate {
        theta: ParameterVector::from_array([x[0], x[1], x[2], x[3], x[4], x[5]]),
        condition: linalg::condition_number(gram),
        ridged: factor.ridged(),
    })
}

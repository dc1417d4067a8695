//! Error metrics of an SOC trajectory against truth.

use serde::{Deserialize, Serialize};

/// Error level that counts as converged, fraction of SOC.
pub const CONVERGENCE_THRESHOLD: f64 = 0.10;
/// How long the error has to stay below the threshold, s.
pub const CONVERGENCE_HOLD: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorMetrics {
    pub estimator: String,
    pub rmse_overall: f64,
    /// `None` when the estimator never converged.
    pub rmse_post_convergence: Option<f64>,
    pub max_abs_error_post_convergence: Option<f64>,
    /// Start of the first run of `CONVERGENCE_HOLD` seconds with
    /// `|error| < CONVERGENCE_THRESHOLD`, relative to the first sample.
    pub convergence_time: Option<f64>,
}

fn rms(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

/// Index where the error first stays below the threshold for the hold time.
pub fn convergence_index(errors: &[f64], dt: f64) -> Option<usize> {
    let need = (CONVERGENCE_HOLD / dt).ceil().max(1.0) as usize;
    let mut run = 0;
    for (k, e) in errors.iter().enumerate() {
        if e.abs() < CONVERGENCE_THRESHOLD {
            run += 1;
            if run == need {
                return Some(k + 1 - need);
            }
        } else {
            run = 0;
        }
    }
    None
}

pub fn evaluate(name: &str, estimate: &[f64], truth: &[f64], dt: f64) -> EstimatorMetrics {
    let n = estimate.len().min(truth.len());
    let errors: Vec<f64> = estimate[..n].iter().zip(&truth[..n]).map(|(e, t)| e - t).collect();
    let conv = convergence_index(&errors, dt);
    let post = conv.map(|k| &errors[k..]);
    EstimatorMetrics {
        estimator: name.to_string(),
        rmse_overall: rms(&errors),
        rmse_post_convergence: post.map(rms),
        max_abs_error_post_convergence: post.map(|p| p.iter().fold(0.0, |m, e| f64::max(m, e.abs()))),
        convergence_time: conv.map(|k| k as f64 * dt),
    }
}

#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use soc_kit_core::cell_sim::{self, DriveSpec, PlantParams, ProfileSpec, RcParams, SimTrace};
use soc_kit_core::param_estimation::{RegressorRow, RegressorWindow};
use soc_kit_core::signal_filter::{design_filter, FilterDesign};
use soc_kit_core::{OcvMap, TelemetrySample};

pub const FLAT_OCV: f64 = 3.3;

/// Map whose OCV is `FLAT_OCV` up to a 1 nV rise across the SOC range.
pub fn flat_map() -> Arc<OcvMap> {
    Arc::new(OcvMap::from_fn(11, 3, |s, _| FLAT_OCV + 1e-9 * s))
}

pub fn flat_plant() -> PlantParams {
    PlantParams::with_map(flat_map())
}

pub fn drive_profile(n: usize, seed: u64) -> Vec<f64> {
    cell_sim::gen_profile(&ProfileSpec::Drive(DriveSpec::default()), n as f64, 1.0, seed).unwrap()
}

pub fn drive_trace(n: usize, seed: u64) -> SimTrace {
    cell_sim::simulate(&drive_profile(n, seed), &flat_plant(), 0.5, 0.0, 1.0).unwrap()
}

pub fn telemetry(trace: &SimTrace, bias: f64) -> Vec<TelemetrySample> {
    trace
        .samples
        .iter()
        .map(|s| TelemetrySample {
            t: s.t,
            i: s.i_true + bias,
            v_t: s.v_true,
        })
        .collect()
}

/// Filters both streams with warm starts and returns one regressor row per sample.
pub fn regressor_rows(samples: &[TelemetrySample]) -> Vec<RegressorRow> {
    let design = FilterDesign::default();
    let mut fv = design_filter(design).unwrap();
    let mut fi = design_filter(design).unwrap();
    fv.reset(samples[0].v_t);
    fi.reset(samples[0].i);
    samples
        .iter()
        .map(|s| {
            let v = fv.step(s.v_t).unwrap();
            let i = fi.step(s.i).unwrap();
            RegressorRow::from_filtered(&v, &i).unwrap()
        })
        .collect()
}

/// Window holding the last `len` rows.
pub fn window_of(rows: &[RegressorRow], len: usize) -> RegressorWindow {
    let mut w = RegressorWindow::new(len).unwrap();
    for r in &rows[rows.len() - len..] {
        w.push_row(*r);
    }
    w
}

/// Plain least squares through an SVD of the column-scaled regressor.
/// Shares nothing with the crate's solver.
pub fn oracle_lstsq(rows: &[RegressorRow]) -> [f64; 6] {
    let scale: Vec<f64> = (0..6)
        .map(|c| {
            rows.iter()
                .map(|r| r.phi()[c].powi(2))
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE)
        })
        .collect();
    let phi = DMatrix::from_fn(rows.len(), 6, |r, c| rows[r].phi()[c] / scale[c]);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.target()));
    let x = phi.svd(true, true).solve(&y, 1e-13).expect("svd solve");
    std::array::from_fn(|c| x[c] / scale[c])
}

pub fn nominal_rc() -> RcParams {
    RcParams::default()
}

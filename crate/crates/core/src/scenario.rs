//! Stress-test scenarios: plant → measurement errors → {proposed pipeline,
//! UKF, Coulomb counting} → metrics and pass/fail checks.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cell_sim::{self, BoundedSpec, ErrorSpec, PlantParams, ProfileSpec, RcParams, SegmentSpec, SimTrace};
use crate::error::{Result, SocError};
use crate::metrics::{self, EstimatorMetrics};
use crate::ocv_map::OcvMap;
use crate::pipeline::{EstimateRecord, Pipeline, PipelineConfig, TelemetrySample};
use crate::ukf::{RcTable, Ukf, UkfConfig, UkfRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    Ideal,
    FlatZone,
    CurrentBias,
    Quantization,
    MapMismatch,
    ConstantSegment,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 6] = [
        ScenarioName::Ideal,
        ScenarioName::FlatZone,
        ScenarioName::CurrentBias,
        ScenarioName::Quantization,
        ScenarioName::MapMismatch,
        ScenarioName::ConstantSegment,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioName::Ideal => "ideal",
            ScenarioName::FlatZone => "flat_zone",
            ScenarioName::CurrentBias => "current_bias",
            ScenarioName::Quantization => "quantization",
            ScenarioName::MapMismatch => "map_mismatch",
            ScenarioName::ConstantSegment => "constant_segment",
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = SocError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| SocError::Unknown {
                what: "scenario",
                name: s.to_string(),
            })
    }
}

/// Plant side of a scenario. The map perturbation and resistance scale are
/// applied to the plant only; estimators keep the nominal map and RC values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConfig {
    pub rc: RcParams,
    pub capacity: f64,
    pub hysteresis_rate: f64,
    pub resistance_scale: f64,
    /// OCV offset of the plant's map, V.
    pub map_offset: f64,
    /// SOC-axis warp of the plant's map.
    pub map_warp: f64,
    pub initial_soc: f64,
    pub initial_h: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            rc: RcParams::default(),
            capacity: 4320.0,
            hysteresis_rate: crate::hysteresis::DEFAULT_RATE,
            resistance_scale: 1.0,
            map_offset: 0.0,
            map_warp: 0.0,
            initial_soc: 1.0,
            initial_h: 0.0,
        }
    }
}

/// Acceptance thresholds; unused ones stay `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Thresholds {
    /// Ceiling on the proposed post-convergence RMSE.
    pub max_post_rmse: Option<f64>,
    /// The UKF must take at least this many times longer to converge.
    pub min_convergence_speedup: Option<f64>,
    /// Proposed RMSE times this must stay below the UKF RMSE.
    pub min_ukf_ratio: Option<f64>,
    /// Proposed RMSE times this must stay below the Coulomb-counting RMSE.
    pub min_coulomb_ratio: Option<f64>,
    /// Ceiling on the median fusion gain during the constant segment.
    pub max_segment_gain: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub name: ScenarioName,
    pub seed: u64,
    pub duration: f64,
    pub dt: f64,
    pub profile: ProfileSpec,
    pub errors: ErrorSpec,
    pub plant: PlantConfig,
    /// `"synthetic"` or a map CSV path.
    pub map: String,
    /// Initial SOC guess given to every estimator.
    pub initial_guess: f64,
    pub pipeline: PipelineConfig,
    pub ukf: UkfConfig,
    /// Optional RC table CSV for the UKF; sampled from the nominal plant otherwise.
    pub rc_table: Option<PathBuf>,
    pub thresholds: Thresholds,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::preset(ScenarioName::Ideal)
    }
}

/// Voltage noise used by every preset. The bound only covers sensor noise, and
/// at 2 mV the flat-zone measurements (biased by window lag) were trusted enough
/// to drag the estimate by about 2 % on some seeds.
const SCENARIO_SIGMA_VT: f64 = 5e-3;

fn scenario_pipeline() -> PipelineConfig {
    let mut p = PipelineConfig::default();
    p.condition.sigma_vt = SCENARIO_SIGMA_VT;
    p
}

fn flat_band_profile() -> ProfileSpec {
    ProfileSpec::Bounded(BoundedSpec {
        soc0: 0.2,
        lo: 0.2,
        hi: 0.8,
        ..BoundedSpec::default()
    })
}

impl Scenario {
    pub fn preset(name: ScenarioName) -> Self {
        let base = Self {
            name,
            seed: 1,
            duration: 16_416.0,
            dt: 1.0,
            profile: ProfileSpec::Bounded(BoundedSpec::default()),
            errors: ErrorSpec::default(),
            plant: PlantConfig::default(),
            map: "synthetic".into(),
            initial_guess: 0.5,
            pipeline: scenario_pipeline(),
            ukf: UkfConfig::default(),
            rc_table: None,
            thresholds: Thresholds::default(),
        };
        match name {
            // Seeds 1..=8 with the frozen presets: post-convergence RMSE 0.43 to 0.79 %.
            ScenarioName::Ideal => Self {
                thresholds: Thresholds {
                    max_post_rmse: Some(0.01),
                    ..Default::default()
                },
                ..base
            },
            // Seeds 1..=8: speedup 45x to 121x.
            ScenarioName::FlatZone => Self {
                duration: 40_000.0,
                profile: flat_band_profile(),
                plant: PlantConfig {
                    initial_soc: 0.2,
                    ..PlantConfig::default()
                },
                initial_guess: 1.0,
                thresholds: Thresholds {
                    min_convergence_speedup: Some(3.0),
                    ..Default::default()
                },
                ..base
            },
            // Seeds 1..=8: UKF ratio 3.17 to 3.68, Coulomb ratio 5.72 to 7.19.
            ScenarioName::CurrentBias => Self {
                duration: 40_000.0,
                profile: flat_band_profile(),
                errors: ErrorSpec {
                    current_bias: -0.05,
                    ..ErrorSpec::default()
                },
                plant: PlantConfig {
                    initial_soc: 0.2,
                    ..PlantConfig::default()
                },
                initial_guess: 1.0,
                thresholds: Thresholds {
                    min_ukf_ratio: Some(2.0),
                    min_coulomb_ratio: Some(5.0),
                    ..Default::default()
                },
                ..base
            },
            // Seeds 1..=8: post-convergence RMSE 0.59 to 1.62 %. The 3 % bound
            // leaves headroom for other seeds.
            ScenarioName::Quantization => Self {
                errors: ErrorSpec {
                    adc_bits: Some(10),
                    adc_vmax: 5.0,
                    ..ErrorSpec::default()
                },
                thresholds: Thresholds {
                    max_post_rmse: Some(0.03),
                    ..Default::default()
                },
                ..base
            },
            // Seeds 1..=8: UKF ratio 2.49 to 2.76.
            ScenarioName::MapMismatch => Self {
                duration: 40_000.0,
                profile: flat_band_profile(),
                plant: PlantConfig {
                    initial_soc: 0.2,
                    map_offset: 0.008,
                    map_warp: 0.015,
                    resistance_scale: 2.0,
                    ..PlantConfig::default()
                },
                initial_guess: 1.0,
                thresholds: Thresholds {
                    min_ukf_ratio: Some(2.0),
                    ..Default::default()
                },
                ..base
            },
            // Seeds 1..=8: median segment gain of order 1e-11.
            ScenarioName::ConstantSegment => Self {
                duration: 10_800.0,
                profile: ProfileSpec::Segment(SegmentSpec {
                    base: Box::new(ProfileSpec::Bounded(BoundedSpec {
                        soc0: 0.8,
                        lo: 0.2,
                        hi: 0.8,
                        ..BoundedSpec::default()
                    })),
                    start: None,
                    length: 900.0,
                    amplitude: -1.0,
                }),
                plant: PlantConfig {
                    initial_soc: 0.8,
                    ..PlantConfig::default()
                },
                initial_guess: 1.0,
                thresholds: Thresholds {
                    max_segment_gain: Some(1e-3),
                    ..Default::default()
                },
                ..base
            },
        }
    }

    /// Preset for `name` with a JSON object deep-merged over it.
    pub fn from_json_overrides(name: ScenarioName, overrides: &serde_json::Value, origin: &Path) -> Result<Self> {
        let mut value = serde_json::to_value(Self::preset(name)).expect("scenario serializes");
        merge(&mut value, overrides);
        let mut s: Self = serde_json::from_value(value).map_err(|e| SocError::Json {
            path: origin.to_path_buf(),
            source: e,
        })?;
        s.name = name;
        Ok(s)
    }

    pub fn load_map(&self) -> Result<Arc<OcvMap>> {
        let map = if self.map == "synthetic" {
            OcvMap::synthetic()
        } else {
            OcvMap::load(&self.map)?
        };
        Ok(Arc::new(map))
    }

    /// Samples covered by the constant segment, if the profile has one.
    pub fn segment_range(&self) -> Option<std::ops::Range<usize>> {
        match &self.profile {
            ProfileSpec::Segment(seg) => {
                let n = (self.duration / self.dt).round() as usize;
                Some(cell_sim::segment_range(seg, n, self.dt))
            }
            _ => None,
        }
    }
}

fn merge(base: &mut serde_json::Value, over: &serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn below(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value < threshold,
        }
    }

    fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value >= threshold,
        }
    }
}

/// Deterministic part of a scenario result; written to `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: ScenarioName,
    pub seed: u64,
    pub steps: usize,
    pub truncated: bool,
    pub quantizer_saturations: usize,
    pub estimators: Vec<EstimatorMetrics>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl ScenarioReport {
    pub fn estimator(&self, name: &str) -> Option<&EstimatorMetrics> {
        self.estimators.iter().find(|m| m.estimator == name)
    }
}

/// Wall-clock cost per sample, s. Kept out of `metrics.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub proposed: f64,
    pub ukf: f64,
    pub coulomb: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoulombRecord {
    pub t: f64,
    pub soc_est: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub scenario: Scenario,
    pub trace: SimTrace,
    pub telemetry: Vec<TelemetrySample>,
    pub proposed: Vec<EstimateRecord>,
    pub ukf: Vec<UkfRecord>,
    pub coulomb: Vec<CoulombRecord>,
    pub report: ScenarioReport,
    pub timing: Timing,
}

/// Open-loop Coulomb counting from the initial guess.
pub fn coulomb_count(samples: &[TelemetrySample], guess: f64, capacity: f64, dt: f64) -> Vec<CoulombRecord> {
    let mut soc = guess;
    let mut prev = 0.0;
    samples
        .iter()
        .map(|s| {
            soc = (soc - prev * dt / capacity).clamp(0.0, 1.0);
            prev = s.i;
            CoulombRecord { t: s.t, soc_est: soc }
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

fn checks(
    s: &Scenario,
    proposed: &[EstimateRecord],
    prop: &EstimatorMetrics,
    ukf: &EstimatorMetrics,
    cc: &EstimatorMetrics,
) -> Vec<Check> {
    let th = &s.thresholds;
    let mut out = Vec::new();
    if let Some(max) = th.max_post_rmse {
        out.push(Check::below(
            "proposed_post_convergence_rmse",
            prop.rmse_post_convergence.unwrap_or(f64::INFINITY),
            max,
        ));
    }
    if let Some(min) = th.min_convergence_speedup {
        let p = prop.convergence_time.unwrap_or(f64::INFINITY);
        let u = ukf.convergence_time.unwrap_or(f64::INFINITY);
        // A proposed time of zero counts as one sample.
        let speedup = if p.is_finite() { u / p.max(s.dt) } else { 0.0 };
        out.push(Check::at_least("ukf_over_proposed_convergence_time", speedup, min));
    }
    if let Some(min) = th.min_ukf_ratio {
        out.push(Check::at_least(
            "ukf_over_proposed_rmse",
            ratio(ukf.rmse_overall, prop.rmse_overall),
            min,
        ));
    }
    if let Some(min) = th.min_coulomb_ratio {
        out.push(Check::at_least(
            "coulomb_over_proposed_rmse",
            ratio(cc.rmse_overall, prop.rmse_overall),
            min,
        ));
    }
    if let (Some(max), Some(range)) = (th.max_segment_gain, s.segment_range()) {
        let end = range.end.min(proposed.len());
        let gains = proposed[range.start.min(end)..end].iter().map(|r| r.gain).collect();
        out.push(Check::below("median_gain_in_segment", median(gains), max));
    }
    out
}

fn validate(s: &Scenario) -> Result<()> {
    if !(0.0..=1.0).contains(&s.initial_guess) {
        return Err(SocError::config(
            "initial_guess",
            format!("must lie in [0, 1], got {}", s.initial_guess),
        ));
    }
    if (s.pipeline.filter.ts - s.dt).abs() > 1e-12 {
        return Err(SocError::config("pipeline.filter.ts", "must equal the scenario dt"));
    }
    if !s.plant.resistance_scale.is_finite() || s.plant.resistance_scale <= 0.0 {
        return Err(SocError::config("plant.resistance_scale", "must be finite and > 0"));
    }
    Ok(())
}

/// Runs every estimator over one seeded telemetry stream.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioRun> {
    validate(s)?;
    let map = s.load_map()?;
    let plant_map = if s.plant.map_offset != 0.0 || s.plant.map_warp != 0.0 {
        Arc::new(map.perturbed(s.plant.map_offset, s.plant.map_warp)?)
    } else {
        Arc::clone(&map)
    };
    let plant = PlantParams {
        rc: s.plant.rc.scaled_resistance(s.plant.resistance_scale),
        capacity: s.plant.capacity,
        hysteresis_rate: s.plant.hysteresis_rate,
        map: plant_map,
    };
    let profile = cell_sim::gen_profile(&s.profile, s.duration, s.dt, s.seed)?;
    let trace = cell_sim::simulate(&profile, &plant, s.plant.initial_soc, s.plant.initial_h, s.dt)?;
    let telemetry = cell_sim::apply_errors(&trace, &s.errors, s.seed)?;
    let samples = telemetry.samples;

    let mut pcfg = s.pipeline.clone();
    pcfg.map = Some(Arc::clone(&map));
    pcfg.fusion.initial_soc = s.initial_guess;
    let mut pipeline = Pipeline::new(pcfg)?;
    let start = Instant::now();
    let proposed = pipeline.run(&samples)?;
    let t_prop = start.elapsed().as_secs_f64();

    let table = match &s.rc_table {
        Some(p) => RcTable::load(p)?,
        None => RcTable::sampled(s.plant.rc, 0.05)?,
    };
    let ucfg = UkfConfig {
        initial_soc: s.initial_guess,
        ..s.ukf
    };
    let mut ukf = Ukf::new(&ucfg, table, &map, s.dt)?;
    let start = Instant::now();
    let ukf_records: Vec<UkfRecord> = samples.iter().map(|x| ukf.step(x)).collect();
    let t_ukf = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let coulomb = coulomb_count(&samples, s.initial_guess, s.pipeline.fusion.capacity, s.dt);
    let t_cc = start.elapsed().as_secs_f64();

    let truth: Vec<f64> = trace.samples.iter().map(|x| x.soc_true).collect();
    let collect = |v: &mut dyn Iterator<Item = f64>| v.collect::<Vec<_>>();
    let m_prop = metrics::evaluate(
        "proposed",
        &collect(&mut proposed.iter().map(|r| r.soc_est)),
        &truth,
        s.dt,
    );
    let m_ukf = metrics::evaluate(
        "ukf",
        &collect(&mut ukf_records.iter().map(|r| r.soc_est)),
        &truth,
        s.dt,
    );
    let m_cc = metrics::evaluate(
        "coulomb",
        &collect(&mut coulomb.iter().map(|r| r.soc_est)),
        &truth,
        s.dt,
    );
    let checks = checks(s, &proposed, &m_prop, &m_ukf, &m_cc);
    let n = samples.len().max(1) as f64;
    let report = ScenarioReport {
        scenario: s.name,
        seed: s.seed,
        steps: samples.len(),
        truncated: trace.truncated,
        quantizer_saturations: telemetry.saturated,
        passed: checks.iter().all(|c| c.passed) && !trace.truncated,
        estimators: vec![m_prop, m_ukf, m_cc],
        checks,
    };
    Ok(ScenarioRun {
        scenario: s.clone(),
        trace,
        telemetry: samples,
        proposed,
        ukf: ukf_records,
        coulomb,
        report,
        timing: Timing {
            proposed: t_prop / n,
            ukf: t_ukf / n,
            coulomb: t_cc / n,
        },
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| SocError::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| SocError::csv(path, e))?;
    }
    w.flush().map_err(|e| SocError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| SocError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| SocError::io(path, e))
}

impl ScenarioRun {
    /// Writes traces, `metrics.json`, `timing.json` and `summary.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| SocError::io(dir, e))?;
        cell_sim::write_trace(dir.join("truth.csv"), &self.trace)?;
        cell_sim::write_telemetry(dir.join("telemetry.csv"), &self.telemetry)?;
        write_csv(&dir.join("proposed.csv"), &self.proposed)?;
        write_csv(&dir.join("ukf.csv"), &self.ukf)?;
        write_csv(&dir.join("coulomb.csv"), &self.coulomb)?;
        write_json(&dir.join("scenario.json"), &self.scenario)?;
        write_json(&dir.join("metrics.json"), &self.report)?;
        write_json(&dir.join("timing.json"), &self.timing)?;
        let path = dir.join("summary.txt");
        std::fs::write(&path, self.summary()).map_err(|e| SocError::io(&path, e))
    }

    pub fn summary(&self) -> String {
        let r = &self.report;
        let mut out = format!("scenario {} (seed {}, {} steps)\n", r.scenario, r.seed, r.steps);
        out.push_str(&crate::report::table(std::slice::from_ref(r)));
        for c in &r.checks {
            out.push_str(&format!(
                "{} {}: {:.6} (threshold {})\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.threshold
            ));
        }
        if r.truncated {
            out.push_str("FAIL plant trace truncated: profile left the SOC range\n");
        }
        out
    }
}

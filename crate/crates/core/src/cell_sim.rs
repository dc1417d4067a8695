//! Ground-truth cell: two RC pairs, hysteresis and a map OCV, plus the
//! measurement errors injected on top of it and the current profiles that
//! drive it.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SocError};
use crate::hysteresis::HysteresisState;
use crate::ocv_map::OcvMap;
use crate::pipeline::TelemetrySample;

/// Resistances in Ω, capacitances in F.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcParams {
    pub r0: f64,
    pub r1: f64,
    pub c1: f64,
    pub r2: f64,
    pub c2: f64,
}

impl Default for RcParams {
    fn default() -> Self {
        Self {
            r0: 0.05,
            r1: 0.03,
            c1: 1000.0,
            r2: 0.02,
            c2: 5000.0,
        }
    }
}

impl RcParams {
    pub fn is_positive(&self) -> bool {
        [self.r0, self.r1, self.c1, self.r2, self.c2]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
    }

    pub fn tau1(&self) -> f64 {
        self.r1 * self.c1
    }

    pub fn tau2(&self) -> f64 {
        self.r2 * self.c2
    }

    /// Resistances multiplied by `k`, time constants kept.
    pub fn scaled_resistance(&self, k: f64) -> Self {
        Self {
            r0: self.r0 * k,
            r1: self.r1 * k,
            c1: self.c1 / k,
            r2: self.r2 * k,
            c2: self.c2 / k,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantParams {
    pub rc: RcParams,
    /// A·s.
    pub capacity: f64,
    /// Hysteresis rate constant, A.
    pub hysteresis_rate: f64,
    pub map: Arc<OcvMap>,
}

impl PlantParams {
    /// Default 1.2 Ah cell on the given map.
    pub fn with_map(map: Arc<OcvMap>) -> Self {
        Self {
            rc: RcParams::default(),
            capacity: 4320.0,
            hysteresis_rate: crate::hysteresis::DEFAULT_RATE,
            map,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rc.is_positive() {
            return Err(SocError::config("plant.rc", "all RC entries must be finite and > 0"));
        }
        if !self.capacity.is_finite() || self.capacity <= 0.0 {
            return Err(SocError::config(
                "plant.capacity",
                format!("must be finite and > 0, got {}", self.capacity),
            ));
        }
        HysteresisState::new(0.0, self.hysteresis_rate).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub i_true: f64,
    pub v_true: f64,
    pub soc_true: f64,
    pub h_true: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub samples: Vec<TraceSample>,
    /// SOC after the last sample's current has been applied.
    pub final_soc: f64,
    /// The profile would have pushed SOC outside `[0, 1]`; the trace stops
    /// at the last in-range sample.
    pub truncated: bool,
}

const SOC_SLACK: f64 = 1e-9;

/// Forward simulation. SOC, RC voltages and H at sample `k` depend on the
/// currents up to `k − 1`; the terminal voltage adds the ohmic drop of
/// `I(k)`.
pub fn simulate(profile: &[f64], params: &PlantParams, soc0: f64, h0: f64, dt: f64) -> Result<SimTrace> {
    params.validate()?;
    if !(0.0..=1.0).contains(&soc0) {
        return Err(SocError::config("soc0", format!("must lie in [0, 1], got {soc0}")));
    }
    if !dt.is_finite() || dt <= 0.0 {
        return Err(SocError::config("dt", format!("must be finite and > 0, got {dt}")));
    }
    if profile.iter().any(|i| !i.is_finite()) {
        return Err(SocError::NonFinite("current profile"));
    }
    let rc = params.rc;
    let (p1, p2) = ((-dt / rc.tau1()).exp(), (-dt / rc.tau2()).exp());
    let mut hyst = HysteresisState::new(h0, params.hysteresis_rate)?;
    let (mut v1, mut v2) = (0.0, 0.0);
    let mut charge = 0.0;
    let mut soc = soc0;
    let mut samples = Vec::with_capacity(profile.len());
    let mut truncated = false;
    for (k, &i) in profile.iter().enumerate() {
        let ocv = params.map.ocv(soc, hyst.h()).value;
        samples.push(TraceSample {
            t: k as f64 * dt,
            i_true: i,
            v_true: ocv - rc.r0 * i - v1 - v2,
            soc_true: soc,
            h_true: hyst.h(),
        });
        charge += i * dt;
        let next = soc0 - charge / params.capacity;
        if !(-SOC_SLACK..=1.0 + SOC_SLACK).contains(&next) {
            truncated = true;
            break;
        }
        soc = next.clamp(0.0, 1.0);
        v1 = p1 * v1 + rc.r1 * (1.0 - p1) * i;
        v2 = p2 * v2 + rc.r2 * (1.0 - p2) * i;
        hyst.update(i);
    }
    Ok(SimTrace {
        samples,
        final_soc: soc,
        truncated,
    })
}

/// ADC output and whether the input had to be saturated into `[0, v_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantized {
    pub value: f64,
    pub saturated: bool,
}

/// ADC step `v_max / (2ⁿ − 1)`.
pub fn adc_resolution(bits: u32, v_max: f64) -> f64 {
    v_max / ((1u64 << bits) - 1) as f64
}

pub fn quantize_voltage(v: f64, bits: u32, v_max: f64) -> Quantized {
    let step = adc_resolution(bits, v_max);
    let saturated = !(0.0..=v_max).contains(&v);
    let clipped = if v.is_nan() { 0.0 } else { v.clamp(0.0, v_max) };
    Quantized {
        value: (clipped / step + 0.5).floor() * step,
        saturated,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErrorSpec {
    /// Added to every measured current, A.
    pub current_bias: f64,
    pub adc_bits: Option<u32>,
    pub adc_vmax: f64,
    /// Gaussian voltage noise std, V.
    pub gaussian_v_noise: f64,
    /// Gaussian current noise std, A.
    pub gaussian_i_noise: f64,
}

impl Default for ErrorSpec {
    fn default() -> Self {
        Self {
            current_bias: 0.0,
            adc_bits: None,
            adc_vmax: 5.0,
            gaussian_v_noise: 0.0,
            gaussian_i_noise: 0.0,
        }
    }
}

impl ErrorSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(n) = self.adc_bits {
            if !(4..=24).contains(&n) {
                return Err(SocError::config(
                    "errors.adc_bits",
                    format!("must lie in [4, 24], got {n}"),
                ));
            }
            if !self.adc_vmax.is_finite() || self.adc_vmax <= 0.0 {
                return Err(SocError::config(
                    "errors.adc_vmax",
                    format!("must be finite and > 0, got {}", self.adc_vmax),
                ));
            }
        }
        for (field, v) in [
            ("errors.gaussian_v_noise", self.gaussian_v_noise),
            ("errors.gaussian_i_noise", self.gaussian_i_noise),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(SocError::config(field, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !self.current_bias.is_finite() {
            return Err(SocError::config("errors.current_bias", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Telemetry {
    pub samples: Vec<TelemetrySample>,
    /// Samples whose voltage fell outside the ADC range.
    pub saturated: usize,
}

/// Measured stream from a truth trace. The noise stream is separate from
/// the one used by [`gen_profile`] for the same seed.
pub fn apply_errors(trace: &SimTrace, spec: &ErrorSpec, seed: u64) -> Result<Telemetry> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut saturated = 0;
    let samples = trace
        .samples
        .iter()
        .map(|s| {
            let mut i = s.i_true + spec.current_bias;
            if spec.gaussian_i_noise > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                i += spec.gaussian_i_noise * z;
            }
            let mut v = s.v_true;
            if spec.gaussian_v_noise > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                v += spec.gaussian_v_noise * z;
            }
            if let Some(bits) = spec.adc_bits {
                let q = quantize_voltage(v, bits, spec.adc_vmax);
                saturated += q.saturated as usize;
                v = q.value;
            }
            TelemetrySample { t: s.t, i, v_t: v }
        })
        .collect();
    Ok(Telemetry { samples, saturated })
}

/// Band-limited random drive cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriveSpec {
    /// Hard clip, A.
    pub amplitude: f64,
    /// Standard deviation of the zero-mean part, A.
    pub std: f64,
    /// Time constant of each of the two cascaded low-pass stages, s.
    pub tau: f64,
    pub mean: f64,
}

impl Default for DriveSpec {
    fn default() -> Self {
        Self {
            amplitude: 3.0,
            std: 1.2,
            tau: 20.0,
            mean: 0.0,
        }
    }
}

/// Drive cycle whose mean alternates between `+rate` and `−rate` so the
/// SOC sweeps back and forth between `lo` and `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundedSpec {
    pub amplitude: f64,
    pub std: f64,
    pub tau: f64,
    /// Mean current magnitude, A.
    pub rate: f64,
    pub lo: f64,
    pub hi: f64,
    /// SOC assumed by the feedback at the first sample.
    pub soc0: f64,
    /// A·s.
    pub capacity: f64,
}

impl Default for BoundedSpec {
    fn default() -> Self {
        Self {
            amplitude: 3.0,
            std: 1.2,
            tau: 20.0,
            rate: 0.5,
            lo: 0.05,
            hi: 0.98,
            soc0: 1.0,
            capacity: 4320.0,
        }
    }
}

/// Constant current overriding part of another profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub base: Box<ProfileSpec>,
    /// Segment start, s. Centred in the profile when absent.
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default = "default_segment_length")]
    pub length: f64,
    #[serde(default = "default_segment_amplitude")]
    pub amplitude: f64,
}

fn default_segment_length() -> f64 {
    900.0
}

fn default_segment_amplitude() -> f64 {
    -1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileSpec {
    Drive(DriveSpec),
    Bounded(BoundedSpec),
    Segment(SegmentSpec),
    Csv { path: PathBuf },
}

impl ProfileSpec {
    /// Preset by name, as accepted on the command line.
    pub fn named(kind: &str) -> Result<Self> {
        match kind {
            "drive" => Ok(Self::Drive(DriveSpec::default())),
            "bounded" => Ok(Self::Bounded(BoundedSpec::default())),
            "segment" => Ok(Self::Segment(SegmentSpec {
                base: Box::new(Self::Bounded(BoundedSpec::default())),
                start: None,
                length: default_segment_length(),
                amplitude: default_segment_amplitude(),
            })),
            other => match other.strip_prefix("csv:") {
                Some(path) => Ok(Self::Csv { path: path.into() }),
                None => Err(SocError::Unknown {
                    what: "profile kind",
                    name: other.to_string(),
                }),
            },
        }
    }
}

fn lowpass_noise(n: usize, tau: f64, dt: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let a = (-dt / tau).exp();
    let (mut z1, mut z2) = (0.0, 0.0);
    let mut y: Vec<f64> = (0..n)
        .map(|_| {
            let w: f64 = StandardNormal.sample(rng);
            z1 = a * z1 + (1.0 - a) * w;
            z2 = a * z2 + (1.0 - a) * z1;
            z2
        })
        .collect();
    let mean = y.iter().sum::<f64>() / n as f64;
    let std = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    if std > 0.0 {
        for v in &mut y {
            *v = (*v - mean) / std;
        }
    }
    y
}

fn check_positive(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(SocError::config(field, format!("must be finite and > 0, got {v}")))
    }
}

/// Samples covered by a segment in a profile of `n` samples.
pub fn segment_range(s: &SegmentSpec, n: usize, dt: f64) -> std::ops::Range<usize> {
    let len = (s.length / dt).round() as usize;
    let start = match s.start {
        Some(t) => (t / dt).round() as usize,
        None => n.saturating_sub(len) / 2,
    };
    start..start + len
}

fn bounded(
    b: &BoundedSpec,
    n: usize,
    dt: f64,
    rng: &mut ChaCha8Rng,
    forced: Option<(std::ops::Range<usize>, f64)>,
) -> Result<Vec<f64>> {
    check_positive("profile.tau", b.tau)?;
    check_positive("profile.amplitude", b.amplitude)?;
    check_positive("profile.capacity", b.capacity)?;
    if !(0.0 <= b.lo && b.lo < b.hi && b.hi <= 1.0) {
        return Err(SocError::config(
            "profile.lo",
            format!("need 0 <= lo < hi <= 1, got [{}, {}]", b.lo, b.hi),
        ));
    }
    let base = lowpass_noise(n, b.tau, dt, rng);
    let mut soc = b.soc0;
    let mut discharging = b.soc0 > b.lo;
    let mut out = Vec::with_capacity(n);
    for (k, z) in base.into_iter().enumerate() {
        if soc <= b.lo {
            discharging = false;
        } else if soc >= b.hi {
            discharging = true;
        }
        let mean = if discharging { b.rate } else { -b.rate };
        let mut i = match &forced {
            Some((r, amp)) if r.contains(&k) => *amp,
            _ => (mean + b.std * z).clamp(-b.amplitude, b.amplitude),
        };
        // Never leave [0, 1] even if the band is hugged.
        let next = soc - i * dt / b.capacity;
        if next > 1.0 {
            i = (soc - 1.0) * b.capacity / dt;
        } else if next < 0.0 {
            i = soc * b.capacity / dt;
        }
        soc -= i * dt / b.capacity;
        out.push(i);
    }
    Ok(out)
}

/// Current profile of `round(duration/dt)` samples.
pub fn gen_profile(spec: &ProfileSpec, duration: f64, dt: f64, seed: u64) -> Result<Vec<f64>> {
    check_positive("duration", duration)?;
    check_positive("dt", dt)?;
    let n = (duration / dt).round() as usize;
    if n == 0 {
        return Err(SocError::config("duration", "shorter than one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec {
        ProfileSpec::Drive(d) => {
            check_positive("profile.tau", d.tau)?;
            check_positive("profile.amplitude", d.amplitude)?;
            let base = lowpass_noise(n, d.tau, dt, &mut rng);
            Ok(base
                .into_iter()
                .map(|z| (d.mean + d.std * z).clamp(-d.amplitude, d.amplitude))
                .collect())
        }
        ProfileSpec::Bounded(b) => bounded(b, n, dt, &mut rng, None),
        ProfileSpec::Segment(s) => {
            check_positive("profile.length", s.length)?;
            let range = segment_range(s, n, dt);
            if range.end > n {
                return Err(SocError::config(
                    "profile.length",
                    "segment does not fit in the profile",
                ));
            }
            match s.base.as_ref() {
                // The sweep feedback has to see the segment's charge.
                ProfileSpec::Bounded(b) => bounded(b, n, dt, &mut rng, Some((range, s.amplitude))),
                base => {
                    let mut out = gen_profile(base, duration, dt, seed)?;
                    out[range].fill(s.amplitude);
                    Ok(out)
                }
            }
        }
        ProfileSpec::Csv { path } => {
            let mut p = read_profile(path)?;
            p.truncate(n);
            Ok(p)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ProfileRow {
    t: f64,
    i: f64,
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| SocError::csv(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| SocError::csv(path, e))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| SocError::csv(path, e))?;
    }
    w.flush().map_err(|e| SocError::io(path, e))
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    let mut r = csv_reader(path)?;
    let got = r.headers().map_err(|e| SocError::csv(path, e))?.clone();
    if got.iter().collect::<Vec<_>>() != header {
        return Err(SocError::CsvFormat {
            path: path.to_path_buf(),
            reason: format!("header must be `{}`", header.join(",")),
        });
    }
    r.deserialize()
        .map(|row| row.map_err(|e| SocError::csv(path, e)))
        .collect()
}

/// Profile CSV (`t,i`), one row per sample at spacing `dt`.
pub fn write_profile(path: impl AsRef<Path>, profile: &[f64], dt: f64) -> Result<()> {
    write_rows(
        path.as_ref(),
        profile
            .iter()
            .enumerate()
            .map(|(k, &i)| ProfileRow { t: k as f64 * dt, i }),
    )
}

pub fn read_profile(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let rows: Vec<ProfileRow> = read_rows(path.as_ref(), &["t", "i"])?;
    Ok(rows.into_iter().map(|r| r.i).collect())
}

/// Telemetry CSV (`t,i,v`).
pub fn write_telemetry(path: impl AsRef<Path>, samples: &[TelemetrySample]) -> Result<()> {
    write_rows(path.as_ref(), samples)
}

pub fn read_telemetry(path: impl AsRef<Path>) -> Result<Vec<TelemetrySample>> {
    read_rows(path.as_ref(), &["t", "i", "v"])
}

/// Trace CSV (`t,i_true,v_true,soc_true,h_true`).
pub fn write_trace(path: impl AsRef<Path>, trace: &SimTrace) -> Result<()> {
    write_rows(path.as_ref(), &trace.samples)
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<TraceSample>> {
    read_rows(path.as_ref(), &["t", "i_true", "v_true", "soc_true", "h_true"])
}

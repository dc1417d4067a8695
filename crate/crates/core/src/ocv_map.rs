//! Gridded `OCV(SOC, H)` surface with bilinear interpolation, monotone
//! inversion along SOC and the inverse slope `dSOC/dOCV`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SocError};

/// Default cap on `dSOC/dOCV` in fraction per volt (20 %/mV).
pub const DEFAULT_SLOPE_CEILING: f64 = 20_000.0;

const OCV_BAND: (f64, f64) = (2.0, 4.0);

/// A looked-up value and whether the query had to be clamped to the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lookup {
    pub value: f64,
    pub clamped: bool,
}

/// Analytic LFP-like surface used as the shipped fixture: steep ends, a flat
/// middle and a ±15 mV hysteresis band.
pub fn synthetic_ocv(soc: f64, h: f64) -> f64 {
    3.30 + 0.02 * (soc - 0.5) + 0.15 * (soc.powi(9) - (1.0 - soc).powi(9)) + 0.015 * h
}

/// Analytic `∂OCV/∂SOC` of [`synthetic_ocv`].
pub fn synthetic_ocv_slope(soc: f64) -> f64 {
    0.02 + 0.15 * 9.0 * (soc.powi(8) + (1.0 - soc).powi(8))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcvMap {
    soc_grid: Vec<f64>,
    h_grid: Vec<f64>,
    /// Row-major `[h][soc]`.
    values: Vec<f64>,
    slope_ceiling: f64,
}

fn strictly_ascending(v: &[f64]) -> Option<usize> {
    v.windows(2).position(|w| !(w[1] > w[0]))
}

/// Index `i` of the cell `[grid[i], grid[i+1]]` containing `x` and the
/// fractional position inside it. `x` must already lie within the grid.
fn locate(grid: &[f64], x: f64) -> (usize, f64) {
    let last = grid.len() - 2;
    let i = grid.partition_point(|g| *g <= x).saturating_sub(1).min(last);
    let t = (x - grid[i]) / (grid[i + 1] - grid[i]);
    (i, t.clamp(0.0, 1.0))
}

fn clamp_flag(x: f64, lo: f64, hi: f64) -> (f64, bool) {
    if x < lo {
        (lo, true)
    } else if x > hi {
        (hi, true)
    } else if x.is_nan() {
        (lo, true)
    } else {
        (x, false)
    }
}

impl OcvMap {
    /// Builds and validates a map; `values[j][i]` is the OCV at `h_grid[j]`, `soc_grid[i]`.
    pub fn new(soc_grid: Vec<f64>, h_grid: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if soc_grid.len() < 2 || h_grid.len() < 2 {
            return Err(SocError::InvalidMap("need at least two SOC and two H knots".into()));
        }
        if let Some(k) = strictly_ascending(&soc_grid) {
            return Err(SocError::InvalidMap(format!(
                "SOC grid not strictly ascending at knot {} ({} -> {})",
                k + 1,
                soc_grid[k],
                soc_grid[k + 1]
            )));
        }
        if let Some(k) = strictly_ascending(&h_grid) {
            return Err(SocError::InvalidMap(format!(
                "H grid not strictly ascending at knot {} ({} -> {})",
                k + 1,
                h_grid[k],
                h_grid[k + 1]
            )));
        }
        let spans = |g: &[f64], lo: f64, hi: f64| (g[0] - lo).abs() < 1e-9 && (g[g.len() - 1] - hi).abs() < 1e-9;
        if !spans(&soc_grid, 0.0, 1.0) {
            return Err(SocError::InvalidMap("SOC grid must span [0, 1]".into()));
        }
        if !spans(&h_grid, -1.0, 1.0) {
            return Err(SocError::InvalidMap("H grid must span [-1, 1]".into()));
        }
        if values.len() != h_grid.len() {
            return Err(SocError::InvalidMap(format!(
                "expected {} H slices, got {}",
                h_grid.len(),
                values.len()
            )));
        }
        for (j, slice) in values.iter().enumerate() {
            if slice.len() != soc_grid.len() {
                return Err(SocError::InvalidMap(format!(
                    "H slice {} (h={}) has {} values, expected {}",
                    j,
                    h_grid[j],
                    slice.len(),
                    soc_grid.len()
                )));
            }
            if let Some(i) = slice
                .iter()
                .position(|v| !v.is_finite() || *v < OCV_BAND.0 || *v > OCV_BAND.1)
            {
                return Err(SocError::InvalidMap(format!(
                    "H slice {} (h={}) value {} at SOC {} outside [{}, {}] V",
                    j, h_grid[j], slice[i], soc_grid[i], OCV_BAND.0, OCV_BAND.1
                )));
            }
            if let Some(i) = strictly_ascending(slice) {
                return Err(SocError::InvalidMap(format!(
                    "H slice {} (h={}) not strictly increasing between SOC {} and {}",
                    j,
                    h_grid[j],
                    soc_grid[i],
                    soc_grid[i + 1]
                )));
            }
        }
        Ok(Self {
            soc_grid,
            h_grid,
            values: values.into_iter().flatten().collect(),
            slope_ceiling: DEFAULT_SLOPE_CEILING,
        })
    }

    /// [`synthetic_ocv`] sampled on a 201 (SOC) × 21 (H) grid.
    pub fn synthetic() -> Self {
        Self::from_fn(201, 21, synthetic_ocv)
    }

    /// Samples `f(soc, h)` on uniform grids.
    pub fn from_fn(n_soc: usize, n_h: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let soc_grid: Vec<f64> = (0..n_soc).map(|i| i as f64 / (n_soc - 1) as f64).collect();
        let h_grid: Vec<f64> = (0..n_h).map(|j| -1.0 + 2.0 * j as f64 / (n_h - 1) as f64).collect();
        let values = h_grid
            .iter()
            .map(|&h| soc_grid.iter().map(|&s| f(s, h)).collect())
            .collect();
        Self::new(soc_grid, h_grid, values).expect("generator produced an invalid map")
    }

    pub fn with_slope_ceiling(mut self, ceiling: f64) -> Result<Self> {
        if !ceiling.is_finite() || ceiling <= 0.0 {
            return Err(SocError::config(
                "slope_ceiling",
                format!("must be finite and > 0, got {ceiling}"),
            ));
        }
        self.slope_ceiling = ceiling;
        Ok(self)
    }

    pub fn soc_grid(&self) -> &[f64] {
        &self.soc_grid
    }

    pub fn h_grid(&self) -> &[f64] {
        &self.h_grid
    }

    pub fn slope_ceiling(&self) -> f64 {
        self.slope_ceiling
    }

    fn at(&self, j: usize, i: usize) -> f64 {
        self.values[j * self.soc_grid.len() + i]
    }

    /// The grid slice at `h`, blended between the neighbouring H knots.
    pub fn slice(&self, h: f64) -> OcvCurve {
        let (h, _) = clamp_flag(h, -1.0, 1.0);
        let (j, w) = locate(&self.h_grid, h);
        let ocv = (0..self.soc_grid.len())
            .map(|i| (1.0 - w) * self.at(j, i) + w * self.at(j + 1, i))
            .collect();
        OcvCurve {
            soc: self.soc_grid.clone(),
            ocv,
        }
    }

    /// Bilinear `OCV(soc, h)`; out-of-domain queries are clamped and flagged.
    pub fn ocv(&self, soc: f64, h: f64) -> Lookup {
        let (soc, c1) = clamp_flag(soc, 0.0, 1.0);
        let (h, c2) = clamp_flag(h, -1.0, 1.0);
        let (i, t) = locate(&self.soc_grid, soc);
        let (j, w) = locate(&self.h_grid, h);
        let lo = (1.0 - t) * self.at(j, i) + t * self.at(j, i + 1);
        let hi = (1.0 - t) * self.at(j + 1, i) + t * self.at(j + 1, i + 1);
        Lookup {
            value: (1.0 - w) * lo + w * hi,
            clamped: c1 || c2,
        }
    }

    /// SOC at which the interpolated slice at `h` reaches `ocv_est`.
    ///
    /// Values outside the slice's range saturate at the SOC bounds with the
    /// flag set.
    pub fn invert_soc(&self, ocv_est: f64, h: f64) -> Lookup {
        let (h, _) = clamp_flag(h, -1.0, 1.0);
        let (j, w) = locate(&self.h_grid, h);
        let f = |i: usize| (1.0 - w) * self.at(j, i) + w * self.at(j + 1, i);
        let n = self.soc_grid.len();
        if ocv_est.is_nan() {
            return Lookup {
                value: self.soc_grid[0],
                clamped: true,
            };
        }
        if ocv_est <= f(0) {
            return Lookup {
                value: self.soc_grid[0],
                clamped: ocv_est < f(0),
            };
        }
        if ocv_est >= f(n - 1) {
            return Lookup {
                value: self.soc_grid[n - 1],
                clamped: ocv_est > f(n - 1),
            };
        }
        // Bracket: f(lo) <= ocv_est < f(hi).
        let (mut lo, mut hi) = (0, n - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if f(mid) <= ocv_est {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (f0, f1) = (f(lo), f(hi));
        let t = (ocv_est - f0) / (f1 - f0);
        Lookup {
            value: self.soc_grid[lo] + t * (self.soc_grid[hi] - self.soc_grid[lo]),
            clamped: false,
        }
    }

    /// Inverse slope `dSOC/dOCV` of the slice at `h`, by a central difference
    /// of the interpolated slice, capped at the configured ceiling.
    pub fn inv_slope(&self, h: f64, soc: f64) -> f64 {
        let (soc, _) = clamp_flag(soc, 0.0, 1.0);
        let min_spacing = self
            .soc_grid
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let delta = 0.25 * min_spacing;
        let a = (soc - delta).max(0.0);
        let b = (soc + delta).min(1.0);
        let slope = (self.ocv(b, h).value - self.ocv(a, h).value) / (b - a);
        if slope <= 1.0 / self.slope_ceiling {
            self.slope_ceiling
        } else {
            (1.0 / slope).min(self.slope_ceiling)
        }
    }

    /// Map with `OCV'(s, H) = OCV(s + 4w·s(1 − s), H) + offset`: a shifted
    /// surface whose SOC axis is warped by up to `w` at mid range.
    pub fn perturbed(&self, offset: f64, warp: f64) -> Result<Self> {
        let values = self
            .h_grid
            .iter()
            .map(|&h| {
                self.soc_grid
                    .iter()
                    .map(|&s| self.ocv((s + 4.0 * warp * s * (1.0 - s)).clamp(0.0, 1.0), h).value + offset)
                    .collect()
            })
            .collect();
        let map = Self::new(self.soc_grid.clone(), self.h_grid.clone(), values)?;
        map.with_slope_ceiling(self.slope_ceiling)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| SocError::io(path, e))?;
        Self::from_reader(file, path)
    }

    /// Parses the CSV layout: header `soc,<h knots…>`, then one row per SOC knot.
    pub fn from_reader(reader: impl Read, origin: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let bad = |reason: String| SocError::CsvFormat {
            path: origin.to_path_buf(),
            reason,
        };
        let mut records = rdr.records();
        let header = records
            .next()
            .ok_or_else(|| bad("empty file".into()))?
            .map_err(|e| SocError::csv(origin, e))?;
        if header.get(0) != Some("soc") {
            return Err(bad("first header cell must be `soc`".into()));
        }
        let h_grid = header
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad H knot `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        let mut soc_grid = Vec::new();
        let mut by_h = vec![Vec::new(); h_grid.len()];
        for (line, rec) in records.enumerate() {
            let rec = rec.map_err(|e| SocError::csv(origin, e))?;
            if rec.len() != h_grid.len() + 1 {
                return Err(bad(format!(
                    "row {} has {} cells, expected {}",
                    line + 2,
                    rec.len(),
                    h_grid.len() + 1
                )));
            }
            let mut cells = rec.iter().map(|s| {
                s.parse::<f64>()
                    .map_err(|_| bad(format!("row {}: bad number `{s}`", line + 2)))
            });
            soc_grid.push(cells.next().unwrap()?);
            for (slice, cell) in by_h.iter_mut().zip(cells) {
                slice.push(cell?);
            }
        }
        Self::new(soc_grid, h_grid, by_h)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| SocError::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.to_writer(&mut out).map_err(|e| SocError::io(path, e))?;
        out.flush().map_err(|e| SocError::io(path, e))
    }

    pub fn to_writer(&self, mut w: impl Write) -> std::io::Result<()> {
        write!(w, "soc")?;
        for h in &self.h_grid {
            write!(w, ",{h:.10}")?;
        }
        writeln!(w)?;
        for (i, s) in self.soc_grid.iter().enumerate() {
            write!(w, "{s:.10}")?;
            for j in 0..self.h_grid.len() {
                write!(w, ",{:.10}", self.at(j, i))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// One fixed-H slice, OCV as a piecewise-linear function of SOC.
#[derive(Debug, Clone, PartialEq)]
pub struct OcvCurve {
    soc: Vec<f64>,
    ocv: Vec<f64>,
}

impl OcvCurve {
    pub fn soc(&self) -> &[f64] {
        &self.soc
    }

    pub fn ocv(&self) -> &[f64] {
        &self.ocv
    }

    /// Piecewise-linear evaluation, extended linearly past both ends so that
    /// sigma points slightly outside `[0, 1]` still see a slope.
    pub fn eval(&self, soc: f64) -> f64 {
        let n = self.soc.len();
        let i = if soc <= self.soc[0] {
            0
        } else if soc >= self.soc[n - 1] {
            n - 2
        } else {
            locate(&self.soc, soc).0
        };
        let t = (soc - self.soc[i]) / (self.soc[i + 1] - self.soc[i]);
        self.ocv[i] + t * (self.ocv[i + 1] - self.ocv[i])
    }
}

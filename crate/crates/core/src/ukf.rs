//! Unscented Kalman filter baseline over `[SOC, V₁, V₂]` with tabulated RC
//! parameters and a single averaged OCV curve.

use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::cell_sim::RcParams;
use crate::error::{Result, SocError};
use crate::ocv_map::{OcvCurve, OcvMap};
use crate::pipeline::TelemetrySample;

/// RC parameters against SOC, linearly interpolated and held at the ends.
#[derive(Debug, Clone, PartialEq)]
pub struct RcTable {
    soc: Vec<f64>,
    params: Vec<RcParams>,
}

impl RcTable {
    pub fn new(soc: Vec<f64>, params: Vec<RcParams>) -> Result<Self> {
        if soc.is_empty() || soc.len() != params.len() {
            return Err(SocError::InvalidRcTable(format!(
                "{} SOC knots for {} parameter rows",
                soc.len(),
                params.len()
            )));
        }
        if let Some(k) = soc.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(SocError::InvalidRcTable(format!(
                "SOC knots not ascending at row {}",
                k + 2
            )));
        }
        if let Some(k) = params.iter().position(|p| !p.is_positive()) {
            return Err(SocError::InvalidRcTable(format!(
                "non-positive entry at SOC {}",
                soc[k]
            )));
        }
        Ok(Self { soc, params })
    }

    /// Constant parameters sampled every `step` of SOC.
    pub fn sampled(rc: RcParams, step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(SocError::config(
                "rc_table.step",
                format!("must lie in (0, 1], got {step}"),
            ));
        }
        let n = (1.0 / step).round() as usize;
        let soc: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let params = vec![rc; soc.len()];
        Self::new(soc, params)
    }

    pub fn knots(&self) -> &[f64] {
        &self.soc
    }

    pub fn at(&self, soc: f64) -> RcParams {
        let n = self.soc.len();
        if n == 1 || soc <= self.soc[0] {
            return self.params[0];
        }
        if soc >= self.soc[n - 1] {
            return self.params[n - 1];
        }
        let i = self.soc.partition_point(|s| *s <= soc) - 1;
        let t = (soc - self.soc[i]) / (self.soc[i + 1] - self.soc[i]);
        let (a, b) = (&self.params[i], &self.params[i + 1]);
        let lerp = |x: f64, y: f64| x + t * (y - x);
        RcParams {
            r0: lerp(a.r0, b.r0),
            r1: lerp(a.r1, b.r1),
            c1: lerp(a.c1, b.c1),
            r2: lerp(a.r2, b.r2),
            c2: lerp(a.c2, b.c2),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            soc: f64,
            r0: f64,
            r1: f64,
            c1: f64,
            r2: f64,
            c2: f64,
        }
        let path = path.as_ref();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| SocError::csv(path, e))?;
        let header = rdr.headers().map_err(|e| SocError::csv(path, e))?.clone();
        if header.iter().collect::<Vec<_>>() != ["soc", "r0", "r1", "c1", "r2", "c2"] {
            return Err(SocError::CsvFormat {
                path: path.to_path_buf(),
                reason: "header must be `soc,r0,r1,c1,r2,c2`".into(),
            });
        }
        let mut soc = Vec::new();
        let mut params = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let r = row.map_err(|e| SocError::csv(path, e))?;
            soc.push(r.soc);
            params.push(RcParams {
                r0: r.r0,
                r1: r.r1,
                c1: r.c1,
                r2: r.r2,
                c2: r.c2,
            });
        }
        Self::new(soc, params)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| SocError::io(path, e))?);
        let mut body = String::from("soc,r0,r1,c1,r2,c2\n");
        for (s, p) in self.soc.iter().zip(&self.params) {
            body.push_str(&format!("{s},{},{},{},{},{}\n", p.r0, p.r1, p.c1, p.r2, p.c2));
        }
        out.write_all(body.as_bytes()).map_err(|e| SocError::io(path, e))?;
        out.flush().map_err(|e| SocError::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UkfConfig {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    /// Diagonal of the process noise covariance.
    pub q: [f64; 3],
    /// Measurement noise variance, V².
    pub r: f64,
    /// Diagonal of the initial covariance.
    pub p0: [f64; 3],
    pub initial_soc: f64,
    /// A·s.
    pub capacity: f64,
}

impl Default for UkfConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta: 2.0,
            kappa: 0.0,
            q: [1e-10, 1e-8, 1e-8],
            r: 25e-6,
            p0: [0.25, 1e-6, 1e-6],
            initial_soc: 0.5,
            capacity: 4320.0,
        }
    }
}

const N: usize = 3;
const COV_FLOOR: f64 = 1e-15;

/// Standard unscented-transform weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtWeights {
    pub lambda: f64,
    pub mean: [f64; 2 * N + 1],
    pub cov: [f64; 2 * N + 1],
}

impl UtWeights {
    pub fn new(alpha: f64, beta: f64, kappa: f64) -> Self {
        let n = N as f64;
        let lambda = alpha * alpha * (n + kappa) - n;
        let w = 1.0 / (2.0 * (n + lambda));
        let mut mean = [w; 2 * N + 1];
        let mut cov = [w; 2 * N + 1];
        mean[0] = lambda / (n + lambda);
        cov[0] = mean[0] + 1.0 - alpha * alpha + beta;
        Self { lambda, mean, cov }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UkfState {
    x: Vector3<f64>,
    p: Matrix3<f64>,
    q: Matrix3<f64>,
    r: f64,
    weights: UtWeights,
    capacity: f64,
    repairs: usize,
}

/// Measurement update diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UkfUpdate {
    pub gain: Vector3<f64>,
    pub innovation: f64,
    pub repaired: bool,
}

fn symmetrize(p: &Matrix3<f64>) -> Matrix3<f64> {
    (p + p.transpose()) * 0.5
}

/// Symmetrizes and, if needed, floors the eigenvalues. Returns whether the
/// floor was applied.
fn repair(p: &mut Matrix3<f64>) -> bool {
    *p = symmetrize(p);
    let eig = SymmetricEigen::new(*p);
    if eig.eigenvalues.iter().all(|l| *l >= 0.0) {
        return false;
    }
    let floored = eig.eigenvalues.map(|l| l.max(COV_FLOOR));
    *p = symmetrize(&(eig.eigenvectors * Matrix3::from_diagonal(&floored) * eig.eigenvectors.transpose()));
    true
}

impl UkfState {
    pub fn new(cfg: &UkfConfig) -> Result<Self> {
        let positive = |field: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(SocError::config(field, format!("must be finite and > 0, got {v}")))
            }
        };
        positive("ukf.alpha", cfg.alpha)?;
        positive("ukf.r", cfg.r)?;
        positive("ukf.capacity", cfg.capacity)?;
        for v in cfg.q {
            positive("ukf.q", v)?;
        }
        for v in cfg.p0 {
            positive("ukf.p0", v)?;
        }
        if !(0.0..=1.0).contains(&cfg.initial_soc) {
            return Err(SocError::config(
                "ukf.initial_soc",
                format!("must lie in [0, 1], got {}", cfg.initial_soc),
            ));
        }
        if !(cfg.kappa + N as f64 > 0.0) {
            return Err(SocError::config("ukf.kappa", "n + kappa must be > 0"));
        }
        Ok(Self {
            x: Vector3::new(cfg.initial_soc, 0.0, 0.0),
            p: Matrix3::from_diagonal(&Vector3::from(cfg.p0)),
            q: Matrix3::from_diagonal(&Vector3::from(cfg.q)),
            r: cfg.r,
            weights: UtWeights::new(cfg.alpha, cfg.beta, cfg.kappa),
            capacity: cfg.capacity,
            repairs: 0,
        })
    }

    pub fn x(&self) -> &Vector3<f64> {
        &self.x
    }

    pub fn p(&self) -> &Matrix3<f64> {
        &self.p
    }

    pub fn soc(&self) -> f64 {
        self.x[0]
    }

    pub fn weights(&self) -> &UtWeights {
        &self.weights
    }

    /// Number of covariance repairs so far.
    pub fn repairs(&self) -> usize {
        self.repairs
    }

    pub fn set_state(&mut self, x: Vector3<f64>, p: Matrix3<f64>) {
        self.x = x;
        self.p = p;
    }

    fn sigma_points(&mut self) -> ([Vector3<f64>; 2 * N + 1], bool) {
        let scale = N as f64 + self.weights.lambda;
        let mut repaired = false;
        let chol = match (self.p * scale).cholesky() {
            Some(c) => c,
            None => {
                repaired = true;
                repair(&mut self.p);
                let jitter = Matrix3::identity() * COV_FLOOR;
                (self.p * scale + jitter)
                    .cholesky()
                    .unwrap_or_else(|| (Matrix3::identity() * (COV_FLOOR * scale)).cholesky().unwrap())
            }
        };
        let l = chol.l();
        let mut pts = [self.x; 2 * N + 1];
        for j in 0..N {
            let col = l.column(j);
            pts[1 + j] = self.x + col;
            pts[1 + N + j] = self.x - col;
        }
        (pts, repaired)
    }

    /// Propagates the sigma points through the exact-exponential RC
    /// transition with parameters taken at the current SOC mean.
    pub fn predict(&mut self, i: f64, dt: f64, table: &RcTable) -> bool {
        let rc = table.at(self.x[0]);
        let (p1, p2) = ((-dt / rc.tau1()).exp(), (-dt / rc.tau2()).exp());
        let (pts, mut repaired) = self.sigma_points();
        let prop = pts.map(|s| {
            Vector3::new(
                s[0] - i * dt / self.capacity,
                p1 * s[1] + rc.r1 * (1.0 - p1) * i,
                p2 * s[2] + rc.r2 * (1.0 - p2) * i,
            )
        });
        let w = &self.weights;
        let mean = prop
            .iter()
            .zip(w.mean)
            .fold(Vector3::zeros(), |acc, (s, wm)| acc + s * wm);
        let mut p = self.q;
        for (s, wc) in prop.iter().zip(w.cov) {
            let d = s - mean;
            p += d * d.transpose() * wc;
        }
        self.x = mean;
        self.x[0] = self.x[0].clamp(0.0, 1.0);
        self.p = p;
        repaired |= repair(&mut self.p);
        self.repairs += repaired as usize;
        repaired
    }

    /// Measurement update against `V = OCV(SOC) − I·R₀ − V₁ − V₂`.
    pub fn update(&mut self, v_t: f64, i: f64, curve: &OcvCurve, table: &RcTable) -> UkfUpdate {
        let r0 = table.at(self.x[0]).r0;
        let (pts, mut repaired) = self.sigma_points();
        let ys = pts.map(|s| curve.eval(s[0]) - i * r0 - s[1] - s[2]);
        let w = self.weights;
        let y_mean: f64 = ys.iter().zip(w.mean).map(|(y, wm)| y * wm).sum();
        let mut pyy = self.r;
        let mut pxy = Vector3::zeros();
        for k in 0..2 * N + 1 {
            let dy = ys[k] - y_mean;
            pyy += w.cov[k] * dy * dy;
            pxy += (pts[k] - self.x) * (w.cov[k] * dy);
        }
        if !(pyy > 0.0) {
            pyy = self.r;
            repaired = true;
        }
        let gain = pxy / pyy;
        let innovation = v_t - y_mean;
        self.x += gain * innovation;
        self.x[0] = self.x[0].clamp(0.0, 1.0);
        self.p -= gain * gain.transpose() * pyy;
        repaired |= repair(&mut self.p);
        self.repairs += repaired as usize;
        UkfUpdate {
            gain,
            innovation,
            repaired,
        }
    }
}

/// Per-sample record of the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UkfRecord {
    pub t: f64,
    pub soc_est: f64,
    pub p_soc: f64,
    pub gain_soc: f64,
}

/// The baseline as a streaming estimator: predict with the previous current,
/// then update with the new sample.
#[derive(Debug, Clone)]
pub struct Ukf {
    state: UkfState,
    table: RcTable,
    curve: OcvCurve,
    dt: f64,
    last_i: Option<f64>,
}

impl Ukf {
    /// Uses the `H = 0` slice of `map` as the averaged OCV curve.
    pub fn new(cfg: &UkfConfig, table: RcTable, map: &OcvMap, dt: f64) -> Result<Self> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(SocError::config("dt", format!("must be finite and > 0, got {dt}")));
        }
        Ok(Self {
            state: UkfState::new(cfg)?,
            table,
            curve: map.slice(0.0),
            dt,
            last_i: None,
        })
    }

    pub fn state(&self) -> &UkfState {
        &self.state
    }

    pub fn step(&mut self, s: &TelemetrySample) -> UkfRecord {
        if let Some(i_prev) = self.last_i {
            self.state.predict(i_prev, self.dt, &self.table);
        }
        let u = self.state.update(s.v_t, s.i, &self.curve, &self.table);
        self.last_i = Some(s.i);
        UkfRecord {
            t: s.t,
            soc_est: self.state.soc(),
            p_soc: self.state.p()[(0, 0)],
            gain_soc: u.gain[0],
        }
    }
}

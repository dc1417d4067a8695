//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soc_kit_core::cell_sim::{adc_resolution, quantize_voltage};
use soc_kit_core::condition_eval::{self, ConditionConfig};
use soc_kit_core::fusion::{FusionState, Prediction};
use soc_kit_core::hysteresis::HysteresisState;
use soc_kit_core::param_estimation::estimate;
use soc_kit_core::{cell_sim, run_scenario, OcvMap, Pipeline, PipelineConfig, Scenario, ScenarioName};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

type Criterion = (&'static str, fn() -> Outcome);

const WINDOW: usize = 100;

fn c1() -> Outcome {
    let start = Instant::now();
    let mut worst_ocv = 0.0f64;
    let mut worst_res = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for seed in 1..=5 {
        let rows = regressor_rows(&telemetry(&drive_trace(600, seed), 0.0));
        let w = window_of(&rows, WINDOW);
        let est = estimate(&w).unwrap();
        let oracle = oracle_lstsq(&rows[rows.len() - WINDOW..]);
        worst_ocv = worst_ocv.max((est.theta.ocv - FLAT_OCV).abs());
        worst_res = worst_res.max(w.residual_rms(&est.theta));
        worst_oracle = worst_oracle.max((est.theta.ocv - oracle[0]).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_ocv < 1e-3 && worst_res < 1e-6 && worst_oracle < 1e-6 && secs < 5.0,
        format!(
            "max |OCV error| {worst_ocv:.2e} V (< 1e-3), max residual RMS {worst_res:.2e} V (< 1e-6), \
             max |OCV - oracle| {worst_oracle:.2e} V, {secs:.3} s (< 5)"
        ),
    )
}

fn c2() -> Outcome {
    let start = Instant::now();
    let beta = -0.05;
    let mut ok = true;
    let mut worst_shift = 0.0f64;
    let mut worst_c = 0.0f64;
    let mut shifts = Vec::new();
    for seed in 1..=5 {
        let trace = drive_trace(600, seed);
        let fit = |bias| {
            estimate(&window_of(&regressor_rows(&telemetry(&trace, bias)), WINDOW))
                .unwrap()
                .theta
        };
        let (clean, biased) = (fit(0.0), fit(beta));
        let expected = clean.c * beta;
        let shift = biased.ocv - clean.ocv;
        let rel_shift = ((shift - expected) / expected).abs();
        let rel_c = ((biased.c - clean.c) / clean.c).abs();
        ok &= rel_shift <= 0.10 && rel_c <= 0.01;
        worst_shift = worst_shift.max(rel_shift);
        worst_c = worst_c.max(rel_c);
        shifts.push(shift);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        ok && secs < 5.0,
        format!(
            "OCV shift {:.4} mV (c*beta = -5 mV nominal), max rel. shift error {worst_shift:.2e} (<= 0.10), \
             max rel. change in c {worst_c:.2e} (<= 0.01), {secs:.3} s (< 5)",
            shifts[0] * 1e3
        ),
    )
}

fn c3() -> Outcome {
    let map = OcvMap::synthetic();
    let cfg = ConditionConfig {
        cov_ceiling: f64::MAX,
        ..ConditionConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let cov = 10f64.powf(rng.random_range(-14.0..0.0));
        let h = rng.random_range(-1.0..=1.0);
        let soc = rng.random_range(0.0..=1.0);
        let r = condition_eval::cov_soc(cov, h, soc, &map, &cfg);
        let want = r.slope * r.slope * cov;
        worst = worst.max(((r.cov_soc - want) / want).abs());
        if r.capped || r.slope != map.inv_slope(h, soc) {
            return outcome(false, format!("unexpected capping or slope at h={h}, soc={soc}"));
        }
    }
    outcome(
        worst <= f64::EPSILON,
        format!("10^4 random inputs, max rel. deviation from slope^2*cov_ocv {worst:.1e} (<= 2.2e-16)"),
    )
}

fn c4() -> Outcome {
    let cfg = ConditionConfig::default();
    let cov_of = |w: &soc_kit_core::param_estimation::RegressorWindow| {
        condition_eval::cov_ocv(&condition_eval::fisher_from_gram(&w.normal_equations().0, &cfg)).unwrap()
    };
    let rich = cov_of(&window_of(
        &regressor_rows(&telemetry(&drive_trace(600, 2), 0.0)),
        WINDOW,
    ));
    let constant = cell_sim::simulate(&vec![1.0; 2000], &flat_plant(), 0.9, 0.0, 1.0).unwrap();
    let flat = cov_of(&window_of(&regressor_rows(&telemetry(&constant, 0.0)), WINDOW));
    let ratio = flat / rich;

    let s = Scenario::preset(ScenarioName::ConstantSegment);
    let run = run_scenario(&s).unwrap();
    let range = s.segment_range().unwrap();
    let mut gains: Vec<f64> = run.proposed[range.clone()].iter().map(|r| r.gain).collect();
    gains.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = gains[gains.len() / 2];
    // The window still holds pre-segment excitation for its first N samples.
    let mut worst_step = 0.0f64;
    for k in range.start + s.pipeline.window_len..range.end {
        let increment = run.proposed[k].soc_est - run.proposed[k - 1].soc_est;
        let cc = -run.telemetry[k - 1].i * s.dt / s.pipeline.fusion.capacity;
        worst_step = worst_step.max((increment - cc).abs());
    }
    outcome(
        ratio >= 1e6 && median < 1e-3 && worst_step <= 1e-6,
        format!(
            "cov_ocv constant/rich {ratio:.2e} (>= 1e6), median segment gain {median:.2e} (< 1e-3), \
             max |dSOC - Coulomb increment| from one window into the segment {worst_step:.2e} (<= 1e-6)"
        ),
    )
}

fn c5() -> Outcome {
    let start = Instant::now();
    let lsb = adc_resolution(10, 5.0);
    let exact = 5.0 / 1023.0;
    let lsb_ok = (lsb - exact).abs() <= 1e-6 * exact && (lsb * 1e3 * 1e4).round() / 1e4 == 4.8876;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    let mut check = |v: f64| {
        let e = quantize_voltage(v, 10, 5.0).value - v;
        lo = lo.min(e);
        hi = hi.max(e);
    };
    for k in 0..=1_000_000 {
        check(5.0 * k as f64 / 1_000_000.0);
    }
    for _ in 0..1_000_000 {
        check(rng.random_range(0.0..=5.0));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        lsb_ok && lo >= -2.444e-3 && hi <= 2.444e-3 && secs < 1.0,
        format!(
            "dV_Q {:.7} mV (4.8876 mV, 5/1023 to 1 uLSB), errors in [{:.4}, {:.4}] mV (within +-2.444), {secs:.3} s (< 1)",
            lsb * 1e3,
            lo * 1e3,
            hi * 1e3
        ),
    )
}

fn c6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let h0 = rng.random_range(-1.0..=1.0);
        let i = rng.random_range(-10.0..10.0);
        let c = rng.random_range(0.5..200.0);
        let k = rng.random_range(0..1000);
        let mut h = HysteresisState::new(h0, c).unwrap();
        for _ in 0..k {
            h.update(i);
        }
        let s = -f64::signum(i);
        let want = s + (h0 - s) * (-(k as f64) * (i / c).abs()).exp();
        worst = worst.max((h.h() - want).abs());
    }
    let mut h = HysteresisState::new(rng.random_range(-1.0..=1.0), 1.2).unwrap();
    let mut bounded = true;
    for _ in 0..1_000_000 {
        let i = match rng.random_range(0..4) {
            0 => 0.0,
            1 => rng.random_range(-1e4..1e4),
            _ => rng.random_range(-5.0..5.0),
        };
        bounded &= (-1.0..=1.0).contains(&h.update(i));
    }
    outcome(
        worst <= 1e-12 && bounded,
        format!(
            "100 random cases, max |recursion - closed form| {worst:.1e} (<= 1e-12); 10^6-step fuzz bounded: {bounded}"
        ),
    )
}

fn c7() -> Outcome {
    let map = OcvMap::synthetic();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let s = rng.random_range(0.0..=1.0);
        let h = rng.random_range(-1.0..=1.0);
        worst = worst.max((map.invert_soc(map.ocv(s, h).value, h).value - s).abs());
    }
    let mut ordered = true;
    let mut example = [0.0; 3];
    for k in 0..=40 {
        let v = 3.20 + 0.005 * k as f64;
        let socs: Vec<_> = (0..=20).map(|j| map.invert_soc(v, 1.0 - j as f64 / 10.0)).collect();
        if socs.iter().any(|s| s.clamped) {
            continue;
        }
        ordered &= socs.windows(2).all(|p| p[0].value < p[1].value);
        if (v - 3.3).abs() < 1e-9 {
            example = [socs[0].value, socs[10].value, socs[20].value];
        }
    }
    outcome(
        worst <= 1e-6 && ordered,
        format!(
            "max |invert(ocv(s,h)) - s| {worst:.1e} (<= 1e-6); SOC strictly decreasing in H: {ordered} \
             (3.3 V: H=1 {:.2}%, H=0 {:.2}%, H=-1 {:.2}%)",
            example[0] * 100.0,
            example[1] * 100.0,
            example[2] * 100.0
        ),
    )
}

fn c8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = 0;
    for _ in 0..100_000 {
        let soc_cc = rng.random_range(0.0..=1.0);
        let meas = rng.random_range(0.0..=1.0);
        let p_p = rng.random_range(0.0..1.0);
        let cov = 10f64.powf(rng.random_range(-14.0..4.0));
        let mut s = FusionState::new(0.5, 0.0, 1e-12, 4320.0, 1.0).unwrap();
        let c = s.update(Prediction { soc_cc, p_p }, meas, cov);
        let (lo, hi) = (soc_cc.min(meas), soc_cc.max(meas));
        let ok = (0.0..1.0).contains(&c.gain) && c.p_m <= p_p && c.soc_est >= lo && c.soc_est <= hi;
        failures += !ok as usize;
    }
    outcome(
        failures == 0,
        format!("10^5 random updates, {failures} violations of 0 <= K < 1, P_m <= P_p, convexity"),
    )
}

fn c9() -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for (label, name) in [
        ("a", ScenarioName::Ideal),
        ("b", ScenarioName::FlatZone),
        ("c", ScenarioName::CurrentBias),
        ("d", ScenarioName::MapMismatch),
    ] {
        let start = Instant::now();
        let run = run_scenario(&Scenario::preset(name)).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let ok = run.report.passed && secs <= 60.0;
        passed &= ok;
        let checks: Vec<String> = run
            .report
            .checks
            .iter()
            .map(|c| format!("{} {:.4} vs {}", c.name, c.value, c.threshold))
            .collect();
        parts.push(format!(
            "({label}) {} [{}] {} steps in {secs:.2} s",
            name,
            checks.join(", "),
            run.report.steps
        ));
    }
    outcome(passed, parts.join("; "))
}

fn c10() -> Outcome {
    let s = Scenario::preset(ScenarioName::Ideal);
    let run = run_scenario(&s).unwrap();
    let mut cfg: PipelineConfig = s.pipeline.clone();
    cfg.map = Some(std::sync::Arc::new(OcvMap::synthetic()));
    cfg.fusion.initial_soc = s.initial_guess;
    let mut pipeline = Pipeline::new(cfg).unwrap();
    let start = Instant::now();
    for sample in &run.telemetry {
        std::hint::black_box(pipeline.step(sample).unwrap());
    }
    let mean = start.elapsed().as_secs_f64() / run.telemetry.len() as f64;
    outcome(
        mean < 1e-3,
        format!(
            "mean pipeline step {:.2} us over {} steps (< 1000 us)",
            mean * 1e6,
            run.telemetry.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("C1 linear-model exactness", c1),
        ("C2 bias-transfer identity", c2),
        ("C3 covariance scaling identity", c3),
        ("C4 excitation gating", c4),
        ("C5 quantization bound", c5),
        ("C6 hysteresis closed form", c6),
        ("C7 map inversion", c7),
        ("C8 scalar-Kalman identities", c8),
        ("C9 end-to-end orderings", c9),
        ("C10 per-step cost", c10),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let o = f();
        println!("{} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.passed as usize;
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

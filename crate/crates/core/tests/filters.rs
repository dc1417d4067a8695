use num_complex::Complex64;
use proptest::prelude::*;
use soc_kit_core::signal_filter::{design_filter, DiscreteSiso, FilterBank, FilterDesign};

fn bank() -> FilterBank {
    design_filter(FilterDesign::new(0.25, 1.0, 1.0).unwrap()).unwrap()
}

/// `C (zI − A)⁻¹ B + D` evaluated from the realization matrices.
fn response(sys: &DiscreteSiso, z: Complex64) -> Complex64 {
    let a = sys.a();
    let (b, c) = (sys.b(), sys.c());
    let m00 = z - a[(0, 0)];
    let m01 = Complex64::from(-a[(0, 1)]);
    let m10 = Complex64::from(-a[(1, 0)]);
    let m11 = z - a[(1, 1)];
    let det = m00 * m11 - m01 * m10;
    let x0 = (m11 * b[0] - m01 * b[1]) / det;
    let x1 = (-m10 * b[0] + m00 * b[1]) / det;
    c[0] * x0 + c[1] * x1 + sys.d()
}

/// The printed discrete forms, written out independently of the crate.
fn printed(design: &FilterDesign, z: Complex64) -> [Complex64; 3] {
    let (l0, l1, ts) = (design.lambda0, design.lambda1, design.ts);
    let s = (z - 1.0) / (z * ts);
    let den = s * s + s * l1 + l0;
    [l0 / den, s * l0 / den, s * s * l0 / den]
}

#[test]
fn realizations_match_the_printed_transfer_functions() {
    let design = FilterDesign::new(0.25, 1.0, 1.0).unwrap();
    let b = design_filter(design).unwrap();
    for w in [0.01, 0.05, 0.3, 1.0, 2.5] {
        let z = Complex64::from_polar(1.0, w);
        let want = printed(&design, z);
        for (sys, want) in b.realizations().into_iter().zip(want) {
            let got = response(sys, z);
            assert!(
                (got - want).norm() < 1e-12 * want.norm().max(1.0),
                "w={w}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn dc_gains_from_the_transfer_function() {
    for (l0, l1, ts) in [(0.25, 1.0, 1.0), (4.0, 0.5, 0.1), (0.01, 0.3, 2.0)] {
        let b = design_filter(FilterDesign::new(l0, l1, ts).unwrap()).unwrap();
        let [g0, g1, g2] = b.realizations();
        let one = Complex64::from(1.0);
        assert!((response(g0, one) - 1.0).norm() < 1e-12);
        assert!(response(g1, one).norm() < 1e-12);
        assert!(response(g2, one).norm() < 1e-12);
    }
}

#[test]
fn sine_derivative_amplitude() {
    let w = 0.05;
    let mut b = bank();
    let mut y1 = Vec::new();
    for k in 0..2000 {
        y1.push(b.step((w * k as f64).sin()).unwrap().d1);
    }
    let settled = &y1[300..];
    let amp = settled.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!((amp - w).abs() < 0.02 * w, "amplitude {amp}");
    // Simulated amplitude agrees with the frequency response.
    let predicted = response(bank().realizations()[1], Complex64::from_polar(1.0, w)).norm();
    assert!((amp - predicted).abs() < 1e-4 * predicted, "{amp} vs {predicted}");
}

#[test]
fn derivatives_match_finite_differences() {
    let mut b = bank();
    let u: Vec<f64> = (0..3000)
        .map(|k| {
            let t = k as f64;
            (0.011 * t).sin() + 0.4 * (0.023 * t + 1.0).cos() + 0.2 * (0.037 * t).sin()
        })
        .collect();
    let out: Vec<_> = u.iter().map(|&x| b.step(x).unwrap()).collect();
    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    let (mut e1, mut e2, mut r1, mut r2) = (vec![], vec![], vec![], vec![]);
    for k in 300..out.len() {
        let fd1 = out[k].value - out[k - 1].value;
        let fd2 = out[k].d1 - out[k - 1].d1;
        e1.push(out[k].d1 - fd1);
        e2.push(out[k].d2 - fd2);
        r1.push(out[k].d1);
        r2.push(out[k].d2);
    }
    assert!(rms(&e1) < 0.05 * rms(&r1));
    assert!(rms(&e2) < 0.05 * rms(&r2));
}

fn outputs(design: FilterDesign, u: &[f64]) -> Vec<[f64; 3]> {
    let mut b = design_filter(design).unwrap();
    u.iter()
        .map(|&x| {
            let s = b.step(x).unwrap();
            [s.value, s.d1, s.d2]
        })
        .collect()
}

fn design_strategy() -> impl Strategy<Value = FilterDesign> {
    (0.01f64..4.0, 0.05f64..4.0, 0.1f64..2.0).prop_map(|(l0, l1, ts)| FilterDesign::new(l0, l1, ts).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linearity(
        design in design_strategy(),
        u1 in prop::collection::vec(-10.0f64..10.0, 50),
        u2 in prop::collection::vec(-10.0f64..10.0, 50),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
    ) {
        let mixed: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| alpha * a + beta * b).collect();
        let (y1, y2, ym) = (outputs(design, &u1), outputs(design, &u2), outputs(design, &mixed));
        for k in 0..mixed.len() {
            for j in 0..3 {
                let want = alpha * y1[k][j] + beta * y2[k][j];
                let scale = 1.0 + (alpha * y1[k][j]).abs() + (beta * y2[k][j]).abs();
                prop_assert!((ym[k][j] - want).abs() <= 1e-9 * scale);
            }
        }
    }

    /// Bounded input gives bounded output: every realization is stable and the
    /// response to |u| ≤ 1 stays below the ℓ¹ norm of its impulse response.
    #[test]
    fn stability(design in design_strategy(), u in prop::collection::vec(-1.0f64..1.0, 400)) {
        let b = design_filter(design).unwrap();
        let mut bounds = [0.0; 3];
        for (j, sys) in b.realizations().into_iter().enumerate() {
            prop_assert!(sys.spectral_radius() < 1.0);
            let mut probe = sys.clone();
            let mut l1 = probe.step(1.0).abs();
            for _ in 0..20_000 {
                l1 += probe.step(0.0).abs();
            }
            bounds[j] = l1;
        }
        for y in outputs(design, &u) {
            for j in 0..3 {
                prop_assert!(y[j].is_finite() && y[j].abs() <= bounds[j] * (1.0 + 1e-9));
            }
        }
    }
}

use super::*;
use crate::master::reduced_effective_solution;
use proptest::prelude::*;

fn synth(t_max: f64, n: usize, f: impl Fn(f64) -> f64) -> Vec<Sample> {
    (0..n).map(|k| t_max * k as f64 / (n - 1) as f64).map(|t| Sample::new(t, f(t), 0.0)).collect()
}

#[test]
fn reduced_model_fit_recovers_table_decay() {
    let g = 0.2;
    let s = synth(60.0, 601, |t| reduced_effective_solution(g, 1.0, 0.03, 0.0, t));
    let fit = fit_damped_cosine(&s).unwrap();
    assert!((fit.m2 / 0.06 - 1.0).abs() < 0.01, "{fit:?}");
    assert!((fit.m1 / (2.0 * g) - 1.0).abs() < 0.01);
}

#[test]
fn undamped_cosine_has_zero_decay() {
    let s = synth(50.0, 400, |t| 0.5 * (1.0 + (0.4 * t).cos()));
    let fit = fit_damped_cosine(&s).unwrap();
    assert!(fit.m2.abs() < 1e-8, "{}", fit.m2);
    assert!((fit.m1 - 0.4).abs() < 1e-8);
}

#[test]
fn gaussian_envelope_is_detected() {
    let k = 2e-3;
    let s = synth(40.0, 400, |t| 0.5 * (1.0 + (0.4 * t).cos() * (-k * t * t).exp()));
    let choice = fit_with_envelope_selection(&s, 2.0).unwrap();
    assert_eq!(choice.chosen, Envelope::Gaussian);
    assert!((choice.best().m2 / k - 1.0).abs() < 1e-6);
    // Exponential data keeps the exponential model.
    let s = synth(40.0, 400, |t| 0.5 * (1.0 + (0.4 * t).cos() * (-0.05 * t).exp()));
    assert_eq!(fit_with_envelope_selection(&s, 2.0).unwrap().chosen, Envelope::Exponential);
}

#[test]
fn fit_rejects_bad_input() {
    let flat = synth(10.0, 50, |_| 0.5);
    assert_eq!(fit_damped_cosine(&flat).unwrap_err(), EstimateError::NoSpectralPeak);
    let short = synth(10.0, 5, |t| t);
    assert!(matches!(fit_damped_cosine(&short), Err(EstimateError::TooFewSamples { .. })));
    let slow = synth(5.0, 50, |t| 0.5 * (1.0 + (0.4 * t).cos()));
    assert!(matches!(fit_damped_cosine(&slow), Err(EstimateError::InsufficientSpan { .. })));
}

#[test]
fn weighted_fit_reports_uncertainty() {
    let s: Vec<Sample> = (0..300)
        .map(|k| {
            let t = k as f64 * 0.2;
            let noise = 1e-3 * ((k * 7919 % 13) as f64 / 6.0 - 1.0);
            Sample::new(t, damped_cosine(t, 0.9, 0.5, 0.03, 0.01, Envelope::Exponential) + noise, 1e-3)
        })
        .collect();
    let fit = fit_damped_cosine(&s).unwrap();
    assert!((fit.m1 - 0.5).abs() < 5.0 * fit.m1_stderr() + 1e-4);
    assert!((fit.m2 - 0.03).abs() < 5.0 * fit.m2_stderr() + 1e-4);
    assert!(fit.m2_stderr() > 0.0 && fit.residual_norm > 0.0);
}

#[test]
fn perfect_protocol_is_heisenberg_limited() {
    let g = 0.2;
    let pts: Vec<(f64, f64)> = [10.0, 40.0, 160.0, 640.0]
        .iter()
        .map(|&tt| {
            let r = sensitivity(|t, g| perfect_probability(g, t), g, tt, &time_grid(tt, 4000)).unwrap();
            (tt, r.delta_g)
        })
        .collect();
    let s = scaling_exponent(&pts).unwrap();
    assert!((s + 1.0).abs() < 0.05, "{s}");
}

#[test]
fn ramsey_is_standard_limited() {
    let g = 0.2;
    let pts: Vec<(f64, f64)> = [10.0, 40.0, 160.0, 640.0]
        .iter()
        .map(|&tt| {
            let r = sensitivity(|t, g| ramsey_probability(g, 1.0, t), g, tt, &time_grid(10.0, 4000)).unwrap();
            (tt, r.delta_g)
        })
        .collect();
    let s = scaling_exponent(&pts).unwrap();
    assert!((s + 0.5).abs() < 0.05, "{s}");
}

#[test]
fn small_alpha_sensitivity_formula() {
    for alpha in [0.005, 0.01, 0.03] {
        let tt = 1e4;
        let grid = time_grid(4.0 / alpha, 40_000);
        let r = sensitivity(|t, g| reduced_effective_solution(g, 1.0, alpha, 0.0, t), 0.2, tt, &grid).unwrap();
        let want = small_alpha_sensitivity(1.0, alpha, tt);
        assert!((r.delta_g / want - 1.0).abs() < 0.1, "alpha {alpha}: {} vs {want}", r.delta_g);
    }
}

#[test]
fn finite_difference_is_second_order() {
    let p = |t: f64, g: f64| reduced_effective_solution(g, 1.0, 0.02, 0.0, t);
    for t in [3.3, 10.7, 25.1] {
        let r = richardson_ratio(&p, t, 0.2, 1e-2);
        assert!((3.8..=4.2).contains(&r), "{r}");
    }
}

#[test]
fn sensitivity_scales_with_time_units() {
    let c = 3.0;
    let grid: Vec<f64> = time_grid(100.0, 5000);
    let a = sensitivity(|t, g| reduced_effective_solution(g, 1.0, 0.02, 0.0, t), 0.2, 500.0, &grid).unwrap();
    let grid_c: Vec<f64> = grid.iter().map(|t| t / c).collect();
    let b = sensitivity(|t, g| reduced_effective_solution(g, c, 0.02, 0.0, t), 0.2 * c, 500.0 / c, &grid_c).unwrap();
    assert!((b.delta_g / (c * a.delta_g) - 1.0).abs() < 1e-6);
    assert!((b.optimal_t * c - a.optimal_t).abs() < 1e-9);
}

#[test]
fn scaling_exponent_edge_cases() {
    let flat: Vec<(f64, f64)> = [1.0, 10.0, 100.0, 1000.0].iter().map(|&t| (t, 2.0)).collect();
    assert!(scaling_exponent(&flat).unwrap().abs() < 1e-12);
    assert_eq!(scaling_exponent(&flat[..3]).unwrap_err(), EstimateError::InsufficientRange);
    let narrow: Vec<(f64, f64)> = [1.0, 2.0, 3.0, 4.0].iter().map(|&t| (t, 1.0 / t)).collect();
    assert_eq!(scaling_exponent(&narrow).unwrap_err(), EstimateError::InsufficientRange);
    assert!(matches!(scaling_exponent(&[(1.0, -1.0), (10.0, 1.0), (100.0, 1.0), (1000.0, 1.0)]), Err(EstimateError::NonPositive(_))));
    assert_eq!(
        sensitivity(|_, _| 0.5, 0.2, 10.0, &[1.0, 2.0]).unwrap_err(),
        EstimateError::DerivativeVanishes
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn fit_round_trip(a in 0.6f64..1.0, m1 in 0.2f64..1.5, m2 in 0.0f64..0.08, c in -0.05f64..0.05) {
        let s = synth(60.0, 600, |t| damped_cosine(t, a, m1, m2, c, Envelope::Exponential));
        let fit = fit_damped_cosine(&s).unwrap();
        prop_assert!((fit.m1 / m1 - 1.0).abs() < 1e-3);
        prop_assert!((fit.m2 - m2).abs() < 1e-3 * m2.max(1e-5));
        prop_assert!((fit.amplitude - a).abs() < 1e-3);
        prop_assert!(fit.m2 >= 0.0);
    }
}

use super::*;
use crate::analytic::{exact_probability_with, DelayParams, FirstFactor};
use crate::master::{integrate, uniform_times, MasterConfig};
use crate::protocols::{build_example_i, build_example_ii, DephasingStrategy, NoiseModel};
use proptest::prelude::*;

fn example_i(g: f64, gamma: f64) -> SensorCode {
    build_example_i(g, gamma, DephasingStrategy::ExactTerm).unwrap()
}

fn perfect(t: f64, g: f64) -> f64 {
    0.5 * (1.0 + (2.0 * g * t).cos())
}

#[test]
fn readout_examples() {
    let code = example_i(0.2, 1.0);
    assert!((readout_probability(&code.initial_state(), &code) - 1.0).abs() < 1e-14);
    let [a, b] = &code.code_states;
    let anti = a.sub(b).scale(C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0));
    assert!(readout_probability(&anti, &code) < 1e-14);
    let t = 3.7;
    let psi = a
        .scale(C64::from_polar(1.0, -0.2 * t))
        .add(&b.scale(C64::from_polar(1.0, 0.2 * t)))
        .scale(C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0));
    assert!((readout_probability(&psi, &code) - perfect(t, 0.2)).abs() < 1e-14);
}

#[test]
fn no_decay_gives_pure_oscillation() {
    let code = example_i(0.2, 0.0);
    let cfg = TrajectoryConfig::new(code, NoiseModel::ideal(0.0), 0.2, 20.0).with_n_traj(3);
    let res = ensemble_probability(&cfg).unwrap();
    for (t, p) in res.times.iter().zip(&res.p_initial) {
        assert!((p - perfect(*t, 0.2)).abs() < 1e-10);
    }
    assert!(res.n_clicks_mean.iter().all(|&c| c == 0.0));
}

#[test]
fn perfect_protocol_tracks_ideal_curve() {
    let code = example_i(0.2, 1.0);
    let cfg = TrajectoryConfig::new(code, NoiseModel::ideal(1.0), 0.2, 20.0)
        .with_dt(0.01)
        .with_n_traj(400)
        .with_record_times(uniform_times(20.0, 21));
    let res = ensemble_probability(&cfg).unwrap();
    for ((t, p), se) in res.times.iter().zip(&res.p_initial).zip(&res.stderr) {
        // Every trajectory is corrected perfectly, so the spread itself vanishes.
        assert!((p - perfect(*t, 0.2)).abs() < 3.0 * se + 1e-9, "t={t}: {p}");
    }
    let last = *res.n_clicks_mean.last().unwrap();
    assert!((last / 20.0 - 1.0).abs() < 0.1, "click rate {last}");
}

fn assert_matches_master(code: SensorCode, noise: NoiseModel, g: f64, duration: f64, n: usize) {
    let times = uniform_times(duration, 11);
    let mcfg = MasterConfig::new(code.clone(), noise, g, duration).with_dt(2e-3).with_record_times(times.clone());
    let m = integrate(&mcfg).unwrap();
    let cfg = TrajectoryConfig::new(code, noise, g, duration)
        .with_dt(5e-3)
        .with_n_traj(n)
        .with_seed(11)
        .with_record_times(times);
    let r = ensemble_probability(&cfg).unwrap();
    let mut chi2 = 0.0;
    let mut dof = 0;
    for j in 0..r.times.len() {
        let se = r.stderr[j];
        if se > 1e-6 {
            chi2 += ((r.p_initial[j] - m.p[j]) / se).powi(2);
            dof += 1;
        } else {
            assert!((r.p_initial[j] - m.p[j]).abs() < 1e-6);
        }
    }
    // χ² p-value > 0.01 for up to 11 degrees of freedom.
    assert!(chi2 < 24.7, "chi2 = {chi2} over {dof}");
}

#[test]
fn lossy_detection_matches_master_equation() {
    assert_matches_master(example_i(0.2, 1.0), NoiseModel::ideal(1.0).with_loss(0.2), 0.2, 10.0, 1500);
}

#[test]
fn dark_counts_match_master_equation() {
    let noise = NoiseModel::ideal(1.0).with_loss(0.05).with_dark_rate(0.1);
    assert_matches_master(example_i(0.2, 1.0), noise, 0.2, 10.0, 1500);
}

#[test]
fn zeno_strategy_matches_master_equation() {
    let code = build_example_i(0.2, 1.0, DephasingStrategy::Zeno { interval: 0.05 }).unwrap();
    assert_matches_master(code, NoiseModel::ideal(1.0), 0.2, 8.0, 1500);
}

#[test]
fn example_ii_parity_monitoring_keeps_oscillation() {
    let code = build_example_ii(0.2, 1.0, DephasingStrategy::ExactTerm).unwrap().with_parity_interval(0.005).unwrap();
    let cfg = TrajectoryConfig::new(code, NoiseModel::ideal(1.0), 0.2, 6.0)
        .with_dt(0.005)
        .with_n_traj(200)
        .with_record_times(uniform_times(6.0, 7));
    let r = ensemble_probability(&cfg).unwrap();
    for (t, p) in r.times.iter().zip(&r.p_initial) {
        assert!((p - perfect(*t, 0.2)).abs() < 0.03, "t={t}: {p}");
    }
}

#[test]
fn total_loss_matches_master_equation() {
    assert_matches_master(example_i(0.2, 1.0), NoiseModel::ideal(1.0).with_loss(1.0), 0.2, 5.0, 1500);
}

#[test]
fn deterministic_and_single_trajectory_consistent() {
    let noise = NoiseModel::ideal(1.0).with_loss(0.1).with_dark_rate(0.05).with_delay(0.1);
    let cfg = TrajectoryConfig::new(example_i(0.2, 1.0), noise, 0.2, 10.0).with_dt(0.01).with_n_traj(32).with_seed(5);
    let a = ensemble_probability(&cfg).unwrap();
    let b = ensemble_probability(&cfg).unwrap();
    assert_eq!(a, b);
    let one = cfg.clone().with_n_traj(1);
    let e = ensemble_probability(&one).unwrap();
    let r = run_trajectory(&one, 0).unwrap();
    assert_eq!(e.p_initial, r.p);
    assert!(e.stderr.iter().all(|&s| s == 0.0));
    let other = ensemble_probability(&cfg.with_seed(6)).unwrap();
    assert_ne!(a.p_initial, other.p_initial);
}

#[test]
fn waiting_times_are_exponential() {
    let cfg = TrajectoryConfig::new(example_i(0.2, 1.0), NoiseModel::ideal(1.0), 0.2, 200.0).with_dt(2e-3);
    let mut waits = vec![];
    for i in 0..20 {
        let r = run_trajectory(&cfg, i).unwrap();
        let mut prev = 0.0;
        for c in &r.clicks {
            waits.push(c.time - prev);
            prev = c.time;
        }
    }
    waits.sort_by(f64::total_cmp);
    let n = waits.len() as f64;
    let d = waits
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let f = 1.0 - (-w).exp();
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    // Kolmogorov–Smirnov at the 1% level.
    assert!(d < 1.63 / n.sqrt(), "D = {d} with n = {n}");
}

#[test]
fn delayed_trajectories_match_product_formula() {
    let (g, tau) = (0.2, 0.2);
    let noise = NoiseModel::ideal(1.0).with_delay(tau);
    let cfg = TrajectoryConfig::new(example_i(g, 1.0), noise, g, 30.0).with_dt(0.01).with_seed(3);
    let p = DelayParams::new(tau, g, 1.0).unwrap();
    let engine = Engine::new(&cfg).unwrap();
    for i in 0..20 {
        let r = engine.run(i).unwrap();
        let Some((_, got)) = r.after_last_correction else { continue };
        let last = r.clicks.iter().rev().find(|c| c.detected).unwrap();
        let mut clicks = r.clicks.clone();
        // Only clicks whose correction has already been applied.
        if last.time + tau > cfg.duration {
            clicks.pop();
        }
        let times = product_intervals(&clicks, tau);
        let want = exact_probability_with(&times, &p, FirstFactor::Exact).unwrap();
        assert!((got - want).abs() < 1e-8, "traj {i}: {got} vs {want}");
    }
}

#[test]
fn dead_time_mitigation_keeps_frequency() {
    let noise = NoiseModel::ideal(1.0).with_dead_time(0.02);
    let times = uniform_times(30.0, 61);
    let base = TrajectoryConfig::new(example_i(0.2, 1.0), noise, 0.2, 30.0)
        .with_dt(0.01)
        .with_n_traj(600)
        .with_record_times(times);
    let run = |mitigate: bool| {
        let cfg = base.clone().with_options(TrajectoryOptions { dead_time_mitigation: mitigate, ..Default::default() });
        let r = ensemble_probability(&cfg).unwrap();
        let s: Vec<_> = r.times.iter().zip(&r.p_initial).map(|(&t, &p)| crate::estimate::Sample::new(t, p, 0.0)).collect();
        crate::estimate::fit_damped_cosine(&s).unwrap()
    };
    let off = run(false);
    let on = run(true);
    assert!(off.m2 > 0.005, "dead time should add decay: {}", off.m2);
    assert!((on.m1 / 0.4 - 1.0).abs() < 0.03, "gated frequency {}", on.m1);
}

#[test]
fn config_validation() {
    let code = example_i(0.2, 1.0);
    let ok = TrajectoryConfig::new(code.clone(), NoiseModel::ideal(1.0), 0.2, 5.0);
    assert!(ok.validate().is_ok());
    assert!(ok.clone().with_dt(0.02).validate().is_err());
    assert!(ok.clone().with_n_traj(0).validate().is_err());
    assert!(ok.clone().with_record_times(vec![1.0, 0.5]).validate().is_err());
    assert!(ok.clone().with_record_times(vec![6.0]).validate().is_err());
    assert!(TrajectoryConfig::new(code, NoiseModel::ideal(2.0), 0.2, 5.0).validate().is_err());
}

#[test]
fn intervals_skip_undetected_clicks() {
    let ev = |time: f64, detected: bool| ClickEvent { time, label: "q1".into(), detected, dark: false };
    let v = product_intervals(&[ev(1.0, true), ev(1.5, false), ev(3.0, true)], 0.2);
    assert_eq!(v.len(), 2);
    assert!((v[1] - 1.8).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn probabilities_stay_in_unit_interval(
        alpha in 0.0f64..1.0, kappa in 0.0f64..0.5, tau in 0.0f64..0.3, seed in 0u64..1000,
    ) {
        let noise = NoiseModel::ideal(1.0).with_loss(alpha).with_dark_rate(kappa).with_delay(tau);
        let cfg = TrajectoryConfig::new(example_i(0.3, 1.0), noise, 0.3, 5.0).with_dt(0.01).with_n_traj(4).with_seed(seed);
        let r = ensemble_probability(&cfg).unwrap();
        prop_assert!(r.p_initial.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}

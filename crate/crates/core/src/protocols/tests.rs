use super::*;
use crate::qlin::{expectation, expm, states::*};
use proptest::prelude::*;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

fn ex1() -> SensorCode {
    build_example_i(0.2, 1.0, DephasingStrategy::ExactTerm).unwrap()
}

fn ex2() -> SensorCode {
    build_example_ii(0.2, 1.0, DephasingStrategy::ExactTerm).unwrap()
}

fn up_to_phase(a: &Operator, b: &Operator) -> f64 {
    // Align the global phase on the largest entry of `b`.
    let (mut k, mut best) = (0, 0.0);
    for (i, z) in b.as_slice().iter().enumerate() {
        if z.norm() > best {
            best = z.norm();
            k = i;
        }
    }
    let phase = a.as_slice()[k] / b.as_slice()[k];
    a.max_abs_diff(&b.scale(phase))
}

#[test]
fn example_i_correction_maps_decayed_state_to_code() {
    let code = ex1();
    let c = code.correction("q1").unwrap();
    let out = c.apply(&tensor(&down(), &zero()));
    assert!(out.max_abs_diff(&tensor(&plus(), &zero())) < 1e-14);
    let out = c.apply(&tensor(&down(), &one()));
    assert!(out.max_abs_diff(&tensor(&minus(), &one())) < 1e-14);
}

#[test]
fn example_i_correction_equals_frame_mapping() {
    let code = ex1();
    let sm = &code.jumps[0].op;
    let imgs = [sm.apply(&code.code_states[0]), sm.apply(&code.code_states[1])];
    let frame = frame_correction("q1", [&imgs[0], &imgs[1]], &code.code_states, &code.wrong_states).unwrap();
    assert!(frame.max_abs_diff(code.correction("q1").unwrap()) < 1e-12);
}

#[test]
fn gate_decomposition_needs_flipped_sigma_y() {
    let exp_i = |op: Operator, angle: f64| expm(&op.scale(C64::new(0.0, angle))).unwrap();
    let build = |ysign: f64| {
        let y1 = pauli_on(2, 1, Axis::Y).unwrap().scale_re(ysign);
        let z2 = pauli_on(2, 2, Axis::Z).unwrap();
        let xz = pauli_string(2, &[(1, Axis::X), (2, Axis::Z)]).unwrap();
        let x1 = pauli_on(2, 1, Axis::X).unwrap();
        let a = &exp_i(y1, -FRAC_PI_4) * &exp_i(z2, -FRAC_PI_4);
        let b = &exp_i(xz, FRAC_PI_4) * &exp_i(x1, -FRAC_PI_4);
        &a * &b
    };
    let c = ex1().corrections["q1"].clone();
    assert!(up_to_phase(&build(-1.0), &c) < 1e-9);
    assert!(up_to_phase(&build(1.0), &c) > 1e-3);
}

#[test]
fn exact_term_makes_code_states_eigenstates() {
    for code in [ex1(), ex2()] {
        let hnh = code.h_nh(code.g);
        let mut eig = vec![];
        for psi in &code.code_states {
            let (lam, r) = eigen_residual(&hnh, psi);
            assert!(r < 1e-9, "{} residual {r}", code.name);
            eig.push(lam);
        }
        let decay = if code.n_qubits == 2 { 0.5 } else { 1.5 };
        assert!((eig[0] - C64::new(code.g, -decay * code.gamma)).norm() < 1e-9);
        assert!((eig[1] - C64::new(-code.g, -decay * code.gamma)).norm() < 1e-9);
    }
}

#[test]
fn printed_sign_fails_with_right_handed_sigma_y() {
    let code = ex1();
    let flipped = &(&code.h_nh(0.2) - &code.exact_term) - &code.exact_term;
    let (_, r) = eigen_residual(&flipped, &code.code_states[0]);
    assert!(r > 0.1);
}

#[test]
fn example_ii_parity_flags_ancilla_decay() {
    let code = ex2();
    let m = code.parity_monitor.as_ref().unwrap();
    let psi = code.initial_state();
    assert!((expectation(&psi, &m.parity).unwrap().re - 1.0).abs() < 1e-12);
    let decayed = code.channel("q2").unwrap().op.apply(&psi);
    assert!((expectation(&decayed, &m.parity).unwrap().re + 1.0).abs() < 1e-12);
    assert!((expectation(&decayed, &m.locator).unwrap().re + 1.0).abs() < 1e-12);
    let decayed3 = code.channel("q3").unwrap().op.apply(&psi);
    assert!((expectation(&decayed3, &m.locator).unwrap().re - 1.0).abs() < 1e-12);
}

fn logical(code: &SensorCode, phi: f64) -> StateVector {
    code.code_states[0]
        .scale(C64::from_polar(FRAC_1_SQRT_2, -phi))
        .add(&code.code_states[1].scale(C64::from_polar(FRAC_1_SQRT_2, phi)))
}

#[test]
fn example_ii_corrections_restore_logical_phase() {
    let code = ex2();
    for label in ["q1", "q2", "q3"] {
        let psi = logical(&code, 0.37);
        let after = code.channel(label).unwrap().op.apply(&psi).normalized().unwrap();
        let fixed = code.correction(label).unwrap().apply(&after);
        assert!((fixed.fidelity(&psi) - 1.0).abs() < 1e-9, "{label}");
    }
}

#[test]
fn jump_and_correction_preserve_phase() {
    for code in [ex1(), build_xy_code(0.7, 0.2, 1.0, DephasingStrategy::ExactTerm).unwrap()] {
        let psi = logical(&code, 1.1);
        let after = code.jumps[0].op.apply(&psi).normalized().unwrap();
        let fixed = code.corrections["q1"].apply(&after);
        assert!(1.0 - fixed.fidelity(&psi) < 1e-12);
    }
}

#[test]
fn xy_reduces_to_example_i() {
    for strategy in [DephasingStrategy::ExactTerm, DephasingStrategy::EnergyGap { omega: 7.0 }] {
        let a = build_xy_code(0.0, 0.3, 1.3, strategy).unwrap();
        let b = build_example_i(0.3, 1.3, strategy).unwrap();
        assert!(a.h_nh(0.3).max_abs_diff(&b.h_nh(0.3)) < 1e-12);
        assert!(a.corrections["q1"].max_abs_diff(&b.corrections["q1"]) < 1e-12);
        for k in 0..2 {
            assert!(a.code_states[k].max_abs_diff(&b.code_states[k]) < 1e-12);
        }
    }
}

#[test]
fn xy_code_states_are_signal_eigenstates() {
    for theta in [0.0, 0.4, FRAC_PI_2, 2.5] {
        let code = build_xy_code(theta, 0.2, 1.0, DephasingStrategy::ExactTerm).unwrap();
        let s = code.signal(0.2);
        let (l0, r0) = eigen_residual(&s, &code.code_states[0]);
        let (l1, r1) = eigen_residual(&s, &code.code_states[1]);
        assert!(r0 < 1e-12 && r1 < 1e-12);
        assert!((l0.re - 0.2).abs() < 1e-12 && (l1.re + 0.2).abs() < 1e-12);
        let hnh = code.h_nh(0.2);
        assert!(eigen_residual(&hnh, &code.code_states[0]).1 < 1e-9);
        assert!(eigen_residual(&hnh, &code.code_states[1]).1 < 1e-9);
    }
    // θ = π/2: σ_y signal; |O_+⟩ is the +1 eigenstate of σ_y¹.
    let code = build_xy_code(FRAC_PI_2, 1.0, 1.0, DephasingStrategy::ExactTerm).unwrap();
    let y1 = pauli_on(2, 1, Axis::Y).unwrap();
    assert!((expectation(&code.code_states[0], &y1).unwrap().re - 1.0).abs() < 1e-12);
    assert!((expectation(&code.code_states[1], &y1).unwrap().re + 1.0).abs() < 1e-12);
}

#[test]
fn general_code_reduces_and_refuses_pure_z() {
    let gen = build_general_signal_code(FRAC_PI_2, 0.0, 0.2, 1.0, 50.0).unwrap();
    let xy = build_xy_code(0.0, 0.2, 1.0, DephasingStrategy::EnergyGap { omega: 50.0 }).unwrap();
    assert!(gen.h_nh(0.2).max_abs_diff(&xy.h_nh(0.2)) < 1e-12);
    assert!(matches!(
        build_general_signal_code(0.0, 0.0, 0.2, 1.0, 50.0),
        Err(ProtocolError::InvalidParameter { name: "theta", .. })
    ));
    assert!(build_general_signal_code(PI, 0.3, 0.2, 1.0, 50.0).is_err());
    assert!((build_general_signal_code(0.5, 0.3, 0.2, 1.0, 50.0).unwrap().sensed_scale - 0.5f64.sin()).abs() < 1e-15);
}

#[test]
fn homodyne_decomposition_identity() {
    for b in [-1.3, 0.0, 0.25, 1.0, 3.0] {
        let z = pauli(Axis::Z);
        let x = pauli(Axis::X);
        let lhs = &(&z.scale_re(0.5) + &x.scale_re(b)).scale_re(0.5) - &(&z.scale_re(-b) + &x.scale_re(0.5)).scale_re(b);
        let rhs = lhs.scale_re(1.0 / (b * b + 0.25));
        assert!(rhs.max_abs_diff(&z) < 1e-12);
    }
}

#[test]
fn homodyne_code_properties() {
    let zero_b = build_homodyne_z(0.0, 0.2, 1.0).unwrap();
    let sm = pauli_on(2, 1, Axis::Minus).unwrap();
    assert!(zero_b.jumps[0].op.max_abs_diff(&sm) < 1e-15);
    assert!(homodyne_axis(0.0).max_abs_diff(&pauli(Axis::X)) < 1e-15);

    for b in [0.3, 1.0, -2.0] {
        let [u, d] = homodyne_eigenstates(b);
        let ax = homodyne_axis(b);
        assert!(eigen_residual(&ax, &u).1 < 1e-12 && (eigen_residual(&ax, &u).0.re - 1.0).abs() < 1e-12);
        assert!(eigen_residual(&ax, &d).1 < 1e-12 && (eigen_residual(&ax, &d).0.re + 1.0).abs() < 1e-12);
        let z = pauli(Axis::Z);
        let gap = expectation(&u, &z).unwrap().re - expectation(&d, &z).unwrap().re;
        assert!(gap.abs() > 1e-3);

        let code = build_homodyne_z(b, 0.2, 1.0).unwrap();
        let jtj = &code.jumps[0].op.dagger() * &code.jumps[0].op;
        let n0 = jtj.sandwich(code.code_states[0].amplitudes());
        let n1 = jtj.sandwich(code.code_states[1].amplitudes());
        let off = jtj.sandwich(&code.code_states[0].add(&code.code_states[1]).into_amplitudes()) - n0 - n1;
        assert!((n0 - n1).norm() < 1e-12 && off.norm() < 1e-12);
        assert!(code.hamiltonian(0.2).is_hermitian(1e-12));
    }
}

#[test]
fn interferometer_diagonal_condition_and_signal() {
    let code = build_interferometer_code(0.3, 0.1, 1.0).unwrap();
    let total: Vec<f64> = code
        .code_states
        .iter()
        .map(|s| code.jumps.iter().map(|j| (&j.op.dagger() * &j.op).sandwich(s.amplitudes()).re).sum())
        .collect();
    assert!((total[0] - total[1]).abs() < 1e-12);
    for j in &code.jumps {
        let jj = &j.op.dagger() * &j.op;
        for s in &code.code_states {
            assert!((jj.sandwich(s.amplitudes()).re - 0.5).abs() < 1e-12);
        }
    }
    let s = code.signal(code.g);
    let e0 = expectation(&code.code_states[0], &s).unwrap().re;
    let e1 = expectation(&code.code_states[1], &s).unwrap().re;
    assert!((e0 - e1 - 2.0 * 0.2).abs() < 1e-12);

    let degenerate = build_interferometer_code(0.2, 0.2, 1.0).unwrap();
    let s = degenerate.signal(degenerate.g);
    let e0 = expectation(&degenerate.code_states[0], &s).unwrap().re;
    let e1 = expectation(&degenerate.code_states[1], &s).unwrap().re;
    assert!((e0 - e1).abs() < 1e-15);
    for code in [code, degenerate] {
        let hnh = code.h_nh(code.g);
        assert!(code.code_states.iter().all(|s| eigen_residual(&hnh, s).1 < 1e-12));
    }
}

#[test]
fn strategies_and_noise_are_validated() {
    assert!(build_example_i(0.2, 1.0, DephasingStrategy::EnergyGap { omega: 0.0 }).is_err());
    assert!(build_example_i(0.2, 1.0, DephasingStrategy::Zeno { interval: -1.0 }).is_err());
    assert!(build_example_i(0.2, -1.0, DephasingStrategy::ExactTerm).is_err());
    assert!(NoiseModel::ideal(1.0).with_loss(1.5).validate().is_err());
    assert!(NoiseModel::ideal(1.0).with_dark_rate(-0.1).validate().is_err());
    assert!(NoiseModel::ideal(1.0).with_loss(1.0).with_delay(0.2).validate().is_ok());
    let z = build_example_i(0.2, 1.0, DephasingStrategy::Zeno { interval: 0.01 }).unwrap();
    assert_eq!(z.strategy_term, Operator::zeros(4));
    assert_eq!(z.strategy.zeno_interval(), Some(0.01));
}

#[test]
fn sigma_z_recovery_swaps_partners() {
    let code = ex1();
    let r = code.sigma_z_recovery();
    assert!(r.is_unitary(1e-12));
    for k in 0..2 {
        assert!(r.apply(&code.wrong_states[k]).max_abs_diff(&code.code_states[k]) < 1e-14);
    }
}

#[test]
fn non_orthogonal_images_are_rejected() {
    let code = [tensor(&up(), &zero()), tensor(&down(), &one())];
    let img = tensor(&down(), &zero());
    let err = frame_correction("x", [&img, &img], &code, &[]).unwrap_err();
    assert!(matches!(err, ProtocolError::NotCorrectable(_)));
}

proptest! {
    #[test]
    fn every_builder_passes_invariants(theta in 0.1f64..3.0, phi in -3.0f64..3.0, g in -1.0f64..1.0, gamma in 0.0f64..2.0, b in -2.0f64..2.0) {
        let codes = [
            build_example_i(g, gamma, DephasingStrategy::ExactTerm).unwrap(),
            build_example_ii(g, gamma, DephasingStrategy::EnergyGap { omega: 5.0 }).unwrap(),
            build_xy_code(phi, g, gamma, DephasingStrategy::ExactTerm).unwrap(),
            build_general_signal_code(theta, phi, g, gamma, 10.0).unwrap(),
            build_homodyne_z(b, g, gamma).unwrap(),
            build_interferometer_code(g, 0.5 * g, gamma).unwrap(),
        ];
        for code in &codes {
            prop_assert!(code.validate().is_ok());
            prop_assert!(code.hamiltonian(g).is_hermitian(1e-12));
        }
        // Exact-term codes keep both code states as H_nh eigenstates.
        for code in [&codes[0], &codes[2]] {
            let hnh = code.h_nh(g);
            for s in &code.code_states {
                prop_assert!(eigen_residual(&hnh, s).1 < 1e-9);
            }
        }
    }
}

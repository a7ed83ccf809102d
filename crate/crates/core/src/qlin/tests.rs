use super::states::*;
use super::*;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn example_i_hnh(g: f64, gamma: f64) -> Operator {
    let sx = pauli_on(2, 1, Axis::X).unwrap();
    let n1 = &pauli_on(2, 1, Axis::Plus).unwrap() * &pauli_on(2, 1, Axis::Minus).unwrap();
    let term = pauli_string(2, &[(1, Axis::Y), (2, Axis::Z)]).unwrap();
    &(&sx.scale_re(g) - &n1.scale(c(0.0, gamma))) + &term.scale_re(-gamma / 2.0)
}

#[test]
fn tensor_basis_action() {
    let x1 = tensor(&pauli(Axis::X), &Operator::identity(2));
    let out = x1.apply(&tensor(&up(), &zero()));
    assert!(out.max_abs_diff(&tensor(&down(), &zero())) < 1e-15);

    let h = std::f64::consts::FRAC_1_SQRT_2;
    let s = tensor(&plus(), &zero());
    assert!(s.max_abs_diff(&StateVector::from_real(&[h, 0.0, h, 0.0])) < 1e-15);

    let i4 = tensor(&Operator::identity(2), &Operator::identity(2));
    assert_eq!(i4, Operator::identity(4));
}

#[test]
fn pauli_on_examples() {
    let sm = pauli_on(1, 1, Axis::Minus).unwrap();
    assert!(sm.apply(&up()).max_abs_diff(&down()) < 1e-15);

    let xz = &pauli_on(2, 1, Axis::X).unwrap() * &pauli_on(2, 2, Axis::Z).unwrap();
    let s = tensor(&plus(), &zero());
    assert!(xz.apply(&s).max_abs_diff(&s) < 1e-15);

    let n = &pauli_on(1, 1, Axis::Plus).unwrap() * &pauli_on(1, 1, Axis::Minus).unwrap();
    assert_eq!(n, Operator::diagonal(&[ONE, ZERO]));

    assert_eq!(pauli_on(2, 3, Axis::X).unwrap_err(), QlinError::SiteOutOfRange { site: 3, n_qubits: 2 });
    assert!(pauli_on(2, 0, Axis::X).is_err());
}

#[test]
fn pauli_algebra_is_right_handed() {
    let (x, y, z) = (pauli(Axis::X), pauli(Axis::Y), pauli(Axis::Z));
    assert!((&x * &y).max_abs_diff(&z.scale(I)) < 1e-15);
    let sp = pauli(Axis::Plus);
    assert!(sp.max_abs_diff(&(&x + &y.scale(I)).scale_re(0.5)) < 1e-15);
    assert_eq!(pauli(Axis::Plus), pauli(Axis::Minus).dagger());
}

#[test]
fn evolve_code_state_is_global_phase() {
    let (g, gamma) = (0.3, 1.0);
    let h = example_i_hnh(g, gamma);
    let s = tensor(&plus(), &zero());
    for &t in &[0.1, 1.0, 7.5] {
        let out = evolve_nonhermitian(&s, &h, t).unwrap();
        let expect = s.scale(c(-gamma * t / 2.0, -g * t).exp());
        assert!(out.max_abs_diff(&expect) < 1e-12, "t={t}");
    }
}

#[test]
fn evolve_zero_time_is_identity() {
    let h = example_i_hnh(0.2, 1.0);
    let s = tensor(&minus(), &one());
    assert_eq!(evolve_nonhermitian(&s, &h, 0.0).unwrap(), s);
}

#[test]
fn excited_state_norm_decays_at_twice_gamma() {
    let gamma = 0.7;
    let n = &pauli(Axis::Plus) * &pauli(Axis::Minus);
    let h = n.scale(c(0.0, -gamma));
    for &t in &[0.0, 0.5, 2.0] {
        let out = evolve_nonhermitian(&up(), &h, t).unwrap();
        assert!((out.norm_sqr() - (-2.0 * gamma * t).exp()).abs() < 1e-13);
    }
}

#[test]
fn expectation_examples() {
    assert!((expectation(&plus(), &pauli(Axis::X)).unwrap() - ONE).norm() < 1e-15);
    let n1 = &pauli_on(2, 1, Axis::Plus).unwrap() * &pauli_on(2, 1, Axis::Minus).unwrap();
    let e = expectation(&tensor(&plus(), &zero()), &n1).unwrap();
    assert!((e - c(0.5, 0.0)).norm() < 1e-15);
    assert!((expectation(&down(), &pauli(Axis::Z)).unwrap() + ONE).norm() < 1e-15);
    // Normalized: scaling the state leaves it unchanged.
    let e2 = expectation(&plus().scale(c(0.0, 3.0)), &pauli(Axis::X)).unwrap();
    assert!((e2 - ONE).norm() < 1e-14);
    let zero_state = StateVector::new(vec![ZERO, ZERO]);
    assert_eq!(expectation(&zero_state, &pauli(Axis::X)).unwrap_err(), QlinError::ZeroNorm);
}

#[test]
fn eigenvalues_of_corrected_example_i_block() {
    // Both printed 2x2 blocks share eigenvalues ±g − iγ/2 numerically.
    let (g, gamma) = (0.25, 1.0);
    let h = example_i_hnh(g, gamma);
    let plus0 = tensor(&plus(), &zero());
    let minus1 = tensor(&minus(), &one());
    let l_plus = expectation(&plus0, &h).unwrap();
    let l_minus = expectation(&minus1, &h).unwrap();
    assert!((l_plus - c(g, -gamma / 2.0)).norm() < 1e-14);
    assert!((l_minus - c(-g, -gamma / 2.0)).norm() < 1e-14);
}

#[test]
fn pade_agrees_with_eigen_route() {
    let g = Operator::from_rows(vec![
        c(0.1, -0.4),
        c(0.3, 0.2),
        c(-0.5, 0.0),
        c(0.0, 0.7),
        c(0.2, 0.1),
        c(-0.3, -0.3),
        c(0.6, 0.1),
        c(0.0, 0.2),
        c(-0.1, 0.05),
    ])
    .unwrap();
    let prop = Propagator::new(g.clone()).unwrap();
    assert_eq!(prop.route(), ExpmRoute::Eigen);
    for &t in &[0.0, 0.3, 2.0, 9.0] {
        let a = prop.at(t).unwrap();
        let b = expm(&g.scale_re(t)).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-11 * b.max_abs().max(1.0), "t={t}");
    }
}

#[test]
fn jordan_block_falls_back_to_pade() {
    let j = Operator::from_rows(vec![c(-1.0, 0.0), ONE, ZERO, c(-1.0, 0.0)]).unwrap();
    let prop = Propagator::new(j).unwrap();
    assert_eq!(prop.route(), ExpmRoute::Pade);
    let t: f64 = 1.7;
    let e = prop.at(t).unwrap();
    let d = (-t).exp();
    let expect = Operator::from_rows(vec![c(d, 0.0), c(t * d, 0.0), ZERO, c(d, 0.0)]).unwrap();
    assert!(e.max_abs_diff(&expect) < 1e-13);
}

#[test]
fn large_norm_pade_matches_closed_form() {
    let h = pauli(Axis::X).scale_re(40.0);
    let e = expm(&h.scale(c(0.0, -1.0))).unwrap();
    let expect = &Operator::identity(2).scale_re(40f64.cos()) - &pauli(Axis::X).scale(c(0.0, 40f64.sin()));
    assert!(e.max_abs_diff(&expect) < 1e-12);
}

#[test]
fn non_finite_inputs_are_rejected() {
    let h = Operator::diagonal(&[c(f64::NAN, 0.0), ZERO]);
    assert!(matches!(evolve_nonhermitian(&up(), &h, 1.0), Err(QlinError::NonFinite(_))));
}

#[test]
fn density_matrix_invariants() {
    let rho = DensityMatrix::pure(&tensor(&plus(), &zero()).scale(c(0.0, 2.0))).unwrap();
    rho.validate().unwrap();
    DensityMatrix::maximally_mixed(4).validate().unwrap();
    let bad = DensityMatrix::from_operator_unchecked(Operator::diagonal(&[c(1.2, 0.0), c(-0.2, 0.0)]));
    assert!(bad.validate().is_err());
}

#[test]
fn flags_are_checked() {
    assert!(pauli(Axis::Minus).into_hermitian(HERMITIAN_TOL).is_err());
    assert!(pauli(Axis::Minus).into_unitary(UNITARY_TOL).is_err());
    assert!(pauli(Axis::Y).into_unitary(UNITARY_TOL).unwrap().is_flagged_unitary());
}

#[test]
fn solve_and_inverse() {
    let a = Operator::from_rows(vec![c(2.0, 1.0), c(0.0, 1.0), c(1.0, 0.0), c(3.0, -1.0)]).unwrap();
    let inv = a.inverse().unwrap();
    assert!((&a * &inv).max_abs_diff(&Operator::identity(2)) < 1e-14);
    assert_eq!(Operator::zeros(3).inverse().unwrap_err(), QlinError::Singular);
}

fn arb_c64() -> impl Strategy<Value = C64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| c(a, b))
}

fn arb_op(dim: usize) -> impl Strategy<Value = Operator> {
    proptest::collection::vec(arb_c64(), dim * dim).prop_map(|v| Operator::from_rows(v).unwrap())
}

fn arb_state(dim: usize) -> impl Strategy<Value = StateVector> {
    proptest::collection::vec(arb_c64(), dim).prop_map(StateVector::new)
}

// Dyadic entries keep every product exactly representable.
fn arb_dyadic() -> impl Strategy<Value = C64> {
    (-8i32..=8, -8i32..=8).prop_map(|(a, b)| c(a as f64 / 8.0, b as f64 / 8.0))
}

proptest! {
    #[test]
    fn tensor_is_associative(
        a in proptest::collection::vec(arb_dyadic(), 4),
        b in proptest::collection::vec(arb_dyadic(), 9),
        c2 in proptest::collection::vec(arb_dyadic(), 4),
    ) {
        let (a, b, c2) = (
            Operator::from_rows(a).unwrap(),
            Operator::from_rows(b).unwrap(),
            Operator::from_rows(c2).unwrap(),
        );
        let left = tensor(&tensor(&a, &b), &c2);
        let right = tensor(&a, &tensor(&b, &c2));
        prop_assert_eq!(left.as_slice(), right.as_slice());
    }

    #[test]
    fn state_tensor_is_associative(
        a in proptest::collection::vec(arb_dyadic(), 2),
        b in proptest::collection::vec(arb_dyadic(), 3),
        c2 in proptest::collection::vec(arb_dyadic(), 2),
    ) {
        let (a, b, c2) = (StateVector::new(a), StateVector::new(b), StateVector::new(c2));
        let left = tensor(&tensor(&a, &b), &c2);
        let right = tensor(&a, &tensor(&b, &c2));
        prop_assert_eq!(left.amplitudes(), right.amplitudes());
    }

    #[test]
    fn hermitian_evolution_preserves_norm(m in arb_op(4), psi in arb_state(4), t in 0.0f64..5.0) {
        prop_assume!(psi.norm() > 1e-3);
        let h = (&m + &m.dagger()).scale_re(0.5);
        let out = evolve_nonhermitian(&psi, &h, t).unwrap();
        prop_assert!((out.norm_sqr() - psi.norm_sqr()).abs() < 1e-10 * psi.norm_sqr());
    }

    #[test]
    fn propagator_semigroup(m in arb_op(3), t1 in 0.0f64..2.0, t2 in 0.0f64..2.0) {
        let g = m.scale(c(0.0, -1.0));
        let prop = Propagator::new(g).unwrap();
        let lhs = &prop.at(t1).unwrap() * &prop.at(t2).unwrap();
        let rhs = prop.at(t1 + t2).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-9);
    }

    #[test]
    fn norm_decay_rate_matches_excitation(hr in arb_op(4), psi in arb_state(4), gamma in 0.1f64..2.0) {
        prop_assume!(psi.norm() > 1e-2);
        // H_nh = H − iγ Σ σ_+σ_−; d‖ψ‖²/dt = −2γ Σ⟨σ_+σ_−⟩ ‖ψ‖²
        let h = (&hr + &hr.dagger()).scale_re(0.5);
        let mut excite = Operator::zeros(4);
        for site in 1..=2 {
            excite = &excite + &(&pauli_on(2, site, Axis::Plus).unwrap() * &pauli_on(2, site, Axis::Minus).unwrap());
        }
        let h_nh = &h - &excite.scale(c(0.0, gamma));
        let psi = psi.normalized().unwrap();
        let dt = 1e-5;
        let fwd = evolve_nonhermitian(&psi, &h_nh, dt).unwrap().norm_sqr();
        let fd = (fwd - 1.0) / dt;
        let expect = -2.0 * gamma * expectation(&psi, &excite).unwrap().re;
        prop_assert!((fd - expect).abs() < 1e-4 * (1.0 + expect.abs()), "fd={} expect={}", fd, expect);
    }
}

#[test]
fn general_eigenvalues_match_known_spectrum() {
    let a = Operator::from_rows(vec![c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(3.0, -1.0)]).unwrap();
    let mut ev = eigenvalues(&a).unwrap();
    ev.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
    assert!((ev[0] - c(1.0, 0.0)).norm() < 1e-12);
    assert!((ev[1] - c(3.0, -1.0)).norm() < 1e-12);
}

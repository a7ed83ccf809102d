//! Knill–Laflamme checks for a two-state code: the full condition, the
//! diagonal-only condition that suffices when every decay is detected, signal
//! sensability, and randomized scans for the σ_z no-go and the homodyne case.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::qlin::{pauli, pauli_on, Axis, Operator, StateVector, C64};

pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// `⟨ψ_α|E_i†E_j|ψ_β⟩ ≠ 0` for `α ≠ β`.
    OffDiagonal,
    /// `⟨ψ_0|E_i†E_j|ψ_0⟩ ≠ ⟨ψ_1|E_i†E_j|ψ_1⟩`; `value` is the difference.
    UnequalDiagonal,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub i: usize,
    pub j: usize,
    pub alpha: usize,
    pub beta: usize,
    pub kind: ViolationKind,
    pub value: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxisSample {
    pub theta: f64,
    pub phi: f64,
    pub sensable: bool,
    pub expectation_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KLReport {
    pub full_ok: bool,
    pub diagonal_ok: bool,
    pub full_violations: Vec<Violation>,
    pub diagonal_violations: Vec<Violation>,
    pub sensable_axes: Vec<AxisSample>,
    pub tolerance: f64,
}

fn element(a: &StateVector, m: &Operator, b: &StateVector) -> C64 {
    a.inner(&m.apply(b))
}

fn check_pairs(code: &[StateVector; 2], errors: &[Operator], tol: f64, diagonal_only: bool) -> Vec<Violation> {
    let mut out = vec![];
    for (i, ei) in errors.iter().enumerate() {
        for (j, ej) in errors.iter().enumerate() {
            if diagonal_only && i != j {
                continue;
            }
            let m = &ei.dagger() * ej;
            for (alpha, beta) in [(0, 1), (1, 0)] {
                let v = element(&code[alpha], &m, &code[beta]);
                if v.norm() > tol {
                    out.push(Violation { i, j, alpha, beta, kind: ViolationKind::OffDiagonal, value: (v.re, v.im) });
                }
            }
            let d = element(&code[0], &m, &code[0]) - element(&code[1], &m, &code[1]);
            if d.norm() > tol {
                out.push(Violation { i, j, alpha: 0, beta: 1, kind: ViolationKind::UnequalDiagonal, value: (d.re, d.im) });
            }
        }
    }
    out
}

/// `⟨ψ_α|E_i†E_j|ψ_β⟩ = c_ij δ_αβ` for all `i, j`.
pub fn kl_full_check(code: &[StateVector; 2], errors: &[Operator], tol: f64) -> Vec<Violation> {
    check_pairs(code, errors, tol, false)
}

/// The same restricted to `i = j`.
pub fn kl_diagonal_check(code: &[StateVector; 2], errors: &[Operator], tol: f64) -> Vec<Violation> {
    check_pairs(code, errors, tol, true)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sensability {
    /// Both states are eigenstates with distinct eigenvalues.
    pub sensable: bool,
    /// `λ_0 − λ_1` when both are eigenstates.
    pub eigen_gap: Option<f64>,
    /// `⟨0|S|0⟩ − ⟨1|S|1⟩`
    pub expectation_gap: f64,
}

fn eigen_value(s: &Operator, psi: &StateVector, tol: f64) -> Option<f64> {
    let n2 = psi.norm_sqr();
    let sv = s.apply(psi);
    let lambda = psi.inner(&sv) / n2;
    (sv.max_abs_diff(&psi.scale(lambda)) <= tol * n2.sqrt() && lambda.im.abs() <= tol).then_some(lambda.re)
}

pub fn sensable(code: &[StateVector; 2], signal: &Operator, tol: f64) -> Sensability {
    let e = |k: usize| element(&code[k], signal, &code[k]).re / code[k].norm_sqr();
    let gap = match (eigen_value(signal, &code[0], tol), eigen_value(signal, &code[1], tol)) {
        (Some(a), Some(b)) => Some(a - b),
        _ => None,
    };
    Sensability {
        sensable: gap.is_some_and(|g| g.abs() > tol),
        eigen_gap: gap,
        expectation_gap: e(0) - e(1),
    }
}

/// `sin θ cos φ σ_x + sin θ sin φ σ_y + cos θ σ_z` on `site`.
pub fn bloch_operator(n_qubits: usize, site: usize, theta: f64, phi: f64) -> Operator {
    let single = &(&pauli(Axis::X).scale_re(theta.sin() * phi.cos()) + &pauli(Axis::Y).scale_re(theta.sin() * phi.sin()))
        + &pauli(Axis::Z).scale_re(theta.cos());
    crate::qlin::embed(n_qubits, site, &single).expect("site in range")
}

/// Full report with single-body axes on `site` sampled on a `n_theta × n_phi` grid.
/// An axis counts as sensable here when the expectation gap exceeds `tol`.
pub fn kl_report(
    code: &[StateVector; 2],
    errors: &[Operator],
    n_qubits: usize,
    site: usize,
    grid: (usize, usize),
    tol: f64,
) -> KLReport {
    let full = kl_full_check(code, errors, tol);
    let diagonal = kl_diagonal_check(code, errors, tol);
    let mut axes = vec![];
    for a in 0..grid.0 {
        let theta = std::f64::consts::PI * a as f64 / (grid.0.max(2) - 1) as f64;
        for b in 0..grid.1 {
            let phi = 2.0 * std::f64::consts::PI * b as f64 / grid.1.max(1) as f64;
            let s = sensable(code, &bloch_operator(n_qubits, site, theta, phi), tol);
            axes.push(AxisSample { theta, phi, sensable: s.expectation_gap.abs() > tol, expectation_gap: s.expectation_gap });
        }
    }
    KLReport {
        full_ok: full.is_empty(),
        diagonal_ok: diagonal.is_empty(),
        full_violations: full,
        diagonal_violations: diagonal,
        sensable_axes: axes,
        tolerance: tol,
    }
}

/// First two columns of a Haar-random unitary.
pub fn haar_pair(dim: usize, rng: &mut ChaCha8Rng) -> [StateVector; 2] {
    let mut g = DMatrix::<C64>::from_fn(dim, 2, |_, _| {
        C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    });
    // Gram–Schmidt on Ginibre columns gives Haar-distributed frames.
    for k in 0..2 {
        for p in 0..k {
            let proj = g.column(p).dotc(&g.column(k));
            let col_p = g.column(p).clone_owned();
            let mut ck = g.column_mut(k);
            ck -= col_p * proj;
        }
        let n = g.column(k).norm();
        g.column_mut(k).unscale_mut(n);
    }
    [StateVector::new(g.column(0).iter().copied().collect()), StateVector::new(g.column(1).iter().copied().collect())]
}

/// Residuals (real) of orthonormality plus the diagonal condition for each `M = E†E`.
fn residuals(x: &[C64], dim: usize, ms: &[Operator]) -> Vec<f64> {
    let (u, v) = (StateVector::new(x[..dim].to_vec()), StateVector::new(x[dim..].to_vec()));
    let uv = u.inner(&v);
    let mut r = vec![u.norm_sqr() - 1.0, v.norm_sqr() - 1.0, uv.re, uv.im];
    for m in ms {
        let d = element(&u, m, &u) - element(&v, m, &v);
        let o = element(&u, m, &v);
        r.extend([d.re, o.re, o.im]);
    }
    r
}

/// Gauss–Newton (minimum-norm steps) onto the manifold of orthonormal pairs
/// satisfying the diagonal condition. `None` if it does not converge.
pub fn project_to_diagonal_kl(start: &[StateVector; 2], errors: &[Operator]) -> Option<[StateVector; 2]> {
    let dim = start[0].dim();
    let ms: Vec<Operator> = errors.iter().map(|e| &e.dagger() * e).collect();
    let mut x: Vec<C64> = start[0].amplitudes().iter().chain(start[1].amplitudes()).copied().collect();
    let h = 1e-7;
    for _ in 0..60 {
        let r = residuals(&x, dim, &ms);
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn < 1e-13 {
            let u = StateVector::new(x[..dim].to_vec());
            let v = StateVector::new(x[dim..].to_vec());
            return Some([u, v]);
        }
        // Central differences are exact up to O(h²) for these quadratic residuals.
        let n_par = 4 * dim;
        let mut jac = DMatrix::<f64>::zeros(r.len(), n_par);
        for p in 0..n_par {
            let (idx, imag) = (p / 2, p % 2 == 1);
            let step = if imag { C64::new(0.0, h) } else { C64::new(h, 0.0) };
            let mut xp = x.clone();
            xp[idx] += step;
            let mut xm = x.clone();
            xm[idx] -= step;
            let (rp, rm) = (residuals(&xp, dim, &ms), residuals(&xm, dim, &ms));
            for (row, (a, b)) in rp.iter().zip(&rm).enumerate() {
                jac[(row, p)] = (a - b) / (2.0 * h);
            }
        }
        let svd = jac.svd(true, true);
        let delta = svd.solve(&DVector::from_vec(r), 1e-10).ok()?;
        for p in 0..n_par {
            let c = if p % 2 == 1 { C64::new(0.0, delta[p]) } else { C64::new(delta[p], 0.0) };
            x[p / 2] -= c;
        }
        if x.iter().any(|z| !z.is_finite()) {
            return None;
        }
    }
    None
}

fn scan_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoGoViolation {
    pub index: u64,
    pub site: usize,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoGoReport {
    pub n_qubits: usize,
    pub n_sampled: usize,
    /// Codes brought onto the diagonal-condition manifold (and rechecked).
    pub n_tested: usize,
    pub n_excluded: usize,
    pub max_gap: f64,
    pub violations: Vec<NoGoViolation>,
}

/// Random two-state codes on `n_qubits` with every qubit decaying: each
/// Haar sample is projected onto the diagonal-condition manifold for
/// `{σ_−^i}`; those that make it must show equal `⟨σ_z^i⟩`.
pub fn sigma_z_nogo_scan(n_qubits: usize, n_codes: usize, seed: u64, tol: f64) -> NoGoReport {
    let errors: Vec<Operator> =
        (1..=n_qubits).map(|i| pauli_on(n_qubits, i, Axis::Minus).expect("site in range")).collect();
    let zs: Vec<Operator> = (1..=n_qubits).map(|i| pauli_on(n_qubits, i, Axis::Z).expect("site in range")).collect();
    let outcomes: Vec<Option<Vec<f64>>> = (0..n_codes as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = scan_rng(seed, k);
            let start = haar_pair(1 << n_qubits, &mut rng);
            let code = project_to_diagonal_kl(&start, &errors)?;
            if !kl_diagonal_check(&code, &errors, tol).is_empty() {
                return None;
            }
            Some(zs.iter().map(|z| sensable(&code, z, tol).expectation_gap).collect())
        })
        .collect();
    let mut report =
        NoGoReport { n_qubits, n_sampled: n_codes, n_tested: 0, n_excluded: 0, max_gap: 0.0, violations: vec![] };
    for (k, o) in outcomes.into_iter().enumerate() {
        match o {
            None => report.n_excluded += 1,
            Some(gaps) => {
                report.n_tested += 1;
                for (i, gap) in gaps.into_iter().enumerate() {
                    report.max_gap = report.max_gap.max(gap.abs());
                    if gap.abs() > tol {
                        report.violations.push(NoGoViolation { index: k as u64, site: i + 1, gap });
                    }
                }
            }
        }
    }
    report
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomodyneScanReport {
    pub b: f64,
    pub n_tested: usize,
    /// Unit Bloch vector `(x, y, z)` with the smallest spread of expectation gaps.
    pub blocked_axis: [f64; 3],
    /// `(b, 0, ½)` normalized.
    pub analytic_axis: [f64; 3],
    pub overlap: f64,
    /// Largest `|⟨σ_z¹⟩` gap seen among valid codes.
    pub max_sigma_z_gap: f64,
}

/// Two-qubit codes with jump `σ_−¹ + b` on the first qubit: the Bloch-vector
/// gaps `⟨σ⃗¹⟩_0 − ⟨σ⃗¹⟩_1` of valid codes all lie orthogonal to the blocked
/// axis, recovered as the smallest right-singular vector.
pub fn homodyne_blocked_axis_scan(b: f64, n_codes: usize, seed: u64, tol: f64) -> HomodyneScanReport {
    let jump = &pauli_on(2, 1, Axis::Minus).expect("site") + &Operator::identity(4).scale_re(b);
    let errors = vec![jump];
    let axes = [Axis::X, Axis::Y, Axis::Z].map(|a| pauli_on(2, 1, a).expect("site"));
    let gaps: Vec<[f64; 3]> = (0..n_codes as u64)
        .into_par_iter()
        .filter_map(|k| {
            let mut rng = scan_rng(seed, k);
            let code = project_to_diagonal_kl(&haar_pair(4, &mut rng), &errors)?;
            kl_diagonal_check(&code, &errors, tol).is_empty().then(|| axes.clone().map(|s| sensable(&code, &s, tol).expectation_gap))
        })
        .collect();
    let m = DMatrix::<f64>::from_fn(gaps.len().max(1), 3, |i, j| gaps.get(i).map_or(0.0, |g| g[j]));
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let (min_idx, _) = svd.singular_values.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &s)| {
        if s < acc.1 {
            (i, s)
        } else {
            acc
        }
    });
    let mut axis = [vt[(min_idx, 0)], vt[(min_idx, 1)], vt[(min_idx, 2)]];
    let n = (b * b + 0.25).sqrt();
    let analytic = [b / n, 0.0, 0.5 / n];
    let dot: f64 = axis.iter().zip(&analytic).map(|(a, c)| a * c).sum();
    if dot < 0.0 {
        axis = axis.map(|a| -a);
    }
    HomodyneScanReport {
        b,
        n_tested: gaps.len(),
        blocked_axis: axis,
        analytic_axis: analytic,
        overlap: dot.abs(),
        max_sigma_z_gap: gaps.iter().map(|g| g[2].abs()).fold(0.0, f64::max),
    }
}

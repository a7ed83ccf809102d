//! Matrix exponentials for the small generators used by the simulators.
//!
//! Two routes: an eigendecomposition (via a complex Schur form) for
//! diagonalizable generators, and Padé(13) scaling-and-squaring when the
//! eigenvector basis is ill-conditioned.

use nalgebra::linalg::Schur;

use super::{Operator, QlinError, Result, StateVector, C64, ZERO};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpmOptions {
    /// Eigenvector-basis condition number above which Padé is used instead.
    pub cond_limit: f64,
    /// Relative tolerance of the `e^{A} = (e^{A/2})²` self-check.
    pub self_check_tol: f64,
}

impl Default for ExpmOptions {
    fn default() -> Self {
        ExpmOptions { cond_limit: 1e8, self_check_tol: 1e-10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpmRoute {
    Eigen,
    Pade,
}

#[derive(Clone, Debug)]
enum Route {
    Eigen { vecs: Operator, inv: Operator, vals: Vec<C64> },
    Pade,
}

/// Reusable `t ↦ exp(G t)` for a fixed generator `G`.
#[derive(Clone, Debug)]
pub struct Propagator {
    generator: Operator,
    route: Route,
}

impl Propagator {
    pub fn new(generator: Operator) -> Result<Self> {
        Self::with_options(generator, ExpmOptions::default())
    }

    pub fn with_options(generator: Operator, opts: ExpmOptions) -> Result<Self> {
        if !generator.is_finite() {
            return Err(QlinError::NonFinite("generator"));
        }
        let route = match eigen_route(&generator, opts.cond_limit) {
            Some((vecs, inv, vals)) => Route::Eigen { vecs, inv, vals },
            None => Route::Pade,
        };
        Ok(Propagator { generator, route })
    }

    /// Propagator for `exp(−i·H_nh·t)`.
    pub fn from_hamiltonian(h_nh: &Operator) -> Result<Self> {
        Self::new(h_nh.scale(C64::new(0.0, -1.0)))
    }

    pub fn route(&self) -> ExpmRoute {
        match self.route {
            Route::Eigen { .. } => ExpmRoute::Eigen,
            Route::Pade => ExpmRoute::Pade,
        }
    }

    pub fn generator(&self) -> &Operator {
        &self.generator
    }

    pub fn at(&self, t: f64) -> Result<Operator> {
        let out = match &self.route {
            Route::Eigen { vecs, inv, vals } => {
                let n = vals.len();
                let exps: Vec<C64> = vals.iter().map(|l| (l * t).exp()).collect();
                let mut scaled = vecs.clone();
                for i in 0..n {
                    for (j, e) in exps.iter().enumerate() {
                        let v = scaled.get(i, j) * e;
                        scaled.set(i, j, v);
                    }
                }
                &scaled * inv
            }
            Route::Pade => expm(&self.generator.scale_re(t))?,
        };
        if !out.is_finite() {
            return Err(QlinError::NonFinite("matrix exponential"));
        }
        Ok(out)
    }

    pub fn apply(&self, t: f64, psi: &StateVector) -> Result<StateVector> {
        Ok(self.at(t)?.apply(psi))
    }

    /// `exp(G t)` together with the halved-step relative discrepancy.
    pub fn at_checked(&self, t: f64, tol: f64) -> Result<Operator> {
        let full = self.at(t)?;
        let half = self.at(0.5 * t)?;
        let sq = &half * &half;
        let rel = full.max_abs_diff(&sq) / full.max_abs().max(f64::MIN_POSITIVE);
        if !(rel < tol) {
            return Err(QlinError::ExpmNotConverged { rel_err: rel });
        }
        Ok(full)
    }
}

/// `exp(−i·H_nh·t)·ψ` without renormalization.
pub fn evolve_nonhermitian(psi: &StateVector, h_nh: &Operator, t: f64) -> Result<StateVector> {
    if psi.dim() != h_nh.dim() {
        return Err(QlinError::DimensionMismatch { left: psi.dim(), right: h_nh.dim() });
    }
    if !psi.is_finite() {
        return Err(QlinError::NonFinite("state"));
    }
    assert!(t >= 0.0, "evolution time must be non-negative");
    if t == 0.0 {
        return Ok(psi.clone());
    }
    let prop = Propagator::from_hamiltonian(h_nh)?;
    let u = prop.at_checked(t, ExpmOptions::default().self_check_tol)?;
    let out = u.apply(psi);
    if !out.is_finite() {
        return Err(QlinError::NonFinite("evolved state"));
    }
    Ok(out)
}

/// Eigenvalues of a general (non-normal) matrix from its complex Schur form.
pub fn eigenvalues(a: &Operator) -> Result<Vec<C64>> {
    if !a.is_finite() {
        return Err(QlinError::NonFinite("eigenvalue input"));
    }
    let m = a.to_nalgebra();
    // Relax the deflation threshold if the QR sweep stalls.
    let schur = [f64::EPSILON, 1e-14, 1e-13, 1e-12]
        .iter()
        .find_map(|&eps| Schur::try_new(m.clone(), eps, 100_000))
        .ok_or(QlinError::ExpmNotConverged { rel_err: f64::NAN })?;
    let (_, t) = schur.unpack();
    Ok((0..a.dim()).map(|i| t[(i, i)]).collect())
}

fn eigen_route(g: &Operator, cond_limit: f64) -> Option<(Operator, Operator, Vec<C64>)> {
    let n = g.dim();
    let scale = g.max_abs();
    if scale == 0.0 {
        let id = Operator::identity(n);
        return Some((id.clone(), id, vec![ZERO; n]));
    }
    let schur = Schur::try_new(g.to_nalgebra(), f64::EPSILON, 10_000)?;
    let (q, t) = schur.unpack();
    let tri = Operator::from_nalgebra(&t);
    let q = Operator::from_nalgebra(&q);
    let vals: Vec<C64> = (0..n).map(|i| tri.get(i, i)).collect();

    // Eigenvectors of the triangular factor by back substitution.
    let mut x = Operator::zeros(n);
    let tiny = scale * 1e-14;
    for k in 0..n {
        x.set(k, k, C64::new(1.0, 0.0));
        for i in (0..k).rev() {
            let mut s = ZERO;
            for j in (i + 1)..=k {
                s += tri.get(i, j) * x.get(j, k);
            }
            let mut d = tri.get(i, i) - vals[k];
            if d.norm() < tiny {
                if s.norm() < tiny {
                    // Degenerate but decoupled: pick the zero solution.
                    continue;
                }
                d = C64::new(tiny, 0.0);
            }
            x.set(i, k, -s / d);
        }
        let norm: f64 = (0..n).map(|i| x.get(i, k).norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n {
            let v = x.get(i, k) / norm;
            x.set(i, k, v);
        }
    }
    let vecs = &q * &x;
    let inv = vecs.inverse().ok()?;
    let cond = vecs.one_norm() * inv.one_norm();
    if !cond.is_finite() || cond > cond_limit {
        return None;
    }
    Some((vecs, inv, vals))
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Padé(13) scaling-and-squaring exponential.
pub fn expm(a: &Operator) -> Result<Operator> {
    if !a.is_finite() {
        return Err(QlinError::NonFinite("expm input"));
    }
    let n = a.dim();
    let norm = a.one_norm();
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a.scale_re(0.5f64.powi(s));
    let id = Operator::identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;
    let lin = |ops: [(&Operator, f64); 4]| -> Operator {
        let mut acc = Operator::zeros(n);
        for (op, c) in ops {
            acc = &acc + &op.scale_re(c);
        }
        acc
    };
    let inner_u = lin([(&a6, b[13]), (&a4, b[11]), (&a2, b[9]), (&id, 0.0)]);
    let u = &a * &(&(&a6 * &inner_u) + &lin([(&a6, b[7]), (&a4, b[5]), (&a2, b[3]), (&id, b[1])]));
    let inner_v = lin([(&a6, b[12]), (&a4, b[10]), (&a2, b[8]), (&id, 0.0)]);
    let v = &(&a6 * &inner_v) + &lin([(&a6, b[6]), (&a4, b[4]), (&a2, b[2]), (&id, b[0])]);
    let mut r = (&v - &u).solve(&(&v + &u))?;
    for _ in 0..s {
        r = &r * &r;
    }
    if !r.is_finite() {
        return Err(QlinError::NonFinite("expm result"));
    }
    Ok(r)
}

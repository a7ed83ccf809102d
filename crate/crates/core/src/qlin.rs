//! Dense complex linear algebra for small multi-qubit registers.
//!
//! Everything here is sized for dimensions up to 16 (four qubits). Matrices
//! are stored row-major in a flat `Vec`. Basis ordering follows the register
//! convention used across the crate: qubit 1 is the leftmost (most
//! significant) tensor factor, and within a qubit `↑` comes before `↓`
//! (equivalently `0` before `1` for the protected qubits).

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Default tolerance for the hermitian flag.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Default tolerance for the unitary flag.
pub const UNITARY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QlinError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("site {site} out of range for a {n_qubits}-qubit register")]
    SiteOutOfRange { site: usize, n_qubits: usize },
    #[error("non-finite entries encountered in {0}")]
    NonFinite(&'static str),
    #[error("matrix exponential self-check failed: relative error {rel_err:.3e}")]
    ExpmNotConverged { rel_err: f64 },
    #[error("zero-norm state")]
    ZeroNorm,
    #[error("singular matrix")]
    Singular,
    #[error("{what} check failed: deviation {deviation:.3e}")]
    FlagViolation { what: &'static str, deviation: f64 },
    #[error("entry count {len} is not a square of a positive integer")]
    NotSquare { len: usize },
}

pub type Result<T> = std::result::Result<T, QlinError>;

/// Square complex matrix with optional semantic flags.
#[derive(Clone, PartialEq)]
pub struct Operator {
    dim: usize,
    data: Vec<C64>,
    hermitian: bool,
    unitary: bool,
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Operator(dim={}) [", self.dim)?;
        for i in 0..self.dim {
            write!(f, "  ")?;
            for j in 0..self.dim {
                let z = self.get(i, j);
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Operator {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "operator dimension must be positive");
        Operator { dim, data: vec![ZERO; dim * dim], hermitian: false, unitary: false }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m.hermitian = true;
        m.unitary = true;
        m
    }

    /// Builds from row-major entries; the length must be a perfect square.
    pub fn from_rows(data: Vec<C64>) -> Result<Self> {
        let dim = (data.len() as f64).sqrt().round() as usize;
        if dim == 0 || dim * dim != data.len() {
            return Err(QlinError::NotSquare { len: data.len() });
        }
        Ok(Operator { dim, data, hermitian: false, unitary: false })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        let mut m = Self::zeros(dim);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), dim);
            for (j, &v) in r.iter().enumerate() {
                m.data[i * dim + j] = C64::new(v, 0.0);
            }
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.data[i * dim + j] = f(i, j);
            }
        }
        m
    }

    pub fn diagonal(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = d;
        }
        m
    }

    /// `|ket⟩⟨bra|`
    pub fn outer(ket: &StateVector, bra: &StateVector) -> Self {
        assert_eq!(ket.dim(), bra.dim());
        let n = ket.dim();
        Self::from_fn(n, |i, j| ket.data[i] * bra.data[j].conj())
    }

    /// Projector onto the span of orthonormal vectors.
    pub fn projector(vectors: &[StateVector]) -> Self {
        let dim = vectors.first().map(|v| v.dim()).expect("projector needs at least one vector");
        let mut p = Self::zeros(dim);
        for v in vectors {
            p = &p + &Self::outer(v, v);
        }
        p.hermitian = true;
        p
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.dim + j] = v;
        self.hermitian = false;
        self.unitary = false;
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn is_flagged_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn is_flagged_unitary(&self) -> bool {
        self.unitary
    }

    /// Sets the hermitian flag after checking `max|A − A†| < tol`.
    pub fn into_hermitian(mut self, tol: f64) -> Result<Self> {
        let dev = self.hermitian_deviation();
        if dev >= tol {
            return Err(QlinError::FlagViolation { what: "hermitian", deviation: dev });
        }
        self.hermitian = true;
        Ok(self)
    }

    /// Sets the unitary flag after checking `max|A†A − I| < tol`.
    pub fn into_unitary(mut self, tol: f64) -> Result<Self> {
        let dev = self.unitary_deviation();
        if dev >= tol {
            return Err(QlinError::FlagViolation { what: "unitary", deviation: dev });
        }
        self.unitary = true;
        Ok(self)
    }

    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn unitary_deviation(&self) -> f64 {
        (&self.dagger() * self).max_abs_diff(&Self::identity(self.dim))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() < tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitary_deviation() < tol
    }

    pub fn dagger(&self) -> Self {
        let n = self.dim;
        let mut m = Self::from_fn(n, |i, j| self.get(j, i).conj());
        m.hermitian = self.hermitian;
        m.unitary = self.unitary;
        m
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|z| *z *= s);
        m.hermitian = self.hermitian && s.im == 0.0;
        m.unitary = self.unitary && (s.norm() - 1.0).abs() < 1e-15;
        m
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        (0..self.dim)
            .map(|j| (0..self.dim).map(|i| self.get(i, j).norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    pub fn kron(&self, other: &Self) -> Self {
        let (n, m) = (self.dim, other.dim);
        let mut out = Self::zeros(n * m);
        for i in 0..n {
            for j in 0..n {
                let a = self.get(i, j);
                if a == ZERO {
                    continue;
                }
                for k in 0..m {
                    for l in 0..m {
                        out.data[(i * m + k) * (n * m) + j * m + l] = a * other.get(k, l);
                    }
                }
            }
        }
        out.hermitian = self.hermitian && other.hermitian;
        out.unitary = self.unitary && other.unitary;
        out
    }

    pub fn apply(&self, psi: &StateVector) -> StateVector {
        assert_eq!(self.dim, psi.dim(), "operator/state dimension mismatch");
        let mut out = vec![ZERO; self.dim];
        self.apply_into(&psi.data, &mut out);
        StateVector { data: out }
    }

    /// `y = A x` on raw amplitude slices. Hot path for the trajectory engine.
    #[inline]
    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        let n = self.dim;
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(y.len(), n);
        for (i, yi) in y.iter_mut().enumerate() {
            let row = &self.data[i * n..(i + 1) * n];
            let mut acc = ZERO;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            *yi = acc;
        }
    }

    /// `⟨x|A|x⟩` without normalization, on raw slices.
    #[inline]
    pub fn sandwich(&self, x: &[C64]) -> C64 {
        let n = self.dim;
        let mut acc = ZERO;
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            let mut r = ZERO;
            for (a, b) in row.iter().zip(x) {
                r += a * b;
            }
            acc += x[i].conj() * r;
        }
        acc
    }

    /// Solves `self · X = rhs` by LU with partial pivoting.
    pub fn solve(&self, rhs: &Self) -> Result<Self> {
        let n = self.dim;
        if rhs.dim != n {
            return Err(QlinError::DimensionMismatch { left: n, right: rhs.dim });
        }
        let mut a = self.data.clone();
        let mut b = rhs.data.clone();
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for col in 0..n {
            let (piv, pval) = (col..n)
                .map(|r| (r, a[r * n + col].norm()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pval <= scale * 1e-300 || pval == 0.0 {
                return Err(QlinError::Singular);
            }
            if piv != col {
                for k in 0..n {
                    a.swap(piv * n + k, col * n + k);
                    b.swap(piv * n + k, col * n + k);
                }
            }
            let d = a[col * n + col];
            for r in (col + 1)..n {
                let f = a[r * n + col] / d;
                if f == ZERO {
                    continue;
                }
                for k in col..n {
                    let v = a[col * n + k];
                    a[r * n + k] -= f * v;
                }
                for k in 0..n {
                    let v = b[col * n + k];
                    b[r * n + k] -= f * v;
                }
            }
        }
        for col in (0..n).rev() {
            let d = a[col * n + col];
            for k in 0..n {
                let mut s = b[col * n + k];
                for j in (col + 1)..n {
                    s -= a[col * n + j] * b[j * n + k];
                }
                b[col * n + k] = s / d;
            }
        }
        let out = Operator { dim: n, data: b, hermitian: false, unitary: false };
        if !out.is_finite() {
            return Err(QlinError::Singular);
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Result<Self> {
        self.solve(&Self::identity(self.dim))
    }

    pub(crate) fn to_nalgebra(&self) -> nalgebra::DMatrix<C64> {
        nalgebra::DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub(crate) fn from_nalgebra(m: &nalgebra::DMatrix<C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        Self::from_fn(m.nrows(), |i, j| m[(i, j)])
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        Operator {
            dim: self.dim,
            data,
            hermitian: self.hermitian && rhs.hermitian,
            unitary: false,
        }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Operator {
            dim: self.dim,
            data,
            hermitian: self.hermitian && rhs.hermitian,
            unitary: false,
        }
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale_re(-1.0)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
        let n = self.dim;
        let mut out = Operator::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out.unitary = self.unitary && rhs.unitary;
        out
    }
}

impl Mul<&StateVector> for &Operator {
    type Output = StateVector;
    fn mul(self, rhs: &StateVector) -> StateVector {
        self.apply(rhs)
    }
}

/// Complex amplitude vector. May be sub-normalized between jumps.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    data: Vec<C64>,
}

impl StateVector {
    pub fn new(data: Vec<C64>) -> Self {
        assert!(!data.is_empty(), "state dimension must be positive");
        StateVector { data }
    }

    pub fn from_real(data: &[f64]) -> Self {
        Self::new(data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut data = vec![ZERO; dim];
        data[index] = ONE;
        StateVector { data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.data
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.data
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(QlinError::ZeroNorm);
        }
        Ok(self.scale(C64::new(1.0 / n, 0.0)))
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &Self) -> C64 {
        assert_eq!(self.dim(), other.dim());
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        StateVector { data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim());
        StateVector { data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim());
        StateVector { data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    pub fn kron(&self, other: &Self) -> Self {
        let mut data = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.data {
            for b in &other.data {
                data.push(a * b);
            }
        }
        StateVector { data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Fidelity `|⟨a|b⟩|² / (‖a‖²‖b‖²)`, insensitive to global phase and norm.
    pub fn fidelity(&self, other: &Self) -> f64 {
        self.inner(other).norm_sqr() / (self.norm_sqr() * other.norm_sqr())
    }
}

/// Density operator with validated invariants.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    op: Operator,
}

impl DensityMatrix {
    pub fn pure(psi: &StateVector) -> Result<Self> {
        let psi = psi.normalized()?;
        let mut op = Operator::outer(&psi, &psi);
        op.hermitian = true;
        Ok(DensityMatrix { op })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix { op: Operator::identity(dim).scale_re(1.0 / dim as f64) }
    }

    /// Wraps an operator without checking; see [`DensityMatrix::validate`].
    pub fn from_operator_unchecked(op: Operator) -> Self {
        DensityMatrix { op }
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn into_operator(self) -> Operator {
        self.op
    }

    pub fn dim(&self) -> usize {
        self.op.dim
    }

    /// Smallest eigenvalue of the hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.op + &self.op.dagger()).scale_re(0.5);
        let eig = nalgebra::SymmetricEigen::new(h.to_nalgebra());
        eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Checks hermiticity (1e-10), unit trace (1e-9) and positivity (−1e-9).
    pub fn validate(&self) -> Result<()> {
        self.validate_with(1e-10, 1e-9, 1e-9)
    }

    pub fn validate_with(&self, herm_tol: f64, trace_tol: f64, pos_tol: f64) -> Result<()> {
        let h = self.op.hermitian_deviation();
        if h >= herm_tol {
            return Err(QlinError::FlagViolation { what: "density hermitian", deviation: h });
        }
        let t = (self.op.trace() - ONE).norm();
        if t >= trace_tol {
            return Err(QlinError::FlagViolation { what: "density trace", deviation: t });
        }
        let e = self.min_eigenvalue();
        if e < -pos_tol {
            return Err(QlinError::FlagViolation { what: "density positivity", deviation: -e });
        }
        Ok(())
    }

    /// `⟨ψ|ρ|ψ⟩` for a normalized `ψ`.
    pub fn population(&self, psi: &StateVector) -> f64 {
        self.op.sandwich(psi.amplitudes()).re
    }
}

/// Kronecker product shared by operators and states.
pub trait Tensor: Sized {
    fn tensor(&self, other: &Self) -> Self;
}

impl Tensor for Operator {
    fn tensor(&self, other: &Self) -> Self {
        self.kron(other)
    }
}

impl Tensor for StateVector {
    fn tensor(&self, other: &Self) -> Self {
        self.kron(other)
    }
}

pub fn tensor<T: Tensor>(a: &T, b: &T) -> T {
    a.tensor(b)
}

/// Left-to-right Kronecker product of a non-empty list.
pub fn tensor_all<T: Tensor + Clone>(factors: &[T]) -> T {
    let (first, rest) = factors.split_first().expect("tensor_all needs at least one factor");
    rest.iter().fold(first.clone(), |acc, f| acc.tensor(f))
}

/// Single-qubit axes. `Minus` is the lowering operator `|↓⟩⟨↑|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
    Plus,
    Minus,
}

pub fn pauli(axis: Axis) -> Operator {
    let (z, o) = (ZERO, ONE);
    let m = match axis {
        Axis::X => vec![z, o, o, z],
        Axis::Y => vec![z, -I, I, z],
        Axis::Z => vec![o, z, z, -o],
        Axis::Plus => vec![z, o, z, z],
        Axis::Minus => vec![z, z, o, z],
    };
    let op = Operator::from_rows(m).expect("2x2");
    match axis {
        Axis::X | Axis::Y | Axis::Z => Operator { hermitian: true, unitary: true, ..op },
        _ => op,
    }
}

/// Embeds a single-qubit operator at `site` (1-based) of an `n_qubits` register.
pub fn embed(n_qubits: usize, site: usize, single: &Operator) -> Result<Operator> {
    if site == 0 || site > n_qubits {
        return Err(QlinError::SiteOutOfRange { site, n_qubits });
    }
    if single.dim() != 2 {
        return Err(QlinError::DimensionMismatch { left: single.dim(), right: 2 });
    }
    let id = Operator::identity(2);
    let factors: Vec<Operator> =
        (1..=n_qubits).map(|s| if s == site { single.clone() } else { id.clone() }).collect();
    Ok(tensor_all(&factors))
}

pub fn pauli_on(n_qubits: usize, site: usize, axis: Axis) -> Result<Operator> {
    embed(n_qubits, site, &pauli(axis))
}

/// Product of single-site Paulis, e.g. `[(1, Y), (2, Z)]` for σ_y¹σ_z².
pub fn pauli_string(n_qubits: usize, factors: &[(usize, Axis)]) -> Result<Operator> {
    let mut out = Operator::identity(1 << n_qubits);
    for &(site, axis) in factors {
        out = &out * &pauli_on(n_qubits, site, axis)?;
    }
    Ok(out)
}

/// `⟨ψ|A|ψ⟩ / ⟨ψ|ψ⟩`
pub fn expectation(psi: &StateVector, a: &Operator) -> Result<C64> {
    if psi.dim() != a.dim() {
        return Err(QlinError::DimensionMismatch { left: psi.dim(), right: a.dim() });
    }
    let n2 = psi.norm_sqr();
    if n2 == 0.0 {
        return Err(QlinError::ZeroNorm);
    }
    Ok(a.sandwich(psi.amplitudes()) / n2)
}

/// Named single-qubit states.
pub mod states {
    use super::*;

    pub fn up() -> StateVector {
        StateVector::basis(2, 0)
    }
    pub fn down() -> StateVector {
        StateVector::basis(2, 1)
    }
    /// Protected-qubit `|0⟩`, same slot as `|↑⟩`.
    pub fn zero() -> StateVector {
        StateVector::basis(2, 0)
    }
    pub fn one() -> StateVector {
        StateVector::basis(2, 1)
    }
    pub fn plus() -> StateVector {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        StateVector::from_real(&[h, h])
    }
    pub fn minus() -> StateVector {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        StateVector::from_real(&[h, -h])
    }
    /// `(|↑⟩ + e^{iφ}|↓⟩)/√2`
    pub fn equator(phi: f64) -> StateVector {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        StateVector::new(vec![C64::new(h, 0.0), C64::from_polar(h, phi)])
    }
}

mod expm;
pub use expm::{eigenvalues, evolve_nonhermitian, expm, ExpmOptions, ExpmRoute, Propagator};

#[cfg(test)]
mod tests;

//! Deterministic density-matrix dynamics: plain Lindblad, feedback-corrected
//! master equation with lost photons and dark counts, the same with periodic
//! σ_z-error correction, and the reduced two-level effective model.
//!
//! Every generator is written as
//! `ρ̇ = −i(H_nh ρ − ρ H_nh†) + Σ_k w_k K_k ρ K_k† + s ρ`,
//! which covers all variants with one RK4 kernel.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocols::{Detection, NoiseModel, ProtocolError, SensorCode};
use crate::qlin::{eigenvalues, pauli, states, Axis, DensityMatrix, Operator, QlinError, StateVector, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MasterError {
    #[error("master: invalid config: {0}")]
    InvalidConfig(String),
    #[error("master: integration unstable at t = {t}: {what}")]
    Unstable { t: f64, what: String },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Linalg(#[from] QlinError),
}

pub type Result<T> = std::result::Result<T, MasterError>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Decay with no feedback.
    PlainLindblad,
    /// Detected clicks corrected instantly, lost ones not; dark counts trigger spurious corrections.
    Corrected,
    /// As `Corrected` without the exact dephasing term, plus a σ_z-error correction every `ec_interval`.
    CorrectedWithEc,
    /// Two-level model `ρ̇ = −ig[σ_z,ρ] + (γα+κ/2)(σ_zρσ_z − ρ)` on the code qubit.
    ReducedEffective,
}

/// Linear generator in the `H_nh`/recycling form described in the module docs.
#[derive(Clone, Debug)]
pub struct Generator {
    h_nh: Operator,
    h_nh_dag: Operator,
    terms: Vec<(f64, Operator, Operator)>,
    shift: f64,
}

impl Generator {
    pub fn new(h_nh: Operator, terms: Vec<(f64, Operator)>, shift: f64) -> Self {
        let h_nh_dag = h_nh.dagger();
        let terms = terms.into_iter().filter(|(w, _)| *w != 0.0).map(|(w, k)| {
            let kd = k.dagger();
            (w, k, kd)
        });
        Generator { h_nh, h_nh_dag, terms: terms.collect(), shift }
    }

    pub fn dim(&self) -> usize {
        self.h_nh.dim()
    }

    pub fn apply(&self, rho: &Operator) -> Operator {
        let mi = C64::new(0.0, -1.0);
        let comm = &(&self.h_nh * rho) - &(rho * &self.h_nh_dag);
        let mut out = comm.scale(mi);
        for (w, k, kd) in &self.terms {
            out = &out + &(&(k * rho) * kd).scale_re(*w);
        }
        if self.shift != 0.0 {
            out = &out + &rho.scale_re(self.shift);
        }
        out
    }

    /// Largest entry magnitude among the rates, used for the step-size bound.
    pub fn max_rate(&self) -> f64 {
        let mut r = self.h_nh.max_abs();
        for (w, k, _) in &self.terms {
            r = r.max(w.abs() * k.max_abs() * k.max_abs());
        }
        r.max(self.shift.abs())
    }
}

/// `−i[H,ρ] + γ Σ (2JρJ† − J†Jρ − ρJ†J)`
pub fn lindblad_rhs(rho: &Operator, h: &Operator, jumps: &[Operator], gamma: f64) -> Operator {
    let mut h_nh = h.clone();
    let mut terms = Vec::new();
    for j in jumps {
        h_nh = &h_nh - &(&j.dagger() * j).scale(C64::new(0.0, gamma));
        terms.push((2.0 * gamma, j.clone()));
    }
    Generator::new(h_nh, terms, 0.0).apply(rho)
}

fn decay_hnh(h: Operator, code: &SensorCode) -> Operator {
    &h - &code.decay_operator().scale(C64::new(0.0, code.gamma))
}

fn corrected_terms(code: &SensorCode, noise: &NoiseModel) -> Result<(Vec<(f64, Operator)>, f64)> {
    let gamma = code.gamma;
    let alpha = noise.loss_alpha;
    let mut terms = Vec::new();
    let mut shift = 0.0;
    for ch in &code.jumps {
        let c = code
            .correction(&ch.label)
            .ok_or_else(|| MasterError::InvalidConfig(format!("no correction for channel {}", ch.label)))?;
        let cj = c * &ch.op;
        match ch.detection {
            Detection::Photon => {
                terms.push((2.0 * gamma * (1.0 - alpha), cj));
                terms.push((2.0 * gamma * alpha, ch.op.clone()));
                if noise.dark_rate > 0.0 {
                    terms.push((noise.dark_rate, c.clone()));
                    shift -= noise.dark_rate;
                }
            }
            // Parity-detected decays are corrected without loss in the
            // deterministic picture (readout interval → 0).
            Detection::Parity => terms.push((2.0 * gamma, cj)),
        }
    }
    Ok((terms, shift))
}

/// Generator for the corrected master equation; for `α = 0` and no dark
/// counts it is the perfectly monitored case.
pub fn corrected_generator(code: &SensorCode, noise: &NoiseModel, g: f64) -> Result<Generator> {
    let (terms, shift) = corrected_terms(code, noise)?;
    Ok(Generator::new(decay_hnh(code.hamiltonian(g), code), terms, shift))
}

pub fn corrected_rhs(rho: &Operator, code: &SensorCode, noise: &NoiseModel, g: f64) -> Result<Operator> {
    Ok(corrected_generator(code, noise, g)?.apply(rho))
}

pub fn plain_generator(code: &SensorCode, g: f64) -> Generator {
    let terms = code.jumps.iter().map(|j| (2.0 * code.gamma, j.op.clone())).collect();
    Generator::new(decay_hnh(code.hamiltonian(g), code), terms, 0.0)
}

/// Corrected generator with the dephasing-correction term removed.
pub fn ec_generator(code: &SensorCode, noise: &NoiseModel, g: f64) -> Result<Generator> {
    let h = &code.hamiltonian(g) - &code.strategy_term;
    let (terms, shift) = corrected_terms(code, noise)?;
    Ok(Generator::new(decay_hnh(h, code), terms, shift))
}

/// Reduced two-level generator on the code qubit (`|O_+⟩ ↔ |↑⟩`).
pub fn reduced_generator(g: f64, gamma: f64, alpha: f64, kappa: f64) -> Generator {
    let rate = gamma * alpha + 0.5 * kappa;
    let z = pauli(Axis::Z);
    Generator::new(z.scale_re(g), vec![(rate, z)], -rate)
}

/// Kraus operators of the σ_z-error correction: keep the code, map each wrong
/// partner onto its code state, leave everything else alone.
pub fn ec_kraus(code: &SensorCode) -> Vec<Operator> {
    let pc = code.code_projector();
    let pw = code.wrong_projector();
    let rest = &(&Operator::identity(code.dim()) - &pc) - &pw;
    let fix = &code.sigma_z_recovery() * &pw;
    vec![pc, fix, rest]
}

/// Non-selective code/non-code projection.
pub fn zeno_kraus(code: &SensorCode) -> Vec<Operator> {
    let pc = code.code_projector();
    let rest = &Operator::identity(code.dim()) - &pc;
    vec![pc, rest]
}

pub fn apply_kraus(kraus: &[Operator], rho: &Operator) -> Operator {
    let mut out = Operator::zeros(rho.dim());
    for k in kraus {
        out = &out + &(&(k * rho) * &k.dagger());
    }
    out
}

/// `(1 + cos(2gt)·e^{−2(γα+κ/2)t})/2`
pub fn reduced_effective_solution(g: f64, gamma: f64, alpha: f64, kappa: f64, t: f64) -> f64 {
    0.5 * (1.0 + (2.0 * g * t).cos() * (-2.0 * (gamma * alpha + 0.5 * kappa) * t).exp())
}

/// Row-major vectorized superoperator of a generator (`dim² × dim²`).
pub fn liouvillian(gen: &Generator) -> Operator {
    let d = gen.dim();
    let n = d * d;
    let mut l = Operator::zeros(n);
    for col in 0..n {
        let mut e = Operator::zeros(d);
        e.set(col / d, col % d, C64::new(1.0, 0.0));
        let out = gen.apply(&e);
        for row in 0..n {
            l.set(row, col, out.get(row / d, row % d));
        }
    }
    l
}

/// Slowest-decaying oscillating mode of the generator as (decay, angular
/// frequency). Modes with `|Im λ| < min_freq` are ignored.
pub fn slowest_oscillation(gen: &Generator, min_freq: f64) -> Result<(f64, f64)> {
    let ev = eigenvalues(&liouvillian(gen))?;
    ev.iter()
        .filter(|l| l.im > min_freq)
        .map(|l| (-l.re, l.im))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or_else(|| MasterError::InvalidConfig("no oscillating Liouvillian mode".into()))
}

#[derive(Clone, Debug)]
pub struct MasterConfig {
    pub code: SensorCode,
    pub noise: NoiseModel,
    pub g: f64,
    pub duration: f64,
    pub dt: f64,
    pub variant: Variant,
    /// Cadence of the σ_z-error correction for [`Variant::CorrectedWithEc`].
    pub ec_interval: f64,
    pub record_times: Vec<f64>,
    /// Keep ρ at every record time.
    pub keep_states: bool,
    /// Eigenvalue positivity check at record times.
    pub check_positivity: bool,
}

/// `n` equally spaced times over `[0, duration]` including both ends.
pub fn uniform_times(duration: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![duration];
    }
    (0..n).map(|k| duration * k as f64 / (n - 1) as f64).collect()
}

impl MasterConfig {
    /// Corrected variant, 201 record points, `dt = 1e-3 / max rate`.
    pub fn new(code: SensorCode, noise: NoiseModel, g: f64, duration: f64) -> Self {
        let gamma = noise.gamma;
        let mut cfg = MasterConfig {
            code,
            noise,
            g,
            duration,
            dt: 0.0,
            variant: Variant::Corrected,
            ec_interval: if gamma > 0.0 { 0.01 / gamma } else { 0.01 },
            record_times: uniform_times(duration, 201),
            keep_states: false,
            check_positivity: true,
        };
        cfg.dt = 1e-3 / cfg.max_rate().max(1e-300);
        cfg
    }

    pub fn with_variant(mut self, v: Variant) -> Self {
        self.variant = v;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_record_times(mut self, times: Vec<f64>) -> Self {
        self.record_times = times;
        self
    }

    pub fn with_ec_interval(mut self, interval: f64) -> Self {
        self.ec_interval = interval;
        self
    }

    pub fn generator(&self) -> Result<Generator> {
        Ok(match self.variant {
            Variant::PlainLindblad => plain_generator(&self.code, self.g),
            Variant::Corrected => corrected_generator(&self.code, &self.noise, self.g)?,
            Variant::CorrectedWithEc => ec_generator(&self.code, &self.noise, self.g)?,
            Variant::ReducedEffective => reduced_generator(
                self.g * self.code.sensed_scale,
                self.noise.gamma,
                self.noise.loss_alpha,
                self.noise.dark_rate,
            ),
        })
    }

    pub fn max_rate(&self) -> f64 {
        self.generator().map(|g| g.max_rate()).unwrap_or(0.0).max(self.noise.gamma).max(self.g.abs())
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.code.validate()?;
        let bad = |m: &str| Err(MasterError::InvalidConfig(m.to_string()));
        if (self.noise.gamma - self.code.gamma).abs() > 1e-12 * self.noise.gamma.max(1.0) {
            return bad("noise.gamma differs from the code's gamma");
        }
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return bad("duration must be finite and non-negative");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        let limit = 0.005 / self.max_rate().max(1e-300);
        if self.dt > limit * (1.0 + 1e-9) {
            return Err(MasterError::InvalidConfig(format!("dt = {} exceeds stability bound {limit:.3e}", self.dt)));
        }
        if self.noise.correction_delay > 0.0 || self.noise.dead_time > 0.0 {
            return bad("delay and dead time are trajectory-only features");
        }
        if self.variant == Variant::CorrectedWithEc && !(self.ec_interval > 0.0) {
            return bad("ec_interval must be positive");
        }
        if self.record_times.windows(2).any(|w| w[1] < w[0])
            || self.record_times.iter().any(|&t| t < 0.0 || t > self.duration * (1.0 + 1e-12))
        {
            return bad("record_times must be sorted within [0, duration]");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MasterResult {
    pub times: Vec<f64>,
    /// Probability of the initial state.
    pub p: Vec<f64>,
    /// `⟨O_+|ρ|O_−⟩`
    pub coherence: Vec<C64>,
    pub code_population: Vec<f64>,
    pub wrong_population: Vec<f64>,
    #[serde(skip)]
    pub states: Vec<Operator>,
}

fn rk4_step(gen: &Generator, rho: &Operator, h: f64) -> Operator {
    let k1 = gen.apply(rho);
    let k2 = gen.apply(&(rho + &k1.scale_re(0.5 * h)));
    let k3 = gen.apply(&(rho + &k2.scale_re(0.5 * h)));
    let k4 = gen.apply(&(rho + &k3.scale_re(h)));
    let sum = &(&k1 + &k2.scale_re(2.0)) + &(&k3.scale_re(2.0) + &k4);
    rho + &sum.scale_re(h / 6.0)
}

/// Propagates `rho` over `[t0, t1]` with the largest step `≤ dt` that divides the interval.
pub fn propagate(gen: &Generator, rho: &Operator, t0: f64, t1: f64, dt: f64) -> Result<Operator> {
    let len = t1 - t0;
    if len <= 0.0 {
        return Ok(rho.clone());
    }
    let n = ((len / dt) - 1e-9).ceil().max(1.0) as usize;
    let h = len / n as f64;
    let mut r = rho.clone();
    for k in 0..n {
        r = rk4_step(gen, &r, h);
        let tr = r.trace();
        if !r.is_finite() || (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(MasterError::Unstable {
                t: t0 + (k + 1) as f64 * h,
                what: format!("trace drift {:.3e}", (tr - 1.0).norm()),
            });
        }
        // Re-hermitize and renormalize the trace.
        r = (&r + &r.dagger()).scale_re(0.5 / tr.re);
    }
    Ok(r)
}

struct Readout {
    psi0: StateVector,
    plus: StateVector,
    minus: StateVector,
    pc: Operator,
    pw: Operator,
}

fn population(rho: &Operator, psi: &StateVector) -> f64 {
    DensityMatrix::from_operator_unchecked(rho.clone()).population(psi)
}

impl Readout {
    fn for_cfg(cfg: &MasterConfig) -> Self {
        if cfg.variant == Variant::ReducedEffective {
            let (u, d) = (states::up(), states::down());
            Readout {
                psi0: states::plus(),
                pc: Operator::identity(2),
                pw: Operator::zeros(2),
                plus: u,
                minus: d,
            }
        } else {
            let c = &cfg.code;
            Readout {
                psi0: c.initial_state(),
                plus: c.code_states[0].clone(),
                minus: c.code_states[1].clone(),
                pc: c.code_projector(),
                pw: c.wrong_projector(),
            }
        }
    }
}

/// Fixed-step RK4 integration with discrete maps (Zeno readouts, σ_z-error
/// correction) applied at their exact times.
pub fn integrate(cfg: &MasterConfig) -> Result<MasterResult> {
    cfg.validate()?;
    let gen = cfg.generator()?;
    let ro = Readout::for_cfg(cfg);
    let mut rho = Operator::outer(&ro.psi0, &ro.psi0);

    let (map, interval): (Vec<Operator>, Option<f64>) = match cfg.variant {
        Variant::CorrectedWithEc => (ec_kraus(&cfg.code), Some(cfg.ec_interval)),
        Variant::PlainLindblad | Variant::Corrected => match cfg.code.strategy.zeno_interval() {
            Some(dt) => (zeno_kraus(&cfg.code), Some(dt)),
            None => (vec![], None),
        },
        Variant::ReducedEffective => (vec![], None),
    };

    let mut out = MasterResult {
        times: vec![],
        p: vec![],
        coherence: vec![],
        code_population: vec![],
        wrong_population: vec![],
        states: vec![],
    };
    let mut t = 0.0;
    let mut next_map = 1usize;
    for &tr in &cfg.record_times {
        // Advance to `tr`, stopping at every map time on the way.
        loop {
            let tm = interval.map(|iv| iv * next_map as f64).unwrap_or(f64::INFINITY);
            if tm <= tr * (1.0 + 1e-12) + 1e-15 {
                rho = propagate(&gen, &rho, t, tm, cfg.dt)?;
                t = tm;
                rho = apply_kraus(&map, &rho);
                next_map += 1;
            } else {
                rho = propagate(&gen, &rho, t, tr, cfg.dt)?;
                t = tr.max(t);
                break;
            }
        }
        let dev = rho.hermitian_deviation();
        if dev > 1e-8 {
            return Err(MasterError::Unstable { t, what: format!("hermiticity drift {dev:.3e}") });
        }
        if cfg.check_positivity {
            let m = DensityMatrix::from_operator_unchecked(rho.clone()).min_eigenvalue();
            if m < -1e-8 {
                return Err(MasterError::Unstable { t, what: format!("negative eigenvalue {m:.3e}") });
            }
        }
        out.times.push(t);
        out.p.push(population(&rho, &ro.psi0).clamp(0.0, 1.0));
        out.coherence.push(ro.plus.inner(&rho.apply(&ro.minus)));
        out.code_population.push((&ro.pc * &rho).trace().re);
        out.wrong_population.push((&ro.pw * &rho).trace().re);
        if cfg.keep_states {
            out.states.push(rho.clone());
        }
    }
    Ok(out)
}

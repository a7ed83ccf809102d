//! Quantum-jump Monte Carlo with imperfect detection and click-triggered
//! feedback.
//!
//! The clock advances in steps of `dt`, split at every scheduled event
//! (delayed corrections, record times, Zeno/parity/EC readouts, end of a dead
//! window) so those happen at their exact times. Between events the state is
//! propagated with the exact `exp(−iH_nh h)`; a jump on channel `J` is drawn at
//! the end of each sub-step with probability `2γh⟨J†J⟩`.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::master::ec_kraus;
use crate::protocols::{Detection, DephasingStrategy, NoiseModel, ProtocolError, SensorCode};
use crate::qlin::{Operator, Propagator, QlinError, StateVector, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("trajectory: invalid config: {0}")]
    InvalidConfig(String),
    #[error("trajectory {traj}: state norm² {norm2:.3e} at t = {t} (step too large)")]
    NormUnderflow { traj: u64, t: f64, norm2: f64 },
    #[error("trajectory {traj}: non-finite amplitudes at step {step} (t = {t})")]
    NonFinite { traj: u64, step: u64, t: f64 },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Linalg(#[from] QlinError),
}

pub type Result<T> = std::result::Result<T, TrajectoryError>;

/// Norm² below which evolution between events is considered broken.
pub const NORM_FLOOR: f64 = 1e-12;
/// Stability bound: `dt ≤ DT_FACTOR / max(γ, |g|, Ω)`.
pub const DT_FACTOR: f64 = 0.01;

/// Switches beyond the basic noise model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryOptions {
    /// Let real jumps happen while a correction is pending (off by default).
    pub jumps_during_delay: bool,
    /// Dark-count corrections wait for the delay like real ones.
    pub delay_dark_corrections: bool,
    /// Gate the signal off while the detector is dead.
    pub dead_time_mitigation: bool,
    /// Selective σ_z-error recovery every interval; removes the strategy term from `H`.
    pub ec_interval: Option<f64>,
    /// Keep the click list of every trajectory in the ensemble result.
    pub keep_clicks: bool,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        TrajectoryOptions {
            jumps_during_delay: false,
            delay_dark_corrections: true,
            dead_time_mitigation: false,
            ec_interval: None,
            keep_clicks: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryConfig {
    pub code: SensorCode,
    pub noise: NoiseModel,
    pub g: f64,
    pub duration: f64,
    pub dt: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub record_times: Vec<f64>,
    pub options: TrajectoryOptions,
}

impl TrajectoryConfig {
    /// Defaults: `dt` at a tenth of the stability bound, 201 record points, one trajectory.
    pub fn new(code: SensorCode, noise: NoiseModel, g: f64, duration: f64) -> Self {
        let mut cfg = TrajectoryConfig {
            code,
            noise,
            g,
            duration,
            dt: 0.0,
            n_traj: 1,
            seed: 0,
            record_times: crate::master::uniform_times(duration, 201),
            options: TrajectoryOptions::default(),
        };
        cfg.dt = 0.1 * cfg.dt_limit();
        cfg
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_n_traj(mut self, n: usize) -> Self {
        self.n_traj = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_record_times(mut self, times: Vec<f64>) -> Self {
        self.record_times = times;
        self
    }

    pub fn with_options(mut self, options: TrajectoryOptions) -> Self {
        self.options = options;
        self
    }

    /// `0.01 / max(γ, |g|, Ω)`
    pub fn dt_limit(&self) -> f64 {
        let omega = match self.code.strategy {
            DephasingStrategy::EnergyGap { omega } => omega.abs(),
            _ => 0.0,
        };
        DT_FACTOR / self.noise.gamma.max(self.g.abs()).max(omega).max(1e-300)
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.code.validate()?;
        let bad = |m: String| Err(TrajectoryError::InvalidConfig(m));
        if (self.noise.gamma - self.code.gamma).abs() > 1e-12 * self.noise.gamma.max(1.0) {
            return bad("noise.gamma differs from the code's gamma".into());
        }
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return bad("duration must be finite and non-negative".into());
        }
        if !(self.dt > 0.0) || self.dt > self.dt_limit() * (1.0 + 1e-9) {
            return bad(format!("dt = {} outside (0, {}]", self.dt, self.dt_limit()));
        }
        if self.n_traj == 0 {
            return bad("n_traj must be at least 1".into());
        }
        if !self.g.is_finite() {
            return bad("g must be finite".into());
        }
        let tol = 1e-12 * self.duration.max(1.0);
        if self.record_times.windows(2).any(|w| !(w[0] <= w[1]))
            || self.record_times.iter().any(|&t| !(t >= 0.0 && t <= self.duration + tol))
        {
            return bad("record_times must be sorted and within [0, duration]".into());
        }
        for iv in [self.options.ec_interval, self.code.strategy.zeno_interval()].into_iter().flatten() {
            if !(iv > 0.0) {
                return bad(format!("readout interval {iv} must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClickEvent {
    pub time: f64,
    pub label: String,
    /// Reported by the detector (false for lost photons and parity-channel decays).
    pub detected: bool,
    /// Dark count rather than an emitted photon.
    pub dark: bool,
}

/// Outcome of one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub index: u64,
    pub clicks: Vec<ClickEvent>,
    /// Readout probability at each record time.
    pub p: Vec<f64>,
    /// Detected clicks (real and dark) up to each record time.
    pub n_clicks: Vec<usize>,
    /// Time and code-projected readout right after the most recent correction.
    pub after_last_correction: Option<(f64, f64)>,
    pub final_state: StateVector,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryResult {
    pub times: Vec<f64>,
    pub p_initial: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_clicks_mean: Vec<f64>,
    pub n_traj: usize,
    /// `(trajectory index, event)` when clicks are kept.
    pub click_events: Vec<(u64, ClickEvent)>,
}

/// `|⟨ψ₀|ψ⟩|² / ‖ψ‖²` with `ψ₀ = (|O_+⟩ + |O_−⟩)/√2`.
pub fn readout_probability(psi: &StateVector, code: &SensorCode) -> f64 {
    let n2 = psi.norm_sqr();
    if n2 == 0.0 {
        return 0.0;
    }
    (code.initial_state().inner(psi).norm_sqr() / n2).clamp(0.0, 1.0)
}

/// Readout after projecting onto the code space; `0.5` if the projection vanishes.
pub fn projected_readout(psi: &StateVector, code: &SensorCode) -> f64 {
    let pc = code.code_projector().apply(psi);
    if pc.norm_sqr() < 1e-300 {
        return 0.5;
    }
    readout_probability(&pc, code)
}

struct Channel {
    label: String,
    op: Operator,
    jdj: Operator,
    detection: Detection,
    correction: Option<Operator>,
}

struct Evolution {
    prop: Propagator,
    step: Operator,
}

impl Evolution {
    fn new(h_nh: &Operator, dt: f64) -> Result<Self> {
        let prop = Propagator::from_hamiltonian(h_nh)?;
        let step = prop.at(dt)?;
        Ok(Evolution { prop, step })
    }
}

/// Everything shared by the trajectories of one configuration.
pub struct Engine<'a> {
    cfg: &'a TrajectoryConfig,
    channels: Vec<Channel>,
    live: Evolution,
    gated: Option<Evolution>,
    psi0: StateVector,
    code_projector: Operator,
    ec: Option<Vec<Operator>>,
}

fn norm2(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

fn normalize(x: &mut [C64]) {
    let n = norm2(x).sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|z| *z /= n);
    }
}

fn apply(op: &Operator, x: &mut Vec<C64>, buf: &mut Vec<C64>) {
    op.apply_into(x, buf);
    std::mem::swap(x, buf);
}

impl<'a> Engine<'a> {
    pub fn new(cfg: &'a TrajectoryConfig) -> Result<Self> {
        cfg.validate()?;
        let code = &cfg.code;
        let mut h = code.hamiltonian(cfg.g);
        if cfg.options.ec_interval.is_some() {
            h = &h - &code.strategy_term;
        }
        let decay = code.decay_operator().scale(C64::new(0.0, code.gamma));
        let live = Evolution::new(&(&h - &decay), cfg.dt)?;
        let gated = if cfg.options.dead_time_mitigation && cfg.noise.dead_time > 0.0 {
            let h_off = &h - &code.signal_generator.scale_re(cfg.g);
            Some(Evolution::new(&(&h_off - &decay), cfg.dt)?)
        } else {
            None
        };
        let channels = code
            .jumps
            .iter()
            .map(|j| Channel {
                label: j.label.clone(),
                op: j.op.clone(),
                jdj: &j.op.dagger() * &j.op,
                detection: j.detection,
                correction: code.correction(&j.label).cloned(),
            })
            .collect::<Vec<_>>();
        if let Some(ch) = channels.iter().find(|c| c.detection == Detection::Photon && c.correction.is_none()) {
            return Err(TrajectoryError::InvalidConfig(format!("no correction for channel {}", ch.label)));
        }
        Ok(Engine {
            cfg,
            channels,
            live,
            gated,
            psi0: code.initial_state(),
            code_projector: code.code_projector(),
            ec: cfg.options.ec_interval.map(|_| ec_kraus(code)),
        })
    }

    /// Runs trajectory `index` with its own RNG stream.
    pub fn run(&self, index: u64) -> Result<TrajectoryRecord> {
        let cfg = self.cfg;
        let code = &cfg.code;
        let noise = &cfg.noise;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(index);

        let dim = code.dim();
        let mut psi: Vec<C64> = self.psi0.amplitudes().to_vec();
        let mut buf = vec![C64::new(0.0, 0.0); dim];
        let n_rec = cfg.record_times.len();
        let mut p = Vec::with_capacity(n_rec);
        let mut n_clicks = Vec::with_capacity(n_rec);
        let mut clicks = Vec::new();
        let mut detected = 0usize;
        let mut pending: VecDeque<(f64, usize)> = VecDeque::new();
        let mut dead_until = f64::NEG_INFINITY;
        let mut after_last_correction = None;

        let tol = 1e-12 * cfg.duration.max(1.0);
        let zeno_iv = code.strategy.zeno_interval();
        let parity = code.parity_monitor.as_ref();
        let mut next_zeno = zeno_iv.unwrap_or(f64::INFINITY);
        let mut next_parity = parity.map_or(f64::INFINITY, |m| m.interval);
        let mut next_ec = cfg.options.ec_interval.unwrap_or(f64::INFINITY);
        let mut rec = 0;
        let mut t = 0.0;
        let mut grid: u64 = 0;
        let mut step: u64 = 0;

        // ψ is normalized whenever this is called.
        let readout = |psi: &[C64]| -> f64 {
            let overlap: C64 = self.psi0.amplitudes().iter().zip(psi).map(|(a, b)| a.conj() * b).sum();
            overlap.norm_sqr().clamp(0.0, 1.0)
        };

        loop {
            while rec < n_rec && cfg.record_times[rec] <= t + tol {
                normalize(&mut psi);
                p.push(readout(&psi));
                n_clicks.push(detected);
                rec += 1;
            }
            if t >= cfg.duration - tol {
                break;
            }
            let mut t_next = ((grid + 1) as f64 * cfg.dt).min(cfg.duration);
            let mut on_grid = true;
            let mut candidates = vec![next_zeno, next_parity, next_ec];
            if let Some(&(due, _)) = pending.front() {
                candidates.push(due);
            }
            if rec < n_rec {
                candidates.push(cfg.record_times[rec]);
            }
            if dead_until > t + tol {
                candidates.push(dead_until);
            }
            for c in candidates {
                if c < t_next - tol {
                    t_next = c;
                    on_grid = false;
                }
            }
            let h = t_next - t;
            let evo = match &self.gated {
                Some(gated) if t < dead_until - tol => gated,
                _ => &self.live,
            };
            if (h - cfg.dt).abs() <= 1e-12 * cfg.dt {
                apply(&evo.step, &mut psi, &mut buf);
            } else if h > 0.0 {
                apply(&evo.prop.at(h)?, &mut psi, &mut buf);
            }
            t = t_next;
            if on_grid {
                grid += 1;
            }
            step += 1;
            let n2 = norm2(&psi);
            if !n2.is_finite() {
                return Err(TrajectoryError::NonFinite { traj: index, step, t });
            }
            if n2 < NORM_FLOOR {
                return Err(TrajectoryError::NormUnderflow { traj: index, t, norm2: n2 });
            }

            // Real jumps.
            if code.gamma > 0.0 && (pending.is_empty() || cfg.options.jumps_during_delay) {
                let r: f64 = rng.gen();
                let mut acc = 0.0;
                for (k, ch) in self.channels.iter().enumerate() {
                    acc += 2.0 * code.gamma * h * ch.jdj.sandwich(&psi).re / n2;
                    if r < acc {
                        apply(&ch.op, &mut psi, &mut buf);
                        normalize(&mut psi);
                        let seen = match ch.detection {
                            Detection::Photon => {
                                let lost = rng.gen::<f64>() < noise.loss_alpha;
                                !lost && t >= dead_until - tol
                            }
                            Detection::Parity => false,
                        };
                        if seen {
                            detected += 1;
                            dead_until = t + noise.dead_time;
                            pending.push_back((t + noise.correction_delay, k));
                        }
                        clicks.push(ClickEvent { time: t, label: ch.label.clone(), detected: seen, dark: false });
                        break;
                    }
                }
            }

            // Dark counts, one detector per photon channel.
            if noise.dark_rate > 0.0 {
                for (k, ch) in self.channels.iter().enumerate() {
                    if ch.detection != Detection::Photon {
                        continue;
                    }
                    if rng.gen::<f64>() < noise.dark_rate * h && t >= dead_until - tol {
                        detected += 1;
                        dead_until = t + noise.dead_time;
                        let delay = if cfg.options.delay_dark_corrections { noise.correction_delay } else { 0.0 };
                        let at = t + delay;
                        let pos = pending.iter().position(|&(d, _)| d > at).unwrap_or(pending.len());
                        pending.insert(pos, (at, k));
                        clicks.push(ClickEvent { time: t, label: ch.label.clone(), detected: true, dark: true });
                    }
                }
            }

            // Corrections that are due.
            while let Some(&(due, k)) = pending.front() {
                if due > t + tol {
                    break;
                }
                pending.pop_front();
                let c = self.channels[k].correction.as_ref().expect("checked in Engine::new");
                apply(c, &mut psi, &mut buf);
                normalize(&mut psi);
                let v = StateVector::new(psi.clone());
                after_last_correction = Some((t, projected_readout(&v, code)));
            }

            if t >= next_zeno - tol {
                let pc = &self.code_projector;
                let rest = &Operator::identity(dim) - pc;
                self.measure(&[pc, &rest], &mut psi, &mut buf, &mut rng);
                next_zeno += zeno_iv.unwrap();
            }
            if t >= next_ec - tol {
                let kraus: Vec<&Operator> = self.ec.as_ref().unwrap().iter().collect();
                self.measure(&kraus, &mut psi, &mut buf, &mut rng);
                next_ec += cfg.options.ec_interval.unwrap();
            }
            if let Some(m) = parity {
                if t >= next_parity - tol {
                    let id = Operator::identity(dim);
                    let odd = (&id - &m.parity).scale_re(0.5);
                    let even = (&id + &m.parity).scale_re(0.5);
                    if self.measure(&[&even, &odd], &mut psi, &mut buf, &mut rng) == 1 {
                        let minus = (&id - &m.locator).scale_re(0.5);
                        let plus = (&id + &m.locator).scale_re(0.5);
                        let label = if self.measure(&[&minus, &plus], &mut psi, &mut buf, &mut rng) == 0 {
                            &m.on_minus
                        } else {
                            &m.on_plus
                        };
                        let c = code.correction(label).ok_or_else(|| {
                            TrajectoryError::InvalidConfig(format!("no correction {label} for the parity monitor"))
                        })?;
                        apply(c, &mut psi, &mut buf);
                        normalize(&mut psi);
                    }
                    next_parity += m.interval;
                }
            }
        }
        Ok(TrajectoryRecord {
            index,
            clicks,
            p,
            n_clicks,
            after_last_correction,
            final_state: StateVector::new(psi),
        })
    }

    /// Selective measurement with Kraus operators; returns the outcome index.
    fn measure(&self, kraus: &[&Operator], psi: &mut Vec<C64>, buf: &mut Vec<C64>, rng: &mut ChaCha8Rng) -> usize {
        let total = norm2(psi);
        let r: f64 = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = kraus.len() - 1;
        for (k, op) in kraus.iter().enumerate() {
            op.apply_into(psi, buf);
            acc += norm2(buf);
            if r < acc {
                chosen = k;
                break;
            }
        }
        kraus[chosen].apply_into(psi, buf);
        std::mem::swap(psi, buf);
        normalize(psi);
        chosen
    }
}

/// One trajectory; a pure function of `(cfg, index)`.
pub fn run_trajectory(cfg: &TrajectoryConfig, index: u64) -> Result<TrajectoryRecord> {
    Engine::new(cfg)?.run(index)
}

/// Averages `n_traj` trajectories (run in parallel, reduced in index order).
pub fn ensemble_probability(cfg: &TrajectoryConfig) -> Result<TrajectoryResult> {
    let engine = Engine::new(cfg)?;
    let records: Vec<TrajectoryRecord> =
        (0..cfg.n_traj as u64).into_par_iter().map(|i| engine.run(i)).collect::<Result<_>>()?;
    let m = cfg.record_times.len();
    let n = records.len() as f64;
    let mut sum = vec![0.0; m];
    let mut sum_sq = vec![0.0; m];
    let mut clicks = vec![0.0; m];
    let mut events = Vec::new();
    for r in &records {
        for j in 0..m {
            sum[j] += r.p[j];
            sum_sq[j] += r.p[j] * r.p[j];
            clicks[j] += r.n_clicks[j] as f64;
        }
        if cfg.options.keep_clicks {
            events.extend(r.clicks.iter().map(|c| (r.index, c.clone())));
        }
    }
    let mut p_initial = Vec::with_capacity(m);
    let mut stderr = Vec::with_capacity(m);
    for j in 0..m {
        let mean = sum[j] / n;
        let var = if n > 1.0 { ((sum_sq[j] - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        p_initial.push(mean.clamp(0.0, 1.0));
        stderr.push((var / n).sqrt());
    }
    Ok(TrajectoryResult {
        times: cfg.record_times.clone(),
        p_initial,
        stderr,
        n_clicks_mean: clicks.iter().map(|c| c / n).collect(),
        n_traj: cfg.n_traj,
        click_events: events,
    })
}

/// Inter-jump intervals for the product formula: the first runs from `0` to
/// the first click, later ones from the previous correction to the next click.
pub fn product_intervals(clicks: &[ClickEvent], delay: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(clicks.len());
    let mut start = 0.0;
    for c in clicks.iter().filter(|c| c.detected) {
        out.push(c.time - start);
        start = c.time + delay;
    }
    out
}

#[cfg(test)]
mod tests;

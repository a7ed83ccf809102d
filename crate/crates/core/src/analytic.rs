//! Closed-form model of delayed feedback for the two-qubit code: per-cycle
//! coefficients `a(t)`, `b(t)`, the product-form readout probability, its
//! averaged second-order expansion, and Monte-Carlo averages over jump times.
//!
//! One cycle is: no-click evolution for `t`, a click, no-click evolution for
//! the delay `τ`, then the correction. Code-space amplitudes pick up `a(t)`
//! on `|O_+⟩` and `b(t)` on `|O_−⟩`, up to a factor common to both.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("analytic: invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("analytic: jump-time list is empty")]
    EmptyTimes,
    #[error("analytic: both amplitude products underflowed")]
    DegenerateDenominator,
}

pub type Result<T> = std::result::Result<T, AnalyticError>;

/// Threshold above which `gτ` or `γτ` is flagged as outside the small-delay regime.
pub const SMALL_DELAY_WARN: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayParams {
    pub tau: f64,
    pub g: f64,
    pub gamma: f64,
}

impl DelayParams {
    pub fn new(tau: f64, g: f64, gamma: f64) -> Result<Self> {
        for (name, value) in [("tau", tau), ("gamma", gamma)] {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(AnalyticError::InvalidParameter { name, value });
            }
        }
        if !g.is_finite() {
            return Err(AnalyticError::InvalidParameter { name: "g", value: g });
        }
        Ok(DelayParams { tau, g, gamma })
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = vec![];
        if (self.g * self.tau).abs() > SMALL_DELAY_WARN {
            w.push(format!("g·τ = {:.3} is not small", self.g * self.tau));
        }
        if self.gamma * self.tau > SMALL_DELAY_WARN {
            w.push(format!("γ·τ = {:.3} is not small", self.gamma * self.tau));
        }
        w
    }

    /// Upper end of the window where the averaged expansion holds.
    pub fn validity_upper(&self) -> f64 {
        1.0 / (self.g * self.g * (self.gamma * self.tau.powi(3)).sqrt())
    }

    /// Net no-click time for wall time `t`: `t(1 − γτ)`.
    pub fn effective_time(&self, t: f64) -> f64 {
        t * (1.0 - self.gamma * self.tau)
    }
}

/// `sin(gx)/g`, continuous through `g = 0`.
fn sin_over(g: f64, x: f64) -> f64 {
    let z = g * x;
    if z.abs() < 1e-4 {
        x * (1.0 - z * z / 6.0 * (1.0 - z * z / 20.0))
    } else {
        z.sin() / g
    }
}

/// `a(t)` rearranged without the `1/g²` cancellation:
/// `e^{−igt}cos gτ + e^{igt}(γ − ig)·S(τ) − (γ²/2)·S(τ)·S(t)` with `S(x) = sin(gx)/g`.
pub fn a_coeff(t: f64, p: &DelayParams) -> C64 {
    let (g, gm) = (p.g, p.gamma);
    let st = sin_over(g, p.tau);
    C64::from_polar(1.0, -g * t) * (g * p.tau).cos() + C64::from_polar(1.0, g * t) * C64::new(gm, -g) * st
        - C64::new(0.5 * gm * gm * st * sin_over(g, t), 0.0)
}

/// `b(t)` rearranged likewise:
/// `e^{−igτ}cos gt + i cos gτ sin gt − sin gt sin gτ + 2iγ sin gt·S(τ) + (γ²/2)·S(τ)·S(t)`.
pub fn b_coeff(t: f64, p: &DelayParams) -> C64 {
    let (g, gm, tau) = (p.g, p.gamma, p.tau);
    let st = sin_over(g, tau);
    let sgt = (g * t).sin();
    C64::from_polar(1.0, -g * tau) * (g * t).cos()
        + C64::new(-sgt * (g * tau).sin() + 0.5 * gm * gm * st * sin_over(g, t), (g * tau).cos() * sgt + 2.0 * gm * sgt * st)
}

/// Direct transcription of the long form of `a(t)` (singular at `g = 0`).
pub fn a_coeff_long(t: f64, p: &DelayParams) -> C64 {
    let (g, gm, tau) = (p.g, p.gamma, p.tau);
    let i = C64::new(0.0, 1.0);
    let inner = C64::new(gm * gm, 0.0) + C64::from_polar(1.0, 2.0 * g * t) * (C64::new(2.0 * g, gm)).powi(2);
    C64::from_polar(1.0, -g * t) / (4.0 * g * g) * (4.0 * g * g * (g * tau).cos() - i * (g * tau).sin() * inner)
}

/// Direct transcription of the long form of `b(t)`.
pub fn b_coeff_long(t: f64, p: &DelayParams) -> C64 {
    let (g, gm, tau) = (p.g, p.gamma, p.tau);
    let i = C64::new(0.0, 1.0);
    let poly = C64::new(-2.0 * g * g + gm * gm, 4.0 * g * gm);
    let inner = C64::from_polar(1.0, g * tau) * (i * 2.0 * g * g * (g * tau).cos() + poly * (g * tau).sin()) * (g * t).sin();
    C64::from_polar(1.0, -g * tau) / (2.0 * g * g) * (2.0 * g * g * (g * t).cos() + inner)
}

/// Three-term short form of `a(t)`.
pub fn a_coeff_short(t: f64, p: &DelayParams) -> C64 {
    let (g, gm, tau) = (p.g, p.gamma, p.tau);
    let i = C64::new(0.0, 1.0);
    C64::from_polar(1.0, -g * t) * (g * tau).cos()
        - i * (g * tau).sin() * C64::from_polar(1.0, g * t) * C64::new(2.0 * g, gm).powi(2) / (4.0 * g * g)
        - i * (gm * gm / (4.0 * g * g)) * (g * tau).sin() * C64::from_polar(1.0, -g * t)
}

/// Three-term short form of `b(t)`.
pub fn b_coeff_short(t: f64, p: &DelayParams) -> C64 {
    let (g, gm, tau) = (p.g, p.gamma, p.tau);
    let i = C64::new(0.0, 1.0);
    (g * tau).cos() * C64::from_polar(1.0, g * t)
        - i * C64::from_polar(1.0, -g * t) * (g * tau).sin() * C64::new(2.0 * g, -gm).powi(2) / (4.0 * g * g)
        - i * C64::from_polar(1.0, g * t) * (g * tau).sin() * C64::new(gm * gm, 4.0 * g * gm) / (4.0 * g * g)
}

/// Treatment of the interval before the first click.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstFactor {
    /// `a(t₁)`, `b(t₁)` like every other cycle (large-N simplification).
    Simplified,
    /// `e^{∓igt₁}`: the initial state sits in the code, so no wrong-sign phase yet.
    Exact,
}

/// Running log-magnitude and phase of a complex product.
#[derive(Clone, Copy, Debug, Default)]
struct LogProduct {
    log_mag: f64,
    phase: f64,
}

impl LogProduct {
    fn push(&mut self, z: C64) {
        self.log_mag += z.norm().ln();
        self.phase += z.arg();
    }
}

/// `½ + ½ (Π a*b + c.c.) / (Π|a|² + Π|b|²)` in the log domain, where the
/// ratio reduces to `cos(Δφ) / cosh(Δ ln|·|)`.
pub fn exact_probability_with(times: &[f64], p: &DelayParams, first: FirstFactor) -> Result<f64> {
    if times.is_empty() {
        return Err(AnalyticError::EmptyTimes);
    }
    if let Some(&bad) = times.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(AnalyticError::InvalidParameter { name: "t_i", value: bad });
    }
    let mut la = LogProduct::default();
    let mut lb = LogProduct::default();
    for (k, &t) in times.iter().enumerate() {
        if k == 0 && first == FirstFactor::Exact {
            la.phase -= p.g * t;
            lb.phase += p.g * t;
        } else {
            la.push(a_coeff(t, p));
            lb.push(b_coeff(t, p));
        }
    }
    if la.log_mag == f64::NEG_INFINITY && lb.log_mag == f64::NEG_INFINITY {
        return Err(AnalyticError::DegenerateDenominator);
    }
    if !la.log_mag.is_finite() || !lb.log_mag.is_finite() {
        return Ok(0.5);
    }
    let ratio = (lb.phase - la.phase).cos() / (la.log_mag - lb.log_mag).cosh();
    Ok((0.5 + 0.5 * ratio).clamp(0.0, 1.0))
}

/// Product formula as printed (every cycle uses `a`, `b`).
pub fn exact_probability(times: &[f64], p: &DelayParams) -> Result<f64> {
    exact_probability_with(times, p, FirstFactor::Simplified)
}

/// Averaged second-order expansion in the delay, with `T = t(1 − γτ)`.
pub fn approx_probability(t: f64, p: &DelayParams) -> f64 {
    let tt = p.effective_time(t);
    let x = 2.0 * p.g * tt;
    let (g, tau) = (p.g, p.tau);
    0.5 + 0.5 * x.cos() - tt * tau * tau * g.powi(3) / 6.0 * x.sin() - tau * tau * tt * tt * g.powi(4) / 9.0 * x.cos()
}

/// Resummed next order (reconstructed): phase shift and Gaussian envelope
/// exponentiated instead of truncated.
pub fn order3_probability(t: f64, p: &DelayParams) -> f64 {
    let tt = p.effective_time(t);
    let (g, tau) = (p.g, p.tau);
    let phase = 2.0 * g * tt + tt * tau * tau * g.powi(3) / 3.0;
    0.5 + 0.5 * phase.cos() * (-2.0 / 9.0 * tt * tt * tau * tau * g.powi(4)).exp()
}

/// Warnings for `t` outside `1/γ ≪ t ≪ 1/(g²√(γτ³))`.
pub fn validity_warnings(t: f64, p: &DelayParams) -> Vec<String> {
    let mut w = p.warnings();
    if p.gamma > 0.0 && t * p.gamma < 1.0 {
        w.push(format!("t = {t} is below 1/γ"));
    }
    if p.tau > 0.0 && t > p.validity_upper() {
        w.push(format!("t = {t} exceeds 1/(g²√(γτ³)) = {:.3}", p.validity_upper()));
    }
    w
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PredictedEnvelope {
    /// Coefficient `k` of `e^{−k t²}`: `(2/9)τ²g⁴(1−γτ)²`.
    pub gaussian_exponent: f64,
    /// `√k`, the Gaussian decay rate.
    pub decay_rate: f64,
    /// `(g + g³τ²/3)(1 − γτ)` as quoted alongside the expansion.
    pub frequency_third: f64,
    /// `(g + g³τ²/6)(1 − γτ)`, following the sine coefficient of the expansion.
    pub frequency_sixth: f64,
    /// Phase rate of the expansion itself, `(g + g³τ²/12)(1 − γτ)`.
    pub frequency_twelfth: f64,
}

pub fn predicted_envelope(p: &DelayParams) -> PredictedEnvelope {
    let (g, tau) = (p.g, p.tau);
    let s = 1.0 - p.gamma * tau;
    let k = 2.0 / 9.0 * tau * tau * g.powi(4) * s * s;
    PredictedEnvelope {
        gaussian_exponent: k,
        decay_rate: k.sqrt(),
        frequency_third: (g + g.powi(3) * tau * tau / 3.0) * s,
        frequency_sixth: (g + g.powi(3) * tau * tau / 6.0) * s,
        frequency_twelfth: (g + g.powi(3) * tau * tau / 12.0) * s,
    }
}

/// How jump times are drawn for the Monte-Carlo average at total no-click time `T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    /// `N = max(1, round(γT))` spacings of a uniform partition of `T`
    /// (exponential draws conditioned on their sum).
    FixedCount,
    /// Exponential(γ) spacings until `T` is exceeded; the overshoot is dropped.
    Poisson,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResampleConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub scheme: Resampling,
    pub first: FirstFactor,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        ResampleConfig { n_samples: 10_000, seed: 1, scheme: Resampling::FixedCount, first: FirstFactor::Simplified }
    }
}

/// Draws one list of inter-jump times summing to `total`.
pub fn draw_times<R: Rng>(rng: &mut R, total: f64, gamma: f64, scheme: Resampling) -> Vec<f64> {
    match scheme {
        Resampling::FixedCount => {
            let n = ((gamma * total).round() as usize).max(1);
            let exp = Exp::new(1.0).expect("unit rate");
            let raw: Vec<f64> = (0..n).map(|_| exp.sample(rng)).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x * total / s).collect()
        }
        Resampling::Poisson => {
            let mean = gamma * total;
            let n = if mean > 0.0 { Poisson::new(mean).expect("positive mean").sample(rng) as usize } else { 0 };
            if n == 0 {
                return vec![total];
            }
            let mut cuts: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * total).collect();
            cuts.sort_by(f64::total_cmp);
            let mut out = Vec::with_capacity(n);
            let mut prev = 0.0;
            for c in cuts {
                out.push(c - prev);
                prev = c;
            }
            out
        }
    }
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Mean and standard error of the product formula at wall time `t`, jump
/// times drawn with `Σ t_i = t(1 − γτ)`.
pub fn resample_average(t: f64, p: &DelayParams, cfg: &ResampleConfig) -> Result<(f64, f64)> {
    let curve = resample_curve(&[t], p, cfg)?;
    Ok(curve[0])
}

/// [`resample_average`] over a time grid; sample `k` uses stream `k` for every `t`.
pub fn resample_curve(times: &[f64], p: &DelayParams, cfg: &ResampleConfig) -> Result<Vec<(f64, f64)>> {
    if cfg.n_samples < 2 {
        return Err(AnalyticError::InvalidParameter { name: "n_samples", value: cfg.n_samples as f64 });
    }
    let per_sample: Vec<Result<Vec<f64>>> = (0..cfg.n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = sample_rng(cfg.seed, k);
            times
                .iter()
                .map(|&t| {
                    let list = draw_times(&mut rng, p.effective_time(t), p.gamma, cfg.scheme);
                    exact_probability_with(&list, p, cfg.first)
                })
                .collect()
        })
        .collect();
    let n = cfg.n_samples as f64;
    let mut sum = vec![0.0; times.len()];
    let mut sum_sq = vec![0.0; times.len()];
    for row in per_sample {
        for (j, v) in row?.into_iter().enumerate() {
            sum[j] += v;
            sum_sq[j] += v * v;
        }
    }
    Ok(sum
        .iter()
        .zip(&sum_sq)
        .map(|(&s, &q)| {
            let mean = s / n;
            let var = ((q / n - mean * mean) * n / (n - 1.0)).max(0.0);
            (mean, (var / n).sqrt())
        })
        .collect())
}

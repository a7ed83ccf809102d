//! Damped-cosine fitting, single-shot sensitivity and scaling exponents.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("estimate: need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("estimate: samples span {periods:.2} periods, need at least 1.5")]
    InsufficientSpan { periods: f64 },
    #[error("estimate: no spectral peak (flat data)")]
    NoSpectralPeak,
    #[error("estimate: fit did not converge after {iterations} iterations (gradient {gradient:.3e})")]
    NotConverged { iterations: usize, gradient: f64 },
    #[error("estimate: non-positive or non-finite input {0}")]
    NonPositive(&'static str),
    #[error("estimate: need ≥ 4 points over ≥ 1.5 decades")]
    InsufficientRange,
    #[error("estimate: ∂p/∂g vanishes on the whole grid")]
    DerivativeVanishes,
}

pub type Result<T> = std::result::Result<T, EstimateError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    /// `e^{−m₂ t}`
    Exponential,
    /// `e^{−m₂ t²}`; `m₂` is then the Gaussian exponent.
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub p: f64,
    /// Standard error; non-positive means unweighted.
    pub sigma: f64,
}

impl Sample {
    pub fn new(t: f64, p: f64, sigma: f64) -> Self {
        Sample { t, p, sigma }
    }
}

/// Builds unweighted samples from parallel slices.
pub fn samples_from(t: &[f64], p: &[f64]) -> Vec<Sample> {
    t.iter().zip(p).map(|(&t, &p)| Sample::new(t, p, 0.0)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    /// Angular oscillation frequency.
    pub m1: f64,
    pub m2: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// Parameter order: amplitude, m1, m2, offset.
    pub covariance: Vec<Vec<f64>>,
    /// `√(Σ w r²)`
    pub residual_norm: f64,
    pub envelope: Envelope,
    pub iterations: usize,
}

impl FitResult {
    pub fn m1_stderr(&self) -> f64 {
        self.covariance[1][1].max(0.0).sqrt()
    }
    pub fn m2_stderr(&self) -> f64 {
        self.covariance[2][2].max(0.0).sqrt()
    }
}

/// Both envelope fits plus the selection made from them.
#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeChoice {
    pub exponential: FitResult,
    pub gaussian: Option<FitResult>,
    pub chosen: Envelope,
    /// Exponential residual over Gaussian residual.
    pub residual_ratio: f64,
}

impl EnvelopeChoice {
    pub fn best(&self) -> &FitResult {
        match (self.chosen, &self.gaussian) {
            (Envelope::Gaussian, Some(g)) => g,
            _ => &self.exponential,
        }
    }
}

/// `(1 + A cos(m₁t) env(t))/2 + c`
pub fn damped_cosine(t: f64, amplitude: f64, m1: f64, m2: f64, offset: f64, env: Envelope) -> f64 {
    let e = match env {
        Envelope::Exponential => (-m2 * t).exp(),
        Envelope::Gaussian => (-m2 * t * t).exp(),
    };
    0.5 * (1.0 + amplitude * (m1 * t).cos() * e) + offset
}

fn model_and_jacobian(t: f64, x: &[f64; 4], env: Envelope) -> (f64, [f64; 4]) {
    let [a, m1, m2, c] = *x;
    let (e, de) = match env {
        Envelope::Exponential => ((-m2 * t).exp(), -t),
        Envelope::Gaussian => ((-m2 * t * t).exp(), -t * t),
    };
    let (s, co) = (m1 * t).sin_cos();
    let f = 0.5 * (1.0 + a * co * e) + c;
    (f, [0.5 * co * e, -0.5 * a * t * s * e, 0.5 * a * co * e * de, 1.0])
}

/// Frequency of the largest periodogram peak of the mean-removed data.
pub fn dominant_frequency(samples: &[Sample]) -> Result<f64> {
    let n = samples.len();
    let mean = samples.iter().map(|s| s.p).sum::<f64>() / n as f64;
    let span = samples.last().unwrap().t - samples[0].t;
    if !(span > 0.0) {
        return Err(EstimateError::NonPositive("time span"));
    }
    let var: f64 = samples.iter().map(|s| (s.p - mean).powi(2)).sum();
    if var < 1e-28 {
        return Err(EstimateError::NoSpectralPeak);
    }
    let power = |w: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for s in samples {
            let (sn, cs) = (w * s.t).sin_cos();
            re += (s.p - mean) * cs;
            im += (s.p - mean) * sn;
        }
        re * re + im * im
    };
    let mut dts: Vec<f64> = samples.windows(2).map(|w| w[1].t - w[0].t).filter(|d| *d > 0.0).collect();
    dts.sort_by(f64::total_cmp);
    let nyquist = std::f64::consts::PI / dts[dts.len() / 2];
    let w0 = std::f64::consts::PI / span;
    let n_grid = ((nyquist / w0) * 4.0).ceil().clamp(64.0, 200_000.0) as usize;
    let step = (nyquist - w0) / n_grid as f64;
    let (mut best_w, mut best_p) = (w0, power(w0));
    for k in 1..=n_grid {
        let w = w0 + k as f64 * step;
        let p = power(w);
        if p > best_p {
            best_p = p;
            best_w = w;
        }
    }
    // Golden-section refinement inside the bracketing cell.
    let (mut lo, mut hi) = ((best_w - step).max(0.0), best_w + step);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if power(a) > power(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Slope of the log of successive extrema of `|p − ½|` as a decay guess.
fn envelope_guess(samples: &[Sample], env: Envelope) -> f64 {
    let mut pts = vec![];
    for w in samples.windows(3) {
        let (a, b, c) = ((w[0].p - 0.5).abs(), (w[1].p - 0.5).abs(), (w[2].p - 0.5).abs());
        if b >= a && b >= c && b > 1e-12 {
            let x = match env {
                Envelope::Exponential => w[1].t,
                Envelope::Gaussian => w[1].t * w[1].t,
            };
            pts.push((x, b.ln()));
        }
    }
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if den > 0.0 {
        (-num / den).max(0.0)
    } else {
        0.0
    }
}

fn weights(samples: &[Sample]) -> Vec<f64> {
    if samples.iter().all(|s| s.sigma > 0.0) {
        samples.iter().map(|s| 1.0 / (s.sigma * s.sigma)).collect()
    } else {
        vec![1.0; samples.len()]
    }
}

const MAX_ITER: usize = 500;

/// Levenberg–Marquardt on the free parameters; `fixed_m2` pins the decay.
fn levenberg_marquardt(
    samples: &[Sample],
    x0: [f64; 4],
    env: Envelope,
    fixed_m2: bool,
) -> Result<FitResult> {
    let w = weights(samples);
    let free: Vec<usize> = if fixed_m2 { vec![0, 1, 3] } else { vec![0, 1, 2, 3] };
    let k = free.len();
    let eval = |x: &[f64; 4]| -> (f64, DMatrix<f64>, DVector<f64>) {
        let mut jtj = DMatrix::zeros(k, k);
        let mut jtr = DVector::zeros(k);
        let mut cost = 0.0;
        for (s, &wi) in samples.iter().zip(&w) {
            let (f, jac) = model_and_jacobian(s.t, x, env);
            let r = s.p - f;
            cost += wi * r * r;
            for (a, &ia) in free.iter().enumerate() {
                jtr[a] += wi * jac[ia] * r;
                for (b, &ib) in free.iter().enumerate() {
                    jtj[(a, b)] += wi * jac[ia] * jac[ib];
                }
            }
        }
        (cost, jtj, jtr)
    };
    let mut x = x0;
    let (mut cost, mut jtj, mut jtr) = eval(&x);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let scale = samples.iter().zip(&w).map(|(s, wi)| wi * s.p * s.p).sum::<f64>().max(1e-300);
    let mut converged = false;
    while iterations < MAX_ITER {
        iterations += 1;
        let grad = jtr.amax();
        if grad < 1e-10 * scale.sqrt().max(1.0) {
            converged = true;
            break;
        }
        let mut improved = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for d in 0..k {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let mut xn = x;
            for (d, &i) in free.iter().enumerate() {
                xn[i] += step[d];
            }
            let (cn, jn, rn) = eval(&xn);
            if cn.is_finite() && cn <= cost {
                let rel = (cost - cn) / cost.max(1e-300);
                let small_step = step.amax() <= 1e-14 * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs())));
                x = xn;
                cost = cn;
                jtj = jn;
                jtr = rn;
                lambda = (lambda * 0.3).max(1e-15);
                improved = true;
                if rel < 1e-16 && small_step {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !improved {
            // No downhill step at any damping: at a minimum to machine precision.
            converged = jtr.amax() < 1e-6 * scale.sqrt().max(1.0);
            break;
        }
    }
    if !converged {
        return Err(EstimateError::NotConverged { iterations, gradient: jtr.amax() });
    }

    let dof = samples.len().saturating_sub(k).max(1) as f64;
    let unweighted = !samples.iter().all(|s| s.sigma > 0.0);
    let factor = if unweighted { cost / dof } else { 1.0 };
    let inv = jtj.clone().try_inverse().unwrap_or_else(|| DMatrix::from_element(k, k, f64::NAN));
    let mut cov = vec![vec![0.0; 4]; 4];
    for (a, &ia) in free.iter().enumerate() {
        for (b, &ib) in free.iter().enumerate() {
            cov[ia][ib] = inv[(a, b)] * factor;
        }
    }
    // Canonical sign: positive frequency.
    let m1 = x[1].abs();
    Ok(FitResult {
        m1,
        m2: x[2],
        amplitude: x[0],
        offset: x[3],
        covariance: cov,
        residual_norm: cost.sqrt(),
        envelope: env,
        iterations,
    })
}

fn check_samples(samples: &[Sample]) -> Result<()> {
    if samples.len() < 8 {
        return Err(EstimateError::TooFewSamples { need: 8, got: samples.len() });
    }
    if samples.iter().any(|s| !s.t.is_finite() || !s.p.is_finite()) {
        return Err(EstimateError::NonPositive("sample"));
    }
    if samples.windows(2).any(|w| w[1].t <= w[0].t) {
        return Err(EstimateError::NonPositive("time increments"));
    }
    Ok(())
}

/// Variable-projection grid search: for each `(m₁, m₂)` the amplitude and
/// offset enter linearly and are solved exactly. Robust when the decay
/// outruns the oscillation and the periodogram peak sits at zero.
fn grid_guess(samples: &[Sample], env: Envelope) -> Option<[f64; 4]> {
    let w = weights(samples);
    let span = samples.last()?.t - samples[0].t;
    let mut dts: Vec<f64> = samples.windows(2).map(|w| w[1].t - w[0].t).collect();
    dts.sort_by(f64::total_cmp);
    let w_hi = (std::f64::consts::PI / dts[dts.len() / 2]).min(400.0 / span);
    let w_lo = 0.5 * std::f64::consts::PI / span;
    let log_grid = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
    };
    let omegas = log_grid(w_lo, w_hi, 120);
    let mut decays = vec![0.0];
    let t_scale = match env {
        Envelope::Exponential => span,
        Envelope::Gaussian => span * span,
    };
    decays.extend(log_grid(0.1 / t_scale, 200.0 / t_scale, 50));
    let mut best: Option<(f64, [f64; 4])> = None;
    for &om in &omegas {
        for &m2 in &decays {
            // Normal equations for p − ½ ≈ (A/2)·b(t) + c.
            let (mut sbb, mut sb1, mut s11, mut sby, mut s1y, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for (s, &wi) in samples.iter().zip(&w) {
                let e = match env {
                    Envelope::Exponential => (-m2 * s.t).exp(),
                    Envelope::Gaussian => (-m2 * s.t * s.t).exp(),
                };
                let b = 0.5 * (om * s.t).cos() * e;
                let y = s.p - 0.5;
                sbb += wi * b * b;
                sb1 += wi * b;
                s11 += wi;
                sby += wi * b * y;
                s1y += wi * y;
                syy += wi * y * y;
            }
            let det = sbb * s11 - sb1 * sb1;
            if det.abs() < 1e-300 {
                continue;
            }
            let a = (sby * s11 - sb1 * s1y) / det;
            let c = (sbb * s1y - sb1 * sby) / det;
            let cost = syy - a * sby - c * s1y;
            if best.map_or(true, |(bc, _)| cost < bc) {
                best = Some((cost, [a, om, m2, c]));
            }
        }
    }
    best.map(|b| b.1)
}

fn fit_envelope(samples: &[Sample], m1: Option<f64>, env: Envelope) -> Result<FitResult> {
    let mut starts = vec![];
    if let Some(m1) = m1 {
        starts.push([1.0, m1, envelope_guess(samples, env), 0.0]);
    }
    if let Some(x) = grid_guess(samples, env) {
        starts.push(x);
    }
    let mut best: Option<FitResult> = None;
    let mut last_err = EstimateError::NoSpectralPeak;
    for x0 in starts {
        let fit = match levenberg_marquardt(samples, x0, env, false) {
            Ok(f) if f.m2 < 0.0 => levenberg_marquardt(samples, [f.amplitude, f.m1, 0.0, f.offset], env, true),
            other => other,
        };
        match fit {
            Ok(f) if best.as_ref().map_or(true, |b| f.residual_norm < b.residual_norm) => best = Some(f),
            Ok(_) => {}
            Err(e) => last_err = e,
        }
    }
    best.ok_or(last_err)
}

/// Weighted least squares for `p = (1 + A cos(m₁t) e^{−m₂t})/2 + c`.
pub fn fit_damped_cosine(samples: &[Sample]) -> Result<FitResult> {
    check_samples(samples)?;
    let m1 = dominant_frequency(samples)?;
    let fit = fit_envelope(samples, Some(m1), Envelope::Exponential)?;
    let span = samples.last().unwrap().t - samples[0].t;
    let periods = fit.m1 * span / (2.0 * std::f64::consts::PI);
    if periods < 1.5 {
        return Err(EstimateError::InsufficientSpan { periods });
    }
    Ok(fit)
}

/// Fits both envelopes; the Gaussian one is chosen when the exponential
/// residual exceeds it by more than `threshold` (default 2).
pub fn fit_with_envelope_selection(samples: &[Sample], threshold: f64) -> Result<EnvelopeChoice> {
    let exponential = fit_damped_cosine(samples)?;
    let gaussian = fit_envelope(samples, Some(exponential.m1), Envelope::Gaussian).ok();
    let (chosen, ratio) = match &gaussian {
        Some(g) => {
            let ratio = exponential.residual_norm / g.residual_norm.max(1e-300);
            (if ratio > threshold { Envelope::Gaussian } else { Envelope::Exponential }, ratio)
        }
        None => (Envelope::Exponential, 1.0),
    };
    Ok(EnvelopeChoice { exponential, gaussian, chosen, residual_ratio: ratio })
}

#[derive(Clone, Debug, Serialize)]
pub struct SensitivityReport {
    /// Minimum over the grid of `√(p(1−p)) / (|∂p/∂g| √(T/t))`.
    pub delta_g: f64,
    pub optimal_t: f64,
    pub scaling_exponent: Option<f64>,
    pub baseline_ramsey: Option<f64>,
}

/// Central difference `∂p/∂g` with step `h`.
pub fn dp_dg(p: &impl Fn(f64, f64) -> f64, t: f64, g: f64, h: f64) -> f64 {
    (p(t, g + h) - p(t, g - h)) / (2.0 * h)
}

/// `(D(2h) − D(h)) / (D(h) − D(h/2))`, ≈ 4 for a second-order difference.
pub fn richardson_ratio(p: &impl Fn(f64, f64) -> f64, t: f64, g: f64, h: f64) -> f64 {
    let d1 = dp_dg(p, t, g, 2.0 * h);
    let d2 = dp_dg(p, t, g, h);
    let d3 = dp_dg(p, t, g, 0.5 * h);
    (d1 - d2) / (d2 - d3)
}

/// Single-shot uncertainty with `T_total/t` repetitions, minimized over `t_grid`
/// (points beyond `T_total` are skipped).
pub fn sensitivity(
    p: impl Fn(f64, f64) -> f64,
    g: f64,
    t_total: f64,
    t_grid: &[f64],
) -> Result<SensitivityReport> {
    if !(t_total > 0.0) || g == 0.0 || !g.is_finite() {
        return Err(EstimateError::NonPositive("T_total or g"));
    }
    let h = 1e-4 * g.abs();
    let mut best: Option<(f64, f64)> = None;
    for &t in t_grid.iter().filter(|&&t| t > 0.0 && t <= t_total * (1.0 + 1e-12)) {
        let pv = p(t, g).clamp(0.0, 1.0);
        let d = dp_dg(&p, t, g, h).abs();
        if d < 1e-300 || !d.is_finite() {
            continue;
        }
        let dg = (pv * (1.0 - pv)).sqrt() / (d * (t_total / t).sqrt());
        if dg.is_finite() && best.map_or(true, |(b, _)| dg < b) {
            best = Some((dg, t));
        }
    }
    let (delta_g, optimal_t) = best.ok_or(EstimateError::DerivativeVanishes)?;
    Ok(SensitivityReport { delta_g, optimal_t, scaling_exponent: None, baseline_ramsey: None })
}

/// Least-squares slope of `log Δg` against `log T`.
pub fn scaling_exponent(points: &[(f64, f64)]) -> Result<f64> {
    if points.iter().any(|&(t, d)| !(t > 0.0 && d > 0.0) || !t.is_finite() || !d.is_finite()) {
        return Err(EstimateError::NonPositive("T or Δg"));
    }
    if points.len() < 4 {
        return Err(EstimateError::InsufficientRange);
    }
    let (lo, hi) = points.iter().fold((f64::INFINITY, 0.0f64), |(l, h), p| (l.min(p.0), h.max(p.0)));
    if (hi / lo).log10() < 1.5 - 1e-12 {
        return Err(EstimateError::InsufficientRange);
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(num / den)
}

/// Single-probe Ramsey signal with relaxation `γ`.
pub fn ramsey_probability(g: f64, gamma: f64, t: f64) -> f64 {
    0.5 * (1.0 + (2.0 * g * t).cos() * (-gamma * t).exp())
}

/// Perfectly corrected protocol.
pub fn perfect_probability(g: f64, t: f64) -> f64 {
    0.5 * (1.0 + (2.0 * g * t).cos())
}

/// `√(2γe/T)·√(α/2)`
pub fn small_alpha_sensitivity(gamma: f64, alpha: f64, t_total: f64) -> f64 {
    (2.0 * gamma * std::f64::consts::E / t_total).sqrt() * (alpha / 2.0).sqrt()
}

/// Fine grid on `(0, t_max]` suited to resolving oscillation extrema.
pub fn time_grid(t_max: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| t_max * k as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests;

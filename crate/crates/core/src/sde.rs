//! Forward/reverse SDE coefficients for affine diffusions `dx = f(t) x dt + g(t) dw`.
//!
//! The reverse process is written in forward time and integrated with `t`
//! marching downward from `t_max` to `t_min`:
//!
//! ```text
//! dx = [f(t) x - (1 + λ²)/2 · g²(t) ∇ log p_t(x)] dt + λ g(t) dw̄,   dt < 0
//! ```
//!
//! In reversed time `t̃ = 1 - t` the drift changes sign; keeping forward time
//! everywhere avoids mixing the two conventions. `λ = 0` is the probability
//! flow ODE.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::integrate_checked;
use crate::rng::stream_rng;
use crate::schedule::{eval_point, to_kernel, KernelCoeffs, SchedulePoint, ScheduleSpec};

/// Drift `f(t)` and squared diffusion `g²(t)` of the forward SDE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SdeCoeffs {
    pub f: f64,
    pub g_sq: f64,
}

impl SdeCoeffs {
    pub fn g(&self) -> f64 {
        self.g_sq.sqrt()
    }
}

/// SDE coefficients of a TV/SNR schedule point.
///
/// `f = d log τ/dt + (d log γ/dt) / (1 + γ²)` and
/// `g² = -2 τ² (d log γ/dt) / (1 + γ²)`.
pub fn tvsnr_sde(point: &SchedulePoint) -> Result<SdeCoeffs> {
    if !(point.dlog_snr < 0.0) {
        return Err(Error::InvalidInput(format!(
            "SNR must be strictly decreasing, got d log γ/dt = {}",
            point.dlog_snr
        )));
    }
    let noise = point.noise_fraction();
    Ok(SdeCoeffs {
        f: point.dlog_tv + point.dlog_snr * noise,
        g_sq: -2.0 * point.tv_sq * point.dlog_snr * noise,
    })
}

/// SDE coefficients of a kernel `(a, b)` with time derivatives `(ȧ, ḃ)`:
/// `f = ȧ/a`, `g² = 2 a b d(b/a)/dt`.
pub fn kernel_to_sde(a: f64, a_dot: f64, b: f64, b_dot: f64) -> Result<SdeCoeffs> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidInput(format!(
            "kernel scales must be positive, got a = {a}, b = {b}"
        )));
    }
    // a² d(b/a)/dt
    let cross = a * b_dot - a_dot * b;
    if !(cross > 0.0) {
        return Err(Error::InvalidInput(
            "noise-to-signal ratio b/a must be strictly increasing".into(),
        ));
    }
    Ok(SdeCoeffs {
        f: a_dot / a,
        g_sq: 2.0 * (b / a) * cross,
    })
}

/// Forward SDE coefficients of a schedule at time `t`.
pub fn schedule_sde(spec: &ScheduleSpec, t: f64) -> Result<SdeCoeffs> {
    tvsnr_sde(&eval_point(spec, t)?)
}

/// Recovers the kernel at time `t` from the SDE coefficients by quadrature,
/// assuming the process starts deterministically at `t = 0` (`a(0) = 1`,
/// `b(0) = 0`):
///
/// ```text
/// a(t) = exp(∫₀ᵗ f du),   b²(t) = a²(t) ∫₀ᵗ g²(s) / a²(s) ds
/// ```
pub fn sde_to_kernel_quadrature<F, G>(f: F, g_sq: G, t: f64, tol: f64) -> Result<KernelCoeffs>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    sde_to_kernel_quadrature_from(f, g_sq, 0.0, KernelCoeffs { a: 1.0, b: 0.0 }, t, tol)
}

/// As [`sde_to_kernel_quadrature`], starting from a known kernel at `t0`.
///
/// Schedules with a finite SNR at `t = 0` already carry a little noise
/// there; this form propagates that initial `(a₀, b₀)`:
/// `a(t) = a₀ e^{F(t)}`, `b²(t) = e^{2F(t)} (b₀² + ∫ g²(s) e^{-2F(s)} ds)`
/// with `F(s) = ∫_{t0}^s f`.
pub fn sde_to_kernel_quadrature_from<F, G>(
    f: F,
    g_sq: G,
    t0: f64,
    start: KernelCoeffs,
    t: f64,
    tol: f64,
) -> Result<KernelCoeffs>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    if t < t0 {
        return Err(Error::InvalidInput(format!("t = {t} precedes the start time {t0}")));
    }
    // Absolute error in F is relative error in a, so the inner integral
    // also stops on an absolute bound (VE drifts are zero up to rounding).
    let inner_tol = (tol * 1e-2).max(1e-14);
    let log_growth =
        |s: f64| integrate_checked(|u| Ok(f(u)), t0, s, inner_tol, inner_tol).map(|(v, _)| v);

    let big_f = log_growth(t)?;
    let (accumulated, _) =
        integrate_checked(|s| Ok(g_sq(s) * (-2.0 * log_growth(s)?).exp()), t0, t, tol, 0.0)?;
    Ok(KernelCoeffs {
        a: start.a * big_f.exp(),
        b: ((2.0 * big_f).exp() * (start.b * start.b + accumulated)).sqrt(),
    })
}

/// Reverse-process right-hand side at one state.
///
/// Writes the drift `f x - (1 + λ²)/2 · g² · score` into `drift` and returns
/// the noise scale `λ g`.
pub fn reverse_rhs_into(
    x: &[f64],
    score: &[f64],
    coeffs: &SdeCoeffs,
    lambda: f64,
    drift: &mut [f64],
) -> f64 {
    let weight = 0.5 * (1.0 + lambda * lambda) * coeffs.g_sq;
    for ((d, &xi), &si) in drift.iter_mut().zip(x).zip(score) {
        *d = coeffs.f * xi - weight * si;
    }
    lambda * coeffs.g()
}

/// Allocating form of [`reverse_rhs_into`]: `(drift, noise_scale)`.
pub fn reverse_rhs(x: &[f64], score: &[f64], coeffs: &SdeCoeffs, lambda: f64) -> (Vec<f64>, f64) {
    let mut drift = vec![0.0; x.len()];
    let noise = reverse_rhs_into(x, score, coeffs, lambda, &mut drift);
    (drift, noise)
}

/// Sample moments of the forward process at one checkpoint.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ForwardMoments {
    pub t: f64,
    pub mean: f64,
    pub var: f64,
    pub mean_se: f64,
    pub var_se: f64,
    /// Kernel prediction `(a(t) x₀, b²(t))`.
    pub expected_mean: f64,
    pub expected_var: f64,
}

/// Euler–Maruyama simulation of the scalar forward SDE from `x(0) = x0`
/// on a uniform grid over `[0, 1]`, reporting moments at `checkpoints`
/// (which are snapped to the nearest grid node).
///
/// Coefficients are taken at the left end of each step, clamped into the
/// schedule's valid interval.
pub fn simulate_forward(
    spec: &ScheduleSpec,
    x0: f64,
    steps: usize,
    paths: usize,
    seed: u64,
    checkpoints: &[f64],
) -> Result<Vec<ForwardMoments>> {
    if steps == 0 || paths < 2 {
        return Err(Error::InvalidInput("need at least one step and two paths".into()));
    }
    let (lo, hi) = spec.interval();
    let h = 1.0 / steps as f64;
    let coeffs = (0..steps)
        .map(|i| schedule_sde(spec, (i as f64 * h).clamp(lo, hi)))
        .collect::<Result<Vec<_>>>()?;
    let nodes: Vec<usize> = checkpoints
        .iter()
        .map(|&t| ((t.clamp(0.0, 1.0) * steps as f64).round() as usize).max(1))
        .collect();

    let sqrt_h = h.sqrt();
    let samples: Vec<Vec<f64>> = (0..paths as u64)
        .into_par_iter()
        .map(|path| {
            let mut rng = stream_rng(seed, path);
            let mut x = x0;
            let mut out = vec![0.0; nodes.len()];
            for (i, c) in coeffs.iter().enumerate() {
                let xi: f64 = StandardNormal.sample(&mut rng);
                x += c.f * x * h + c.g() * sqrt_h * xi;
                for (slot, &node) in out.iter_mut().zip(&nodes) {
                    if node == i + 1 {
                        *slot = x;
                    }
                }
            }
            out
        })
        .collect();

    let n = paths as f64;
    nodes
        .iter()
        .enumerate()
        .map(|(k, &node)| {
            let t = node as f64 * h;
            let mean = samples.iter().map(|s| s[k]).sum::<f64>() / n;
            let m2 = samples.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / n;
            let m4 = samples.iter().map(|s| (s[k] - mean).powi(4)).sum::<f64>() / n;
            let var = m2 * n / (n - 1.0);
            let kernel = to_kernel(&eval_point(spec, t.clamp(lo, hi))?);
            Ok(ForwardMoments {
                t,
                mean,
                var,
                mean_se: (var / n).sqrt(),
                var_se: ((m4 - m2 * m2) / n).sqrt(),
                expected_mean: kernel.a * x0,
                expected_var: kernel.b * kernel.b,
            })
        })
        .collect()
}

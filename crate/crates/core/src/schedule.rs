//! TV/SNR schedules.
//!
//! Every schedule is described by a total-variance function τ²(t) and an SNR
//! function γ(t). The Gaussian perturbation kernel follows from the pair as
//!
//! ```text
//! a(t) = sqrt(τ² γ² / (1 + γ²)),    b(t) = sqrt(τ² / (1 + γ²))
//! ```
//!
//! so that `a² + b² = τ²` and `a / b = γ`. Time runs in the forward diffusion
//! direction: `t = 0` is data, `t = 1` is the prior.
//!
//! γ is always handled through `log γ` and its derivative so that very large
//! or very small SNRs near the ends of the interval neither overflow nor lose
//! precision.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::GridSpec;

/// Default clamp applied to schedules that are singular at an endpoint.
pub const DEFAULT_EPS: f64 = 1e-5;

/// One schedule family together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// Geometric VE noise `σ(t) = σ_min (σ_max/σ_min)^t`.
    Smld { sigma_min: f64, sigma_max: f64 },
    /// EDM with `σ(t) = σ_max · t` (EDM's `σ = t` in normalized time).
    /// `sigma_min` and `rho` parametrize its ρ-grid.
    Edm { sigma_min: f64, sigma_max: f64, rho: f64 },
    /// EDM with the ρ-warp folded into σ(t) so a uniform grid reproduces it.
    EdmUt { sigma_min: f64, sigma_max: f64, rho: f64 },
    /// Optimal-transport flow matching with `σ_min = 0`.
    Otfm,
    DdpmLinear { beta_min: f64, beta_max: f64 },
    DdpmCos { s: f64, nu: f64 },
    /// Exponential inverse-sigmoid SNR with constant total variance.
    Issnr(IssnrParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IssnrParams {
    pub eta: f64,
    pub kappa: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for IssnrParams {
    /// η = 1, κ = 2, t ∈ [0.01, 0.99].
    fn default() -> Self {
        Self {
            eta: 1.0,
            kappa: 2.0,
            t_min: 0.01,
            t_max: 0.99,
        }
    }
}

impl Family {
    pub const NAMES: [&'static str; 7] = [
        "smld",
        "edm",
        "edm_ut",
        "otfm",
        "ddpm_linear",
        "ddpm_cos",
        "issnr",
    ];

    /// The family with its catalog default parameters.
    ///
    /// SMLD uses σ ∈ [0.01, 50]; EDM/EDM-UT use σ ∈ [0.002, 80], ρ = 7;
    /// DDPM-linear uses β ∈ [0.1, 20]; DDPM-cos uses s = 0.008, ν = 1.
    pub fn with_defaults(name: &str) -> Result<Self> {
        Ok(match normalize_name(name).as_str() {
            "smld" => Family::Smld {
                sigma_min: 0.01,
                sigma_max: 50.0,
            },
            "edm" => Family::Edm {
                sigma_min: 0.002,
                sigma_max: 80.0,
                rho: 7.0,
            },
            "edm_ut" => Family::EdmUt {
                sigma_min: 0.002,
                sigma_max: 80.0,
                rho: 7.0,
            },
            "otfm" => Family::Otfm,
            "ddpm_linear" => Family::DdpmLinear {
                beta_min: 0.1,
                beta_max: 20.0,
            },
            "ddpm_cos" => Family::DdpmCos { s: 0.008, nu: 1.0 },
            "issnr" => Family::Issnr(IssnrParams::default()),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown schedule family `{other}` (expected one of {})",
                    Family::NAMES.join(", ")
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Smld { .. } => "smld",
            Family::Edm { .. } => "edm",
            Family::EdmUt { .. } => "edm_ut",
            Family::Otfm => "otfm",
            Family::DdpmLinear { .. } => "ddpm_linear",
            Family::DdpmCos { .. } => "ddpm_cos",
            Family::Issnr(_) => "issnr",
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Family::Smld { .. } => "SMLD",
            Family::Edm { .. } => "EDM",
            Family::EdmUt { .. } => "EDM-UT",
            Family::Otfm => "OTFM",
            Family::DdpmLinear { .. } => "DDPM-linear",
            Family::DdpmCos { .. } => "DDPM-cos",
            Family::Issnr(_) => "ISSNR",
        }
    }

    /// Whether the family's τ² is identically one without any override.
    pub fn is_variance_preserving(&self) -> bool {
        matches!(
            self,
            Family::DdpmLinear { .. } | Family::DdpmCos { .. } | Family::Issnr(_)
        )
    }

    fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
            }
        }
        fn ordered(lo_name: &str, lo: f64, hi_name: &str, hi: f64) -> Result<()> {
            if lo < hi {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{lo_name} ({lo}) must be smaller than {hi_name} ({hi})"
                )))
            }
        }
        match *self {
            Family::Smld {
                sigma_min,
                sigma_max,
            } => {
                positive("sigma_min", sigma_min)?;
                positive("sigma_max", sigma_max)?;
                ordered("sigma_min", sigma_min, "sigma_max", sigma_max)
            }
            Family::Edm {
                sigma_min,
                sigma_max,
                rho,
            }
            | Family::EdmUt {
                sigma_min,
                sigma_max,
                rho,
            } => {
                positive("sigma_min", sigma_min)?;
                positive("sigma_max", sigma_max)?;
                positive("rho", rho)?;
                ordered("sigma_min", sigma_min, "sigma_max", sigma_max)
            }
            Family::Otfm => Ok(()),
            Family::DdpmLinear { beta_min, beta_max } => {
                positive("beta_min", beta_min)?;
                positive("beta_max", beta_max)?;
                ordered("beta_min", beta_min, "beta_max", beta_max)
            }
            Family::DdpmCos { s, nu } => {
                positive("s", s)?;
                positive("nu", nu)
            }
            Family::Issnr(p) => p.validate(),
        }
    }

    /// `(log γ, d log γ/dt, τ², d log τ/dt)` before any VP override.
    fn log_terms(&self, t: f64) -> Result<LogTerms> {
        let domain = || Error::Domain {
            family: self.label(),
            t,
        };
        Ok(match *self {
            Family::Smld {
                sigma_min,
                sigma_max,
            } => {
                let ln_ratio = (sigma_max / sigma_min).ln();
                LogTerms::from_log_sigma(sigma_min.ln() + t * ln_ratio, ln_ratio)
            }
            Family::Edm { sigma_max, .. } => {
                if t <= 0.0 {
                    return Err(domain());
                }
                LogTerms::from_log_sigma(sigma_max.ln() + t.ln(), 1.0 / t)
            }
            Family::EdmUt {
                sigma_min,
                sigma_max,
                rho,
            } => {
                let lo = sigma_min.powf(1.0 / rho);
                let span = sigma_max.powf(1.0 / rho) - lo;
                let base = lo + t * span;
                LogTerms::from_log_sigma(rho * base.ln(), rho * span / base)
            }
            Family::Otfm => {
                if t <= 0.0 || t >= 1.0 {
                    return Err(domain());
                }
                let tv_sq = 1.0 - 2.0 * t * (1.0 - t);
                LogTerms {
                    log_snr: (-t).ln_1p() - t.ln(),
                    dlog_snr: -1.0 / (t * (1.0 - t)),
                    tv_sq,
                    dlog_tv: (2.0 * t - 1.0) / tv_sq,
                }
            }
            Family::DdpmLinear { beta_min, beta_max } => {
                if t <= 0.0 {
                    return Err(domain());
                }
                // ᾱ(t) = exp(-B(t)), γ² = 1 / (e^B - 1)
                let integral = 0.5 * t * t * (beta_max - beta_min) + t * beta_min;
                let rate = t * (beta_max - beta_min) + beta_min;
                LogTerms {
                    log_snr: -0.5 * integral.exp_m1().ln(),
                    dlog_snr: -0.5 * rate / -(-integral).exp_m1(),
                    tv_sq: 1.0,
                    dlog_tv: 0.0,
                }
            }
            Family::DdpmCos { s, nu } => {
                if t <= 0.0 || t >= 1.0 {
                    return Err(domain());
                }
                // γ² = cos²φ / (cos²φ₀ - cos²φ) = cos²φ / (sin(φ-φ₀) sin(φ+φ₀))
                let phi0 = s / (1.0 + s) * FRAC_PI_2;
                let gap = t.powf(nu) / (1.0 + s) * FRAC_PI_2;
                let phi = phi0 + gap;
                let dphi = nu * t.powf(nu - 1.0) / (1.0 + s) * FRAC_PI_2;
                let sum = phi + phi0;
                LogTerms {
                    log_snr: phi.cos().ln() - 0.5 * gap.sin().ln() - 0.5 * sum.sin().ln(),
                    dlog_snr: -dphi * (phi.tan() + 0.5 / gap.tan() + 0.5 / sum.tan()),
                    tv_sq: 1.0,
                    dlog_tv: 0.0,
                }
            }
            Family::Issnr(p) => {
                let (log_snr, dlog_snr) = p.log_snr(t);
                LogTerms {
                    log_snr,
                    dlog_snr,
                    tv_sq: 1.0,
                    dlog_tv: 0.0,
                }
            }
        })
    }
}

fn normalize_name(name: &str) -> String {
    name.trim().to_ascii_lowercase().replace('-', "_")
}

impl IssnrParams {
    fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {}", self.eta)));
        }
        if !self.kappa.is_finite() {
            return Err(Error::InvalidParameter(format!("kappa must be finite, got {}", self.kappa)));
        }
        if !(self.t_min > 0.0 && self.t_min < self.t_max && self.t_max < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "ISSNR requires 0 < t_min < t_max < 1, got t_min = {}, t_max = {}",
                self.t_min, self.t_max
            )));
        }
        Ok(())
    }

    /// `(log γ(t), d log γ/dt)`.
    fn log_snr(&self, t: f64) -> (f64, f64) {
        let span = self.t_max - self.t_min;
        let u = t * span + self.t_min;
        let log_snr = self.eta * ((-u).ln_1p() - u.ln()) + self.kappa;
        let dlog_snr = -self.eta * span / (u * (1.0 - u));
        (log_snr, dlog_snr)
    }
}

struct LogTerms {
    log_snr: f64,
    dlog_snr: f64,
    tv_sq: f64,
    dlog_tv: f64,
}

impl LogTerms {
    /// VE-style kernel `a = 1`, `b = σ(t)`: γ = 1/σ and τ² = 1 + σ².
    fn from_log_sigma(log_sigma: f64, dlog_sigma: f64) -> Self {
        let sigma_sq = (2.0 * log_sigma).exp();
        let tv_sq = 1.0 + sigma_sq;
        Self {
            log_snr: -log_sigma,
            dlog_snr: -dlog_sigma,
            tv_sq,
            dlog_tv: sigma_sq * dlog_sigma / tv_sq,
        }
    }
}

/// A schedule: family parameters, the VP override, and the endpoint clamp
/// used when the family is singular at `t = 0` or `t = 1`.
///
/// Serializes as `{"family": "...", "vp": bool, "params": {...}}`, with an
/// optional `"eps"` when the clamp differs from [`DEFAULT_EPS`]. Missing
/// params fall back to the family defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct ScheduleSpec {
    pub family: Family,
    /// Force τ²(t) = 1 while keeping γ(t).
    pub vp: bool,
    pub eps: f64,
}

impl ScheduleSpec {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            vp: false,
            eps: DEFAULT_EPS,
        }
    }

    pub fn smld(sigma_min: f64, sigma_max: f64) -> Self {
        Self::new(Family::Smld {
            sigma_min,
            sigma_max,
        })
    }

    pub fn edm(sigma_min: f64, sigma_max: f64, rho: f64) -> Self {
        Self::new(Family::Edm {
            sigma_min,
            sigma_max,
            rho,
        })
    }

    pub fn edm_ut(sigma_min: f64, sigma_max: f64, rho: f64) -> Self {
        Self::new(Family::EdmUt {
            sigma_min,
            sigma_max,
            rho,
        })
    }

    pub fn otfm() -> Self {
        Self::new(Family::Otfm)
    }

    pub fn ddpm_linear(beta_min: f64, beta_max: f64) -> Self {
        Self::new(Family::DdpmLinear { beta_min, beta_max })
    }

    pub fn ddpm_cos(s: f64, nu: f64) -> Self {
        Self::new(Family::DdpmCos { s, nu })
    }

    pub fn issnr(eta: f64, kappa: f64, t_min: f64, t_max: f64) -> Self {
        Self::new(Family::Issnr(IssnrParams {
            eta,
            kappa,
            t_min,
            t_max,
        }))
    }

    /// Same SNR, constant unit total variance.
    pub fn vp(mut self) -> Self {
        self.vp = true;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    /// Looks up a catalog name (`"VP-OTFM"`, `"edm-ut"`, ...) or the
    /// `issnr-mol` preset (η = 1, κ = 2, t ∈ [0.01, 0.99]).
    pub fn preset(name: &str) -> Result<Self> {
        let key = normalize_name(name);
        if key == "issnr_mol" {
            return Ok(Self::new(Family::Issnr(IssnrParams::default())));
        }
        let (vp, base) = match key.strip_prefix("vp_") {
            Some(rest) => (true, rest),
            None => (false, key.as_str()),
        };
        let mut spec = Self::new(Family::with_defaults(base)?);
        spec.vp = vp;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "eps must lie in (0, 0.5), got {}",
                self.eps
            )));
        }
        Ok(())
    }

    /// Display name, e.g. `VP-EDM-UT`. Variance-preserving families always
    /// carry the `VP-` prefix for ISSNR, never for DDPM.
    pub fn label(&self) -> String {
        match self.family {
            Family::Issnr(_) => "VP-ISSNR".to_string(),
            f if self.vp && !f.is_variance_preserving() => format!("VP-{}", f.label()),
            f => f.label().to_string(),
        }
    }

    /// The closed interval on which grids and priors are placed.
    ///
    /// Families that are singular at an endpoint are clamped by `eps`.
    pub fn interval(&self) -> (f64, f64) {
        match self.family {
            Family::Smld { .. } | Family::EdmUt { .. } | Family::Issnr(_) => (0.0, 1.0),
            Family::Edm { .. } | Family::DdpmLinear { .. } => (self.eps, 1.0),
            Family::Otfm | Family::DdpmCos { .. } => (self.eps, 1.0 - self.eps),
        }
    }

    /// The grid the family is conventionally sampled on.
    pub fn default_grid(&self) -> GridSpec {
        match self.family {
            Family::Edm {
                sigma_min,
                sigma_max,
                rho,
            } => GridSpec::EdmRho {
                sigma_min,
                sigma_max,
                rho,
            },
            _ => GridSpec::Uniform,
        }
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Schedule state at a single time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchedulePoint {
    pub t: f64,
    /// τ²(t)
    pub tv_sq: f64,
    /// γ²(t)
    pub snr_sq: f64,
    /// d log τ / dt
    pub dlog_tv: f64,
    /// d log γ / dt, strictly negative
    pub dlog_snr: f64,
    /// log γ(t); kept alongside `snr_sq` so kernel coefficients never see
    /// an overflowed γ².
    pub log_snr: f64,
}

impl SchedulePoint {
    /// Builds a point from raw values, e.g. for hand-made tests.
    pub fn from_parts(tv_sq: f64, snr_sq: f64, dlog_tv: f64, dlog_snr: f64) -> Self {
        Self {
            t: f64::NAN,
            tv_sq,
            snr_sq,
            dlog_tv,
            dlog_snr,
            log_snr: 0.5 * snr_sq.ln(),
        }
    }

    /// 1 / (1 + γ²)
    pub fn noise_fraction(&self) -> f64 {
        sigmoid(-2.0 * self.log_snr)
    }

    /// γ² / (1 + γ²)
    pub fn signal_fraction(&self) -> f64 {
        sigmoid(2.0 * self.log_snr)
    }
}

/// Gaussian perturbation kernel `N(a x(0), b² I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelCoeffs {
    pub a: f64,
    pub b: f64,
}

/// Evaluates τ², γ² and their log-derivatives.
pub fn eval_point(spec: &ScheduleSpec, t: f64) -> Result<SchedulePoint> {
    spec.validate()?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("t = {t} lies outside [0, 1]")));
    }
    let terms = spec.family.log_terms(t)?;
    let (tv_sq, dlog_tv) = if spec.vp {
        (1.0, 0.0)
    } else {
        (terms.tv_sq, terms.dlog_tv)
    };
    Ok(SchedulePoint {
        t,
        tv_sq,
        snr_sq: (2.0 * terms.log_snr).exp(),
        dlog_tv,
        dlog_snr: terms.dlog_snr,
        log_snr: terms.log_snr,
    })
}

/// γ²(t) of the inverse-sigmoid schedule,
/// `((1/u) - 1)^{2η} e^{2κ}` with `u = t (t_max - t_min) + t_min`.
pub fn eval_issnr(t: f64, eta: f64, kappa: f64, t_min: f64, t_max: f64) -> Result<f64> {
    let params = IssnrParams {
        eta,
        kappa,
        t_min,
        t_max,
    };
    params.validate()?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("t = {t} lies outside [0, 1]")));
    }
    Ok((2.0 * params.log_snr(t).0).exp())
}

/// `(γ_max, γ_min) = (γ(0), γ(1))`.
///
/// Families whose SNR diverges or vanishes at an endpoint report
/// [`Error::Unbounded`].
pub fn snr_endpoints(spec: &ScheduleSpec) -> Result<(f64, f64)> {
    spec.validate()?;
    let endpoint = |t: f64| match spec.family.log_terms(t) {
        Ok(terms) => Ok(terms.log_snr.exp()),
        Err(Error::Domain { family, .. }) => Err(Error::Unbounded {
            family,
            endpoint: t,
        }),
        Err(e) => Err(e),
    };
    Ok((endpoint(0.0)?, endpoint(1.0)?))
}

/// Kernel coefficients from a schedule point.
pub fn to_kernel(point: &SchedulePoint) -> KernelCoeffs {
    let tv = point.tv_sq.sqrt();
    // sqrt(sigmoid(x)) = exp(-softplus(-x) / 2)
    KernelCoeffs {
        a: tv * (-0.5 * softplus(-2.0 * point.log_snr)).exp(),
        b: tv * (-0.5 * softplus(2.0 * point.log_snr)).exp(),
    }
}

/// Analytic `(ȧ, ḃ)` matching [`to_kernel`].
pub fn kernel_rates(point: &SchedulePoint) -> (f64, f64) {
    let k = to_kernel(point);
    let dlog_a = point.dlog_tv + point.dlog_snr * point.noise_fraction();
    let dlog_b = point.dlog_tv - point.dlog_snr * point.signal_fraction();
    (k.a * dlog_a, k.b * dlog_b)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// One row of the schedule catalog.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub spec: ScheduleSpec,
}

/// The ten schedules of the TV/SNR table: six established families and the
/// four VP variants, all at default parameters.
pub fn catalog() -> Vec<CatalogEntry> {
    [
        "SMLD",
        "EDM",
        "EDM-UT",
        "OTFM",
        "DDPM-linear",
        "DDPM-cos",
        "VP-SMLD",
        "VP-EDM-UT",
        "VP-OTFM",
        "VP-ISSNR",
    ]
    .into_iter()
    .map(|name| CatalogEntry {
        name,
        spec: ScheduleSpec::preset(name).expect("catalog names are valid presets"),
    })
    .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSpec {
    family: String,
    #[serde(default)]
    vp: bool,
    #[serde(default)]
    params: serde_json::Map<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eps: Option<f64>,
}

impl TryFrom<RawSpec> for ScheduleSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let mut family = Family::with_defaults(&raw.family)?;
        let params = raw.params;
        let get = |key: &str, default: f64| -> Result<f64> {
            match params.get(key) {
                None => Ok(default),
                Some(v) => v.as_f64().ok_or_else(|| {
                    Error::InvalidParameter(format!("params.{key} must be a number, got {v}"))
                }),
            }
        };
        let known: &[&str] = match &mut family {
            Family::Smld {
                sigma_min,
                sigma_max,
            } => {
                *sigma_min = get("sigma_min", *sigma_min)?;
                *sigma_max = get("sigma_max", *sigma_max)?;
                &["sigma_min", "sigma_max"]
            }
            Family::Edm {
                sigma_min,
                sigma_max,
                rho,
            }
            | Family::EdmUt {
                sigma_min,
                sigma_max,
                rho,
            } => {
                *sigma_min = get("sigma_min", *sigma_min)?;
                *sigma_max = get("sigma_max", *sigma_max)?;
                *rho = get("rho", *rho)?;
                &["sigma_min", "sigma_max", "rho"]
            }
            Family::Otfm => &[],
            Family::DdpmLinear { beta_min, beta_max } => {
                *beta_min = get("beta_min", *beta_min)?;
                *beta_max = get("beta_max", *beta_max)?;
                &["beta_min", "beta_max"]
            }
            Family::DdpmCos { s, nu } => {
                *s = get("s", *s)?;
                *nu = get("nu", *nu)?;
                &["s", "nu"]
            }
            Family::Issnr(p) => {
                p.eta = get("eta", p.eta)?;
                p.kappa = get("kappa", p.kappa)?;
                p.t_min = get("t_min", p.t_min)?;
                p.t_max = get("t_max", p.t_max)?;
                &["eta", "kappa", "t_min", "t_max"]
            }
        };
        if let Some(unknown) = params.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::InvalidParameter(format!(
                "unknown parameter `{unknown}` for family {}",
                family.name()
            )));
        }
        let spec = ScheduleSpec {
            family,
            vp: raw.vp,
            eps: raw.eps.unwrap_or(DEFAULT_EPS),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<ScheduleSpec> for RawSpec {
    fn from(spec: ScheduleSpec) -> Self {
        let params = match spec.family {
            Family::Smld {
                sigma_min,
                sigma_max,
            } => serde_json::json!({ "sigma_min": sigma_min, "sigma_max": sigma_max }),
            Family::Edm {
                sigma_min,
                sigma_max,
                rho,
            }
            | Family::EdmUt {
                sigma_min,
                sigma_max,
                rho,
            } => serde_json::json!({ "sigma_min": sigma_min, "sigma_max": sigma_max, "rho": rho }),
            Family::Otfm => serde_json::json!({}),
            Family::DdpmLinear { beta_min, beta_max } => {
                serde_json::json!({ "beta_min": beta_min, "beta_max": beta_max })
            }
            Family::DdpmCos { s, nu } => serde_json::json!({ "s": s, "nu": nu }),
            Family::Issnr(p) => serde_json::to_value(p).expect("plain struct"),
        };
        let serde_json::Value::Object(params) = params else {
            unreachable!("params are always objects")
        };
        RawSpec {
            family: spec.family.name().to_string(),
            vp: spec.vp,
            params,
            eps: (spec.eps != DEFAULT_EPS).then_some(spec.eps),
        }
    }
}

//! Experiment configuration: a JSON file overlaid with command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use tvsnr::{Family, MixtureData, ScheduleSpec};

use crate::CliError;

/// `η = 2 + max(0, log₂(nfe + 1) − 3)`, used with `κ = 0`.
pub fn issnr_scaled_eta(nfe: usize) -> f64 {
    2.0 + ((nfe as f64 + 1.0).log2() - 3.0).max(0.0)
}

/// A schedule given by catalog name, by file, or inline.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleSource {
    Preset(String),
    File(PathBuf),
    Inline(ScheduleSpec),
}

/// Data distribution given by preset name, by file, or inline.
#[derive(Debug, Clone, PartialEq)]
pub enum MixtureSource {
    Preset(String),
    File(PathBuf),
    Inline(MixtureData),
}

fn file_ref(v: &Value) -> Option<PathBuf> {
    let obj = v.as_object()?;
    match (obj.len(), obj.get("file")) {
        (1, Some(Value::String(p))) => Some(PathBuf::from(p)),
        _ => None,
    }
}

impl<'de> Deserialize<'de> for ScheduleSource {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        if let Value::String(name) = &v {
            return Ok(Self::Preset(name.clone()));
        }
        if let Some(path) = file_ref(&v) {
            return Ok(Self::File(path));
        }
        serde_json::from_value(v).map(Self::Inline).map_err(D::Error::custom)
    }
}

impl Serialize for ScheduleSource {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Preset(name) => name.serialize(s),
            Self::File(path) => serde_json::json!({ "file": path }).serialize(s),
            Self::Inline(spec) => spec.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for MixtureSource {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        if let Value::String(name) = &v {
            return Ok(Self::Preset(name.clone()));
        }
        if let Some(path) = file_ref(&v) {
            return Ok(Self::File(path));
        }
        serde_json::from_value(v).map(Self::Inline).map_err(D::Error::custom)
    }
}

impl Serialize for MixtureSource {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Preset(name) => name.serialize(s),
            Self::File(path) => serde_json::json!({ "file": path }).serialize(s),
            Self::Inline(mix) => mix.serialize(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Euler,
    #[default]
    Heun,
    Sde,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GridChoice {
    /// EDM ρ-grid for EDM, uniform otherwise
    #[default]
    Default,
    Uniform,
    #[value(name = "edm_rho", alias = "edm-rho")]
    EdmRho,
}

/// Steepness given as a number or as `scaled` (NFE-dependent).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eta {
    Value(f64),
    Scaled,
}

impl std::str::FromStr for Eta {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("scaled") {
            return Ok(Eta::Scaled);
        }
        s.parse::<f64>()
            .map(Eta::Value)
            .map_err(|_| format!("expected a number or `scaled`, got `{s}`"))
    }
}

impl fmt::Display for Eta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Eta::Value(v) => write!(f, "{v}"),
            Eta::Scaled => f.write_str("scaled"),
        }
    }
}

impl Serialize for Eta {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Eta::Value(v) => v.serialize(s),
            Eta::Scaled => "scaled".serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Eta {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::Number(n) => Ok(Eta::Value(n.as_f64().unwrap_or(f64::NAN))),
            Value::String(s) => s.parse().map_err(D::Error::custom),
            other => Err(D::Error::custom(format!("expected a number or `scaled`, got {other}"))),
        }
    }
}

fn default_schedule() -> ScheduleSource {
    ScheduleSource::Preset("vp-issnr".into())
}

fn default_mixture() -> MixtureSource {
    MixtureSource::Preset("three-delta".into())
}

fn default_steps() -> usize {
    128
}

fn default_batch() -> usize {
    1000
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("tvsnr-out")
}

fn default_tol() -> f64 {
    tvsnr::analysis::DEFAULT_PEAK_TOL
}

/// A reproducible experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleSource,
    /// Replaces the schedule's η with the NFE-scaled value (and κ with 0).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub scaled_eta: bool,
    #[serde(default = "default_mixture")]
    pub mixture: MixtureSource,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub grid: GridChoice,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub peak_tol: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schedule: default_schedule(),
            scaled_eta: false,
            mixture: default_mixture(),
            solver: SolverKind::default(),
            lambda: 0.0,
            steps: default_steps(),
            grid: GridChoice::default(),
            batch: default_batch(),
            seed: 0,
            peak_tol: default_tol(),
            output_dir: default_output_dir(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    /// Reads a config file; relative file references inside it are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)
            .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let ScheduleSource::File(p) = &mut config.schedule {
            *p = base.join(&*p);
        }
        if let MixtureSource::File(p) = &mut config.mixture {
            *p = base.join(&*p);
        }
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks the invariants that do not need the schedule.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.steps == 0 {
            return Err(CliError::Config("steps must be at least 1".into()));
        }
        if self.batch == 0 {
            return Err(CliError::Config("batch must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(CliError::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.lambda != 0.0 && self.solver != SolverKind::Sde {
            return Err(CliError::Config("lambda > 0 requires solver = sde".into()));
        }
        if !(self.peak_tol > 0.0) {
            return Err(CliError::Config(format!("peak_tol must be positive, got {}", self.peak_tol)));
        }
        Ok(())
    }

    pub fn solver(&self) -> tvsnr::Solver {
        match self.solver {
            SolverKind::Euler => tvsnr::Solver::Euler,
            SolverKind::Heun => tvsnr::Solver::Heun,
            SolverKind::Sde => tvsnr::Solver::Sde {
                lambda: self.lambda,
            },
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{what} {}: {e}", path.display())))
}

impl ScheduleSource {
    pub fn resolve(&self) -> Result<ScheduleSpec, CliError> {
        match self {
            Self::Preset(name) => Ok(ScheduleSpec::preset(name)?),
            Self::File(path) => read_json(path, "schedule"),
            Self::Inline(spec) => Ok(*spec),
        }
    }
}

impl MixtureSource {
    pub fn resolve(&self) -> Result<MixtureData, CliError> {
        match self {
            Self::Preset(name) => Ok(MixtureData::preset(name)?),
            Self::File(path) => read_json(path, "mixture"),
            Self::Inline(mix) => Ok(mix.clone()),
        }
    }
}

/// Schedule parameters given on the command line.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ScheduleArgs {
    /// Schedule family or catalog name (smld, edm, edm-ut, otfm, ddpm-linear,
    /// ddpm-cos, issnr, vp-otfm, issnr-mol, ...)
    #[arg(long)]
    pub family: Option<String>,
    /// ISSNR steepness, or `scaled` for the NFE-dependent rule
    #[arg(long)]
    pub eta: Option<Eta>,
    /// ISSNR log-SNR shift
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: Option<f64>,
    /// ISSNR lower time bound
    #[arg(long)]
    pub t_min: Option<f64>,
    /// ISSNR upper time bound
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub sigma_min: Option<f64>,
    #[arg(long)]
    pub sigma_max: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub beta_min: Option<f64>,
    #[arg(long)]
    pub beta_max: Option<f64>,
    /// DDPM-cos offset
    #[arg(long)]
    pub s: Option<f64>,
    /// DDPM-cos time exponent
    #[arg(long)]
    pub nu: Option<f64>,
    /// Force unit total variance
    #[arg(long)]
    pub vp: bool,
    /// Endpoint clamp for singular families
    #[arg(long)]
    pub eps: Option<f64>,
}

impl ScheduleArgs {
    /// Applies the flags to `base`; `--family` replaces the family first.
    pub fn apply(&self, base: ScheduleSpec) -> Result<ScheduleSpec, CliError> {
        let mut spec = match &self.family {
            Some(name) => ScheduleSpec::preset(name)?,
            None => base,
        };
        if self.vp {
            spec = spec.vp();
        }
        if let Some(eps) = self.eps {
            spec = spec.with_eps(eps);
        }
        let unused = |flag: &str| {
            CliError::Config(format!("--{flag} does not apply to the {} family", spec.family.name()))
        };
        macro_rules! set {
            ($field:ident, $flag:literal, $target:expr) => {
                if let Some(v) = self.$field {
                    match $target {
                        Some(slot) => *slot = v,
                        None => return Err(unused($flag)),
                    }
                }
            };
        }
        let mut family = spec.family;
        set!(sigma_min, "sigma-min", match &mut family {
            Family::Smld { sigma_min, .. } | Family::Edm { sigma_min, .. } | Family::EdmUt { sigma_min, .. } => Some(sigma_min),
            _ => None,
        });
        set!(sigma_max, "sigma-max", match &mut family {
            Family::Smld { sigma_max, .. } | Family::Edm { sigma_max, .. } | Family::EdmUt { sigma_max, .. } => Some(sigma_max),
            _ => None,
        });
        set!(rho, "rho", match &mut family {
            Family::Edm { rho, .. } | Family::EdmUt { rho, .. } => Some(rho),
            _ => None,
        });
        set!(beta_min, "beta-min", match &mut family {
            Family::DdpmLinear { beta_min, .. } => Some(beta_min),
            _ => None,
        });
        set!(beta_max, "beta-max", match &mut family {
            Family::DdpmLinear { beta_max, .. } => Some(beta_max),
            _ => None,
        });
        set!(s, "s", match &mut family {
            Family::DdpmCos { s, .. } => Some(s),
            _ => None,
        });
        set!(nu, "nu", match &mut family {
            Family::DdpmCos { nu, .. } => Some(nu),
            _ => None,
        });
        set!(kappa, "kappa", match &mut family {
            Family::Issnr(p) => Some(&mut p.kappa),
            _ => None,
        });
        set!(t_min, "t-min", match &mut family {
            Family::Issnr(p) => Some(&mut p.t_min),
            _ => None,
        });
        set!(t_max, "t-max", match &mut family {
            Family::Issnr(p) => Some(&mut p.t_max),
            _ => None,
        });
        if let Some(Eta::Value(eta)) = self.eta {
            match &mut family {
                Family::Issnr(p) => p.eta = eta,
                _ => return Err(unused("eta")),
            }
        }
        if self.eta == Some(Eta::Scaled) && !matches!(family, Family::Issnr(_)) {
            return Err(unused("eta"));
        }
        spec.family = family;
        spec.validate()?;
        Ok(spec)
    }
}

/// Sets η from the NFE rule, with κ = 0 unless `kappa` is given.
pub fn apply_scaled_eta(spec: &mut ScheduleSpec, nfe: usize, kappa: Option<f64>) -> Result<(), CliError> {
    match &mut spec.family {
        Family::Issnr(p) => {
            p.eta = issnr_scaled_eta(nfe);
            p.kappa = kappa.unwrap_or(0.0);
            Ok(())
        }
        _ => Err(CliError::Config("a scaled eta only applies to the issnr family".into())),
    }
}

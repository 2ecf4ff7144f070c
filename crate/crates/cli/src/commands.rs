use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde_json::json;
use tvsnr::analysis::{
    curvature, default_shadow_grids, density_shadow, linspace, peak_capture, relative_support,
    relative_support_at, support_crossing,
};
use tvsnr::io::{
    schedule_table, write_curvature, write_grid_json, write_samples, write_schedule_table,
    write_shadow, write_support, write_trajectories_long, CurvatureSummary,
};
use tvsnr::sampler::{build_grid, default_grid, sample_batch, GridSpec, TimeGrid};
use tvsnr::schedule::catalog;
use tvsnr::{Family, MixtureData, ReverseField, ScheduleSpec, Trajectory};

use crate::config::{
    apply_scaled_eta, Eta, ExperimentConfig, GridChoice, MixtureSource, ScheduleArgs,
    ScheduleSource, SolverKind,
};
use crate::CliError;

/// Solver and output flags shared by `sample` and `analyze`.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub solver: Option<SolverKind>,
    /// Reverse-SDE stochasticity (solver = sde)
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Integration steps
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_enum)]
    pub grid: Option<GridChoice>,
    /// Number of trajectories
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Mixture preset name or path to a mixture JSON file
    #[arg(long)]
    pub mixture: Option<String>,
    /// Peak-capture radius
    #[arg(long)]
    pub tol: Option<f64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(v) = self.solver {
            config.solver = v;
        }
        if let Some(v) = self.lambda {
            config.lambda = v;
        }
        if let Some(v) = self.steps {
            config.steps = v;
        }
        if let Some(v) = self.grid {
            config.grid = v;
        }
        if let Some(v) = self.batch {
            config.batch = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = &self.mixture {
            config.mixture = if v.ends_with(".json") {
                MixtureSource::File(PathBuf::from(v))
            } else {
                MixtureSource::Preset(v.clone())
            };
        }
        if let Some(v) = self.tol {
            config.peak_tol = v;
        }
        if let Some(v) = &self.out {
            config.output_dir = v.clone();
        }
    }
}

/// A fully resolved experiment.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub spec: ScheduleSpec,
    pub mixture: MixtureData,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

pub fn grid_for(spec: &ScheduleSpec, steps: usize, choice: GridChoice) -> Result<TimeGrid, CliError> {
    match choice {
        GridChoice::Default => Ok(default_grid(spec, steps)?),
        GridChoice::Uniform => Ok(build_grid(spec, steps, GridSpec::Uniform)?),
        GridChoice::EdmRho => match spec.family {
            Family::Edm { .. } => Ok(build_grid(spec, steps, spec.default_grid())?),
            _ => Err(CliError::Config(format!(
                "the edm_rho grid needs an EDM schedule, not {}",
                spec.label()
            ))),
        },
    }
}

fn field_for(spec: &ScheduleSpec, config: &ExperimentConfig) -> Result<ReverseField, CliError> {
    let grid = grid_for(spec, config.steps, config.grid)?;
    Ok(ReverseField::new(spec, Arc::new(grid))?)
}

/// Applies the NFE-scaled η when requested.
fn finish_spec(
    mut spec: ScheduleSpec,
    config: &ExperimentConfig,
    kappa: Option<f64>,
) -> Result<ScheduleSpec, CliError> {
    if config.scaled_eta {
        let nfe = config.solver().nfe(&field_for(&spec, config)?);
        apply_scaled_eta(&mut spec, nfe, kappa)?;
    }
    Ok(spec)
}

pub fn resolve(
    config_path: Option<&Path>,
    schedule: &ScheduleArgs,
    run: &RunArgs,
) -> Result<Experiment, CliError> {
    let mut config = load_config(config_path)?;
    run.apply(&mut config);
    if schedule.eta == Some(Eta::Scaled) {
        config.scaled_eta = true;
    }
    config.validate()?;
    let spec = schedule.apply(config.schedule.resolve()?)?;
    let spec = finish_spec(spec, &config, schedule.kappa)?;
    let mixture = config.mixture.resolve()?;
    config.schedule = ScheduleSource::Inline(spec);
    config.mixture = MixtureSource::Inline(mixture.clone());
    config.scaled_eta = false;
    Ok(Experiment {
        config,
        spec,
        mixture,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_file<F>(path: &Path, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
{
    let mut w = create(path)?;
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}

fn print_json(value: &serde_json::Value) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(out).map_err(|e| CliError::Io(e.to_string()))
}

pub fn schedules_list() -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    let mut rows = vec![("name".to_string(), "spec".to_string())];
    for entry in catalog() {
        rows.push((entry.name.to_string(), serde_json::to_string(&entry.spec).expect("spec serializes")));
    }
    rows.push((
        "issnr-mol".to_string(),
        serde_json::to_string(&ScheduleSpec::preset("issnr-mol")?).expect("spec serializes"),
    ));
    for (name, spec) in rows {
        writeln!(out, "{name:<12} {spec}").map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(())
}

pub fn schedules_eval(
    config_path: Option<&Path>,
    schedule: &ScheduleArgs,
    times: &[f64],
    t_grid: Option<usize>,
    steps: Option<usize>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let mut config = load_config(config_path)?;
    if let Some(steps) = steps {
        config.steps = steps;
    }
    if schedule.eta == Some(Eta::Scaled) {
        config.scaled_eta = true;
    }
    config.validate()?;
    let spec = schedule.apply(config.schedule.resolve()?)?;
    let spec = finish_spec(spec, &config, schedule.kappa)?;
    let times = if !times.is_empty() {
        times.to_vec()
    } else {
        let (lo, hi) = spec.interval();
        linspace(lo, hi, t_grid.unwrap_or(11))
    };
    let rows = schedule_table(&spec, &times)?;
    match out {
        Some(path) => write_file(path, |w| write_schedule_table(w, &rows)),
        None => write_schedule_table(io::stdout().lock(), &rows).map_err(|e| CliError::Io(e.to_string())),
    }
}

fn solve(exp: &Experiment, spec: &ScheduleSpec) -> Result<(ReverseField, Vec<Trajectory>), CliError> {
    let field = field_for(spec, &exp.config)?;
    let batch = sample_batch(
        spec,
        &field,
        &exp.mixture,
        exp.config.solver(),
        exp.config.batch,
        exp.config.seed,
    )?;
    Ok((field, batch))
}

pub fn sample(exp: &Experiment) -> Result<(), CliError> {
    let start = Instant::now();
    let (field, batch) = solve(exp, &exp.spec)?;
    let capture = peak_capture(batch.iter().map(Trajectory::sample), &exp.mixture, exp.config.peak_tol)?;
    let wall = start.elapsed().as_secs_f64();

    let dir = &exp.config.output_dir;
    write_file(&dir.join("trajectories.csv"), |w| write_trajectories_long(w, &batch))?;
    write_file(&dir.join("samples.csv"), |w| write_samples(w, &batch))?;
    write_file(&dir.join("grid.json"), |w| write_grid_json(w, field.grid()))?;
    write_file(&dir.join("config.json"), |w| writeln!(w, "{}", exp.config.to_json()))?;
    let summary = json!({
        "schedule": exp.spec.label(),
        "solver": exp.config.solver,
        "lambda": exp.config.lambda,
        "steps": field.grid().steps(),
        "nfe": exp.config.solver().nfe(&field),
        "batch": exp.config.batch,
        "seed": exp.config.seed,
        "peak_tol": exp.config.peak_tol,
        "peak_counts": capture.counts,
        "peak_fractions": capture.fractions(),
        "outside_fraction": capture.outside_fraction(),
        "wall_time_s": wall,
    });
    write_file(&dir.join("summary.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &summary)?;
        writeln!(w)
    })?;
    print_json(&summary)
}

/// Schedules to analyze: the experiment's own, or each `--compare` entry
/// (catalog or preset names) with a filename suffix.
fn targets(exp: &Experiment, compare: &[String], kappa: Option<f64>, scaled: bool) -> Result<Vec<(ScheduleSpec, String)>, CliError> {
    if compare.is_empty() {
        return Ok(vec![(exp.spec, String::new())]);
    }
    compare
        .iter()
        .map(|name| {
            let mut spec = ScheduleSpec::preset(name)?;
            if scaled && matches!(spec.family, Family::Issnr(_)) {
                let nfe = exp.config.solver().nfe(&field_for(&spec, &exp.config)?);
                apply_scaled_eta(&mut spec, nfe, kappa)?;
            }
            Ok((spec, format!("_{}", name.to_ascii_lowercase())))
        })
        .collect()
}

pub fn analyze_curvature(exp: &Experiment, compare: &[String], kappa: Option<f64>, scaled: bool) -> Result<(), CliError> {
    if exp.config.lambda != 0.0 {
        return Err(CliError::Config("curvature is defined for ODE trajectories (lambda = 0)".into()));
    }
    let mut results = Vec::new();
    for (spec, suffix) in targets(exp, compare, kappa, scaled)? {
        let (field, batch) = solve(exp, &spec)?;
        let report = curvature(&batch, &field, &exp.mixture)?;
        let summary = CurvatureSummary {
            schedule: spec.label(),
            global: report.global,
            trajectories: report.trajectories,
            steps: field.grid().steps(),
        };
        let dir = &exp.config.output_dir;
        let csv = dir.join(format!("curvature{suffix}.csv"));
        let sidecar = dir.join(format!("curvature{suffix}.json"));
        write_file(&csv, |w| write_curvature(w, &report))?;
        write_file(&sidecar, |w| {
            serde_json::to_writer_pretty(&mut *w, &summary)?;
            writeln!(w)
        })?;
        results.push(json!({
            "schedule": summary.schedule,
            "global": summary.global,
            "csv": csv,
            "summary": sidecar,
        }));
    }
    print_json(&json!({ "curvature": results }))
}

pub fn analyze_support(
    exp: &Experiment,
    compare: &[String],
    times: &[f64],
    kappa: Option<f64>,
    scaled: bool,
) -> Result<(), CliError> {
    let mut results = Vec::new();
    for (spec, suffix) in targets(exp, compare, kappa, scaled)? {
        let report = if times.is_empty() {
            relative_support(&spec, &grid_for(&spec, exp.config.steps, exp.config.grid)?)?
        } else {
            relative_support_at(&spec, times)?
        };
        let csv = exp.config.output_dir.join(format!("support{suffix}.csv"));
        write_file(&csv, |w| write_support(w, &report))?;
        let mut entry = json!({
            "schedule": spec.label(),
            "t_at_0.9": support_crossing(&spec, 0.9)?,
            "csv": csv,
        });
        if !times.is_empty() {
            entry["times"] = json!(report.times);
            entry["rel_support"] = json!(report.rel_support);
        }
        results.push(entry);
    }
    print_json(&json!({ "support": results }))
}

pub fn analyze_shadow(exp: &Experiment, compare: &[String], kappa: Option<f64>, scaled: bool) -> Result<(), CliError> {
    let mut results = Vec::new();
    for (spec, suffix) in targets(exp, compare, kappa, scaled)? {
        let (times, xs) = default_shadow_grids(&spec)?;
        let shadow = density_shadow(&exp.mixture, &spec, &times, &xs)?;
        let csv = exp.config.output_dir.join(format!("shadow{suffix}.csv"));
        write_file(&csv, |w| write_shadow(w, &shadow))?;
        results.push(json!({ "schedule": spec.label(), "csv": csv }));
    }
    print_json(&json!({ "shadow": results }))
}

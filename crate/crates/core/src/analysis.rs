//! Trajectory curvature, marginal support and sample diagnostics.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sampler::{ode_velocity, ReverseField, TimeGrid, Trajectory};
use crate::schedule::{eval_point, to_kernel, ScheduleSpec};
use crate::score::{MixtureData, ScoreSource};

/// Default peak-capture radius in standardized units.
pub const DEFAULT_PEAK_TOL: f64 = 1e-2;

/// Local curvature per grid node plus its integral over time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureReport {
    /// Grid nodes in ascending order.
    pub times: Vec<f64>,
    /// `E‖chord − ẋ(t)‖²` at each node.
    pub local: Vec<f64>,
    /// Trapezoidal integral of `local` over `times`.
    pub global: f64,
    pub trajectories: usize,
}

/// Trapezoidal rule over paired nodes.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Curvature of a batch of ODE trajectories.
///
/// The chord is `(x(t_max) − x(t_min)) / (t_max − t_min)`, which is
/// `x(1) − x(0)` on a unit-length grid, and `ẋ(t)` is the exact reverse-ODE
/// velocity at each recorded state. Per-node means are accumulated in batch
/// order so the result does not depend on the thread count.
pub fn curvature<S: ScoreSource + ?Sized>(
    batch: &[Trajectory],
    field: &ReverseField,
    source: &S,
) -> Result<CurvatureReport> {
    let first = batch
        .first()
        .ok_or_else(|| Error::InvalidInput("curvature needs at least one trajectory".into()))?;
    let grid: &Arc<TimeGrid> = field.grid();
    for traj in batch {
        if !(Arc::ptr_eq(&traj.grid, grid) || *traj.grid == **grid) {
            return Err(Error::InvalidInput(
                "all trajectories must share the field's grid".into(),
            ));
        }
        if traj.lambda != 0.0 {
            return Err(Error::InvalidInput(
                "curvature is defined for ODE trajectories (lambda = 0)".into(),
            ));
        }
        if traj.dim != first.dim {
            return Err(Error::InvalidInput("trajectories differ in dimension".into()));
        }
    }
    let times = grid.times();
    let span = grid.t_max() - grid.t_min();
    let n_nodes = times.len();

    let per_traj: Vec<Vec<f64>> = batch
        .par_iter()
        .map(|traj| {
            let chord: Vec<f64> = traj
                .initial()
                .iter()
                .zip(traj.sample())
                .map(|(hi, lo)| (hi - lo) / span)
                .collect();
            (0..n_nodes)
                .map(|i| {
                    let v = ode_velocity(field, i, source, traj.state(i))?;
                    Ok(chord.iter().zip(&v).map(|(c, vj)| (c - vj).powi(2)).sum())
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let mut local = vec![0.0; n_nodes];
    for row in &per_traj {
        local.iter_mut().zip(row).for_each(|(acc, v)| *acc += v);
    }
    let n = batch.len() as f64;
    local.iter_mut().for_each(|v| *v /= n);

    let mut asc_times = times.to_vec();
    asc_times.reverse();
    local.reverse();
    let global = trapezoid(&asc_times, &local);
    Ok(CurvatureReport {
        times: asc_times,
        local,
        global,
        trajectories: batch.len(),
    })
}

/// Kernel width relative to its value at the top of the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportReport {
    /// Ascending times.
    pub times: Vec<f64>,
    /// `b(t) / b(t_max)`.
    pub rel_support: Vec<f64>,
}

fn kernel_b(spec: &ScheduleSpec, t: f64) -> Result<f64> {
    Ok(to_kernel(&eval_point(spec, t)?).b)
}

/// `b(t)/b(t_max)` at every node of `grid`.
pub fn relative_support(spec: &ScheduleSpec, grid: &TimeGrid) -> Result<SupportReport> {
    let top = kernel_b(spec, grid.t_max())?;
    let mut times = grid.times().to_vec();
    times.reverse();
    let rel_support = times
        .iter()
        .map(|&t| kernel_b(spec, t).map(|b| b / top))
        .collect::<Result<_>>()?;
    Ok(SupportReport { times, rel_support })
}

/// `b(t)/b(t_max)` at arbitrary times, normalized by the top of the
/// schedule's interval.
pub fn relative_support_at(spec: &ScheduleSpec, times: &[f64]) -> Result<SupportReport> {
    let top = kernel_b(spec, spec.interval().1)?;
    let rel_support = times
        .iter()
        .map(|&t| kernel_b(spec, t).map(|b| b / top))
        .collect::<Result<_>>()?;
    Ok(SupportReport {
        times: times.to_vec(),
        rel_support,
    })
}

/// Earliest time at which `b(t)/b(t_max)` reaches `level`, found by
/// bisection on the schedule's interval. Relies on `b` being monotone.
pub fn support_crossing(spec: &ScheduleSpec, level: f64) -> Result<f64> {
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::InvalidInput(format!("level must lie in (0, 1], got {level}")));
    }
    let (mut lo, mut hi) = spec.interval();
    let top = kernel_b(spec, hi)?;
    let excess = |t: f64| kernel_b(spec, t).map(|b| b / top - level);
    if excess(lo)? >= 0.0 {
        return Ok(lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Assignment of samples to mixture peaks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PeakCapture {
    pub counts: Vec<usize>,
    pub outside: usize,
    pub total: usize,
}

impl PeakCapture {
    pub fn fractions(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.total as f64).collect()
    }

    pub fn outside_fraction(&self) -> f64 {
        self.outside as f64 / self.total as f64
    }
}

/// Assigns each sample to its nearest center when that center lies within
/// `tol` (ties go to the lower index), and counts the rest as outside.
pub fn peak_capture<'a, I>(samples: I, mix: &MixtureData, tol: f64) -> Result<PeakCapture>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let mut report = PeakCapture {
        counts: vec![0; mix.centers().len()],
        outside: 0,
        total: 0,
    };
    for x in samples {
        if x.len() != mix.dim() {
            return Err(Error::InvalidInput(format!(
                "sample has dimension {}, mixture has {}",
                x.len(),
                mix.dim()
            )));
        }
        let (i, d) = mix.nearest_center(x);
        if d <= tol {
            report.counts[i] += 1;
        } else {
            report.outside += 1;
        }
        report.total += 1;
    }
    if report.total == 0 {
        return Err(Error::InvalidInput("no samples to classify".into()));
    }
    Ok(report)
}

/// Marginal density `p_t(x)` on a `t × x` lattice (one-dimensional data).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityShadow {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    /// Row-major, one row per time.
    pub pdf: Vec<f64>,
}

impl DensityShadow {
    pub fn column(&self, i: usize) -> &[f64] {
        &self.pdf[i * self.xs.len()..(i + 1) * self.xs.len()]
    }
}

pub fn density_shadow(
    mix: &MixtureData,
    spec: &ScheduleSpec,
    times: &[f64],
    xs: &[f64],
) -> Result<DensityShadow> {
    if mix.dim() != 1 {
        return Err(Error::Unsupported("density shadows need one-dimensional data".into()));
    }
    if times.is_empty() || xs.is_empty() {
        return Err(Error::InvalidInput("shadow grids must be nonempty".into()));
    }
    let rows = times
        .par_iter()
        .map(|&t| {
            let kern = to_kernel(&eval_point(spec, t)?);
            xs.iter()
                .map(|&x| mix.marginal_logpdf(&kern, &[x]).map(f64::exp))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DensityShadow {
        times: times.to_vec(),
        xs: xs.to_vec(),
        pdf: rows.concat(),
    })
}

/// Evenly spaced points over `[lo, hi]`, endpoints included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let mut v: Vec<f64> = (0..n)
                .map(|i| lo + (hi - lo) * (i as f64 / (n - 1) as f64))
                .collect();
            v[n - 1] = hi;
            v
        }
    }
}

/// Default shadow lattice: 201 times across the schedule's interval and
/// 401 points on `±4 τ(t_max)`.
pub fn default_shadow_grids(spec: &ScheduleSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let (lo, hi) = spec.interval();
    let width = 4.0 * eval_point(spec, hi)?.tv_sq.sqrt();
    Ok((linspace(lo, hi, 201), linspace(-width, width, 401)))
}

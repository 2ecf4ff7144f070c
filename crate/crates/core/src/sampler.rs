//! Time grids and reverse-process integrators.
//!
//! All solvers integrate in forward time with `t` decreasing from the
//! grid's first node to its last. Schedule coefficients are evaluated once
//! per grid node and shared by every trajectory in a batch.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, StreamRng};
use crate::schedule::{eval_point, to_kernel, Family, KernelCoeffs, ScheduleSpec};
use crate::score::ScoreSource;
use crate::sde::{reverse_rhs_into, tvsnr_sde, SdeCoeffs};

/// How grid nodes are placed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    Uniform,
    EdmRho {
        sigma_min: f64,
        sigma_max: f64,
        rho: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Uniform,
    EdmRho,
}

/// Strictly decreasing integration nodes `t_0 > t_1 > … > t_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
    kind: GridKind,
    /// Noise levels the nodes were built from (EDM grids only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    sigmas: Option<Vec<f64>>,
}

impl TimeGrid {
    /// Wraps explicit nodes, which must be strictly decreasing within `[0, 1]`.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        Self::checked(times, GridKind::Uniform, None)
    }

    fn checked(times: Vec<f64>, kind: GridKind, sigmas: Option<Vec<f64>>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidInput("a grid needs at least one step".into()));
        }
        if times.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidInput("grid nodes must lie in [0, 1]".into()));
        }
        if times.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidInput("grid nodes must strictly decrease".into()));
        }
        Ok(Self {
            times,
            kind,
            sigmas,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn sigmas(&self) -> Option<&[f64]> {
        self.sigmas.as_deref()
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn t_max(&self) -> f64 {
        self.times[0]
    }

    pub fn t_min(&self) -> f64 {
        self.times[self.times.len() - 1]
    }
}

/// `steps + 1` equally spaced nodes from `t_max` down to `t_min`.
pub fn uniform_grid(steps: usize, t_min: f64, t_max: f64) -> Result<TimeGrid> {
    if steps == 0 {
        return Err(Error::InvalidInput("steps must be at least 1".into()));
    }
    if !(0.0 <= t_min && t_min < t_max && t_max <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "need 0 <= t_min < t_max <= 1, got [{t_min}, {t_max}]"
        )));
    }
    let span = t_max - t_min;
    let n = steps as f64;
    let mut times: Vec<f64> = (0..=steps).map(|i| t_max - span * (i as f64 / n)).collect();
    times[steps] = t_min;
    TimeGrid::checked(times, GridKind::Uniform, None)
}

/// Karras noise levels `σ_0 = σ_max, …, σ_{N−1} = σ_min, σ_N = 0`.
pub fn edm_sigmas(steps: usize, sigma_min: f64, sigma_max: f64, rho: f64) -> Result<Vec<f64>> {
    if steps < 2 {
        return Err(Error::InvalidInput("an EDM grid needs at least 2 steps".into()));
    }
    if !(sigma_min > 0.0 && sigma_min < sigma_max && sigma_max.is_finite() && rho > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need 0 < sigma_min < sigma_max and rho > 0, got ({sigma_min}, {sigma_max}, {rho})"
        )));
    }
    let hi = sigma_max.powf(1.0 / rho);
    let lo = sigma_min.powf(1.0 / rho);
    let last = (steps - 1) as f64;
    let mut sigmas: Vec<f64> = (0..steps)
        .map(|i| (hi + i as f64 / last * (lo - hi)).powf(rho))
        .collect();
    sigmas[0] = sigma_max;
    sigmas[steps - 1] = sigma_min;
    sigmas.push(0.0);
    Ok(sigmas)
}

/// EDM grid in normalized time `t = σ / σ_max`, with the `σ_N = 0` node
/// placed at `t_floor`.
pub fn edm_grid(
    steps: usize,
    sigma_min: f64,
    sigma_max: f64,
    rho: f64,
    t_floor: f64,
) -> Result<TimeGrid> {
    let sigmas = edm_sigmas(steps, sigma_min, sigma_max, rho)?;
    if !(t_floor >= 0.0 && t_floor < sigma_min / sigma_max) {
        return Err(Error::InvalidInput(format!(
            "final node t = {t_floor} must lie below sigma_min / sigma_max = {}",
            sigma_min / sigma_max
        )));
    }
    let mut times: Vec<f64> = sigmas.iter().map(|s| s / sigma_max).collect();
    times[0] = 1.0;
    times[steps] = t_floor;
    TimeGrid::checked(times, GridKind::EdmRho, Some(sigmas))
}

/// Builds a grid of the given kind over `spec`'s evaluation interval.
///
/// EDM grids require an EDM schedule, whose `σ_max` fixes the time scale.
pub fn build_grid(spec: &ScheduleSpec, steps: usize, grid: GridSpec) -> Result<TimeGrid> {
    spec.validate()?;
    let (lo, hi) = spec.interval();
    match grid {
        GridSpec::Uniform => uniform_grid(steps, lo, hi),
        GridSpec::EdmRho {
            sigma_min,
            sigma_max,
            rho,
        } => match spec.family {
            Family::Edm {
                sigma_max: family_max,
                ..
            } if (sigma_max - family_max).abs() <= 1e-12 * family_max => {
                edm_grid(steps, sigma_min, sigma_max, rho, lo)
            }
            Family::Edm { .. } => Err(Error::InvalidInput(
                "EDM grid sigma_max must match the schedule's sigma_max".into(),
            )),
            _ => Err(Error::InvalidInput(format!(
                "EDM grids are only defined for EDM schedules, not {}",
                spec.label()
            ))),
        },
    }
}

/// The schedule's default grid with `steps` steps.
pub fn default_grid(spec: &ScheduleSpec, steps: usize) -> Result<TimeGrid> {
    build_grid(spec, steps, spec.default_grid())
}

/// One solved reverse trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Arc<TimeGrid>,
    /// Row-major `[N + 1] × dim` states aligned with `grid.times()`.
    pub states: Vec<f64>,
    pub dim: usize,
    pub seed: u64,
    /// Stream index the trajectory drew from.
    pub index: u64,
    pub lambda: f64,
}

impl Trajectory {
    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    /// The prior draw `x(t_max)`.
    pub fn initial(&self) -> &[f64] {
        self.state(0)
    }

    /// The generated sample `x(t_min)`.
    pub fn sample(&self) -> &[f64] {
        self.state(self.grid.steps())
    }

    pub fn len(&self) -> usize {
        self.grid.times().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Solver choice for batch sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Euler,
    Heun,
    Sde { lambda: f64 },
}

impl Solver {
    pub fn lambda(&self) -> f64 {
        match self {
            Solver::Sde { lambda } => *lambda,
            _ => 0.0,
        }
    }

    /// Score evaluations per trajectory on `field`'s grid.
    pub fn nfe(&self, field: &ReverseField) -> usize {
        let steps = field.grid.steps();
        match self {
            Solver::Heun if field.euler_final => 2 * steps - 1,
            Solver::Heun => 2 * steps,
            _ => steps,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    t: f64,
    kernel: KernelCoeffs,
    sde: SdeCoeffs,
}

/// Schedule coefficients at every node of a grid.
///
/// Nodes where the schedule is singular are kept as errors; a solve only
/// fails if it actually needs one.
#[derive(Debug, Clone)]
pub struct ReverseField {
    grid: Arc<TimeGrid>,
    nodes: Vec<Result<Node>>,
    /// Heun takes its last step with Euler.
    euler_final: bool,
}

impl ReverseField {
    pub fn new(spec: &ScheduleSpec, grid: Arc<TimeGrid>) -> Result<Self> {
        spec.validate()?;
        let nodes = grid
            .times()
            .iter()
            .map(|&t| {
                let point = eval_point(spec, t)?;
                Ok(Node {
                    t,
                    kernel: to_kernel(&point),
                    sde: tvsnr_sde(&point)?,
                })
            })
            .collect();
        // The last node of an EDM grid, or of any grid reaching down to a
        // clamped singular endpoint, is too stiff for a trapezoidal corrector.
        let (floor, _) = spec.interval();
        let euler_final =
            grid.kind == GridKind::EdmRho || (floor > 0.0 && grid.t_min() <= floor);
        Ok(Self {
            grid,
            nodes,
            euler_final,
        })
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    fn node(&self, i: usize) -> Result<&Node> {
        self.nodes[i].as_ref().map_err(Clone::clone)
    }

    /// Kernel and SDE coefficients at node `i`.
    pub fn coeffs(&self, i: usize) -> Result<(KernelCoeffs, SdeCoeffs)> {
        self.node(i).map(|n| (n.kernel, n.sde))
    }
}

struct Workspace {
    score: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    trial: Vec<f64>,
}

impl Workspace {
    fn new(dim: usize) -> Self {
        Self {
            score: vec![0.0; dim],
            d1: vec![0.0; dim],
            d2: vec![0.0; dim],
            trial: vec![0.0; dim],
        }
    }
}

fn drift_at<S: ScoreSource + ?Sized>(
    node: &Node,
    source: &S,
    x: &[f64],
    lambda: f64,
    score: &mut [f64],
    drift: &mut [f64],
) -> Result<f64> {
    source.score_into(node.t, &node.kernel, x, score)?;
    Ok(reverse_rhs_into(x, score, &node.sde, lambda, drift))
}

/// Reverse-ODE velocity `dx/dt = f x − ½ g² ∇ log p_t` at node `i`.
pub fn ode_velocity<S: ScoreSource + ?Sized>(
    field: &ReverseField,
    i: usize,
    source: &S,
    x: &[f64],
) -> Result<Vec<f64>> {
    let mut score = vec![0.0; x.len()];
    let mut drift = vec![0.0; x.len()];
    drift_at(field.node(i)?, source, x, 0.0, &mut score, &mut drift)?;
    Ok(drift)
}

enum Method<'r> {
    Euler,
    Heun,
    Sde { lambda: f64, rng: &'r mut StreamRng },
}

fn integrate<S: ScoreSource + ?Sized>(
    field: &ReverseField,
    source: &S,
    prior: &[f64],
    mut method: Method<'_>,
) -> Result<Vec<f64>> {
    let dim = source.dim();
    if prior.len() != dim {
        return Err(Error::InvalidInput(format!(
            "prior sample has dimension {}, score source expects {dim}",
            prior.len()
        )));
    }
    let grid = field.grid();
    let steps = grid.steps();
    let times = grid.times();
    let mut states = Vec::with_capacity((steps + 1) * dim);
    states.extend_from_slice(prior);
    let mut ws = Workspace::new(dim);
    let mut x = prior.to_vec();

    for i in 0..steps {
        let h = times[i + 1] - times[i];
        let here = field.node(i)?;
        match &mut method {
            Method::Euler => {
                drift_at(here, source, &x, 0.0, &mut ws.score, &mut ws.d1)?;
                x.iter_mut().zip(&ws.d1).for_each(|(xj, dj)| *xj += h * dj);
            }
            Method::Heun => {
                drift_at(here, source, &x, 0.0, &mut ws.score, &mut ws.d1)?;
                let last = i + 1 == steps;
                let next = match field.node(i + 1) {
                    Ok(n) if !(last && field.euler_final) => Some(n),
                    Ok(_) | Err(Error::Domain { .. }) => None,
                    Err(e) => return Err(e),
                };
                match next {
                    Some(next) => {
                        for ((t, xj), dj) in ws.trial.iter_mut().zip(&x).zip(&ws.d1) {
                            *t = xj + h * dj;
                        }
                        drift_at(next, source, &ws.trial, 0.0, &mut ws.score, &mut ws.d2)?;
                        for ((xj, a), b) in x.iter_mut().zip(&ws.d1).zip(&ws.d2) {
                            *xj += 0.5 * h * (a + b);
                        }
                    }
                    None => x.iter_mut().zip(&ws.d1).for_each(|(xj, dj)| *xj += h * dj),
                }
            }
            Method::Sde { lambda, rng } => {
                let noise = drift_at(here, source, &x, *lambda, &mut ws.score, &mut ws.d1)?;
                x.iter_mut().zip(&ws.d1).for_each(|(xj, dj)| *xj += h * dj);
                if *lambda > 0.0 && i + 1 < steps {
                    let scale = noise * (-h).sqrt();
                    for xj in x.iter_mut() {
                        let xi: f64 = rng.sample(StandardNormal);
                        *xj += scale * xi;
                    }
                }
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain {
                family: "solver",
                t: times[i + 1],
            });
        }
        states.extend_from_slice(&x);
    }
    Ok(states)
}

fn trajectory(field: &ReverseField, dim: usize, states: Vec<f64>, seed: u64, index: u64, lambda: f64) -> Trajectory {
    Trajectory {
        grid: Arc::clone(field.grid()),
        states,
        dim,
        seed,
        index,
        lambda,
    }
}

/// First-order probability-flow ODE solve.
pub fn solve_euler<S: ScoreSource + ?Sized>(
    field: &ReverseField,
    source: &S,
    prior: &[f64],
) -> Result<Trajectory> {
    let states = integrate(field, source, prior, Method::Euler)?;
    Ok(trajectory(field, prior.len(), states, 0, 0, 0.0))
}

/// Second-order (trapezoidal predictor–corrector) probability-flow ODE
/// solve. Steps onto a node where the schedule is singular are taken with
/// Euler, as is the last step of an EDM grid or of a grid ending at a
/// clamped singular endpoint.
pub fn solve_heun<S: ScoreSource + ?Sized>(
    field: &ReverseField,
    source: &S,
    prior: &[f64],
) -> Result<Trajectory> {
    let states = integrate(field, source, prior, Method::Heun)?;
    Ok(trajectory(field, prior.len(), states, 0, 0, 0.0))
}

/// Euler–Maruyama on the reverse SDE with stochasticity `lambda`, drawing
/// noise from stream `(seed, 0)`. The final step adds no noise.
pub fn solve_sde<S: ScoreSource + ?Sized>(
    field: &ReverseField,
    source: &S,
    prior: &[f64],
    lambda: f64,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = stream_rng(seed, 0);
    solve_sde_with(field, source, prior, lambda, &mut rng)
        .map(|t| Trajectory { seed, ..t })
}

/// [`solve_sde`] with a caller-supplied random stream.
pub fn solve_sde_with<S: ScoreSource + ?Sized>(
    field: &ReverseField,
    source: &S,
    prior: &[f64],
    lambda: f64,
    rng: &mut StreamRng,
) -> Result<Trajectory> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
    }
    let states = integrate(field, source, prior, Method::Sde { lambda, rng })?;
    Ok(trajectory(field, prior.len(), states, 0, 0, lambda))
}

/// Draws `x(t_max) ~ N(0, τ²(t_max) I)` over the schedule's interval.
pub fn sample_prior<R: Rng + ?Sized>(spec: &ScheduleSpec, dim: usize, rng: &mut R) -> Result<Vec<f64>> {
    let point = eval_point(spec, spec.interval().1)?;
    let sd = point.tv_sq.sqrt();
    Ok((0..dim)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            sd * z
        })
        .collect())
}

/// Solves `count` trajectories from independent prior draws.
///
/// Trajectory `k` takes its prior (and, for SDE solves, its noise) from
/// stream `(seed, k)`, so results do not depend on how rayon schedules the
/// work.
pub fn sample_batch<S: ScoreSource + ?Sized>(
    spec: &ScheduleSpec,
    field: &ReverseField,
    source: &S,
    solver: Solver,
    count: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    if count == 0 {
        return Err(Error::InvalidInput("batch must contain at least one trajectory".into()));
    }
    let dim = source.dim();
    (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k);
            let prior = sample_prior(spec, dim, &mut rng)?;
            let traj = match solver {
                Solver::Euler => solve_euler(field, source, &prior),
                Solver::Heun => solve_heun(field, source, &prior),
                Solver::Sde { lambda } => solve_sde_with(field, source, &prior, lambda, &mut rng),
            }?;
            Ok(Trajectory {
                seed,
                index: k,
                ..traj
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::MixtureData;
    use approx::assert_relative_eq;

    fn field(spec: &ScheduleSpec, grid: TimeGrid) -> ReverseField {
        ReverseField::new(spec, Arc::new(grid)).unwrap()
    }

    #[test]
    fn uniform_grid_examples() {
        assert_eq!(uniform_grid(2, 0.0, 1.0).unwrap().times(), &[1.0, 0.5, 0.0]);
        assert_eq!(uniform_grid(1, 0.01, 0.99).unwrap().times(), &[0.99, 0.01]);
        let g = uniform_grid(4, 0.0, 1.0).unwrap();
        assert!(g.times().windows(2).all(|w| w[0] - w[1] == 0.25));
        assert!(uniform_grid(0, 0.0, 1.0).is_err());
        assert!(uniform_grid(4, 0.5, 0.5).is_err());
        assert!(uniform_grid(4, -0.1, 1.0).is_err());
    }

    #[test]
    fn uniform_grid_hits_endpoints() {
        for steps in [3, 7, 100, 513] {
            let g = uniform_grid(steps, 1e-5, 1.0 - 1e-5).unwrap();
            assert_eq!(g.times().len(), steps + 1);
            assert_eq!(g.t_max(), 1.0 - 1e-5);
            assert_eq!(g.t_min(), 1e-5);
        }
    }

    #[test]
    fn edm_grid_examples() {
        assert_eq!(edm_sigmas(2, 0.002, 80.0, 7.0).unwrap(), vec![80.0, 0.002, 0.0]);
        let s = edm_sigmas(3, 0.002, 80.0, 7.0).unwrap();
        let mid = ((80f64.powf(1.0 / 7.0) + 0.002f64.powf(1.0 / 7.0)) / 2.0).powi(7);
        assert_relative_eq!(s[1], mid, max_relative = 1e-14);
        assert!((s[1] - 2.515).abs() < 1e-3 * 2.515);

        let lin = edm_sigmas(5, 1.0, 9.0, 1.0).unwrap();
        for w in lin[..5].windows(2) {
            assert_relative_eq!(w[0] - w[1], 2.0, max_relative = 1e-12);
        }

        let g = edm_grid(4, 0.002, 80.0, 7.0, 1e-5).unwrap();
        assert_eq!(g.kind(), GridKind::EdmRho);
        assert_eq!(g.t_max(), 1.0);
        assert_eq!(g.t_min(), 1e-5);
        assert_relative_eq!(g.times()[3], 0.002 / 80.0, max_relative = 1e-14);

        assert!(edm_sigmas(1, 0.002, 80.0, 7.0).is_err());
        assert!(edm_sigmas(4, 80.0, 0.002, 7.0).is_err());
        assert!(edm_grid(4, 0.002, 80.0, 7.0, 1e-4).is_err());
    }

    #[test]
    fn spec_grids() {
        let edm = ScheduleSpec::edm(0.002, 80.0, 7.0);
        assert_eq!(default_grid(&edm, 8).unwrap().kind(), GridKind::EdmRho);
        let otfm = ScheduleSpec::otfm();
        let g = default_grid(&otfm, 8).unwrap();
        assert_eq!((g.t_min(), g.t_max()), otfm.interval());
        assert!(build_grid(&otfm, 8, edm.default_grid()).is_err());
    }

    #[test]
    fn single_delta_fixed_point() {
        let mix = MixtureData::single_delta(vec![0.0]);
        for entry in crate::schedule::catalog() {
            let f = field(&entry.spec, default_grid(&entry.spec, 32).unwrap());
            let heun = solve_heun(&f, &mix, &[0.0]).unwrap();
            assert!(heun.states.iter().all(|&x| x == 0.0), "{}", entry.name);
        }
    }

    #[test]
    fn contraction_towards_the_atom() {
        let spec = ScheduleSpec::otfm().vp();
        let mix = MixtureData::single_delta(vec![0.0]);
        let coarse = solve_euler(&field(&spec, default_grid(&spec, 200).unwrap()), &mix, &[1.0]).unwrap();
        let fine = solve_euler(&field(&spec, default_grid(&spec, 2000).unwrap()), &mix, &[1.0]).unwrap();
        assert!(coarse.states.windows(2).all(|w| w[1].abs() <= w[0].abs()));
        // x(t) = x(1) b(t) / b(1) for a delta at the origin
        let b_end = to_kernel(&eval_point(&spec, spec.interval().0).unwrap()).b;
        let b_start = to_kernel(&eval_point(&spec, spec.interval().1).unwrap()).b;
        let exact = b_end / b_start;
        assert!((fine.sample()[0] - exact).abs() < (coarse.sample()[0] - exact).abs());
    }

    #[test]
    fn sde_without_noise_matches_euler() {
        let spec = ScheduleSpec::issnr(1.0, 2.0, 0.01, 0.99);
        let f = field(&spec, default_grid(&spec, 64).unwrap());
        let mix = MixtureData::three_delta();
        let euler = solve_euler(&f, &mix, &[0.3]).unwrap();
        let sde = solve_sde(&f, &mix, &[0.3], 0.0, 99).unwrap();
        assert_eq!(euler.states, sde.states);
    }

    #[test]
    fn sde_is_reproducible() {
        let spec = ScheduleSpec::otfm().vp();
        let f = field(&spec, default_grid(&spec, 64).unwrap());
        let mix = MixtureData::three_delta();
        let a = solve_sde(&f, &mix, &[0.3], 1.0, 5).unwrap();
        let b = solve_sde(&f, &mix, &[0.3], 1.0, 5).unwrap();
        let c = solve_sde(&f, &mix, &[0.3], 1.0, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.states, c.states);
        assert!(solve_sde(&f, &mix, &[0.3], -1.0, 5).is_err());
    }

    #[test]
    fn sde_collapses_onto_single_atom() {
        let spec = ScheduleSpec::otfm().vp();
        let mix = MixtureData::single_delta(vec![0.0]);
        let variance = |steps| {
            let f = field(&spec, default_grid(&spec, steps).unwrap());
            let batch = sample_batch(&spec, &f, &mix, Solver::Sde { lambda: 1.0 }, 2000, 3).unwrap();
            let xs: Vec<f64> = batch.iter().map(|t| t.sample()[0]).collect();
            xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64
        };
        let coarse = variance(32);
        let fine = variance(512);
        assert!(fine < coarse, "{fine} vs {coarse}");
        assert!(fine < 1e-4, "{fine}");
    }

    #[test]
    fn toy_final_state_lands_on_a_peak() {
        let spec = ScheduleSpec::issnr(1.0, 2.0, 0.01, 0.99);
        let f = field(&spec, default_grid(&spec, 256).unwrap());
        let mix = MixtureData::three_delta();
        let prior = sample_prior(&spec, 1, &mut stream_rng(0, 0)).unwrap();
        let traj = solve_euler(&f, &mix, &prior).unwrap();
        assert!(mix.nearest_center(traj.sample()).1 < 1e-3);
    }

    #[test]
    fn heun_matches_fine_euler() {
        let spec = ScheduleSpec::issnr(1.0, 2.0, 0.01, 0.99);
        let mix = MixtureData::three_delta();
        for x0 in [-1.7, -0.4, 0.05, 0.9, 2.2] {
            let heun = solve_heun(&field(&spec, default_grid(&spec, 32).unwrap()), &mix, &[x0]).unwrap();
            let euler = solve_euler(&field(&spec, default_grid(&spec, 4096).unwrap()), &mix, &[x0]).unwrap();
            assert!((heun.sample()[0] - euler.sample()[0]).abs() < 1e-3, "x0 = {x0}");
        }
    }

    #[test]
    fn heun_nfe() {
        let issnr = ScheduleSpec::issnr(1.0, 2.0, 0.01, 0.99);
        let f = field(&issnr, default_grid(&issnr, 10).unwrap());
        assert_eq!(Solver::Heun.nfe(&f), 20);
        assert_eq!(Solver::Euler.nfe(&f), 10);
        let otfm = ScheduleSpec::otfm();
        assert_eq!(Solver::Heun.nfe(&field(&otfm, default_grid(&otfm, 10).unwrap())), 19);
        assert_eq!(Solver::Heun.nfe(&field(&otfm, uniform_grid(10, 0.2, 0.8).unwrap())), 20);
        let edm = ScheduleSpec::edm(0.002, 80.0, 7.0);
        assert_eq!(Solver::Heun.nfe(&field(&edm, default_grid(&edm, 10).unwrap())), 19);
    }

    #[test]
    fn heun_counts_its_evaluations() {
        struct Counting<'a>(&'a MixtureData, std::sync::atomic::AtomicUsize);
        impl ScoreSource for Counting<'_> {
            fn dim(&self) -> usize {
                1
            }
            fn score_into(&self, t: f64, k: &KernelCoeffs, x: &[f64], out: &mut [f64]) -> Result<()> {
                self.1.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                ScoreSource::score_into(self.0, t, k, x, out)
            }
        }
        let mix = MixtureData::three_delta();
        for spec in [ScheduleSpec::otfm(), ScheduleSpec::issnr(1.0, 2.0, 0.01, 0.99)] {
            let f = field(&spec, default_grid(&spec, 12).unwrap());
            let counting = Counting(&mix, Default::default());
            solve_heun(&f, &counting, &[0.1]).unwrap();
            assert_eq!(counting.1.into_inner(), Solver::Heun.nfe(&f));
        }
    }

    #[test]
    fn heun_falls_back_at_singular_node() {
        let spec = ScheduleSpec::otfm();
        let f = field(&spec, uniform_grid(16, 0.0, 0.5).unwrap());
        let mix = MixtureData::three_delta();
        assert!(solve_heun(&f, &mix, &[0.2]).is_ok());
        assert!(matches!(solve_euler(&field(&spec, uniform_grid(4, 0.5, 1.0).unwrap()), &mix, &[0.2]), Err(Error::Domain { .. })));
    }

    #[test]
    fn prior_variance() {
        let mut rng = stream_rng(1, 0);
        let smld = ScheduleSpec::smld(0.01, 50.0);
        let n = 20000;
        let draws = sample_prior(&smld, n, &mut rng).unwrap();
        let var = draws.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((var / 2501.0 - 1.0).abs() < 0.04, "{var}");
        let edm = eval_point(&ScheduleSpec::edm(0.002, 80.0, 7.0), 1.0).unwrap();
        assert_relative_eq!(edm.tv_sq, 6401.0, max_relative = 1e-12);
    }

    #[test]
    fn batches_are_order_independent() {
        let spec = ScheduleSpec::otfm().vp();
        let f = field(&spec, default_grid(&spec, 16).unwrap());
        let mix = MixtureData::three_delta();
        let solver = Solver::Sde { lambda: 0.5 };
        let pool = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sample_batch(&spec, &f, &mix, solver, 64, 11).unwrap())
        };
        assert_eq!(pool(1), pool(3));
    }
}

//! Exact marginals and scores for mixture data.
//!
//! With `p_data = Σ wᵢ N(xᵢ, v I)` (a delta mixture when `v = 0`) the
//! perturbed marginal at kernel `(a, b)` is again a mixture,
//! `p_t(x) = Σ wᵢ N(x; a xᵢ, (a² v + b²) I)`, so its density, score and
//! posterior mean are available in closed form.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::KernelCoeffs;

/// Weighted isotropic mixture standing in for the data distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture", into = "RawMixture")]
pub struct MixtureData {
    weights: Vec<f64>,
    centers: Vec<Vec<f64>>,
    center_var: f64,
    log_weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMixture {
    weights: Vec<f64>,
    centers: Vec<Vec<f64>>,
    #[serde(default)]
    center_var: f64,
}

impl TryFrom<RawMixture> for MixtureData {
    type Error = Error;

    fn try_from(raw: RawMixture) -> Result<Self> {
        MixtureData::new(raw.weights, raw.centers, raw.center_var)
    }
}

impl From<MixtureData> for RawMixture {
    fn from(m: MixtureData) -> Self {
        RawMixture {
            weights: m.weights,
            centers: m.centers,
            center_var: m.center_var,
        }
    }
}

impl MixtureData {
    pub fn new(weights: Vec<f64>, centers: Vec<Vec<f64>>, center_var: f64) -> Result<Self> {
        if weights.is_empty() || weights.len() != centers.len() {
            return Err(Error::InvalidParameter(format!(
                "need one weight per center, got {} weights and {} centers",
                weights.len(),
                centers.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter("weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("weights sum to {total}, expected 1")));
        }
        let dim = centers[0].len();
        if dim == 0 || centers.iter().any(|c| c.len() != dim) {
            return Err(Error::InvalidParameter(
                "centers must share one non-zero dimension".into(),
            ));
        }
        if centers.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("centers must be finite".into()));
        }
        if !(center_var.is_finite() && center_var >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "center_var must be non-negative, got {center_var}"
            )));
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            weights,
            centers,
            center_var,
            log_weights,
        })
    }

    /// Equal-weight deltas at `0, ±√(3/2)`: zero mean, unit variance.
    pub fn three_delta() -> Self {
        let c = 1.5f64.sqrt();
        Self::new(vec![1.0 / 3.0; 3], vec![vec![0.0], vec![c], vec![-c]], 0.0)
            .expect("valid preset")
    }

    /// A single delta at `center`.
    pub fn single_delta(center: Vec<f64>) -> Self {
        Self::new(vec![1.0], vec![center], 0.0).expect("valid preset")
    }

    /// Named presets: `three-delta`.
    pub fn preset(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "three-delta" => Ok(Self::three_delta()),
            other => Err(Error::InvalidParameter(format!("unknown mixture preset `{other}`"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn center_var(&self) -> f64 {
        self.center_var
    }

    fn marginal_var(&self, kern: &KernelCoeffs) -> Result<f64> {
        let var = kern.a * kern.a * self.center_var + kern.b * kern.b;
        if var > 0.0 {
            Ok(var)
        } else {
            Err(Error::DegenerateDensity)
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "state has dimension {}, mixture has {}",
                x.len(),
                self.dim()
            )))
        }
    }

    /// Unnormalized component log-likelihood (shared constants dropped).
    fn logit(&self, i: usize, a: f64, inv_two_var: f64, x: &[f64]) -> f64 {
        let dist_sq: f64 = x
            .iter()
            .zip(&self.centers[i])
            .map(|(xj, cj)| (xj - a * cj).powi(2))
            .sum();
        self.log_weights[i] - dist_sq * inv_two_var
    }

    fn max_logit(&self, a: f64, inv_two_var: f64, x: &[f64]) -> f64 {
        (0..self.weights.len())
            .map(|i| self.logit(i, a, inv_two_var, x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Posterior component probabilities `P(i | x(t) = x)`.
    pub fn responsibilities(&self, kern: &KernelCoeffs, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let inv_two_var = 0.5 / self.marginal_var(kern)?;
        let top = self.max_logit(kern.a, inv_two_var, x);
        let mut r: Vec<f64> = (0..self.weights.len())
            .map(|i| (self.logit(i, kern.a, inv_two_var, x) - top).exp())
            .collect();
        let total: f64 = r.iter().sum();
        r.iter_mut().for_each(|v| *v /= total);
        Ok(r)
    }

    /// `log p_t(x)`.
    pub fn marginal_logpdf(&self, kern: &KernelCoeffs, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let var = self.marginal_var(kern)?;
        let inv_two_var = 0.5 / var;
        let top = self.max_logit(kern.a, inv_two_var, x);
        let sum: f64 = (0..self.weights.len())
            .map(|i| (self.logit(i, kern.a, inv_two_var, x) - top).exp())
            .sum();
        Ok(top + sum.ln() - 0.5 * self.dim() as f64 * (2.0 * PI * var).ln())
    }

    /// Writes `∇ₓ log p_t(x) = Σ rᵢ (a xᵢ - x) / σ_t²` into `out`.
    pub fn score_into(&self, kern: &KernelCoeffs, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(x)?;
        let var = self.marginal_var(kern)?;
        let inv_two_var = 0.5 / var;
        let a = kern.a;
        let top = self.max_logit(a, inv_two_var, x);
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut total = 0.0;
        for (i, c) in self.centers.iter().enumerate() {
            let r = (self.logit(i, a, inv_two_var, x) - top).exp();
            total += r;
            for ((o, &xj), &cj) in out.iter_mut().zip(x).zip(c) {
                *o += r * (a * cj - xj);
            }
        }
        let scale = 1.0 / (total * var);
        out.iter_mut().for_each(|o| *o *= scale);
        Ok(())
    }

    pub fn score(&self, kern: &KernelCoeffs, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.score_into(kern, x, &mut out)?;
        Ok(out)
    }

    /// Tweedie posterior mean `E[x(0) | x(t) = x] = Σ rᵢ xᵢ`.
    ///
    /// Defined for delta mixtures only.
    pub fn posterior_mean(&self, kern: &KernelCoeffs, x: &[f64]) -> Result<Vec<f64>> {
        if self.center_var > 0.0 {
            return Err(Error::Unsupported(
                "posterior mean is only implemented for delta mixtures".into(),
            ));
        }
        let r = self.responsibilities(kern, x)?;
        let mut mean = vec![0.0; self.dim()];
        for (ri, c) in r.iter().zip(&self.centers) {
            for (m, cj) in mean.iter_mut().zip(c) {
                *m += ri * cj;
            }
        }
        Ok(mean)
    }

    /// Index of the closest center and its Euclidean distance; ties go to
    /// the lower index.
    pub fn nearest_center(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centers.iter().enumerate() {
            let d: f64 = x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}

/// Source of the score `∇ₓ log p_t(x)` used by the reverse solvers.
pub trait ScoreSource: Sync {
    fn dim(&self) -> usize;

    /// Score at state `x` and time `t`, where `kern` is the schedule's
    /// kernel at `t`.
    fn score_into(&self, t: f64, kern: &KernelCoeffs, x: &[f64], out: &mut [f64]) -> Result<()>;
}

impl ScoreSource for MixtureData {
    fn dim(&self) -> usize {
        MixtureData::dim(self)
    }

    fn score_into(&self, _t: f64, kern: &KernelCoeffs, x: &[f64], out: &mut [f64]) -> Result<()> {
        MixtureData::score_into(self, kern, x, out)
    }
}

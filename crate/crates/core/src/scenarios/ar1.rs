//! Log-AR(1) model of the braking power:
//! `log(b_{t+1} + ε) = a log(b_t + ε) + z_{t+1}`,
//! with a single coefficient `a` and an empirical residual law per step.

use log::warn;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kmeans::{draw, kmeans_1d};
use super::{Atoms, ConditionalDistribution, DeterministicProfiles, Role, Scenario, ScenarioSet};
use crate::error::{EmsError, Result};
use crate::model::NoiseVector;
use crate::rng::{self, Domain};

pub const DEFAULT_EPS_LOG: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogAR1Model {
    pub a: f64,
    /// Offset added before the log transform (kW).
    pub eps_log: f64,
    /// Residuals `z_t`, sorted ascending, for `t = 1..=T`. Entry 0 is empty.
    pub residuals: Vec<Vec<f64>>,
    /// Forecast with `log E[exp z]` instead of `E[z]`.
    pub bias_correction: bool,
}

impl LogAR1Model {
    pub fn new(a: f64, eps_log: f64, mut residuals: Vec<Vec<f64>>, bias_correction: bool) -> Result<Self> {
        if !(eps_log > 0.0) {
            return Err(EmsError::InvalidArgument("eps_log must be > 0".into()));
        }
        if residuals.len() < 2 {
            return Err(EmsError::InvalidArgument("model needs at least one step".into()));
        }
        for (t, z) in residuals.iter_mut().enumerate().skip(1) {
            if z.is_empty() {
                return Err(EmsError::MissingResiduals(t));
            }
            z.sort_by(f64::total_cmp);
        }
        residuals[0].clear();
        Ok(Self {
            a,
            eps_log,
            residuals,
            bias_correction,
        })
    }

    pub fn horizon(&self) -> usize {
        self.residuals.len() - 1
    }

    /// Noise dynamics `f^w(b, z)`.
    #[inline]
    pub fn transition(&self, b: f64, z: f64) -> f64 {
        ((self.a * (b + self.eps_log).ln() + z).exp() - self.eps_log).max(0.0)
    }

    fn residuals_at(&self, t: usize) -> Result<&[f64]> {
        match self.residuals.get(t) {
            Some(z) if !z.is_empty() => Ok(z),
            _ => Err(EmsError::MissingResiduals(t)),
        }
    }

    /// Log-space increment used by the point forecast at step `t`.
    pub fn drift(&self, t: usize) -> Result<f64> {
        let z = self.residuals_at(t)?;
        let n = z.len() as f64;
        Ok(if self.bias_correction {
            (z.iter().map(|v| v.exp()).sum::<f64>() / n).ln()
        } else {
            z.iter().sum::<f64>() / n
        })
    }

    /// Residual laws quantized to at most `k` atoms per step (entry 0 is a
    /// placeholder point mass at zero).
    pub fn residual_atoms(&self, k: usize, seed: u64) -> Vec<Atoms> {
        std::iter::once(Atoms::point(0.0))
            .chain(
                self.residuals[1..]
                    .par_iter()
                    .enumerate()
                    .map(|(i, z)| kmeans_1d(z, k, seed.wrapping_add(i as u64 + 1)))
                    .collect::<Vec<_>>(),
            )
            .collect()
    }
}

/// Least-squares fit of the log-AR(1) coefficient on an optimization set.
///
/// The slope is pooled over steps and scenarios with a separate intercept
/// per step (the residual law of each step carries its own mean). A
/// regressor without variance gives `a = 1`.
pub fn fit_log_ar1(set: &ScenarioSet, eps_log: f64, bias_correction: bool) -> Result<LogAR1Model> {
    set.role().require(Role::Optimization, "fit_log_ar1")?;
    if !(eps_log > 0.0) {
        return Err(EmsError::InvalidArgument("eps_log must be > 0".into()));
    }
    let horizon = set.horizon();
    let logs: Vec<Vec<f64>> = set
        .scenarios()
        .iter()
        .map(|s| s.braking().map(|b| (b + eps_log).ln()).collect())
        .collect();
    let n = logs.len() as f64;
    let mean_at = |t: usize| logs.iter().map(|y| y[t]).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for t in 0..horizon {
        let (mx, my) = (mean_at(t), mean_at(t + 1));
        for y in &logs {
            let dx = y[t] - mx;
            sxy += dx * (y[t + 1] - my);
            sxx += dx * dx;
        }
    }
    let a = if sxx > 1e-12 * n * horizon as f64 {
        sxy / sxx
    } else {
        warn!("fit_log_ar1: regressor has no variance, using a = 1");
        1.0
    };
    let mut residuals = vec![Vec::new(); horizon + 1];
    for (t, z) in residuals.iter_mut().enumerate().skip(1) {
        *z = logs.iter().map(|y| y[t] - a * y[t - 1]).collect();
    }
    LogAR1Model::new(a, eps_log, residuals, bias_correction)
}

/// Point forecast of `w_{t+1}..w_{t+h}` from the observed `w_t`.
pub fn forecast(
    model: &LogAR1Model,
    profiles: &DeterministicProfiles,
    t: usize,
    w_t: &NoiseVector,
    h: usize,
) -> Result<Vec<NoiseVector>> {
    if h == 0 {
        return Err(EmsError::InvalidArgument("forecast horizon must be >= 1".into()));
    }
    if t + h > model.horizon() || t + h >= profiles.len() {
        return Err(EmsError::InvalidArgument(format!(
            "forecast from step {t} over {h} steps runs past the horizon"
        )));
    }
    let mut b = w_t.b;
    (t + 1..=t + h)
        .map(|s| {
            b = model.transition(b, model.drift(s)?);
            Ok(profiles.noise(s, b))
        })
        .collect()
}

/// Online law `μ^on_t(w_{t-1}, ·)`: every stored residual pushed through the
/// noise dynamics, uniformly weighted, then optionally re-quantized.
pub fn conditional_distribution(
    model: &LogAR1Model,
    t: usize,
    b_prev: f64,
    k_online: Option<usize>,
    seed: u64,
) -> Result<ConditionalDistribution> {
    if !(b_prev >= 0.0) {
        return Err(EmsError::InvalidArgument("previous braking must be >= 0".into()));
    }
    let z = model.residuals_at(t)?;
    // the transition is nondecreasing in z, so the support stays sorted
    let support: Vec<f64> = z.iter().map(|&z| model.transition(b_prev, z)).collect();
    let atoms = match k_online {
        Some(k) => kmeans_1d(&support, k.max(1), seed),
        None => Atoms::uniform(support),
    };
    Ok(ConditionalDistribution { t, atoms })
}

/// Where residual draws come from when simulating the log-AR(1) model.
#[derive(Debug, Clone)]
pub enum ResidualSource<'a> {
    /// Uniform over the stored residuals of each step.
    Empirical,
    /// Per-step discrete laws (index `t` drives `w_t`).
    Atoms(&'a [Atoms]),
}

/// Scenarios simulated from the log-AR(1) model, starting at `b0`.
pub fn sample_log_ar1(
    model: &LogAR1Model,
    profiles: &DeterministicProfiles,
    source: ResidualSource<'_>,
    role: Role,
    seed: u64,
    count: usize,
    b0: f64,
) -> Result<ScenarioSet> {
    if count == 0 {
        return Err(EmsError::InvalidArgument("scenario count must be >= 1".into()));
    }
    if profiles.len() != model.horizon() + 1 {
        return Err(EmsError::LengthMismatch("profiles and noise model differ in horizon".into()));
    }
    if let ResidualSource::Atoms(atoms) = &source {
        if atoms.len() != profiles.len() {
            return Err(EmsError::LengthMismatch("residual atoms and profiles differ in length".into()));
        }
    }
    let scenarios = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, Domain::Synthetic, i as u64);
            let mut b = b0;
            let mut braking = vec![b0];
            for t in 1..profiles.len() {
                let z = match &source {
                    ResidualSource::Empirical => {
                        let z = &model.residuals[t];
                        z[rng.random_range(0..z.len())]
                    }
                    ResidualSource::Atoms(atoms) => draw(&atoms[t], rng.random::<f64>()),
                };
                b = model.transition(b, z);
                braking.push(b);
            }
            profiles.with_braking(&braking)
        })
        .collect::<Vec<Scenario>>();
    ScenarioSet::new(role, seed, "log-ar1", scenarios)
}

//! Stand-in parameter calibration against the reference station.
//!
//! Air parameters: the reference trajectory is affine in `α` for fixed `β`
//! (PM10 never reaches the zero floor), so `α(β)` matching the mean is
//! solved exactly and `β` is bisected on the daily maximum.
//!
//! Comfort weight: smallest `λ` of a scan whose SDPO policy keeps the mean
//! PM10 of the optimization scenarios at or below the reference mean.

use std::sync::Arc;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assess::{default_initial_state, simulate, SimulationTrace};
use crate::error::{EmsError, Result};
use crate::model::{reference_policy, StationModel};
use crate::scenarios::{DeterministicProfiles, QuantizedMarginal, Role, ScenarioSet};
use crate::sdp::{backward_induction_sdpo, ControlMesh, OnlineLaw, SdpoPolicy, StateGrid};

pub const TARGET_MEAN_PM10: f64 = 108.0;
pub const TARGET_MAX_PM10: f64 = 182.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStats {
    pub mean_pm10: f64,
    pub max_pm10: f64,
    pub energy_kwh: f64,
    pub money_cost: f64,
}

/// Reference operation over the braking-free nominal day. The reference
/// station recovers no braking energy, so the braking draw is irrelevant.
pub fn reference_trace(m: &StationModel, profiles: &DeterministicProfiles) -> Result<SimulationTrace> {
    let scenario = profiles.nominal();
    let x0 = default_initial_state(m, &scenario.noise[0]);
    simulate(m, &mut reference_policy(m), &scenario, &x0)
}

pub fn reference_stats(m: &StationModel, profiles: &DeterministicProfiles) -> Result<ReferenceStats> {
    let tr = reference_trace(m, profiles)?;
    Ok(ReferenceStats {
        mean_pm10: tr.mean_pm10,
        max_pm10: tr.max_pm10,
        energy_kwh: tr.energy_drawn_kwh,
        money_cost: tr.money_cost,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AirCalibration {
    pub alpha: f64,
    pub beta: f64,
    pub stats: ReferenceStats,
}

fn with_air(m: &StationModel, alpha: f64, beta: f64) -> StationModel {
    let mut out = m.clone();
    out.air.alpha = alpha;
    out.air.beta = beta;
    out
}

/// `α` giving the target mean at this `β`, with the resulting maximum.
fn alpha_for_mean(m: &StationModel, profiles: &DeterministicProfiles, beta: f64, target_mean: f64) -> Result<(f64, f64)> {
    let at = |alpha| reference_trace(&with_air(m, alpha, beta), profiles);
    let (zero, one) = (at(0.0)?, at(1.0)?);
    let slope = one.mean_pm10 - zero.mean_pm10;
    if !(slope > 0.0) {
        return Err(EmsError::InvalidConfig("mean PM10 does not grow with the train emission".into()));
    }
    let alpha = (target_mean - zero.mean_pm10) / slope;
    if alpha < 0.0 {
        return Err(EmsError::InvalidConfig(format!(
            "target mean {target_mean} lies below the emission-free mean {:.3} at beta={beta}",
            zero.mean_pm10
        )));
    }
    Ok((alpha, at(alpha)?.max_pm10))
}

/// Fits `(α, β)` so the reference day has the target mean and maximum.
/// `β` is searched in `[0, beta_max]`.
pub fn calibrate_air(
    m: &StationModel,
    profiles: &DeterministicProfiles,
    target_mean: f64,
    target_max: f64,
    beta_max: f64,
) -> Result<AirCalibration> {
    let gap = |beta: f64| -> Result<(f64, f64)> {
        let (alpha, max) = alpha_for_mean(m, profiles, beta, target_mean)?;
        Ok((alpha, max - target_max))
    };
    // coarse scan for a sign change, then bisection
    const SCAN: usize = 40;
    let mut prev = (0.0, gap(0.0)?);
    let mut bracket = None;
    for i in 1..=SCAN {
        let beta = beta_max * i as f64 / SCAN as f64;
        let cur = match gap(beta) {
            Ok(g) => (beta, g),
            Err(_) => break,
        };
        if prev.1 .1 == 0.0 {
            bracket = Some((prev.0, prev.0));
            break;
        }
        if prev.1 .1.signum() != cur.1 .1.signum() {
            bracket = Some((prev.0, cur.0));
            break;
        }
        prev = cur;
    }
    let Some((mut lo, mut hi)) = bracket else {
        return Err(EmsError::InvalidConfig(format!(
            "no beta in [0, {beta_max}] reaches mean {target_mean} with max {target_max}"
        )));
    };
    let sign_lo = gap(lo)?.1.signum();
    for _ in 0..60 {
        if hi - lo <= 1e-12 * beta_max.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if gap(mid)?.1.signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let beta = 0.5 * (lo + hi);
    let (alpha, _) = gap(beta)?;
    let stats = reference_stats(&with_air(m, alpha, beta), profiles)?;
    Ok(AirCalibration { alpha, beta, stats })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaScanEntry {
    pub lambda: f64,
    pub mean_pm10: f64,
    pub mean_money_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaScan {
    pub reference_mean_pm10: f64,
    pub entries: Vec<LambdaScanEntry>,
    /// Smallest scanned `λ` meeting the reference mean, if any.
    pub selected: Option<f64>,
}

/// Scans `lambdas` in increasing order, stopping at the first that meets
/// the reference mean PM10 on `scenarios` (an optimization set).
pub fn lambda_scan(
    m: &StationModel,
    profiles: &Arc<DeterministicProfiles>,
    grid: &StateGrid,
    mesh: &ControlMesh,
    marginals: &Arc<QuantizedMarginal>,
    scenarios: &ScenarioSet,
    lambdas: &[f64],
) -> Result<LambdaScan> {
    scenarios.role().require(Role::Optimization, "lambda_scan")?;
    if lambdas.is_empty() || lambdas.windows(2).any(|w| !(w[0] < w[1])) || lambdas[0] < 0.0 {
        return Err(EmsError::InvalidArgument("lambda grid must be nonempty, nonnegative and increasing".into()));
    }
    let reference = reference_stats(m, profiles)?;
    let mut entries = Vec::new();
    let mut selected = None;
    for &lambda in lambdas {
        let mut model = m.clone();
        model.economics.lambda_comfort = lambda;
        let table = Arc::new(backward_induction_sdpo(&model, profiles, grid, mesh, marginals)?);
        let traces: Vec<SimulationTrace> = scenarios
            .scenarios()
            .par_iter()
            .map(|s| {
                let mut policy = SdpoPolicy::new(
                    model.clone(),
                    profiles.clone(),
                    table.clone(),
                    mesh.clone(),
                    OnlineLaw::Offline(marginals.clone()),
                )?;
                simulate(&model, &mut policy, s, &default_initial_state(&model, &s.noise[0]))
            })
            .collect::<Result<_>>()?;
        let n = traces.len() as f64;
        let entry = LambdaScanEntry {
            lambda,
            mean_pm10: traces.iter().map(|t| t.mean_pm10).sum::<f64>() / n,
            mean_money_cost: traces.iter().map(|t| t.money_cost).sum::<f64>() / n,
        };
        info!(
            "lambda {:e}: mean PM10 {:.3} (reference {:.3}), money {:.3}",
            lambda, entry.mean_pm10, reference.mean_pm10, entry.mean_money_cost
        );
        entries.push(entry);
        if entry.mean_pm10 <= reference.mean_pm10 {
            selected = Some(lambda);
            break;
        }
    }
    Ok(LambdaScan {
        reference_mean_pm10: reference.mean_pm10,
        entries,
        selected,
    })
}

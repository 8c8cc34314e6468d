//! Continuous-time check of the explicit Euler discretization.
//!
//! Inputs are piecewise constant on the decision grid. The reference
//! solution uses the Dormand–Prince 5(4) pair with proportional step-size
//! control, restarted at every grid point where the inputs jump.

use serde::{Deserialize, Serialize};

use crate::assess::SimulationTrace;
use crate::error::{EmsError, Result};
use crate::model::{step_pm10, step_soc, Control, NoiseVector, State, StationModel, TimeGrid};
use crate::scenarios::Scenario;

/// Relative errors are taken against `max(|reference|, EPS_DENOM)`.
pub const EPS_DENOM: f64 = 1e-9;

/// Control and noise held constant over each interval `[tΔ, (t+1)Δ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousInputs {
    pub delta_hours: f64,
    pub controls: Vec<Control>,
    /// Noise acting on interval `t`, i.e. `w_{t+1}`.
    pub noise: Vec<NoiseVector>,
}

impl ContinuousInputs {
    pub fn new(delta_hours: f64, controls: Vec<Control>, noise: Vec<NoiseVector>) -> Result<Self> {
        if controls.len() != noise.len() || controls.is_empty() {
            return Err(EmsError::LengthMismatch("controls and noise must cover the same intervals".into()));
        }
        if !(delta_hours > 0.0) {
            return Err(EmsError::InvalidArgument("delta_hours must be > 0".into()));
        }
        Ok(Self {
            delta_hours,
            controls,
            noise,
        })
    }

    /// Inputs replaying a closed-loop simulation.
    pub fn from_trace(m: &StationModel, trace: &SimulationTrace, scenario: &Scenario) -> Result<Self> {
        if scenario.len() != trace.controls.len() + 1 {
            return Err(EmsError::LengthMismatch("scenario and trace differ in length".into()));
        }
        Self::new(m.delta(), trace.controls.clone(), scenario.noise[1..].to_vec())
    }

    /// The same control at every step.
    pub fn constant(m: &StationModel, control: Control, scenario: &Scenario) -> Result<Self> {
        Self::new(m.delta(), vec![control; scenario.len() - 1], scenario.noise[1..].to_vec())
    }

    pub fn intervals(&self) -> usize {
        self.controls.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Sampling times (h).
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// Integration steps taken (accepted steps for the adaptive scheme).
    pub steps: usize,
    pub rejected_steps: usize,
    /// Euler steps that left the explicit stability region.
    pub unstable_steps: usize,
}

impl Trajectory {
    /// Every `stride`-th sample, starting at the first.
    pub fn subsample(&self, stride: usize) -> Trajectory {
        Trajectory {
            times: self.times.iter().step_by(stride).copied().collect(),
            states: self.states.iter().step_by(stride).copied().collect(),
            ..self.clone()
        }
    }
}

/// Forward Euler with step `Δ / substeps`, sampled on the Δ grid. With one
/// substep this iterates the discrete dynamics exactly.
pub fn integrate_euler(m: &StationModel, inputs: &ContinuousInputs, x0: &State, substeps: usize) -> Result<Trajectory> {
    if substeps == 0 {
        return Err(EmsError::InvalidArgument("substeps must be >= 1".into()));
    }
    let fine = TimeGrid {
        delta_hours: inputs.delta_hours / substeps as f64,
        ..m.time
    };
    let mut x = *x0;
    let mut states = vec![x];
    let mut unstable = 0;
    for (u, w) in inputs.controls.iter().zip(&inputs.noise) {
        for _ in 0..substeps {
            let pm = step_pm10(&m.air, &fine, x.pm10, u.u_v, w);
            x = State::new(step_soc(&m.battery, &fine, x.soc, u.u_b), pm.concentration);
            unstable += usize::from(!pm.stable);
        }
        states.push(x);
    }
    Ok(Trajectory {
        times: (0..states.len()).map(|t| t as f64 * inputs.delta_hours).collect(),
        states,
        steps: inputs.intervals() * substeps,
        rejected_steps: 0,
        unstable_steps: unstable,
    })
}

/// Forward Euler with a step of `stride` grid intervals, the inputs read at
/// the start of each step. Sampled every `stride` intervals.
pub fn integrate_euler_coarse(m: &StationModel, inputs: &ContinuousInputs, x0: &State, stride: usize) -> Result<Trajectory> {
    if stride == 0 || !inputs.intervals().is_multiple_of(stride) {
        return Err(EmsError::InvalidArgument(format!(
            "coarse stride {stride} must divide the {} intervals",
            inputs.intervals()
        )));
    }
    let coarse = TimeGrid {
        delta_hours: inputs.delta_hours * stride as f64,
        ..m.time
    };
    let mut x = *x0;
    let mut states = vec![x];
    let mut unstable = 0;
    for k in (0..inputs.intervals()).step_by(stride) {
        let (u, w) = (&inputs.controls[k], &inputs.noise[k]);
        let pm = step_pm10(&m.air, &coarse, x.pm10, u.u_v, w);
        x = State::new(step_soc(&m.battery, &coarse, x.soc, u.u_b), pm.concentration);
        unstable += usize::from(!pm.stable);
        states.push(x);
    }
    Ok(Trajectory {
        times: (0..states.len()).map(|t| t as f64 * coarse.delta_hours).collect(),
        states,
        steps: inputs.intervals() / stride,
        rejected_steps: 0,
        unstable_steps: unstable,
    })
}

fn derivative(m: &StationModel, u: &Control, w: &NoiseVector, y: [f64; 2]) -> [f64; 2] {
    let b = &m.battery;
    let a = &m.air;
    let ds = b.rho_c * u.u_b.max(0.0) + u.u_b.min(0.0) / b.rho_d;
    let k = a.ventilation_rate(u.u_v) + a.beta * w.n;
    let dc = -a.delta_dep * y[1] + a.alpha * w.n * w.n + k * (w.c_o - y[1]);
    [ds, dc]
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive Dormand–Prince integration, sampled on the Δ grid.
pub fn integrate_adaptive(
    m: &StationModel,
    inputs: &ContinuousInputs,
    x0: &State,
    rtol: f64,
    atol: f64,
) -> Result<Trajectory> {
    if !(rtol > 0.0 && atol > 0.0) {
        return Err(EmsError::InvalidArgument("rtol and atol must be > 0".into()));
    }
    let dt = inputs.delta_hours;
    let mut y = [x0.soc, x0.pm10];
    let mut states = vec![*x0];
    let (mut accepted, mut rejected) = (0, 0);
    let mut h = dt;
    for (i, (u, w)) in inputs.controls.iter().zip(&inputs.noise).enumerate() {
        let t_start = i as f64 * dt;
        let mut tau = 0.0;
        while tau < dt {
            h = h.min(dt - tau);
            if h < 1e-12 * dt {
                return Err(EmsError::StepUnderflow {
                    t_hours: t_start + tau,
                    step_hours: h,
                });
            }
            let mut k = [[0.0; 2]; 7];
            for s in 0..7 {
                let mut ys = y;
                for (j, kj) in k.iter().enumerate().take(s) {
                    for c in 0..2 {
                        ys[c] += h * A[s][j] * kj[c];
                    }
                }
                k[s] = derivative(m, u, w, ys);
                debug_assert!(C[s] <= 1.0);
            }
            let mut y5 = y;
            let mut err: f64 = 0.0;
            for c in 0..2 {
                let (mut hi, mut lo) = (0.0, 0.0);
                for s in 0..7 {
                    hi += B5[s] * k[s][c];
                    lo += B4[s] * k[s][c];
                }
                y5[c] += h * hi;
                let scale = atol + rtol * y[c].abs().max(y5[c].abs());
                err = err.max((h * (hi - lo)).abs() / scale);
            }
            if err <= 1.0 {
                y = y5;
                tau += h;
                accepted += 1;
            } else {
                rejected += 1;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= factor;
        }
        states.push(State::new(y[0], y[1]));
    }
    Ok(Trajectory {
        times: (0..states.len()).map(|t| t as f64 * dt).collect(),
        states,
        steps: accepted,
        rejected_steps: rejected,
        unstable_steps: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentError {
    /// Mean relative error (%).
    pub mean_pct: f64,
    /// Standard deviation of the relative error (%).
    pub std_pct: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationReport {
    pub soc: ComponentError,
    pub pm10: ComponentError,
    pub samples: usize,
    pub tested_steps: usize,
    pub reference_steps: usize,
}

fn component(tested: &[State], reference: &[State], f: fn(&State) -> f64) -> ComponentError {
    let rel: Vec<f64> = tested
        .iter()
        .zip(reference)
        .map(|(a, b)| 100.0 * (f(a) - f(b)).abs() / f(b).abs().max(EPS_DENOM))
        .collect();
    let n = rel.len() as f64;
    let mean = rel.iter().sum::<f64>() / n;
    let var = rel.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    ComponentError {
        mean_pct: mean,
        std_pct: var.sqrt(),
        max_abs: tested
            .iter()
            .zip(reference)
            .map(|(a, b)| (f(a) - f(b)).abs())
            .fold(0.0, f64::max),
    }
}

/// Relative error of `tested` against `reference` on a shared sampling.
pub fn compare(tested: &Trajectory, reference: &Trajectory) -> Result<IntegrationReport> {
    if tested.states.len() != reference.states.len() || tested.states.is_empty() {
        return Err(EmsError::LengthMismatch(format!(
            "trajectories have {} and {} samples",
            tested.states.len(),
            reference.states.len()
        )));
    }
    if tested.times.iter().zip(&reference.times).any(|(a, b)| (a - b).abs() > 1e-9) {
        return Err(EmsError::LengthMismatch("trajectories are sampled at different times".into()));
    }
    Ok(IntegrationReport {
        soc: component(&tested.states, &reference.states, |s| s.soc),
        pm10: component(&tested.states, &reference.states, |s| s.pm10),
        samples: tested.states.len(),
        tested_steps: tested.steps,
        reference_steps: reference.steps,
    })
}

/// Euler at Δ, its refinements, and a coarse step, all against the
/// adaptive reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationReport {
    pub euler: IntegrationReport,
    /// `(substeps, PM10 mean relative error %)`.
    pub refinements: Vec<(usize, f64)>,
    /// Successive error ratios under step halving.
    pub convergence_ratios: Vec<f64>,
    pub coarse_stride: usize,
    pub coarse: IntegrationReport,
    pub rtol: f64,
    pub atol: f64,
}

pub const DEFAULT_RTOL: f64 = 1e-10;
pub const DEFAULT_ATOL: f64 = 1e-10;

pub fn validate_discretization(
    m: &StationModel,
    inputs: &ContinuousInputs,
    x0: &State,
    coarse_stride: usize,
) -> Result<DiscretizationReport> {
    let reference = integrate_adaptive(m, inputs, x0, DEFAULT_RTOL, DEFAULT_ATOL)?;
    let euler = compare(&integrate_euler(m, inputs, x0, 1)?, &reference)?;
    let mut refinements = Vec::new();
    for substeps in [1, 2, 4, 8] {
        let r = compare(&integrate_euler(m, inputs, x0, substeps)?, &reference)?;
        refinements.push((substeps, r.pm10.mean_pct));
    }
    let convergence_ratios = refinements.windows(2).map(|w| w[0].1 / w[1].1).collect();
    let coarse = compare(
        &integrate_euler_coarse(m, inputs, x0, coarse_stride)?,
        &reference.subsample(coarse_stride),
    )?;
    Ok(DiscretizationReport {
        euler,
        refinements,
        convergence_ratios,
        coarse_stride,
        coarse,
        rtol: DEFAULT_RTOL,
        atol: DEFAULT_ATOL,
    })
}

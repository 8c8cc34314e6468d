//! Rolling-horizon model predictive control.
//!
//! Every `N_mpc` steps the controller forecasts the noise over the next
//! `h` steps, solves the resulting deterministic problem by dynamic
//! programming on the SDP grid, and replays the first controls of the plan.

mod milp;
mod mps;

use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

pub use milp::{build_milp, MilpArtifact, MilpLayout, MilpRow, MilpVariable, RowSense};
pub use mps::{export_mps, parse_mps, write_mps};

use crate::error::{EmsError, Result};
use crate::model::{admissible, dynamics, stage_cost, Control, NoiseVector, Policy, State, StationModel};
use crate::scenarios::{forecast, Atoms, DeterministicProfiles, LogAR1Model, Scenario};
use crate::sdp::{argmin, q_values, ControlMesh, Kernel, StateGrid, TableKind, ValueTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MpcSolver {
    DeterministicDp,
    /// Not bundled: export the subproblem with `export-milp` instead.
    ExternalMilp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    /// Steps between two reoptimizations (`N_mpc`).
    pub reoptimization_step: usize,
    /// Lookahead `h_t` in steps, cut at the end of the day.
    pub horizon: usize,
    pub solver: MpcSolver,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            reoptimization_step: 1,
            horizon: 60,
            solver: MpcSolver::DeterministicDp,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self, total_steps: usize) -> Result<()> {
        if self.reoptimization_step == 0 || self.horizon < self.reoptimization_step {
            return Err(EmsError::InvalidConfig(format!(
                "MPC needs 1 <= N_mpc <= h (got N_mpc = {}, h = {})",
                self.reoptimization_step, self.horizon
            )));
        }
        if self.horizon > total_steps {
            return Err(EmsError::InvalidConfig(format!(
                "MPC lookahead {} exceeds the horizon {total_steps}",
                self.horizon
            )));
        }
        Ok(())
    }
}

/// Open-loop plan of a deterministic subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicSolution {
    pub controls: Vec<Control>,
    /// States `x_{t0}..x_{t0+h}` along the plan.
    pub states: Vec<State>,
    /// Cost of the plan under the forecast.
    pub cost: f64,
}

/// Solves `min Σ L_t` over `h` steps from `x0` along the noise path
/// `forecast[s] = ŵ_{t0+s+1}`, by backward induction on `grid` followed by
/// a forward argmin rollout from the actual start state.
pub fn solve_deterministic(
    m: &StationModel,
    grid: &StateGrid,
    mesh: &ControlMesh,
    t0: usize,
    x0: &State,
    forecast: &[NoiseVector],
    h: usize,
) -> Result<DeterministicSolution> {
    if h == 0 || forecast.len() < h {
        return Err(EmsError::InvalidArgument(format!(
            "deterministic subproblem needs 1 <= h <= forecast length (h = {h}, forecast = {})",
            forecast.len()
        )));
    }
    if t0 + h > m.horizon() {
        return Err(EmsError::InvalidArgument(format!("subproblem from {t0} over {h} steps runs past the horizon")));
    }
    let layers = (h + 1) * grid.layer_len();
    let flat = StateGrid { braking: None, ..grid.clone() };
    let mut table = ValueTable::zeros(TableKind::Deterministic, flat.clone(), h);
    debug_assert_eq!(table.values().len(), layers);
    let mut kernel = Kernel::new(m, &flat, mesh);
    let mut energy = Vec::with_capacity(mesh.len());
    for s in (0..h).rev() {
        let w = &forecast[s];
        let pm = kernel.pm_moves(w);
        kernel.energy_costs(t0 + s, w, &Atoms::point(w.b), &mut energy);
        let (out, next) = table.pair_mut(s);
        kernel.step(t0 + s, &pm, &energy, next, out)?;
    }

    let b = &m.battery;
    let mut x = *x0;
    if x.soc < b.soc_min || x.soc > b.soc_max || x.pm10 < 0.0 {
        warn!("MPC start state {x:?} lies outside the grid span, clamping");
        x.soc = x.soc.clamp(b.soc_min, b.soc_max);
        x.pm10 = x.pm10.max(0.0);
    }
    let mut controls = Vec::with_capacity(h);
    let mut states = vec![x];
    let mut cost = 0.0;
    for (s, w) in forecast.iter().take(h).enumerate() {
        let t = t0 + s;
        let point = Atoms::point(w.b);
        let q = q_values(m, mesh, t, &x, w, &point, |next| table.interpolate(s + 1, next));
        let (idx, _) = argmin(q.into_iter()).ok_or(EmsError::NoAdmissibleControl {
            t,
            soc: x.soc,
            pm10: x.pm10,
        })?;
        let u = mesh.controls()[idx].control(m);
        let next = dynamics(m, t, &x, &u, w).state;
        cost += stage_cost(m, t, &x, &u, w, &next);
        controls.push(u);
        states.push(next);
        x = next;
    }
    Ok(DeterministicSolution { controls, states, cost })
}

/// Source of point forecasts `ŵ_{t+1}..ŵ_{t+h}` from the observation `w_t`.
pub trait Forecaster: Send {
    fn forecast(&mut self, t: usize, w_t: &NoiseVector, h: usize) -> Result<Vec<NoiseVector>>;
}

/// Log-AR(1) point forecast.
#[derive(Debug, Clone)]
pub struct LogAR1Forecaster {
    pub noise: Arc<LogAR1Model>,
    pub profiles: Arc<DeterministicProfiles>,
}

impl Forecaster for LogAR1Forecaster {
    fn forecast(&mut self, t: usize, w_t: &NoiseVector, h: usize) -> Result<Vec<NoiseVector>> {
        forecast(&self.noise, &self.profiles, t, w_t, h)
    }
}

/// Reads the realized scenario. Diagnostic only: it is anticipative.
#[derive(Debug, Clone)]
pub struct PerfectForecaster {
    pub scenario: Scenario,
}

impl Forecaster for PerfectForecaster {
    fn forecast(&mut self, t: usize, _w_t: &NoiseVector, h: usize) -> Result<Vec<NoiseVector>> {
        self.scenario
            .noise
            .get(t + 1..t + 1 + h)
            .map(<[NoiseVector]>::to_vec)
            .ok_or_else(|| EmsError::InvalidArgument(format!("perfect forecast from {t} over {h} steps runs past the scenario")))
    }
}

/// Interpolates between the realization (`scale = 0`) and a base forecast
/// (`scale = 1`) in the braking component. Diagnostic only.
pub struct ScaledErrorForecaster<F: Forecaster> {
    pub scenario: Scenario,
    pub base: F,
    pub scale: f64,
}

impl<F: Forecaster> Forecaster for ScaledErrorForecaster<F> {
    fn forecast(&mut self, t: usize, w_t: &NoiseVector, h: usize) -> Result<Vec<NoiseVector>> {
        let mut f = self.base.forecast(t, w_t, h)?;
        for (s, w) in f.iter_mut().enumerate() {
            let truth = self.scenario.noise[t + 1 + s].b;
            w.b = (truth + self.scale * (w.b - truth)).max(0.0);
        }
        Ok(f)
    }
}

/// Rolling-horizon controller. Holds a plan cache, so use one instance
/// per simulated scenario.
pub struct MpcController {
    model: StationModel,
    grid: Arc<StateGrid>,
    mesh: Arc<ControlMesh>,
    cfg: MpcConfig,
    forecaster: Box<dyn Forecaster>,
    plan: Vec<Control>,
    plan_start: usize,
    last_key: Option<(usize, State, NoiseVector)>,
    reoptimizations: usize,
}

impl MpcController {
    pub fn new(
        model: StationModel,
        grid: Arc<StateGrid>,
        mesh: Arc<ControlMesh>,
        cfg: MpcConfig,
        forecaster: Box<dyn Forecaster>,
    ) -> Result<Self> {
        model.validate()?;
        cfg.validate(model.horizon())?;
        mesh.validate(&model)?;
        if cfg.solver == MpcSolver::ExternalMilp {
            return Err(EmsError::InvalidConfig(
                "no MILP solver is bundled; use the deterministic-dp solver or export the subproblem".into(),
            ));
        }
        Ok(Self {
            model,
            grid,
            mesh,
            cfg,
            forecaster,
            plan: Vec::new(),
            plan_start: 0,
            last_key: None,
            reoptimizations: 0,
        })
    }

    /// Number of deterministic solves performed so far.
    pub fn reoptimizations(&self) -> usize {
        self.reoptimizations
    }

    fn reoptimize(&mut self, t: usize, x: &State, w: &NoiseVector) -> Result<()> {
        let h = self.cfg.horizon.min(self.model.horizon() - t);
        let f = self.forecaster.forecast(t, w, h)?;
        let sol = solve_deterministic(&self.model, &self.grid, &self.mesh, t, x, &f, h)?;
        self.plan = sol.controls;
        self.plan_start = t;
        self.last_key = Some((t, *x, *w));
        self.reoptimizations += 1;
        Ok(())
    }
}

impl Policy for MpcController {
    fn name(&self) -> &str {
        "MPC"
    }

    fn decide(&mut self, t: usize, x: &State, w: &NoiseVector) -> Result<Control> {
        if t >= self.model.horizon() {
            return Err(EmsError::InvalidArgument(format!("decision step {t} is past the horizon")));
        }
        let cached = self.last_key == Some((t, *x, *w));
        // a stored control is replayed only inside the current window; the
        // SOC path is noise-free, so it stays admissible unless the caller
        // jumped to another state
        let in_window = !self.plan.is_empty()
            && t >= self.plan_start
            && t - self.plan_start < self.cfg.reoptimization_step.min(self.plan.len());
        let replay_ok = in_window
            && (t > self.plan_start || cached)
            && admissible(&self.model, x, &self.plan[t - self.plan_start]);
        if !replay_ok {
            self.reoptimize(t, x, w)?;
        }
        Ok(self.plan[t - self.plan_start])
    }
}

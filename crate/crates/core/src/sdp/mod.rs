//! Stochastic dynamic programming by backward induction on a state grid.
//!
//! Two noise models are supported. SDPO treats the braking power as
//! independent across steps, with one quantized law per step. SDPA keeps
//! the log-AR(1) correlation by adding the last braking value to the state.

mod bellman;
mod grid;
mod table;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use bellman::{expected_energy_cost, TIE_TOLERANCE};
pub use grid::{Axis, ControlMesh, MeshControl, StateGrid};
pub use table::{table_paths, TableKind, ValueTable, ValueTableHeader};

pub(crate) use bellman::{argmin, corner, q_values, Kernel};

use crate::error::{EmsError, Result};
use crate::model::{Control, NoiseVector, Policy, State, StationModel};
use crate::scenarios::{conditional_distribution, Atoms, DeterministicProfiles, LogAR1Model, QuantizedMarginal};

/// Discretization of the dynamic programs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdpConfig {
    pub n_soc: usize,
    pub n_pm10: usize,
    pub n_braking: usize,
    /// Battery power levels of the offline mesh (0 is always added).
    pub battery_levels: usize,
    /// Atoms per step of the offline braking marginals.
    pub k_offline: usize,
    /// Atoms per step of the log-AR(1) residual laws.
    pub k_residual: usize,
    /// Atoms of the online conditional law; `None` keeps every residual.
    pub k_online: Option<usize>,
    /// Upper PM10 grid bound; `None` means twice the reference maximum.
    pub pm10_top: Option<f64>,
    /// Upper braking grid bound; `None` means the largest observed value.
    pub braking_top: Option<f64>,
    /// Subdivision factor of the online battery mesh.
    pub online_refine: usize,
    /// Use the offline marginals online instead of the conditional law.
    pub online_uses_offline_law: bool,
}

impl Default for SdpConfig {
    fn default() -> Self {
        Self {
            n_soc: 51,
            n_pm10: 51,
            n_braking: 21,
            battery_levels: 21,
            k_offline: 10,
            k_residual: 10,
            k_online: Some(20),
            pm10_top: None,
            braking_top: None,
            online_refine: 1,
            online_uses_offline_law: false,
        }
    }
}

impl SdpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_soc < 2 || self.n_pm10 < 2 || self.n_braking < 2 || self.battery_levels < 2 {
            return Err(EmsError::InvalidConfig("grid sizes and battery levels must be >= 2".into()));
        }
        if self.k_offline == 0 || self.k_residual == 0 || self.k_online == Some(0) || self.online_refine == 0 {
            return Err(EmsError::InvalidConfig("atom counts and refinement must be >= 1".into()));
        }
        if self.pm10_top.is_some_and(|c| !(c > 0.0)) || self.braking_top.is_some_and(|b| !(b > 0.0)) {
            return Err(EmsError::InvalidConfig("grid bounds must be > 0".into()));
        }
        Ok(())
    }
}

fn check_inputs(m: &StationModel, profiles: &DeterministicProfiles, mesh: &ControlMesh) -> Result<()> {
    m.validate()?;
    mesh.validate(m)?;
    if profiles.len() != m.horizon() + 1 {
        return Err(EmsError::LengthMismatch(format!(
            "profiles cover {} steps, model needs {}",
            profiles.len(),
            m.horizon() + 1
        )));
    }
    Ok(())
}

/// Backward induction with independent braking laws `μ_{t+1}`.
pub fn backward_induction_sdpo(
    m: &StationModel,
    profiles: &DeterministicProfiles,
    grid: &StateGrid,
    mesh: &ControlMesh,
    marginals: &QuantizedMarginal,
) -> Result<ValueTable> {
    check_inputs(m, profiles, mesh)?;
    if grid.braking.is_some() {
        return Err(EmsError::InvalidArgument("SDPO grid must not carry a braking axis".into()));
    }
    if marginals.horizon() != m.horizon() {
        return Err(EmsError::LengthMismatch("marginals and model differ in horizon".into()));
    }
    let mut table = ValueTable::zeros(TableKind::Sdpo, grid.clone(), m.horizon());
    let mut kernel = Kernel::new(m, grid, mesh);
    let mut energy = Vec::with_capacity(mesh.len());
    for t in (0..m.horizon()).rev() {
        let w_next = profiles.noise(t + 1, 0.0);
        let pm = kernel.pm_moves(&w_next);
        kernel.energy_costs(t, &w_next, marginals.at(t + 1), &mut energy);
        let (out, next) = table.pair_mut(t);
        kernel.step(t, &pm, &energy, next, out)?;
    }
    Ok(table)
}

/// Law of `b_{t+1}` given `b_t`: the residual atoms pushed through the
/// noise dynamics.
pub fn successor_atoms(noise: &LogAR1Model, b: f64, residuals: &Atoms) -> Atoms {
    Atoms {
        support: residuals.support.iter().map(|&z| noise.transition(b, z)).collect(),
        probs: residuals.probs.clone(),
    }
}

/// Weights `β_g` on the braking nodes that interpolate linearly at every atom.
pub(crate) fn mix_weights(axis: &Axis, atoms: &Atoms) -> Vec<f64> {
    let mut weights = vec![0.0; axis.len()];
    for (b, p) in atoms.iter() {
        let (g, psi) = axis.bracket(b);
        weights[g] += p * (1.0 - psi);
        weights[g + 1] += p * psi;
    }
    weights
}

/// Backward induction on the state augmented with the last braking value.
pub fn backward_induction_sdpa(
    m: &StationModel,
    profiles: &DeterministicProfiles,
    grid: &StateGrid,
    mesh: &ControlMesh,
    noise: &LogAR1Model,
    residual_atoms: &[Atoms],
) -> Result<ValueTable> {
    check_inputs(m, profiles, mesh)?;
    let Some(axis) = grid.braking.as_ref() else {
        return Err(EmsError::InvalidArgument("SDPA grid needs a braking axis".into()));
    };
    if noise.horizon() != m.horizon() || residual_atoms.len() != m.horizon() + 1 {
        return Err(EmsError::LengthMismatch("noise model and model differ in horizon".into()));
    }
    let mut table = ValueTable::zeros(TableKind::Sdpa, grid.clone(), m.horizon());
    let mut kernel = Kernel::new(m, grid, mesh);
    let stride = grid.layer_len();
    let mut energy = Vec::with_capacity(mesh.len());
    let mut mixed = vec![0.0; stride];
    for t in (0..m.horizon()).rev() {
        let w_next = profiles.noise(t + 1, 0.0);
        let pm = kernel.pm_moves(&w_next);
        let (out, next) = table.pair_mut(t);
        for (g, &b) in axis.nodes().iter().enumerate() {
            let atoms = successor_atoms(noise, b, &residual_atoms[t + 1]);
            kernel.energy_costs(t, &w_next, &atoms, &mut energy);
            mixed.fill(0.0);
            for (h, &beta) in mix_weights(axis, &atoms).iter().enumerate() {
                if beta != 0.0 {
                    for (acc, v) in mixed.iter_mut().zip(&next[h * stride..(h + 1) * stride]) {
                        *acc += beta * v;
                    }
                }
            }
            kernel.step(t, &pm, &energy, &mixed, &mut out[g * stride..(g + 1) * stride])?;
        }
    }
    Ok(table)
}

/// Braking law used online by SDPO.
#[derive(Debug, Clone)]
pub enum OnlineLaw {
    /// The offline marginals.
    Offline(Arc<QuantizedMarginal>),
    /// The log-AR(1) law conditioned on the last observation.
    Conditional {
        noise: Arc<LogAR1Model>,
        k_online: Option<usize>,
        seed: u64,
    },
}

fn check_step(table: &ValueTable, t: usize) -> Result<()> {
    if t >= table.horizon {
        return Err(EmsError::InvalidArgument(format!(
            "decision step {t} is outside 0..{}",
            table.horizon
        )));
    }
    Ok(())
}

fn pick(m: &StationModel, mesh: &ControlMesh, t: usize, x: &State, q: Vec<Option<f64>>) -> Result<Control> {
    match argmin(q.into_iter()) {
        Some((idx, _)) => Ok(mesh.controls()[idx].control(m)),
        None => Err(EmsError::NoAdmissibleControl {
            t,
            soc: x.soc,
            pm10: x.pm10,
        }),
    }
}

/// SDPO state feedback: one-step lookahead on the SDPO value table.
#[derive(Debug, Clone)]
pub struct SdpoPolicy {
    model: StationModel,
    profiles: Arc<DeterministicProfiles>,
    table: Arc<ValueTable>,
    mesh: ControlMesh,
    law: OnlineLaw,
}

impl SdpoPolicy {
    pub fn new(
        model: StationModel,
        profiles: Arc<DeterministicProfiles>,
        table: Arc<ValueTable>,
        mesh: ControlMesh,
        law: OnlineLaw,
    ) -> Result<Self> {
        check_inputs(&model, &profiles, &mesh)?;
        if table.kind != TableKind::Sdpo || table.horizon != model.horizon() {
            return Err(EmsError::InvalidArgument("SDPO policy needs an SDPO table of the model's horizon".into()));
        }
        Ok(Self {
            model,
            profiles,
            table,
            mesh,
            law,
        })
    }

    /// Braking law of `w_{t+1}` given the observation `w_t`.
    pub fn online_law(&self, t: usize, w: &NoiseVector) -> Result<Atoms> {
        Ok(match &self.law {
            OnlineLaw::Offline(q) => q.at(t + 1).clone(),
            OnlineLaw::Conditional { noise, k_online, seed } => {
                conditional_distribution(noise, t + 1, w.b, *k_online, *seed)?.atoms
            }
        })
    }

    /// One-step lookahead value of every mesh control (`None` if inadmissible).
    pub fn q_values(&self, t: usize, x: &State, w: &NoiseVector) -> Result<Vec<Option<f64>>> {
        check_step(&self.table, t)?;
        let atoms = self.online_law(t, w)?;
        let w_next = self.profiles.noise(t + 1, 0.0);
        Ok(q_values(&self.model, &self.mesh, t, x, &w_next, &atoms, |next| {
            self.table.interpolate(t + 1, next)
        }))
    }

    pub fn mesh(&self) -> &ControlMesh {
        &self.mesh
    }
}

impl Policy for SdpoPolicy {
    fn name(&self) -> &str {
        "SDPO"
    }

    fn decide(&mut self, t: usize, x: &State, w: &NoiseVector) -> Result<Control> {
        let q = self.q_values(t, x, w)?;
        pick(&self.model, &self.mesh, t, x, q)
    }
}

/// SDPA state feedback on the augmented value table.
#[derive(Debug, Clone)]
pub struct SdpaPolicy {
    model: StationModel,
    profiles: Arc<DeterministicProfiles>,
    table: Arc<ValueTable>,
    mesh: ControlMesh,
    noise: Arc<LogAR1Model>,
    residual_atoms: Arc<Vec<Atoms>>,
}

impl SdpaPolicy {
    pub fn new(
        model: StationModel,
        profiles: Arc<DeterministicProfiles>,
        table: Arc<ValueTable>,
        mesh: ControlMesh,
        noise: Arc<LogAR1Model>,
        residual_atoms: Arc<Vec<Atoms>>,
    ) -> Result<Self> {
        check_inputs(&model, &profiles, &mesh)?;
        if table.kind != TableKind::Sdpa || table.horizon != model.horizon() || table.grid.braking.is_none() {
            return Err(EmsError::InvalidArgument("SDPA policy needs an SDPA table of the model's horizon".into()));
        }
        if residual_atoms.len() != model.horizon() + 1 {
            return Err(EmsError::LengthMismatch("residual atoms and model differ in horizon".into()));
        }
        Ok(Self {
            model,
            profiles,
            table,
            mesh,
            noise,
            residual_atoms,
        })
    }

    pub fn q_values(&self, t: usize, x: &State, w: &NoiseVector) -> Result<Vec<Option<f64>>> {
        check_step(&self.table, t)?;
        let axis = self.table.grid.braking.as_ref().expect("checked at construction");
        let atoms = successor_atoms(&self.noise, w.b, &self.residual_atoms[t + 1]);
        let weights = mix_weights(axis, &atoms);
        let w_next = self.profiles.noise(t + 1, 0.0);
        Ok(q_values(&self.model, &self.mesh, t, x, &w_next, &atoms, |next| {
            self.table
                .interpolate_mixed(t + 1, &corner(&self.table.grid, next), &weights)
        }))
    }
}

impl Policy for SdpaPolicy {
    fn name(&self) -> &str {
        "SDPA"
    }

    fn decide(&mut self, t: usize, x: &State, w: &NoiseVector) -> Result<Control> {
        let q = self.q_values(t, x, w)?;
        pick(&self.model, &self.mesh, t, x, q)
    }
}

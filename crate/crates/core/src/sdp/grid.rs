//! State grids and control meshes for the Bellman recursion.

use serde::{Deserialize, Serialize};

use crate::error::{EmsError, Result};
use crate::model::{BatteryParams, Control, StationModel, VentMode};

/// Strictly increasing grid nodes along one state coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Axis {
    nodes: Vec<f64>,
}

impl Axis {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(EmsError::InvalidArgument("an axis needs at least 2 nodes".into()));
        }
        if nodes.iter().any(|v| !v.is_finite()) || nodes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(EmsError::InvalidArgument("axis nodes must be finite and strictly increasing".into()));
        }
        Ok(Self { nodes })
    }

    /// `n` equally spaced nodes; the end points are exact.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || !(lo < hi) {
            return Err(EmsError::InvalidArgument(format!(
                "uniform axis needs n >= 2 and lo < hi (got n = {n}, [{lo}, {hi}])"
            )));
        }
        let mut nodes: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        nodes[n - 1] = hi;
        Self::new(nodes)
    }

    /// Nodes equally spaced in `log(x + offset)` from 0 to `hi`.
    pub fn log_spaced(hi: f64, n: usize, offset: f64) -> Result<Self> {
        if n < 2 || !(hi > 0.0) || !(offset > 0.0) {
            return Err(EmsError::InvalidArgument("log axis needs n >= 2, hi > 0 and offset > 0".into()));
        }
        let (a, b) = (offset.ln(), (hi + offset).ln());
        let mut nodes: Vec<f64> = (0..n)
            .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp() - offset)
            .collect();
        nodes[0] = 0.0;
        nodes[n - 1] = hi;
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.nodes[0]
    }

    pub fn hi(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Cell `k <= len - 2` and weight `θ ∈ [0, 1]` of `x` after clamping to
    /// the axis span. Nodes map to `θ = 0` except the last one (`θ = 1`).
    #[inline]
    pub fn bracket(&self, x: f64) -> (usize, f64) {
        let n = self.nodes.len();
        let x = x.clamp(self.nodes[0], self.nodes[n - 1]);
        let k = self.nodes.partition_point(|&v| v <= x).saturating_sub(1).min(n - 2);
        let (a, b) = (self.nodes[k], self.nodes[k + 1]);
        (k, (x - a) / (b - a))
    }
}

/// Tensor grid over (SOC, PM10) and, for the augmented problem, braking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    pub soc: Axis,
    pub pm10: Axis,
    pub braking: Option<Axis>,
}

impl StateGrid {
    /// SOC nodes spanning the admissible range and PM10 nodes on `[0, pm10_top]`.
    pub fn for_model(m: &StationModel, n_soc: usize, n_pm10: usize, pm10_top: f64) -> Result<Self> {
        Ok(Self {
            soc: Axis::uniform(m.battery.soc_min, m.battery.soc_max, n_soc)?,
            pm10: Axis::uniform(0.0, pm10_top, n_pm10)?,
            braking: None,
        })
    }

    pub fn with_braking(mut self, axis: Axis) -> Self {
        self.braking = Some(axis);
        self
    }

    pub fn n_braking(&self) -> usize {
        self.braking.as_ref().map_or(1, Axis::len)
    }

    /// Nodes of one (SOC, PM10) layer.
    pub fn layer_len(&self) -> usize {
        self.soc.len() * self.pm10.len()
    }

    pub fn len(&self) -> usize {
        self.layer_len() * self.n_braking()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A candidate control: battery power (kW) and ventilation mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshControl {
    pub u_b: f64,
    pub mode: VentMode,
}

impl MeshControl {
    pub fn control(&self, m: &StationModel) -> Control {
        Control::with_mode(&m.ventilation, self.u_b, self.mode)
    }
}

/// Finite control set, kept in tie-break order: smaller `|u_b|` first, then
/// low ventilation, then smaller `u_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlMesh {
    controls: Vec<MeshControl>,
    /// Distinct battery powers, ascending.
    levels: Vec<f64>,
    /// Index into `levels` for every control.
    level_of: Vec<usize>,
}

fn priority(a: &MeshControl, b: &MeshControl) -> std::cmp::Ordering {
    a.u_b
        .abs()
        .total_cmp(&b.u_b.abs())
        .then(a.mode.cmp(&b.mode))
        .then(a.u_b.total_cmp(&b.u_b))
}

impl ControlMesh {
    /// Explicit control list. Must contain the idle control `(0, low)`.
    pub fn explicit(mut controls: Vec<MeshControl>) -> Result<Self> {
        if controls.iter().any(|c| !c.u_b.is_finite()) {
            return Err(EmsError::InvalidArgument("mesh battery powers must be finite".into()));
        }
        if !controls.iter().any(|c| c.u_b == 0.0 && c.mode == VentMode::Low) {
            return Err(EmsError::InvalidArgument("control mesh must contain (0, low)".into()));
        }
        controls.sort_by(priority);
        controls.dedup();
        let mut levels: Vec<f64> = controls.iter().map(|c| c.u_b).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        let level_of = controls
            .iter()
            .map(|c| levels.partition_point(|&v| v < c.u_b))
            .collect();
        Ok(Self {
            controls,
            levels,
            level_of,
        })
    }

    /// `levels` equally spaced battery powers over the power range, plus 0,
    /// crossed with both ventilation modes.
    pub fn uniform(battery: &BatteryParams, levels: usize) -> Result<Self> {
        let axis = Axis::uniform(battery.power_min, battery.power_max, levels)?;
        Self::from_levels(axis.nodes().iter().copied())
    }

    fn from_levels(levels: impl Iterator<Item = f64>) -> Result<Self> {
        let mut controls = Vec::new();
        for u_b in levels.chain(std::iter::once(0.0)) {
            for mode in VentMode::ALL {
                controls.push(MeshControl { u_b, mode });
            }
        }
        Self::explicit(controls)
    }

    /// Subdivides every gap between consecutive battery levels into
    /// `factor` parts. Ventilation modes are crossed as before.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(EmsError::InvalidArgument("refinement factor must be >= 1".into()));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let mut out = Vec::new();
        for w in self.levels.windows(2) {
            for s in 0..factor {
                out.push(w[0] + (w[1] - w[0]) * s as f64 / factor as f64);
            }
        }
        out.push(*self.levels.last().unwrap());
        Self::from_levels(out.into_iter())
    }

    pub fn validate(&self, m: &StationModel) -> Result<()> {
        let b = &m.battery;
        match self.controls.iter().find(|c| c.u_b < b.power_min || c.u_b > b.power_max) {
            Some(c) => Err(EmsError::InvalidArgument(format!(
                "mesh battery power {} kW is outside [{}, {}]",
                c.u_b, b.power_min, b.power_max
            ))),
            None => Ok(()),
        }
    }

    pub fn controls(&self) -> &[MeshControl] {
        &self.controls
    }

    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn level_of(&self, idx: usize) -> usize {
        self.level_of[idx]
    }
}

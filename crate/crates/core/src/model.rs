//! Physical model of the station microgrid.
//!
//! Two state variables are tracked: the battery state of charge (kWh) and
//! the PM10 concentration of the station air (µg/m³). Controls are the
//! battery power (kW, positive when charging) and the ventilation mode.
//! The noise vector gathers station demand, recoverable braking power,
//! train arrival rate and outdoor PM10.
//!
//! Timing follows the decision-hazard convention: the control `u_t` is
//! chosen at the start of interval `[t, t+1)` knowing `w_t`, and the
//! dynamics and cost of that interval are driven by `w_{t+1}`.

use serde::{Deserialize, Serialize};

use crate::error::{EmsError, Result};

/// Uniform decision grid over one day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    /// Step length (h).
    pub delta_hours: f64,
    /// Number of decision steps `T`.
    pub horizon_steps: usize,
    /// Total simulated duration (h).
    pub day_length: f64,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            delta_hours: 2.0 / 60.0,
            horizon_steps: 720,
            day_length: 24.0,
        }
    }
}

impl TimeGrid {
    /// A grid of `steps` equal intervals covering `day_length` hours.
    pub fn with_steps(steps: usize, day_length: f64) -> Self {
        Self {
            delta_hours: day_length / steps as f64,
            horizon_steps: steps,
            day_length,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon_steps == 0 {
            return Err(EmsError::InvalidConfig("horizon_steps must be >= 1".into()));
        }
        if !(self.delta_hours > 0.0) {
            return Err(EmsError::InvalidConfig("delta_hours must be > 0".into()));
        }
        let span = self.delta_hours * self.horizon_steps as f64;
        if (span - self.day_length).abs() > 1e-9 * self.day_length.max(1.0) {
            return Err(EmsError::InvalidConfig(format!(
                "horizon_steps x delta_hours = {span} h does not cover day_length = {} h",
                self.day_length
            )));
        }
        Ok(())
    }

    /// Hour of day at the middle of the interval that noise `w_t` describes,
    /// i.e. `[t-1, t)`. Index 0 wraps to the end of the previous day.
    pub fn noise_hour(&self, t: usize) -> f64 {
        let h = (t as f64 - 0.5) * self.delta_hours;
        h.rem_euclid(self.day_length)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    /// Charge efficiency.
    pub rho_c: f64,
    /// Discharge efficiency.
    pub rho_d: f64,
    /// Nominal capacity (kWh).
    pub capacity: f64,
    /// Lower state-of-charge bound (kWh).
    pub soc_min: f64,
    /// Upper state-of-charge bound (kWh).
    pub soc_max: f64,
    /// Maximum discharge power (kW, negative).
    pub power_min: f64,
    /// Maximum charge power (kW).
    pub power_max: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            rho_c: 0.95,
            rho_d: 0.95,
            capacity: 100.0,
            soc_min: 30.0,
            soc_max: 90.0,
            power_min: -100.0,
            power_max: 100.0,
        }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<()> {
        let eff_ok = |r: f64| r > 0.0 && r <= 1.0;
        if !eff_ok(self.rho_c) || !eff_ok(self.rho_d) {
            return Err(EmsError::InvalidConfig("battery efficiencies must lie in (0, 1]".into()));
        }
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= self.capacity) {
            return Err(EmsError::InvalidConfig(
                "battery bounds must satisfy 0 <= soc_min < soc_max <= capacity".into(),
            ));
        }
        if !(self.power_min < 0.0 && self.power_max > 0.0) {
            return Err(EmsError::InvalidConfig(
                "battery power bounds must satisfy power_min < 0 < power_max".into(),
            ));
        }
        Ok(())
    }

    pub fn soc_mid(&self) -> f64 {
        0.5 * (self.soc_min + self.soc_max)
    }
}

/// Single-zone PM10 mass balance coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AirParams {
    /// Particle generation per squared train rate (µg·h/m³).
    pub alpha: f64,
    /// Deposition rate (1/h).
    pub delta_dep: f64,
    /// Natural ventilation induced per train (air changes per train).
    pub beta: f64,
    /// Ventilation efficiency (m³ of air moved per kWh).
    pub rho_v: f64,
    /// Station volume (m³).
    pub volume: f64,
}

impl AirParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [self.alpha, self.delta_dep, self.beta, self.rho_v];
        if fields.iter().any(|v| !(*v >= 0.0)) || !(self.volume > 0.0) {
            return Err(EmsError::InvalidConfig(
                "air parameters must be >= 0 and volume > 0".into(),
            ));
        }
        Ok(())
    }

    /// Air-change rate (1/h) produced by a ventilation power (kW).
    pub fn ventilation_rate(&self, u_v: f64) -> f64 {
        self.rho_v / self.volume * u_v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VentMode {
    Low,
    High,
}

impl VentMode {
    pub const ALL: [VentMode; 2] = [VentMode::Low, VentMode::High];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VentilationModes {
    /// Electrical power in low mode (kW).
    pub power_low: f64,
    /// Electrical power in high mode (kW).
    pub power_high: f64,
}

impl VentilationModes {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.power_low && self.power_low < self.power_high) {
            return Err(EmsError::InvalidConfig(
                "ventilation powers must satisfy 0 <= power_low < power_high".into(),
            ));
        }
        Ok(())
    }

    pub fn power(&self, mode: VentMode) -> f64 {
        match mode {
            VentMode::Low => self.power_low,
            VentMode::High => self.power_high,
        }
    }

    pub fn mode_of(&self, u_v: f64) -> Option<VentMode> {
        if u_v == self.power_low {
            Some(VentMode::Low)
        } else if u_v == self.power_high {
            Some(VentMode::High)
        } else {
            None
        }
    }

    /// Airflow (m³/s) delivered at ventilation power `u_v`.
    pub fn airflow(&self, air: &AirParams, u_v: f64) -> f64 {
        air.rho_v * u_v / 3600.0
    }
}

/// Half-open window `[start, end)` in hours of day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourWindow {
    pub start: f64,
    pub end: f64,
}

impl HourWindow {
    pub fn contains(&self, hour: f64) -> bool {
        self.start <= hour && hour < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tariff {
    /// Off-peak / peak energy prices (€/kWh) with peak windows.
    TwoTier {
        off_peak: f64,
        peak: f64,
        peak_windows: Vec<HourWindow>,
    },
    /// Explicit per-step prices `p_0..p_T` in €/kW over one step.
    PerStep { prices: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconomicParams {
    pub tariff: Tariff,
    /// Price of discomfort (€·m³/µg per step).
    pub lambda_comfort: f64,
}

impl Default for EconomicParams {
    fn default() -> Self {
        Self {
            tariff: Tariff::TwoTier {
                off_peak: 0.07,
                peak: 0.12,
                peak_windows: vec![HourWindow {
                    start: 17.5,
                    end: 19.5,
                }],
            },
            lambda_comfort: DEFAULT_LAMBDA,
        }
    }
}

/// Selected by the λ scan of `calibrate` on the default station.
pub const DEFAULT_LAMBDA: f64 = 5.0e-3;

/// Calibrated so that the reference operation reproduces a daily mean PM10
/// of 108 µg/m³ and a maximum of 182 µg/m³ (see `calibrate`).
pub const DEFAULT_ALPHA: f64 = 0.592_785_391_492_726_8;
pub const DEFAULT_BETA: f64 = 0.085_573_349_705_737_18;

/// Complete parameter set of the station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationModel {
    pub time: TimeGrid,
    pub battery: BatteryParams,
    pub air: AirParams,
    pub ventilation: VentilationModes,
    pub economics: EconomicParams,
}

impl Default for StationModel {
    fn default() -> Self {
        // 60 m³/s in high mode: rho_v * power_high / 3600 = 60.
        let power_high = 30.0;
        Self {
            time: TimeGrid::default(),
            battery: BatteryParams::default(),
            air: AirParams {
                alpha: DEFAULT_ALPHA,
                delta_dep: 0.2,
                beta: DEFAULT_BETA,
                rho_v: 60.0 * 3600.0 / power_high,
                volume: 72_000.0,
            },
            ventilation: VentilationModes {
                power_low: power_high / 3.0,
                power_high,
            },
            economics: EconomicParams::default(),
        }
    }
}

impl StationModel {
    pub fn validate(&self) -> Result<()> {
        self.time.validate()?;
        self.battery.validate()?;
        self.air.validate()?;
        self.ventilation.validate()?;
        if !(self.economics.lambda_comfort >= 0.0) {
            return Err(EmsError::InvalidConfig("lambda_comfort must be >= 0".into()));
        }
        match &self.economics.tariff {
            Tariff::TwoTier {
                off_peak,
                peak,
                peak_windows,
            } => {
                if !(*off_peak >= 0.0 && *peak >= 0.0) {
                    return Err(EmsError::InvalidConfig("tariff prices must be >= 0".into()));
                }
                if peak_windows.iter().any(|w| !(w.start < w.end)) {
                    return Err(EmsError::InvalidConfig("empty peak window".into()));
                }
            }
            Tariff::PerStep { prices } => {
                if prices.len() != self.time.horizon_steps + 1 {
                    return Err(EmsError::InvalidConfig(format!(
                        "per-step tariff needs {} prices, got {}",
                        self.time.horizon_steps + 1,
                        prices.len()
                    )));
                }
                if prices.iter().any(|p| !(*p >= 0.0)) {
                    return Err(EmsError::InvalidConfig("tariff prices must be >= 0".into()));
                }
            }
        }
        Ok(())
    }

    /// Price `p_t` (€/kW held over one step) charged for the import of the
    /// interval ending at step `t`.
    pub fn price(&self, t: usize) -> f64 {
        match &self.economics.tariff {
            Tariff::TwoTier {
                off_peak,
                peak,
                peak_windows,
            } => {
                let hour = self.time.noise_hour(t);
                let per_kwh = if peak_windows.iter().any(|w| w.contains(hour)) {
                    *peak
                } else {
                    *off_peak
                };
                per_kwh * self.time.delta_hours
            }
            Tariff::PerStep { prices } => prices[t],
        }
    }

    pub fn lambda(&self) -> f64 {
        self.economics.lambda_comfort
    }

    pub fn horizon(&self) -> usize {
        self.time.horizon_steps
    }

    pub fn delta(&self) -> f64 {
        self.time.delta_hours
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    /// State of charge (kWh).
    pub soc: f64,
    /// PM10 concentration (µg/m³).
    pub pm10: f64,
}

impl State {
    pub fn new(soc: f64, pm10: f64) -> Self {
        Self { soc, pm10 }
    }

    pub fn soc_percent(&self, battery: &BatteryParams) -> f64 {
        100.0 * self.soc / battery.capacity
    }
}

/// Battery power and ventilation power, both in kW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub u_b: f64,
    pub u_v: f64,
}

impl Control {
    pub fn new(u_b: f64, u_v: f64) -> Self {
        Self { u_b, u_v }
    }

    pub fn with_mode(vent: &VentilationModes, u_b: f64, mode: VentMode) -> Self {
        Self {
            u_b,
            u_v: vent.power(mode),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseVector {
    /// Station demand (kW).
    pub d: f64,
    /// Recoverable braking power (kW).
    pub b: f64,
    /// Train arrivals per hour.
    pub n: f64,
    /// Outdoor PM10 (µg/m³).
    pub c_o: f64,
}

impl NoiseVector {
    pub fn new(d: f64, b: f64, n: f64, c_o: f64) -> Self {
        Self { d, b, n, c_o }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.d >= 0.0 && self.b >= 0.0 && self.n >= 0.0 && self.c_o >= 0.0
    }
}

#[inline]
fn pos(x: f64) -> f64 {
    x.max(0.0)
}

#[inline]
fn neg(x: f64) -> f64 {
    x.min(0.0)
}

/// Battery state of charge after one step at power `u_b`. Not clamped.
#[inline]
pub fn step_soc(p: &BatteryParams, g: &TimeGrid, soc: f64, u_b: f64) -> f64 {
    soc + g.delta_hours * (p.rho_c * pos(u_b) + neg(u_b) / p.rho_d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pm10Step {
    pub concentration: f64,
    /// False when the explicit step left its stability region.
    pub stable: bool,
}

/// Explicit Euler step of the PM10 balance, floored at zero.
#[inline]
pub fn step_pm10(
    a: &AirParams,
    g: &TimeGrid,
    c: f64,
    u_v: f64,
    w_next: &NoiseVector,
) -> Pm10Step {
    let dt = g.delta_hours;
    let exchange = a.ventilation_rate(u_v) + a.beta * w_next.n;
    let next = c - dt * a.delta_dep * c
        + dt * a.alpha * w_next.n * w_next.n
        + dt * exchange * (w_next.c_o - c);
    Pm10Step {
        concentration: next.max(0.0),
        stable: dt * (a.delta_dep + exchange) <= 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: State,
    pub stable: bool,
}

/// Discrete-time dynamics `x_{t+1} = f_t(x_t, u_t, w_{t+1})`.
pub fn dynamics(m: &StationModel, _t: usize, x: &State, u: &Control, w_next: &NoiseVector) -> Transition {
    let soc = step_soc(&m.battery, &m.time, x.soc, u.u_b);
    let pm = step_pm10(&m.air, &m.time, x.pm10, u.u_v, w_next);
    Transition {
        state: State::new(soc, pm.concentration),
        stable: pm.stable,
    }
}

/// Power drawn from the grid. Negative values are wasted braking surplus.
#[inline]
pub fn import_power(u: &Control, w_next: &NoiseVector) -> f64 {
    w_next.d + u.u_v + u.u_b - w_next.b
}

/// Energy bill of the interval ending at `t + 1`.
#[inline]
pub fn energy_cost(m: &StationModel, t: usize, import: f64) -> f64 {
    m.price(t + 1) * pos(import)
}

/// Instantaneous cost `p_{t+1} (u^r_{t+1})^+ + λ c_{t+1}`.
pub fn stage_cost(
    m: &StationModel,
    t: usize,
    _x: &State,
    u: &Control,
    w_next: &NoiseVector,
    x_next: &State,
) -> f64 {
    energy_cost(m, t, import_power(u, w_next)) + m.lambda() * x_next.pm10
}

/// Final cost `K`. The end-of-day state is irrelevant.
pub fn final_cost(_x: &State) -> f64 {
    0.0
}

/// Slack on state-of-charge bounds that absorbs floating-point rounding.
pub const SOC_TOLERANCE: f64 = 1e-9;

#[inline]
pub fn soc_within(p: &BatteryParams, soc: f64) -> bool {
    soc >= p.soc_min - SOC_TOLERANCE && soc <= p.soc_max + SOC_TOLERANCE
}

/// Bound constraints on `(x_t, u_t)`, including the SOC reached after the step.
pub fn admissible(m: &StationModel, x: &State, u: &Control) -> bool {
    let b = &m.battery;
    if !(u.u_b >= b.power_min && u.u_b <= b.power_max) {
        return false;
    }
    if m.ventilation.mode_of(u.u_v).is_none() {
        return false;
    }
    soc_within(b, x.soc) && soc_within(b, step_soc(b, &m.time, x.soc, u.u_b))
}

/// A state strategy `u_t = π_t(x_t, w_t)`.
///
/// Implementations see only the current step, state and last observed
/// noise; the simulator never hands them later noise values.
pub trait Policy {
    fn name(&self) -> &str;

    fn decide(&mut self, t: usize, x: &State, w: &NoiseVector) -> Result<Control>;

    /// Whether braking power offsets the station's imports. The reference
    /// station has no recovery equipment.
    fn recovers_braking(&self) -> bool {
        true
    }
}

/// Current operation: full ventilation, no battery, no braking recovery.
#[derive(Debug, Clone)]
pub struct ReferencePolicy {
    control: Control,
}

pub fn reference_policy(m: &StationModel) -> ReferencePolicy {
    ReferencePolicy {
        control: Control::new(0.0, m.ventilation.power_high),
    }
}

impl Policy for ReferencePolicy {
    fn name(&self) -> &str {
        "reference"
    }

    fn decide(&mut self, _t: usize, _x: &State, _w: &NoiseVector) -> Result<Control> {
        Ok(self.control)
    }

    fn recovers_braking(&self) -> bool {
        false
    }
}

/// Constant control, handy for tests and baselines.
#[derive(Debug, Clone)]
pub struct ConstantPolicy {
    pub control: Control,
    pub recover: bool,
}

impl Policy for ConstantPolicy {
    fn name(&self) -> &str {
        "constant"
    }

    fn decide(&mut self, _t: usize, _x: &State, _w: &NoiseVector) -> Result<Control> {
        Ok(self.control)
    }

    fn recovers_braking(&self) -> bool {
        self.recover
    }
}

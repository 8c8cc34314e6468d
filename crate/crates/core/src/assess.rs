//! Closed-loop simulation and out-of-sample Monte Carlo assessment.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EmsError, Result};
use crate::model::{
    admissible, dynamics, energy_cost, final_cost, import_power, Control, NoiseVector, Policy, State, StationModel,
};
use crate::scenarios::{Role, Scenario, ScenarioSet};

/// Reveals the noise one step at a time.
pub trait NoiseSource {
    /// Number of decision steps `T` (the source holds `w_0..w_T`).
    fn horizon(&self) -> usize;
    fn reveal(&mut self, t: usize) -> NoiseVector;
}

pub struct ScenarioTape<'a> {
    scenario: &'a Scenario,
}

impl<'a> ScenarioTape<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        Self { scenario }
    }
}

impl NoiseSource for ScenarioTape<'_> {
    fn horizon(&self) -> usize {
        self.scenario.len() - 1
    }

    fn reveal(&mut self, t: usize) -> NoiseVector {
        self.scenario.noise[t]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub policy: String,
    /// `x_0..x_T`.
    pub states: Vec<State>,
    pub controls: Vec<Control>,
    /// Grid import of each interval (kW); negative when surplus is wasted.
    pub imports: Vec<f64>,
    pub stage_costs: Vec<f64>,
    pub energy_costs: Vec<f64>,
    /// `Σ L_t + K(x_T)` (€).
    pub total_cost: f64,
    /// Energy bill only (€).
    pub money_cost: f64,
    /// `Σ (u^r)^+ Δ` (kWh).
    pub energy_drawn_kwh: f64,
    /// Station demand plus ventilation, `Σ (d + u_v) Δ` (kWh).
    pub device_energy_kwh: f64,
    /// Mean of `c_1..c_T`.
    pub mean_pm10: f64,
    /// Max of `c_0..c_T`.
    pub max_pm10: f64,
    /// `Σ (u^r)^- Δ` as a positive number (kWh).
    pub wasted_surplus_kwh: f64,
    /// Steps whose explicit PM10 update left its stability region.
    pub unstable_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DecisionTiming {
    pub decisions: usize,
    pub total_seconds: f64,
    pub max_seconds: f64,
}

impl DecisionTiming {
    pub fn mean_ms(&self) -> f64 {
        if self.decisions == 0 {
            0.0
        } else {
            1e3 * self.total_seconds / self.decisions as f64
        }
    }

    fn merge(&mut self, other: &DecisionTiming) {
        self.decisions += other.decisions;
        self.total_seconds += other.total_seconds;
        self.max_seconds = self.max_seconds.max(other.max_seconds);
    }
}

/// Runs `policy` in closed loop. The policy sees `w_t` when deciding `u_t`;
/// `w_{t+1}` is revealed only afterwards.
pub fn simulate_source(
    m: &StationModel,
    policy: &mut dyn Policy,
    source: &mut dyn NoiseSource,
    x0: &State,
) -> Result<(SimulationTrace, DecisionTiming)> {
    let steps = source.horizon();
    if steps != m.horizon() {
        return Err(EmsError::LengthMismatch(format!(
            "scenario covers {steps} steps, model needs {}",
            m.horizon()
        )));
    }
    let dt = m.delta();
    let recovers = policy.recovers_braking();
    let mut trace = SimulationTrace {
        policy: policy.name().to_string(),
        states: Vec::with_capacity(steps + 1),
        controls: Vec::with_capacity(steps),
        imports: Vec::with_capacity(steps),
        stage_costs: Vec::with_capacity(steps),
        energy_costs: Vec::with_capacity(steps),
        total_cost: 0.0,
        money_cost: 0.0,
        energy_drawn_kwh: 0.0,
        device_energy_kwh: 0.0,
        mean_pm10: 0.0,
        max_pm10: x0.pm10,
        wasted_surplus_kwh: 0.0,
        unstable_steps: 0,
    };
    let mut timing = DecisionTiming::default();
    let mut x = *x0;
    trace.states.push(x);
    let mut w = source.reveal(0);
    for t in 0..steps {
        let start = Instant::now();
        let u = policy.decide(t, &x, &w)?;
        let spent = start.elapsed().as_secs_f64();
        timing.decisions += 1;
        timing.total_seconds += spent;
        timing.max_seconds = timing.max_seconds.max(spent);
        if !admissible(m, &x, &u) {
            return Err(EmsError::InadmissibleControl {
                policy: trace.policy.clone(),
                t,
                u_b: u.u_b,
                u_v: u.u_v,
            });
        }
        let w_next = source.reveal(t + 1);
        let tr = dynamics(m, t, &x, &u, &w_next);
        let import = if recovers {
            import_power(&u, &w_next)
        } else {
            w_next.d + u.u_v + u.u_b
        };
        let energy = energy_cost(m, t, import);
        let stage = energy + m.lambda() * tr.state.pm10;
        trace.controls.push(u);
        trace.imports.push(import);
        trace.energy_costs.push(energy);
        trace.stage_costs.push(stage);
        trace.total_cost += stage;
        trace.money_cost += energy;
        trace.energy_drawn_kwh += import.max(0.0) * dt;
        trace.wasted_surplus_kwh -= import.min(0.0) * dt;
        trace.device_energy_kwh += (w_next.d + u.u_v) * dt;
        trace.mean_pm10 += tr.state.pm10;
        trace.max_pm10 = trace.max_pm10.max(tr.state.pm10);
        trace.unstable_steps += usize::from(!tr.stable);
        x = tr.state;
        trace.states.push(x);
        w = w_next;
    }
    trace.total_cost += final_cost(&x);
    trace.mean_pm10 /= steps as f64;
    Ok((trace, timing))
}

pub fn simulate(m: &StationModel, policy: &mut dyn Policy, scenario: &Scenario, x0: &State) -> Result<SimulationTrace> {
    if scenario.len() != m.horizon() + 1 {
        return Err(EmsError::LengthMismatch(format!(
            "scenario has {} noise vectors, model needs {}",
            scenario.len(),
            m.horizon() + 1
        )));
    }
    simulate_source(m, policy, &mut ScenarioTape::new(scenario), x0).map(|(t, _)| t)
}

/// Default initial state: mid-range SOC, outdoor PM10 at `t = 0`.
pub fn default_initial_state(m: &StationModel, w0: &NoiseVector) -> State {
    State::new(m.battery.soc_mid(), w0.c_o)
}

/// Per-scenario results of one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub scenario: usize,
    pub total_cost: f64,
    pub money_cost: f64,
    pub energy_drawn_kwh: f64,
    pub device_energy_kwh: f64,
    pub mean_pm10: f64,
    pub max_pm10: f64,
    pub wasted_surplus_kwh: f64,
}

impl ScenarioOutcome {
    fn from_trace(scenario: usize, t: &SimulationTrace) -> Self {
        Self {
            scenario,
            total_cost: t.total_cost,
            money_cost: t.money_cost,
            energy_drawn_kwh: t.energy_drawn_kwh,
            device_energy_kwh: t.device_energy_kwh,
            mean_pm10: t.mean_pm10,
            max_pm10: t.max_pm10,
            wasted_surplus_kwh: t.wasted_surplus_kwh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub policy: String,
    /// Content hash of the assessment set.
    pub set_hash: String,
    pub outcomes: Vec<ScenarioOutcome>,
    pub timing: DecisionTiming,
}

/// Builds a fresh policy for scenario `i`. Policies with internal caches
/// must not be shared between scenarios.
pub type PolicyFactory<'a> = dyn Fn(usize, &Scenario) -> Result<Box<dyn Policy>> + Sync + 'a;

/// Simulates a policy on every scenario of an assessment set, in parallel.
/// Results are ordered by scenario index whatever the thread count.
pub fn monte_carlo(
    m: &StationModel,
    factory: &PolicyFactory<'_>,
    set: &ScenarioSet,
    x0: &State,
) -> Result<MonteCarloResult> {
    set.role().require(Role::Assessment, "monte_carlo")?;
    let runs: Vec<(String, ScenarioOutcome, DecisionTiming)> = set
        .scenarios()
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut policy = factory(i, s)?;
            let (trace, timing) = simulate_source(m, policy.as_mut(), &mut ScenarioTape::new(s), x0)?;
            Ok((trace.policy.clone(), ScenarioOutcome::from_trace(i, &trace), timing))
        })
        .collect::<Result<_>>()?;
    let mut timing = DecisionTiming::default();
    for (_, _, t) in &runs {
        timing.merge(t);
    }
    Ok(MonteCarloResult {
        policy: runs[0].0.clone(),
        set_hash: set.content_hash(),
        outcomes: runs.into_iter().map(|(_, o, _)| o).collect(),
        timing,
    })
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 {
            v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std: var.sqrt(),
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Standard error of the mean for `n` samples.
    pub fn standard_error(&self, n: usize) -> f64 {
        self.std / (n as f64).sqrt()
    }
}

/// Table-style summary of one policy against the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub scenarios: usize,
    pub total_cost: Stats,
    pub money_cost: Stats,
    /// Policy minus reference, per scenario (negative is a saving).
    pub money_savings: Stats,
    pub energy_savings_kwh: Stats,
    pub device_energy_savings_kwh: Stats,
    pub mean_pm10: Stats,
    pub max_pm10: Stats,
    pub wasted_surplus_kwh: Stats,
    pub online_mean_ms: f64,
    pub online_max_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub set_hash: String,
    pub reference: PolicySummary,
    pub policies: Vec<PolicySummary>,
}

fn check_same_set(a: &MonteCarloResult, b: &MonteCarloResult) -> Result<()> {
    if a.set_hash != b.set_hash || a.outcomes.len() != b.outcomes.len() {
        return Err(EmsError::ScenarioMismatch(format!(
            "`{}` and `{}` were simulated on different scenario sets",
            a.policy, b.policy
        )));
    }
    Ok(())
}

fn summarize(r: &MonteCarloResult, reference: &MonteCarloResult) -> PolicySummary {
    let diff = |f: fn(&ScenarioOutcome) -> f64| {
        Stats::of(r.outcomes.iter().zip(&reference.outcomes).map(|(a, b)| f(a) - f(b)))
    };
    PolicySummary {
        policy: r.policy.clone(),
        scenarios: r.outcomes.len(),
        total_cost: Stats::of(r.outcomes.iter().map(|o| o.total_cost)),
        money_cost: Stats::of(r.outcomes.iter().map(|o| o.money_cost)),
        money_savings: diff(|o| o.money_cost),
        energy_savings_kwh: diff(|o| o.energy_drawn_kwh),
        device_energy_savings_kwh: diff(|o| o.device_energy_kwh),
        mean_pm10: Stats::of(r.outcomes.iter().map(|o| o.mean_pm10)),
        max_pm10: Stats::of(r.outcomes.iter().map(|o| o.max_pm10)),
        wasted_surplus_kwh: Stats::of(r.outcomes.iter().map(|o| o.wasted_surplus_kwh)),
        online_mean_ms: r.timing.mean_ms(),
        online_max_ms: 1e3 * r.timing.max_seconds,
    }
}

pub fn assess(reference: &MonteCarloResult, results: &[MonteCarloResult]) -> Result<AssessmentReport> {
    for r in results {
        check_same_set(reference, r)?;
    }
    Ok(AssessmentReport {
        set_hash: reference.set_hash.clone(),
        reference: summarize(reference, reference),
        policies: results.iter().map(|r| summarize(r, reference)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// The optimized objective: energy bill plus discomfort.
    TotalCost,
    MoneyCost,
}

impl Metric {
    fn of(self, o: &ScenarioOutcome) -> f64 {
        match self {
            Metric::TotalCost => o.total_cost,
            Metric::MoneyCost => o.money_cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` increasing edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn build(values: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if values.is_empty() || lo == hi {
            let v = if values.is_empty() { 0.0 } else { lo };
            return Self {
                edges: vec![v, v],
                counts: vec![values.len()],
            };
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
        let mut counts = vec![0; bins];
        for v in values {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Self { edges, counts }
    }
}

/// Relative gap denominators are kept away from zero by this floor (€).
pub const GAP_DENOMINATOR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub metric: Metric,
    /// `(a - b) / max(|b|, floor)` per scenario.
    pub gaps: Vec<f64>,
    /// Scenarios where `a` is cheaper.
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    pub histogram: Histogram,
}

impl Comparison {
    pub fn win_fraction(&self) -> f64 {
        self.wins as f64 / self.gaps.len() as f64
    }
}

pub fn compare(a: &MonteCarloResult, b: &MonteCarloResult, metric: Metric, bins: usize) -> Result<Comparison> {
    check_same_set(a, b)?;
    let (mut wins, mut ties, mut losses) = (0, 0, 0);
    let gaps: Vec<f64> = a
        .outcomes
        .iter()
        .zip(&b.outcomes)
        .map(|(x, y)| {
            let (ca, cb) = (metric.of(x), metric.of(y));
            match ca.partial_cmp(&cb) {
                Some(std::cmp::Ordering::Less) => wins += 1,
                Some(std::cmp::Ordering::Greater) => losses += 1,
                _ => ties += 1,
            }
            (ca - cb) / cb.abs().max(GAP_DENOMINATOR_FLOOR)
        })
        .collect();
    let histogram = Histogram::build(&gaps, bins);
    Ok(Comparison {
        a: a.policy.clone(),
        b: b.policy.clone(),
        metric,
        gaps,
        wins,
        ties,
        losses,
        histogram,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingEntry {
    pub policy: String,
    /// Offline construction (s); zero for policies without one.
    pub offline_seconds: f64,
    pub online_mean_ms: f64,
    pub online_max_ms: f64,
    pub decisions: usize,
}

pub fn timing_report(entries: &[(f64, &MonteCarloResult)]) -> Vec<TimingEntry> {
    entries
        .iter()
        .map(|(offline, r)| TimingEntry {
            policy: r.policy.clone(),
            offline_seconds: *offline,
            online_mean_ms: r.timing.mean_ms(),
            online_max_ms: 1e3 * r.timing.max_seconds,
            decisions: r.timing.decisions,
        })
        .collect()
}

/// Per-scenario CSV: costs, savings against the reference, PM10, energy.
pub fn write_outcomes_csv(path: &Path, r: &MonteCarloResult, reference: &MonteCarloResult) -> Result<()> {
    check_same_set(r, reference)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "scenario",
        "total_cost",
        "money_cost",
        "money_savings",
        "mean_pm10",
        "max_pm10",
        "energy_drawn_kwh",
        "energy_savings_kwh",
        "device_energy_kwh",
        "wasted_surplus_kwh",
    ])?;
    for (o, base) in r.outcomes.iter().zip(&reference.outcomes) {
        w.write_record(&[
            o.scenario.to_string(),
            o.total_cost.to_string(),
            o.money_cost.to_string(),
            (o.money_cost - base.money_cost).to_string(),
            o.mean_pm10.to_string(),
            o.max_pm10.to_string(),
            o.energy_drawn_kwh.to_string(),
            (o.energy_drawn_kwh - base.energy_drawn_kwh).to_string(),
            o.device_energy_kwh.to_string(),
            o.wasted_surplus_kwh.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram_csv(path: &Path, h: &Histogram) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["lower", "upper", "count"])?;
    for (e, c) in h.edges.windows(2).zip(&h.counts) {
        w.write_record(&[e[0].to_string(), e[1].to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

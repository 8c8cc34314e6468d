//! Braking-power scenarios and the noise models fitted on them.
//!
//! Only the braking component `b` is random. Demand, train arrival rate and
//! outdoor PM10 follow deterministic time-of-day profiles that every
//! scenario shares.

mod ar1;
mod io;
mod kmeans;

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EmsError, Result};
use crate::model::{NoiseVector, TimeGrid};
use crate::rng::{self, Domain};

pub use ar1::{
    conditional_distribution, fit_log_ar1, forecast, sample_log_ar1, LogAR1Model, ResidualSource, DEFAULT_EPS_LOG,
};
pub use io::{manifest_path, read_scenario_set, write_scenario_set, ScenarioManifest};
pub use kmeans::{kmeans_1d, quantize_marginals, sample_from_marginals, wcss, KMEANS_MAX_ITER};

/// What a scenario set may be used for. Fixed at creation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Optimization,
    Assessment,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Optimization => "optimization",
            Role::Assessment => "assessment",
        })
    }
}

impl Role {
    pub(crate) fn domain(self) -> Domain {
        match self {
            Role::Optimization => Domain::Optimization,
            Role::Assessment => Domain::Assessment,
        }
    }

    pub fn require(self, expected: Role, operation: &'static str) -> Result<()> {
        if self == expected {
            Ok(())
        } else {
            Err(EmsError::Sealing {
                operation,
                expected,
                actual: self,
            })
        }
    }
}

/// One realization `w_0..w_T` of the noise process.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub noise: Vec<NoiseVector>,
}

impl Scenario {
    pub fn len(&self) -> usize {
        self.noise.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noise.is_empty()
    }

    pub fn braking(&self) -> impl Iterator<Item = f64> + '_ {
        self.noise.iter().map(|w| w.b)
    }
}

/// A sealed collection of scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    role: Role,
    seed: u64,
    profile_id: String,
    scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    pub fn new(role: Role, seed: u64, profile_id: impl Into<String>, scenarios: Vec<Scenario>) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(EmsError::InvalidArgument("scenario set is empty".into()));
        }
        let len = scenarios[0].len();
        if len < 2 || scenarios.iter().any(|s| s.len() != len) {
            return Err(EmsError::LengthMismatch(
                "scenarios must share a length of at least 2".into(),
            ));
        }
        if scenarios.iter().flat_map(|s| s.noise.iter()).any(|w| !w.is_nonnegative()) {
            return Err(EmsError::InvalidArgument("negative noise component".into()));
        }
        Ok(Self {
            role,
            seed,
            profile_id: profile_id.into(),
            scenarios,
        })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn profile_id(&self) -> &str {
        &self.profile_id
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    /// Number of decision steps `T` (scenarios hold `T + 1` noise values).
    pub fn horizon(&self) -> usize {
        self.scenarios[0].len() - 1
    }

    /// Braking values of all scenarios at step `t`.
    pub fn braking_at(&self, t: usize) -> Vec<f64> {
        self.scenarios.iter().map(|s| s.noise[t].b).collect()
    }

    /// Content hash, used to check that two reports ran on the same set.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.role.to_string().as_bytes());
        h.update(self.seed.to_le_bytes());
        h.update(self.profile_id.as_bytes());
        for s in &self.scenarios {
            for w in &s.noise {
                for v in [w.d, w.b, w.n, w.c_o] {
                    h.update(v.to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }
}

/// Half-open segment `[start, end)` of a time-of-day schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub value: f64,
}

/// Piecewise-constant function of the hour of day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule(pub Vec<Segment>);

impl Schedule {
    pub fn constant(value: f64, day_length: f64) -> Self {
        Schedule(vec![Segment {
            start: 0.0,
            end: day_length,
            value,
        }])
    }

    pub fn from_triples(segments: &[(f64, f64, f64)]) -> Self {
        Schedule(
            segments
                .iter()
                .map(|&(start, end, value)| Segment { start, end, value })
                .collect(),
        )
    }

    pub fn value_at(&self, hour: f64) -> f64 {
        self.0
            .iter()
            .find(|s| s.start <= hour && hour < s.end)
            .map(|s| s.value)
            .unwrap_or(0.0)
    }

    /// Segments must tile `[0, day_length)` in order, with nonnegative values.
    pub fn validate(&self, name: &str, day_length: f64) -> Result<()> {
        let bad = |why: &str| Err(EmsError::InvalidConfig(format!("schedule `{name}`: {why}")));
        let Some(first) = self.0.first() else {
            return bad("no segments");
        };
        if first.start != 0.0 {
            return bad("must start at hour 0");
        }
        for pair in self.0.windows(2) {
            if pair[0].end != pair[1].start {
                return bad("segments must be contiguous");
            }
        }
        if self.0.iter().any(|s| !(s.start < s.end) || !(s.value >= 0.0)) {
            return bad("segments need start < end and value >= 0");
        }
        if (self.0.last().unwrap().end - day_length).abs() > 1e-9 {
            return bad("must end at day_length");
        }
        Ok(())
    }
}

/// Stand-in braking generator: recoverable pulses attached to train arrivals.
///
/// Arrivals follow the headway profile deterministically. Each arrival
/// yields a pulse with probability `recover_probability` whose magnitude is
/// lognormal around `magnitude_median_kw`, modulated by a latent log-AR(1)
/// factor shared by all pulses of a scenario (traffic and line receptivity
/// drift slowly over the day).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorProfile {
    pub id: String,
    pub trains_per_hour: Schedule,
    pub demand_kw: Schedule,
    pub outdoor_pm10: Schedule,
    pub recover_probability: Schedule,
    /// Median power of one recovered pulse averaged over a step (kW).
    pub magnitude_median_kw: f64,
    /// Log-standard deviation of individual pulse magnitudes.
    pub magnitude_log_sigma: f64,
    /// Per-step autoregressive coefficient of the latent factor.
    pub latent_ar: f64,
    /// Stationary log-standard deviation of the latent factor.
    pub latent_log_sigma: f64,
}

impl Default for GeneratorProfile {
    fn default() -> Self {
        Self {
            id: "desk-v1".into(),
            trains_per_hour: Schedule::from_triples(&[
                (0.0, 1.0, 16.0),
                (1.0, 5.5, 0.0),
                (5.5, 7.0, 24.0),
                (7.0, 9.5, 40.0),
                (9.5, 16.5, 30.0),
                (16.5, 19.5, 40.0),
                (19.5, 24.0, 20.0),
            ]),
            demand_kw: Schedule::from_triples(&[
                (0.0, 1.0, 55.0),
                (1.0, 5.5, 40.0),
                (5.5, 7.0, 60.0),
                (7.0, 20.0, 69.0),
                (20.0, 24.0, 55.0),
            ]),
            outdoor_pm10: Schedule::from_triples(&[(0.0, 6.0, 25.0), (6.0, 22.0, 40.0), (22.0, 24.0, 25.0)]),
            recover_probability: Schedule::constant(0.8, 24.0),
            magnitude_median_kw: 70.0,
            magnitude_log_sigma: 0.5,
            latent_ar: 0.9,
            latent_log_sigma: 0.4,
        }
    }
}

impl GeneratorProfile {
    pub fn validate(&self, day_length: f64) -> Result<()> {
        self.trains_per_hour.validate("trains_per_hour", day_length)?;
        self.demand_kw.validate("demand_kw", day_length)?;
        self.outdoor_pm10.validate("outdoor_pm10", day_length)?;
        self.recover_probability.validate("recover_probability", day_length)?;
        if self.recover_probability.0.iter().any(|s| s.value > 1.0) {
            return Err(EmsError::InvalidConfig("recover_probability must be <= 1".into()));
        }
        if !(self.magnitude_median_kw >= 0.0)
            || !(self.magnitude_log_sigma >= 0.0)
            || !(self.latent_log_sigma >= 0.0)
            || !(self.latent_ar.abs() < 1.0)
        {
            return Err(EmsError::InvalidConfig(
                "pulse magnitudes need median >= 0, sigmas >= 0 and |latent_ar| < 1".into(),
            ));
        }
        Ok(())
    }

    pub fn deterministic(&self, grid: &TimeGrid) -> DeterministicProfiles {
        let steps = grid.horizon_steps + 1;
        let at = |s: &Schedule| (0..steps).map(|t| s.value_at(grid.noise_hour(t))).collect::<Vec<_>>();
        DeterministicProfiles {
            d: at(&self.demand_kw),
            n: at(&self.trains_per_hour),
            c_o: at(&self.outdoor_pm10),
        }
    }

    /// Train arrivals during the interval described by each `w_t`.
    pub fn arrivals(&self, grid: &TimeGrid) -> Vec<u32> {
        let dt = grid.delta_hours;
        let rate = |t: usize| self.trains_per_hour.value_at(grid.noise_hour(t));
        // cumulative expected arrivals at the end of each interval; the
        // offset absorbs rounding in sums such as 30 x (1/30)
        let mut cumulative = -rate(0) * dt;
        let mut arrivals = Vec::with_capacity(grid.horizon_steps + 1);
        for t in 0..=grid.horizon_steps {
            let before = (cumulative + 1e-9).floor();
            cumulative += rate(t) * dt;
            let after = (cumulative + 1e-9).floor();
            arrivals.push((after - before).max(0.0) as u32);
        }
        arrivals
    }
}

/// Noise components known in advance, indexed like `w_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicProfiles {
    pub d: Vec<f64>,
    pub n: Vec<f64>,
    pub c_o: Vec<f64>,
}

impl DeterministicProfiles {
    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn noise(&self, t: usize, b: f64) -> NoiseVector {
        NoiseVector::new(self.d[t], b, self.n[t], self.c_o[t])
    }

    /// Scenario with zero braking everywhere.
    pub fn nominal(&self) -> Scenario {
        Scenario {
            noise: (0..self.len()).map(|t| self.noise(t, 0.0)).collect(),
        }
    }

    pub fn with_braking(&self, braking: &[f64]) -> Scenario {
        Scenario {
            noise: braking.iter().enumerate().map(|(t, &b)| self.noise(t, b)).collect(),
        }
    }
}

fn generate_one(
    profile: &GeneratorProfile,
    profiles: &DeterministicProfiles,
    arrivals: &[u32],
    q: &[f64],
    seed: u64,
    role: Role,
    index: usize,
) -> Scenario {
    let mut rng = stream_for(seed, role, index);
    let mut latent = profile.latent_log_sigma * rng.sample::<f64, _>(StandardNormal);
    let innovation = profile.latent_log_sigma * (1.0 - profile.latent_ar * profile.latent_ar).sqrt();
    let mut braking = Vec::with_capacity(arrivals.len());
    for (t, &count) in arrivals.iter().enumerate() {
        if t > 0 {
            latent = profile.latent_ar * latent + innovation * rng.sample::<f64, _>(StandardNormal);
        }
        let mut b = 0.0;
        for _ in 0..count {
            let recovered = rng.random::<f64>() < q[t];
            let z: f64 = rng.sample(StandardNormal);
            if recovered {
                b += profile.magnitude_median_kw * (profile.magnitude_log_sigma * z + latent).exp();
            }
        }
        braking.push(b);
    }
    profiles.with_braking(&braking)
}

pub(crate) fn stream_for(seed: u64, role: Role, index: usize) -> rand_chacha::ChaCha8Rng {
    rng::stream(seed, role.domain(), index as u64)
}

/// Generates `count` braking scenarios, reproducibly from `(profile, seed)`.
pub fn generate_braking(
    profile: &GeneratorProfile,
    grid: &TimeGrid,
    role: Role,
    seed: u64,
    count: usize,
) -> Result<ScenarioSet> {
    if count == 0 {
        return Err(EmsError::InvalidArgument("scenario count must be >= 1".into()));
    }
    grid.validate()?;
    profile.validate(grid.day_length)?;
    let profiles = profile.deterministic(grid);
    let arrivals = profile.arrivals(grid);
    let q: Vec<f64> = (0..=grid.horizon_steps)
        .map(|t| profile.recover_probability.value_at(grid.noise_hour(t)))
        .collect();
    let scenarios = (0..count)
        .into_par_iter()
        .map(|i| generate_one(profile, &profiles, &arrivals, &q, seed, role, i))
        .collect();
    ScenarioSet::new(role, seed, profile.id.clone(), scenarios)
}

/// Discrete distribution on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atoms {
    pub support: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Atoms {
    pub fn point(value: f64) -> Self {
        Self {
            support: vec![value],
            probs: vec![1.0],
        }
    }

    pub fn uniform(support: Vec<f64>) -> Self {
        let p = 1.0 / support.len() as f64;
        let probs = vec![p; support.len()];
        Self { support, probs }
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.probs).map(|(s, p)| s * p).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.support.iter().copied().zip(self.probs.iter().copied())
    }
}

/// Per-step discrete braking distributions `μ_t`, indexed `t = 0..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedMarginal {
    pub steps: Vec<Atoms>,
}

impl QuantizedMarginal {
    pub fn at(&self, t: usize) -> &Atoms {
        &self.steps[t]
    }

    pub fn horizon(&self) -> usize {
        self.steps.len() - 1
    }

    /// Single-atom marginals following a fixed braking path.
    pub fn deterministic(braking: &[f64]) -> Self {
        Self {
            steps: braking.iter().map(|&b| Atoms::point(b)).collect(),
        }
    }
}

/// Braking distribution at step `t` given `w_{t-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalDistribution {
    pub t: usize,
    pub atoms: Atoms,
}

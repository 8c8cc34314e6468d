//! File-based experiment pipeline. Stages exchange artifacts stamped with
//! the config hash; a stage refuses inputs built from another config.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assess::{
    assess, compare, default_initial_state, monte_carlo, simulate, timing_report, write_histogram_csv,
    write_outcomes_csv, AssessmentReport, Comparison, Metric, MonteCarloResult, PolicyFactory, SimulationTrace,
    TimingEntry,
};
use crate::calibrate::{calibrate_air, lambda_scan, reference_stats, AirCalibration, LambdaScan, ReferenceStats};
use crate::config::ExperimentConfig;
use crate::error::{EmsError, Result};
use crate::integrator::{validate_discretization, ContinuousInputs, DiscretizationReport};
use crate::model::{reference_policy, Policy, State, StationModel};
use crate::mpc::{build_milp, solve_deterministic, write_mps, LogAR1Forecaster, MpcController};
use crate::scenarios::{
    fit_log_ar1, forecast, quantize_marginals, read_scenario_set, write_scenario_set, Atoms, DeterministicProfiles,
    LogAR1Model, QuantizedMarginal, Role, ScenarioSet,
};
use crate::sdp::{
    backward_induction_sdpa, backward_induction_sdpo, Axis, ControlMesh, OnlineLaw, SdpaPolicy, SdpoPolicy, StateGrid,
    TableKind, ValueTable,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Reference,
    Sdpo,
    Sdpa,
    Mpc,
}

impl PolicyKind {
    pub const OPTIMIZED: [PolicyKind; 3] = [PolicyKind::Mpc, PolicyKind::Sdpo, PolicyKind::Sdpa];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Reference => "reference",
            PolicyKind::Sdpo => "sdpo",
            PolicyKind::Sdpa => "sdpa",
            PolicyKind::Mpc => "mpc",
        }
    }
}

impl FromStr for PolicyKind {
    type Err = EmsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "reference" => Ok(PolicyKind::Reference),
            "sdpo" => Ok(PolicyKind::Sdpo),
            "sdpa" => Ok(PolicyKind::Sdpa),
            "mpc" => Ok(PolicyKind::Mpc),
            other => Err(EmsError::InvalidArgument(format!(
                "unknown policy `{other}` (reference, sdpo, sdpa or mpc)"
            ))),
        }
    }
}

/// A JSON artifact carrying the hash of the config that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub config_hash: String,
    pub data: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub config_hash: String,
    pub optimization_seed: u64,
    pub assessment_seed: u64,
    pub version: String,
    pub threads: usize,
    pub elapsed_seconds: f64,
    pub artifacts: Vec<ArtifactRecord>,
}

/// Noise models fitted on the optimization set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseArtifacts {
    pub log_ar1: LogAR1Model,
    pub marginals: QuantizedMarginal,
    pub residual_atoms: Vec<Atoms>,
    /// Largest braking value of the optimization set (kW).
    pub braking_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub air: AirCalibration,
    pub configured: ReferenceStats,
    pub configured_alpha: f64,
    pub configured_beta: f64,
    pub configured_lambda: f64,
    pub lambda_scan: LambdaScan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentSummary {
    pub report: AssessmentReport,
    pub timing: Vec<TimingEntry>,
    /// Optimized policies against MPC on the optimized objective.
    pub comparisons: Vec<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpExport {
    pub mps_path: PathBuf,
    pub t0: usize,
    pub horizon: usize,
    pub scenario: usize,
    pub start: State,
    pub variables: usize,
    pub rows: usize,
    pub binaries: usize,
    /// The DP plan of the same subproblem, as a MILP point.
    pub dp_objective: f64,
    pub dp_max_violation: f64,
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Stages of one experiment, rooted at the config's output directory.
pub struct Pipeline {
    cfg: ExperimentConfig,
    hash: String,
    root: PathBuf,
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let hash = cfg.hash();
        let root = cfg.output_dir.clone();
        Ok(Self { cfg, hash, root })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn model(&self) -> &StationModel {
        &self.cfg.model
    }

    pub fn scenario_path(&self, role: Role) -> PathBuf {
        self.root.join("scenarios").join(match role {
            Role::Optimization => "optimization.csv",
            Role::Assessment => "assessment.csv",
        })
    }

    pub fn noise_path(&self) -> PathBuf {
        self.root.join("noise.json")
    }

    pub fn calibration_path(&self) -> PathBuf {
        self.root.join("calibration.json")
    }

    pub fn table_path(&self, kind: TableKind) -> PathBuf {
        self.root.join("offline").join(match kind {
            TableKind::Sdpo => "sdpo",
            TableKind::Sdpa => "sdpa",
            TableKind::Deterministic => "deterministic",
        })
    }

    pub fn assessment_dir(&self) -> PathBuf {
        self.root.join("assessment")
    }

    pub fn result_path(&self, kind: PolicyKind) -> PathBuf {
        self.assessment_dir().join(format!("{}.json", kind.as_str()))
    }

    pub fn outcomes_path(&self, kind: PolicyKind) -> PathBuf {
        self.assessment_dir().join(format!("{}.csv", kind.as_str()))
    }

    pub fn summary_path(&self) -> PathBuf {
        self.assessment_dir().join("summary.json")
    }

    pub fn manifest_path(&self, stage: &str) -> PathBuf {
        self.root.join("manifests").join(format!("{stage}.json"))
    }

    fn missing(path: &Path, stage: &str) -> EmsError {
        EmsError::Artifact {
            path: path.to_path_buf(),
            reason: format!("missing; run `{stage}` first"),
        }
    }

    fn check_hash(&self, path: &Path, found: &str) -> Result<()> {
        if found != self.hash {
            return Err(EmsError::StaleArtifact {
                path: path.to_path_buf(),
                expected: self.hash.clone(),
                found: found.to_string(),
            });
        }
        Ok(())
    }

    fn save_stamped<T: Serialize>(&self, path: &Path, data: &T) -> Result<()> {
        write_json(
            path,
            &Stamped {
                config_hash: self.hash.clone(),
                data,
            },
        )
    }

    fn load_stamped<T: DeserializeOwned>(&self, path: &Path, stage: &str) -> Result<T> {
        if !path.exists() {
            return Err(Self::missing(path, stage));
        }
        let s: Stamped<T> = serde_json::from_slice(&fs::read(path)?)?;
        self.check_hash(path, &s.config_hash)?;
        Ok(s.data)
    }

    fn write_manifest(&self, stage: &str, started: Instant, artifacts: &[PathBuf]) -> Result<RunManifest> {
        let manifest = RunManifest {
            stage: stage.to_string(),
            config_hash: self.hash.clone(),
            optimization_seed: self.cfg.scenarios.optimization_seed,
            assessment_seed: self.cfg.scenarios.assessment_seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads: rayon::current_num_threads(),
            elapsed_seconds: started.elapsed().as_secs_f64(),
            artifacts: artifacts
                .iter()
                .map(|p| {
                    Ok(ArtifactRecord {
                        path: p.strip_prefix(&self.root).unwrap_or(p).to_path_buf(),
                        sha256: sha256_file(p)?,
                    })
                })
                .collect::<Result<_>>()?,
        };
        write_json(&self.manifest_path(stage), &manifest)?;
        Ok(manifest)
    }

    pub fn load_manifest(&self, stage: &str) -> Result<RunManifest> {
        let path = self.manifest_path(stage);
        if !path.exists() {
            return Err(Self::missing(&path, stage));
        }
        let m: RunManifest = serde_json::from_slice(&fs::read(&path)?)?;
        self.check_hash(&path, &m.config_hash)?;
        Ok(m)
    }

    pub fn profiles(&self) -> DeterministicProfiles {
        self.cfg.generator.deterministic(&self.model().time)
    }

    // ---- stages ----

    pub fn gen_scenarios(&self) -> Result<RunManifest> {
        let started = Instant::now();
        let s = &self.cfg.scenarios;
        let mut written = Vec::new();
        for (role, seed, count) in [
            (Role::Optimization, s.optimization_seed, s.optimization_count),
            (Role::Assessment, s.assessment_seed, s.assessment_count),
        ] {
            let set = crate::scenarios::generate_braking(&self.cfg.generator, &self.model().time, role, seed, count)?;
            let path = self.scenario_path(role);
            write_scenario_set(&set, &path, &self.hash)?;
            info!("{count} {role} scenarios -> {}", path.display());
            written.push(path.clone());
            written.push(crate::scenarios::manifest_path(&path));
        }
        self.write_manifest("gen-scenarios", started, &written)
    }

    pub fn load_scenarios(&self, role: Role) -> Result<ScenarioSet> {
        let path = self.scenario_path(role);
        if !path.exists() {
            return Err(Self::missing(&path, "gen-scenarios"));
        }
        let (set, manifest) = read_scenario_set(&path)?;
        self.check_hash(&path, &manifest.config_hash)?;
        if set.role() != role {
            return Err(EmsError::Sealing {
                operation: "load_scenarios",
                expected: role,
                actual: set.role(),
            });
        }
        Ok(set)
    }

    pub fn fit_noise(&self) -> Result<RunManifest> {
        let started = Instant::now();
        let set = self.load_scenarios(Role::Optimization)?;
        let s = &self.cfg.scenarios;
        let log_ar1 = fit_log_ar1(&set, s.eps_log, s.bias_correction)?;
        let marginals = quantize_marginals(&set, self.cfg.sdp.k_offline, s.optimization_seed)?;
        let residual_atoms = log_ar1.residual_atoms(self.cfg.sdp.k_residual, s.optimization_seed);
        let braking_max = set.scenarios().iter().flat_map(|sc| sc.braking()).fold(0.0, f64::max);
        info!("log-AR(1) coefficient a = {:.4}", log_ar1.a);
        let data = NoiseArtifacts {
            log_ar1,
            marginals,
            residual_atoms,
            braking_max,
        };
        self.save_stamped(&self.noise_path(), &data)?;
        self.write_manifest("fit-noise", started, &[self.noise_path()])
    }

    pub fn load_noise(&self) -> Result<NoiseArtifacts> {
        self.load_stamped(&self.noise_path(), "fit-noise")
    }

    /// Top of the PM10 axis: configured, or twice the reference maximum.
    pub fn pm10_top(&self) -> Result<f64> {
        match self.cfg.sdp.pm10_top {
            Some(top) => Ok(top),
            None => Ok(2.0 * reference_stats(self.model(), &self.profiles())?.max_pm10),
        }
    }

    pub fn state_grid(&self) -> Result<StateGrid> {
        StateGrid::for_model(self.model(), self.cfg.sdp.n_soc, self.cfg.sdp.n_pm10, self.pm10_top()?)
    }

    pub fn augmented_grid(&self, noise: &NoiseArtifacts) -> Result<StateGrid> {
        let top = self.cfg.sdp.braking_top.unwrap_or(noise.braking_max);
        if !(top > 0.0) {
            return Err(EmsError::InvalidConfig("braking axis needs a positive top value".into()));
        }
        Ok(self
            .state_grid()?
            .with_braking(Axis::log_spaced(top, self.cfg.sdp.n_braking, self.cfg.scenarios.eps_log)?))
    }

    pub fn offline_mesh(&self) -> Result<ControlMesh> {
        ControlMesh::uniform(&self.model().battery, self.cfg.sdp.battery_levels)
    }

    pub fn online_mesh(&self) -> Result<ControlMesh> {
        self.offline_mesh()?.refined(self.cfg.sdp.online_refine)
    }

    pub fn calibrate(&self) -> Result<CalibrationReport> {
        let started = Instant::now();
        let m = self.model();
        let profiles = Arc::new(self.profiles());
        let c = &self.cfg.calibration;
        let air = calibrate_air(m, &profiles, c.target_mean_pm10, c.target_max_pm10, c.beta_max)?;
        info!("calibrated alpha = {:.6}, beta = {:.6}", air.alpha, air.beta);
        let set = self.load_scenarios(Role::Optimization)?;
        let noise = self.load_noise()?;
        let count = c.scan_scenarios.min(set.len());
        let subset = ScenarioSet::new(
            Role::Optimization,
            set.seed(),
            set.profile_id(),
            set.scenarios()[..count].to_vec(),
        )?;
        let mut scan_model = m.clone();
        scan_model.air.alpha = air.alpha;
        scan_model.air.beta = air.beta;
        let scan = lambda_scan(
            &scan_model,
            &profiles,
            &self.state_grid()?,
            &self.offline_mesh()?,
            &Arc::new(noise.marginals),
            &subset,
            &c.lambdas,
        )?;
        let report = CalibrationReport {
            air,
            configured: reference_stats(m, &profiles)?,
            configured_alpha: m.air.alpha,
            configured_beta: m.air.beta,
            configured_lambda: m.lambda(),
            lambda_scan: scan,
        };
        self.save_stamped(&self.calibration_path(), &report)?;
        self.write_manifest("calibrate", started, &[self.calibration_path()])?;
        Ok(report)
    }

    pub fn offline_sdpo(&self) -> Result<RunManifest> {
        let started = Instant::now();
        let noise = self.load_noise()?;
        let mut table = backward_induction_sdpo(
            self.model(),
            &self.profiles(),
            &self.state_grid()?,
            &self.offline_mesh()?,
            &noise.marginals,
        )?;
        table.config_hash = self.hash.clone();
        let path = self.table_path(TableKind::Sdpo);
        table.save(&path)?;
        info!("SDPO table in {:.2} s", started.elapsed().as_secs_f64());
        let (bin, json) = crate::sdp::table_paths(&path);
        self.write_manifest("offline-sdpo", started, &[bin, json])
    }

    pub fn offline_sdpa(&self) -> Result<RunManifest> {
        let started = Instant::now();
        let noise = self.load_noise()?;
        let mut table = backward_induction_sdpa(
            self.model(),
            &self.profiles(),
            &self.augmented_grid(&noise)?,
            &self.offline_mesh()?,
            &noise.log_ar1,
            &noise.residual_atoms,
        )?;
        table.config_hash = self.hash.clone();
        let path = self.table_path(TableKind::Sdpa);
        table.save(&path)?;
        info!("SDPA table in {:.2} s", started.elapsed().as_secs_f64());
        let (bin, json) = crate::sdp::table_paths(&path);
        self.write_manifest("offline-sdpa", started, &[bin, json])
    }

    pub fn load_table(&self, kind: TableKind) -> Result<ValueTable> {
        let path = self.table_path(kind);
        let stage = match kind {
            TableKind::Sdpa => "offline-sdpa",
            _ => "offline-sdpo",
        };
        if !crate::sdp::table_paths(&path).1.exists() {
            return Err(Self::missing(&path, stage));
        }
        let table = ValueTable::load(&path)?;
        self.check_hash(&path, &table.config_hash)?;
        Ok(table)
    }

    /// Fresh-policy factory for Monte Carlo runs.
    pub fn factory(&self, kind: PolicyKind) -> Result<Box<PolicyFactory<'static>>> {
        let m = self.model().clone();
        let profiles = Arc::new(self.profiles());
        match kind {
            PolicyKind::Reference => Ok(Box::new(move |_, _| Ok(Box::new(reference_policy(&m)) as Box<dyn Policy>))),
            PolicyKind::Sdpo => {
                let table = Arc::new(self.load_table(TableKind::Sdpo)?);
                let noise = self.load_noise()?;
                let mesh = self.online_mesh()?;
                let law = if self.cfg.sdp.online_uses_offline_law {
                    OnlineLaw::Offline(Arc::new(noise.marginals))
                } else {
                    OnlineLaw::Conditional {
                        noise: Arc::new(noise.log_ar1),
                        k_online: self.cfg.sdp.k_online,
                        seed: self.cfg.scenarios.optimization_seed,
                    }
                };
                Ok(Box::new(move |_, _| {
                    Ok(Box::new(SdpoPolicy::new(m.clone(), profiles.clone(), table.clone(), mesh.clone(), law.clone())?)
                        as Box<dyn Policy>)
                }))
            }
            PolicyKind::Sdpa => {
                let table = Arc::new(self.load_table(TableKind::Sdpa)?);
                let noise = self.load_noise()?;
                let mesh = self.online_mesh()?;
                let ar = Arc::new(noise.log_ar1);
                let atoms = Arc::new(noise.residual_atoms);
                Ok(Box::new(move |_, _| {
                    Ok(Box::new(SdpaPolicy::new(
                        m.clone(),
                        profiles.clone(),
                        table.clone(),
                        mesh.clone(),
                        ar.clone(),
                        atoms.clone(),
                    )?) as Box<dyn Policy>)
                }))
            }
            PolicyKind::Mpc => {
                let noise = Arc::new(self.load_noise()?.log_ar1);
                let grid = Arc::new(self.state_grid()?);
                let mesh = Arc::new(self.offline_mesh()?);
                let cfg = self.cfg.mpc.clone();
                Ok(Box::new(move |_, _| {
                    Ok(Box::new(MpcController::new(
                        m.clone(),
                        grid.clone(),
                        mesh.clone(),
                        cfg.clone(),
                        Box::new(LogAR1Forecaster {
                            noise: noise.clone(),
                            profiles: profiles.clone(),
                        }),
                    )?) as Box<dyn Policy>)
                }))
            }
        }
    }

    /// One assessment scenario under one policy.
    pub fn simulate(&self, kind: PolicyKind, scenario: usize) -> Result<SimulationTrace> {
        let started = Instant::now();
        let set = self.load_scenarios(Role::Assessment)?;
        let s = set.scenarios().get(scenario).ok_or_else(|| {
            EmsError::InvalidArgument(format!("scenario {scenario} out of range (set has {})", set.len()))
        })?;
        let mut policy = self.factory(kind)?(scenario, s)?;
        let x0 = default_initial_state(self.model(), &s.noise[0]);
        let trace = simulate(self.model(), policy.as_mut(), s, &x0)?;
        let path = self.root.join("simulate").join(format!("{}_{scenario}.json", kind.as_str()));
        self.save_stamped(&path, &trace)?;
        self.write_manifest("simulate", started, &[path])?;
        Ok(trace)
    }

    /// Monte Carlo assessment of the reference and `policies`.
    pub fn assess(&self, policies: &[PolicyKind]) -> Result<AssessmentSummary> {
        let started = Instant::now();
        let set = self.load_scenarios(Role::Assessment)?;
        // fail before any simulation when an offline artifact is missing
        let factories = policies
            .iter()
            .map(|&k| Ok((k, self.factory(k)?)))
            .collect::<Result<Vec<_>>>()?;
        let m = self.model();
        let x0 = default_initial_state(m, &set.scenarios()[0].noise[0]);
        let reference = monte_carlo(m, self.factory(PolicyKind::Reference)?.as_ref(), &set, &x0)?;
        let mut results = Vec::new();
        for (kind, factory) in &factories {
            let t = Instant::now();
            let r = monte_carlo(m, factory.as_ref(), &set, &x0)?;
            info!("{} assessed in {:.1} s", r.policy, t.elapsed().as_secs_f64());
            results.push((*kind, r));
        }
        let mut written = Vec::new();
        for (kind, r) in std::iter::once((PolicyKind::Reference, &reference)).chain(results.iter().map(|(k, r)| (*k, r))) {
            self.save_stamped(&self.result_path(kind), r)?;
            write_outcomes_csv(&self.outcomes_path(kind), r, &reference)?;
            written.push(self.result_path(kind));
            written.push(self.outcomes_path(kind));
        }
        let plain: Vec<MonteCarloResult> = results.iter().map(|(_, r)| r.clone()).collect();
        let report = assess(&reference, &plain)?;
        let offline = |k: PolicyKind| match k {
            PolicyKind::Sdpo => self.load_manifest("offline-sdpo").map(|m| m.elapsed_seconds).unwrap_or(0.0),
            PolicyKind::Sdpa => self.load_manifest("offline-sdpa").map(|m| m.elapsed_seconds).unwrap_or(0.0),
            _ => 0.0,
        };
        let timing = timing_report(&results.iter().map(|(k, r)| (offline(*k), r)).collect::<Vec<_>>());
        let comparisons = match results.iter().find(|(k, _)| *k == PolicyKind::Mpc) {
            Some((_, mpc)) => results
                .iter()
                .filter(|(k, _)| *k != PolicyKind::Mpc)
                .map(|(_, r)| compare(r, mpc, Metric::TotalCost, self.cfg.assessment.histogram_bins))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        let summary = AssessmentSummary {
            report,
            timing,
            comparisons,
        };
        self.save_stamped(&self.summary_path(), &summary)?;
        written.push(self.summary_path());
        self.write_manifest("assess", started, &written)?;
        Ok(summary)
    }

    pub fn load_result(&self, kind: PolicyKind) -> Result<MonteCarloResult> {
        self.load_stamped(&self.result_path(kind), "assess")
    }

    pub fn load_summary(&self) -> Result<AssessmentSummary> {
        self.load_stamped(&self.summary_path(), "assess")
    }

    /// Scenario-wise gap of `a` against `b`, with its histogram.
    pub fn compare(&self, a: PolicyKind, b: PolicyKind, metric: Metric) -> Result<Comparison> {
        let started = Instant::now();
        let c = compare(
            &self.load_result(a)?,
            &self.load_result(b)?,
            metric,
            self.cfg.assessment.histogram_bins,
        )?;
        let stem = format!("{}_vs_{}", a.as_str(), b.as_str());
        let dir = self.root.join("compare");
        let (json, csv) = (dir.join(format!("{stem}.json")), dir.join(format!("{stem}_histogram.csv")));
        self.save_stamped(&json, &c)?;
        write_histogram_csv(&csv, &c.histogram)?;
        self.write_manifest("compare", started, &[json, csv])?;
        Ok(c)
    }

    /// Writes the mixed-integer subproblem MPC faces at `t0` on an
    /// assessment scenario, from the default start state.
    pub fn export_milp(&self, t0: usize, horizon: usize, scenario: usize) -> Result<MilpExport> {
        let started = Instant::now();
        let m = self.model();
        if horizon == 0 || t0 + horizon > m.horizon() {
            return Err(EmsError::InvalidArgument(format!(
                "need 1 <= horizon and t0 + horizon <= {} (got t0 = {t0}, horizon = {horizon})",
                m.horizon()
            )));
        }
        let set = self.load_scenarios(Role::Assessment)?;
        let s = set.scenarios().get(scenario).ok_or_else(|| {
            EmsError::InvalidArgument(format!("scenario {scenario} out of range (set has {})", set.len()))
        })?;
        let noise = self.load_noise()?;
        let w_t0 = s.noise[t0];
        let f = forecast(&noise.log_ar1, &self.profiles(), t0, &w_t0, horizon)?;
        let x0 = default_initial_state(m, &w_t0);
        let top = self.pm10_top()?;
        let (artifact, layout) = build_milp(m, t0, &x0, &f, horizon, top)?;
        let dp = solve_deterministic(m, &self.state_grid()?, &self.offline_mesh()?, t0, &x0, &f, horizon)?;
        let point = layout.point(m, &f, &dp.controls, &dp.states)?;
        let dir = self.root.join("milp");
        fs::create_dir_all(&dir)?;
        let mps_path = dir.join(format!("ems_t{t0}_h{horizon}_s{scenario}.mps"));
        fs::write(&mps_path, write_mps(&artifact)?)?;
        let out = MilpExport {
            mps_path: mps_path.clone(),
            t0,
            horizon,
            scenario,
            start: x0,
            variables: artifact.variables.len(),
            rows: artifact.rows.len(),
            binaries: artifact.integer_count(),
            dp_objective: artifact.objective_value(&point),
            dp_max_violation: artifact.max_violation(&point),
        };
        let json = mps_path.with_extension("json");
        self.save_stamped(&json, &out)?;
        self.write_manifest("export-milp", started, &[mps_path, json])?;
        Ok(out)
    }

    /// Euler against the adaptive reference on the reference operation of
    /// the nominal day, plus a 30-minute step.
    pub fn validate_discretization(&self) -> Result<DiscretizationReport> {
        let started = Instant::now();
        let m = self.model();
        let trace = crate::calibrate::reference_trace(m, &self.profiles())?;
        let scenario = self.profiles().nominal();
        let inputs = ContinuousInputs::from_trace(m, &trace, &scenario)?;
        let stride = (0.5 / m.delta()).round().max(1.0) as usize;
        let stride = if m.horizon().is_multiple_of(stride) { stride } else { 1 };
        let report = validate_discretization(m, &inputs, &trace.states[0], stride)?;
        let path = self.root.join("discretization.json");
        self.save_stamped(&path, &report)?;
        self.write_manifest("validate-discretization", started, &[path])?;
        Ok(report)
    }

    /// Table of savings, comfort and timing, as markdown.
    pub fn report(&self) -> Result<String> {
        let started = Instant::now();
        let summary = self.load_summary()?;
        let text = render_report(&summary);
        let path = self.root.join("report.md");
        fs::write(&path, &text)?;
        self.write_manifest("report", started, &[path])?;
        Ok(text)
    }
}

fn pm(mean: f64, se: f64) -> String {
    format!("{mean:.2} ± {se:.2}")
}

pub fn render_report(s: &AssessmentSummary) -> String {
    let r = &s.report;
    let mut out = String::new();
    let n = r.reference.scenarios;
    let _ = writeln!(out, "# Assessment on {n} scenarios\n");
    let _ = writeln!(
        out,
        "Reference: money {} €, mean PM10 {} µg/m³. Values are mean ± standard deviation over scenarios; savings are policy minus reference (negative saves).\n",
        pm(r.reference.money_cost.mean, r.reference.money_cost.std),
        pm(r.reference.mean_pm10.mean, r.reference.mean_pm10.std),
    );
    let _ = writeln!(
        out,
        "| policy | money savings (€) | energy savings (kWh) | device energy savings (kWh) | mean PM10 | online mean / max (ms) | offline (s) |"
    );
    let _ = writeln!(out, "|---|---|---|---|---|---|---|");
    for p in &r.policies {
        let timing = s.timing.iter().find(|t| t.policy == p.policy);
        let offline = timing.map_or(0.0, |t| t.offline_seconds);
        let online_max = timing.map_or(p.online_mean_ms, |t| t.online_max_ms);
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {:.3} / {:.1} | {:.1} |",
            p.policy,
            pm(p.money_savings.mean, p.money_savings.std),
            pm(p.energy_savings_kwh.mean, p.energy_savings_kwh.std),
            pm(p.device_energy_savings_kwh.mean, p.device_energy_savings_kwh.std),
            pm(p.mean_pm10.mean, p.mean_pm10.std),
            p.online_mean_ms,
            online_max,
            offline,
        );
    }
    if !s.comparisons.is_empty() {
        let _ = writeln!(out, "\nAgainst MPC on the optimized objective:\n");
        for c in &s.comparisons {
            let _ = writeln!(
                out,
                "- {} cheaper on {} of {} scenarios ({:.1} %), mean relative gap {:.3} %",
                c.a,
                c.wins,
                c.gaps.len(),
                100.0 * c.win_fraction(),
                100.0 * c.gaps.iter().sum::<f64>() / c.gaps.len() as f64
            );
        }
    }
    out
}

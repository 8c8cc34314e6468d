//! Acceptance criteria 1-10. Runs serially so that each runtime bound is
//! measured alone, and prints one line per criterion.
//!
//! `ACCEPTANCE_ONLY=3,5` restricts the run to the listed criteria.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use subway_ems::assess::{compare, default_initial_state, monte_carlo, simulate, write_outcomes_csv, Metric, Stats};
use subway_ems::calibrate::{lambda_scan, reference_trace};
use subway_ems::config::ExperimentConfig;
use subway_ems::integrator::{validate_discretization, ContinuousInputs};
use subway_ems::model::{NoiseVector, Policy, State, StationModel, VentMode};
use subway_ems::mpc::{
    build_milp, parse_mps, solve_deterministic, write_mps, MpcConfig, MpcController, MpcSolver, PerfectForecaster,
};
use subway_ems::pipeline::{AssessmentSummary, Pipeline, PolicyKind};
use subway_ems::scenarios::{
    fit_log_ar1, generate_braking, quantize_marginals, sample_from_marginals, sample_log_ar1, write_scenario_set,
    GeneratorProfile, LogAR1Model, ResidualSource, Role, ScenarioSet, DEFAULT_EPS_LOG,
};
use subway_ems::sdp::{
    backward_induction_sdpa, backward_induction_sdpo, Axis, ControlMesh, OnlineLaw, SdpaPolicy, SdpoPolicy, StateGrid,
};
use subway_ems::EmsError;

use common::oracle::{instance, sdpa_instance, tree_sdpa, tree_sdpo};
use common::{toy_grid, toy_mesh_small};

// ---- pinned tolerances ----
const C1_MEAN_ERROR_PCT: f64 = 1.0;
const C1_MIN_RATIO: f64 = 1.8;
const C1_RUNTIME: Duration = Duration::from_secs(10);
const C2_TOL: f64 = 1e-9;
const C2_RUNTIME: Duration = Duration::from_secs(1);
const C3_SCENARIOS: usize = 1000;
const C3_REL: f64 = 0.02;
const C3_RUNTIME: Duration = Duration::from_secs(5 * 60);
const C4_RUNTIME: Duration = Duration::from_secs(10 * 60);
const C5_TOL: f64 = 1e-9;
const C6_INSTANCES: usize = 24;
const C6_TOL: f64 = 1e-6;
const C7_SCENARIOS: usize = 500;
const C7_TOL: f64 = 0.02;
const C8_PM10_SLACK: f64 = 0.02;
const C8_WIN_FRACTION: f64 = 0.95;
const C8_RUNTIME: Duration = Duration::from_secs(30 * 60);
const C9_SDP_MEAN_MS: f64 = 100.0;
const C9_MPC_MAX_MS: f64 = 1000.0;

const SEED: u64 = 4242;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Desk {
    m: StationModel,
    profiles: Arc<subway_ems::scenarios::DeterministicProfiles>,
    optimization: ScenarioSet,
    grid: StateGrid,
    mesh: ControlMesh,
}

fn desk() -> Desk {
    let cfg = ExperimentConfig::desk();
    let m = cfg.model.clone();
    let profiles = Arc::new(cfg.generator.deterministic(&m.time));
    let top = 2.0 * reference_trace(&m, &profiles).unwrap().max_pm10;
    let optimization = generate_braking(
        &cfg.generator,
        &m.time,
        Role::Optimization,
        SEED,
        cfg.scenarios.optimization_count,
    )
    .unwrap();
    Desk {
        grid: StateGrid::for_model(&m, cfg.sdp.n_soc, cfg.sdp.n_pm10, top).unwrap(),
        mesh: ControlMesh::uniform(&m.battery, cfg.sdp.battery_levels).unwrap(),
        m,
        profiles,
        optimization,
    }
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let m = StationModel::default();
    let profiles = GeneratorProfile::default().deterministic(&m.time);
    let trace = reference_trace(&m, &profiles).unwrap();
    let inputs = ContinuousInputs::from_trace(&m, &trace, &profiles.nominal()).unwrap();
    let r = validate_discretization(&m, &inputs, &trace.states[0], 15).unwrap();
    let elapsed = started.elapsed();
    let err = r.euler.pm10.mean_pct.max(r.euler.soc.mean_pct);
    let min_ratio = r.convergence_ratios.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        err <= C1_MEAN_ERROR_PCT
            && min_ratio >= C1_MIN_RATIO
            && r.coarse.pm10.mean_pct > r.euler.pm10.mean_pct
            && elapsed < C1_RUNTIME,
        format!(
            "Euler mean rel. error {:.3}% ± {:.3}% (<= {C1_MEAN_ERROR_PCT}%), min halving ratio {min_ratio:.3} (>= {C1_MIN_RATIO}), 30-min step error {:.1}%, {:.3}s",
            r.euler.pm10.mean_pct,
            r.euler.pm10.std_pct,
            r.coarse.pm10.mean_pct,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let (m, p, q) = instance();
    let mesh = toy_mesh_small();
    let mut worst: f64 = 0.0;
    let mut nodes = 0;
    let g = toy_grid();
    let table = backward_induction_sdpo(&m, &p, &g, &mesh, &q).unwrap();
    for t in 0..=m.horizon() {
        for (i, &s) in g.soc.nodes().iter().enumerate() {
            for (j, &c) in g.pm10.nodes().iter().enumerate() {
                let want = tree_sdpo(&m, &p, &q, &mesh, t, State::new(s, c));
                worst = worst.max((table.at_node(t, 0, i, j) - want).abs());
                nodes += 1;
            }
        }
    }
    let (noise, z, axis) = sdpa_instance();
    let ga = toy_grid().with_braking(axis.clone());
    let table = backward_induction_sdpa(&m, &p, &ga, &mesh, &noise, &z).unwrap();
    // successors stay on the braking axis while enough headroom remains
    let headroom = [2usize, 1, 0, 0];
    for t in 0..=m.horizon() {
        for (gi, &b) in axis.nodes().iter().enumerate() {
            if gi + headroom[t] > 2 {
                continue;
            }
            for (i, &s) in ga.soc.nodes().iter().enumerate() {
                for (j, &c) in ga.pm10.nodes().iter().enumerate() {
                    let want = tree_sdpa(&m, &p, &noise, &z, &mesh, t, State::new(s, c), b);
                    worst = worst.max((table.at_node(t, gi, i, j) - want).abs());
                    nodes += 1;
                }
            }
        }
    }
    let elapsed = started.elapsed();
    outcome(
        worst <= C2_TOL && elapsed < C2_RUNTIME,
        format!(
            "max |V - tree| = {worst:.2e} over {nodes} SDPO/SDPA nodes (T={}, 3 controls, 2 atoms), {:.3}s",
            m.horizon(),
            elapsed.as_secs_f64()
        ),
    )
}

fn consistency(costs: &[f64], v0: f64) -> (bool, String) {
    let s = Stats::of(costs.iter().copied());
    let se = s.standard_error(costs.len());
    let gap = (s.mean - v0).abs();
    let tol = (2.0 * se).max(C3_REL * v0.abs());
    (
        gap <= tol,
        format!(
            "simulated {:.4} ± {se:.4} (SE) vs V0 {v0:.4}, gap {gap:.4} <= {tol:.4}",
            s.mean
        ),
    )
}

fn criterion_3(d: &Desk) -> Outcome {
    let started = Instant::now();
    let marginals = Arc::new(quantize_marginals(&d.optimization, 10, SEED).unwrap());
    let table = Arc::new(backward_induction_sdpo(&d.m, &d.profiles, &d.grid, &d.mesh, &marginals).unwrap());
    let set = sample_from_marginals(&marginals, &d.profiles, Role::Assessment, SEED + 3, C3_SCENARIOS).unwrap();
    let x0 = default_initial_state(&d.m, &set.scenarios()[0].noise[0]);
    let factory = |_: usize, _: &_| {
        Ok(Box::new(SdpoPolicy::new(
            d.m.clone(),
            d.profiles.clone(),
            table.clone(),
            d.mesh.clone(),
            OnlineLaw::Offline(marginals.clone()),
        )?) as Box<dyn Policy>)
    };
    let r = monte_carlo(&d.m, &factory, &set, &x0).unwrap();
    let costs: Vec<f64> = r.outcomes.iter().map(|o| o.total_cost).collect();
    let (ok, text) = consistency(&costs, table.interpolate(0, &x0));
    let elapsed = started.elapsed();
    outcome(
        ok && elapsed < C3_RUNTIME,
        format!("{C3_SCENARIOS} i.i.d. scenarios: {text}, {:.1}s", elapsed.as_secs_f64()),
    )
}

fn criterion_4(d: &Desk) -> Outcome {
    let started = Instant::now();
    let noise = Arc::new(fit_log_ar1(&d.optimization, DEFAULT_EPS_LOG, true).unwrap());
    let atoms = Arc::new(noise.residual_atoms(10, SEED));
    let top = d.optimization.scenarios().iter().flat_map(|s| s.braking()).fold(0.0, f64::max);
    let grid = d.grid.clone().with_braking(Axis::log_spaced(top, 21, DEFAULT_EPS_LOG).unwrap());
    let table = Arc::new(backward_induction_sdpa(&d.m, &d.profiles, &grid, &d.mesh, &noise, &atoms).unwrap());
    let b0 = 0.0;
    let set = sample_log_ar1(
        &noise,
        &d.profiles,
        ResidualSource::Atoms(&atoms),
        Role::Assessment,
        SEED + 4,
        C3_SCENARIOS,
        b0,
    )
    .unwrap();
    let x0 = default_initial_state(&d.m, &set.scenarios()[0].noise[0]);
    let factory = |_: usize, _: &_| {
        Ok(Box::new(SdpaPolicy::new(
            d.m.clone(),
            d.profiles.clone(),
            table.clone(),
            d.mesh.clone(),
            noise.clone(),
            atoms.clone(),
        )?) as Box<dyn Policy>)
    };
    let r = monte_carlo(&d.m, &factory, &set, &x0).unwrap();
    let costs: Vec<f64> = r.outcomes.iter().map(|o| o.total_cost).collect();
    let (ok, text) = consistency(&costs, table.interpolate_augmented(0, &x0, b0));
    let elapsed = started.elapsed();
    outcome(
        ok && elapsed < C4_RUNTIME,
        format!(
            "{C3_SCENARIOS} log-AR(1) scenarios (a = {:.4}): {text}, {:.1}s",
            noise.a,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_5() -> Outcome {
    let m = StationModel::default();
    let gp = GeneratorProfile::default();
    let profiles = gp.deterministic(&m.time);
    let top = 2.0 * reference_trace(&m, &profiles).unwrap().max_pm10;
    let grid = Arc::new(StateGrid::for_model(&m, 11, 11, top).unwrap());
    let mesh = Arc::new(ControlMesh::uniform(&m.battery, 5).unwrap());
    let set = generate_braking(&gp, &m.time, Role::Assessment, SEED + 5, 2).unwrap();
    let mut worst: f64 = 0.0;
    let mut detail = String::new();
    for s in set.scenarios() {
        let x0 = default_initial_state(&m, &s.noise[0]);
        let dp = solve_deterministic(&m, &grid, &mesh, 0, &x0, &s.noise[1..], m.horizon()).unwrap();
        let cfg = MpcConfig {
            reoptimization_step: 1,
            horizon: m.horizon(),
            solver: MpcSolver::DeterministicDp,
        };
        let mut mpc = MpcController::new(
            m.clone(),
            grid.clone(),
            mesh.clone(),
            cfg,
            Box::new(PerfectForecaster { scenario: s.clone() }),
        )
        .unwrap();
        let trace = simulate(&m, &mut mpc, s, &x0).unwrap();
        worst = worst.max((trace.total_cost - dp.cost).abs());
        detail = format!(
            "closed loop {:.9} vs DP {:.9}, {} re-solves",
            trace.total_cost,
            dp.cost,
            mpc.reoptimizations()
        );
    }
    outcome(
        worst <= C5_TOL,
        format!("perfect forecast, N_mpc = 1, h = T: max |gap| {worst:.2e} ({detail})"),
    )
}

fn criterion_6() -> Outcome {
    let m = StationModel::default();
    let profiles = GeneratorProfile::default().deterministic(&m.time);
    let top = 400.0;
    let grid = StateGrid::for_model(&m, 21, 21, top).unwrap();
    let mesh = ControlMesh::uniform(&m.battery, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 6);
    let (mut worst, mut worst_obj, mut worst_product): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut complementarity = true;
    let mut round_trip = true;
    for _ in 0..C6_INSTANCES {
        let h = rng.random_range(2..=6);
        let t0 = rng.random_range(0..m.horizon() - h);
        let x0 = State::new(
            rng.random_range(m.battery.soc_min..=m.battery.soc_max),
            rng.random_range(0.0..250.0),
        );
        let forecast: Vec<NoiseVector> = (1..=h)
            .map(|s| {
                let mut w = profiles.noise(t0 + s, rng.random_range(0.0..300.0));
                w.n = rng.random_range(0.0..40.0);
                w
            })
            .collect();
        let dp = solve_deterministic(&m, &grid, &mesh, t0, &x0, &forecast, h).unwrap();
        let (artifact, layout) = build_milp(&m, t0, &x0, &forecast, h, top).unwrap();
        let x = layout.point(&m, &forecast, &dp.controls, &dp.states).unwrap();
        worst = worst.max(artifact.max_violation(&x));
        worst_obj = worst_obj.max((artifact.objective_value(&x) - dp.cost).abs());
        for (s, u) in dp.controls.iter().enumerate() {
            let y = if m.ventilation.mode_of(u.u_v) == Some(VentMode::High) { 1.0 } else { 0.0 };
            assert_eq!(x[layout.high_mode(s)], y);
            worst_product = worst_product.max((x[layout.product(s)] - y * x[layout.pm10(s)]).abs());
            complementarity &= x[layout.charge(s)] * x[layout.discharge(s)] == 0.0;
        }
        round_trip &= parse_mps(&write_mps(&artifact).unwrap()).is_ok();
    }
    outcome(
        worst <= C6_TOL && worst_product <= C6_TOL && complementarity && round_trip && worst_obj <= C6_TOL,
        format!(
            "{C6_INSTANCES} instances: max violation {worst:.2e}, max |a - y c| {worst_product:.2e}, u+ u- = 0: {complementarity}, |objective - DP cost| {worst_obj:.2e}, MPS parses: {round_trip}"
        ),
    )
}

/// Synthetic log-AR(1) data with a daily intercept profile.
fn synthetic_set(a: f64, profiles: &subway_ems::scenarios::DeterministicProfiles, seed: u64) -> ScenarioSet {
    let steps = profiles.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let level = |t: usize| (60.0f64 + DEFAULT_EPS_LOG).ln() + 0.5 * (std::f64::consts::TAU * t as f64 / steps as f64).sin();
    let sigma = 0.4;
    let mut residuals = vec![vec![]];
    for t in 1..steps {
        let dist = Normal::new((1.0 - a) * level(t), sigma).unwrap();
        residuals.push((0..400).map(|_| dist.sample(&mut rng)).collect());
    }
    let truth = LogAR1Model::new(a, DEFAULT_EPS_LOG, residuals, false).unwrap();
    sample_log_ar1(
        &truth,
        profiles,
        ResidualSource::Empirical,
        Role::Optimization,
        seed,
        C7_SCENARIOS,
        60.0,
    )
    .unwrap()
}

fn criterion_7() -> Outcome {
    let m = StationModel::default();
    let profiles = GeneratorProfile::default().deterministic(&m.time);
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, a) in [0.3, 0.6, 0.9].into_iter().enumerate() {
        let set = synthetic_set(a, &profiles, SEED + 70 + i as u64);
        let fit = fit_log_ar1(&set, DEFAULT_EPS_LOG, true).unwrap();
        ok &= (fit.a - a).abs() <= C7_TOL;
        parts.push(format!("a={a}: {:.4}", fit.a));
    }
    outcome(ok, format!("{} ({C7_SCENARIOS} scenarios, ±{C7_TOL})", parts.join(", ")))
}

fn run_desk_pipeline() -> (AssessmentSummary, Duration) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::desk();
    cfg.output_dir = dir.path().to_path_buf();
    let started = Instant::now();
    let p = Pipeline::new(cfg).unwrap();
    p.gen_scenarios().unwrap();
    p.fit_noise().unwrap();
    p.offline_sdpo().unwrap();
    p.offline_sdpa().unwrap();
    let summary = p.assess(&PolicyKind::OPTIMIZED).unwrap();
    let text = p.report().unwrap();
    let elapsed = started.elapsed();
    println!("{text}");
    (summary, elapsed)
}

fn criterion_8(s: &AssessmentSummary, elapsed: Duration) -> Outcome {
    let r = &s.report;
    let reference_pm10 = r.reference.mean_pm10.mean;
    let mut hard = elapsed < C8_RUNTIME;
    let mut parts = Vec::new();
    for p in &r.policies {
        let savings = p.money_savings.mean < 0.0 && p.energy_savings_kwh.mean < 0.0;
        let comfort = p.mean_pm10.mean <= reference_pm10 * (1.0 + C8_PM10_SLACK);
        hard &= savings && comfort;
        parts.push(format!(
            "{}: {:+.2} €, {:+.1} kWh, PM10 {:.2}",
            p.policy, p.money_savings.mean, p.energy_savings_kwh.mean, p.mean_pm10.mean
        ));
    }
    let cost = |name: &str| r.policies.iter().find(|p| p.policy == name).map(|p| p.total_cost.mean).unwrap();
    let (sdpa, sdpo, mpc) = (cost("SDPA"), cost("SDPO"), cost("MPC"));
    let win = |name: &str| s.comparisons.iter().find(|c| c.a == name).map(|c| c.win_fraction()).unwrap();
    let (sdpo_win, sdpa_win) = (win("SDPO"), win("SDPA"));
    let soft = sdpa <= sdpo && sdpo <= mpc && sdpo_win >= C8_WIN_FRACTION;
    outcome(
        hard,
        format!(
            "(a,b) {}; reference PM10 {reference_pm10:.2} (+{:.0}% allowed); (c) soft check {}: mean cost SDPA {sdpa:.3}, SDPO {sdpo:.3}, MPC {mpc:.3}, SDPO cheaper than MPC on {:.1}% (SDPA {:.1}%); {:.0}s",
            parts.join("; "),
            100.0 * C8_PM10_SLACK,
            if soft { "holds" } else { "does not hold" },
            100.0 * sdpo_win,
            100.0 * sdpa_win,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_9(s: &AssessmentSummary) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for t in &s.timing {
        let pass = match t.policy.as_str() {
            "MPC" => t.online_max_ms <= C9_MPC_MAX_MS,
            _ => t.online_mean_ms <= C9_SDP_MEAN_MS,
        };
        ok &= pass;
        parts.push(format!(
            "{} mean {:.3} ms / max {:.1} ms (offline {:.1}s)",
            t.policy, t.online_mean_ms, t.online_max_ms, t.offline_seconds
        ));
    }
    outcome(ok, parts.join(", "))
}

fn criterion_10(d: &Desk) -> Outcome {
    let gp = GeneratorProfile::default();
    let mut checks = Vec::new();

    // role guards
    let assessment = generate_braking(&gp, &d.m.time, Role::Assessment, SEED + 10, 60).unwrap();
    let sealed = |r: Result<(), EmsError>| matches!(r, Err(EmsError::Sealing { .. }));
    let x0 = default_initial_state(&d.m, &assessment.scenarios()[0].noise[0]);
    let reference = |_: usize, _: &_| Ok(Box::new(subway_ems::model::reference_policy(&d.m)) as Box<dyn Policy>);
    let guards = [
        sealed(monte_carlo(&d.m, &reference, &d.optimization, &x0).map(|_| ())),
        sealed(fit_log_ar1(&assessment, DEFAULT_EPS_LOG, true).map(|_| ())),
        sealed(quantize_marginals(&assessment, 10, 0).map(|_| ())),
        sealed(
            lambda_scan(
                &d.m,
                &d.profiles,
                &d.grid,
                &d.mesh,
                &Arc::new(quantize_marginals(&d.optimization, 10, 0).unwrap()),
                &assessment,
                &[1e-3],
            )
            .map(|_| ()),
        ),
    ];
    checks.push(("role guards", guards.iter().all(|&g| g)));

    // serial versus parallel
    let dir = tempfile::tempdir().unwrap();
    let marginals = Arc::new(quantize_marginals(&d.optimization, 10, SEED).unwrap());
    let table = Arc::new(backward_induction_sdpo(&d.m, &d.profiles, &d.grid, &d.mesh, &marginals).unwrap());
    let run = |threads: usize, tag: &str| -> (Vec<u8>, Vec<u8>) {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let set = generate_braking(&gp, &d.m.time, Role::Assessment, SEED + 11, 200).unwrap();
            let spath = dir.path().join(format!("scenarios_{tag}.csv"));
            write_scenario_set(&set, &spath, "hash").unwrap();
            let sdpo = |_: usize, _: &_| {
                Ok(Box::new(SdpoPolicy::new(
                    d.m.clone(),
                    d.profiles.clone(),
                    table.clone(),
                    d.mesh.clone(),
                    OnlineLaw::Offline(marginals.clone()),
                )?) as Box<dyn Policy>)
            };
            let base = monte_carlo(&d.m, &reference, &set, &x0).unwrap();
            let r = monte_carlo(&d.m, &sdpo, &set, &x0).unwrap();
            let opath = dir.path().join(format!("outcomes_{tag}.csv"));
            write_outcomes_csv(&opath, &r, &base).unwrap();
            assert_eq!(compare(&r, &base, Metric::TotalCost, 10).unwrap().gaps.len(), 200);
            (fs::read(spath).unwrap(), fs::read(opath).unwrap())
        })
    };
    let serial = run(1, "serial");
    let parallel = run(4, "parallel");
    let again = run(4, "again");
    checks.push(("scenario files serial = parallel", serial.0 == parallel.0 && parallel.0 == again.0));
    checks.push(("assessment CSV serial = parallel", serial.1 == parallel.1 && parallel.1 == again.1));
    outcome(
        checks.iter().all(|c| c.1),
        checks.iter().map(|(n, ok)| format!("{n}: {ok}")).collect::<Vec<_>>().join(", "),
    )
}

fn main() -> ExitCode {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().is_none_or(|v| v.contains(&n));
    let guarded = |f: &dyn Fn() -> Outcome| -> Outcome {
        catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        })
    };

    let needs_desk = [3, 4, 10].iter().any(|&n| wanted(n));
    let d = needs_desk.then(desk);
    let mut desk_run: Option<(AssessmentSummary, Duration)> = None;
    let mut failures = 0;
    for n in 1..=10 {
        if !wanted(n) {
            continue;
        }
        let o = match n {
            1 => guarded(&criterion_1),
            2 => guarded(&criterion_2),
            3 => guarded(&|| criterion_3(d.as_ref().unwrap())),
            4 => guarded(&|| criterion_4(d.as_ref().unwrap())),
            5 => guarded(&criterion_5),
            6 => guarded(&criterion_6),
            7 => guarded(&criterion_7),
            8 | 9 => {
                if desk_run.is_none() {
                    match catch_unwind(run_desk_pipeline) {
                        Ok(r) => desk_run = Some(r),
                        Err(_) => {
                            println!("criterion {n}: FAIL | desk pipeline panicked");
                            failures += 1;
                            continue;
                        }
                    }
                }
                let (s, elapsed) = desk_run.as_ref().unwrap();
                if n == 8 {
                    guarded(&|| criterion_8(s, *elapsed))
                } else {
                    guarded(&|| criterion_9(s))
                }
            }
            10 => guarded(&|| criterion_10(d.as_ref().unwrap())),
            _ => unreachable!(),
        };
        println!("criterion {n}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failures += usize::from(!o.pass);
    }
    if failures == 0 {
        println!("acceptance: all selected criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criteria fail");
        ExitCode::FAILURE
    }
}

//! Statistical experiments on small grids: forecast quality and sample size.

use std::sync::Arc;

use subway_ems::assess::{default_initial_state, monte_carlo, Stats};
use subway_ems::calibrate::reference_trace;
use subway_ems::model::{Policy, StationModel};
use subway_ems::mpc::{LogAR1Forecaster, MpcConfig, MpcController, ScaledErrorForecaster};
use subway_ems::scenarios::{fit_log_ar1, generate_braking, quantize_marginals, GeneratorProfile, Role, DEFAULT_EPS_LOG};
use subway_ems::sdp::{backward_induction_sdpo, ControlMesh, OnlineLaw, SdpoPolicy, StateGrid};

fn small_grid(m: &StationModel, profiles: &subway_ems::scenarios::DeterministicProfiles) -> StateGrid {
    let top = 2.0 * reference_trace(m, profiles).unwrap().max_pm10;
    StateGrid::for_model(m, 11, 11, top).unwrap()
}

#[test]
fn better_braking_forecasts_do_not_raise_mpc_cost() {
    let m = StationModel::default();
    let gp = GeneratorProfile::default();
    let profiles = Arc::new(gp.deterministic(&m.time));
    let grid = Arc::new(small_grid(&m, &profiles));
    let mesh = Arc::new(ControlMesh::uniform(&m.battery, 5).unwrap());
    let optimization = generate_braking(&gp, &m.time, Role::Optimization, 11, 200).unwrap();
    let noise = Arc::new(fit_log_ar1(&optimization, DEFAULT_EPS_LOG, true).unwrap());
    let set = generate_braking(&gp, &m.time, Role::Assessment, 12, 200).unwrap();
    let x0 = default_initial_state(&m, &set.scenarios()[0].noise[0]);
    let cfg = MpcConfig { reoptimization_step: 30, horizon: 30, ..MpcConfig::default() };

    let run = |scale: f64| {
        let factory = |_: usize, s: &subway_ems::scenarios::Scenario| {
            let base = LogAR1Forecaster { noise: noise.clone(), profiles: profiles.clone() };
            let f = ScaledErrorForecaster { scenario: s.clone(), base, scale };
            Ok(Box::new(MpcController::new(m.clone(), grid.clone(), mesh.clone(), cfg.clone(), Box::new(f))?)
                as Box<dyn Policy>)
        };
        monte_carlo(&m, &factory, &set, &x0).unwrap()
    };
    let results: Vec<_> = [1.0, 0.5, 0.0].into_iter().map(run).collect();
    for pair in results.windows(2) {
        let gaps: Vec<f64> = pair[1]
            .outcomes
            .iter()
            .zip(&pair[0].outcomes)
            .map(|(b, a)| b.total_cost - a.total_cost)
            .collect();
        let s = Stats::of(gaps.iter().copied());
        // paired: the smaller error may only be worse within sampling noise
        assert!(s.mean <= 2.0 * s.standard_error(gaps.len()), "mean paired gap {} (SE {})", s.mean, s.standard_error(gaps.len()));
    }
}

#[test]
fn doubling_the_sample_moves_the_mean_within_noise() {
    let m = StationModel::default();
    let gp = GeneratorProfile::default();
    let profiles = Arc::new(gp.deterministic(&m.time));
    let grid = small_grid(&m, &profiles);
    let mesh = ControlMesh::uniform(&m.battery, 5).unwrap();
    let optimization = generate_braking(&gp, &m.time, Role::Optimization, 21, 200).unwrap();
    let marginals = Arc::new(quantize_marginals(&optimization, 5, 21).unwrap());
    let table = Arc::new(backward_induction_sdpo(&m, &profiles, &grid, &mesh, &marginals).unwrap());
    let factory = |_: usize, _: &_| {
        Ok(Box::new(SdpoPolicy::new(
            m.clone(),
            profiles.clone(),
            table.clone(),
            mesh.clone(),
            OnlineLaw::Offline(marginals.clone()),
        )?) as Box<dyn Policy>)
    };
    let mean_and_se = |seed: u64, n: usize| {
        let set = generate_braking(&gp, &m.time, Role::Assessment, seed, n).unwrap();
        let x0 = default_initial_state(&m, &set.scenarios()[0].noise[0]);
        let r = monte_carlo(&m, &factory, &set, &x0).unwrap();
        let s = Stats::of(r.outcomes.iter().map(|o| o.total_cost));
        (s.mean, s.standard_error(n))
    };
    let (m1, se1) = mean_and_se(22, 300);
    let (m2, se2) = mean_and_se(23, 600);
    let se = (se1 * se1 + se2 * se2).sqrt();
    assert!((m1 - m2).abs() <= 2.0 * se.max(1e-9), "{m1} vs {m2}, SE {se}");
}

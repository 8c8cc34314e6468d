//! Independent oracles: brute-force enumeration of the Bellman recursion on
//! toy instances, and exact one-dimensional k-means by dynamic programming.

mod common;

use common::oracle::*;
use common::*;
use subway_ems::model::{admissible, dynamics, stage_cost, State, StationModel};
use subway_ems::scenarios::{kmeans_1d, wcss, QuantizedMarginal};
use subway_ems::sdp::{backward_induction_sdpa, backward_induction_sdpo, ControlMesh};

#[test]
fn sdpo_matches_tree_on_every_node() {
    let (m, p, q) = instance();
    for mesh in [toy_mesh_small(), toy_mesh_full()] {
        let g = toy_grid();
        let table = backward_induction_sdpo(&m, &p, &g, &mesh, &q).unwrap();
        for t in 0..=m.horizon() {
            for (i, &s) in g.soc.nodes().iter().enumerate() {
                for (j, &c) in g.pm10.nodes().iter().enumerate() {
                    let want = tree_sdpo(&m, &p, &q, &mesh, t, State::new(s, c));
                    let got = table.at_node(t, 0, i, j);
                    assert!((got - want).abs() <= TOL, "t={t} s={s} c={c}: {got} vs {want}");
                }
            }
        }
    }
}

#[test]
fn sdpo_with_point_marginals_is_deterministic_dp() {
    let (m, p, _) = instance();
    let q = QuantizedMarginal::deterministic(&[0.0, 35.0, 70.0, 10.0]);
    let table = backward_induction_sdpo(&m, &p, &toy_grid(), &toy_mesh_full(), &q).unwrap();
    let want = tree_sdpo(&m, &p, &q, &toy_mesh_full(), 0, State::new(10.0, 100.0));
    assert!((table.interpolate(0, &State::new(10.0, 100.0)) - want).abs() <= TOL);
}

#[test]
fn sdpa_matches_augmented_tree() {
    let (m, p, _) = instance();
    let (noise, z, axis) = sdpa_instance();
    // the largest residual increment still ahead of step t
    let headroom = [2usize, 1, 0, 0];
    for mesh in [toy_mesh_small(), toy_mesh_full()] {
        let g = toy_grid().with_braking(axis.clone());
        let table = backward_induction_sdpa(&m, &p, &g, &mesh, &noise, &z).unwrap();
        for t in 0..=m.horizon() {
            for (gi, &b) in axis.nodes().iter().enumerate() {
                if gi + headroom[t] > 2 {
                    continue;
                }
                for (i, &s) in g.soc.nodes().iter().enumerate() {
                    for (j, &c) in g.pm10.nodes().iter().enumerate() {
                        let want = tree_sdpa(&m, &p, &noise, &z, &mesh, t, State::new(s, c), b);
                        let got = table.at_node(t, gi, i, j);
                        assert!((got - want).abs() <= TOL, "t={t} b={b} s={s} c={c}: {got} vs {want}");
                        let interp = table.interpolate_augmented(t, &State::new(s, c), b);
                        assert!((interp - got).abs() <= TOL);
                    }
                }
            }
        }
    }
}

/// Exact 1-D k-means: optimal partitions of sorted data are contiguous.
fn kmeans_dp(sorted: &[f64], k: usize) -> f64 {
    let n = sorted.len();
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for (i, x) in sorted.iter().enumerate() {
        s1[i + 1] = s1[i] + x;
        s2[i + 1] = s2[i] + x * x;
    }
    let cost = |i: usize, j: usize| {
        let c = (j - i) as f64;
        let s = s1[j] - s1[i];
        (s2[j] - s2[i] - s * s / c).max(0.0)
    };
    let mut d = vec![f64::INFINITY; n + 1];
    d[0] = 0.0;
    for _ in 0..k {
        let mut next = vec![f64::INFINITY; n + 1];
        next[0] = 0.0;
        for j in 1..=n {
            for i in 0..j {
                next[j] = next[j].min(d[i] + cost(i, j));
            }
        }
        d = next;
    }
    d[n]
}

#[test]
fn kmeans_reaches_the_exact_optimum_on_mixtures() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    for case in 0..20 {
        let mut data: Vec<f64> = (0..120)
            .map(|i| {
                let centre = [0.0, 40.0, 95.0][i % 3];
                centre + 8.0 * (rng.random::<f64>() - 0.5)
            })
            .collect();
        data.sort_by(f64::total_cmp);
        let atoms = kmeans_1d(&data, 3, case);
        let opt = kmeans_dp(&data, 3);
        let got = wcss(&data, &atoms.support);
        assert!(got <= opt + 1e-6, "case {case}: {got} > {opt}");
    }
}

/// Cheapest admissible control sequence of length `h`, by enumeration.
fn enumerate_plans(
    m: &StationModel,
    mesh: &ControlMesh,
    t0: usize,
    x0: State,
    forecast: &[subway_ems::model::NoiseVector],
) -> f64 {
    if forecast.is_empty() {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for c in mesh.controls() {
        let u = c.control(m);
        if !admissible(m, &x0, &u) {
            continue;
        }
        let w = &forecast[0];
        let next = dynamics(m, t0, &x0, &u, w).state;
        let v = stage_cost(m, t0, &x0, &u, w, &next) + enumerate_plans(m, mesh, t0 + 1, next, &forecast[1..]);
        best = best.min(v);
    }
    best
}

#[test]
fn deterministic_solver_matches_enumeration() {
    use rand::{Rng, SeedableRng};
    use subway_ems::mpc::solve_deterministic;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let levels = [50.0, 100.0, 150.0];
    for case in 0..25 {
        let prices: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..2.0)).collect();
        let m = toy_model(prices, rng.random_range(0.0..0.02));
        let d: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..80.0)).collect();
        let c_o: Vec<f64> = (0..6).map(|_| levels[rng.random_range(0..3)]).collect();
        let p = toy_profiles(d, c_o);
        let t0 = rng.random_range(0..3);
        let h = 3;
        let forecast: Vec<_> = (1..=h).map(|s| p.noise(t0 + s, rng.random_range(0.0..100.0))).collect();
        let x0 = State::new([0.0, 10.0, 20.0][rng.random_range(0..3)], levels[rng.random_range(0..3)]);
        for mesh in [toy_mesh_small(), toy_mesh_full()] {
            let sol = solve_deterministic(&m, &toy_grid(), &mesh, t0, &x0, &forecast, h).unwrap();
            let want = enumerate_plans(&m, &mesh, t0, x0, &forecast);
            assert!((sol.cost - want).abs() <= TOL, "case {case}: {} vs {want}", sol.cost);
            // the plan replays to its own cost
            let mut x = x0;
            let mut cost = 0.0;
            for (s, u) in sol.controls.iter().enumerate() {
                let next = dynamics(&m, t0 + s, &x, u, &forecast[s]).state;
                cost += stage_cost(&m, t0 + s, &x, u, &forecast[s], &next);
                x = next;
            }
            assert!((cost - sol.cost).abs() <= TOL);
        }
    }
}

#[test]
fn free_energy_and_comfort_pick_idle_low() {
    use subway_ems::model::Control;
    use subway_ems::mpc::solve_deterministic;

    let m = toy_model(vec![0.0; 4], 0.0);
    let p = toy_profiles(vec![10.0; 4], vec![100.0; 4]);
    let forecast = vec![p.noise(1, 0.0)];
    let sol = solve_deterministic(&m, &toy_grid(), &toy_mesh_full(), 0, &State::new(10.0, 100.0), &forecast, 1).unwrap();
    assert_eq!(sol.cost, 0.0);
    assert_eq!(sol.controls[0], Control::new(0.0, m.ventilation.power_low));
}

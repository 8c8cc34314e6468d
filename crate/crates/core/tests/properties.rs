//! Property tests for model, grid, quantization and value-function invariants.

use proptest::prelude::*;

use subway_ems::assess::{Histogram, Stats};
use subway_ems::model::{
    dynamics, stage_cost, step_pm10, step_soc, BatteryParams, Control, NoiseVector, State, StationModel, Tariff,
    TimeGrid,
};
use subway_ems::scenarios::{kmeans_1d, Atoms, DeterministicProfiles, QuantizedMarginal};
use subway_ems::sdp::{backward_induction_sdpo, Axis, ControlMesh, StateGrid};

fn short_model(prices: Vec<f64>) -> StationModel {
    let steps = prices.len() - 1;
    let mut m = StationModel::default();
    m.time = TimeGrid {
        delta_hours: 1.0 / 30.0,
        horizon_steps: steps,
        day_length: steps as f64 / 30.0,
    };
    m.economics.tariff = Tariff::PerStep { prices };
    m
}

fn noise() -> impl Strategy<Value = NoiseVector> {
    (0.0..150.0, 0.0..400.0, 0.0..50.0, 0.0..120.0).prop_map(|(d, b, n, c)| NoiseVector::new(d, b, n, c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn soc_step_is_monotone_and_lipschitz(s1 in 30.0..90.0f64, s2 in 30.0..90.0f64, u1 in -100.0..100.0f64, u2 in -100.0..100.0f64) {
        let b = BatteryParams::default();
        let g = TimeGrid::default();
        let (lo, hi) = if u1 <= u2 { (u1, u2) } else { (u2, u1) };
        prop_assert!(step_soc(&b, &g, s1, lo) <= step_soc(&b, &g, s1, hi));
        let gap = (step_soc(&b, &g, s1, u1) - step_soc(&b, &g, s2, u1)).abs();
        prop_assert!(gap <= (s1 - s2).abs() + 1e-12);
    }

    #[test]
    fn round_trip_loses_energy(s in 40.0..80.0f64, e in 0.1..5.0f64) {
        let b = BatteryParams::default();
        let g = TimeGrid::default();
        // charge `e` kWh of grid energy, then draw `e` kWh back
        let up = step_soc(&b, &g, s, e / g.delta_hours);
        let down = step_soc(&b, &g, up, -e / g.delta_hours);
        prop_assert!(down < s);
        let lossless = BatteryParams { rho_c: 1.0, rho_d: 1.0, ..b };
        let up = step_soc(&lossless, &g, s, e / g.delta_hours);
        prop_assert!((step_soc(&lossless, &g, up, -e / g.delta_hours) - s).abs() < 1e-12);
    }

    #[test]
    fn stage_cost_is_nonnegative_and_dynamics_deterministic(
        soc in 30.0..90.0f64, c in 0.0..300.0f64, u_b in -100.0..100.0f64, high in any::<bool>(), w in noise(), t in 0usize..720
    ) {
        let m = StationModel::default();
        let x = State::new(soc, c);
        let u = Control::new(u_b, if high { m.ventilation.power_high } else { m.ventilation.power_low });
        let a = dynamics(&m, t, &x, &u, &w);
        let b = dynamics(&m, t, &x, &u, &w);
        prop_assert_eq!(a.state.soc.to_bits(), b.state.soc.to_bits());
        prop_assert_eq!(a.state.pm10.to_bits(), b.state.pm10.to_bits());
        prop_assert!(a.state.pm10 >= 0.0);
        prop_assert!(stage_cost(&m, t, &x, &u, &w, &a.state) >= 0.0);
    }

    #[test]
    fn pm10_iteration_reaches_its_fixed_point(n in 0.0..40.0f64, c_o in 10.0..80.0f64, c0 in 0.0..300.0f64, high in any::<bool>()) {
        let m = StationModel::default();
        let u_v = if high { m.ventilation.power_high } else { m.ventilation.power_low };
        let w = NoiseVector::new(0.0, 0.0, n, c_o);
        let a = &m.air;
        let k = a.ventilation_rate(u_v) + a.beta * n;
        let fixed = (a.alpha * n * n + k * c_o) / (a.delta_dep + k);
        let mut c = c0;
        for _ in 0..5000 {
            c = step_pm10(a, &m.time, c, u_v, &w).concentration;
        }
        prop_assert!((c - fixed).abs() < 1e-6, "{} vs {}", c, fixed);
    }

    #[test]
    fn bracket_reconstructs_points(nodes in prop::collection::btree_set(0u32..1000, 2..12), x in -10.0..1010.0f64) {
        let axis = Axis::new(nodes.iter().map(|&v| v as f64).collect()).unwrap();
        let (k, theta) = axis.bracket(x);
        prop_assert!(k + 1 < axis.len());
        prop_assert!((0.0..=1.0).contains(&theta));
        let xc = x.clamp(axis.lo(), axis.hi());
        let back = (1.0 - theta) * axis.nodes()[k] + theta * axis.nodes()[k + 1];
        prop_assert!((back - xc).abs() < 1e-9);
    }

    #[test]
    fn kmeans_preserves_mass_and_mean(mut data in prop::collection::vec(0.0..500.0f64, 1..200), k in 1usize..12) {
        data.sort_by(f64::total_cmp);
        let atoms = kmeans_1d(&data, k, 3);
        prop_assert!(atoms.len() <= k);
        prop_assert!((atoms.total_mass() - 1.0).abs() < 1e-12);
        let mean = data.iter().sum::<f64>() / data.len() as f64;
        prop_assert!((atoms.mean() - mean).abs() < 1e-9 * mean.max(1.0));
        prop_assert!(atoms.support.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn histogram_counts_every_value(values in prop::collection::vec(-5.0..5.0f64, 1..300), bins in 1usize..50) {
        let h = Histogram::build(&values, bins);
        prop_assert_eq!(h.counts.iter().sum::<usize>(), values.len());
        prop_assert_eq!(h.edges.len(), h.counts.len() + 1);
        let s = Stats::of(values.iter().copied());
        prop_assert!(s.min <= s.mean + 1e-12 && s.mean <= s.max + 1e-12);
    }
}

#[derive(Debug)]
struct Instance {
    m: StationModel,
    profiles: DeterministicProfiles,
    marginals: QuantizedMarginal,
}

fn instance() -> impl Strategy<Value = Instance> {
    let steps = 8usize;
    (
        prop::collection::vec(0.0..0.01f64, steps + 1),
        prop::collection::vec((20.0..100.0f64, 0.0..40.0f64, 20.0..60.0f64), steps + 1),
        prop::collection::vec(prop::collection::vec(0.0..250.0f64, 1..4), steps + 1),
    )
        .prop_map(|(prices, det, braking)| {
            let m = short_model(prices);
            let profiles = DeterministicProfiles {
                d: det.iter().map(|x| x.0).collect(),
                n: det.iter().map(|x| x.1).collect(),
                c_o: det.iter().map(|x| x.2).collect(),
            };
            let steps = braking
                .into_iter()
                .map(|mut v| {
                    v.sort_by(f64::total_cmp);
                    v.dedup();
                    Atoms::uniform(v)
                })
                .collect();
            Instance {
                m,
                profiles,
                marginals: QuantizedMarginal { steps },
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn value_function_invariants(inst in instance()) {
        let Instance { m, profiles, marginals } = inst;
        let grid = StateGrid::for_model(&m, 13, 11, 300.0).unwrap();
        let coarse = ControlMesh::uniform(&m.battery, 5).unwrap();
        let fine = coarse.refined(2).unwrap();
        let v = backward_induction_sdpo(&m, &profiles, &grid, &coarse, &marginals).unwrap();
        let vf = backward_induction_sdpo(&m, &profiles, &grid, &fine, &marginals).unwrap();
        for t in 0..=m.horizon() {
            for j in 0..grid.pm10.len() {
                for i in 0..grid.soc.len() {
                    let (a, b) = (v.at_node(t, 0, i, j), vf.at_node(t, 0, i, j));
                    prop_assert!(a >= 0.0);
                    // a finer battery mesh only adds candidates
                    prop_assert!(b <= a + 1e-9, "t={} i={} j={}: {} > {}", t, i, j, b, a);
                    if i > 0 {
                        // more stored energy never costs more
                        prop_assert!(a <= v.at_node(t, 0, i - 1, j) + 1e-9);
                    }
                }
            }
        }
    }
}

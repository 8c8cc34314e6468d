//! Brute-force Bellman recursions over the whole noise tree, and the toy
//! instances they are checked on.

use super::*;
use subway_ems::model::{admissible, dynamics, stage_cost, State, StationModel};
use subway_ems::scenarios::{Atoms, DeterministicProfiles, LogAR1Model, QuantizedMarginal};
use subway_ems::sdp::{Axis, ControlMesh};

pub const TOL: f64 = 1e-9;

/// `min_u Σ_k π_k [L + V(t+1)]`, recursing over the whole tree.
pub fn tree_sdpo(
    m: &StationModel,
    p: &DeterministicProfiles,
    q: &QuantizedMarginal,
    mesh: &ControlMesh,
    t: usize,
    x: State,
) -> f64 {
    if t == m.horizon() {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for c in mesh.controls() {
        let u = c.control(m);
        if !admissible(m, &x, &u) {
            continue;
        }
        let mut v = 0.0;
        for (b, pr) in q.at(t + 1).iter() {
            let w = p.noise(t + 1, b);
            let next = dynamics(m, t, &x, &u, &w).state;
            v += pr * (stage_cost(m, t, &x, &u, &w, &next) + tree_sdpo(m, p, q, mesh, t + 1, next));
        }
        best = best.min(v);
    }
    best
}

#[allow(clippy::too_many_arguments)]
pub fn tree_sdpa(
    m: &StationModel,
    p: &DeterministicProfiles,
    noise: &LogAR1Model,
    z: &[Atoms],
    mesh: &ControlMesh,
    t: usize,
    x: State,
    b: f64,
) -> f64 {
    if t == m.horizon() {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for c in mesh.controls() {
        let u = c.control(m);
        if !admissible(m, &x, &u) {
            continue;
        }
        let mut v = 0.0;
        for (zq, pr) in z[t + 1].iter() {
            let b_next = noise.transition(b, zq);
            let w = p.noise(t + 1, b_next);
            let next = dynamics(m, t, &x, &u, &w).state;
            v += pr * (stage_cost(m, t, &x, &u, &w, &next) + tree_sdpa(m, p, noise, z, mesh, t + 1, next, b_next));
        }
        best = best.min(v);
    }
    best
}

pub fn instance() -> (StationModel, DeterministicProfiles, QuantizedMarginal) {
    let m = toy_model(vec![0.0, 0.5, 1.2, 0.8], 0.01);
    let p = toy_profiles(vec![0.0, 30.0, 55.0, 20.0], vec![100.0, 50.0, 150.0, 100.0]);
    let q = QuantizedMarginal {
        steps: vec![
            Atoms::point(0.0),
            Atoms { support: vec![0.0, 60.0], probs: vec![0.25, 0.75] },
            Atoms { support: vec![10.0, 90.0], probs: vec![0.5, 0.5] },
            Atoms { support: vec![5.0, 40.0], probs: vec![0.9, 0.1] },
        ],
    };
    (m, p, q)
}

pub fn sdpa_instance() -> (LogAR1Model, Vec<Atoms>, Axis) {
    let eps = 0.1;
    let residuals = vec![vec![], vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0]];
    let noise = LogAR1Model::new(1.0, eps, residuals, false).unwrap();
    let z = vec![
        Atoms::point(0.0),
        Atoms { support: vec![0.0, 1.0], probs: vec![0.3, 0.7] },
        Atoms { support: vec![0.0, 1.0], probs: vec![0.6, 0.4] },
        Atoms::point(0.0),
    ];
    let nodes = (0..3).map(|g| (50f64.ln() + g as f64).exp() - eps).collect();
    (noise, z, Axis::new(nodes).unwrap())
}

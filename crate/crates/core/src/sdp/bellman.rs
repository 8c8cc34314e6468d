//! Bellman step on a (SOC, PM10) layer.
//!
//! Only the braking power is random and it enters the cost alone, so the
//! successor state of every control is known before the expectation is
//! taken. The expected energy bill of a control does not depend on the
//! node, and the SOC successor of a (node, battery level) pair does not
//! depend on the step. A step therefore costs one PM10 interpolation pass
//! per ventilation mode plus one fused row update per control.

use super::grid::{Axis, ControlMesh, StateGrid};
use super::table::Corner;
use crate::error::{EmsError, Result};
use crate::model::{admissible, dynamics, soc_within, step_pm10, step_soc, NoiseVector, State, StationModel, VentMode};
use crate::scenarios::Atoms;

/// Relative slack under which two candidate values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

fn mode_index(mode: VentMode) -> usize {
    match mode {
        VentMode::Low => 0,
        VentMode::High => 1,
    }
}

/// `p Σ_k π_k (base - b_k)^+` with `base = d + u_v + u_b`.
#[inline]
pub fn expected_energy_cost(price: f64, base: f64, atoms: &Atoms) -> f64 {
    let mut acc = 0.0;
    for (b, p) in atoms.iter() {
        acc += p * (base - b).max(0.0);
    }
    price * acc
}

/// Import before braking, `d + u_v + u_b`, summed like `import_power`.
#[inline]
pub(crate) fn import_base(w_next: &NoiseVector, u_b: f64, u_v: f64) -> f64 {
    w_next.d + u_v + u_b
}

/// First index whose value beats the incumbent by more than the tie slack.
pub(crate) fn argmin(values: impl Iterator<Item = Option<f64>>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (idx, v) in values.enumerate() {
        let Some(v) = v else { continue };
        match best {
            Some((_, b)) if !(v < b - TIE_TOLERANCE * b.abs().max(1.0)) => {}
            _ => best = Some((idx, v)),
        }
    }
    best
}

/// Q-values of every mesh control at an arbitrary state. Inadmissible
/// controls give `None`. `cont` evaluates the value function at step `t+1`.
pub(crate) fn q_values(
    m: &StationModel,
    mesh: &ControlMesh,
    t: usize,
    x: &State,
    w_next: &NoiseVector,
    atoms: &Atoms,
    mut cont: impl FnMut(&State) -> f64,
) -> Vec<Option<f64>> {
    let price = m.price(t + 1);
    mesh.controls()
        .iter()
        .map(|c| {
            let u = c.control(m);
            if !admissible(m, x, &u) {
                return None;
            }
            let next = dynamics(m, t, x, &u, w_next).state;
            let stage = expected_energy_cost(price, import_base(w_next, u.u_b, u.u_v), atoms) + m.lambda() * next.pm10;
            Some(stage + cont(&next))
        })
        .collect()
}

/// Per-mode PM10 successors of every PM10 node: `(cell, weight, value)`.
pub(crate) type PmMoves = [Vec<(usize, f64, f64)>; 2];

pub(crate) struct Kernel<'a> {
    m: &'a StationModel,
    n_s: usize,
    n_c: usize,
    soc: &'a Axis,
    pm10: &'a Axis,
    mesh: &'a ControlMesh,
    /// `[level][soc node]` → SOC successor cell, `None` when inadmissible.
    soc_moves: Vec<Vec<Option<(usize, f64)>>>,
    by_mode: [Vec<usize>; 2],
    w: Vec<f64>,
    base: Vec<f64>,
}

impl<'a> Kernel<'a> {
    pub fn new(m: &'a StationModel, grid: &'a StateGrid, mesh: &'a ControlMesh) -> Self {
        let soc_moves = mesh
            .levels()
            .iter()
            .map(|&u_b| {
                grid.soc
                    .nodes()
                    .iter()
                    .map(|&s| {
                        let next = step_soc(&m.battery, &m.time, s, u_b);
                        (soc_within(&m.battery, s) && soc_within(&m.battery, next)).then(|| grid.soc.bracket(next))
                    })
                    .collect()
            })
            .collect();
        let mut by_mode = [Vec::new(), Vec::new()];
        for (idx, c) in mesh.controls().iter().enumerate() {
            by_mode[mode_index(c.mode)].push(idx);
        }
        Self {
            m,
            n_s: grid.soc.len(),
            n_c: grid.pm10.len(),
            soc: &grid.soc,
            pm10: &grid.pm10,
            mesh,
            soc_moves,
            by_mode,
            w: vec![0.0; grid.layer_len()],
            base: vec![0.0; grid.pm10.len()],
        }
    }

    pub fn pm_moves(&self, w_next: &NoiseVector) -> PmMoves {
        let per_mode = |mode: VentMode| {
            let u_v = self.m.ventilation.power(mode);
            self.pm10
                .nodes()
                .iter()
                .map(|&c| {
                    let next = step_pm10(&self.m.air, &self.m.time, c, u_v, w_next).concentration;
                    let (l, phi) = self.pm10.bracket(next);
                    (l, phi, next)
                })
                .collect()
        };
        [per_mode(VentMode::Low), per_mode(VentMode::High)]
    }

    /// Expected energy bill of every mesh control.
    pub fn energy_costs(&self, t: usize, w_next: &NoiseVector, atoms: &Atoms, out: &mut Vec<f64>) {
        let price = self.m.price(t + 1);
        out.clear();
        out.extend(self.mesh.controls().iter().map(|c| {
            let u = c.control(self.m);
            expected_energy_cost(price, import_base(w_next, u.u_b, u.u_v), atoms)
        }));
    }

    /// `out[i, j] = min_u E[L] + V_next(f(x_ij, u))` over admissible controls.
    pub fn step(&mut self, t: usize, pm: &PmMoves, energy: &[f64], v_next: &[f64], out: &mut [f64]) -> Result<()> {
        let (n_s, n_c) = (self.n_s, self.n_c);
        let lambda = self.m.lambda();
        out.fill(f64::INFINITY);
        for mode in 0..2 {
            if self.by_mode[mode].is_empty() {
                continue;
            }
            let moves = &pm[mode];
            for i in 0..n_s {
                let v = &v_next[i * n_c..(i + 1) * n_c];
                let w = &mut self.w[i * n_c..(i + 1) * n_c];
                for (wj, &(l, phi, _)) in w.iter_mut().zip(moves) {
                    *wj = (1.0 - phi) * v[l] + phi * v[l + 1];
                }
            }
            for (b, &(_, _, c)) in self.base.iter_mut().zip(moves) {
                *b = lambda * c;
            }
            for &idx in &self.by_mode[mode] {
                let e = energy[idx];
                let level = &self.soc_moves[self.mesh.level_of(idx)];
                for (i, mv) in level.iter().enumerate() {
                    let Some((k, theta)) = *mv else { continue };
                    let lo = &self.w[k * n_c..(k + 1) * n_c];
                    let hi = &self.w[(k + 1) * n_c..(k + 2) * n_c];
                    let row = &mut out[i * n_c..(i + 1) * n_c];
                    for j in 0..n_c {
                        let cand = (e + self.base[j]) + ((1.0 - theta) * lo[j] + theta * hi[j]);
                        if cand < row[j] {
                            row[j] = cand;
                        }
                    }
                }
            }
        }
        if let Some(pos) = out.iter().position(|v| !v.is_finite()) {
            return Err(EmsError::NoAdmissibleControl {
                t,
                soc: self.soc.nodes()[pos / n_c],
                pm10: self.pm10.nodes()[pos % n_c],
            });
        }
        Ok(())
    }
}

/// Evaluation point of the bilinear interpolant, exposed for the policies.
pub(crate) fn corner(grid: &StateGrid, x: &State) -> Corner {
    Corner::locate(grid, x)
}

//! Mixed-integer linear form of the deterministic subproblem.
//!
//! The battery power is split into a charging part `u+ >= 0` and a
//! discharging part `u- <= 0`, which makes the SOC update linear; no
//! complementarity constraint is needed because using both at once only
//! wastes energy. The ventilation mode is a binary `y`, and the product
//! `y c` in the PM10 balance is replaced by `a` with the big-M envelope
//! `0 <= a <= M y`, `c - (1 - y) M <= a <= c`.

use serde::{Deserialize, Serialize};

use crate::error::{EmsError, Result};
use crate::model::{Control, NoiseVector, State, StationModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpVariable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpRow {
    pub name: String,
    pub sense: RowSense,
    pub rhs: f64,
    /// `(variable index, coefficient)`.
    pub coeffs: Vec<(usize, f64)>,
}

/// A minimization MILP with bounded variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpArtifact {
    pub name: String,
    pub variables: Vec<MilpVariable>,
    pub rows: Vec<MilpRow>,
    pub objective: Vec<(usize, f64)>,
    /// Big-M of the product linearization, when known.
    pub big_m: Option<f64>,
}

impl MilpArtifact {
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(j, c)| c * x[j]).sum()
    }

    /// Largest violation of any row or bound at `x`, plus integrality.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &xv) in self.variables.iter().zip(x) {
            worst = worst.max(v.lower - xv).max(xv - v.upper);
            if v.integer {
                worst = worst.max((xv - xv.round()).abs());
            }
        }
        for r in &self.rows {
            let lhs: f64 = r.coeffs.iter().map(|&(j, c)| c * x[j]).sum();
            let gap = match r.sense {
                RowSense::Le => lhs - r.rhs,
                RowSense::Ge => r.rhs - lhs,
                RowSense::Eq => (lhs - r.rhs).abs(),
            };
            worst = worst.max(gap);
        }
        worst
    }

    pub fn integer_count(&self) -> usize {
        self.variables.iter().filter(|v| v.integer).count()
    }
}

/// Column positions of the subproblem variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MilpLayout {
    pub horizon: usize,
}

impl MilpLayout {
    const PER_STEP: usize = 5;

    pub fn charge(&self, s: usize) -> usize {
        Self::PER_STEP * s
    }
    pub fn discharge(&self, s: usize) -> usize {
        Self::PER_STEP * s + 1
    }
    pub fn high_mode(&self, s: usize) -> usize {
        Self::PER_STEP * s + 2
    }
    pub fn product(&self, s: usize) -> usize {
        Self::PER_STEP * s + 3
    }
    pub fn import(&self, s: usize) -> usize {
        Self::PER_STEP * s + 4
    }
    /// SOC at offset `s ∈ 0..=h`.
    pub fn soc(&self, s: usize) -> usize {
        Self::PER_STEP * self.horizon + s
    }
    /// PM10 at offset `s ∈ 0..=h`.
    pub fn pm10(&self, s: usize) -> usize {
        Self::PER_STEP * self.horizon + self.horizon + 1 + s
    }
    pub fn len(&self) -> usize {
        Self::PER_STEP * self.horizon + 2 * (self.horizon + 1)
    }
    pub fn is_empty(&self) -> bool {
        self.horizon == 0
    }

    /// Variable values of a control/state path, with `a = y c` and the
    /// import set to its positive part.
    pub fn point(
        &self,
        m: &StationModel,
        forecast: &[NoiseVector],
        controls: &[Control],
        states: &[State],
    ) -> Result<Vec<f64>> {
        let h = self.horizon;
        if controls.len() != h || states.len() != h + 1 || forecast.len() < h {
            return Err(EmsError::LengthMismatch("path does not match the MILP horizon".into()));
        }
        let mut x = vec![0.0; self.len()];
        for s in 0..h {
            let u = &controls[s];
            let y = match m.ventilation.mode_of(u.u_v) {
                Some(crate::model::VentMode::High) => 1.0,
                Some(crate::model::VentMode::Low) => 0.0,
                None => {
                    return Err(EmsError::InvalidArgument(format!("ventilation power {} is not a mode", u.u_v)))
                }
            };
            x[self.charge(s)] = u.u_b.max(0.0);
            x[self.discharge(s)] = u.u_b.min(0.0);
            x[self.high_mode(s)] = y;
            x[self.product(s)] = y * states[s].pm10;
            x[self.import(s)] = crate::model::import_power(u, &forecast[s]).max(0.0);
        }
        for (s, st) in states.iter().enumerate() {
            x[self.soc(s)] = st.soc;
            x[self.pm10(s)] = st.pm10;
        }
        Ok(x)
    }
}

/// Builds the subproblem of `h` steps from `x0` at `t0` along `forecast`
/// (`forecast[s] = ŵ_{t0+s+1}`), with big-M `big_m` (the PM10 grid top).
pub fn build_milp(
    m: &StationModel,
    t0: usize,
    x0: &State,
    forecast: &[NoiseVector],
    h: usize,
    big_m: f64,
) -> Result<(MilpArtifact, MilpLayout)> {
    if h == 0 {
        return Err(EmsError::InvalidArgument("MILP horizon must be >= 1".into()));
    }
    if h > 9999 {
        return Err(EmsError::InvalidArgument("MILP horizon must be <= 9999 (8-character MPS names)".into()));
    }
    if forecast.len() < h || t0 + h > m.horizon() {
        return Err(EmsError::InvalidArgument(format!("subproblem from {t0} over {h} steps runs past its data")));
    }
    if !(big_m > 0.0) {
        return Err(EmsError::InvalidArgument("big-M must be > 0".into()));
    }
    let layout = MilpLayout { horizon: h };
    let (b, air, vent) = (&m.battery, &m.air, &m.ventilation);
    let dt = m.delta();
    let kappa = air.rho_v / air.volume;
    let (p_lo, dp) = (vent.power_low, vent.power_high - vent.power_low);

    let var = |name: String, lower: f64, upper: f64, integer: bool| MilpVariable {
        name,
        lower,
        upper,
        integer,
    };
    let mut variables = Vec::with_capacity(layout.len());
    for s in 0..h {
        variables.push(var(format!("UBP{s:04}"), 0.0, b.power_max, false));
        variables.push(var(format!("UBM{s:04}"), b.power_min, 0.0, false));
        variables.push(var(format!("Y{s:04}"), 0.0, 1.0, true));
        variables.push(var(format!("A{s:04}"), 0.0, big_m, false));
        variables.push(var(format!("R{s:04}"), 0.0, f64::INFINITY, false));
    }
    for s in 0..=h {
        variables.push(var(format!("S{s:04}"), b.soc_min, b.soc_max, false));
    }
    for s in 0..=h {
        variables.push(var(format!("C{s:04}"), 0.0, big_m, false));
    }
    debug_assert_eq!(variables.len(), layout.len());

    let row = |name: String, sense: RowSense, rhs: f64, coeffs: Vec<(usize, f64)>| MilpRow {
        name,
        sense,
        rhs,
        coeffs,
    };
    let l = layout;
    let mut rows = vec![
        row("INITS".into(), RowSense::Eq, x0.soc, vec![(l.soc(0), 1.0)]),
        row("INITC".into(), RowSense::Eq, x0.pm10, vec![(l.pm10(0), 1.0)]),
    ];
    let mut objective = Vec::with_capacity(2 * h);
    for (s, w) in forecast.iter().take(h).enumerate() {
        rows.push(row(
            format!("SOC{s:04}"),
            RowSense::Eq,
            0.0,
            vec![
                (l.soc(s + 1), 1.0),
                (l.soc(s), -1.0),
                (l.charge(s), -dt * b.rho_c),
                (l.discharge(s), -dt / b.rho_d),
            ],
        ));
        let k_lo = kappa * p_lo + air.beta * w.n;
        rows.push(row(
            format!("PMD{s:04}"),
            RowSense::Eq,
            dt * air.alpha * w.n * w.n + dt * k_lo * w.c_o,
            vec![
                (l.pm10(s + 1), 1.0),
                (l.pm10(s), -(1.0 - dt * air.delta_dep - dt * k_lo)),
                (l.high_mode(s), -dt * kappa * dp * w.c_o),
                (l.product(s), dt * kappa * dp),
            ],
        ));
        rows.push(row(
            format!("IMP{s:04}"),
            RowSense::Ge,
            w.d + p_lo - w.b,
            vec![(l.import(s), 1.0), (l.high_mode(s), -dp), (l.charge(s), -1.0), (l.discharge(s), -1.0)],
        ));
        rows.push(row(
            format!("LNA{s:04}"),
            RowSense::Le,
            0.0,
            vec![(l.product(s), 1.0), (l.high_mode(s), -big_m)],
        ));
        rows.push(row(
            format!("LNB{s:04}"),
            RowSense::Le,
            0.0,
            vec![(l.product(s), 1.0), (l.pm10(s), -1.0)],
        ));
        rows.push(row(
            format!("LNC{s:04}"),
            RowSense::Ge,
            -big_m,
            vec![(l.product(s), 1.0), (l.pm10(s), -1.0), (l.high_mode(s), -big_m)],
        ));
        objective.push((l.import(s), m.price(t0 + s + 1)));
        objective.push((l.pm10(s + 1), m.lambda()));
    }
    Ok((
        MilpArtifact {
            name: format!("EMS{t0:04}"),
            variables,
            rows,
            objective,
            big_m: Some(big_m),
        },
        layout,
    ))
}

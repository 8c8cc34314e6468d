//! Small exactly-representable instances shared by the oracle and
//! acceptance tests. On these, every reachable state lies on a grid node:
//! a battery step moves the SOC by exactly 10 kWh, low ventilation keeps
//! the PM10 level and high ventilation sets it to the outdoor level.

#![allow(dead_code)]

use subway_ems::model::{
    AirParams, BatteryParams, EconomicParams, StationModel, Tariff, TimeGrid, VentMode, VentilationModes,
};
use subway_ems::scenarios::DeterministicProfiles;
use subway_ems::sdp::{Axis, ControlMesh, MeshControl, StateGrid};

pub const TOY_DELTA: f64 = 0.25;

pub fn toy_model(prices: Vec<f64>, lambda: f64) -> StationModel {
    let steps = prices.len() - 1;
    StationModel {
        time: TimeGrid {
            delta_hours: TOY_DELTA,
            horizon_steps: steps,
            day_length: TOY_DELTA * steps as f64,
        },
        battery: BatteryParams {
            rho_c: 1.0,
            rho_d: 1.0,
            capacity: 20.0,
            soc_min: 0.0,
            soc_max: 20.0,
            power_min: -40.0,
            power_max: 40.0,
        },
        air: AirParams {
            alpha: 0.0,
            delta_dep: 0.0,
            beta: 0.0,
            rho_v: 100.0,
            volume: 1000.0,
        },
        ventilation: VentilationModes {
            power_low: 0.0,
            power_high: 40.0,
        },
        economics: EconomicParams {
            tariff: Tariff::PerStep { prices },
            lambda_comfort: lambda,
        },
    }
}

pub fn toy_profiles(d: Vec<f64>, c_o: Vec<f64>) -> DeterministicProfiles {
    let n = vec![0.0; d.len()];
    DeterministicProfiles { d, n, c_o }
}

pub fn toy_grid() -> StateGrid {
    StateGrid {
        soc: Axis::uniform(0.0, 20.0, 3).unwrap(),
        pm10: Axis::new(vec![50.0, 100.0, 150.0]).unwrap(),
        braking: None,
    }
}

/// All six (battery level, mode) pairs.
pub fn toy_mesh_full() -> ControlMesh {
    let mut c = Vec::new();
    for u_b in [-40.0, 0.0, 40.0] {
        for mode in VentMode::ALL {
            c.push(MeshControl { u_b, mode });
        }
    }
    ControlMesh::explicit(c).unwrap()
}

/// Three controls: idle, charge with low ventilation, discharge with high.
pub fn toy_mesh_small() -> ControlMesh {
    ControlMesh::explicit(vec![
        MeshControl { u_b: 0.0, mode: VentMode::Low },
        MeshControl { u_b: 40.0, mode: VentMode::Low },
        MeshControl { u_b: -40.0, mode: VentMode::High },
    ])
    .unwrap()
}
pub mod oracle;

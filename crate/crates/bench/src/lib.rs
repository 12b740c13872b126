//! Deterministic instances shared by the benchmarks.

use ess_reform::{Bounds, CostSpec, Problem, StorageParams, StorageSystem};

/// Lossy daily-cycle system with `horizon` periods.
pub fn daily_system(horizon: usize) -> StorageSystem {
    let params = StorageParams {
        eta_c: 0.92,
        eta_d: 0.9,
        lambda: 0.995,
        delta: 24.0 / horizon as f64,
        x0: 0.5,
        horizon,
    };
    StorageSystem::new(params, Bounds::uniform(horizon, 0.5, 0.5, 0.1, 1.0)).expect("fixed parameters are valid")
}

/// Smooth signed power profile inside the power box.
pub fn wave(horizon: usize, amplitude: f64) -> Vec<f64> {
    (0..horizon)
        .map(|t| amplitude * (t as f64 * std::f64::consts::TAU / horizon as f64).sin())
        .collect()
}

/// Two-period system with `eta_c = eta_d = 0.5`, `x0 = 0.75` and unit limits.
pub fn two_period_problem(cost: CostSpec) -> Problem {
    let params = StorageParams {
        eta_c: 0.5,
        eta_d: 0.5,
        lambda: 1.0,
        delta: 1.0,
        x0: 0.75,
        horizon: 2,
    };
    let system =
        StorageSystem::new(params, Bounds::uniform(2, 1.0, 1.0, 0.0, 1.0)).expect("fixed parameters are valid");
    Problem::new(system, cost).expect("cost matches the horizon")
}

/// Arbitrage against a price curve that peaks in the evening.
pub fn daily_arbitrage(horizon: usize) -> Problem {
    let p_buy: Vec<f64> = wave(horizon, 0.4).iter().map(|w| 1.0 - w).collect();
    let p_sell = p_buy.iter().map(|p| 0.8 * p).collect();
    Problem::new(daily_system(horizon), CostSpec::EnergyArbitrage { p_buy, p_sell }).expect("cost matches the horizon")
}

//! Exchange-only optimization: beams fixed, only line flows free.

use super::{add_energy_block, power_unit, ConeProgram, ConicOutcome, PerSlotProblem, SolverSettings};
use crate::energy::{EnergyPrices, ExchangePlan};
use crate::error::{Error, Result};
use crate::model::Topology;

/// Cheapest line flows for given per-BST power draws (mW, circuit power
/// included). A linear program; the idle plan is always feasible.
pub fn optimal_exchange(
    topology: &Topology,
    bst_power_mw: &[f64],
    harvest_per_slot: &[f64],
    prices: EnergyPrices,
    settings: &SolverSettings,
) -> Result<ExchangePlan> {
    if topology.lines.is_empty() {
        return Ok(ExchangePlan::idle(topology));
    }
    let unit = power_unit(topology);
    let mut prog = ConeProgram::new(0);
    let tx = vec![None; topology.num_bsts()];
    let block = add_energy_block(&mut prog, topology, &tx, bst_power_mw, harvest_per_slot, prices, unit, true);
    match prog.solve(settings)? {
        ConicOutcome::Solved { x, .. } => Ok(ExchangePlan {
            flows: block.delta.iter().map(|&d| x[d] * unit).collect(),
        }),
        ConicOutcome::Infeasible => Err(Error::SolverFailure {
            status: "exchange program reported infeasible".into(),
            primal_residual: f64::NAN,
            dual_residual: f64::NAN,
        }),
    }
}

/// Cheapest line flows with every beam switched off: each BST draws only
/// its circuit power.
pub fn exchange_only(problem: &PerSlotProblem) -> Result<ExchangePlan> {
    let topo = problem.topology;
    let power: Vec<f64> = (0..topo.num_bsts()).map(|m| topo.circuit_power(m)).collect();
    optimal_exchange(topo, &power, problem.harvest_per_slot, problem.prices, &SolverSettings::default())
}

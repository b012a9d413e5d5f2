//! Independent checks of a returned decision against the per-slot constraints.

use super::{f_phi, PerSlotProblem, SlotDecision};
use crate::model::{inner, sinr, C64};

/// Worst-case constraint measures of one decision. All are relative and
/// zero for an exact decision.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DecisionReport {
    /// `max_m (sum ||w||^2 - P_max) / P_max`, clipped at zero.
    pub power_excess: f64,
    /// `max |Im(h^H w)| / |h^H w|` over UEs with a rate target.
    pub phase_error: f64,
    /// `max (rhs - lhs) / rhs` of the rate cone, clipped at zero.
    pub cone_shortfall: f64,
    /// `max |lhs - rhs| / rhs` of the rate cone.
    pub activeness_gap: f64,
    /// `max |r_k q_j - r_j q_k| / (r_k q_j)` over pairs of UEs with rates.
    pub proportionality_error: f64,
    /// `max |ln(1 + SINR) - r| / r` over UEs with rates.
    pub rate_error: f64,
    /// Every rate is at most the access backlog and `phi` lies in `[0, 1]`.
    pub rate_limit_ok: bool,
    /// Beams of UEs without a rate target are exactly zero.
    pub idle_beams_zero: bool,
}

impl DecisionReport {
    /// Constraint feasibility within `tol` and activeness within `active_tol`.
    pub fn passes(&self, tol: f64, active_tol: f64, ratio_tol: f64) -> bool {
        self.power_excess <= tol
            && self.phase_error <= tol
            && self.cone_shortfall <= tol
            && self.activeness_gap <= active_tol
            && self.proportionality_error <= ratio_tol
            && self.rate_limit_ok
            && self.idle_beams_zero
    }
}

pub fn verify_decision(problem: &PerSlotProblem, decision: &SlotDecision) -> DecisionReport {
    let topo = problem.topology;
    let ch = problem.channel;
    let n = topo.num_ues();
    let phi = decision.phi;
    let mut report = DecisionReport {
        rate_limit_ok: (0.0..=1.0).contains(&phi),
        idle_beams_zero: true,
        ..Default::default()
    };
    for m in 0..topo.num_bsts() {
        let p = decision.beams.tx_power(topo, m);
        report.power_excess = report.power_excess.max((p - topo.max_tx_mw[m]) / topo.max_tx_mw[m]);
    }
    let with_rate: Vec<bool> = (0..n).map(|k| decision.rates[k] > 0.0).collect();
    for k in 0..n {
        if decision.rates[k] > problem.access_now[k] || decision.rates[k] < 0.0 {
            report.rate_limit_ok = false;
        }
        let f = if problem.schedule.active[k] {
            f_phi(problem.access_now[k], phi)
        } else {
            0.0
        };
        if f == 0.0 {
            if decision.beams.beam(k).iter().any(|w| *w != C64::new(0.0, 0.0)) {
                report.idle_beams_zero = false;
            }
            continue;
        }
        let g = inner(ch.link(topo.serving_bst(k), k), decision.beams.beam(k));
        report.phase_error = report.phase_error.max(g.im.abs() / g.norm());
        let mut rhs2 = topo.noise_mw[k];
        for j in (0..n).filter(|&j| j != k && with_rate[j]) {
            rhs2 += inner(ch.link(topo.serving_bst(j), k), decision.beams.beam(j)).norm_sqr();
        }
        let rhs = rhs2.sqrt();
        let lhs = g.re / f;
        report.cone_shortfall = report.cone_shortfall.max((rhs - lhs) / rhs);
        report.activeness_gap = report.activeness_gap.max((lhs - rhs).abs() / rhs);
        let realized = crate::model::rate(sinr(ch, topo, &with_rate, &decision.beams, k));
        let r = decision.rates[k];
        report.rate_error = report.rate_error.max((realized - r).abs() / r);
    }
    for k in 0..n {
        for j in 0..n {
            if with_rate[k] && with_rate[j] && k != j {
                let (rk, rj) = (decision.rates[k], decision.rates[j]);
                let (qk, qj) = (problem.access_now[k], problem.access_now[j]);
                let err = (rk * qj - rj * qk).abs() / (rk * qj);
                report.proportionality_error = report.proportionality_error.max(err);
            }
        }
    }
    report
}

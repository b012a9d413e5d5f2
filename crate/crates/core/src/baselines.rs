//! Reference schemes: zero-forcing beamforming (ZFBF) and TSUBE without
//! local power exchange (WOLPE).

use nalgebra::DMatrix;

use crate::controller::FrameSchedule;
use crate::error::{Error, Result};
use crate::model::{inner, ChannelRealization, Topology, C64};
use crate::solver::{search_phi, BeamMode, PerSlotProblem, SlotDecision, SolveOptions};

/// Fixed unit beam directions of the zero-forcing scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct ZfDirections {
    /// Unit direction per flat UE, `None` for unscheduled UEs.
    pub directions: Vec<Option<Vec<C64>>>,
    /// Effective channel amplitude `||Xi^H h||` per flat UE (zero if unscheduled).
    pub gains: Vec<f64>,
}

/// Relative singular-value threshold for the interferer rank.
const RANK_TOL: f64 = 1e-9;

/// Projects every scheduled UE's own channel onto the null space of the
/// channels, seen from its serving BST, of all other scheduled UEs.
pub fn zf_directions(
    channel: &ChannelRealization,
    schedule: &FrameSchedule,
    topology: &Topology,
) -> Result<ZfDirections> {
    let n = topology.num_ues();
    let l = topology.antennas;
    let scheduled: Vec<usize> = schedule.scheduled().collect();
    let mut directions = vec![None; n];
    let mut gains = vec![0.0; n];
    for &k in &scheduled {
        let m = topology.serving_bst(k);
        let own = channel.link(m, k);
        let others: Vec<&[C64]> = scheduled.iter().filter(|&&j| j != k).map(|&j| channel.link(m, j)).collect();
        let rows = others.len().max(l);
        // Rows are the normalized conjugated interferer channels, zero padded
        // to a square matrix so the decomposition returns all of V.
        let mut a = DMatrix::<C64>::zeros(rows, l);
        for (r, h) in others.iter().enumerate() {
            let norm = h.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (i, c) in h.iter().enumerate() {
                    a[(r, i)] = c.conj() / norm;
                }
            }
        }
        let svd = a.svd(false, true);
        let v_t = svd.v_t.expect("right singular vectors requested");
        let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let null: Vec<usize> = (0..l).filter(|&i| svd.singular_values[i] <= RANK_TOL * top.max(1.0)).collect();
        let rank = l - null.len();
        // proj = sum_i v_i (v_i^H h) with v_i^H the rows of V^H.
        let mut proj = vec![C64::new(0.0, 0.0); l];
        let mut gain2 = 0.0;
        for &i in &null {
            let coef: C64 = (0..l).map(|c| v_t[(i, c)] * own[c]).sum();
            gain2 += coef.norm_sqr();
            for (c, p) in proj.iter_mut().enumerate() {
                *p += v_t[(i, c)].conj() * coef;
            }
        }
        let gain = gain2.sqrt();
        let own_norm = own.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if null.is_empty() || !(gain > 1e-12 * own_norm) {
            return Err(Error::EmptyNullSpace {
                ue: k,
                interferers: others.len(),
                rank,
                antennas: l,
            });
        }
        directions[k] = Some(proj.iter().map(|c| c / gain).collect());
        gains[k] = gain;
    }
    Ok(ZfDirections { directions, gains })
}

impl ZfDirections {
    /// Largest `|h_j^H u_k| / |h_k^H u_k|` over scheduled pairs, with `h_j`
    /// the channel from `k`'s serving BST to `j`.
    pub fn max_leakage(&self, channel: &ChannelRealization, topology: &Topology) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, u) in self.directions.iter().enumerate() {
            let Some(u) = u else { continue };
            let m = topology.serving_bst(k);
            let signal = inner(channel.link(m, k), u).norm();
            for (j, other) in self.directions.iter().enumerate() {
                if j != k && other.is_some() {
                    worst = worst.max(inner(channel.link(m, j), u).norm() / signal);
                }
            }
        }
        worst
    }
}

/// ZFBF slot: zero-forcing directions with optimized powers, exchange and `phi`.
pub fn zfbf_slot(problem: &PerSlotProblem) -> Result<SlotDecision> {
    let opts = SolveOptions {
        beams: BeamMode::ZeroForcing(zf_directions(problem.channel, problem.schedule, problem.topology)?),
        ..SolveOptions::default()
    };
    search_phi(problem, &opts)
}

/// WOLPE slot: TSUBE with every line flow fixed at zero.
pub fn wolpe_slot(problem: &PerSlotProblem) -> Result<SlotDecision> {
    let opts = SolveOptions {
        exchange: false,
        ..SolveOptions::default()
    };
    search_phi(problem, &opts)
}

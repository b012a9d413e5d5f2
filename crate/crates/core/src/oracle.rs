//! Brute-force reference solvers for tiny instances.
//!
//! [`brute_force_slot`] grids over beam directions. For fixed directions the
//! cheapest powers solve a linear system (the rate constraints hold with
//! equality at the minimum) and the cheapest flow on a single line sits at a
//! breakpoint of a convex piecewise-linear cost, so only the directions need
//! a grid. [`enumerate_schedules`] replays a frame under every schedule.

use nalgebra::{DMatrix, DVector};

use crate::config::Algorithm;
use crate::controller::FrameSchedule;
use crate::energy::{grid_expenditure, net_exchange, EnergyPrices, ExchangePlan};
use crate::error::{Error, Result};
use crate::model::{inner, Beamformers, ChannelRealization, Topology, C64};
use crate::queueing::QueueState;
use crate::sim::decide;
use crate::solver::{f_phi, PerSlotProblem, SolveOptions};

use std::f64::consts::{FRAC_PI_2, PI};

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Grid points per angle in the first round.
    pub points_per_angle: usize,
    /// Grid points per angle in refinement rounds.
    pub refine_points: usize,
    pub max_rounds: usize,
    /// Stop once a round improves the energy part by less than this, relative.
    pub rel_tol: f64,
    /// Upper bound on the grid points of any single round.
    pub budget: u128,
    /// Optimize the line flow; otherwise every flow is zero.
    pub exchange: bool,
    /// Points of the uniform `phi` grid used by [`brute_force_phi`].
    pub phi_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            points_per_angle: 24,
            refine_points: 9,
            max_rounds: 40,
            rel_tol: 1e-4,
            budget: 10_000_000,
            exchange: true,
            phi_points: 21,
        }
    }
}

impl GridSpec {
    /// Default spec with the first-round resolution lowered, if needed, so
    /// that `angles` angles fit the budget.
    pub fn for_angles(angles: usize) -> Self {
        let mut spec = GridSpec::default();
        if angles > 0 {
            while (spec.points_per_angle as u128).pow(angles as u32) > spec.budget {
                spec.points_per_angle -= 1;
            }
        }
        spec
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleBest {
    pub objective: f64,
    /// `V * sum_m G_m`.
    pub energy: f64,
    pub beams: Beamformers,
    pub exchange: ExchangePlan,
    pub bst_power: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    /// `None` when no grid point satisfies the constraints.
    pub best: Option<OracleBest>,
    /// Incumbent objective after each round.
    pub rounds: Vec<f64>,
    pub evaluated: u128,
}

/// Number of direction angles a beam with `antennas` entries needs.
pub fn angles_per_beam(antennas: usize) -> usize {
    if antennas <= 1 {
        0
    } else {
        2 * antennas - 2
    }
}

/// Orthonormal basis of the complement of the unit vector `u`.
fn complement(u: &[C64]) -> Vec<Vec<C64>> {
    let l = u.len();
    let mut basis: Vec<Vec<C64>> = vec![u.to_vec()];
    for i in 0..l {
        if basis.len() == l {
            break;
        }
        let mut v = vec![C64::new(0.0, 0.0); l];
        v[i] = C64::new(1.0, 0.0);
        for b in &basis {
            let c = inner(b, &v);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-3 {
            basis.push(v.iter().map(|c| c / norm).collect());
        }
    }
    basis.remove(0);
    basis
}

/// Unit vector in `R^(angles + 1)` from hyperspherical angles.
fn sphere_point(angles: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angles.len() + 1);
    let mut s = 1.0;
    for &a in angles {
        out.push(s * a.cos());
        s *= a.sin();
    }
    out.push(s);
    out
}

/// Direction `cos(theta) h_hat + sin(theta) B z` with `z` on the unit sphere.
/// The signal `h^H u` is real and nonnegative for `theta <= pi / 2`.
fn direction(h_hat: &[C64], comp: &[Vec<C64>], angles: &[f64]) -> Vec<C64> {
    let mut u: Vec<C64> = h_hat.iter().map(|c| c * angles[0].cos()).collect();
    if comp.is_empty() {
        return u;
    }
    let z = sphere_point(&angles[1..]);
    let s = angles[0].sin();
    for (i, b) in comp.iter().enumerate() {
        let coef = C64::new(z[2 * i], z[2 * i + 1]) * s;
        for (x, y) in u.iter_mut().zip(b) {
            *x += coef * y;
        }
    }
    u
}

/// Range and periodicity of angle `i` of a beam.
fn angle_range(i: usize, per_beam: usize) -> (f64, f64, bool) {
    if i == 0 {
        (0.0, FRAC_PI_2, false)
    } else if i + 1 < per_beam {
        (0.0, PI, false)
    } else {
        (0.0, 2.0 * PI, true)
    }
}

/// Cheapest flow on the single line (if any) and the resulting cost
/// `sum_m G_m`.
pub fn best_exchange(
    topology: &Topology,
    bst_power: &[f64],
    harvest: &[f64],
    prices: EnergyPrices,
    exchange: bool,
) -> (ExchangePlan, f64) {
    let cost = |plan: &ExchangePlan| -> f64 {
        (0..topology.num_bsts())
            .map(|m| grid_expenditure(bst_power[m], net_exchange(plan, m, topology), harvest[m], prices))
            .sum()
    };
    let mut plan = ExchangePlan::idle(topology);
    if !exchange || topology.lines.is_empty() {
        let c = cost(&plan);
        return (plan, c);
    }
    assert!(topology.lines.len() == 1, "the exact flow search handles one line");
    let line = topology.lines[0];
    let (a, b, beta) = (line.from, line.to, line.efficiency);
    let sa = harvest[a] - bst_power[a];
    let sb = bst_power[b] - harvest[b];
    let mut candidates = vec![0.0];
    for d in [sa, sa / beta, sb, sb / beta] {
        candidates.push(d);
    }
    let mut best: (f64, f64) = (f64::INFINITY, 0.0);
    for d in candidates {
        plan.flows[0] = d;
        let c = cost(&plan);
        if c < best.0 || (c == best.0 && d.abs() < best.1.abs()) {
            best = (c, d);
        }
    }
    plan.flows[0] = best.1;
    (plan, best.0)
}

struct Instance<'p, 'a> {
    problem: &'p PerSlotProblem<'a>,
    active: Vec<usize>,
    f: Vec<f64>,
    h_hat: Vec<Vec<C64>>,
    comp: Vec<Vec<Vec<C64>>>,
    per_beam: usize,
    exchange: bool,
}

struct Point {
    objective: f64,
    energy: f64,
    beams: Beamformers,
    exchange: ExchangePlan,
    bst_power: Vec<f64>,
}

impl Instance<'_, '_> {
    /// Cheapest feasible point with the directions given by `angles`.
    fn evaluate(&self, angles: &[f64], phi: f64) -> Option<Point> {
        let p = self.problem;
        let topo = p.topology;
        let ch = p.channel;
        let dirs: Vec<Vec<C64>> = self
            .active
            .iter()
            .enumerate()
            .map(|(i, _)| direction(&self.h_hat[i], &self.comp[i], &angles[i * self.per_beam..(i + 1) * self.per_beam]))
            .collect();
        let na = self.active.len();
        let mut powers = vec![];
        if na > 0 {
            // p_k g_kk / f_k^2 - sum_j p_j g_jk = sigma_k^2
            let mut a = DMatrix::<f64>::zeros(na, na);
            let mut rhs = DVector::<f64>::zeros(na);
            for (r, &k) in self.active.iter().enumerate() {
                rhs[r] = topo.noise_mw[k];
                for (c, &j) in self.active.iter().enumerate() {
                    let g = inner(ch.link(topo.serving_bst(j), k), &dirs[c]).norm_sqr();
                    a[(r, c)] = if r == c { g / (self.f[r] * self.f[r]) } else { -g };
                }
            }
            let sol = a.lu().solve(&rhs)?;
            if sol.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return None;
            }
            // A positive solution of this Z-matrix system is the minimal one.
            powers = sol.iter().copied().collect();
        }
        let mut beams = Beamformers::zeros(topo.num_ues(), topo.antennas);
        for (i, &k) in self.active.iter().enumerate() {
            let s = powers[i].sqrt();
            for (w, u) in beams.beam_mut(k).iter_mut().zip(&dirs[i]) {
                *w = u * s;
            }
        }
        let mut bst_power = Vec::with_capacity(topo.num_bsts());
        for m in 0..topo.num_bsts() {
            let tx = beams.tx_power(topo, m);
            if tx > topo.max_tx_mw[m] * (1.0 + 1e-9) {
                return None;
            }
            bst_power.push(tx / topo.pa_efficiency + topo.circuit_power(m));
        }
        let (exchange, cost) = best_exchange(topo, &bst_power, p.harvest_per_slot, p.prices, self.exchange);
        let energy = p.v * cost;
        Some(Point {
            objective: energy + p.rate_coefficient() * phi,
            energy,
            beams,
            exchange,
            bst_power,
        })
    }
}

/// Exhaustive search of the fixed-`phi` problem over a refined direction
/// grid. Needs at most four complex beam entries in total and at most one
/// power line.
pub fn brute_force_slot(problem: &PerSlotProblem, phi: f64, grid: &GridSpec) -> Result<OracleOutcome> {
    problem.validate()?;
    let topo = problem.topology;
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::Domain(format!("phi must lie in [0, 1], got {phi}")));
    }
    if topo.lines.len() > 1 {
        return Err(Error::Domain("the oracle supports at most one power line".into()));
    }
    let mut active = Vec::new();
    let mut f = Vec::new();
    for k in problem.schedule.scheduled() {
        let target = f_phi(problem.access_now[k], phi);
        if target > 0.0 {
            active.push(k);
            f.push(target);
        }
    }
    if active.len() * topo.antennas > 4 {
        return Err(Error::Domain(format!(
            "beam dimension {} exceeds the oracle limit of 4",
            active.len() * topo.antennas
        )));
    }
    let empty = OracleOutcome {
        best: None,
        rounds: vec![],
        evaluated: 0,
    };
    if f.iter().any(|t| !t.is_finite()) {
        return Ok(empty);
    }
    let mut h_hat = Vec::new();
    let mut comp = Vec::new();
    for &k in &active {
        let h = problem.channel.link(topo.serving_bst(k), k);
        let norm = h.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let u: Vec<C64> = h.iter().map(|c| c / norm).collect();
        comp.push(complement(&u));
        h_hat.push(u);
    }
    // A single antenna keeps one angle, pinned at zero.
    let per_beam = angles_per_beam(topo.antennas).max(1);
    let inst = Instance {
        problem,
        active,
        f,
        h_hat,
        comp,
        per_beam,
        exchange: grid.exchange,
    };
    let dims = inst.active.len() * per_beam;
    let ranges: Vec<(f64, f64, bool)> = (0..dims)
        .map(|i| {
            if topo.antennas == 1 {
                (0.0, 0.0, false)
            } else {
                angle_range(i % per_beam, per_beam)
            }
        })
        .collect();

    let mut outcome = OracleOutcome {
        best: None,
        rounds: vec![],
        evaluated: 0,
    };
    let mut center: Vec<f64> = vec![0.0; dims];
    let mut half: Vec<f64> = ranges.iter().map(|r| r.1 - r.0).collect();
    let mut best: Option<Point> = None;
    for round in 0..grid.max_rounds.max(1) {
        let points = if round == 0 { grid.points_per_angle } else { grid.refine_points }.max(2);
        let axes: Vec<Vec<f64>> = (0..dims)
            .map(|i| {
                let (lo, hi, periodic) = ranges[i];
                if hi == lo {
                    return vec![lo];
                }
                if round == 0 {
                    // Periodic axes exclude the duplicate endpoint.
                    let steps = if periodic { points } else { points - 1 };
                    (0..points).map(|j| lo + (hi - lo) * j as f64 / steps as f64).collect()
                } else {
                    let mut axis: Vec<f64> = (0..points)
                        .map(|j| center[i] - half[i] + 2.0 * half[i] * j as f64 / (points - 1) as f64)
                        .map(|x| if periodic { x } else { x.clamp(lo, hi) })
                        .collect();
                    axis.dedup();
                    axis
                }
            })
            .collect();
        let total: u128 = axes.iter().map(|a| a.len() as u128).product();
        if total > grid.budget {
            return Err(Error::BudgetExceeded {
                points: total,
                budget: grid.budget,
            });
        }
        let before = best.as_ref().map(|b| b.energy);
        let mut idx = vec![0usize; dims];
        let mut angles: Vec<f64> = axes.iter().map(|a| a[0]).collect();
        let mut best_angles = center.clone();
        loop {
            outcome.evaluated += 1;
            if let Some(pt) = inst.evaluate(&angles, phi) {
                if best.as_ref().is_none_or(|b| pt.objective < b.objective) {
                    best = Some(pt);
                    best_angles.clone_from(&angles);
                }
            }
            // Mixed-radix increment.
            let mut d = 0;
            while d < dims {
                idx[d] += 1;
                if idx[d] < axes[d].len() {
                    angles[d] = axes[d][idx[d]];
                    break;
                }
                idx[d] = 0;
                angles[d] = axes[d][0];
                d += 1;
            }
            if d == dims {
                break;
            }
        }
        let Some(b) = &best else {
            return Ok(outcome);
        };
        outcome.rounds.push(b.objective);
        if dims == 0 {
            break;
        }
        // Every round spans one previous step either side of the incumbent.
        for (i, axis) in axes.iter().enumerate() {
            let step = if axis.len() > 1 { (axis[1] - axis[0]).abs() } else { 0.0 };
            half[i] = step;
        }
        center = best_angles;
        if let Some(prev) = before {
            let floor = problem.v * problem.prices.buy;
            if (prev - b.energy).abs() <= grid.rel_tol * b.energy.abs().max(floor) && round >= 2 {
                break;
            }
        }
    }
    outcome.best = best.map(|b| OracleBest {
        objective: b.objective,
        energy: b.energy,
        beams: b.beams,
        exchange: b.exchange,
        bst_power: b.bst_power,
    });
    Ok(outcome)
}

/// Brute force over a uniform `phi` grid on `[0, 1]`; returns the best
/// `phi` with its outcome.
pub fn brute_force_phi(problem: &PerSlotProblem, grid: &GridSpec) -> Result<(f64, OracleBest)> {
    let mut best: Option<(f64, OracleBest)> = None;
    let n = grid.phi_points.max(2);
    for i in 0..n {
        let phi = i as f64 / (n - 1) as f64;
        if let Some(b) = brute_force_slot(problem, phi, grid)?.best {
            if best.as_ref().is_none_or(|(_, x)| b.objective < x.objective) {
                best = Some((phi, b));
            }
        }
    }
    best.ok_or_else(|| Error::Domain("phi = 0 must be feasible".into()))
}

/// Per-slot inputs needed to replay one frame under any schedule.
#[derive(Debug, Clone)]
pub struct FrameInputs {
    pub topology: Topology,
    pub channels: Vec<ChannelRealization>,
    pub arrivals: Vec<Vec<f64>>,
    pub harvest_per_slot: Vec<f64>,
    pub processing_rate: Vec<f64>,
    pub prices: EnergyPrices,
    pub v: f64,
    /// Frame-start backlogs.
    pub access: Vec<f64>,
    pub processing: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    /// `sum_t [ sum_k (q_U[k] - q_A[k]) r_k(t) + V * sum_m G_m(t) ]` with
    /// frame-start backlogs as weights.
    pub value: f64,
    pub rates: Vec<Vec<f64>>,
    pub exchange: Vec<ExchangePlan>,
}

/// Runs the per-slot rule of `algorithm` through the frame under `schedule`.
pub fn replay_frame(inputs: &FrameInputs, schedule: &FrameSchedule, algorithm: Algorithm) -> Result<FrameOutcome> {
    let topo = &inputs.topology;
    let mut queues = QueueState {
        access: inputs.access.clone(),
        processing: inputs.processing.clone(),
        slot: 0,
    };
    let mut value = 0.0;
    let mut rates = Vec::new();
    let mut exchange = Vec::new();
    for (channel, arrivals) in inputs.channels.iter().zip(&inputs.arrivals) {
        let access_now = queues.access.clone();
        let problem = PerSlotProblem {
            topology: topo,
            channel,
            schedule,
            access_now: &access_now,
            access_frame: &inputs.access,
            processing_frame: &inputs.processing,
            harvest_per_slot: &inputs.harvest_per_slot,
            prices: inputs.prices,
            v: inputs.v,
        };
        let d = decide(algorithm, &problem, &SolveOptions::default())?;
        value += (0..topo.num_ues())
            .map(|k| (inputs.processing[k] - inputs.access[k]) * d.rates[k])
            .sum::<f64>()
            + inputs.v * d.total_grid_cost();
        queues.step(&d.rates, arrivals, &inputs.processing_rate)?;
        rates.push(d.rates);
        exchange.push(d.exchange);
    }
    Ok(FrameOutcome { value, rates, exchange })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    /// Bit `k` set means UE `k` is scheduled.
    pub best_mask: u64,
    pub best_value: f64,
    /// Realized frame value per mask; `None` where a solve failed.
    pub values: Vec<Option<f64>>,
    pub skipped: usize,
}

/// Replays the frame under all `2^N` schedules.
pub fn enumerate_schedules(inputs: &FrameInputs, algorithm: Algorithm) -> Result<Enumeration> {
    let n = inputs.topology.num_ues();
    if n > 6 {
        return Err(Error::Domain(format!("schedule enumeration supports at most 6 UEs, got {n}")));
    }
    let mut values = Vec::with_capacity(1 << n);
    let mut skipped = 0;
    for mask in 0..(1u64 << n) {
        let schedule = FrameSchedule::from_mask(n, mask);
        match replay_frame(inputs, &schedule, algorithm) {
            Ok(o) => values.push(Some(o.value)),
            Err(Error::SolverFailure { .. } | Error::EmptyNullSpace { .. }) => {
                skipped += 1;
                values.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let (best_mask, best_value) = values
        .iter()
        .enumerate()
        .filter_map(|(m, v)| v.map(|v| (m as u64, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Domain("every schedule failed".into()))?;
    Ok(Enumeration {
        best_mask,
        best_value,
        values,
        skipped,
    })
}

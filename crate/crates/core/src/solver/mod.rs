//! Per-slot joint beamforming and energy-exchange optimization.
//!
//! For a fixed rate fraction `phi` every scheduled UE must reach the rate
//! `q_A * phi`, which is a second-order cone constraint on the beams. The
//! grid cost and the line-loss terms are maxima of affine functions and
//! enter through epigraph variables, so each fixed-`phi` problem is a
//! single SOCP. [`search_phi`] then runs the one-dimensional search over
//! `phi`.
//!
//! Internally the cone data is scaled so it is of order one: powers are
//! expressed in units of the largest per-BST power budget, and every
//! constraint row of UE `k` is multiplied by `sqrt(omega)` of its serving
//! link. Decisions are returned in physical units.

mod conic;
mod exchange;
mod search;
mod verify;

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};

pub use conic::{AffineExpr, ConeKind, ConeProgram, ConicOutcome, SolverSettings};
pub use exchange::{exchange_only, optimal_exchange};
pub use search::{search_phi, tsube_slot};
pub use verify::{verify_decision, DecisionReport};

use crate::baselines::ZfDirections;
use crate::controller::FrameSchedule;
use crate::energy::{grid_expenditure, net_exchange, EnergyPrices, ExchangePlan};
use crate::error::{Error, Result};
use crate::model::{bst_power, inner, norm_sqr, Beamformers, ChannelRealization, Topology, C64};

/// Rate exponents above this are treated as unreachable targets.
const MAX_RATE_EXPONENT: f64 = 600.0;

/// Everything needed to decide one slot.
#[derive(Debug, Clone, Copy)]
pub struct PerSlotProblem<'a> {
    pub topology: &'a Topology,
    pub channel: &'a ChannelRealization,
    pub schedule: &'a FrameSchedule,
    /// Access backlog at the current slot; rates are `access_now * phi`.
    pub access_now: &'a [f64],
    /// Frame-start access backlog.
    pub access_frame: &'a [f64],
    /// Frame-start processing backlog.
    pub processing_frame: &'a [f64],
    /// Harvested energy available per slot, per BST (mW).
    pub harvest_per_slot: &'a [f64],
    pub prices: EnergyPrices,
    pub v: f64,
}

impl PerSlotProblem<'_> {
    /// Weight `q_U[k] - q_A[k]` of UE `k`'s rate in the objective.
    pub fn weight(&self, k: usize) -> f64 {
        self.processing_frame[k] - self.access_frame[k]
    }

    /// Coefficient `c` such that the rate term of the objective is `c * phi`.
    pub fn rate_coefficient(&self) -> f64 {
        self.schedule.scheduled().map(|k| self.weight(k) * self.access_now[k]).sum()
    }

    /// True when no scheduled UE has anything to send.
    pub fn is_idle(&self) -> bool {
        self.schedule.scheduled().all(|k| self.access_now[k] <= 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.topology.num_ues();
        let m = self.topology.num_bsts();
        let dims_ok = self.schedule.active.len() == n
            && self.access_now.len() == n
            && self.access_frame.len() == n
            && self.processing_frame.len() == n
            && self.harvest_per_slot.len() == m
            && self.channel.num_ues() == n
            && self.channel.num_bsts() == m
            && self.channel.antennas() == self.topology.antennas;
        if !dims_ok {
            return Err(Error::Domain("per-slot problem dimensions disagree with the topology".into()));
        }
        let queues = self.access_now.iter().chain(self.access_frame).chain(self.processing_frame);
        if queues.clone().any(|q| !(q.is_finite() && *q >= 0.0)) {
            return Err(Error::Domain("backlogs must be finite and nonnegative".into()));
        }
        if self.harvest_per_slot.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
            return Err(Error::Domain("harvest must be finite and nonnegative".into()));
        }
        if !(self.v > 0.0 && self.v.is_finite()) {
            return Err(Error::Domain(format!("control parameter V must be positive, got {}", self.v)));
        }
        if !self.channel.is_finite() {
            return Err(Error::Domain("channel realization contains non-finite entries".into()));
        }
        self.prices.validate()
    }
}

/// How beam directions are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum BeamMode {
    /// Beams are free complex vectors (the full SOCP).
    Full,
    /// Beams are fixed unit directions with free power.
    ZeroForcing(ZfDirections),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Allow energy exchange over power lines.
    pub exchange: bool,
    pub beams: BeamMode,
    /// Coarse grid size of the `phi` search.
    pub grid_points: usize,
    /// Grid size used when the coarse grid is not unimodal.
    pub fine_grid_points: usize,
    /// Bisection and golden-section tolerance in `phi`.
    pub phi_tol: f64,
    pub solver: SolverSettings,
    /// Skip `phi` values whose lower bound cannot beat the incumbent.
    pub prune: bool,
    /// Re-solve the powers for the returned beam directions so every rate
    /// constraint holds with equality.
    pub polish: bool,
    /// Directory receiving a text dump of any cone program the solver fails on.
    pub dump_dir: Option<PathBuf>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            exchange: true,
            beams: BeamMode::Full,
            grid_points: 16,
            fine_grid_points: 256,
            phi_tol: 1e-4,
            solver: SolverSettings::default(),
            prune: true,
            polish: true,
            dump_dir: None,
        }
    }
}

/// Counters describing how a decision was reached.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SearchStats {
    /// Fixed-`phi` problems evaluated.
    pub solves: usize,
    /// Power-margin problems evaluated while locating the largest feasible `phi`.
    pub margin_solves: usize,
    pub infeasible: usize,
    /// Probes where the solver neither converged nor certified infeasibility.
    pub failed_probes: usize,
    /// Grid or bracket evaluations skipped by the lower bound.
    pub pruned: usize,
    /// The coarse grid was not unimodal and the fine grid was used.
    pub fine_grid: bool,
    /// Largest feasible `phi` found.
    pub phi_hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotDecision {
    /// One beam per flat UE, zero for UEs without a rate target.
    pub beams: Beamformers,
    pub exchange: ExchangePlan,
    pub phi: f64,
    /// Rate of every flat UE, nats per slot per Hz.
    pub rates: Vec<f64>,
    /// Power drawn by each BST, mW.
    pub bst_power: Vec<f64>,
    /// Grid expenditure of each BST, cents per slot.
    pub grid_cost: Vec<f64>,
    /// `V * sum(grid_cost) + sum (q_U - q_A) * rate`.
    pub objective: f64,
    pub stats: SearchStats,
}

impl SlotDecision {
    pub fn total_grid_cost(&self) -> f64 {
        self.grid_cost.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FixedPhi {
    Solved(Box<SlotDecision>),
    Infeasible,
}

/// `sqrt(exp(q * phi) - 1)`: the SINR amplitude that yields the rate `q * phi`.
/// Saturates to infinity for exponents too large to represent.
pub fn f_phi(access: f64, phi: f64) -> f64 {
    let x = access * phi;
    if x <= 0.0 {
        0.0
    } else if x > MAX_RATE_EXPONENT {
        f64::INFINITY
    } else {
        x.exp_m1().sqrt()
    }
}

/// Rate targets `f` of every flat UE (zero for unscheduled UEs).
fn targets(problem: &PerSlotProblem, phi: f64) -> Vec<f64> {
    (0..problem.topology.num_ues())
        .map(|k| {
            if problem.schedule.active[k] {
                f_phi(problem.access_now[k], phi)
            } else {
                0.0
            }
        })
        .collect()
}

/// Builds the full decision record from beams and an exchange plan.
pub(crate) fn assemble(
    problem: &PerSlotProblem,
    phi: f64,
    beams: Beamformers,
    exchange: ExchangePlan,
) -> SlotDecision {
    let topo = problem.topology;
    let rates: Vec<f64> = (0..topo.num_ues())
        .map(|k| {
            if problem.schedule.active[k] {
                problem.access_now[k] * phi
            } else {
                0.0
            }
        })
        .collect();
    let power: Vec<f64> = (0..topo.num_bsts()).map(|m| bst_power(&beams, m, topo)).collect();
    let grid_cost: Vec<f64> = (0..topo.num_bsts())
        .map(|m| {
            grid_expenditure(
                power[m],
                net_exchange(&exchange, m, topo),
                problem.harvest_per_slot[m],
                problem.prices,
            )
        })
        .collect();
    let rate_term: f64 = problem.schedule.scheduled().map(|k| problem.weight(k) * rates[k]).sum();
    let objective = problem.v * grid_cost.iter().sum::<f64>() + rate_term;
    SlotDecision {
        beams,
        exchange,
        phi,
        rates,
        bst_power: power,
        grid_cost,
        objective,
        stats: SearchStats::default(),
    }
}

/// Power unit used to scale the cone data.
fn power_unit(topology: &Topology) -> f64 {
    topology.max_tx_mw.iter().cloned().fold(0.0, f64::max)
}

/// Solves the problem for one fixed `phi`.
pub fn solve_fixed_phi(problem: &PerSlotProblem, phi: f64, opts: &SolveOptions) -> Result<FixedPhi> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::Domain(format!("phi must lie in [0, 1], got {phi}")));
    }
    let f = targets(problem, phi);
    if f.iter().any(|x| x.is_infinite()) {
        return Ok(FixedPhi::Infeasible);
    }
    let topo = problem.topology;
    let beams = match &opts.beams {
        BeamMode::ZeroForcing(dirs) => match zf_beams(problem, dirs, &f)? {
            Some(b) => b,
            None => return Ok(FixedPhi::Infeasible),
        },
        BeamMode::Full if f.iter().all(|&x| x == 0.0) => Beamformers::zeros(topo.num_ues(), topo.antennas),
        BeamMode::Full => return solve_full(problem, phi, &f, opts),
    };
    let fixed: Vec<f64> = (0..topo.num_bsts()).map(|m| bst_power(&beams, m, topo)).collect();
    let plan = if opts.exchange {
        optimal_exchange(topo, &fixed, problem.harvest_per_slot, problem.prices, &opts.solver)?
    } else {
        ExchangePlan::idle(topo)
    };
    Ok(FixedPhi::Solved(Box::new(assemble(problem, phi, beams, plan))))
}

/// Minimal zero-forcing powers meeting the targets, or `None` if some BST
/// would exceed its budget.
fn zf_beams(problem: &PerSlotProblem, dirs: &ZfDirections, f: &[f64]) -> Result<Option<Beamformers>> {
    let topo = problem.topology;
    let mut beams = Beamformers::zeros(topo.num_ues(), topo.antennas);
    let mut used = vec![0.0; topo.num_bsts()];
    for k in (0..topo.num_ues()).filter(|&k| f[k] > 0.0) {
        let (u, g) = match (&dirs.directions[k], dirs.gains[k]) {
            (Some(u), g) => (u, g),
            (None, _) => {
                return Err(Error::Domain(format!("UE {k} has a rate target but no zero-forcing direction")));
            }
        };
        let p = f[k] * f[k] * topo.noise_mw[k] / (g * g);
        used[topo.serving_bst(k)] += p;
        let amp = p.sqrt();
        for (w, d) in beams.beam_mut(k).iter_mut().zip(u) {
            *w = d * amp;
        }
    }
    if used.iter().zip(&topo.max_tx_mw).any(|(p, max)| p > max) {
        return Ok(None);
    }
    Ok(Some(beams))
}

/// Epigraph and exchange variables shared by every cone program here.
pub(crate) struct EnergyBlock {
    pub delta: Vec<usize>,
}

/// Adds the grid-cost epigraphs and, if enabled, the line exchange variables.
///
/// `tx_var[m]` optionally names a variable holding BST `m`'s radiated power
/// in units of `unit`; `fixed_mw[m]` is the rest of its power draw. The
/// objective receives `sum_m (1 - rho) t_m + rho x_m`, which is
/// `sum_m G_m / (alpha_b * unit)` up to a constant.
pub(crate) fn add_energy_block(
    prog: &mut ConeProgram,
    topo: &Topology,
    tx_var: &[Option<usize>],
    fixed_mw: &[f64],
    harvest: &[f64],
    prices: EnergyPrices,
    unit: f64,
    exchange: bool,
) -> EnergyBlock {
    let m_count = topo.num_bsts();
    let rho = prices.sell / prices.buy;
    let eta = topo.pa_efficiency;
    let lines = if exchange { topo.lines.len() } else { 0 };
    let delta = prog.add_vars(lines);
    // u[e][0] for the `from` end, u[e][1] for the `to` end.
    let u = prog.add_vars(2 * lines);
    let mut rows = Vec::new();
    for e in 0..lines {
        let beta = topo.lines[e].efficiency;
        let (uf, ut) = (u + 2 * e, u + 2 * e + 1);
        prog.set_objective(uf, rho);
        prog.set_objective(ut, rho);
        rows.push(AffineExpr::var(uf, 1.0).add(delta + e, -1.0));
        rows.push(AffineExpr::var(uf, 1.0).add(delta + e, -beta));
        rows.push(AffineExpr::var(ut, 1.0).add(delta + e, 1.0));
        rows.push(AffineExpr::var(ut, 1.0).add(delta + e, beta));
    }
    let t = prog.add_vars(m_count);
    for m in 0..m_count {
        prog.set_objective(t + m, 1.0 - rho);
        rows.push(AffineExpr::var(t + m, 1.0));
        let mut x = AffineExpr::var(t + m, 1.0).plus(-(fixed_mw[m] - harvest[m]) / unit);
        if let Some(p) = tx_var[m] {
            prog.set_objective(p, rho / eta);
            x = x.add(p, -1.0 / eta);
        }
        if exchange {
            for (e, orientation) in topo.incident_lines(m) {
                x = x.add(u + 2 * e + usize::from(orientation < 0.0), -1.0);
            }
        }
        rows.push(x);
    }
    prog.nonnegative(rows);
    EnergyBlock {
        delta: (delta..delta + lines).collect(),
    }
}

/// Beam variables and the rate, phase and power constraints on them.
struct BeamLayout {
    active: Vec<usize>,
    base: usize,
    antennas: usize,
    /// Radiated-power variable per BST (units of the power unit).
    tx_var: Vec<Option<usize>>,
}

impl BeamLayout {
    fn var(&self, slot: usize) -> usize {
        self.base + 2 * self.antennas * slot
    }

    fn beams(&self, x: &[f64], num_ues: usize, amp: f64) -> Beamformers {
        let l = self.antennas;
        let mut beams = Beamformers::zeros(num_ues, l);
        for (slot, &k) in self.active.iter().enumerate() {
            for (i, w) in beams.beam_mut(k).iter_mut().enumerate() {
                *w = C64::new(x[self.var(slot) + i], x[self.var(slot) + l + i]) * amp;
            }
        }
        beams
    }
}

/// Adds beams for every UE with a positive target. With `budget_scale` set,
/// the per-BST budget becomes `budget_scale * P_max` instead of `P_max`.
fn add_beam_constraints(
    prog: &mut ConeProgram,
    problem: &PerSlotProblem,
    f: &[f64],
    budget_scale: Option<usize>,
) -> BeamLayout {
    let topo = problem.topology;
    let ch = problem.channel;
    let l = topo.antennas;
    let unit = power_unit(topo);
    let amp = unit.sqrt();
    let active: Vec<usize> = (0..topo.num_ues()).filter(|&k| f[k] > 0.0).collect();
    let base = prog.add_vars(2 * l * active.len());
    let var = |slot: usize| base + 2 * l * slot;
    // Re(s h^H w) and Im(s h^H w) as expressions in the beam of active slot `j`.
    let products = |h: &[C64], s: f64, j: usize| -> (AffineExpr, AffineExpr) {
        let mut re = AffineExpr::default();
        let mut im = AffineExpr::default();
        for (i, c) in h.iter().enumerate() {
            let (a, b) = (s * c.re, s * c.im);
            re = re.add(var(j) + i, a).add(var(j) + l + i, b);
            im = im.add(var(j) + l + i, a).add(var(j) + i, -b);
        }
        (re, im)
    };

    let mut phase_rows = Vec::with_capacity(active.len());
    let mut cones = Vec::with_capacity(active.len());
    for (slot, &k) in active.iter().enumerate() {
        // Row scale: sqrt(omega) of the serving link.
        let s = topo.pathloss_linear(topo.serving_bst(k), k).sqrt();
        let (head, imag) = products(ch.link(topo.serving_bst(k), k), s, slot);
        phase_rows.push(imag);
        let mut cone = vec![head];
        for (other, &j) in active.iter().enumerate().filter(|&(o, _)| o != slot) {
            let (re, im) = products(ch.link(topo.serving_bst(j), k), s * f[k], other);
            cone.push(re);
            cone.push(im);
        }
        cone.push(AffineExpr::constant(f[k] * s * topo.noise_mw[k].sqrt() / amp));
        cones.push(cone);
    }
    prog.equal_zero(phase_rows);

    let mut tx_var = vec![None; topo.num_bsts()];
    let mut budget_rows = Vec::new();
    for m in 0..topo.num_bsts() {
        let mine: Vec<usize> = (0..active.len()).filter(|&s| topo.serving_bst(active[s]) == m).collect();
        if mine.is_empty() {
            continue;
        }
        let p = prog.add_vars(1);
        tx_var[m] = Some(p);
        let budget = topo.max_tx_mw[m] / unit;
        budget_rows.push(match budget_scale {
            Some(scale) => AffineExpr::var(p, -1.0).add(scale, budget),
            None => AffineExpr::var(p, -1.0).plus(budget),
        });
        // ||(2w, p - 1)|| <= p + 1  <=>  ||w||^2 <= p
        let mut cone = vec![AffineExpr::var(p, 1.0).plus(1.0), AffineExpr::var(p, 1.0).plus(-1.0)];
        for &s in &mine {
            for i in 0..2 * l {
                cone.push(AffineExpr::var(var(s) + i, 2.0));
            }
        }
        cones.push(cone);
    }
    prog.nonnegative(budget_rows);
    for cone in cones {
        prog.second_order(cone);
    }
    BeamLayout {
        active,
        base,
        antennas: l,
        tx_var,
    }
}

/// The full beamforming SOCP for fixed targets `f`.
fn solve_full(problem: &PerSlotProblem, phi: f64, f: &[f64], opts: &SolveOptions) -> Result<FixedPhi> {
    let topo = problem.topology;
    let unit = power_unit(topo);
    let mut prog = ConeProgram::new(0);
    let layout = add_beam_constraints(&mut prog, problem, f, None);
    let fixed: Vec<f64> = (0..topo.num_bsts()).map(|m| topo.circuit_power(m)).collect();
    let block = add_energy_block(
        &mut prog,
        topo,
        &layout.tx_var,
        &fixed,
        problem.harvest_per_slot,
        problem.prices,
        unit,
        opts.exchange,
    );
    let x = match prog.solve(&opts.solver) {
        Ok(ConicOutcome::Solved { x, .. }) => x,
        Ok(ConicOutcome::Infeasible) => return Ok(FixedPhi::Infeasible),
        Err(e) => {
            dump_program(&prog, opts, problem, phi);
            return Err(e);
        }
    };
    let mut beams = layout.beams(&x, topo.num_ues(), unit.sqrt());
    if opts.polish {
        polish_powers(problem, &mut beams, &layout.active, f);
    }
    fix_phases(problem, &mut beams, &layout.active);
    let mut plan = ExchangePlan::idle(topo);
    for (e, &d) in block.delta.iter().enumerate() {
        plan.flows[e] = x[d] * unit;
    }
    Ok(FixedPhi::Solved(Box::new(assemble(problem, phi, beams, plan))))
}

/// Rotates each beam so its own received amplitude `h^H w` is real and
/// nonnegative.
fn fix_phases(problem: &PerSlotProblem, beams: &mut Beamformers, active: &[usize]) {
    let topo = problem.topology;
    for &k in active {
        let g = inner(problem.channel.link(topo.serving_bst(k), k), beams.beam(k));
        if g.norm() > 0.0 {
            let rot = g.conj() / g.norm();
            for w in beams.beam_mut(k) {
                *w *= rot;
            }
        }
    }
}

/// Smallest uniform scaling `s` of every BST's power budget under which the
/// rate targets at `phi` are attainable; `phi` is feasible iff `s <= 1`.
/// `None` when no amount of power reaches the targets.
pub fn power_margin(problem: &PerSlotProblem, phi: f64, opts: &SolveOptions) -> Result<Option<f64>> {
    let f = targets(problem, phi);
    if f.iter().any(|x| x.is_infinite()) {
        return Ok(None);
    }
    if f.iter().all(|&x| x == 0.0) {
        return Ok(Some(0.0));
    }
    let topo = problem.topology;
    if let BeamMode::ZeroForcing(dirs) = &opts.beams {
        let mut used = vec![0.0; topo.num_bsts()];
        for k in (0..topo.num_ues()).filter(|&k| f[k] > 0.0) {
            let g = dirs.gains[k];
            used[topo.serving_bst(k)] += f[k] * f[k] * topo.noise_mw[k] / (g * g);
        }
        return Ok(Some(
            used.iter().zip(&topo.max_tx_mw).map(|(p, max)| p / max).fold(0.0, f64::max),
        ));
    }
    let mut prog = ConeProgram::new(0);
    let scale = prog.add_vars(1);
    prog.set_objective(scale, 1.0);
    add_beam_constraints(&mut prog, problem, &f, Some(scale));
    match prog.solve(&opts.solver) {
        Ok(ConicOutcome::Solved { objective, .. }) => Ok(Some(objective)),
        Ok(ConicOutcome::Infeasible) => Ok(None),
        Err(e) => {
            dump_program(&prog, opts, problem, phi);
            Err(e)
        }
    }
}

/// Keeps the beam directions and solves for the smallest powers that meet
/// every rate target with equality. Skipped if the result would raise any
/// beam's power.
fn polish_powers(problem: &PerSlotProblem, beams: &mut Beamformers, active: &[usize], f: &[f64]) {
    let topo = problem.topology;
    let ch = problem.channel;
    let n = active.len();
    let dirs: Vec<Vec<C64>> = active
        .iter()
        .map(|&k| {
            let w = beams.beam(k);
            let norm = norm_sqr(w).sqrt();
            w.iter().map(|c| c / norm).collect()
        })
        .collect();
    let old: Vec<f64> = active.iter().map(|&k| norm_sqr(beams.beam(k))).collect();
    if old.iter().any(|&p| !(p > 0.0)) {
        return;
    }
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for (r, &k) in active.iter().enumerate() {
        let s2 = topo.pathloss_linear(topo.serving_bst(k), k);
        let f2 = f[k] * f[k];
        for (c, &j) in active.iter().enumerate() {
            let gain = s2 * inner(ch.link(topo.serving_bst(j), k), &dirs[c]).norm_sqr();
            a[(r, c)] = if r == c { gain } else { -f2 * gain };
        }
        b[r] = f2 * s2 * topo.noise_mw[k];
    }
    let Some(p) = a.lu().solve(&b) else { return };
    let acceptable = p
        .iter()
        .zip(&old)
        .all(|(&new, &prev)| new.is_finite() && new > 0.0 && new <= prev * (1.0 + 1e-6));
    if !acceptable {
        return;
    }
    for (slot, &k) in active.iter().enumerate() {
        let amp = p[slot].sqrt();
        for (w, d) in beams.beam_mut(k).iter_mut().zip(&dirs[slot]) {
            *w = d * amp;
        }
    }
}

fn dump_program(prog: &ConeProgram, opts: &SolveOptions, problem: &PerSlotProblem, phi: f64) {
    let Some(dir) = &opts.dump_dir else { return };
    if std::fs::create_dir_all(dir).is_err() {
        return;
    }
    let path = dir.join(format!("slot{}_phi{phi:.6}.txt", problem.channel.slot()));
    if let Ok(file) = std::fs::File::create(path) {
        let _ = prog.write_text(std::io::BufWriter::new(file));
    }
}

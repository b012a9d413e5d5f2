//! One-dimensional search over the rate fraction `phi`.
//!
//! Feasibility is monotone in `phi` (targets only grow), so the largest
//! feasible value is found by a safeguarded bracketing search. The value function is then
//! scanned on a coarse grid and refined by golden-section search around the
//! best grid point, with a fine-grid fallback when the coarse samples are
//! not unimodal.
//!
//! The objective splits as `c * phi + E(phi)` where `c` is known in closed
//! form and the energy part `E` is nondecreasing in `phi` (a larger `phi`
//! shrinks the feasible set). Hence `c * x + E(a)` bounds the objective from
//! below for every `x >= a`, and points whose bound is no better than the
//! incumbent are skipped without solving.

use super::{power_margin, solve_fixed_phi, FixedPhi, PerSlotProblem, SearchStats, SlotDecision, SolveOptions};
use crate::error::{Error, Result};

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const SAME_POINT: f64 = 1e-12;

struct Probe<'p, 'a> {
    problem: &'p PerSlotProblem<'a>,
    opts: &'p SolveOptions,
    c: f64,
    /// Evaluated points with their objective, `None` when infeasible.
    points: Vec<(f64, Option<f64>)>,
    best: Option<SlotDecision>,
    stats: SearchStats,
}

impl<'p, 'a> Probe<'p, 'a> {
    fn new(problem: &'p PerSlotProblem<'a>, opts: &'p SolveOptions) -> Self {
        Probe {
            problem,
            opts,
            c: problem.rate_coefficient(),
            points: Vec::new(),
            best: None,
            stats: SearchStats::default(),
        }
    }

    fn lookup(&self, phi: f64) -> Option<Option<f64>> {
        self.points.iter().find(|(p, _)| (p - phi).abs() <= SAME_POINT).map(|&(_, v)| v)
    }

    /// Objective at `phi`, `None` if infeasible. A solver failure is counted
    /// and treated as infeasible unless `strict` is set.
    fn eval(&mut self, phi: f64, strict: bool) -> Result<Option<f64>> {
        if let Some(v) = self.lookup(phi) {
            return Ok(v);
        }
        self.stats.solves += 1;
        let value = match solve_fixed_phi(self.problem, phi, self.opts) {
            Ok(FixedPhi::Solved(d)) => {
                let obj = d.objective;
                if self.best.as_ref().is_none_or(|b| obj < b.objective) {
                    self.best = Some(*d);
                }
                Some(obj)
            }
            Ok(FixedPhi::Infeasible) => {
                self.stats.infeasible += 1;
                None
            }
            Err(Error::SolverFailure { .. }) if !strict => {
                self.stats.failed_probes += 1;
                None
            }
            Err(e) => return Err(e),
        };
        self.points.push((phi, value));
        Ok(value)
    }

    /// `ln s(phi)` of the power margin; infinite when unattainable. A
    /// solver failure counts as unattainable.
    fn log_margin(&mut self, phi: f64) -> Result<f64> {
        self.stats.margin_solves += 1;
        match power_margin(self.problem, phi, self.opts) {
            Ok(Some(s)) => Ok(s.max(f64::MIN_POSITIVE).ln()),
            Ok(None) => Ok(f64::INFINITY),
            Err(Error::SolverFailure { .. }) => {
                self.stats.failed_probes += 1;
                Ok(f64::INFINITY)
            }
            Err(e) => Err(e),
        }
    }

    fn incumbent(&self) -> Option<f64> {
        self.best.as_ref().map(|d| d.objective)
    }

    /// Largest known energy part at a point not above `phi`.
    fn energy_floor(&self, phi: f64) -> f64 {
        self.points
            .iter()
            .filter(|(p, v)| *p <= phi + SAME_POINT && v.is_some())
            .map(|&(p, v)| v.unwrap() - self.c * p)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Lower bound of the objective at `phi`.
    fn lower_bound(&self, phi: f64) -> f64 {
        self.c * phi + self.energy_floor(phi)
    }

    fn dominated(&self, phi: f64) -> bool {
        self.opts.prune && self.incumbent().is_some_and(|best| self.lower_bound(phi) >= best)
    }

    /// Shrinks `[a, b]` to the part where the bound can still beat the
    /// incumbent; `None` if nothing is left.
    fn shrink(&self, a: f64, b: f64) -> Option<(f64, f64)> {
        let Some(best) = self.incumbent().filter(|_| self.opts.prune) else {
            return Some((a, b));
        };
        let floor = self.energy_floor(a);
        if !floor.is_finite() {
            return Some((a, b));
        }
        // Bound on [a, b] is c * x + floor.
        if self.c < 0.0 {
            let cut = (best - floor) / self.c;
            if cut >= b {
                None
            } else {
                Some((a.max(cut), b))
            }
        } else if self.c > 0.0 {
            let cut = (best - floor) / self.c;
            if cut <= a {
                None
            } else {
                Some((a, b.min(cut)))
            }
        } else if floor >= best {
            None
        } else {
            Some((a, b))
        }
    }
}

/// Largest feasible `phi`, bracketed to within the `phi` tolerance.
///
/// Feasibility is decided on the power margin `s(phi)` (feasible iff
/// `s <= 1`), which is increasing in `phi` and always solvable. The bracket
/// `[lo, hi]` with `lo` feasible and `hi` infeasible shrinks by
/// interpolation steps on `ln s`, safeguarded by bisection whenever the
/// bracket fails to halve. The returned point is confirmed on the full
/// problem.
fn feasible_limit(probe: &mut Probe) -> Result<f64> {
    if probe.eval(1.0, false)?.is_some() {
        return Ok(1.0);
    }
    let tol = probe.opts.phi_tol;
    let q_max = probe
        .problem
        .schedule
        .scheduled()
        .map(|k| probe.problem.access_now[k])
        .fold(0.0, f64::max);
    let (mut lo, mut hi) = (0.0, 1.0);
    let (mut y_lo, mut y_hi) = (f64::NEG_INFINITY, probe.log_margin(1.0)?);
    let mut widths = vec![1.0];
    let mut last_moved_lo: Option<bool> = None;
    while hi - lo > tol {
        let stalled = widths.len() >= 3 && widths[widths.len() - 1] > 0.5 * widths[widths.len() - 3];
        let mut x = if stalled || !y_hi.is_finite() {
            0.5 * (lo + hi)
        } else if y_lo.is_finite() {
            lo + (hi - lo) * (-y_lo) / (y_hi - y_lo)
        } else {
            // Margin modelled as A * (exp(q phi) - 1) through the upper point.
            let a = y_hi.exp() / (q_max * hi).exp_m1();
            (1.0 / a).ln_1p() / q_max
        };
        if !x.is_finite() {
            x = 0.5 * (lo + hi);
        }
        x = x.clamp(lo + 0.5 * tol, hi - 0.5 * tol);
        let y = probe.log_margin(x)?;
        if y <= 0.0 {
            lo = x;
            y_lo = y;
            if last_moved_lo == Some(true) && y_hi.is_finite() {
                y_hi *= 0.5;
            }
            last_moved_lo = Some(true);
        } else {
            hi = x;
            y_hi = y;
            if last_moved_lo == Some(false) && y_lo.is_finite() {
                y_lo *= 0.5;
            }
            last_moved_lo = Some(false);
        }
        widths.push(hi - lo);
    }
    // Confirm on the full problem; step back if tolerances disagree.
    for _ in 0..5 {
        if lo <= 0.0 || probe.eval(lo, false)?.is_some() {
            return Ok(lo);
        }
        lo = (lo - tol).max(0.0);
    }
    let mut hi = lo;
    let mut lo = 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if probe.eval(mid, false)?.is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Evaluates a uniform grid on `[0, hi]` from the top down, skipping
/// dominated points. Returns the grid with objective values (`None` for
/// skipped or infeasible points).
fn scan(probe: &mut Probe, hi: f64, count: usize) -> Result<Vec<(f64, Option<f64>)>> {
    let count = count.max(2);
    let mut grid: Vec<(f64, Option<f64>)> = (0..count).map(|i| (hi * i as f64 / (count - 1) as f64, None)).collect();
    for i in (0..count).rev() {
        let phi = grid[i].0;
        if probe.lookup(phi).is_none() && probe.dominated(phi) {
            probe.stats.pruned += 1;
            continue;
        }
        grid[i].1 = probe.eval(phi, false)?;
    }
    Ok(grid)
}

/// True when the evaluated grid values fall and then rise.
fn unimodal(grid: &[(f64, Option<f64>)]) -> bool {
    let values: Vec<f64> = grid.iter().filter_map(|g| g.1).collect();
    let tol = |a: f64, b: f64| 1e-9 * a.abs().max(b.abs()).max(1e-300);
    let mut rising = false;
    for w in values.windows(2) {
        if w[1] > w[0] + tol(w[0], w[1]) {
            rising = true;
        } else if rising && w[1] < w[0] - tol(w[0], w[1]) {
            return false;
        }
    }
    true
}

fn golden(probe: &mut Probe, mut a: f64, mut b: f64) -> Result<()> {
    let tol = probe.opts.phi_tol;
    loop {
        match probe.shrink(a, b) {
            None => {
                probe.stats.pruned += 1;
                return Ok(());
            }
            Some((na, nb)) => {
                a = na;
                b = nb;
            }
        }
        if b - a <= tol {
            return Ok(());
        }
        let x1 = b - GOLDEN * (b - a);
        let x2 = a + GOLDEN * (b - a);
        let f1 = probe.eval(x1, false)?.unwrap_or(f64::INFINITY);
        let f2 = probe.eval(x2, false)?.unwrap_or(f64::INFINITY);
        if f1 <= f2 {
            b = x2;
        } else {
            a = x1;
        }
    }
}

/// The best decision over `phi` for the given options.
pub fn search_phi(problem: &PerSlotProblem, opts: &SolveOptions) -> Result<SlotDecision> {
    problem.validate()?;
    let mut probe = Probe::new(problem, opts);
    // phi = 0 switches every beam off and is always feasible.
    probe.eval(0.0, true)?;
    if !problem.is_idle() {
        let hi = feasible_limit(&mut probe)?;
        probe.stats.phi_hi = hi;
        if hi > 0.0 {
            let mut grid = scan(&mut probe, hi, opts.grid_points)?;
            if !unimodal(&grid) {
                probe.stats.fine_grid = true;
                grid = scan(&mut probe, hi, opts.fine_grid_points)?;
            }
            let best_idx = grid
                .iter()
                .enumerate()
                .filter_map(|(i, g)| g.1.map(|v| (i, v)))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .map(|(i, _)| i);
            if let Some(i) = best_idx {
                let a = grid[i.saturating_sub(1)].0;
                let b = grid[(i + 1).min(grid.len() - 1)].0;
                golden(&mut probe, a, b)?;
            }
        }
    }
    let stats = probe.stats;
    let mut decision = probe.best.expect("phi = 0 is always solved");
    decision.stats = stats;
    Ok(decision)
}

/// One TSUBE slot: full beamforming with energy exchange.
pub fn tsube_slot(problem: &PerSlotProblem) -> Result<SlotDecision> {
    search_phi(problem, &SolveOptions::default())
}

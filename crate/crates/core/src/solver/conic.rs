//! A small linear-objective cone program container with an interior-point
//! backend.
//!
//! Constraints are stored as affine expressions that must lie in a cone:
//! `b - A x ∈ K`, where `K` is a product of zero, nonnegative and
//! second-order cones. [`ConeProgram::write_text`] dumps the program in a
//! line-oriented format for cross-checking with other solvers:
//!
//! ```text
//! # minimize c'x  subject to  b - A x in K
//! vars <n>
//! rows <m>
//! objective <count>        followed by <count> lines "<col> <value>"
//! cones <count>            followed by <count> lines "zero|nonneg|soc <dim>"
//! rhs <count>              followed by <count> lines "<row> <value>"
//! matrix <count>           followed by <count> lines "<row> <col> <value>"
//! ```
//!
//! Only nonzero entries are written; indices are zero-based; values use
//! Rust's shortest round-trip float formatting.

use std::io::Write;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    Zero,
    NonNegative,
    SecondOrder,
}

impl ConeKind {
    fn label(self) -> &'static str {
        match self {
            ConeKind::Zero => "zero",
            ConeKind::NonNegative => "nonneg",
            ConeKind::SecondOrder => "soc",
        }
    }
}

/// `constant + sum coeff * x[col]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        AffineExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(col: usize, coeff: f64) -> Self {
        AffineExpr {
            terms: vec![(col, coeff)],
            constant: 0.0,
        }
    }

    pub fn add(mut self, col: usize, coeff: f64) -> Self {
        self.terms.push((col, coeff));
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeProgram {
    num_vars: usize,
    objective: Vec<f64>,
    blocks: Vec<(ConeKind, Vec<AffineExpr>)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub feasibility_tol: f64,
    pub gap_tol: f64,
    pub max_iter: u32,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            feasibility_tol: 1e-7,
            gap_tol: 1e-8,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConicOutcome {
    Solved { x: Vec<f64>, objective: f64, reduced_accuracy: bool },
    Infeasible,
}

impl ConeProgram {
    pub fn new(num_vars: usize) -> Self {
        ConeProgram {
            num_vars,
            objective: vec![0.0; num_vars],
            blocks: Vec::new(),
        }
    }

    /// Appends `count` fresh variables with zero cost; returns the first index.
    pub fn add_vars(&mut self, count: usize) -> usize {
        let first = self.num_vars;
        self.num_vars += count;
        self.objective.resize(self.num_vars, 0.0);
        first
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn set_objective(&mut self, col: usize, coeff: f64) {
        self.objective[col] = coeff;
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    /// Requires every expression to be zero.
    pub fn equal_zero(&mut self, exprs: Vec<AffineExpr>) {
        self.push(ConeKind::Zero, exprs);
    }

    /// Requires every expression to be nonnegative.
    pub fn nonnegative(&mut self, exprs: Vec<AffineExpr>) {
        self.push(ConeKind::NonNegative, exprs);
    }

    /// Requires `exprs[0] >= ||exprs[1..]||`.
    pub fn second_order(&mut self, exprs: Vec<AffineExpr>) {
        assert!(!exprs.is_empty(), "second-order cone needs a head entry");
        self.blocks.push((ConeKind::SecondOrder, exprs));
    }

    fn push(&mut self, kind: ConeKind, exprs: Vec<AffineExpr>) {
        if exprs.is_empty() {
            return;
        }
        // Merge consecutive blocks of the same separable kind.
        if let Some((last, rows)) = self.blocks.last_mut() {
            if *last == kind {
                rows.extend(exprs);
                return;
            }
        }
        self.blocks.push((kind, exprs));
    }

    pub fn num_rows(&self) -> usize {
        self.blocks.iter().map(|(_, r)| r.len()).sum()
    }

    fn matrices(&self) -> (CscMatrix<f64>, Vec<f64>, Vec<SupportedConeT<f64>>) {
        let m = self.num_rows();
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut b = Vec::with_capacity(m);
        let mut cones = Vec::with_capacity(self.blocks.len());
        let mut r = 0;
        for (kind, exprs) in &self.blocks {
            cones.push(match kind {
                ConeKind::Zero => SupportedConeT::ZeroConeT(exprs.len()),
                ConeKind::NonNegative => SupportedConeT::NonnegativeConeT(exprs.len()),
                ConeKind::SecondOrder => SupportedConeT::SecondOrderConeT(exprs.len()),
            });
            for e in exprs {
                for &(j, c) in &e.terms {
                    if c != 0.0 {
                        rows.push(r);
                        cols.push(j);
                        vals.push(-c);
                    }
                }
                b.push(e.constant);
                r += 1;
            }
        }
        (CscMatrix::new_from_triplets(m, self.num_vars, rows, cols, vals), b, cones)
    }

    pub fn solve(&self, settings: &SolverSettings) -> Result<ConicOutcome> {
        let (a, b, cones) = self.matrices();
        let p = CscMatrix::<f64>::zeros((self.num_vars, self.num_vars));
        let cfg = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(settings.max_iter)
            .tol_feas(settings.feasibility_tol)
            .tol_gap_abs(settings.gap_tol)
            .tol_gap_rel(settings.gap_tol)
            .build()
            .expect("static solver settings are valid");
        let mut solver = DefaultSolver::new(&p, &self.objective, &a, &b, &cones, cfg).map_err(|e| {
            Error::SolverFailure {
                status: format!("setup: {e}"),
                primal_residual: f64::NAN,
                dual_residual: f64::NAN,
            }
        })?;
        solver.solve();
        let sol = &solver.solution;
        match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => Ok(ConicOutcome::Solved {
                x: sol.x.clone(),
                objective: sol.obj_val,
                reduced_accuracy: sol.status == SolverStatus::AlmostSolved,
            }),
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => Ok(ConicOutcome::Infeasible),
            status => Err(Error::SolverFailure {
                status: status.to_string(),
                primal_residual: sol.r_prim,
                dual_residual: sol.r_dual,
            }),
        }
    }

    /// Largest violation of any cone constraint at `x` (zero when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (kind, exprs) in &self.blocks {
            let v: Vec<f64> = exprs.iter().map(|e| e.eval(x)).collect();
            let viol = match kind {
                ConeKind::Zero => v.iter().fold(0.0f64, |a, s| a.max(s.abs())),
                ConeKind::NonNegative => v.iter().fold(0.0f64, |a, &s| a.max(-s)),
                ConeKind::SecondOrder => {
                    let tail = v[1..].iter().map(|s| s * s).sum::<f64>().sqrt();
                    (tail - v[0]).max(0.0)
                }
            };
            worst = worst.max(viol);
        }
        worst
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let (a, b, _) = self.matrices();
        writeln!(out, "# minimize c'x  subject to  b - A x in K")?;
        writeln!(out, "vars {}", self.num_vars)?;
        writeln!(out, "rows {}", self.num_rows())?;
        let obj: Vec<_> = self.objective.iter().enumerate().filter(|(_, &c)| c != 0.0).collect();
        writeln!(out, "objective {}", obj.len())?;
        for (j, c) in obj {
            writeln!(out, "{j} {c}")?;
        }
        writeln!(out, "cones {}", self.blocks.len())?;
        for (kind, exprs) in &self.blocks {
            writeln!(out, "{} {}", kind.label(), exprs.len())?;
        }
        let rhs: Vec<_> = b.iter().enumerate().filter(|(_, &v)| v != 0.0).collect();
        writeln!(out, "rhs {}", rhs.len())?;
        for (i, v) in rhs {
            writeln!(out, "{i} {v}")?;
        }
        writeln!(out, "matrix {}", a.nnz())?;
        for col in 0..a.n {
            for idx in a.colptr[col]..a.colptr[col + 1] {
                writeln!(out, "{} {} {}", a.rowval[idx], col, a.nzval[idx])?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn small_socp() {
        // minimize t subject to t >= ||(x - 3, y + 1)||, x + y = 1
        let mut p = ConeProgram::new(3);
        p.set_objective(2, 1.0);
        p.equal_zero(vec![AffineExpr::var(0, 1.0).add(1, 1.0).plus(-1.0)]);
        p.second_order(vec![
            AffineExpr::var(2, 1.0),
            AffineExpr::var(0, 1.0).plus(-3.0),
            AffineExpr::var(1, 1.0).plus(1.0),
        ]);
        match p.solve(&SolverSettings::default()).unwrap() {
            ConicOutcome::Solved { x, objective, .. } => {
                // Distance from (3, -1) to the line x + y = 1 is 1/sqrt(2).
                assert_relative_eq!(objective, 0.5f64.sqrt(), epsilon = 1e-6);
                assert_relative_eq!(x[0] + x[1], 1.0, epsilon = 1e-7);
                assert!(p.max_violation(&x) < 1e-6);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn infeasible_program() {
        let mut p = ConeProgram::new(1);
        p.set_objective(0, 1.0);
        p.nonnegative(vec![AffineExpr::var(0, 1.0).plus(-2.0), AffineExpr::var(0, -1.0).plus(1.0)]);
        assert_eq!(p.solve(&SolverSettings::default()).unwrap(), ConicOutcome::Infeasible);
    }

    #[test]
    fn text_dump_lists_every_section() {
        let mut p = ConeProgram::new(2);
        p.set_objective(1, 2.5);
        p.nonnegative(vec![AffineExpr::var(0, 1.0), AffineExpr::var(1, 1.0).plus(-1.0)]);
        p.second_order(vec![AffineExpr::var(1, 1.0), AffineExpr::var(0, 1.0)]);
        let mut buf = Vec::new();
        p.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let expected = "# minimize c'x  subject to  b - A x in K\n\
                        vars 2\nrows 4\nobjective 1\n1 2.5\ncones 2\nnonneg 2\nsoc 2\n\
                        rhs 1\n1 -1\nmatrix 4\n0 0 -1\n3 0 -1\n1 1 -1\n2 1 -1\n";
        assert_eq!(text, expected);
    }
}

//! Linear programs and their solvers.
//!
//! [`LinearProgram`] is a plain container: bounded variables, linear rows and
//! a maximisation objective. Two backends solve it:
//!
//! * a dense bounded-variable primal simplex, written for the small and
//!   medium problems that branch-and-bound produces in bulk;
//! * a sparse interior-point method (the `clarabel` crate) for
//!   transmission-scale problems with thousands of rows. Its optima are
//!   accurate to about `1e-9` but need not be vertices.
//!
//! Both backends are held to the same contract: every returned optimum is
//! re-checked against the original rows and bounds, and a failed check is a
//! [`Error::Numerical`](crate::Error::Numerical), never a silent answer.

mod format;
mod interior;
mod simplex;

use std::fmt;

use crate::error::{Error, Result};

pub use format::{write_lp_text, write_mip_text};

/// Handle to a variable of one [`LinearProgram`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

#[derive(Clone, Debug)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * x[v.0]).sum()
    }

    /// Allowed range of the row activity.
    fn range(&self) -> (f64, f64) {
        match self.relation {
            Relation::Le => (f64::NEG_INFINITY, self.rhs),
            Relation::Eq => (self.rhs, self.rhs),
            Relation::Ge => (self.rhs, f64::INFINITY),
        }
    }
}

/// A maximisation LP.
#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    vars: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Vec<f64>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable with bounds `[lower, upper]`. Either bound may be infinite.
    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
        });
        self.objective.push(0.0);
        VarId(self.vars.len() - 1)
    }

    pub fn add_constraint(&mut self, name: impl Into<String>, terms: Vec<(VarId, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint {
            name: name.into(),
            terms,
            relation,
            rhs,
        });
    }

    pub fn set_objective(&mut self, var: VarId, coef: f64) {
        self.objective[var.0] = coef;
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        self.vars[var.0].lower = lower;
        self.vars[var.0].upper = upper;
    }

    pub fn set_rhs(&mut self, row: usize, rhs: f64) {
        self.constraints[row].rhs = rhs;
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Checks the structural invariants: every referenced variable exists,
    /// bounds are ordered, and no coefficient is NaN or infinite.
    pub fn check_well_formed(&self) -> Result<()> {
        for (j, v) in self.vars.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(Error::Input(format!(
                    "variable {j} ({}) has bounds [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
            if v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(Error::Input(format!("variable {j} ({}) has an empty domain", v.name)));
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(Error::Input(format!("row {i} ({}) has rhs {}", c.name, c.rhs)));
            }
            for &(v, a) in &c.terms {
                if v.0 >= self.vars.len() {
                    return Err(Error::Input(format!("row {i} ({}) uses undeclared variable", c.name)));
                }
                if !a.is_finite() {
                    return Err(Error::Input(format!("row {i} ({}) has coefficient {a}", c.name)));
                }
            }
        }
        if let Some(j) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(Error::Input(format!(
                "objective coefficient of variable {j} is not finite"
            )));
        }
        Ok(())
    }

    /// Largest violation of any bound or row by `x`, scaled by `1 + |bound|`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &xj) in self.vars.iter().zip(x) {
            worst = worst.max(excess(xj, v.lower, v.upper));
        }
        for c in &self.constraints {
            let (lo, hi) = c.range();
            worst = worst.max(excess(c.activity(x), lo, hi));
        }
        worst
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

fn excess(value: f64, lo: f64, hi: f64) -> f64 {
    if value < lo {
        (lo - value) / (1.0 + lo.abs())
    } else if value > hi {
        (value - hi) / (1.0 + hi.abs())
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpResult {
    pub status: LpStatus,
    /// Variable values, indexed by [`VarId::index`]. Empty unless optimal.
    pub values: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl LpResult {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.0]
    }

    fn without_solution(status: LpStatus, iterations: usize) -> Self {
        LpResult {
            status,
            values: Vec::new(),
            objective: match status {
                LpStatus::Unbounded => f64::INFINITY,
                _ => f64::NEG_INFINITY,
            },
            iterations,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LpBackend {
    /// Dense for problems up to [`DENSE_CELL_LIMIT`] tableau cells, interior above.
    #[default]
    Auto,
    Dense,
    Interior,
}

/// Tableau size (rows × columns) above which `Auto` picks the interior backend.
pub const DENSE_CELL_LIMIT: usize = 2_000_000;

#[derive(Clone, Copy, Debug)]
pub struct LpOptions {
    /// Primal and dual feasibility tolerance inside the simplex.
    pub tol: f64,
    /// Acceptance threshold for the final re-check, in the scaled units of
    /// [`LinearProgram::max_violation`].
    pub check_tol: f64,
    pub backend: LpBackend,
    /// `None` picks a limit proportional to the problem size.
    pub max_iterations: Option<usize>,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            tol: 1e-9,
            check_tol: 1e-7,
            backend: LpBackend::Auto,
            max_iterations: None,
        }
    }
}

impl LpOptions {
    pub fn with_backend(backend: LpBackend) -> Self {
        LpOptions {
            backend,
            ..Self::default()
        }
    }
}

/// Solves `lp` with the default backend choice and internal tolerance `tol`.
pub fn solve_lp(lp: &LinearProgram, tol: f64) -> Result<LpResult> {
    solve_lp_with(
        lp,
        &LpOptions {
            tol,
            ..LpOptions::default()
        },
    )
}

pub fn solve_lp_with(lp: &LinearProgram, opts: &LpOptions) -> Result<LpResult> {
    lp.check_well_formed()?;
    let cells = lp.num_constraints() * (2 * lp.num_constraints() + lp.num_vars());
    match opts.backend {
        LpBackend::Auto if cells <= DENSE_CELL_LIMIT => {
            // Ill-conditioned tableaus fall through to the interior-point backend.
            // Infeasibility verdicts are confirmed by the interior-point backend.
            match solve_checked(lp, opts, LpBackend::Dense) {
                Err(Error::Numerical(msg)) => {
                    log::debug!("dense simplex failed ({msg}); retrying with interior point");
                    solve_checked(lp, opts, LpBackend::Interior)
                }
                Ok(r) if r.status == LpStatus::Infeasible => solve_checked(lp, opts, LpBackend::Interior),
                other => other,
            }
        }
        LpBackend::Auto => solve_checked(lp, opts, LpBackend::Interior),
        b => solve_checked(lp, opts, b),
    }
}

fn solve_checked(lp: &LinearProgram, opts: &LpOptions, backend: LpBackend) -> Result<LpResult> {
    let mut result = match backend {
        LpBackend::Dense => simplex::solve(lp, opts)?,
        _ => interior::solve(lp, opts)?,
    };
    if result.is_optimal() {
        let violation = lp.max_violation(&result.values);
        if violation > opts.check_tol {
            return Err(Error::Numerical(format!(
                "{backend:?} backend returned a point violating the LP by {violation:e}"
            )));
        }
        result.objective = lp.objective_value(&result.values);
    }
    Ok(result)
}

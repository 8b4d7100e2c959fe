//! Interior-point backend on top of `clarabel`, for LPs too large for the
//! dense tableau.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus, SupportedConeT, ZeroConeT,
};

use crate::error::{Error, Result};

use super::{LinearProgram, LpOptions, LpResult, LpStatus, Relation};

pub(super) fn solve(lp: &LinearProgram, opts: &LpOptions) -> Result<LpResult> {
    let n = lp.num_vars();
    let (mut ri, mut cj, mut v, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    // Clarabel wants `A x + s = b` with `s` in a product of cones, so rows
    // are emitted equalities first, then inequalities as `a x <= b`.
    let mut push_row = |terms: &mut dyn Iterator<Item = (usize, f64)>, rhs: f64| {
        let row = b.len();
        for (j, a) in terms {
            ri.push(row);
            cj.push(j);
            v.push(a);
        }
        b.push(rhs);
    };
    let mut eq = 0;
    for c in lp.constraints().iter().filter(|c| c.relation == Relation::Eq) {
        push_row(&mut c.terms.iter().map(|&(x, a)| (x.0, a)), c.rhs);
        eq += 1;
    }
    for (j, var) in lp.variables().iter().enumerate() {
        if var.lower == var.upper {
            push_row(&mut std::iter::once((j, 1.0)), var.lower);
            eq += 1;
        }
    }
    for c in lp.constraints() {
        match c.relation {
            Relation::Le => push_row(&mut c.terms.iter().map(|&(x, a)| (x.0, a)), c.rhs),
            Relation::Ge => push_row(&mut c.terms.iter().map(|&(x, a)| (x.0, -a)), -c.rhs),
            Relation::Eq => {}
        }
    }
    for (j, var) in lp.variables().iter().enumerate() {
        if var.lower == var.upper {
            continue;
        }
        if var.upper.is_finite() {
            push_row(&mut std::iter::once((j, 1.0)), var.upper);
        }
        if var.lower.is_finite() {
            push_row(&mut std::iter::once((j, -1.0)), -var.lower);
        }
    }
    let m = b.len();
    // Duplicate triplets are summed by the constructor.
    let a = CscMatrix::new_from_triplets(m, n, ri, cj, v);
    let p = CscMatrix::<f64>::zeros((n, n));
    let q: Vec<f64> = lp.objective().iter().map(|c| -c).collect();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    if eq > 0 {
        cones.push(ZeroConeT(eq));
    }
    if m > eq {
        cones.push(NonnegativeConeT(m - eq));
    }
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_feas(1e-10)
        .tol_gap_abs(1e-10)
        .tol_gap_rel(1e-10)
        .max_iter(opts.max_iterations.map_or(400, |k| k as u32))
        .build()
        .map_err(|e| Error::Numerical(format!("interior-point settings: {e:?}")))?;
    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
        .map_err(|e| Error::Numerical(format!("interior-point setup: {e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    let iterations = sol.iterations as usize;
    match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => Ok(LpResult {
            status: LpStatus::Optimal,
            objective: -sol.obj_val,
            values: snap(lp, &sol.x),
            iterations,
        }),
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            Ok(LpResult::without_solution(LpStatus::Infeasible, iterations))
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            Ok(LpResult::without_solution(LpStatus::Unbounded, iterations))
        }
        other => Err(Error::Numerical(format!(
            "interior-point solver stopped with {other:?}"
        ))),
    }
}

/// Clips tiny bound excursions left by the interior-point iterates.
fn snap(lp: &LinearProgram, x: &[f64]) -> Vec<f64> {
    lp.variables()
        .iter()
        .zip(x)
        .map(|(var, &v)| v.clamp(var.lower, var.upper))
        .collect()
}

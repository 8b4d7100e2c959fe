//! Dense bounded-variable primal simplex on a full tableau.
//!
//! Every row `i` gets a slack `r_i` with `a_i x - r_i = 0` and the row's
//! relation encoded as bounds on `r_i`, so the working problem has only
//! equality rows and bounded columns. Rows whose initial activity falls
//! outside their range get an artificial column; phase one drives those to
//! zero, after which they are fixed at zero and phase two optimises the real
//! objective.

use crate::error::{Error, Result};

use super::{LinearProgram, LpOptions, LpResult, LpStatus};

/// Consecutive degenerate pivots before switching to Bland's rule.
const BLAND_AFTER: usize = 50;
/// Pivots between refactorisations of the basis.
const REFACTOR_EVERY: usize = 100;
const PIVOT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free variable held at zero.
    Zero,
}

struct Tableau {
    m: usize,
    /// Structural column count.
    n: usize,
    /// Total column count: structurals, row slacks, artificials.
    cols: usize,
    /// Row-scaled constraint matrix, `m × n`, kept for refactorisation.
    a: Vec<f64>,
    /// Artificial columns as `(row, sign)`.
    artificials: Vec<(usize, f64)>,
    /// `B^-1 [A | -I | art]`, `m × cols`, row-major.
    t: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    cost: Vec<f64>,
    reduced: Vec<f64>,
    tol: f64,
    iterations: usize,
    max_iterations: usize,
    pivots_since_refactor: usize,
}

enum Phase {
    Optimal,
    Unbounded,
}

pub(super) fn solve(lp: &LinearProgram, opts: &LpOptions) -> Result<LpResult> {
    let mut tab = Tableau::new(lp, opts);
    if !tab.artificials.is_empty() {
        tab.set_phase_one_costs();
        match tab.run()? {
            Phase::Optimal => {}
            Phase::Unbounded => {
                return Err(Error::Numerical("phase one reported unbounded".into()));
            }
        }
        let infeasibility: f64 = tab.artificial_range().map(|j| tab.x[j].abs()).sum();
        if infeasibility > opts.tol.max(1e-9) * (1.0 + tab.m as f64).sqrt() {
            return Ok(LpResult::without_solution(LpStatus::Infeasible, tab.iterations));
        }
        tab.retire_artificials();
    }
    tab.set_phase_two_costs(lp);
    let outcome = tab.run()?;
    if let Phase::Unbounded = outcome {
        return Ok(LpResult::without_solution(LpStatus::Unbounded, tab.iterations));
    }
    tab.refactor()?;
    let values = tab.structural_values();
    Ok(LpResult {
        status: LpStatus::Optimal,
        objective: lp.objective_value(&values),
        values,
        iterations: tab.iterations,
    })
}

impl Tableau {
    fn new(lp: &LinearProgram, opts: &LpOptions) -> Self {
        let n = lp.num_vars();
        let m = lp.num_constraints();
        let mut a = vec![0.0; m * n];
        let mut lo = Vec::with_capacity(n + 2 * m);
        let mut hi = Vec::with_capacity(n + 2 * m);
        for v in lp.variables() {
            lo.push(v.lower);
            hi.push(v.upper);
        }
        // Row equilibration: scale each row so its largest coefficient is 1.
        for (i, c) in lp.constraints().iter().enumerate() {
            for &(v, coef) in &c.terms {
                a[i * n + v.0] += coef;
            }
            let row = &mut a[i * n..(i + 1) * n];
            let big = row.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            let scale = if big > 0.0 { 1.0 / big } else { 1.0 };
            row.iter_mut().for_each(|v| *v *= scale);
            let (rlo, rhi) = c.range();
            lo.push(rlo * scale);
            hi.push(rhi * scale);
        }

        let mut x = vec![0.0; n + m];
        let mut state = vec![State::Lower; n + m];
        for j in 0..n {
            let (l, h) = (lo[j], hi[j]);
            if l.is_finite() {
                x[j] = l;
            } else if h.is_finite() {
                x[j] = h;
                state[j] = State::Upper;
            } else {
                state[j] = State::Zero;
            }
        }

        let ftol = opts.tol.max(1e-12);
        let mut artificials = Vec::new();
        let mut diag = vec![-1.0; m];
        let mut basis = Vec::with_capacity(m);
        for i in 0..m {
            let act: f64 = (0..n).map(|j| a[i * n + j] * x[j]).sum();
            let slack = n + i;
            if act < lo[slack] - ftol || act > hi[slack] + ftol {
                let bound = if act < lo[slack] { lo[slack] } else { hi[slack] };
                x[slack] = bound;
                state[slack] = if act < lo[slack] { State::Lower } else { State::Upper };
                let sign = if bound > act { 1.0 } else { -1.0 };
                artificials.push((i, sign));
                diag[i] = sign;
                basis.push(n + m + artificials.len() - 1);
            } else {
                x[slack] = act;
                state[slack] = State::Basic;
                basis.push(slack);
            }
        }
        let k = artificials.len();
        let cols = n + m + k;
        for &(i, sign) in &artificials {
            let act: f64 = (0..n).map(|j| a[i * n + j] * x[j]).sum();
            x.push((x[n + i] - act) / sign);
            state.push(State::Basic);
            lo.push(0.0);
            hi.push(f64::INFINITY);
        }

        let mut t = vec![0.0; m * cols];
        for i in 0..m {
            let inv = 1.0 / diag[i];
            let row = &mut t[i * cols..(i + 1) * cols];
            for j in 0..n {
                row[j] = a[i * n + j] * inv;
            }
            row[n + i] = -inv;
        }
        for (q, &(i, sign)) in artificials.iter().enumerate() {
            t[i * cols + n + m + q] = sign / diag[i];
        }

        let max_iterations = opts.max_iterations.unwrap_or(50 * (m + cols) + 1000);
        Tableau {
            m,
            n,
            cols,
            a,
            artificials,
            t,
            lo,
            hi,
            x,
            state,
            basis,
            cost: vec![0.0; cols],
            reduced: vec![0.0; cols],
            tol: opts.tol.max(1e-12),
            iterations: 0,
            max_iterations,
            pivots_since_refactor: 0,
        }
    }

    fn artificial_range(&self) -> std::ops::Range<usize> {
        self.n + self.m..self.cols
    }

    fn set_phase_one_costs(&mut self) {
        self.cost.iter_mut().for_each(|c| *c = 0.0);
        for j in self.artificial_range() {
            self.cost[j] = -1.0;
        }
        self.recompute_reduced_costs();
    }

    fn set_phase_two_costs(&mut self, lp: &LinearProgram) {
        self.cost.iter_mut().for_each(|c| *c = 0.0);
        self.cost[..self.n].copy_from_slice(lp.objective());
        self.recompute_reduced_costs();
    }

    /// Pins every artificial at zero. Basic artificials stay in the basis at
    /// value zero; any later pivot through their row is degenerate.
    fn retire_artificials(&mut self) {
        for j in self.artificial_range() {
            self.hi[j] = 0.0;
            self.x[j] = 0.0;
            if self.state[j] != State::Basic {
                self.state[j] = State::Lower;
            }
        }
    }

    fn recompute_reduced_costs(&mut self) {
        let cols = self.cols;
        self.reduced.copy_from_slice(&self.cost);
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * cols..(i + 1) * cols];
                for (d, &v) in self.reduced.iter_mut().zip(row) {
                    *d -= cb * v;
                }
            }
        }
        for &b in &self.basis {
            self.reduced[b] = 0.0;
        }
    }

    /// `x_B = -B^-1 N x_N`, read off the tableau.
    fn recompute_basic_values(&mut self) {
        let cols = self.cols;
        for i in 0..self.m {
            let row = &self.t[i * cols..(i + 1) * cols];
            let mut v = 0.0;
            for ((&t, &x), &st) in row.iter().zip(&self.x).zip(&self.state) {
                if st != State::Basic && x != 0.0 {
                    v -= t * x;
                }
            }
            self.x[self.basis[i]] = v;
        }
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let (n, m) = (self.n, self.m);
        if j < n {
            for (i, o) in out.iter_mut().enumerate().take(m) {
                *o = self.a[i * n + j];
            }
        } else if j < n + m {
            out[j - n] = -1.0;
        } else {
            let (i, sign) = self.artificials[j - n - m];
            out[i] = sign;
        }
    }

    /// Rebuilds the tableau from the original columns of the current basis.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        if m == 0 {
            return Ok(());
        }
        let mut b = vec![0.0; m * m];
        let mut col = vec![0.0; m];
        for (k, &j) in self.basis.iter().enumerate() {
            self.column(j, &mut col);
            for i in 0..m {
                b[i * m + k] = col[i];
            }
        }
        let binv = invert(&mut b, m).ok_or_else(|| Error::Numerical("basis matrix became singular".into()))?;
        let cols = self.cols;
        let mut t = vec![0.0; m * cols];
        for j in 0..cols {
            self.column(j, &mut col);
            for (r, &c) in col.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                for i in 0..m {
                    t[i * cols + j] += binv[i * m + r] * c;
                }
            }
        }
        self.t = t;
        self.recompute_basic_values();
        self.recompute_reduced_costs();
        self.pivots_since_refactor = 0;
        Ok(())
    }

    fn run(&mut self) -> Result<Phase> {
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(Error::Numerical(format!(
                    "simplex iteration limit {} reached",
                    self.max_iterations
                )));
            }
            let bland = degenerate_run >= BLAND_AFTER;
            let Some((q, dir)) = self.choose_entering(bland) else {
                if self.pivots_since_refactor > 0 {
                    // Confirm optimality on a freshly factored tableau.
                    self.refactor()?;
                    if self.choose_entering(bland).is_some() {
                        continue;
                    }
                }
                return Ok(Phase::Optimal);
            };
            self.iterations += 1;
            let (step, leave) = self.ratio_test(q, dir, bland);
            if !step.is_finite() {
                return Ok(Phase::Unbounded);
            }
            degenerate_run = if step <= self.tol { degenerate_run + 1 } else { 0 };
            self.apply_step(q, dir, step, leave)?;
        }
    }

    fn choose_entering(&self, bland: bool) -> Option<(usize, f64)> {
        let dtol = self.tol;
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.cols {
            let d = self.reduced[j];
            let dir = match self.state[j] {
                State::Basic => continue,
                State::Lower if d > dtol && self.hi[j] > self.lo[j] => 1.0,
                State::Upper if d < -dtol && self.hi[j] > self.lo[j] => -1.0,
                State::Zero if d.abs() > dtol => d.signum(),
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            if d.abs() > best_score {
                best_score = d.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    /// Returns the step length and, unless the entering column just flips
    /// to its other bound, the leaving row.
    fn ratio_test(&self, q: usize, dir: f64, bland: bool) -> (f64, Option<usize>) {
        let cols = self.cols;
        let mut step = self.hi[q] - self.lo[q];
        let mut leave = None;
        let mut leave_alpha = 0.0;
        for i in 0..self.m {
            let alpha = self.t[i * cols + q] * dir;
            let b = self.basis[i];
            let ratio = if alpha > PIVOT_TOL && self.lo[b].is_finite() {
                (self.x[b] - self.lo[b]).max(0.0) / alpha
            } else if alpha < -PIVOT_TOL && self.hi[b].is_finite() {
                (self.hi[b] - self.x[b]).max(0.0) / -alpha
            } else {
                continue;
            };
            let slack = if step.is_finite() { 1e-12 * (1.0 + step) } else { 0.0 };
            let better = match leave {
                _ if ratio < step - slack => true,
                Some(r) if ratio <= step + slack => {
                    if bland {
                        b < self.basis[r]
                    } else {
                        alpha.abs() > leave_alpha
                    }
                }
                _ => false,
            };
            if better {
                step = ratio.min(step);
                leave = Some(i);
                leave_alpha = alpha.abs();
            }
        }
        (step, leave)
    }

    fn apply_step(&mut self, q: usize, dir: f64, step: f64, leave: Option<usize>) -> Result<()> {
        let cols = self.cols;
        if step > 0.0 {
            if self.state[q] == State::Zero {
                self.x[q] = dir * step;
            } else {
                self.x[q] += dir * step;
            }
            for i in 0..self.m {
                let alpha = self.t[i * cols + q];
                if alpha != 0.0 {
                    self.x[self.basis[i]] -= alpha * dir * step;
                }
            }
        }
        let Some(r) = leave else {
            self.state[q] = if dir > 0.0 { State::Upper } else { State::Lower };
            self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
            return Ok(());
        };
        let out = self.basis[r];
        let alpha = self.t[r * cols + q] * dir;
        if alpha > 0.0 {
            self.state[out] = State::Lower;
            self.x[out] = self.lo[out];
        } else {
            self.state[out] = State::Upper;
            self.x[out] = self.hi[out];
        }
        self.state[q] = State::Basic;
        self.basis[r] = q;
        self.pivot(r, q);
        self.pivots_since_refactor += 1;
        if self.pivots_since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let cols = self.cols;
        let piv = self.t[r * cols + q];
        let (before, rest) = self.t.split_at_mut(r * cols);
        let (prow, after) = rest.split_at_mut(cols);
        prow.iter_mut().for_each(|v| *v /= piv);
        prow[q] = 1.0;
        let eliminate = |row: &mut [f64]| {
            let f = row[q];
            if f != 0.0 {
                for (v, &p) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * p;
                }
                row[q] = 0.0;
            }
        };
        before.chunks_mut(cols).for_each(eliminate);
        after.chunks_mut(cols).for_each(eliminate);
        let f = self.reduced[q];
        if f != 0.0 {
            for (d, &p) in self.reduced.iter_mut().zip(prow.iter()) {
                *d -= f * p;
            }
        }
        self.reduced[q] = 0.0;
    }

    fn structural_values(&self) -> Vec<f64> {
        (0..self.n)
            .map(|j| {
                let v = self.x[j];
                // Snap onto bounds that are within tolerance.
                let near = |b: f64| b.is_finite() && (v - b).abs() <= self.tol * (1.0 + b.abs());
                if near(self.lo[j]) {
                    self.lo[j]
                } else if near(self.hi[j]) {
                    self.hi[j]
                } else {
                    v
                }
            })
            .collect()
    }
}

/// Gauss-Jordan inverse with partial pivoting. `None` when singular.
fn invert(b: &mut [f64], m: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    for c in 0..m {
        let p = (c..m).max_by(|&i, &k| b[i * m + c].abs().total_cmp(&b[k * m + c].abs()))?;
        if b[p * m + c].abs() < 1e-12 {
            return None;
        }
        if p != c {
            for k in 0..m {
                b.swap(p * m + k, c * m + k);
                inv.swap(p * m + k, c * m + k);
            }
        }
        let d = b[c * m + c];
        for k in 0..m {
            b[c * m + k] /= d;
            inv[c * m + k] /= d;
        }
        for i in 0..m {
            if i == c {
                continue;
            }
            let f = b[i * m + c];
            if f == 0.0 {
                continue;
            }
            for k in 0..m {
                b[i * m + k] -= f * b[c * m + k];
                inv[i * m + k] -= f * inv[c * m + k];
            }
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{LpBackend, Relation};

    #[test]
    fn inverse_of_permutation() {
        let mut b = vec![0.0, 1.0, 1.0, 0.0];
        assert_eq!(invert(&mut b, 2).unwrap(), vec![0.0, 1.0, 1.0, 0.0]);
        let mut s = vec![1.0, 2.0, 2.0, 4.0];
        assert!(invert(&mut s, 2).is_none());
    }

    #[test]
    fn degenerate_vertex_terminates() {
        // Klee-Minty-like degenerate corner: many rows through the origin.
        let mut lp = LinearProgram::new();
        let x: Vec<_> = (0..4)
            .map(|i| lp.add_var(format!("x{i}"), 0.0, f64::INFINITY))
            .collect();
        for (i, &v) in x.iter().enumerate() {
            lp.set_objective(v, 1.0 + i as f64);
        }
        for i in 0..4 {
            for k in 0..4 {
                if i != k {
                    lp.add_constraint("deg", vec![(x[i], 1.0), (x[k], -1.0)], Relation::Le, 0.0);
                }
            }
        }
        lp.add_constraint("cap", x.iter().map(|&v| (v, 1.0)).collect(), Relation::Le, 4.0);
        let opts = LpOptions::with_backend(LpBackend::Dense);
        let r = solve(&lp, &opts).unwrap();
        assert!((r.objective - 10.0).abs() < 1e-9);
    }
}

//! Exact MFF: the disjunctive mixed-integer model and a branch-and-bound
//! solver over its direction binaries, plus an exhaustive oracle.
//!
//! Per line the model carries a direction binary `d`, nonnegative angle
//! parts `dp`/`dn` with `dp - dn = theta_to - theta_from`, and nonnegative
//! flow parts `fp`/`fn` with `f = fp - fn`:
//!
//! ```text
//! dp <= M d          dn <= M (1 - d)
//! s_min dp <= fp <= s_max dp
//! s_min dn <= fn <= s_max dn
//! ```
//!
//! For unbounded lines the two upper rows are replaced by `fp <= cap d`
//! and `fn <= cap (1 - d)`, which keeps the flow on the side chosen by `d`.
//!
//! Fixed lines pinch `fp = s dp` and `fn = s dn`, so `f = s dtheta` holds for
//! any value of their `d`; branching only ever touches FACTS lines.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ldc::{realize, solve_mvf_with, solve_mvf_withdrawal, FlowModel, FlowSolution, SignPattern};
use crate::lp::{solve_lp_with, LinearProgram, LpOptions, LpStatus, Relation, VarId};
use crate::maxflow::max_flow;
use crate::network::{LdcSolution, MaxSusceptance, Network, Topology};
use crate::validate::{validate_solution, DEFAULT_TOL};

/// Lines accepted by [`enumerate_signs_oracle`] unless told otherwise.
pub const DEFAULT_ORACLE_LIMIT: usize = 16;

const INTEGRALITY_TOL: f64 = 1e-6;

/// The MIP relaxation with handles to its variables.
pub struct MffMip {
    pub(crate) model: FlowModel,
    pub d: Vec<VarId>,
    pub delta_pos: Vec<VarId>,
    pub delta_neg: Vec<VarId>,
    pub flow_pos: Vec<VarId>,
    pub flow_neg: Vec<VarId>,
    pub big_m: f64,
}

impl MffMip {
    /// The LP relaxation: every `d` ranges over `[0, 1]`.
    pub fn relaxation(&self) -> &LinearProgram {
        &self.model.lp
    }

    pub fn binaries(&self) -> &[VarId] {
        &self.d
    }

    pub fn theta(&self) -> &[VarId] {
        &self.model.theta
    }

    pub fn flow(&self) -> &[VarId] {
        &self.model.flow
    }
}

pub fn build_mff_mip(net: &Network, big_m: f64) -> Result<MffMip> {
    if !(big_m > 0.0 && big_m.is_finite()) {
        return Err(Error::Input(format!("big-M must be positive and finite, got {big_m}")));
    }
    let topo = net.topology()?;
    Ok(build_with_topology(net, &topo, big_m))
}

fn build_with_topology(net: &Network, topo: &Topology, big_m: f64) -> MffMip {
    let mut model = FlowModel::new(net, topo);
    let lines = net.lines.len();
    let (mut d, mut dp, mut dn, mut fp, mut fneg) = (
        Vec::with_capacity(lines),
        Vec::with_capacity(lines),
        Vec::with_capacity(lines),
        Vec::with_capacity(lines),
        Vec::with_capacity(lines),
    );
    let inf = f64::INFINITY;
    for (i, line) in net.lines.iter().enumerate() {
        let lp = &mut model.lp;
        let di = lp.add_var(format!("d_{i}"), 0.0, 1.0);
        let dpi = lp.add_var(format!("dp_{i}"), 0.0, inf);
        let dni = lp.add_var(format!("dn_{i}"), 0.0, inf);
        let fpi = lp.add_var(format!("fp_{i}"), 0.0, inf);
        let fni = lp.add_var(format!("fn_{i}"), 0.0, inf);
        lp.add_constraint(format!("pos_{i}"), vec![(dpi, 1.0), (di, -big_m)], Relation::Le, 0.0);
        lp.add_constraint(format!("neg_{i}"), vec![(dni, 1.0), (di, big_m)], Relation::Le, big_m);
        let (a, b) = topo.ends[i];
        let th = &model.theta;
        lp.add_constraint(
            format!("split_{i}"),
            vec![(dpi, 1.0), (dni, -1.0), (th[b], -1.0), (th[a], 1.0)],
            Relation::Eq,
            0.0,
        );
        lp.add_constraint(
            format!("fp_lo_{i}"),
            vec![(fpi, 1.0), (dpi, -line.s_min)],
            Relation::Ge,
            0.0,
        );
        lp.add_constraint(
            format!("fn_lo_{i}"),
            vec![(fni, 1.0), (dni, -line.s_min)],
            Relation::Ge,
            0.0,
        );
        match line.s_max {
            MaxSusceptance::Finite(t) => {
                lp.add_constraint(format!("fp_hi_{i}"), vec![(fpi, 1.0), (dpi, -t)], Relation::Le, 0.0);
                lp.add_constraint(format!("fn_hi_{i}"), vec![(fni, 1.0), (dni, -t)], Relation::Le, 0.0);
            }
            MaxSusceptance::Unbounded => {
                let cap = line.capacity;
                lp.add_constraint(format!("fp_side_{i}"), vec![(fpi, 1.0), (di, -cap)], Relation::Le, 0.0);
                lp.add_constraint(format!("fn_side_{i}"), vec![(fni, 1.0), (di, cap)], Relation::Le, cap);
            }
        }
        lp.add_constraint(
            format!("fsum_{i}"),
            vec![(model.flow[i], 1.0), (fpi, -1.0), (fni, 1.0)],
            Relation::Eq,
            0.0,
        );
        d.push(di);
        dp.push(dpi);
        dn.push(dni);
        fp.push(fpi);
        fneg.push(fni);
    }
    MffMip {
        model,
        d,
        delta_pos: dp,
        delta_neg: dn,
        flow_pos: fp,
        flow_neg: fneg,
        big_m,
    }
}

/// Sum over lines of a per-line angle budget: `cap / s_min` when
/// `s_min > 0`, else `cap / max(s_max * 1e-3, 1e-9)`. At least 1.
pub fn choose_big_m(net: &Network) -> f64 {
    let total: f64 = net
        .lines
        .iter()
        .map(|l| {
            if l.s_min > 0.0 {
                l.capacity / l.s_min
            } else {
                l.capacity / (l.s_max.as_f64() * 1e-3).max(1e-9)
            }
        })
        .sum();
    if total > 0.0 && total.is_finite() {
        total
    } else {
        1.0
    }
}

#[derive(Clone, Debug)]
pub struct MffConfig {
    /// Stop once `(upper - incumbent) / max(1, |incumbent|)` is at most this.
    pub gap_tol: f64,
    pub time_limit: Option<Duration>,
    pub node_limit: Option<usize>,
    pub big_m: Option<f64>,
    /// Round the relaxation's directions and solve the resulting MVF at the
    /// root and every `heuristic_every` nodes.
    pub rounding_heuristic: bool,
    pub heuristic_every: usize,
    /// Decision mode: stop as soon as the incumbent reaches this value or
    /// the bound falls below it, both within `TARGET_TOL`.
    pub target: Option<f64>,
    pub lp: LpOptions,
}

/// Absolute slack used by [`MffConfig::target`].
pub const TARGET_TOL: f64 = 1e-6;

impl Default for MffConfig {
    fn default() -> Self {
        MffConfig {
            gap_tol: 1e-4,
            time_limit: None,
            node_limit: None,
            big_m: None,
            rounding_heuristic: true,
            heuristic_every: 50,
            target: None,
            lp: LpOptions::default(),
        }
    }
}

impl MffConfig {
    /// Tight gap for exact comparisons.
    pub fn exact() -> Self {
        MffConfig {
            gap_tol: 1e-9,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Optimal,
    GapReached,
    TimeLimit,
    NodeLimit,
    /// [`MffConfig::target`] was reached or ruled out.
    TargetDecided,
}

#[derive(Clone, Debug)]
pub struct MffResult {
    pub solution: LdcSolution,
    pub objective: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub wall_time: Duration,
    pub termination: Termination,
    /// Big-M of the final solve.
    pub big_m: f64,
    /// The first solve's answer touched the big-M bound and was redone with
    /// a tenfold M.
    pub big_m_retried: bool,
    pub pattern: SignPattern,
}

struct Node {
    fixes: Vec<(usize, bool)>,
    bound: f64,
    depth: usize,
}

struct Incumbent {
    value: f64,
    solution: LdcSolution,
}

pub fn solve_mff(net: &Network, config: &MffConfig, warm_start: Option<&LdcSolution>) -> Result<MffResult> {
    if config.gap_tol.is_nan() || config.gap_tol < 0.0 {
        return Err(Error::Input(format!("gap tolerance {} is invalid", config.gap_tol)));
    }
    if config.time_limit == Some(Duration::ZERO) {
        return Err(Error::Input("time limit must be positive".into()));
    }
    if config.node_limit == Some(0) {
        return Err(Error::Input("node limit must be positive".into()));
    }
    if config.heuristic_every == 0 {
        return Err(Error::Input("heuristic interval must be positive".into()));
    }
    if let Some(ws) = warm_start {
        let report = validate_solution(net, ws, DEFAULT_TOL);
        if !report.is_empty() {
            return Err(Error::Input(format!("warm start is not a valid solution:\n{report}")));
        }
    }
    let topo = net.topology()?;
    let big_m = match config.big_m {
        Some(m) if !(m > 0.0 && m.is_finite()) => {
            return Err(Error::Input(format!("big-M must be positive and finite, got {m}")));
        }
        Some(m) => m,
        None => choose_big_m(net),
    };
    let start = Instant::now();
    let first = branch_and_bound(net, &topo, config, big_m, warm_start, start)?;
    if !touches_big_m(net, &topo, &first.solution, big_m) {
        return Ok(first);
    }
    log::info!(
        "solution reaches 0.999 of big-M {big_m}; re-solving with {}",
        10.0 * big_m
    );
    let warm = first.solution.clone();
    let mut second = branch_and_bound(net, &topo, config, 10.0 * big_m, Some(&warm), start)?;
    second.big_m_retried = true;
    second.wall_time = start.elapsed();
    Ok(second)
}

fn touches_big_m(net: &Network, topo: &Topology, sol: &LdcSolution, big_m: f64) -> bool {
    (0..net.lines.len())
        .any(|i| sol.injections.flow[i].abs() > 1e-9 && topo.angle_diff(i, &sol.theta).abs() >= 0.999 * big_m)
}

fn branch_and_bound(
    net: &Network,
    topo: &Topology,
    config: &MffConfig,
    big_m: f64,
    warm_start: Option<&LdcSolution>,
    start: Instant,
) -> Result<MffResult> {
    let mip = build_with_topology(net, topo, big_m);
    let facts: Vec<bool> = net.lines.iter().map(|l| l.is_facts()).collect();
    let mf_bound = max_flow(net)?.value;

    let mut best = match warm_start {
        Some(ws) => Incumbent {
            value: ws.objective(),
            solution: ws.clone(),
        },
        None => Incumbent {
            value: 0.0,
            solution: LdcSolution::zero(net),
        },
    };
    let mut stack = vec![Node {
        fixes: Vec::new(),
        bound: mf_bound,
        depth: 0,
    }];
    // Bounds of integral nodes whose relaxation optimum could not be
    // realised exactly; they still limit what the search can claim.
    let mut unresolved: f64 = f64::NEG_INFINITY;
    let mut nodes = 0usize;
    let mut termination = Termination::Optimal;

    while !stack.is_empty() {
        let open_bound = stack.iter().map(|n| n.bound).fold(f64::NEG_INFINITY, f64::max);
        let upper = open_bound.max(unresolved).min(mf_bound).max(best.value);
        if relative_gap(upper, best.value) <= config.gap_tol {
            termination = Termination::GapReached;
            break;
        }
        if config
            .target
            .is_some_and(|t| best.value >= t - TARGET_TOL || upper < t - TARGET_TOL)
        {
            termination = Termination::TargetDecided;
            break;
        }
        if config.time_limit.is_some_and(|t| start.elapsed() >= t) {
            termination = Termination::TimeLimit;
            break;
        }
        if config.node_limit.is_some_and(|n| nodes >= n) {
            termination = Termination::NodeLimit;
            break;
        }
        if nodes > 0 && nodes % 100 == 0 {
            // Best bound ends up on top of the stack.
            stack.sort_by(|a, b| a.bound.total_cmp(&b.bound));
        }
        let node = stack.pop().expect("stack is non-empty");
        if node.bound <= best.value + prune_tol(best.value) {
            continue;
        }
        nodes += 1;

        let mut lp = mip.model.lp.clone();
        for &(line, up) in &node.fixes {
            let v = if up { 1.0 } else { 0.0 };
            lp.set_bounds(mip.d[line], v, v);
        }
        let result = solve_lp_with(&lp, &config.lp)?;
        match result.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                return Err(Error::Numerical("MIP relaxation reported unbounded".into()));
            }
        }
        let bound = result.objective.min(node.bound);
        log::trace!(
            "node {nodes} depth {} bound {bound:.9} incumbent {:.9}",
            node.depth,
            best.value
        );
        if bound <= best.value + prune_tol(best.value) {
            continue;
        }

        let d: Vec<f64> = mip.d.iter().map(|&v| result.value(v)).collect();
        let (theta, inj) = mip.model.extract(&result);
        let pattern = SignPattern(
            (0..net.lines.len())
                .map(|i| {
                    if facts[i] {
                        d[i] >= 0.5
                    } else {
                        topo.angle_diff(i, &theta) >= -1e-9
                    }
                })
                .collect(),
        );

        if config.rounding_heuristic && (nodes == 1 || nodes % config.heuristic_every == 0) {
            let cand = solve_mvf_with(net, &pattern, &config.lp)?;
            offer(net, &mut best, cand.value, cand.solution);
        }

        let branch = (0..net.lines.len())
            .filter(|&i| facts[i])
            .filter(|&i| d[i] > INTEGRALITY_TOL && d[i] < 1.0 - INTEGRALITY_TOL)
            .min_by(|&a, &b| {
                let fa = (d[a] - 0.5).abs();
                let fb = (d[b] - 0.5).abs();
                fa.total_cmp(&fb)
                    .then(net.lines[b].capacity.total_cmp(&net.lines[a].capacity))
                    .then(a.cmp(&b))
            });
        match branch {
            None => {
                let exact = realize(net, topo, &theta, &inj, &config.lp)
                    .ok()
                    .filter(|s| validate_solution(net, s, DEFAULT_TOL).is_empty());
                match exact {
                    Some(sol) => {
                        let value = sol.objective();
                        offer(net, &mut best, value, sol);
                    }
                    None => {
                        let cand = solve_mvf_with(net, &pattern, &config.lp)?;
                        if cand.value < bound - prune_tol(bound) {
                            unresolved = unresolved.max(bound);
                        }
                        offer(net, &mut best, cand.value, cand.solution);
                    }
                }
            }
            Some(line) => {
                let prefer_up = d[line] >= 0.5;
                for up in [!prefer_up, prefer_up] {
                    let mut fixes = node.fixes.clone();
                    fixes.push((line, up));
                    stack.push(Node {
                        fixes,
                        bound,
                        depth: node.depth + 1,
                    });
                }
            }
        }
    }

    let open_bound = stack.iter().map(|n| n.bound).fold(f64::NEG_INFINITY, f64::max);
    let best_bound = open_bound.max(unresolved).min(mf_bound).max(best.value);
    let topo_pattern = SignPattern(
        (0..net.lines.len())
            .map(|i| topo.angle_diff(i, &best.solution.theta) >= -1e-9)
            .collect(),
    );
    Ok(MffResult {
        objective: best.value,
        gap: relative_gap(best_bound, best.value),
        best_bound,
        solution: best.solution,
        nodes,
        wall_time: start.elapsed(),
        termination,
        big_m,
        big_m_retried: false,
        pattern: topo_pattern,
    })
}

fn relative_gap(upper: f64, incumbent: f64) -> f64 {
    ((upper - incumbent) / incumbent.abs().max(1.0)).max(0.0)
}

fn prune_tol(value: f64) -> f64 {
    1e-9 * value.abs().max(1.0)
}

fn offer(net: &Network, best: &mut Incumbent, value: f64, solution: LdcSolution) {
    if value > best.value + prune_tol(best.value) && validate_solution(net, &solution, DEFAULT_TOL).is_empty() {
        best.value = value;
        best.solution = solution;
    }
}

/// Result of the exhaustive oracle.
#[derive(Clone, Debug)]
pub struct OracleResult {
    pub value: f64,
    pub pattern: SignPattern,
    pub solution: LdcSolution,
    pub patterns_checked: usize,
}

/// MFF by brute force: the best MVF over all `2^L` sign patterns.
pub fn enumerate_signs_oracle(net: &Network, max_lines: usize) -> Result<OracleResult> {
    enumerate_signs_oracle_withdrawal(net, max_lines, &[])?
        .ok_or_else(|| Error::Numerical("no sign pattern admits a feasible flow".into()))
}

/// [`enumerate_signs_oracle`] with fixed external withdrawals, see
/// [`solve_mvf_withdrawal`]. `None` when no pattern is feasible.
pub fn enumerate_signs_oracle_withdrawal(
    net: &Network,
    max_lines: usize,
    withdrawals: &[(usize, f64)],
) -> Result<Option<OracleResult>> {
    let lines = net.lines.len();
    if lines > max_lines || lines >= usize::BITS as usize - 1 {
        return Err(Error::TooLarge {
            lines,
            limit: max_lines,
        });
    }
    net.topology()?;
    let opts = LpOptions::default();
    let total = 1usize << lines;
    let results: Vec<Option<FlowSolution>> = (0..total)
        .into_par_iter()
        .map(|mask| {
            let pattern = SignPattern((0..lines).map(|i| mask >> i & 1 == 1).collect());
            solve_mvf_withdrawal(net, &pattern, withdrawals, &opts)
        })
        .collect::<Result<_>>()?;
    let mut best: Option<(usize, FlowSolution)> = None;
    for (mask, r) in results.into_iter().enumerate() {
        let Some(r) = r else { continue };
        let better = match &best {
            None => true,
            Some((_, b)) => r.value > b.value + prune_tol(b.value),
        };
        if better {
            best = Some((mask, r));
        }
    }
    Ok(best.map(|(mask, r)| OracleResult {
        value: r.value,
        pattern: SignPattern((0..lines).map(|i| mask >> i & 1 == 1).collect()),
        solution: r.solution,
        patterns_checked: total,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::ldc::solve_mpf;

    #[test]
    fn big_m_examples() {
        let one = |l: crate::network::Line| {
            choose_big_m(&Network::new(
                vec![crate::network::Bus::generator("a"), crate::network::Bus::load("b")],
                vec![l],
            ))
        };
        assert_eq!(one(crate::network::Line::facts("a", "b", 1.0, 2.0, 4.0)), 4.0);
        assert!((one(crate::network::Line::facts("a", "b", 0.0, 2.0, 4.0)) - 2000.0).abs() < 1e-9);
        assert_eq!(choose_big_m(&fixtures::tri()), 24.0);
    }

    #[test]
    fn single_fixed_line_relaxation() {
        let net = fixtures::single_line(7.0);
        let mip = build_mff_mip(&net, choose_big_m(&net)).unwrap();
        let r = solve_lp_with(mip.relaxation(), &LpOptions::default()).unwrap();
        assert!((r.objective - 7.0).abs() < 1e-9);
        assert_eq!(mip.binaries().len(), 1);
    }

    #[test]
    fn tri_f_is_fourteen() {
        let r = solve_mff(&fixtures::tri_f(), &MffConfig::exact(), None).unwrap();
        assert!((r.objective - 14.0).abs() < 1e-7, "{}", r.objective);
        assert!(r.gap <= 1e-6);
        assert!(validate_solution(&fixtures::tri_f(), &r.solution, DEFAULT_TOL).is_empty());
        assert!((r.solution.susceptance[0] - 1.25).abs() < 1e-6);
    }

    #[test]
    fn tri_fixed_equals_mpf() {
        let r = solve_mff(&fixtures::tri(), &MffConfig::exact(), None).unwrap();
        let mpf = solve_mpf(&fixtures::tri(), &[1.0; 3]).unwrap();
        assert!((r.objective - 12.0).abs() < 1e-7);
        assert!((r.objective - mpf.value).abs() < 1e-7);
    }

    #[test]
    fn oracle_on_fixtures() {
        let o = enumerate_signs_oracle(&fixtures::tri_f(), DEFAULT_ORACLE_LIMIT).unwrap();
        assert!((o.value - 14.0).abs() < 1e-7);
        assert_eq!(o.patterns_checked, 8);
        let o = enumerate_signs_oracle(&fixtures::tri(), DEFAULT_ORACLE_LIMIT).unwrap();
        assert!((o.value - 12.0).abs() < 1e-7);
        let o = enumerate_signs_oracle(&fixtures::single_line(3.0), DEFAULT_ORACLE_LIMIT).unwrap();
        assert_eq!(o.patterns_checked, 2);
        assert!((o.value - 3.0).abs() < 1e-9);
    }

    #[test]
    fn oracle_refuses_large_networks() {
        assert!(matches!(
            enumerate_signs_oracle(&fixtures::tri(), 2),
            Err(Error::TooLarge { lines: 3, limit: 2 })
        ));
    }

    #[test]
    fn config_validation() {
        let net = fixtures::tri();
        let bad = MffConfig {
            node_limit: Some(0),
            ..MffConfig::default()
        };
        assert!(matches!(solve_mff(&net, &bad, None), Err(Error::Input(_))));
        let mut ws = solve_mpf(&net, &[1.0; 3]).unwrap().solution;
        ws.injections.flow[0] += 1.0;
        assert!(matches!(
            solve_mff(&net, &MffConfig::default(), Some(&ws)),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn warm_start_is_kept() {
        let net = fixtures::tri_f();
        let ws = solve_mpf(&net, &[1.0; 3]).unwrap().solution;
        let cfg = MffConfig {
            node_limit: Some(1),
            rounding_heuristic: false,
            ..MffConfig::default()
        };
        let r = solve_mff(&net, &cfg, Some(&ws)).unwrap();
        assert!(r.objective >= 12.0 - 1e-9);
        assert!(r.objective <= r.best_bound + 1e-9);
    }
}

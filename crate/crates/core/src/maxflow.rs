//! Classic maximum flow (no power law), flow-cycle cancellation, and lifts
//! of plain flows to LDC operating points.
//!
//! For trees, for networks where every interval starts at zero, and for
//! networks where every interval is unbounded above, the FACTS flow equals
//! the plain max flow: an acyclic max flow can always be given angles and
//! susceptances that realise it. [`mff_via_lemma`] computes that flow and
//! builds the certificate.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ldc::{expect_optimal, FlowModel, FlowSolution};
use crate::lp::{solve_lp_with, LinearProgram, LpOptions, Relation, VarId};
use crate::network::{BusKind, InjectionSolution, LdcSolution, MaxSusceptance, Network, Topology};

/// Flows at or below this magnitude count as zero for orientation purposes.
pub const ZERO_FLOW: f64 = 1e-12;

/// Lifts whose angle margin falls below this are treated as infeasible.
const MIN_MARGIN: f64 = 1e-7;

#[derive(Clone, Debug)]
pub struct MfSolution {
    pub value: f64,
    pub injections: InjectionSolution,
}

struct Arc {
    to: usize,
    cap: f64,
}

/// Dinic's algorithm on `f64` capacities.
struct Dinic {
    adj: Vec<Vec<usize>>,
    arcs: Vec<Arc>,
    level: Vec<i64>,
    next: Vec<usize>,
    eps: f64,
}

impl Dinic {
    fn new(n: usize, eps: f64) -> Self {
        Dinic {
            adj: vec![Vec::new(); n],
            arcs: Vec::new(),
            level: vec![0; n],
            next: vec![0; n],
            eps,
        }
    }

    /// Adds `u -> v` with capacity `cap` and its residual twin `v -> u`
    /// with capacity `back`. Returns the index of the forward arc.
    fn add(&mut self, u: usize, v: usize, cap: f64, back: f64) -> usize {
        let id = self.arcs.len();
        self.arcs.push(Arc { to: v, cap });
        self.arcs.push(Arc { to: u, cap: back });
        self.adj[u].push(id);
        self.adj[v].push(id + 1);
        id
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &id in &self.adj[u] {
                let arc = &self.arcs[id];
                if arc.cap > self.eps && self.level[arc.to] < 0 {
                    self.level[arc.to] = self.level[u] + 1;
                    queue.push_back(arc.to);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, u: usize, t: usize, pushed: f64) -> f64 {
        if u == t {
            return pushed;
        }
        while self.next[u] < self.adj[u].len() {
            let id = self.adj[u][self.next[u]];
            let (to, cap) = (self.arcs[id].to, self.arcs[id].cap);
            if cap > self.eps && self.level[to] == self.level[u] + 1 {
                let got = self.dfs(to, t, pushed.min(cap));
                if got > 0.0 {
                    self.arcs[id].cap -= got;
                    self.arcs[id ^ 1].cap += got;
                    return got;
                }
            }
            self.next[u] += 1;
        }
        0.0
    }

    fn run(&mut self, s: usize, t: usize) -> f64 {
        let mut total = 0.0;
        while self.bfs(s, t) {
            self.next.iter_mut().for_each(|n| *n = 0);
            loop {
                let got = self.dfs(s, t, f64::INFINITY);
                if got <= 0.0 {
                    break;
                }
                total += got;
            }
        }
        total
    }
}

/// Maximum total generation under Kirchhoff balance and line capacities
/// only. The returned flow is acyclic.
pub fn max_flow(net: &Network) -> Result<MfSolution> {
    let topo = net.topology()?;
    let n = topo.n_buses();
    let (source, sink) = (n, n + 1);
    let total_cap: f64 = net.lines.iter().map(|l| l.capacity.max(0.0)).sum();
    let big = 2.0 * total_cap + 1.0;
    let mut dinic = Dinic::new(n + 2, 1e-12 * (1.0 + total_cap));
    let line_arcs: Vec<usize> = topo
        .ends
        .iter()
        .zip(&net.lines)
        .map(|(&(a, b), l)| dinic.add(a, b, l.capacity, l.capacity))
        .collect();
    let mut gen_arcs = Vec::new();
    let mut load_arcs = Vec::new();
    for (k, kind) in topo.kinds.iter().enumerate() {
        match kind {
            BusKind::Generator => gen_arcs.push((k, dinic.add(source, k, big, 0.0))),
            BusKind::Load => load_arcs.push((k, dinic.add(k, sink, big, 0.0))),
            BusKind::Junction => {}
        }
    }
    dinic.run(source, sink);
    let mut inj = InjectionSolution::zeros(net);
    for (i, &id) in line_arcs.iter().enumerate() {
        // Residual of the forward arc started at capacity; the flow a->b is
        // the amount removed from it, the reverse arc absorbs the rest.
        inj.flow[i] = 0.5 * (dinic.arcs[id + 1].cap - dinic.arcs[id].cap);
    }
    for (k, id) in gen_arcs {
        inj.gen[k] = dinic.arcs[id + 1].cap;
    }
    for (k, id) in load_arcs {
        inj.load[k] = dinic.arcs[id + 1].cap;
    }
    let inj = cancel_cycles_in(&topo, inj);
    Ok(MfSolution {
        value: inj.total_generation(),
        injections: inj,
    })
}

/// Max flow as an LP. Same optimum as [`max_flow`] by a different route.
pub fn max_flow_lp(net: &Network) -> Result<MfSolution> {
    let topo = net.topology()?;
    let model = FlowModel::new(net, &topo);
    let result = expect_optimal(solve_lp_with(&model.lp, &LpOptions::default())?, "MF")?;
    let (_, inj) = model.extract(&result);
    Ok(MfSolution {
        value: inj.total_generation(),
        injections: inj,
    })
}

/// Removes directed flow cycles. Bus imbalances are unchanged and no flow
/// magnitude grows.
pub fn cancel_cycles(net: &Network, inj: &InjectionSolution) -> Result<InjectionSolution> {
    if inj.flow.len() != net.lines.len() {
        return Err(Error::Input("flow length does not match the line count".into()));
    }
    let topo = net.topology()?;
    Ok(cancel_cycles_in(&topo, inj.clone()))
}

fn cancel_cycles_in(topo: &Topology, mut inj: InjectionSolution) -> InjectionSolution {
    while let Some(cycle) = find_flow_cycle(topo, &inj.flow) {
        let amount = cycle.iter().map(|&i| inj.flow[i].abs()).fold(f64::INFINITY, f64::min);
        for &i in &cycle {
            let f = inj.flow[i];
            inj.flow[i] = if f.abs() <= amount {
                0.0
            } else {
                f - amount * f.signum()
            };
        }
    }
    inj
}

/// Head and tail of a line in the direction its flow travels.
fn oriented(topo: &Topology, line: usize, f: f64) -> (usize, usize) {
    let (a, b) = topo.ends[line];
    if f > 0.0 {
        (a, b)
    } else {
        (b, a)
    }
}

/// A directed cycle of the flow graph as a list of lines, if any.
pub(crate) fn find_flow_cycle(topo: &Topology, flow: &[f64]) -> Option<Vec<usize>> {
    let n = topo.n_buses();
    let mut out: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (i, &f) in flow.iter().enumerate() {
        if f.abs() > ZERO_FLOW {
            let (u, v) = oriented(topo, i, f);
            out[u].push((v, i));
        }
    }
    // Iterative DFS with colours; `via[v]` is the line used to enter v.
    let mut colour = vec![0u8; n];
    let mut via = vec![usize::MAX; n];
    for root in 0..n {
        if colour[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        colour[root] = 1;
        while let Some(&mut (u, ref mut k)) = stack.last_mut() {
            if *k < out[u].len() {
                let (v, line) = out[u][*k];
                *k += 1;
                match colour[v] {
                    0 => {
                        colour[v] = 1;
                        via[v] = line;
                        stack.push((v, 0));
                    }
                    1 => {
                        let mut cycle = vec![line];
                        let mut w = u;
                        while w != v {
                            let l = via[w];
                            cycle.push(l);
                            let (tail, _) = oriented(topo, l, flow[l]);
                            w = tail;
                        }
                        return Some(cycle);
                    }
                    _ => {}
                }
            } else {
                colour[u] = 2;
                stack.pop();
            }
        }
    }
    None
}

/// Result of trying to give a plain flow angles and susceptances.
#[derive(Clone, Debug)]
pub enum Lift {
    Realized(LdcSolution),
    /// No angles satisfy the susceptance intervals for this flow.
    Infeasible,
}

impl Lift {
    pub fn realized(self) -> Option<LdcSolution> {
        match self {
            Lift::Realized(sol) => Some(sol),
            Lift::Infeasible => None,
        }
    }
}

/// Finds angles and susceptances under which `inj` obeys the power law.
///
/// With the flow fixed, each line's susceptance interval becomes an
/// interval for its angle difference: `|f|/s_max <= sign(f) dtheta <=
/// |f|/s_min`. Lines without flow need equal angles when `s_min > 0` and
/// are unconstrained (susceptance 0) otherwise. Unbounded lines carrying
/// flow need a strictly positive angle difference, enforced through a
/// maximised margin.
pub fn lift_flow_to_ldc(net: &Network, inj: &InjectionSolution) -> Result<Lift> {
    if inj.flow.len() != net.lines.len() || inj.gen.len() != net.buses.len() {
        return Err(Error::Input("injection lengths do not match the network".into()));
    }
    let topo = net.topology()?;
    lift_with_topology(net, &topo, inj, &LpOptions::default())
}

pub(crate) fn lift_with_topology(
    net: &Network,
    topo: &Topology,
    inj: &InjectionSolution,
    opts: &LpOptions,
) -> Result<Lift> {
    let mut lp = LinearProgram::new();
    let theta: Vec<VarId> = (0..topo.n_buses())
        .map(|k| {
            if topo.is_reference(k) {
                lp.add_var(format!("theta_{k}"), 0.0, 0.0)
            } else {
                lp.add_var(format!("theta_{k}"), f64::NEG_INFINITY, f64::INFINITY)
            }
        })
        .collect();
    let margin = lp.add_var("margin", 0.0, 1.0);
    lp.set_objective(margin, 1.0);
    let mut needs_margin = false;
    for (i, line) in net.lines.iter().enumerate() {
        let (a, b) = topo.ends[i];
        let f = inj.flow[i];
        if f.abs() <= ZERO_FLOW {
            if line.s_min > 0.0 {
                lp.add_constraint(
                    format!("tie_{i}"),
                    vec![(theta[b], 1.0), (theta[a], -1.0)],
                    Relation::Eq,
                    0.0,
                );
            }
            continue;
        }
        let sign = f.signum();
        let mag = f.abs();
        let diff = vec![(theta[b], sign), (theta[a], -sign)];
        match line.s_max {
            MaxSusceptance::Finite(t) => {
                lp.add_constraint(format!("lo_{i}"), diff.clone(), Relation::Ge, mag / t);
            }
            MaxSusceptance::Unbounded => {
                needs_margin = true;
                let mut terms = diff.clone();
                terms.push((margin, -mag));
                lp.add_constraint(format!("lo_{i}"), terms, Relation::Ge, 0.0);
            }
        }
        if line.s_min > 0.0 {
            lp.add_constraint(format!("hi_{i}"), diff, Relation::Le, mag / line.s_min);
        }
    }
    if !needs_margin {
        lp.set_bounds(margin, 0.0, 0.0);
    }
    let result = solve_lp_with(&lp, opts)?;
    if !result.is_optimal() {
        return Ok(Lift::Infeasible);
    }
    if needs_margin && result.value(margin) < MIN_MARGIN {
        return Ok(Lift::Infeasible);
    }
    let th: Vec<f64> = theta.iter().map(|&v| result.value(v)).collect();
    let susceptance = net
        .lines
        .iter()
        .enumerate()
        .map(|(i, line)| {
            let f = inj.flow[i];
            if f.abs() <= ZERO_FLOW {
                if line.s_min > 0.0 {
                    line.midpoint()
                } else {
                    0.0
                }
            } else {
                line.clamp(f / topo.angle_diff(i, &th))
            }
        })
        .collect();
    Ok(Lift::Realized(LdcSolution {
        susceptance,
        theta: th,
        injections: inj.clone(),
    }))
}

/// The explicit scaling construction for networks whose intervals all
/// start at zero: angles from a topological order of the (acyclic) flow,
/// susceptances `s' = f / dtheta'`, then both scaled by the largest factor
/// that keeps every `s'` under its upper limit.
///
/// Returns `None` when some `s_min > 0` or the flow has a cycle.
pub fn scaling_lift(net: &Network, inj: &InjectionSolution) -> Result<Option<ScalingCertificate>> {
    if net.lines.iter().any(|l| l.s_min > 0.0) {
        return Ok(None);
    }
    let topo = net.topology()?;
    let Some(rank) = topological_rank(&topo, &inj.flow) else {
        return Ok(None);
    };
    let theta_prime: Vec<f64> = rank.iter().map(|&r| r as f64).collect();
    let s_prime: Vec<f64> = (0..topo.n_lines())
        .map(|i| {
            let f = inj.flow[i];
            if f.abs() <= ZERO_FLOW {
                0.0
            } else {
                f / topo.angle_diff(i, &theta_prime)
            }
        })
        .collect();
    let x = net
        .lines
        .iter()
        .zip(&s_prime)
        .filter(|(_, &sp)| sp > 0.0)
        .filter_map(|(l, &sp)| l.s_max.finite().map(|t| t / sp))
        .fold(f64::INFINITY, f64::min);
    let x = if x.is_finite() { x } else { 1.0 };
    let solution = LdcSolution {
        susceptance: s_prime.iter().map(|sp| x * sp).collect(),
        theta: theta_prime.iter().map(|t| t / x).collect(),
        injections: inj.clone(),
    };
    Ok(Some(ScalingCertificate {
        theta_prime,
        s_prime,
        x,
        solution,
    }))
}

/// Intermediate values of [`scaling_lift`], kept for inspection.
#[derive(Clone, Debug)]
pub struct ScalingCertificate {
    pub theta_prime: Vec<f64>,
    pub s_prime: Vec<f64>,
    pub x: f64,
    pub solution: LdcSolution,
}

/// Position of every bus in a topological order of the flow graph, or
/// `None` if the flow has a directed cycle.
pub(crate) fn topological_rank(topo: &Topology, flow: &[f64]) -> Option<Vec<usize>> {
    let n = topo.n_buses();
    let mut indeg = vec![0usize; n];
    let mut out = vec![Vec::new(); n];
    for (i, &f) in flow.iter().enumerate() {
        if f.abs() > ZERO_FLOW {
            let (u, v) = oriented(topo, i, f);
            out[u].push(v);
            indeg[v] += 1;
        }
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut rank = vec![0; n];
    let mut next = 0;
    while let Some(u) = queue.pop_front() {
        rank[u] = next;
        next += 1;
        for &v in &out[u] {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                queue.push_back(v);
            }
        }
    }
    (next == n).then_some(rank)
}

/// Whether the flow graph (zero flows dropped) is acyclic.
pub fn is_acyclic(net: &Network, flow: &[f64]) -> Result<bool> {
    let topo = net.topology()?;
    Ok(topological_rank(&topo, flow).is_some())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lemma {
    Tree,
    ZeroLowerBounds,
    UnboundedUpperBounds,
}

/// Outcome of [`mff_via_lemma`].
#[derive(Clone, Debug)]
pub enum LemmaOutcome {
    /// MFF equals MF, certified by `solution`.
    Certified {
        lemma: Lemma,
        value: f64,
        solution: LdcSolution,
        /// Max flows tried before one lifted, starting at 1.
        attempts: usize,
    },
    NotApplicable,
    /// The structural condition holds but none of the tried max flows could
    /// be lifted. Carries the last flow for diagnosis.
    LiftFailed {
        lemma: Lemma,
        mf_value: f64,
        flow: InjectionSolution,
        attempts: usize,
    },
}

impl LemmaOutcome {
    pub fn certified(&self) -> Option<FlowSolution> {
        match self {
            LemmaOutcome::Certified { value, solution, .. } => Some(FlowSolution {
                value: *value,
                solution: solution.clone(),
            }),
            _ => None,
        }
    }
}

/// Alternative optimal flows tried when lifting fails.
pub const LIFT_RETRIES: usize = 5;

/// Which structural shortcut, if any, applies to `net`.
pub fn applicable_lemma(net: &Network) -> Result<Option<Lemma>> {
    Ok(if net.is_forest()? {
        Some(Lemma::Tree)
    } else if net.lines.iter().all(|l| l.s_min == 0.0) {
        Some(Lemma::ZeroLowerBounds)
    } else if net.lines.iter().all(|l| l.s_max.is_unbounded()) {
        Some(Lemma::UnboundedUpperBounds)
    } else {
        None
    })
}

/// MFF for the three structural special cases, with a lifted certificate.
pub fn mff_via_lemma(net: &Network) -> Result<LemmaOutcome> {
    mff_via_lemma_seeded(net, 0)
}

pub fn mff_via_lemma_seeded(net: &Network, seed: u64) -> Result<LemmaOutcome> {
    let Some(lemma) = applicable_lemma(net)? else {
        return Ok(LemmaOutcome::NotApplicable);
    };
    let topo = net.topology()?;
    let mf = max_flow(net)?;
    let mut flow = mf.injections;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = LpOptions::default();
    for attempt in 1..=LIFT_RETRIES + 1 {
        if attempt > 1 {
            flow = alternative_max_flow(net, &topo, mf.value, &mut rng)?;
        }
        if let Lift::Realized(solution) = lift_with_topology(net, &topo, &flow, &opts)? {
            return Ok(LemmaOutcome::Certified {
                lemma,
                value: mf.value,
                solution,
                attempts: attempt,
            });
        }
    }
    Ok(LemmaOutcome::LiftFailed {
        lemma,
        mf_value: mf.value,
        flow,
        attempts: LIFT_RETRIES + 1,
    })
}

/// Another maximum flow: total generation held at `mf_value`, total
/// weighted flow minimised under random positive weights.
fn alternative_max_flow(
    net: &Network,
    topo: &Topology,
    mf_value: f64,
    rng: &mut ChaCha8Rng,
) -> Result<InjectionSolution> {
    let mut model = FlowModel::new(net, topo);
    let gen_terms: Vec<(VarId, f64)> = model.gen.iter().flatten().map(|&g| (g, 1.0)).collect();
    for &(g, _) in &gen_terms {
        model.lp.set_objective(g, 0.0);
    }
    model
        .lp
        .add_constraint("keep_max", gen_terms, Relation::Ge, mf_value - 1e-9 * (1.0 + mf_value));
    for (i, line) in net.lines.iter().enumerate() {
        // |f| <= u with u carrying the weight.
        let u = model.lp.add_var(format!("abs_{i}"), 0.0, line.capacity);
        model.lp.set_objective(u, -rng.gen_range(0.5..1.5));
        let f = model.flow[i];
        model
            .lp
            .add_constraint(format!("abs_hi_{i}"), vec![(u, 1.0), (f, -1.0)], Relation::Ge, 0.0);
        model
            .lp
            .add_constraint(format!("abs_lo_{i}"), vec![(u, 1.0), (f, 1.0)], Relation::Ge, 0.0);
    }
    let result = expect_optimal(solve_lp_with(&model.lp, &LpOptions::default())?, "alternative MF")?;
    let (_, inj) = model.extract(&result);
    Ok(cancel_cycles_in(topo, inj))
}

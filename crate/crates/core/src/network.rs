//! Network and solution types.
//!
//! A [`Network`] is a set of buses (generators, loads, junctions) joined by
//! undirected lines. Each line carries a susceptance interval `[s_min, s_max]`
//! and a thermal capacity. Lines whose interval is a single point are ordinary
//! transmission lines; lines with a proper interval model a FACTS device.
//!
//! Solutions are stored as vectors aligned with `Network::buses` and
//! `Network::lines`, so `flow[i]` belongs to `lines[i]` and `theta[k]` to
//! `buses[k]`. A positive `flow[i]` moves power from `lines[i].from` to
//! `lines[i].to`.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Generator,
    Load,
    Junction,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: String,
    pub kind: BusKind,
}

impl Bus {
    pub fn new(id: impl Into<String>, kind: BusKind) -> Self {
        Bus { id: id.into(), kind }
    }

    pub fn generator(id: impl Into<String>) -> Self {
        Bus::new(id, BusKind::Generator)
    }

    pub fn load(id: impl Into<String>) -> Self {
        Bus::new(id, BusKind::Load)
    }

    pub fn junction(id: impl Into<String>) -> Self {
        Bus::new(id, BusKind::Junction)
    }
}

/// Upper end of a susceptance interval.
///
/// `Unbounded` is kept distinct from any float so that every consumer has to
/// decide explicitly what an unbounded device means for it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MaxSusceptance {
    Finite(f64),
    Unbounded,
}

impl MaxSusceptance {
    pub fn finite(self) -> Option<f64> {
        match self {
            MaxSusceptance::Finite(v) => Some(v),
            MaxSusceptance::Unbounded => None,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, MaxSusceptance::Unbounded)
    }

    /// `f64::INFINITY` for the unbounded case. Only for display and comparisons.
    pub fn as_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for MaxSusceptance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaxSusceptance::Finite(v) => write!(f, "{v}"),
            MaxSusceptance::Unbounded => f.write_str("inf"),
        }
    }
}

/// Why a line exists. Boundary lines encode generation and load limits of a
/// bus from the source data; scenario operations treat them specially.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineRole {
    #[default]
    Branch,
    GenBoundary,
    LoadBoundary,
}

impl LineRole {
    pub fn is_boundary(self) -> bool {
        !matches!(self, LineRole::Branch)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    pub from: String,
    pub to: String,
    pub s_min: f64,
    pub s_max: MaxSusceptance,
    pub capacity: f64,
    pub role: LineRole,
}

impl Line {
    /// A line with a fixed susceptance.
    pub fn fixed(from: impl Into<String>, to: impl Into<String>, s: f64, capacity: f64) -> Self {
        Line {
            from: from.into(),
            to: to.into(),
            s_min: s,
            s_max: MaxSusceptance::Finite(s),
            capacity,
            role: LineRole::Branch,
        }
    }

    /// A FACTS line with susceptance in `[s_min, s_max]`.
    pub fn facts(from: impl Into<String>, to: impl Into<String>, s_min: f64, s_max: f64, capacity: f64) -> Self {
        Line {
            from: from.into(),
            to: to.into(),
            s_min,
            s_max: MaxSusceptance::Finite(s_max),
            capacity,
            role: LineRole::Branch,
        }
    }

    /// A FACTS line whose susceptance may grow without limit.
    pub fn unbounded(from: impl Into<String>, to: impl Into<String>, s_min: f64, capacity: f64) -> Self {
        Line {
            from: from.into(),
            to: to.into(),
            s_min,
            s_max: MaxSusceptance::Unbounded,
            capacity,
            role: LineRole::Branch,
        }
    }

    pub fn with_role(mut self, role: LineRole) -> Self {
        self.role = role;
        self
    }

    pub fn is_facts(&self) -> bool {
        match self.s_max {
            MaxSusceptance::Finite(t) => self.s_min < t,
            MaxSusceptance::Unbounded => true,
        }
    }

    pub fn is_fixed(&self) -> bool {
        !self.is_facts()
    }

    /// Whether `s` lies in the susceptance interval, with slack `tol`.
    pub fn admits(&self, s: f64, tol: f64) -> bool {
        s >= self.s_min - tol
            && match self.s_max {
                MaxSusceptance::Finite(t) => s <= t + tol,
                MaxSusceptance::Unbounded => s.is_finite(),
            }
    }

    /// Clamp `s` into the susceptance interval.
    pub fn clamp(&self, s: f64) -> f64 {
        let s = s.max(self.s_min);
        match self.s_max {
            MaxSusceptance::Finite(t) => s.min(t),
            MaxSusceptance::Unbounded => s,
        }
    }

    /// A finite interior reference point: the midpoint for bounded intervals,
    /// `s_min + 1` for unbounded ones.
    pub fn midpoint(&self) -> f64 {
        match self.s_max {
            MaxSusceptance::Finite(t) => 0.5 * (self.s_min + t),
            MaxSusceptance::Unbounded => self.s_min + 1.0,
        }
    }

    fn unordered_pair(&self) -> (&str, &str) {
        if self.from <= self.to {
            (&self.from, &self.to)
        } else {
            (&self.to, &self.from)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
}

impl Network {
    pub fn new(buses: Vec<Bus>, lines: Vec<Line>) -> Self {
        Network { buses, lines }
    }

    pub fn bus_position(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn has_facts(&self) -> bool {
        self.lines.iter().any(Line::is_facts)
    }

    pub fn has_boundary_lines(&self) -> bool {
        self.lines.iter().any(|l| l.role.is_boundary())
    }

    /// Indexed view used by every solver. Fails on dangling endpoints,
    /// self-loops and duplicate bus ids; see `validate_network` for a full
    /// diagnostic report.
    pub fn topology(&self) -> Result<Topology> {
        Topology::build(self)
    }

    /// Undirected graph has no cycle (a forest).
    pub fn is_forest(&self) -> Result<bool> {
        let topo = self.topology()?;
        let mut dsu = Dsu::new(topo.n_buses());
        Ok(topo.ends.iter().all(|&(a, b)| dsu.union(a, b)))
    }

    /// The susceptance vector with every line at its lower limit.
    pub fn lower_susceptances(&self) -> Vec<f64> {
        self.lines.iter().map(|l| l.s_min).collect()
    }

    pub(crate) fn duplicate_pairs(&self) -> Vec<(usize, usize)> {
        let mut seen: HashMap<(&str, &str), usize> = HashMap::new();
        let mut dups = Vec::new();
        for (i, line) in self.lines.iter().enumerate() {
            if let Some(&first) = seen.get(&line.unordered_pair()) {
                dups.push((first, i));
            } else {
                seen.insert(line.unordered_pair(), i);
            }
        }
        dups
    }
}

/// Positional view of a network: bus indices instead of ids, incidence lists
/// and connected components.
#[derive(Clone, Debug)]
pub struct Topology {
    pub kinds: Vec<BusKind>,
    /// `(from, to)` bus positions per line.
    pub ends: Vec<(usize, usize)>,
    /// Per bus: `(line, orientation)` with orientation `+1.0` when the bus is
    /// the `from` end.
    pub incidence: Vec<Vec<(usize, f64)>>,
    /// Component label per bus, labels are `0..n_components`.
    pub component: Vec<usize>,
    /// One reference bus per component (its first bus).
    pub reference: Vec<usize>,
}

impl Topology {
    fn build(net: &Network) -> Result<Topology> {
        let mut index: HashMap<&str, usize> = HashMap::with_capacity(net.buses.len());
        for (k, bus) in net.buses.iter().enumerate() {
            if index.insert(bus.id.as_str(), k).is_some() {
                return Err(Error::Network(format!("duplicate bus id {:?}", bus.id)));
            }
        }
        let mut ends = Vec::with_capacity(net.lines.len());
        let mut incidence = vec![Vec::new(); net.buses.len()];
        for (i, line) in net.lines.iter().enumerate() {
            let lookup = |id: &str| {
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::Network(format!("line {i} references unknown bus {id:?}")))
            };
            let a = lookup(&line.from)?;
            let b = lookup(&line.to)?;
            if a == b {
                return Err(Error::Network(format!("line {i} is a self-loop on {:?}", line.from)));
            }
            ends.push((a, b));
            incidence[a].push((i, 1.0));
            incidence[b].push((i, -1.0));
        }
        let mut dsu = Dsu::new(net.buses.len());
        for &(a, b) in &ends {
            dsu.union(a, b);
        }
        let mut label = HashMap::new();
        let mut component = Vec::with_capacity(net.buses.len());
        let mut reference = Vec::new();
        for k in 0..net.buses.len() {
            let root = dsu.find(k);
            let next = label.len();
            let c = *label.entry(root).or_insert_with(|| {
                reference.push(k);
                next
            });
            component.push(c);
        }
        Ok(Topology {
            kinds: net.buses.iter().map(|b| b.kind).collect(),
            ends,
            incidence,
            component,
            reference,
        })
    }

    pub fn n_buses(&self) -> usize {
        self.kinds.len()
    }

    pub fn n_lines(&self) -> usize {
        self.ends.len()
    }

    pub fn n_components(&self) -> usize {
        self.reference.len()
    }

    pub fn is_reference(&self, bus: usize) -> bool {
        self.reference[self.component[bus]] == bus
    }

    /// `theta[to] - theta[from]` for a line.
    pub fn angle_diff(&self, line: usize, theta: &[f64]) -> f64 {
        let (a, b) = self.ends[line];
        theta[b] - theta[a]
    }
}

pub(crate) struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    pub(crate) fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already connected.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// Flows, generation and load: the part of a solution that Kirchhoff's law
/// talks about.
#[derive(Clone, Debug, PartialEq)]
pub struct InjectionSolution {
    pub flow: Vec<f64>,
    pub gen: Vec<f64>,
    pub load: Vec<f64>,
}

impl InjectionSolution {
    pub fn zeros(net: &Network) -> Self {
        InjectionSolution {
            flow: vec![0.0; net.lines.len()],
            gen: vec![0.0; net.buses.len()],
            load: vec![0.0; net.buses.len()],
        }
    }

    pub fn total_generation(&self) -> f64 {
        self.gen.iter().sum()
    }

    pub fn total_load(&self) -> f64 {
        self.load.iter().sum()
    }

    /// Net power leaving each bus through its lines.
    pub fn net_outflow(&self, topo: &Topology) -> Vec<f64> {
        let mut out = vec![0.0; topo.n_buses()];
        for (i, &(a, b)) in topo.ends.iter().enumerate() {
            out[a] += self.flow[i];
            out[b] -= self.flow[i];
        }
        out
    }
}

/// A complete Linear-DC operating point: susceptances, phase angles and the
/// injections they carry.
#[derive(Clone, Debug, PartialEq)]
pub struct LdcSolution {
    pub susceptance: Vec<f64>,
    pub theta: Vec<f64>,
    pub injections: InjectionSolution,
}

impl LdcSolution {
    /// All-zero operating point with every susceptance at its lower limit.
    pub fn zero(net: &Network) -> Self {
        LdcSolution {
            susceptance: net.lower_susceptances(),
            theta: vec![0.0; net.buses.len()],
            injections: InjectionSolution::zeros(net),
        }
    }

    /// Total generation, the throughput every solver maximises.
    pub fn objective(&self) -> f64 {
        self.injections.total_generation()
    }

    pub fn flow(&self) -> &[f64] {
        &self.injections.flow
    }
}

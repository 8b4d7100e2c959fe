//! Structural checks on networks and feasibility checks on solutions.
//!
//! Comparisons are written as `!(x <= tol)` so that NaN counts as a violation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;

use crate::error::{Error, Result};
use crate::network::{BusKind, InjectionSolution, LdcSolution, MaxSusceptance, Network, Topology};

/// Default absolute feasibility tolerance.
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Clone, Debug, PartialEq)]
pub enum IssueKind {
    DuplicateBus {
        id: String,
    },
    DanglingEndpoint {
        line: usize,
        bus: String,
    },
    SelfLoop {
        line: usize,
    },
    DuplicatePair {
        first: usize,
        second: usize,
    },
    IntervalOrder {
        line: usize,
    },
    NegativeSusceptance {
        line: usize,
    },
    NegativeCapacity {
        line: usize,
    },
    NonFinite {
        line: usize,
    },
    ZeroCapacity {
        line: usize,
    },
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    Kirchhoff {
        bus: usize,
        imbalance: f64,
    },
    PowerLaw {
        line: usize,
        residual: f64,
    },
    SusceptanceOutOfRange {
        line: usize,
        value: f64,
    },
    CapacityExceeded {
        line: usize,
        flow: f64,
    },
    GenerationOnNonGenerator {
        bus: usize,
        value: f64,
    },
    LoadOnNonLoad {
        bus: usize,
        value: f64,
    },
    NegativeInjection {
        bus: usize,
        value: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Issue {
    pub severity: Severity,
    pub kind: IssueKind,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{tag}: ")?;
        match &self.kind {
            IssueKind::DuplicateBus { id } => write!(f, "bus id {id:?} appears twice"),
            IssueKind::DanglingEndpoint { line, bus } => {
                write!(f, "line {line} references unknown bus {bus:?}")
            }
            IssueKind::SelfLoop { line } => write!(f, "line {line} connects a bus to itself"),
            IssueKind::DuplicatePair { first, second } => {
                write!(f, "lines {first} and {second} join the same pair of buses")
            }
            IssueKind::IntervalOrder { line } => write!(f, "line {line} has s_min > s_max"),
            IssueKind::NegativeSusceptance { line } => write!(f, "line {line} has s_min < 0"),
            IssueKind::NegativeCapacity { line } => write!(f, "line {line} has negative capacity"),
            IssueKind::NonFinite { line } => write!(f, "line {line} has a NaN or infinite parameter"),
            IssueKind::ZeroCapacity { line } => write!(f, "line {line} has zero capacity"),
            IssueKind::LengthMismatch { what, expected, found } => {
                write!(f, "{what} has {found} entries, expected {expected}")
            }
            IssueKind::Kirchhoff { bus, imbalance } => {
                write!(f, "bus {bus} is out of balance by {imbalance:e}")
            }
            IssueKind::PowerLaw { line, residual } => {
                write!(f, "line {line} violates the power law by {residual:e}")
            }
            IssueKind::SusceptanceOutOfRange { line, value } => {
                write!(f, "line {line} susceptance {value} is outside its interval")
            }
            IssueKind::CapacityExceeded { line, flow } => {
                write!(f, "line {line} flow {flow} exceeds its capacity")
            }
            IssueKind::GenerationOnNonGenerator { bus, value } => {
                write!(f, "bus {bus} is not a generator but generates {value}")
            }
            IssueKind::LoadOnNonLoad { bus, value } => {
                write!(f, "bus {bus} is not a load but consumes {value}")
            }
            IssueKind::NegativeInjection { bus, value } => {
                write!(f, "bus {bus} has negative generation or load {value}")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    /// No error-level issues. Warnings are allowed.
    pub fn is_valid(&self) -> bool {
        self.issues.iter().all(|i| i.severity < Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    fn error(&mut self, kind: IssueKind) {
        self.issues.push(Issue {
            severity: Severity::Error,
            kind,
        });
    }

    fn warn(&mut self, kind: IssueKind) {
        self.issues.push(Issue {
            severity: Severity::Warning,
            kind,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}

pub fn validate_network(net: &Network) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = std::collections::HashSet::new();
    for bus in &net.buses {
        if !seen.insert(bus.id.as_str()) {
            report.error(IssueKind::DuplicateBus { id: bus.id.clone() });
        }
    }
    for (i, line) in net.lines.iter().enumerate() {
        for end in [&line.from, &line.to] {
            if !seen.contains(end.as_str()) {
                report.error(IssueKind::DanglingEndpoint {
                    line: i,
                    bus: end.clone(),
                });
            }
        }
        if line.from == line.to {
            report.error(IssueKind::SelfLoop { line: i });
        }
        let t = line.s_max.finite();
        if !line.s_min.is_finite() || !line.capacity.is_finite() || t.is_some_and(|t| !t.is_finite()) {
            report.error(IssueKind::NonFinite { line: i });
            continue;
        }
        if line.s_min < 0.0 {
            report.error(IssueKind::NegativeSusceptance { line: i });
        }
        if t.is_some_and(|t| line.s_min > t) {
            report.error(IssueKind::IntervalOrder { line: i });
        }
        if line.capacity < 0.0 {
            report.error(IssueKind::NegativeCapacity { line: i });
        } else if line.capacity == 0.0 {
            report.warn(IssueKind::ZeroCapacity { line: i });
        }
    }
    for (first, second) in net.duplicate_pairs() {
        report.error(IssueKind::DuplicatePair { first, second });
    }
    report
}

fn check_lengths(net: &Network, inj: &InjectionSolution) -> Result<()> {
    let pairs = [
        ("flow", net.lines.len(), inj.flow.len()),
        ("gen", net.buses.len(), inj.gen.len()),
        ("load", net.buses.len(), inj.load.len()),
    ];
    for (what, expected, found) in pairs {
        if expected != found {
            return Err(Error::Input(format!("{what} has {found} entries, expected {expected}")));
        }
    }
    Ok(())
}

fn kirchhoff_residuals(topo: &Topology, inj: &InjectionSolution) -> Vec<f64> {
    let mut out = inj.net_outflow(topo);
    for (a, r) in out.iter_mut().enumerate() {
        *r += inj.load[a] - inj.gen[a];
    }
    out
}

/// Whether every bus balances: outflow minus inflow equals generation minus load.
pub fn check_kirchhoff(net: &Network, inj: &InjectionSolution, tol: f64) -> Result<bool> {
    check_lengths(net, inj)?;
    let topo = net.topology()?;
    Ok(kirchhoff_residuals(&topo, inj).iter().all(|r| r.abs() <= tol))
}

/// Whether `f = s (theta_to - theta_from)` on every line.
pub fn check_power_law(net: &Network, sol: &LdcSolution, tol: f64) -> Result<bool> {
    check_lengths(net, &sol.injections)?;
    if sol.susceptance.len() != net.lines.len() || sol.theta.len() != net.buses.len() {
        return Err(Error::Input(
            "susceptance or theta length does not match the network".into(),
        ));
    }
    let topo = net.topology()?;
    Ok((0..net.lines.len()).all(|i| power_law_residual(&topo, sol, i).abs() <= tol))
}

fn power_law_residual(topo: &Topology, sol: &LdcSolution, line: usize) -> f64 {
    sol.injections.flow[line] - sol.susceptance[line] * topo.angle_diff(line, &sol.theta)
}

/// Full feasibility check of an operating point.
///
/// Reports Kirchhoff balance, the power law, susceptance intervals, line
/// capacities, bus typing of generation and load, and sign of injections.
/// Capacity, interval and typing checks use `tol` as an absolute slack.
pub fn validate_solution(net: &Network, sol: &LdcSolution, tol: f64) -> ValidationReport {
    let mut report = ValidationReport::default();
    let lens = [
        ("susceptance", net.lines.len(), sol.susceptance.len()),
        ("theta", net.buses.len(), sol.theta.len()),
        ("flow", net.lines.len(), sol.injections.flow.len()),
        ("gen", net.buses.len(), sol.injections.gen.len()),
        ("load", net.buses.len(), sol.injections.load.len()),
    ];
    for (what, expected, found) in lens {
        if expected != found {
            report.error(IssueKind::LengthMismatch { what, expected, found });
        }
    }
    if !report.is_empty() {
        return report;
    }
    let topo = match net.topology() {
        Ok(t) => t,
        Err(_) => return validate_network(net),
    };
    let inj = &sol.injections;
    for (bus, r) in kirchhoff_residuals(&topo, inj).into_iter().enumerate() {
        if !(r.abs() <= tol) {
            report.error(IssueKind::Kirchhoff { bus, imbalance: r });
        }
    }
    for (i, line) in net.lines.iter().enumerate() {
        let residual = power_law_residual(&topo, sol, i);
        if !(residual.abs() <= tol) {
            report.error(IssueKind::PowerLaw { line: i, residual });
        }
        let s = sol.susceptance[i];
        let in_range = s >= line.s_min - tol
            && match line.s_max {
                MaxSusceptance::Finite(t) => s <= t + tol,
                MaxSusceptance::Unbounded => s.is_finite(),
            };
        if !in_range {
            report.error(IssueKind::SusceptanceOutOfRange { line: i, value: s });
        }
        let f = inj.flow[i];
        if !(f.abs() <= line.capacity + tol) {
            report.error(IssueKind::CapacityExceeded { line: i, flow: f });
        }
    }
    for (bus, &kind) in topo.kinds.iter().enumerate() {
        let (g, l) = (inj.gen[bus], inj.load[bus]);
        for value in [g, l] {
            if !(value >= -tol) {
                report.error(IssueKind::NegativeInjection { bus, value });
            }
        }
        if kind != BusKind::Generator && !(g.abs() <= tol) {
            report.error(IssueKind::GenerationOnNonGenerator { bus, value: g });
        }
        if kind != BusKind::Load && !(l.abs() <= tol) {
            report.error(IssueKind::LoadOnNonLoad { bus, value: l });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::network::{Bus, Line};

    fn single_line() -> Network {
        Network::new(
            vec![Bus::generator("g"), Bus::load("l")],
            vec![Line::fixed("g", "l", 1.0, 5.0)],
        )
    }

    #[test]
    fn kirchhoff_on_single_line() {
        let net = single_line();
        let mut inj = InjectionSolution {
            flow: vec![5.0],
            gen: vec![5.0, 0.0],
            load: vec![0.0, 5.0],
        };
        assert!(check_kirchhoff(&net, &inj, 1e-9).unwrap());
        inj.gen[0] = 4.0;
        assert!(!check_kirchhoff(&net, &inj, 1e-9).unwrap());
        inj.gen.pop();
        assert!(check_kirchhoff(&net, &inj, 1e-9).is_err());
    }

    #[test]
    fn power_law_residual_sign() {
        let net = Network::new(
            vec![Bus::generator("a"), Bus::load("b")],
            vec![Line::facts("a", "b", 1.0, 3.0, 10.0)],
        );
        let mut sol = LdcSolution {
            susceptance: vec![2.0],
            theta: vec![0.0, 3.0],
            injections: InjectionSolution {
                flow: vec![6.0],
                gen: vec![6.0, 0.0],
                load: vec![0.0, 6.0],
            },
        };
        assert!(check_power_law(&net, &sol, 1e-9).unwrap());
        sol.injections.flow[0] = 5.0;
        assert!(!check_power_law(&net, &sol, 1e-9).unwrap());
    }

    #[test]
    fn triangle_network_is_valid() {
        assert!(validate_network(&fixtures::tri()).is_empty());
        assert!(validate_network(&fixtures::tri_f()).is_empty());
    }

    #[test]
    fn duplicate_pair_and_bad_interval() {
        let mut net = single_line();
        net.lines.push(Line::fixed("l", "g", 1.0, 1.0));
        let report = validate_network(&net);
        assert_eq!(
            report.issues,
            vec![Issue {
                severity: Severity::Error,
                kind: IssueKind::DuplicatePair { first: 0, second: 1 }
            }]
        );

        let net = Network::new(
            vec![Bus::generator("g"), Bus::load("l")],
            vec![Line::facts("g", "l", 2.0, 1.0, 1.0)],
        );
        let report = validate_network(&net);
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0].kind, IssueKind::IntervalOrder { line: 0 });
    }

    #[test]
    fn zero_capacity_is_only_a_warning() {
        let net = Network::new(
            vec![Bus::generator("g"), Bus::load("l")],
            vec![Line::fixed("g", "l", 1.0, 0.0)],
        );
        let report = validate_network(&net);
        assert!(report.is_valid());
        assert!(!report.is_empty());
    }

    #[test]
    fn zero_solution_is_feasible() {
        let net = fixtures::tri_f();
        assert!(validate_solution(&net, &LdcSolution::zero(&net), DEFAULT_TOL).is_empty());
    }

    #[test]
    fn typing_rules() {
        let net = single_line();
        let mut sol = LdcSolution::zero(&net);
        sol.injections.gen[1] = 1.0;
        sol.injections.load[1] = 1.0;
        let report = validate_solution(&net, &sol, DEFAULT_TOL);
        assert_eq!(report.issues.len(), 1);
        assert!(matches!(
            report.issues[0].kind,
            IssueKind::GenerationOnNonGenerator { bus: 1, .. }
        ));
    }
}

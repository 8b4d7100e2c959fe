//! Linear-DC flow problems: MPF (fixed susceptances) and MVF (fixed angle
//! directions), plus the two conversions the iterative method alternates
//! between.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp_with, LinearProgram, LpOptions, LpResult, LpStatus, Relation, VarId};
use crate::maxflow::{lift_with_topology, Lift};
use crate::network::{BusKind, InjectionSolution, LdcSolution, MaxSusceptance, Network, Topology};

/// Default tolerance for [`recover_susceptances`].
pub const RECOVER_TOL: f64 = 1e-7;

/// Direction of the angle difference on every line.
///
/// `true` (bit 1) means `theta[to] - theta[from] >= 0`, `false` means `<= 0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignPattern(pub Vec<bool>);

impl SignPattern {
    pub fn all_positive(lines: usize) -> Self {
        SignPattern(vec![true; lines])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> String {
        self.0.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

/// An optimal LDC operating point and its objective.
#[derive(Clone, Debug)]
pub struct FlowSolution {
    pub value: f64,
    pub solution: LdcSolution,
}

/// LP skeleton shared by every flow formulation: angles with one reference
/// per component, generation and load on typed buses, flows bounded by
/// capacity, Kirchhoff balance rows, and total generation as objective.
pub(crate) struct FlowModel {
    pub lp: LinearProgram,
    pub theta: Vec<VarId>,
    pub gen: Vec<Option<VarId>>,
    pub load: Vec<Option<VarId>>,
    pub flow: Vec<VarId>,
}

impl FlowModel {
    pub fn new(net: &Network, topo: &Topology) -> Self {
        let mut lp = LinearProgram::new();
        let theta = (0..topo.n_buses())
            .map(|k| {
                let name = format!("theta_{}", net.buses[k].id);
                if topo.is_reference(k) {
                    lp.add_var(name, 0.0, 0.0)
                } else {
                    lp.add_var(name, f64::NEG_INFINITY, f64::INFINITY)
                }
            })
            .collect();
        let mut gen = vec![None; topo.n_buses()];
        let mut load = vec![None; topo.n_buses()];
        for (k, kind) in topo.kinds.iter().enumerate() {
            match kind {
                BusKind::Generator => {
                    let g = lp.add_var(format!("gen_{}", net.buses[k].id), 0.0, f64::INFINITY);
                    lp.set_objective(g, 1.0);
                    gen[k] = Some(g);
                }
                BusKind::Load => {
                    load[k] = Some(lp.add_var(format!("load_{}", net.buses[k].id), 0.0, f64::INFINITY));
                }
                BusKind::Junction => {}
            }
        }
        let flow = net
            .lines
            .iter()
            .enumerate()
            .map(|(i, l)| lp.add_var(format!("f_{i}"), -l.capacity, l.capacity))
            .collect::<Vec<_>>();
        for k in 0..topo.n_buses() {
            let mut terms: Vec<(VarId, f64)> = topo.incidence[k].iter().map(|&(i, o)| (flow[i], o)).collect();
            if let Some(g) = gen[k] {
                terms.push((g, -1.0));
            }
            if let Some(l) = load[k] {
                terms.push((l, 1.0));
            }
            lp.add_constraint(format!("kcl_{}", net.buses[k].id), terms, Relation::Eq, 0.0);
        }
        FlowModel {
            lp,
            theta,
            gen,
            load,
            flow,
        }
    }

    /// `theta[to] - theta[from]` as LP terms with a coefficient.
    pub fn angle_terms(&self, topo: &Topology, line: usize, coef: f64) -> [(VarId, f64); 2] {
        let (a, b) = topo.ends[line];
        [(self.theta[b], coef), (self.theta[a], -coef)]
    }

    pub fn extract(&self, result: &LpResult) -> (Vec<f64>, InjectionSolution) {
        let theta = self.theta.iter().map(|&v| result.value(v)).collect();
        let pick = |vars: &[Option<VarId>]| {
            vars.iter()
                .map(|v| v.map_or(0.0, |v| result.value(v).max(0.0)))
                .collect()
        };
        let inj = InjectionSolution {
            flow: self.flow.iter().map(|&v| result.value(v)).collect(),
            gen: pick(&self.gen),
            load: pick(&self.load),
        };
        (theta, inj)
    }
}

pub(crate) fn expect_optimal(result: LpResult, what: &str) -> Result<LpResult> {
    match result.status {
        LpStatus::Optimal => Ok(result),
        status => Err(Error::Numerical(format!("{what} LP reported {status:?}"))),
    }
}

/// Maximum power flow with every susceptance fixed to `s`.
pub fn solve_mpf(net: &Network, s: &[f64]) -> Result<FlowSolution> {
    solve_mpf_with(net, s, &LpOptions::default())
}

pub fn solve_mpf_with(net: &Network, s: &[f64], opts: &LpOptions) -> Result<FlowSolution> {
    if s.len() != net.lines.len() {
        return Err(Error::Input(format!(
            "{} susceptances for {} lines",
            s.len(),
            net.lines.len()
        )));
    }
    for (i, (line, &v)) in net.lines.iter().zip(s).enumerate() {
        if !v.is_finite() || !line.admits(v, 1e-12 * (1.0 + v.abs())) {
            return Err(Error::Input(format!(
                "susceptance {v} of line {i} is outside [{}, {}]",
                line.s_min, line.s_max
            )));
        }
    }
    let topo = net.topology()?;
    let mut model = FlowModel::new(net, &topo);
    for (i, &si) in s.iter().enumerate() {
        let [tb, ta] = model.angle_terms(&topo, i, -si);
        model.lp.add_constraint(
            format!("law_{i}"),
            vec![(model.flow[i], 1.0), tb, ta],
            Relation::Eq,
            0.0,
        );
    }
    let result = expect_optimal(solve_lp_with(&model.lp, opts)?, "MPF")?;
    let (theta, injections) = model.extract(&result);
    let solution = LdcSolution {
        susceptance: s.to_vec(),
        theta,
        injections,
    };
    Ok(FlowSolution {
        value: solution.objective(),
        solution,
    })
}

/// Maximum flow with the direction of every angle difference fixed by `d`
/// and susceptances free within their intervals.
pub fn solve_mvf(net: &Network, d: &SignPattern) -> Result<FlowSolution> {
    solve_mvf_with(net, d, &LpOptions::default())
}

pub fn solve_mvf_with(net: &Network, d: &SignPattern, opts: &LpOptions) -> Result<FlowSolution> {
    solve_mvf_withdrawal(net, d, &[], opts)?.ok_or_else(|| Error::Numerical("MVF LP reported Infeasible".into()))
}

/// MVF with fixed external withdrawals `(bus, amount)`: each listed bus
/// sends `amount` out of the network. `None` when no flow can meet the
/// withdrawals. The objective still counts generation only, so power that
/// leaves through a withdrawal is included in it.
pub fn solve_mvf_withdrawal(
    net: &Network,
    d: &SignPattern,
    withdrawals: &[(usize, f64)],
    opts: &LpOptions,
) -> Result<Option<FlowSolution>> {
    if d.len() != net.lines.len() {
        return Err(Error::Input(format!(
            "sign pattern has {} bits for {} lines",
            d.len(),
            net.lines.len()
        )));
    }
    let topo = net.topology()?;
    let Some((theta, inj)) = mvf_point(net, &topo, d, withdrawals, opts)? else {
        return Ok(None);
    };
    match realize(net, &topo, &theta, &inj, opts) {
        Ok(solution) => Ok(Some(FlowSolution {
            value: solution.objective(),
            solution,
        })),
        Err(err) if has_unbounded(net) => {
            // The LP optimum needs an infinite susceptance somewhere. Cap the
            // unbounded intervals at a large finite value and solve again.
            let surrogate = finite_surrogate(net);
            log::warn!("MVF optimum not attainable ({err}); re-solving with finite susceptance caps");
            let Some((theta, inj)) = mvf_point(&surrogate, &topo, d, withdrawals, opts)? else {
                return Ok(None);
            };
            let solution = realize(&surrogate, &topo, &theta, &inj, opts)?;
            Ok(Some(FlowSolution {
                value: solution.objective(),
                solution,
            }))
        }
        Err(err) => Err(err),
    }
}

fn mvf_point(
    net: &Network,
    topo: &Topology,
    d: &SignPattern,
    withdrawals: &[(usize, f64)],
    opts: &LpOptions,
) -> Result<Option<(Vec<f64>, InjectionSolution)>> {
    let mut model = FlowModel::new(net, topo);
    for &(bus, amount) in withdrawals {
        // Kirchhoff rows come first, one per bus.
        model.lp.set_rhs(bus, -amount);
    }
    for (i, line) in net.lines.iter().enumerate() {
        let sign = if d.0[i] { 1.0 } else { -1.0 };
        let f = model.flow[i];
        let [tb, ta] = model.angle_terms(topo, i, 1.0);
        model
            .lp
            .add_constraint(format!("dir_{i}"), vec![tb, ta], dir_relation(sign), 0.0);
        if line.is_fixed() {
            let [tb, ta] = model.angle_terms(topo, i, -line.s_min);
            model
                .lp
                .add_constraint(format!("law_{i}"), vec![(f, 1.0), tb, ta], Relation::Eq, 0.0);
            continue;
        }
        // sign * f >= s_min * sign * dtheta
        let [tb, ta] = model.angle_terms(topo, i, -line.s_min);
        model
            .lp
            .add_constraint(format!("lo_{i}"), vec![(f, 1.0), tb, ta], dir_relation(sign), 0.0);
        if let MaxSusceptance::Finite(t) = line.s_max {
            let [tb, ta] = model.angle_terms(topo, i, -t);
            model
                .lp
                .add_constraint(format!("hi_{i}"), vec![(f, 1.0), tb, ta], dir_relation(-sign), 0.0);
        }
    }
    let result = solve_lp_with(&model.lp, opts)?;
    match result.status {
        LpStatus::Optimal => Ok(Some(model.extract(&result))),
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(Error::Numerical("MVF LP reported Unbounded".into())),
    }
}

fn dir_relation(sign: f64) -> Relation {
    if sign > 0.0 {
        Relation::Ge
    } else {
        Relation::Le
    }
}

pub(crate) fn has_unbounded(net: &Network) -> bool {
    net.lines.iter().any(|l| l.s_max.is_unbounded())
}

/// Copy of `net` with every unbounded susceptance interval capped at
/// `10^4` times the largest finite susceptance in the network.
pub fn finite_surrogate(net: &Network) -> Network {
    let scale = net
        .lines
        .iter()
        .flat_map(|l| [Some(l.s_min), l.s_max.finite()])
        .flatten()
        .fold(1.0f64, f64::max);
    let cap = 1e4 * scale;
    let mut out = net.clone();
    for line in &mut out.lines {
        if line.s_max.is_unbounded() {
            line.s_max = MaxSusceptance::Finite(cap.max(line.s_min + 1.0));
        }
    }
    out
}

/// Turns an angle/flow point from an LP into a full operating point:
/// susceptances are read off the point, and if some flow sits on an
/// unbounded line with no angle difference, the angles are re-solved with
/// the flows held fixed.
pub(crate) fn realize(
    net: &Network,
    topo: &Topology,
    theta: &[f64],
    inj: &InjectionSolution,
    opts: &LpOptions,
) -> Result<LdcSolution> {
    match recover_susceptances_in(net, topo, theta, &inj.flow, RECOVER_TOL) {
        Ok(susceptance) => Ok(LdcSolution {
            susceptance,
            theta: theta.to_vec(),
            injections: inj.clone(),
        }),
        Err(err @ Error::InconsistentFlow { .. }) => match lift_with_topology(net, topo, inj, opts)? {
            Lift::Realized(sol) => Ok(sol),
            Lift::Infeasible => Err(err),
        },
        Err(err) => Err(err),
    }
}

/// Sign of every angle difference; ties within `tie_tol` count as nonnegative.
pub fn extract_signs(net: &Network, theta: &[f64], tie_tol: f64) -> Result<SignPattern> {
    if theta.len() != net.buses.len() {
        return Err(Error::Input("theta length does not match the bus count".into()));
    }
    let topo = net.topology()?;
    Ok(SignPattern(
        (0..topo.n_lines())
            .map(|i| topo.angle_diff(i, theta) >= -tie_tol)
            .collect(),
    ))
}

/// Susceptances that explain `flow` under `theta`.
///
/// Where the angle difference exceeds `tol`, `s = f / dtheta` clamped into
/// the interval; the clamp may move the implied flow by at most
/// `tol * max(1, |f|)`. Where both angle difference and flow are within
/// `tol` of zero, the interval midpoint (or `s_min + 1` when unbounded).
/// A flow with no angle difference is an error.
pub fn recover_susceptances(net: &Network, theta: &[f64], flow: &[f64], tol: f64) -> Result<Vec<f64>> {
    if theta.len() != net.buses.len() || flow.len() != net.lines.len() {
        return Err(Error::Input("theta or flow length does not match the network".into()));
    }
    let topo = net.topology()?;
    recover_susceptances_in(net, &topo, theta, flow, tol)
}

fn recover_susceptances_in(net: &Network, topo: &Topology, theta: &[f64], flow: &[f64], tol: f64) -> Result<Vec<f64>> {
    net.lines
        .iter()
        .enumerate()
        .map(|(i, line)| {
            let dtheta = topo.angle_diff(i, theta);
            let f = flow[i];
            if dtheta.abs() > tol {
                let s = line.clamp(f / dtheta);
                if (f - s * dtheta).abs() <= tol * f.abs().max(1.0) {
                    return Ok(s);
                }
            } else if f.abs() <= tol {
                return Ok(line.midpoint());
            }
            Err(Error::InconsistentFlow {
                line: i,
                flow: f,
                angle_diff: dtheta,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::network::{Bus, Line};
    use crate::validate::{validate_solution, DEFAULT_TOL};

    #[test]
    fn mpf_single_line() {
        let net = fixtures::single_line(5.0);
        let r = solve_mpf(&net, &[1.0]).unwrap();
        assert!((r.value - 5.0).abs() < 1e-9);
    }

    #[test]
    fn mpf_tri_is_twelve() {
        let net = fixtures::tri();
        let r = solve_mpf(&net, &[1.0; 3]).unwrap();
        assert!((r.value - 12.0).abs() < 1e-9);
        assert!(validate_solution(&net, &r.solution, DEFAULT_TOL).is_empty());
        // The detour splits the angle difference evenly.
        let th = &r.solution.theta;
        assert!((th[1] - 0.5 * (th[0] + th[2])).abs() < 1e-9);
    }

    #[test]
    fn mpf_zero_capacity() {
        let mut net = fixtures::tri();
        net.lines.iter_mut().for_each(|l| l.capacity = 0.0);
        assert_eq!(solve_mpf(&net, &[1.0; 3]).unwrap().value, 0.0);
    }

    #[test]
    fn mpf_rejects_out_of_range_susceptance() {
        let net = fixtures::tri_f();
        assert!(solve_mpf(&net, &[2.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn mvf_single_line() {
        let net = fixtures::single_line(5.0);
        let r = solve_mvf(&net, &SignPattern(vec![true])).unwrap();
        assert!((r.value - 5.0).abs() < 1e-9);
        let r = solve_mvf(&net, &SignPattern(vec![false])).unwrap();
        assert!(r.value.abs() < 1e-9);
    }

    #[test]
    fn mvf_tri_f_from_mpf_signs() {
        let tri = fixtures::tri();
        let mpf = solve_mpf(&tri, &[1.0; 3]).unwrap();
        let d = extract_signs(&tri, &mpf.solution.theta, 1e-9).unwrap();
        let net = fixtures::tri_f();
        let r = solve_mvf(&net, &d).unwrap();
        assert!((r.value - 14.0).abs() < 1e-7, "{}", r.value);
        assert!(validate_solution(&net, &r.solution, DEFAULT_TOL).is_empty());
        assert!((r.solution.susceptance[0] - 1.25).abs() < 1e-6);
    }

    #[test]
    fn mvf_inconsistent_series_directions() {
        let net = Network::new(
            vec![Bus::generator("g"), Bus::junction("m"), Bus::load("l")],
            vec![
                Line::facts("g", "m", 1.0, 2.0, 3.0),
                Line::facts("m", "l", 1.0, 2.0, 3.0),
            ],
        );
        let r = solve_mvf(&net, &SignPattern(vec![true, false])).unwrap();
        assert!(r.value.abs() < 1e-9);
    }

    #[test]
    fn mvf_repairs_unbounded_line_at_zero_angle() {
        // Two parallel routes g-l: a direct unbounded FACTS line and a fixed
        // detour. The LP may put flow on the direct line with no angle
        // difference; the result must still be a valid operating point.
        let net = Network::new(
            vec![Bus::generator("g"), Bus::junction("m"), Bus::load("l")],
            vec![
                Line::unbounded("g", "l", 0.0, 5.0),
                Line::fixed("g", "m", 1.0, 1.0),
                Line::fixed("m", "l", 1.0, 1.0),
            ],
        );
        let r = solve_mvf(&net, &SignPattern::all_positive(3)).unwrap();
        assert!((r.value - 6.0).abs() < 1e-7);
        assert!(validate_solution(&net, &r.solution, DEFAULT_TOL).is_empty());
    }

    #[test]
    fn signs_and_ties() {
        let net = fixtures::single_line(1.0);
        assert_eq!(extract_signs(&net, &[0.0, 0.5], 1e-9).unwrap().0, vec![true]);
        assert_eq!(extract_signs(&net, &[0.0, -0.5], 1e-9).unwrap().0, vec![false]);
        assert_eq!(extract_signs(&net, &[0.0, 0.0], 1e-9).unwrap().0, vec![true]);
    }

    #[test]
    fn recovery_rules() {
        let net = Network::new(
            vec![Bus::generator("a"), Bus::load("b")],
            vec![Line::facts("a", "b", 1.0, 3.0, 10.0)],
        );
        assert_eq!(
            recover_susceptances(&net, &[0.0, 3.0], &[6.0], 1e-7).unwrap(),
            vec![2.0]
        );
        let net = Network::new(net.buses.clone(), vec![Line::facts("a", "b", 1.0, 2.0, 10.0)]);
        assert_eq!(
            recover_susceptances(&net, &[0.0, 0.0], &[0.0], 1e-7).unwrap(),
            vec![1.5]
        );
        assert!(matches!(
            recover_susceptances(&net, &[0.0, 1e-12], &[5.0], 1e-7),
            Err(Error::InconsistentFlow { line: 0, .. })
        ));
    }
}

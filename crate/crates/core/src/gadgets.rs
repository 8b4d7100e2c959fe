//! Choice networks and the exact-cover reduction built from them.
//!
//! A choice network has a port bus through which power can leave. Its best
//! total generation is reached when the port exports exactly `0` or exactly
//! `x`, and every other export level is strictly worse. Chaining such
//! networks to the elements of a set-cover instance turns "can MFF reach
//! the target" into "does an exact cover exist".
//!
//! The default builder, [`TieLineChoice`], uses four buses (port `p`, load
//! `l`, generators `a` and `b`) and, at `x = 1`:
//!
//! | line  | susceptance | capacity |
//! |-------|-------------|----------|
//! | `l-a` | 0.75        | 1        |
//! | `p-a` | [0, 3]      | 1        |
//! | `l-b` | 2           | 3        |
//! | `p-b` | 1           | 0        |
//!
//! The capacity-0 line pins the port angle to the angle of `b`. With no
//! export, `p-a` can switch off (susceptance 0) and both load lines
//! saturate, for 4. Exporting `w > 0` through `p-a` forces an angle gap of
//! at least `w / 3` that eats into the `l-b` line, and generation drops to
//! `11/3 + w/3`, back to 4 only at `w = 1`. An isolated generator-load pair
//! of capacity 2.1 lifts the optimum to 6.1. All capacities scale with `x`.

use num_rational::Rational64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mip::{enumerate_signs_oracle_withdrawal, solve_mff, MffConfig, Termination, DEFAULT_ORACLE_LIMIT};
use crate::network::{Bus, Line, Network};

/// Sweep resolution as a fraction of `x`.
pub const GRID_STEP: f64 = 0.05;
const ATTAIN_TOL: f64 = 1e-6;

pub fn to_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn ratio(n: i64, d: i64) -> Rational64 {
    Rational64::new(n, d)
}

/// Intended behaviour of a choice network.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceSpec {
    pub x: Rational64,
    /// Best total generation, reached at export `0` and `x`.
    pub inner_opt: Rational64,
    /// Total generation as the export tends to `0` from above.
    pub base_generation: Rational64,
    /// Extra generation per unit of export on `(0, x]`.
    pub generation_ratio: Rational64,
}

impl ChoiceSpec {
    /// Behaviour of [`TieLineChoice`].
    pub fn tie_line(x: Rational64) -> Self {
        ChoiceSpec {
            x,
            inner_opt: ratio(61, 10) * x,
            base_generation: (ratio(11, 3) + ratio(21, 10)) * x,
            generation_ratio: ratio(1, 3),
        }
    }

    /// Total generation at export `w`, `None` outside `[0, x]`.
    pub fn generation_at(&self, w: Rational64) -> Option<Rational64> {
        let zero = Rational64::from_integer(0);
        if w < zero || w > self.x {
            None
        } else if w == zero {
            Some(self.inner_opt)
        } else {
            Some(self.base_generation + self.generation_ratio * w)
        }
    }
}

/// A gadget as bus and line lists with ids carrying `prefix`.
pub struct Gadget {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub port: String,
    pub expected_inner_opt: Rational64,
}

pub trait ChoiceBuilder: Sync {
    fn name(&self) -> &'static str;
    fn build(&self, x: Rational64, prefix: &str) -> Gadget;
}

/// The default builder described in the module docs.
#[derive(Clone, Copy, Debug, Default)]
pub struct TieLineChoice;

impl ChoiceBuilder for TieLineChoice {
    fn name(&self) -> &'static str {
        "tie-line"
    }

    fn build(&self, x: Rational64, prefix: &str) -> Gadget {
        tie_line_gadget(x, prefix, Line::facts("", "", 0.0, 3.0, 0.0))
    }
}

/// [`TieLineChoice`] with `p-a` fixed at susceptance 3: generation only
/// grows with the export, so the sole optimum is at `x`.
#[derive(Clone, Copy, Debug, Default)]
pub struct MonotoneChoice;

impl ChoiceBuilder for MonotoneChoice {
    fn name(&self) -> &'static str {
        "monotone"
    }

    fn build(&self, x: Rational64, prefix: &str) -> Gadget {
        let mut g = tie_line_gadget(x, prefix, Line::fixed("", "", 3.0, 0.0));
        g.expected_inner_opt = ratio(4, 1) * x + ratio(21, 10) * x;
        g
    }
}

/// One generator behind a line to the port.
#[derive(Clone, Copy, Debug, Default)]
pub struct PlainGeneratorChoice;

impl ChoiceBuilder for PlainGeneratorChoice {
    fn name(&self) -> &'static str {
        "plain-generator"
    }

    fn build(&self, x: Rational64, prefix: &str) -> Gadget {
        let id = |s: &str| format!("{prefix}{s}");
        Gadget {
            buses: vec![Bus::junction(id("p")), Bus::generator(id("a"))],
            lines: vec![Line::fixed(id("a"), id("p"), 1.0, to_f64(x))],
            port: id("p"),
            expected_inner_opt: x,
        }
    }
}

fn tie_line_gadget(x: Rational64, prefix: &str, mut switch: Line) -> Gadget {
    let id = |s: &str| format!("{prefix}{s}");
    let xf = to_f64(x);
    switch.from = id("p");
    switch.to = id("a");
    switch.capacity = xf;
    Gadget {
        buses: vec![
            Bus::junction(id("p")),
            Bus::load(id("l")),
            Bus::generator(id("a")),
            Bus::generator(id("b")),
            Bus::generator(id("pad_g")),
            Bus::load(id("pad_l")),
        ],
        lines: vec![
            Line::fixed(id("l"), id("a"), 0.75, xf),
            switch,
            Line::fixed(id("l"), id("b"), 2.0, 3.0 * xf),
            Line::fixed(id("p"), id("b"), 1.0, 0.0),
            Line::fixed(id("pad_g"), id("pad_l"), 1.0, to_f64(ratio(21, 10) * x)),
        ],
        port: id("p"),
        expected_inner_opt: ratio(61, 10) * x,
    }
}

pub struct ChoiceNetwork {
    pub net: Network,
    pub port: String,
    pub expected_inner_opt: Rational64,
}

pub fn build_choice_network(x: Rational64, builder: &dyn ChoiceBuilder) -> Result<ChoiceNetwork> {
    if x <= Rational64::from_integer(0) {
        return Err(Error::Input(format!("port quantum must be positive, got {x}")));
    }
    let g = builder.build(x, "");
    Ok(ChoiceNetwork {
        net: Network::new(g.buses, g.lines),
        port: g.port,
        expected_inner_opt: g.expected_inner_opt,
    })
}

/// [`build_choice_network`] that also runs [`verify_choice`] and fails with
/// the report when the gadget does not behave.
pub fn build_verified_choice_network(
    x: Rational64,
    builder: &dyn ChoiceBuilder,
) -> Result<(ChoiceNetwork, VerificationReport)> {
    let built = build_choice_network(x, builder)?;
    let report = verify_choice(&built.net, &built.port, to_f64(x))?;
    if !report.passed {
        return Err(Error::Input(format!(
            "builder {} does not produce a choice network:\n{report}",
            builder.name()
        )));
    }
    Ok((built, report))
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    /// Power leaving through the port.
    pub export: f64,
    /// Best total generation, `None` when the export is infeasible.
    pub generation: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub x: f64,
    pub grid_step: f64,
    pub points: Vec<SweepPoint>,
    pub optimum: f64,
    /// Exports within `1e-6` of the optimum.
    pub optimal_exports: Vec<f64>,
    pub passed: bool,
}

impl std::fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "x = {}, grid step {} x, optimum {:.6} at exports {:?}: {}",
            self.x,
            self.grid_step,
            self.optimum,
            self.optimal_exports,
            if self.passed { "pass" } else { "fail" }
        )?;
        for p in &self.points {
            match p.generation {
                Some(g) => writeln!(f, "  w = {:>9.4}  generation {g:.6}", p.export)?,
                None => writeln!(f, "  w = {:>9.4}  infeasible", p.export)?,
            }
        }
        Ok(())
    }
}

/// Sweeps the port export over `[-x, x]` in steps of `0.05 x` plus one point
/// past `x`, computing the best generation at each level with the sign
/// enumeration oracle. Passes when the optimum is attained at exports `0`
/// and `x` and nowhere else on the grid.
pub fn verify_choice(net: &Network, port: &str, x: f64) -> Result<VerificationReport> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Input(format!("port quantum must be positive, got {x}")));
    }
    let bus = net
        .bus_position(port)
        .ok_or_else(|| Error::Network(format!("port bus {port} does not exist")))?;
    let steps = (1.0 / GRID_STEP).round() as i64;
    let mut exports: Vec<f64> = (-steps..=steps).map(|k| k as f64 * GRID_STEP * x).collect();
    exports.push((1.0 + GRID_STEP) * x);
    let generation: Vec<Option<f64>> = exports
        .par_iter()
        .map(|&w| enumerate_signs_oracle_withdrawal(net, DEFAULT_ORACLE_LIMIT, &[(bus, w)]).map(|r| r.map(|r| r.value)))
        .collect::<Result<_>>()?;
    let optimum = generation.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let points: Vec<SweepPoint> = exports
        .iter()
        .zip(&generation)
        .map(|(&export, &generation)| SweepPoint { export, generation })
        .collect();
    let optimal_exports: Vec<f64> = points
        .iter()
        .filter(|p| p.generation.is_some_and(|g| g >= optimum - ATTAIN_TOL))
        .map(|p| p.export)
        .collect();
    let is_level = |w: f64, target: f64| (w - target).abs() <= 1e-9 * x;
    let passed = optimal_exports.len() == 2
        && optimal_exports.iter().any(|&w| is_level(w, 0.0))
        && optimal_exports.iter().any(|&w| is_level(w, x));
    Ok(VerificationReport {
        x,
        grid_step: GRID_STEP,
        points,
        optimum,
        optimal_exports,
        passed,
    })
}

/// A ground set and a collection of 3-element subsets of it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactCoverInstance {
    pub elements: Vec<String>,
    pub sets: Vec<[String; 3]>,
}

impl ExactCoverInstance {
    pub fn new(elements: &[&str], sets: &[[&str; 3]]) -> Result<Self> {
        let inst = ExactCoverInstance {
            elements: elements.iter().map(|s| s.to_string()).collect(),
            sets: sets.iter().map(|s| s.map(str::to_string)).collect(),
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Six elements, three sets, one exact cover.
    pub fn example() -> Self {
        Self::new(
            &["a", "b", "c", "d", "e", "f"],
            &[["a", "b", "c"], ["b", "c", "d"], ["d", "e", "f"]],
        )
        .expect("example is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for e in &self.elements {
            if !seen.insert(e.as_str()) {
                return Err(Error::Input(format!("element {e} listed twice")));
            }
        }
        for set in &self.sets {
            for (k, e) in set.iter().enumerate() {
                if !seen.contains(e.as_str()) {
                    return Err(Error::Input(format!("set member {e} is not an element")));
                }
                if set[..k].contains(e) {
                    return Err(Error::Input(format!("set {set:?} repeats {e}")));
                }
            }
        }
        Ok(())
    }

    /// Indices of sets forming an exact cover, by enumerating subsets.
    pub fn brute_force(&self) -> Option<Vec<usize>> {
        let n = self.sets.len();
        assert!(n < 31, "brute force limited to 30 sets");
        let pos = |e: &String| self.elements.iter().position(|x| x == e).expect("validated");
        let masks: Vec<u64> = self
            .sets
            .iter()
            .map(|s| s.iter().fold(0u64, |m, e| m | 1 << pos(e)))
            .collect();
        let full = if self.elements.len() == 64 {
            u64::MAX
        } else {
            (1u64 << self.elements.len()) - 1
        };
        'outer: for pick in 0u32..(1 << n) {
            let mut covered = 0u64;
            for (i, &m) in masks.iter().enumerate() {
                if pick >> i & 1 == 1 {
                    if covered & m != 0 {
                        continue 'outer;
                    }
                    covered |= m;
                }
            }
            if covered == full {
                return Some((0..n).filter(|&i| pick >> i & 1 == 1).collect());
            }
        }
        None
    }
}

pub struct ExactCoverNetwork {
    pub net: Network,
    pub target: Rational64,
    /// The first `core_lines` lines are the set-cover part; the rest belong
    /// to gadgets.
    pub core_lines: usize,
    pub ports: Vec<String>,
}

/// Port quantum used for every gadget of the reduction.
pub const COVER_QUANTUM: i64 = 3;

/// Generator `g`, load `l`, a junction per element and a choice gadget per
/// set, whose port is the set's bus `v_X`:
///
/// * `g-l` susceptance 1, capacity 3
/// * `v_X-e` susceptance 1, capacity 1 for every member `e` of `X`
/// * `g-e` susceptance 1, capacity 1 and `e-l` susceptance 1, capacity 2
///   for every element
///
/// The target is `3 + |M| + |S|` times the gadget optimum at `x = 3`.
pub fn build_exact_cover_network(inst: &ExactCoverInstance, builder: &dyn ChoiceBuilder) -> Result<ExactCoverNetwork> {
    inst.validate()?;
    let x = Rational64::from_integer(COVER_QUANTUM);
    let elem = |e: &str| format!("m:{e}");
    let mut buses = vec![Bus::generator("g"), Bus::load("l")];
    buses.extend(inst.elements.iter().map(|e| Bus::junction(elem(e))));
    let mut lines = vec![Line::fixed("g", "l", 1.0, 3.0)];
    let gadgets: Vec<Gadget> = (0..inst.sets.len())
        .map(|k| builder.build(x, &format!("X{k}/")))
        .collect();
    for (set, g) in inst.sets.iter().zip(&gadgets) {
        for e in set {
            lines.push(Line::fixed(g.port.clone(), elem(e), 1.0, 1.0));
        }
    }
    for e in &inst.elements {
        lines.push(Line::fixed("g", elem(e), 1.0, 1.0));
        lines.push(Line::fixed(elem(e), "l", 1.0, 2.0));
    }
    let core_lines = lines.len();
    let mut target = Rational64::from_integer(3 + inst.elements.len() as i64);
    let mut ports = Vec::new();
    for g in gadgets {
        buses.extend(g.buses);
        lines.extend(g.lines);
        target += g.expected_inner_opt;
        ports.push(g.port);
    }
    Ok(ExactCoverNetwork {
        net: Network::new(buses, lines),
        target,
        core_lines,
        ports,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ReductionCheck {
    /// Best flow found; the search stops early once the target is decided.
    pub mff: f64,
    pub target: f64,
    pub reaches_target: bool,
    pub termination: Termination,
    /// `false` when the solver stopped before proving its answer.
    pub conclusive: bool,
}

/// Decides `MFF >= target` with an exact MIP that stops once the answer is
/// known.
pub fn check_reduction(inst: &ExactCoverInstance, builder: &dyn ChoiceBuilder) -> Result<ReductionCheck> {
    check_reduction_with(inst, builder, &MffConfig::exact())
}

pub fn check_reduction_with(
    inst: &ExactCoverInstance,
    builder: &dyn ChoiceBuilder,
    config: &MffConfig,
) -> Result<ReductionCheck> {
    let built = build_exact_cover_network(inst, builder)?;
    let target = to_f64(built.target);
    let config = MffConfig {
        target: Some(target),
        ..config.clone()
    };
    let r = solve_mff(&built.net, &config, None)?;
    let reaches_target = r.objective >= target - ATTAIN_TOL;
    let conclusive = reaches_target || r.best_bound < target - ATTAIN_TOL;
    Ok(ReductionCheck {
        mff: r.objective,
        target,
        reaches_target,
        termination: r.termination,
        conclusive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn int(n: i64) -> Rational64 {
        Rational64::from_integer(n)
    }

    #[test]
    fn spec_values_are_exact() {
        let s = ChoiceSpec::tie_line(int(1));
        assert_eq!(s.inner_opt, ratio(61, 10));
        assert_eq!(s.generation_at(int(1)), Some(ratio(61, 10)));
        assert_eq!(s.generation_at(int(0)), Some(ratio(61, 10)));
        assert!(s.generation_at(ratio(1, 2)).unwrap() < s.inner_opt);
        assert_eq!(s.generation_at(ratio(3, 2)), None);
        assert_eq!(ChoiceSpec::tie_line(int(3)).inner_opt, ratio(183, 10));
    }

    #[test]
    fn default_builder_verifies() {
        for x in [int(1), int(3)] {
            let c = build_choice_network(x, &TieLineChoice).unwrap();
            let r = verify_choice(&c.net, &c.port, to_f64(x)).unwrap();
            assert!(r.passed, "{r}");
            assert!((r.optimum - to_f64(c.expected_inner_opt)).abs() < 1e-6);
            assert_eq!(r.optimal_exports.len(), 2);
        }
    }

    #[test]
    fn sweep_matches_closed_form() {
        let x = int(1);
        let c = build_choice_network(x, &TieLineChoice).unwrap();
        let spec = ChoiceSpec::tie_line(x);
        let r = verify_choice(&c.net, &c.port, 1.0).unwrap();
        for p in r.points.iter().filter(|p| p.export >= 0.0) {
            let w = Rational64::approximate_float(p.export).unwrap();
            let want = spec.generation_at(w).map(to_f64);
            match (p.generation, want) {
                (Some(g), Some(w)) => assert!((g - w).abs() < 1e-6, "{} {g} {w}", p.export),
                (None, None) => {}
                other => panic!("export {}: {other:?}", p.export),
            }
        }
    }

    #[test]
    fn negative_controls_fail() {
        for b in [&PlainGeneratorChoice as &dyn ChoiceBuilder, &MonotoneChoice] {
            let c = build_choice_network(int(1), b).unwrap();
            let r = verify_choice(&c.net, &c.port, 1.0).unwrap();
            assert!(!r.passed, "{} {r}", b.name());
            assert!(build_verified_choice_network(int(1), b).is_err());
        }
    }

    #[test]
    fn targets() {
        let one = ExactCoverInstance::new(&["a", "b", "c"], &[["a", "b", "c"]]).unwrap();
        let t = build_exact_cover_network(&one, &TieLineChoice).unwrap();
        assert_eq!(t.target, ratio(243, 10));
        let t = build_exact_cover_network(&ExactCoverInstance::example(), &TieLineChoice).unwrap();
        assert_eq!(t.target, ratio(639, 10));
        assert_eq!(t.core_lines, 1 + 3 * 3 + 2 * 6);
        let empty = ExactCoverInstance::new(&[], &[]).unwrap();
        let t = build_exact_cover_network(&empty, &TieLineChoice).unwrap();
        assert_eq!(t.target, int(3));
        assert_eq!(t.net.lines.len(), 1);
    }

    #[test]
    fn brute_force_cover() {
        assert_eq!(ExactCoverInstance::example().brute_force(), Some(vec![0, 2]));
        let bad = ExactCoverInstance::new(&["a", "b", "c", "d"], &[["a", "b", "c"]]).unwrap();
        assert_eq!(bad.brute_force(), None);
        assert!(ExactCoverInstance::new(&["a"], &[["a", "a", "b"]]).is_err());
    }

    #[test]
    fn reduction_small_cases() {
        let yes = ExactCoverInstance::new(&["a", "b", "c"], &[["a", "b", "c"]]).unwrap();
        let r = check_reduction(&yes, &TieLineChoice).unwrap();
        assert!(r.reaches_target && r.conclusive, "{r:?}");
        let no = ExactCoverInstance::new(&["a", "b", "c", "d"], &[["a", "b", "c"]]).unwrap();
        let r = check_reduction(&no, &TieLineChoice).unwrap();
        assert!(!r.reaches_target && r.conclusive, "{r:?}");
        let r = check_reduction(&ExactCoverInstance::new(&[], &[]).unwrap(), &TieLineChoice).unwrap();
        assert!((r.mff - 3.0).abs() < 1e-7 && r.reaches_target);
    }
}

//! Acceptance suite. Prints one line per criterion and exits non-zero if a
//! gating criterion fails.
//!
//! Criterion 5 needs the Polish 2736-bus summer-peak case
//! (`case2736sp.m` from MATPOWER). It is looked up in `$FACTSFLOW_CASE2736SP`
//! and then `tests/data/case2736sp.m`; without it the criterion is skipped.
//! Its scenario spot-check runs 2 scenarios with a 10 s MFF box by default;
//! `FACTSFLOW_ACCEPTANCE_FULL=1` runs 5 scenarios with 600 s each.
//!
//! Criterion 6 checks one exact-cover instance per isomorphism class by
//! default and every labelled instance under `FACTSFLOW_ACCEPTANCE_FULL=1`.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use factsflow::case_io::{self, IngestOptions, ParallelPolicy, ScenarioSpec, TrialConfig};
use factsflow::fixtures;
use factsflow::gadgets::{self, ExactCoverInstance, TieLineChoice};
use factsflow::im::{multi_start_im, ImResult, Phase, DEFAULT_MAX_ITER, DEFAULT_REL_TOL};
use factsflow::ldc::{solve_mpf, solve_mpf_with, solve_mvf};
use factsflow::lp::{LpBackend, LpOptions};
use factsflow::maxflow::{max_flow, mff_via_lemma, LemmaOutcome};
use factsflow::mip::{enumerate_signs_oracle, solve_mff, MffConfig, DEFAULT_ORACLE_LIMIT};
use factsflow::network::{LdcSolution, MaxSusceptance, Network};
use factsflow::random::{random_network, IntervalKind, RandomNetSpec};
use factsflow::validate::{validate_solution, IssueKind, DEFAULT_TOL};
use itertools::Itertools;
use rayon::prelude::*;

const TOL: f64 = 1e-6;

enum Verdict {
    Pass,
    Fail,
    /// Reported but not gating.
    Deviation,
    Skipped,
}

struct Outcome {
    id: &'static str,
    verdict: Verdict,
    detail: String,
}

fn outcome(id: &'static str, ok: bool, detail: String) -> Outcome {
    Outcome {
        id,
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        detail,
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL
}

/// Instance pool shared by criteria 2-4.
struct Instance {
    net: Network,
    mff: f64,
    mf: f64,
}

fn main() {
    let start = Instant::now();
    let mut results = Vec::new();
    let mut timed = |f: &mut dyn FnMut() -> Vec<Outcome>| {
        let t = Instant::now();
        let out = f();
        let secs = t.elapsed().as_secs_f64();
        results.extend(out.into_iter().map(|mut o| {
            o.detail = format!("{} [{secs:.1} s]", o.detail);
            o
        }));
    };
    timed(&mut || vec![criterion_1()]);
    let mut mixed = Vec::new();
    timed(&mut || {
        let (c, pool) = criterion_2();
        mixed = pool;
        vec![c]
    });
    let mut special = Vec::new();
    timed(&mut || {
        let (c, pool) = criterion_3();
        special = pool;
        vec![c]
    });
    timed(&mut || vec![criterion_4(mixed.iter().chain(&special))]);
    timed(&mut criterion_5);
    timed(&mut || vec![criterion_6()]);
    timed(&mut || vec![criterion_7(&mixed)]);

    let mut failed = false;
    for r in &results {
        let tag = match r.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                failed = true;
                "FAIL"
            }
            Verdict::Deviation => "DEVIATION",
            Verdict::Skipped => "SKIPPED",
        };
        println!("criterion {:<3} {:<9} {}", r.id, tag, r.detail);
    }
    println!("acceptance finished in {:.1} s", start.elapsed().as_secs_f64());
    if failed {
        std::process::exit(1);
    }
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let tri = fixtures::tri();
    let tri_f = fixtures::tri_f();
    let mut notes = Vec::new();
    let mpf = solve_mpf(&tri_f, &[1.0; 3]).unwrap().value;
    let mpf_tri = solve_mpf(&tri, &[1.0; 3]).unwrap().value;
    let mff = solve_mff(&tri_f, &MffConfig::exact(), None).unwrap().objective;
    let mf = max_flow(&tri_f).unwrap().value;
    let oracle = enumerate_signs_oracle(&tri_f, DEFAULT_ORACLE_LIMIT).unwrap().value;
    let ms = multi_start_im(&tri_f, DEFAULT_REL_TOL, DEFAULT_MAX_ITER).unwrap();
    let mut ok = close(mpf, 12.0) && close(mpf_tri, 12.0) && close(mff, 14.0) && close(mf, 14.0) && close(oracle, 14.0);
    for (start, run) in &ms.runs {
        let good = close(run.value, 14.0) && run.trace.iterations <= 3;
        ok &= good;
        notes.push(format!("{start:?}:{:.6}/{}it", run.value, run.trace.iterations));
    }
    let elapsed = t.elapsed();
    ok &= elapsed < Duration::from_secs(1);
    outcome(
        "1",
        ok,
        format!(
            "TRI MPF {mpf_tri:.6}, TRI-F MPF {mpf:.6}, MFF {mff:.6}, MF {mf:.6}, oracle {oracle:.6}, IM [{}], {:.3} s",
            notes.join(" "),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> (Outcome, Vec<Instance>) {
    let t = Instant::now();
    let spec = RandomNetSpec::small_mixed();
    let rows: Vec<(Instance, f64)> = (0..300u64)
        .into_par_iter()
        .map(|seed| {
            let net = random_network(&spec, 1000 + seed);
            let oracle = enumerate_signs_oracle(&net, DEFAULT_ORACLE_LIMIT).unwrap().value;
            let mff = solve_mff(&net, &MffConfig::exact(), None).unwrap().objective;
            let mf = max_flow(&net).unwrap().value;
            ((Instance { net, mff: oracle, mf }), (mff - oracle).abs())
        })
        .collect();
    let worst = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let bad = rows.iter().filter(|r| r.1 > TOL).count();
    let elapsed = t.elapsed();
    let ok = bad == 0 && elapsed < Duration::from_secs(300);
    (
        outcome(
            "2",
            ok,
            format!(
                "300 random nets: {bad} mismatches, worst |MFF - oracle| {worst:.2e}, {:.1} s",
                elapsed.as_secs_f64()
            ),
        ),
        rows.into_iter().map(|r| r.0).collect(),
    )
}

fn criterion_3() -> (Outcome, Vec<Instance>) {
    let families = [
        (
            "trees",
            200u64,
            RandomNetSpec {
                min_buses: 2,
                max_buses: 30,
                tree: true,
                ..RandomNetSpec::small_mixed()
            },
        ),
        (
            "[0,t] meshes",
            200,
            RandomNetSpec {
                min_buses: 4,
                max_buses: 12,
                max_lines: 20,
                tree: false,
                intervals: IntervalKind::ZeroLower,
                facts_prob: 1.0,
            },
        ),
        (
            "unbounded",
            100,
            RandomNetSpec {
                min_buses: 4,
                max_buses: 12,
                max_lines: 20,
                tree: false,
                intervals: IntervalKind::Unbounded,
                facts_prob: 1.0,
            },
        ),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    let mut pool = Vec::new();
    for (k, (name, count, spec)) in families.into_iter().enumerate() {
        let rows: Vec<(Option<Instance>, bool, bool)> = (0..count)
            .into_par_iter()
            .map(|i| {
                let net = random_network(&spec, 50_000 * (k as u64 + 1) + i);
                let mf = max_flow(&net).unwrap().value;
                match mff_via_lemma(&net).unwrap() {
                    LemmaOutcome::Certified { value, solution, .. } => {
                        let valid = validate_solution(&net, &solution, DEFAULT_TOL).is_empty();
                        let good = valid && close(value, mf) && close(solution.objective(), mf);
                        (Some(Instance { net, mff: mf, mf }), good, false)
                    }
                    LemmaOutcome::LiftFailed { .. } => (None, false, true),
                    LemmaOutcome::NotApplicable => (None, false, false),
                }
            })
            .collect();
        let certified = rows.iter().filter(|r| r.1).count();
        let reported = rows.iter().filter(|r| r.2).count();
        // Unbounded nets may end in an explicit lift-failure report.
        let family_ok = if name == "unbounded" {
            certified + reported == count as usize
        } else {
            certified == count as usize
        };
        ok &= family_ok;
        notes.push(format!("{name} {certified}/{count} certified, {reported} lift reports"));
        pool.extend(rows.into_iter().filter(|r| r.1).filter_map(|r| r.0));
    }
    (outcome("3", ok, notes.join("; ")), pool)
}

/// `(interleaved nondecreasing, iterations bounded, sandwich)` for one run.
fn im_checks(run: &ImResult, inst: &Instance) -> (bool, bool, bool) {
    let steps = &run.trace.steps;
    let mono = steps.windows(2).all(|w| w[1].value >= w[0].value - 1e-9);
    let phases = steps
        .iter()
        .enumerate()
        .all(|(i, s)| s.phase == if i % 2 == 0 { Phase::Mpf } else { Phase::Mvf });
    let iters = run.trace.iterations <= DEFAULT_MAX_ITER;
    let mpf = steps[0].value;
    let sandwich = mpf <= run.value + TOL && run.value <= inst.mff + TOL && inst.mff <= inst.mf + TOL;
    (mono && phases, iters, sandwich)
}

fn criterion_4<'a>(pool: impl Iterator<Item = &'a Instance>) -> Outcome {
    let pool: Vec<&Instance> = pool.collect();
    let rows: Vec<(bool, bool, bool, bool)> = pool
        .par_iter()
        .map(|inst| {
            let ms = multi_start_im(&inst.net, DEFAULT_REL_TOL, DEFAULT_MAX_ITER).unwrap();
            let mut acc = (true, true, true, true);
            for (_, run) in &ms.runs {
                let (m, i, s) = im_checks(run, inst);
                acc.0 &= m;
                acc.1 &= i;
                acc.2 &= s;
                acc.3 &= validate_solution(&inst.net, &run.solution, DEFAULT_TOL).is_empty();
            }
            acc
        })
        .collect();
    let count = |f: fn(&(bool, bool, bool, bool)) -> bool| rows.iter().filter(|r| !f(r)).count();
    let (mono, iters, sandwich, valid) = (count(|r| r.0), count(|r| r.1), count(|r| r.2), count(|r| r.3));
    outcome(
        "4",
        mono + iters + sandwich + valid == 0,
        format!(
            "{} instances x 3 starts: {mono} monotonicity, {iters} iteration, {sandwich} sandwich, {valid} validity failures",
            rows.len()
        ),
    )
}

fn full_run() -> bool {
    std::env::var("FACTSFLOW_ACCEPTANCE_FULL").is_ok_and(|v| v == "1")
}

fn case_path() -> Option<PathBuf> {
    if let Ok(p) = std::env::var("FACTSFLOW_CASE2736SP") {
        return Some(PathBuf::from(p));
    }
    let local = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/case2736sp.m");
    local.exists().then_some(local)
}

fn criterion_5() -> Vec<Outcome> {
    let Some(path) = case_path() else {
        return ["5a", "5b", "5c"]
            .into_iter()
            .map(|id| Outcome {
                id,
                verdict: Verdict::Skipped,
                detail: "case2736sp.m not found (set FACTSFLOW_CASE2736SP)".into(),
            })
            .collect();
    };
    let opts = IngestOptions {
        parallel: ParallelPolicy::Merge,
        ..IngestOptions::default()
    };
    let base = case_io::load_case(&path, &opts).unwrap();
    let lp = LpOptions::with_backend(LpBackend::Interior);
    let mut out = Vec::new();
    for (id, g, l, reference) in [("5a", 1.5, 1.5, 270.56), ("5b", 2.375, 2.75, 419.19)] {
        let net = case_io::apply_congestion_factors(&base, g, l).unwrap();
        let t = Instant::now();
        let mpf = solve_mpf_with(&net, &net.lower_susceptances(), &lp).unwrap();
        let secs = t.elapsed().as_secs_f64();
        let rel = (mpf.value - reference) / reference;
        let valid = validate_solution(&net, &mpf.solution, DEFAULT_TOL).is_empty();
        let within = rel.abs() <= 0.01;
        let detail = format!(
            "MPF at (gen {g}, load {l}) = {:.3} vs reference {reference} ({:+.2}%), {secs:.2} s, valid {valid}",
            mpf.value,
            100.0 * rel
        );
        let verdict = if !(secs < 120.0 && valid) {
            Verdict::Fail
        } else if within {
            Verdict::Pass
        } else {
            Verdict::Deviation
        };
        out.push(Outcome { id, verdict, detail });
    }

    let full = full_run();
    let (scenarios, boxed) = if full { (5, 600) } else { (2, 10) };
    let cfg = TrialConfig {
        mff: MffConfig {
            time_limit: Some(Duration::from_secs(boxed)),
            ..MffConfig::default()
        },
    };
    let spec = ScenarioSpec {
        seed: 2736,
        lines_removed: 0,
        facts_fraction: 0.3,
        interval_pct: 30.0,
        gen_factor: 2.375,
        load_factor: 2.75,
    };
    let mut ok = true;
    let mut notes = Vec::new();
    for trial in 0..scenarios {
        let r = case_io::run_trial(&base, &spec.for_trial(trial), &format!("s{trial}"), &cfg).unwrap();
        ok &= r.im > r.mpf + TOL && r.mff >= r.im - TOL && r.mff <= r.mf + TOL;
        notes.push(format!("{:.3}<{:.3}<={:.3}<={:.3}", r.mpf, r.im, r.mff, r.mf));
    }
    out.push(outcome(
        "5c",
        ok,
        format!(
            "{scenarios} scenarios (30% FACTS, +-30%, {boxed} s MFF box), MPF<IM<=MFF<=MF: {}",
            notes.join(" ")
        ),
    ));
    out
}

fn three_subsets(n: usize) -> Vec<[usize; 3]> {
    let mut v = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                v.push([a, b, c]);
            }
        }
    }
    v
}

/// Smallest sorted set list over all relabellings of the `m` elements.
fn canonical(m: usize, sets: &[[usize; 3]]) -> Vec<[usize; 3]> {
    (0..m)
        .permutations(m)
        .map(|perm| {
            let mut v: Vec<[usize; 3]> = sets
                .iter()
                .map(|t| {
                    let mut r = t.map(|e| perm[e]);
                    r.sort_unstable();
                    r
                })
                .collect();
            v.sort_unstable();
            v
        })
        .min()
        .unwrap_or_default()
}

fn criterion_6() -> Outcome {
    let x = num_rational::Rational64::from_integer(1);
    let built = gadgets::build_choice_network(x, &TieLineChoice).unwrap();
    let report = gadgets::verify_choice(&built.net, &built.port, 1.0).unwrap();
    if !report.passed {
        return Outcome {
            id: "6",
            verdict: Verdict::Fail,
            detail: "default builder fails verify_choice".into(),
        };
    }
    let names = ["a", "b", "c", "d", "e", "f"];
    let full = full_run();
    let mut labelled = 0;
    let mut seen = std::collections::HashSet::new();
    let mut instances = Vec::new();
    for m in 0..=6 {
        let subsets = three_subsets(m);
        let k = subsets.len();
        let mut picks: Vec<Vec<usize>> = vec![vec![]];
        picks.extend((0..k).map(|i| vec![i]));
        for i in 0..k {
            for j in i + 1..k {
                picks.push(vec![i, j]);
                for l in j + 1..k {
                    picks.push(vec![i, j, l]);
                }
            }
        }
        for pick in picks {
            labelled += 1;
            let triples: Vec<[usize; 3]> = pick.iter().map(|&i| subsets[i]).collect();
            if !full && !seen.insert((m, canonical(m, &triples))) {
                continue;
            }
            let sets: Vec<[&str; 3]> = triples.iter().map(|t| t.map(|e| names[e])).collect();
            instances.push(ExactCoverInstance::new(&names[..m], &sets).unwrap());
        }
    }
    let rows: Vec<(bool, bool, bool)> = instances
        .par_iter()
        .map(|inst| {
            let r = gadgets::check_reduction(inst, &TieLineChoice).unwrap();
            let truth = inst.brute_force().is_some();
            (r.reaches_target == truth, r.conclusive, truth)
        })
        .collect();
    let disagree = rows.iter().filter(|r| !r.0 || !r.1).count();
    let solvable = rows.iter().filter(|r| r.2).count();
    let targets_exact = gadgets::build_exact_cover_network(&ExactCoverInstance::example(), &TieLineChoice)
        .unwrap()
        .target
        == num_rational::Rational64::new(639, 10);
    outcome(
        "6",
        disagree == 0 && solvable > 0 && solvable < rows.len() && targets_exact,
        format!(
            "{} instances checked ({}) of {labelled} labelled with |M|<=6, |S|<=3: {solvable} solvable, {disagree} disagreements; example target 63.9 exact: {targets_exact}",
            rows.len(),
            if full { "all" } else { "one per isomorphism class" }
        ),
    )
}

fn mutations(net: &Network, sol: &LdcSolution) -> Vec<(&'static str, LdcSolution)> {
    let mut out = Vec::new();
    let topo = net.topology().unwrap();
    let busiest = (0..net.lines.len())
        .max_by(|&a, &b| sol.injections.flow[a].abs().total_cmp(&sol.injections.flow[b].abs()))
        .unwrap();

    let mut m = sol.clone();
    let gen_bus = (0..net.buses.len())
        .find(|&b| topo.kinds[b] == factsflow::network::BusKind::Generator)
        .unwrap();
    m.injections.gen[gen_bus] += 0.5;
    out.push(("kirchhoff", m));

    let mut m = sol.clone();
    let (a, _) = topo.ends[busiest];
    m.theta[a] += 0.5;
    out.push(("power law", m));

    let mut m = sol.clone();
    let line = &net.lines[busiest];
    m.susceptance[busiest] = match line.s_max {
        MaxSusceptance::Finite(t) => t + 0.5,
        MaxSusceptance::Unbounded => line.s_min - 0.5,
    };
    out.push(("interval", m));

    // Scaling everything keeps balance, power law and susceptances intact.
    let peak = (0..net.lines.len())
        .map(|i| sol.injections.flow[i].abs() / net.lines[i].capacity.max(1e-12))
        .fold(0.0, f64::max);
    let k = if peak > 1e-9 { 1.5 / peak } else { 0.0 };
    let mut m = sol.clone();
    if k > 0.0 {
        m.theta.iter_mut().for_each(|v| *v *= k);
        m.injections.flow.iter_mut().for_each(|v| *v *= k);
        m.injections.gen.iter_mut().for_each(|v| *v *= k);
        m.injections.load.iter_mut().for_each(|v| *v *= k);
        out.push(("capacity", m));
    }
    out
}

fn criterion_7(pool: &[Instance]) -> Outcome {
    let mut total = 0;
    let mut caught = 0;
    let mut by_kind = std::collections::BTreeMap::new();
    for inst in pool {
        let sol = solve_mvf(
            &inst.net,
            &enumerate_signs_oracle(&inst.net, DEFAULT_ORACLE_LIMIT).unwrap().pattern,
        )
        .unwrap()
        .solution;
        assert!(validate_solution(&inst.net, &sol, DEFAULT_TOL).is_empty());
        for (what, m) in mutations(&inst.net, &sol) {
            let report = validate_solution(&inst.net, &m, DEFAULT_TOL);
            let hit = report.errors().any(|i| {
                matches!(
                    (&i.kind, what),
                    (IssueKind::Kirchhoff { .. }, "kirchhoff")
                        | (IssueKind::PowerLaw { .. }, "power law")
                        | (IssueKind::SusceptanceOutOfRange { .. }, "interval")
                        | (IssueKind::CapacityExceeded { .. }, "capacity")
                )
            });
            total += 1;
            caught += hit as usize;
            let e = by_kind.entry(what).or_insert((0, 0));
            e.0 += hit as usize;
            e.1 += 1;
        }
    }
    let kinds: Vec<String> = by_kind.iter().map(|(k, (c, t))| format!("{k} {c}/{t}")).collect();
    outcome(
        "7",
        caught == total && by_kind.len() == 4,
        format!("{caught}/{total} mutations flagged ({})", kinds.join(", ")),
    )
}

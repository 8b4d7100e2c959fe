//! The iterative method: alternate MPF (susceptances fixed, read off the
//! angle signs) and MVF (signs fixed, read off the susceptances) until the
//! value stops improving.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ldc::{extract_signs, solve_mpf_with, solve_mvf_with, SignPattern};
use crate::lp::LpOptions;
use crate::network::{LdcSolution, Network};

pub const DEFAULT_REL_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 1000;

const ABS_SLACK: f64 = 1e-9;
const TIE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Phase {
    Mpf,
    Mvf,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ImStep {
    pub phase: Phase,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ImTrace {
    pub steps: Vec<ImStep>,
    pub pattern: SignPattern,
    pub susceptance: Vec<f64>,
    /// MPF/MVF rounds performed.
    pub iterations: usize,
    #[serde(rename = "wall_time_s", serialize_with = "secs")]
    pub wall_time: Duration,
    pub converged: bool,
}

fn secs<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

#[derive(Clone, Debug)]
pub struct ImResult {
    pub value: f64,
    pub solution: LdcSolution,
    pub trace: ImTrace,
}

pub fn solve_im(net: &Network, s0: &[f64], rel_tol: f64, max_iter: usize) -> Result<ImResult> {
    solve_im_with(net, s0, rel_tol, max_iter, &LpOptions::default())
}

pub fn solve_im_with(net: &Network, s0: &[f64], rel_tol: f64, max_iter: usize, opts: &LpOptions) -> Result<ImResult> {
    if rel_tol.is_nan() || rel_tol < 0.0 {
        return Err(Error::Input(format!("relative tolerance {rel_tol} is invalid")));
    }
    if max_iter == 0 {
        return Err(Error::Input("max_iter must be positive".into()));
    }
    let start = Instant::now();
    let mut s = s0.to_vec();
    let mut steps = Vec::new();
    let mut best: Option<(f64, LdcSolution, SignPattern)> = None;
    let mut converged = false;
    let mut iterations = 0;
    let mut keep = |value: f64, sol: &LdcSolution, pattern: &SignPattern| {
        if best.as_ref().map_or(true, |(v, _, _)| value > *v) {
            best = Some((value, sol.clone(), pattern.clone()));
        }
    };

    while iterations < max_iter {
        iterations += 1;
        let mpf = solve_mpf_with(net, &s, opts)?;
        let d = extract_signs(net, &mpf.solution.theta, TIE_TOL)?;
        steps.push(ImStep {
            phase: Phase::Mpf,
            value: mpf.value,
        });
        keep(mpf.value, &mpf.solution, &d);

        let mvf = solve_mvf_with(net, &d, opts)?;
        steps.push(ImStep {
            phase: Phase::Mvf,
            value: mvf.value,
        });
        keep(mvf.value, &mvf.solution, &d);
        log::debug!("IM round {iterations}: MPF {:.9} MVF {:.9}", mpf.value, mvf.value);

        if mvf.value <= mpf.value * (1.0 + rel_tol) + ABS_SLACK {
            converged = true;
            break;
        }
        s = net
            .lines
            .iter()
            .zip(&mvf.solution.susceptance)
            .map(|(l, &v)| l.clamp(v))
            .collect();
    }

    let (value, solution, pattern) = best.expect("at least one round ran");
    Ok(ImResult {
        value,
        trace: ImTrace {
            steps,
            pattern,
            susceptance: solution.susceptance.clone(),
            iterations,
            wall_time: start.elapsed(),
            converged,
        },
        solution,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPoint {
    Lower,
    Upper,
    Mid,
    /// Uniform within each interval, seeded.
    Random(u64),
}

/// Initial susceptances for a start. Unbounded intervals use `s_min + 1`
/// as their upper end.
pub fn start_susceptances(net: &Network, start: StartPoint) -> Vec<f64> {
    let upper = |l: &crate::network::Line| l.s_max.finite().unwrap_or(l.s_min + 1.0);
    match start {
        StartPoint::Lower => net.lines.iter().map(|l| l.s_min).collect(),
        StartPoint::Upper => net.lines.iter().map(upper).collect(),
        StartPoint::Mid => net.lines.iter().map(|l| l.midpoint()).collect(),
        StartPoint::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            net.lines
                .iter()
                .map(|l| {
                    let hi = upper(l);
                    if hi > l.s_min {
                        rng.gen_range(l.s_min..=hi)
                    } else {
                        l.s_min
                    }
                })
                .collect()
        }
    }
}

#[derive(Clone, Debug)]
pub struct MultiStartResult {
    pub best: ImResult,
    pub best_start: StartPoint,
    pub runs: Vec<(StartPoint, ImResult)>,
}

/// Lower, upper and midpoint starts run concurrently; the best value wins,
/// earlier starts winning ties.
pub fn multi_start_im(net: &Network, rel_tol: f64, max_iter: usize) -> Result<MultiStartResult> {
    multi_start_im_from(
        net,
        &[StartPoint::Lower, StartPoint::Upper, StartPoint::Mid],
        rel_tol,
        max_iter,
    )
}

pub fn multi_start_im_from(
    net: &Network,
    starts: &[StartPoint],
    rel_tol: f64,
    max_iter: usize,
) -> Result<MultiStartResult> {
    if starts.is_empty() {
        return Err(Error::Input("no start points given".into()));
    }
    let runs: Vec<(StartPoint, ImResult)> = starts
        .par_iter()
        .map(|&st| solve_im(net, &start_susceptances(net, st), rel_tol, max_iter).map(|r| (st, r)))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, (_, r)) in runs.iter().enumerate() {
        if r.value > runs[best].1.value {
            best = i;
        }
    }
    Ok(MultiStartResult {
        best: runs[best].1.clone(),
        best_start: runs[best].0,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::validate::{validate_solution, DEFAULT_TOL};

    #[test]
    fn tri_f_from_lower_bounds() {
        let net = fixtures::tri_f();
        let r = solve_im(&net, &[1.0, 1.0, 1.0], DEFAULT_REL_TOL, DEFAULT_MAX_ITER).unwrap();
        let values: Vec<f64> = r.trace.steps.iter().map(|s| s.value).collect();
        assert_eq!(values.len(), 4);
        for (got, want) in values.iter().zip([12.0, 14.0, 14.0, 14.0]) {
            assert!((got - want).abs() < 1e-7, "{values:?}");
        }
        assert_eq!(r.trace.iterations, 2);
        assert!(r.trace.converged);
        assert!((r.value - 14.0).abs() < 1e-7);
        assert!(validate_solution(&net, &r.solution, DEFAULT_TOL).is_empty());
    }

    #[test]
    fn fixed_network_converges_at_once() {
        let net = fixtures::tri();
        let r = solve_im(&net, &[1.0; 3], DEFAULT_REL_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(r.trace.iterations, 1);
        assert!((r.value - 12.0).abs() < 1e-7);
    }

    #[test]
    fn multi_start_picks_best() {
        let net = fixtures::tri_f();
        let m = multi_start_im(&net, DEFAULT_REL_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(m.runs.len(), 3);
        assert!((m.best.value - 14.0).abs() < 1e-7);
        for (_, r) in &m.runs {
            assert!(m.best.value >= r.value);
        }
    }

    #[test]
    fn starts_respect_intervals() {
        let net = fixtures::tri_f();
        for st in [
            StartPoint::Lower,
            StartPoint::Upper,
            StartPoint::Mid,
            StartPoint::Random(7),
        ] {
            let s = start_susceptances(&net, st);
            assert!(net.lines.iter().zip(&s).all(|(l, &v)| l.admits(v, 0.0)));
        }
        assert_eq!(start_susceptances(&net, StartPoint::Upper)[0], 1.25);
        assert_eq!(
            start_susceptances(&net, StartPoint::Random(3)),
            start_susceptances(&net, StartPoint::Random(3))
        );
    }

    #[test]
    fn trace_serializes() {
        let r = solve_im(&fixtures::tri_f(), &[1.0; 3], DEFAULT_REL_TOL, 10).unwrap();
        let json = serde_json::to_value(&r.trace).unwrap();
        assert_eq!(json["steps"][0]["phase"], "MPF");
        assert!(json["wall_time_s"].is_number());
    }

    #[test]
    fn bad_arguments() {
        let net = fixtures::tri_f();
        assert!(solve_im(&net, &[1.0; 3], -1.0, 5).is_err());
        assert!(solve_im(&net, &[1.0; 3], 0.0, 0).is_err());
        assert!(solve_im(&net, &[2.0, 1.0, 1.0], 0.0, 5).is_err());
    }
}

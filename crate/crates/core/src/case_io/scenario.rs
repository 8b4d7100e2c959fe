//! Seeded scenario variants of an ingested network and the
//! MPF / multi-start IM / MFF pipeline run on each of them.
//!
//! Randomness comes from ChaCha8 seeded with a 64-bit value. A base seed is
//! fanned out to trials and to the independent choices inside a trial with
//! the SplitMix64 finaliser, so every trial can be reproduced on its own.

use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::im::{multi_start_im, DEFAULT_MAX_ITER, DEFAULT_REL_TOL};
use crate::ldc::solve_mpf;
use crate::maxflow::max_flow;
use crate::mip::{solve_mff, MffConfig};
use crate::network::{LineRole, MaxSusceptance, Network};

/// SplitMix64 output for `seed` after `stream + 1` steps.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const REMOVAL_STREAM: u64 = 0;
const FACTS_STREAM: u64 = 1;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn branch_indices(net: &Network) -> Vec<usize> {
    (0..net.lines.len())
        .filter(|&i| !net.lines[i].role.is_boundary())
        .collect()
}

/// Multiplies generator boundary capacities by `gen_factor` and load
/// boundary capacities by `load_factor`.
pub fn apply_congestion_factors(net: &Network, gen_factor: f64, load_factor: f64) -> Result<Network> {
    for f in [gen_factor, load_factor] {
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::Input(format!("congestion factor must be positive, got {f}")));
        }
    }
    if !net.has_boundary_lines() {
        return Err(Error::Input("network has no boundary lines to scale".into()));
    }
    let mut out = net.clone();
    for line in &mut out.lines {
        match line.role {
            LineRole::GenBoundary => line.capacity *= gen_factor,
            LineRole::LoadBoundary => line.capacity *= load_factor,
            LineRole::Branch => {}
        }
    }
    Ok(out)
}

/// Removes `k` distinct non-boundary lines chosen uniformly at random.
pub fn remove_random_lines(net: &Network, k: usize, seed: u64) -> Result<Network> {
    let branches = branch_indices(net);
    if k > branches.len() {
        return Err(Error::Input(format!(
            "cannot remove {k} of {} non-boundary lines",
            branches.len()
        )));
    }
    let mut drop = vec![false; net.lines.len()];
    for j in sample(&mut rng(seed), branches.len(), k) {
        drop[branches[j]] = true;
    }
    let mut out = net.clone();
    let mut i = 0;
    out.lines.retain(|_| {
        i += 1;
        !drop[i - 1]
    });
    Ok(out)
}

/// Turns `floor(fraction * branches)` randomly chosen fixed branches into
/// FACTS lines with interval `s0 * (1 -/+ interval_pct / 100)`, floored at 0.
pub fn assign_facts(net: &Network, fraction: f64, interval_pct: f64, seed: u64) -> Result<Network> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Input(format!("FACTS fraction {fraction} is outside [0, 1]")));
    }
    if !(interval_pct >= 0.0 && interval_pct.is_finite()) {
        return Err(Error::Input(format!("interval percentage {interval_pct} is invalid")));
    }
    let branches = branch_indices(net);
    let count = (fraction * branches.len() as f64 + 1e-9).floor() as usize;
    let mut out = net.clone();
    let p = interval_pct / 100.0;
    for j in sample(&mut rng(seed), branches.len(), count) {
        let line = &mut out.lines[branches[j]];
        if line.is_facts() {
            return Err(Error::Input(format!("line {} already has a FACTS device", branches[j])));
        }
        let s0 = line.s_min;
        line.s_min = (s0 * (1.0 - p)).max(0.0);
        line.s_max = MaxSusceptance::Finite(s0 * (1.0 + p));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub lines_removed: usize,
    pub facts_fraction: f64,
    pub interval_pct: f64,
    pub gen_factor: f64,
    pub load_factor: f64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.facts_fraction) {
            return Err(Error::Input("facts_fraction must lie in [0, 1]".into()));
        }
        if self.interval_pct.is_nan() || self.interval_pct < 0.0 {
            return Err(Error::Input("interval_pct must be nonnegative".into()));
        }
        if !(self.gen_factor > 0.0 && self.load_factor > 0.0) {
            return Err(Error::Input("congestion factors must be positive".into()));
        }
        Ok(())
    }

    /// The same scenario for trial `trial`.
    pub fn for_trial(&self, trial: u64) -> Self {
        ScenarioSpec {
            seed: derive_seed(self.seed, trial),
            ..self.clone()
        }
    }
}

/// A scenario network and the susceptances its lines had before FACTS
/// devices were placed.
pub struct Scenario {
    pub net: Network,
    pub nominal: Vec<f64>,
}

pub fn build_scenario(base: &Network, spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let congested = apply_congestion_factors(base, spec.gen_factor, spec.load_factor)?;
    let reduced = remove_random_lines(&congested, spec.lines_removed, derive_seed(spec.seed, REMOVAL_STREAM))?;
    let nominal = reduced.lines.iter().map(|l| l.midpoint()).collect();
    let net = assign_facts(
        &reduced,
        spec.facts_fraction,
        spec.interval_pct,
        derive_seed(spec.seed, FACTS_STREAM),
    )?;
    Ok(Scenario { net, nominal })
}

#[derive(Clone, Debug)]
pub struct TrialConfig {
    pub mff: MffConfig,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            mff: MffConfig {
                time_limit: Some(Duration::from_secs(600)),
                ..MffConfig::default()
            },
        }
    }
}

/// One row of a scenario table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub scenario: String,
    pub seed: u64,
    pub mpf: f64,
    pub im: f64,
    pub mff: f64,
    pub gap: f64,
    pub mf: f64,
    /// `100 (mff - mpf) / mpf`, absent when MPF is not positive.
    pub improvement_pct: Option<f64>,
    pub runtime_s: f64,
    pub im_calls: usize,
    pub mff_nodes: usize,
}

/// Columns that depend only on the inputs and the seed.
pub const CSV_HEADER: &str = "scenario,seed,mpf,im,mff,gap,mf,improvement_pct,im_calls,mff_nodes";
/// Appended by [`RunRecord::csv_row`] when timings are requested.
pub const CSV_TIMING_COLUMN: &str = "runtime_s";

pub fn csv_header(timings: bool) -> String {
    if timings {
        format!("{CSV_HEADER},{CSV_TIMING_COLUMN}")
    } else {
        CSV_HEADER.to_string()
    }
}

impl RunRecord {
    /// Fixed 6-decimal formatting; improvement is blank when undefined.
    pub fn csv_row(&self, timings: bool) -> String {
        let imp = self.improvement_pct.map(|v| format!("{v:.6}")).unwrap_or_default();
        let mut row = format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{}",
            self.scenario,
            self.seed,
            self.mpf,
            self.im,
            self.mff,
            self.gap,
            self.mf,
            imp,
            self.im_calls,
            self.mff_nodes
        );
        if timings {
            row.push_str(&format!(",{:.6}", self.runtime_s));
        }
        row
    }
}

pub fn improvement_pct(value: f64, mpf: f64) -> Option<f64> {
    (mpf > 0.0).then(|| 100.0 * (value - mpf) / mpf)
}

/// MPF at the nominal susceptances, best-of-three IM, then MFF warm-started
/// from the IM solution, plus MF as the ceiling.
pub fn run_trial(base: &Network, spec: &ScenarioSpec, name: &str, config: &TrialConfig) -> Result<RunRecord> {
    let start = Instant::now();
    let sc = build_scenario(base, spec)?;
    let mpf = solve_mpf(&sc.net, &sc.nominal)?;
    let im = multi_start_im(&sc.net, DEFAULT_REL_TOL, DEFAULT_MAX_ITER)?;
    let mff = solve_mff(&sc.net, &config.mff, Some(&im.best.solution))?;
    let mf = max_flow(&sc.net)?;
    Ok(RunRecord {
        scenario: name.to_string(),
        seed: spec.seed,
        mpf: mpf.value,
        im: im.best.value,
        mff: mff.objective,
        gap: mff.gap,
        mf: mf.value,
        improvement_pct: improvement_pct(mff.objective, mpf.value),
        runtime_s: start.elapsed().as_secs_f64(),
        im_calls: im.best.trace.iterations,
        mff_nodes: mff.nodes,
    })
}

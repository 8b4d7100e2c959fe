//! Seeded random networks for tests and experiments.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::network::{Bus, BusKind, Line, MaxSusceptance, Network};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntervalKind {
    /// Fixed lines mixed with FACTS lines `[s, s (1 + u)]`.
    Mixed,
    /// Every line `[0, t]`.
    ZeroLower,
    /// Every line `[s, inf)`.
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct RandomNetSpec {
    pub min_buses: usize,
    pub max_buses: usize,
    pub max_lines: usize,
    /// Only spanning-tree lines.
    pub tree: bool,
    pub intervals: IntervalKind,
    /// Share of FACTS lines under [`IntervalKind::Mixed`].
    pub facts_prob: f64,
}

impl RandomNetSpec {
    pub fn small_mixed() -> Self {
        RandomNetSpec {
            min_buses: 4,
            max_buses: 8,
            max_lines: 8,
            tree: false,
            intervals: IntervalKind::Mixed,
            facts_prob: 0.5,
        }
    }
}

/// Connected network: a random spanning tree plus extra lines up to
/// `max_lines`. Bus 0 generates, bus 1 consumes, the rest are random.
/// Susceptances and capacities are multiples of 0.25.
pub fn random_network(spec: &RandomNetSpec, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(spec.min_buses.max(2)..=spec.max_buses.max(spec.min_buses.max(2)));
    let kinds = [BusKind::Generator, BusKind::Load, BusKind::Junction];
    let buses: Vec<Bus> = (0..n)
        .map(|k| {
            let kind = match k {
                0 => BusKind::Generator,
                1 => BusKind::Load,
                _ => *kinds.choose(&mut rng).expect("non-empty"),
            };
            Bus::new(format!("b{k}"), kind)
        })
        .collect();
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for k in 1..n {
        let j = rng.gen_range(0..k);
        pairs.push((j, k));
        seen.insert((j, k));
    }
    if !spec.tree {
        let budget = spec.max_lines.max(n - 1);
        let mut tries = 0;
        while pairs.len() < budget && tries < 50 * budget {
            tries += 1;
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            let key = (a.min(b), a.max(b));
            if a != b && seen.insert(key) {
                pairs.push(key);
            }
        }
    }
    let quarter = |rng: &mut ChaCha8Rng, lo: u32, hi: u32| rng.gen_range(lo..=hi) as f64 * 0.25;
    let lines = pairs
        .into_iter()
        .map(|(a, b)| {
            let (from, to) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
            let from = buses[from].id.clone();
            let to = buses[to].id.clone();
            let cap = quarter(&mut rng, 2, 40);
            let s = quarter(&mut rng, 2, 12);
            match spec.intervals {
                IntervalKind::Mixed if rng.gen_bool(spec.facts_prob) => {
                    let t = s + quarter(&mut rng, 1, 8);
                    Line::facts(from, to, s, t, cap)
                }
                IntervalKind::Mixed => Line::fixed(from, to, s, cap),
                IntervalKind::ZeroLower => Line::facts(from, to, 0.0, s, cap),
                IntervalKind::Unbounded => {
                    let mut l = Line::unbounded(from, to, s, cap);
                    if rng.gen_bool(0.3) {
                        l.s_min = 0.0;
                    }
                    l
                }
            }
        })
        .collect();
    Network::new(buses, lines)
}

/// Replaces every upper susceptance limit by `inf`.
pub fn unbounded_copy(net: &Network) -> Network {
    let mut out = net.clone();
    for l in &mut out.lines {
        l.s_max = MaxSusceptance::Unbounded;
    }
    out
}

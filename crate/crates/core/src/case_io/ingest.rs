//! Conversion of a parsed case into a flow network.
//!
//! Original buses become junctions. A bus with generators gets an auxiliary
//! generator bus `<id>:gen` behind a boundary line whose capacity is the
//! summed in-service `Pmax`; a bus with demand, or any PQ bus, gets an
//! auxiliary load bus `<id>:load` behind a boundary line of capacity `Pd`.
//! Everything is in per unit on the case base.

use std::collections::HashMap;

use super::matpower::RawCase;
use crate::error::{Error, Result};
use crate::network::{Bus, Line, LineRole, Network};

/// What to do with several in-service branches between the same two buses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ParallelPolicy {
    #[default]
    Reject,
    /// Replace the group by one line with the summed susceptance and the
    /// largest capacity that keeps every member within its rating.
    Merge,
    /// Route every extra branch through its own midpoint junction, as two
    /// half-length lines of twice the susceptance.
    Split,
}

#[derive(Clone, Debug)]
pub struct IngestOptions {
    pub parallel: ParallelPolicy,
    /// Boundary susceptance as a multiple of the largest branch susceptance.
    pub boundary_factor: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            parallel: ParallelPolicy::Reject,
            boundary_factor: 10.0,
        }
    }
}

pub fn to_network(raw: &RawCase) -> Result<Network> {
    to_network_with(raw, &IngestOptions::default())
}

pub fn to_network_with(raw: &RawCase, opts: &IngestOptions) -> Result<Network> {
    let base = raw.base_mva;
    if !(base > 0.0 && base.is_finite()) {
        return Err(Error::Input(format!("base MVA must be positive, got {base}")));
    }
    let mut index = HashMap::new();
    for (k, b) in raw.buses.iter().enumerate() {
        if index.insert(b.id, k).is_some() {
            return Err(Error::Network(format!("bus {} listed twice", b.id)));
        }
    }
    let id = |bus: i64| bus.to_string();
    let known = |bus: i64, what: &str| {
        if index.contains_key(&bus) {
            Ok(())
        } else {
            Err(Error::Network(format!("{what} refers to unknown bus {bus}")))
        }
    };

    let mut pmax = vec![0.0; raw.buses.len()];
    let mut has_gen = vec![false; raw.buses.len()];
    for g in raw.gens.iter().filter(|g| g.in_service) {
        known(g.bus, "generator")?;
        let k = index[&g.bus];
        pmax[k] += g.pmax.max(0.0) / base;
        has_gen[k] = true;
    }
    let total_pmax: f64 = pmax.iter().sum();

    // In-service branches grouped by unordered bus pair, in file order.
    let mut groups: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut pairs: Vec<(i64, i64)> = Vec::new();
    let mut group_of: HashMap<(i64, i64), usize> = HashMap::new();
    for br in raw.branches.iter().filter(|b| b.in_service) {
        known(br.from, "branch")?;
        known(br.to, "branch")?;
        if br.from == br.to {
            return Err(Error::Network(format!(
                "branch on source line {} connects bus {} to itself",
                br.source_line, br.from
            )));
        }
        let s = 1.0 / br.x.abs();
        let cap = if br.rating > 0.0 { br.rating / base } else { total_pmax };
        let key = (br.from.min(br.to), br.from.max(br.to));
        match group_of.get(&key) {
            Some(&g) => {
                if opts.parallel == ParallelPolicy::Reject {
                    return Err(Error::Network(format!(
                        "parallel branch between buses {} and {} on source line {}",
                        br.from, br.to, br.source_line
                    )));
                }
                groups[g].push((s, cap));
            }
            None => {
                group_of.insert(key, groups.len());
                groups.push(vec![(s, cap)]);
                pairs.push((br.from, br.to));
            }
        }
    }

    let mut buses: Vec<Bus> = raw.buses.iter().map(|b| Bus::junction(id(b.id))).collect();
    let mut lines = Vec::new();
    for ((from, to), group) in pairs.iter().zip(&groups) {
        let (from, to) = (id(*from), id(*to));
        match opts.parallel {
            ParallelPolicy::Merge if group.len() > 1 => {
                let s: f64 = group.iter().map(|g| g.0).sum();
                let cap = group.iter().map(|&(si, ci)| ci * s / si).fold(f64::INFINITY, f64::min);
                lines.push(Line::fixed(from, to, s, cap));
            }
            ParallelPolicy::Split => {
                for (k, &(s, cap)) in group.iter().enumerate() {
                    if k == 0 {
                        lines.push(Line::fixed(from.clone(), to.clone(), s, cap));
                    } else {
                        let mid = format!("{from}~{to}#{k}");
                        buses.push(Bus::junction(mid.clone()));
                        lines.push(Line::fixed(from.clone(), mid.clone(), 2.0 * s, cap));
                        lines.push(Line::fixed(mid, to.clone(), 2.0 * s, cap));
                    }
                }
            }
            _ => {
                let (s, cap) = group[0];
                lines.push(Line::fixed(from, to, s, cap));
            }
        }
    }

    let s_max = lines.iter().map(|l| l.s_min).fold(0.0, f64::max);
    let s_b = if s_max > 0.0 { opts.boundary_factor * s_max } else { 1.0 };
    for (k, b) in raw.buses.iter().enumerate() {
        if has_gen[k] {
            let aux = format!("{}:gen", b.id);
            buses.push(Bus::generator(aux.clone()));
            lines.push(Line::fixed(aux, id(b.id), s_b, pmax[k]).with_role(LineRole::GenBoundary));
        }
        if b.pd > 0.0 || b.kind == 1 {
            let aux = format!("{}:load", b.id);
            buses.push(Bus::load(aux.clone()));
            lines.push(Line::fixed(id(b.id), aux, s_b, b.pd.max(0.0) / base).with_role(LineRole::LoadBoundary));
        }
    }
    Ok(Network::new(buses, lines))
}

//! Canonical JSON for networks and solutions.
//!
//! ```json
//! {
//!   "schema": 1,
//!   "buses": [{"id": "g", "kind": "generator"}, {"id": "l", "kind": "load"}],
//!   "lines": [{"from": "g", "to": "l", "s_min": 1.0, "s_max": "inf",
//!              "capacity": 5.0, "role": "branch"}]
//! }
//! ```
//!
//! `s_max` is a number or the string `"inf"`. `role` is `branch`,
//! `gen_boundary` or `load_boundary` and defaults to `branch`. Unknown
//! fields are rejected.

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Bus, InjectionSolution, LdcSolution, Line, LineRole, MaxSusceptance, Network};
use crate::validate::validate_network;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    schema: u32,
    buses: Vec<Bus>,
    lines: Vec<LineDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineDoc {
    from: String,
    to: String,
    s_min: f64,
    #[serde(serialize_with = "ser_smax", deserialize_with = "de_smax")]
    s_max: MaxSusceptance,
    capacity: f64,
    #[serde(default)]
    role: LineRole,
}

fn ser_smax<S: Serializer>(v: &MaxSusceptance, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        MaxSusceptance::Finite(x) => s.serialize_f64(*x),
        MaxSusceptance::Unbounded => s.serialize_str("inf"),
    }
}

fn de_smax<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<MaxSusceptance, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Str(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(x) => Ok(MaxSusceptance::Finite(x)),
        Raw::Str(s) if s == "inf" => Ok(MaxSusceptance::Unbounded),
        Raw::Str(s) => Err(de::Error::custom(format!(
            "s_max must be a number or \"inf\", got \"{s}\""
        ))),
    }
}

pub fn serialize_network(net: &Network) -> Result<String> {
    let doc = NetworkDoc {
        schema: SCHEMA_VERSION,
        buses: net.buses.clone(),
        lines: net
            .lines
            .iter()
            .map(|l| LineDoc {
                from: l.from.clone(),
                to: l.to.clone(),
                s_min: l.s_min,
                s_max: l.s_max,
                capacity: l.capacity,
                role: l.role,
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Parses and structurally validates a network document.
pub fn deserialize_network(text: &str) -> Result<Network> {
    let doc: NetworkDoc = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    if doc.schema != SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "unsupported schema version {}, expected {SCHEMA_VERSION}",
            doc.schema
        )));
    }
    let net = Network::new(
        doc.buses,
        doc.lines
            .into_iter()
            .map(|l| Line {
                from: l.from,
                to: l.to,
                s_min: l.s_min,
                s_max: l.s_max,
                capacity: l.capacity,
                role: l.role,
            })
            .collect(),
    );
    let report = validate_network(&net);
    if !report.is_valid() {
        return Err(Error::Network(report.to_string()));
    }
    Ok(net)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolutionDoc {
    schema: u32,
    objective: f64,
    susceptance: Vec<f64>,
    theta: Vec<f64>,
    flow: Vec<f64>,
    gen: Vec<f64>,
    load: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
}

/// Solution document; `meta` carries solver details and is ignored on read.
pub fn serialize_solution(sol: &LdcSolution, meta: Option<serde_json::Value>) -> Result<String> {
    let doc = SolutionDoc {
        schema: SCHEMA_VERSION,
        objective: sol.objective(),
        susceptance: sol.susceptance.clone(),
        theta: sol.theta.clone(),
        flow: sol.injections.flow.clone(),
        gen: sol.injections.gen.clone(),
        load: sol.injections.load.clone(),
        meta,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn deserialize_solution(text: &str) -> Result<LdcSolution> {
    let doc: SolutionDoc = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    if doc.schema != SCHEMA_VERSION {
        return Err(Error::Schema(format!("unsupported schema version {}", doc.schema)));
    }
    Ok(LdcSolution {
        susceptance: doc.susceptance,
        theta: doc.theta,
        injections: InjectionSolution {
            flow: doc.flow,
            gen: doc.gen,
            load: doc.load,
        },
    })
}

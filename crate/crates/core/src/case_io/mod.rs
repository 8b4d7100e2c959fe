//! Case files, JSON documents and scenario generation.

pub mod ingest;
pub mod json;
pub mod matpower;
pub mod scenario;

pub use ingest::{to_network, to_network_with, IngestOptions, ParallelPolicy};
pub use json::{deserialize_network, deserialize_solution, serialize_network, serialize_solution};
pub use matpower::{parse_case, RawCase};
pub use scenario::{
    apply_congestion_factors, assign_facts, build_scenario, csv_header, derive_seed, remove_random_lines, run_trial,
    RunRecord, ScenarioSpec, TrialConfig, CSV_HEADER, CSV_TIMING_COLUMN,
};

use crate::error::Result;
use crate::network::Network;

/// Reads a MATPOWER case file into a network.
pub fn load_case(path: impl AsRef<std::path::Path>, opts: &IngestOptions) -> Result<Network> {
    let text = std::fs::read_to_string(path)?;
    to_network_with(&parse_case(&text)?, opts)
}

use std::path::Path;

use pcm_forge_core::solver::SolveOptions;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_COPY: &str = "scenario.cfg";

/// Written next to every output set. `scenario.cfg` in the same directory
/// holds the fully resolved scenario (profile inlined), so
/// `pcm-forge <command> --config scenario.cfg` with the recorded seed and
/// start count reproduces the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Config path as given on the command line.
    pub scenario_file: String,
    /// Copy of the resolved scenario, relative to the output directory.
    pub scenario_copy: String,
    pub profile_override: Option<String>,
    pub options: Option<SolveOptions>,
    pub output_dir: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub wall_clock_s: f64,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }
}

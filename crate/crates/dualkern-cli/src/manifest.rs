//! Run manifests: every file-producing invocation writes a
//! `<out>.manifest.json` next to its artifact recording the subcommand, the
//! resolved configuration, the master seed, the library version, and the
//! skeleton hash. `dualkern --manifest FILE` replays it byte-exactly.

use crate::commands::{self, CliError};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub master_seed: u64,
    pub skeleton_hash: Option<String>,
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new(
        subcommand: &str,
        master_seed: u64,
        skeleton_hash: Option<u64>,
        config: serde_json::Value,
    ) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed,
            skeleton_hash: skeleton_hash.map(|h| format!("{h:016x}")),
            config,
        }
    }
}

pub fn manifest_path(out: &Path) -> std::path::PathBuf {
    let mut os = out.as_os_str().to_os_string();
    os.push(".manifest.json");
    os.into()
}

pub fn write_manifest(out: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let path = manifest_path(out);
    let body = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(&path, body)
        .map_err(|e| CliError::Experiment(format!("writing {}: {e}", path.display())))
}

/// Re-run the command a manifest describes. `out_override` redirects the
/// primary artifact; otherwise the original path is rewritten.
pub fn replay(path: &Path, out_override: Option<&Path>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("reading {}: {e}", path.display())))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    macro_rules! rerun {
        ($ty:ty, $run:path) => {{
            let mut args: $ty = serde_json::from_value(manifest.config.clone())
                .map_err(|e| CliError::Usage(format!("manifest config: {e}")))?;
            if let Some(out) = out_override {
                args.out = Some(out.to_path_buf());
            }
            $run(&args)
        }};
    }
    match manifest.subcommand.as_str() {
        "duals" => rerun!(commands::DualsArgs, commands::run_duals),
        "kernel" => rerun!(commands::KernelArgs, commands::run_kernel),
        "gram" => rerun!(commands::GramArgs, commands::run_gram),
        "converge" => rerun!(commands::ConvergeArgs, commands::run_converge),
        "tower" => rerun!(commands::TowerArgs, commands::run_tower),
        "learn" => rerun!(commands::LearnArgs, commands::run_learn),
        "bound" => rerun!(commands::BoundArgs, commands::run_bound),
        other => Err(CliError::Usage(format!("unknown subcommand `{other}` in manifest"))),
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wbmia::Provenance;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub kind: String,
    /// Relative to the output directory.
    pub path: String,
}

/// Index of everything one invocation wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub inputs: Vec<String>,
    pub artifacts: Vec<Artifact>,
}

/// File name of the manifest written by `command`.
pub fn manifest_name(command: &str) -> String {
    format!("{command}-manifest.json")
}

/// Output directory of one invocation. Hands out artifact paths, refusing
/// any that would overwrite an input, and records them for the manifest.
pub struct OutputDir {
    dir: PathBuf,
    inputs: Vec<PathBuf>,
    artifacts: Vec<Artifact>,
}

impl OutputDir {
    pub fn create(dir: &Path, inputs: &[&Path]) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create output directory {}: {e}", dir.display())))?;
        let inputs = inputs
            .iter()
            .map(|p| {
                p.canonicalize()
                    .map_err(|e| CliError::Config(format!("input {}: {e}", p.display())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            dir: dir.canonicalize()?,
            inputs,
            artifacts: Vec::new(),
        })
    }

    pub fn artifact(&mut self, name: &str, kind: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        if self.inputs.contains(&path) {
            return Err(CliError::Config(format!(
                "output {} would overwrite an input; choose another --out-dir",
                path.display()
            )));
        }
        self.artifacts.push(Artifact {
            kind: kind.to_string(),
            path: name.to_string(),
        });
        Ok(path)
    }

    pub fn finish(mut self, command: &str, provenance: &Provenance) -> Result<PathBuf, CliError> {
        let path = self.artifact(&manifest_name(command), "manifest")?;
        self.artifacts.pop();
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: provenance.config_hash.clone(),
            master_seed: provenance.master_seed,
            inputs: self.inputs.iter().map(|p| p.display().to_string()).collect(),
            artifacts: self.artifacts,
        };
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(path)
    }
}

/// JSON payload wrapped with provenance.
#[derive(Debug, Serialize)]
pub struct Stamped<'a, T: Serialize> {
    pub provenance: &'a Provenance,
    #[serde(flatten)]
    pub body: T,
}

pub fn write_json<T: Serialize>(path: &Path, provenance: &Provenance, body: T) -> Result<(), CliError> {
    let doc = Stamped { provenance, body };
    std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one invocation. Written with status `running` before any work
/// and rewritten with the final status afterwards.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub tool_version: &'static str,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
    pub started_unix_s: f64,
    pub finished_unix_s: Option<f64>,
    pub status: String,
    #[serde(skip)]
    path: PathBuf,
}

pub const MANIFEST_FILE: &str = "run_manifest.json";

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(out_dir: &Path) -> Self {
        Self {
            command_line: std::env::args().collect(),
            tool_version: env!("CARGO_PKG_VERSION"),
            config: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix_s: now(),
            finished_unix_s: None,
            status: "running".into(),
            path: out_dir.join(MANIFEST_FILE),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> std::io::Result<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(InputDigest {
            path: path.to_path_buf(),
            sha256,
        });
        Ok(())
    }

    pub fn write(&self) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(&self.path, text + "\n")
    }

    pub fn finish(&mut self, status: &str) -> std::io::Result<()> {
        self.finished_unix_s = Some(now());
        self.status = status.to_string();
        self.write()
    }
}

//! Run manifests: what went into a CLI run, written next to its output.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::corpus::hex;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub config: Value,
    /// Input name → sha256 of its bytes (directories hash their files in
    /// name order).
    pub inputs: BTreeMap<String, String>,
    /// Component role → description (e.g. `"scorer" → "lexical"`).
    pub components: BTreeMap<String, String>,
    pub seed: u64,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn start(command: &str, args: Vec<String>, seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args,
            config: Value::Null,
            inputs: BTreeMap::new(),
            components: BTreeMap::new(),
            seed,
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
        }
    }

    pub fn config<T: Serialize>(&mut self, config: &T) -> &mut Self {
        self.config = serde_json::to_value(config).expect("config serializes");
        self
    }

    pub fn input(&mut self, name: &str, path: &Path) -> Result<&mut Self> {
        self.inputs.insert(name.to_string(), checksum_path(path)?);
        Ok(self)
    }

    pub fn component(&mut self, role: &str, description: impl Into<String>) -> &mut Self {
        self.components.insert(role.to_string(), description.into());
        self
    }

    /// Everything except the timestamps. Two runs with equal keys and
    /// deterministic components produce identical outputs.
    pub fn reproducibility_key(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("manifest serializes");
        if let Value::Object(map) = &mut v {
            map.remove("started_unix_ms");
            map.remove("finished_unix_ms");
        }
        v
    }

    /// Stamps the finish time and writes pretty JSON to `path`.
    pub fn finish(&mut self, path: &Path) -> Result<()> {
        self.finished_unix_ms = now_ms();
        let mut body = serde_json::to_string_pretty(self).expect("manifest serializes");
        body.push('\n');
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// `out.jsonl` → `out.jsonl.manifest.json`; a directory gets
/// `dir/run.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    if output.is_dir() {
        return output.join("run.manifest.json");
    }
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// sha256 of a file, or of a directory's regular files in name order
/// (name and contents), skipping any run manifest.
pub fn checksum_path(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && !p.to_string_lossy().ends_with("manifest.json"))
            .collect();
        entries.sort();
        for p in entries {
            hasher.update(p.file_name().unwrap_or_default().to_string_lossy().as_bytes());
            hasher.update([0]);
            hash_file(&p, &mut hasher)?;
        }
    } else {
        hash_file(path, &mut hasher)?;
    }
    Ok(hex(&hasher.finalize()))
}

fn hash_file(path: &Path, hasher: &mut Sha256) -> Result<()> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Ok(());
        }
        hasher.update(&buf[..n]);
    }
}

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{io, CliError};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// Record written next to each command's artifacts.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: &'static str,
    pub version: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub wall_time_seconds: f64,
    pub artifacts: Vec<String>,
    pub details: serde_json::Value,
}

/// Hex SHA-256 of the canonical config text.
pub fn config_hash(toml: &str) -> String {
    Sha256::digest(toml.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn write(&self, out: &Path) -> Result<(), CliError> {
        let dir = out.join("manifests");
        std::fs::create_dir_all(&dir).map_err(io(&dir))?;
        let path = dir.join(format!("{}.json", self.command));
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n").map_err(io(&path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_hex_sha256() {
        let h = config_hash("");
        assert_eq!(h, "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        assert_ne!(config_hash("a"), h);
    }

    #[test]
    fn writes_named_file() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest {
            command: "gen-data",
            version: VERSION,
            config_hash: config_hash("x"),
            seed: 1,
            threads: None,
            wall_time_seconds: 0.5,
            artifacts: vec!["data/train.rlds".into()],
            details: serde_json::json!({"n": 3}),
        };
        m.write(dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("manifests/gen-data.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["version"], "v0.1.0");
        assert_eq!(v["details"]["n"], 3);
    }
}

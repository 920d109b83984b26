//! Provenance record embedded in every JSON output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliResult;
use crate::io::read_bytes;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// No wall-clock fields: a rerun with the same inputs must reproduce the
/// file byte for byte.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the command's arguments serialized as JSON.
    pub config_digest: String,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub artifacts: Vec<PathBuf>,
    pub version: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new<A: Serialize>(command: &str, args: &A, seed: Option<u64>) -> Self {
        let config = serde_json::to_vec(args).expect("arguments serialize");
        Self {
            command: command.into(),
            config_digest: sha256_hex(&config),
            seed,
            inputs: Vec::new(),
            artifacts: Vec::new(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        let sha256 = sha256_hex(&read_bytes(path)?);
        self.inputs.push(InputDigest { path: path.into(), sha256 });
        Ok(())
    }

    pub fn artifact(&mut self, path: &Path) {
        self.artifacts.push(path.into());
    }
}

/// A JSON output: the manifest next to the command's payload.
#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub manifest: &'a RunManifest,
    #[serde(flatten)]
    pub payload: T,
}

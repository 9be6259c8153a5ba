use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{OverheadSample, TenantRecord};
use crate::control::VsnRecord;

/// File name of the snapshot inside a state directory.
pub const STATE_FILE: &str = "state.json";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PersistError {
    #[error("state I/O failed: {0}")]
    Io(String),
    #[error("corrupt state file: {0}")]
    CorruptState(String),
}

fn io(e: std::io::Error) -> PersistError {
    PersistError::Io(e.to_string())
}

/// Everything the management service needs to resume after a restart.
///
/// On disk: a `sha256:<hex>` line over the JSON body, then the body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Snapshot {
    pub tenants: Vec<TenantRecord>,
    pub vsns: Vec<VsnRecord>,
    pub metrics: Vec<OverheadSample>,
    pub request_seq: u64,
}

impl Snapshot {
    /// `Ok(None)` when the directory holds no snapshot yet.
    pub fn load(dir: &Path) -> Result<Option<Snapshot>, PersistError> {
        let path = dir.join(STATE_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io(e)),
        };
        let (header, body) = text
            .split_once('\n')
            .ok_or_else(|| PersistError::CorruptState("missing checksum header".into()))?;
        let expected = header
            .strip_prefix("sha256:")
            .ok_or_else(|| PersistError::CorruptState("malformed checksum header".into()))?;
        let actual = hex::encode(Sha256::digest(body.as_bytes()));
        if expected != actual {
            return Err(PersistError::CorruptState(format!(
                "checksum mismatch: header {expected}, content {actual}"
            )));
        }
        serde_json::from_str(body)
            .map(Some)
            .map_err(|e| PersistError::CorruptState(e.to_string()))
    }

    /// Writes to a temporary file and renames it over the snapshot.
    pub fn save(&self, dir: &Path) -> Result<(), PersistError> {
        fs::create_dir_all(dir).map_err(io)?;
        let body = serde_json::to_string_pretty(self).map_err(|e| PersistError::Io(e.to_string()))?;
        let digest = hex::encode(Sha256::digest(body.as_bytes()));
        let tmp = dir.join(format!("{STATE_FILE}.tmp"));
        {
            let mut f = fs::File::create(&tmp).map_err(io)?;
            writeln!(f, "sha256:{digest}").map_err(io)?;
            f.write_all(body.as_bytes()).map_err(io)?;
            f.sync_all().map_err(io)?;
        }
        fs::rename(&tmp, dir.join(STATE_FILE)).map_err(io)
    }
}

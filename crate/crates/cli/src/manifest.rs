//! Run manifests and canonical number formatting.

use std::hash::Hasher;

use fnv::FnvHasher;
use homf::eval::round_sig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Prefix of the trailing comment line that carries the manifest in CSV
/// outputs.
pub const CSV_MARKER: &str = "# manifest ";

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// FNV-1a 64 of the input file, as 16 hex digits. Absent for commands
    /// that read no input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_digest: Option<String>,
    pub config: Value,
}

impl RunManifest {
    pub fn new<T: Serialize>(command: &str, seed: u64, input: Option<&[u8]>, config: &T) -> Self {
        let mut config = serde_json::to_value(config).expect("configs serialize");
        round_floats(&mut config);
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            input_digest: input.map(digest),
            config,
        }
    }

    /// Loads a manifest from a JSON result or a CSV with a manifest line.
    pub fn load(path: &str) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let bad = |msg: String| CliError::Usage(format!("{path}: {msg}"));
        let value: Value = match serde_json::from_str::<Value>(&text) {
            Ok(v) => v.get("manifest").cloned().unwrap_or(v),
            Err(_) => {
                let line = text
                    .lines()
                    .rev()
                    .find_map(|l| l.strip_prefix(CSV_MARKER))
                    .ok_or_else(|| bad("no manifest found".into()))?;
                serde_json::from_str(line).map_err(|e| bad(e.to_string()))?
            }
        };
        serde_json::from_value(value).map_err(|e| bad(format!("invalid manifest: {e}")))
    }

    /// The stored configuration, checked against the replaying command.
    pub fn config<T: DeserializeOwned>(&self, command: &str) -> Result<T, CliError> {
        if self.command != command {
            return Err(CliError::Usage(format!(
                "manifest was written by `{}`, not `{command}`",
                self.command
            )));
        }
        serde_json::from_value(self.config.clone())
            .map_err(|e| CliError::Usage(format!("invalid manifest config: {e}")))
    }

    pub fn csv_line(&self) -> String {
        format!("{CSV_MARKER}{}", serde_json::to_string(self).expect("manifest serializes"))
    }
}

pub fn digest(bytes: &[u8]) -> String {
    let mut h = FnvHasher::default();
    h.write(bytes);
    format!("{:016x}", h.finish())
}

/// Rounds every float in `v` to 6 significant digits.
pub fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64().map(round_sig).and_then(serde_json::Number::from_f64) {
                *n = x;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// `config` with its floats rounded the way the manifest records them, so a
/// run and its replay see identical parameters.
pub fn canonical<T: Serialize + DeserializeOwned>(config: &T) -> T {
    let mut v = serde_json::to_value(config).expect("configs serialize");
    round_floats(&mut v);
    serde_json::from_value(v).expect("rounding keeps the shape")
}

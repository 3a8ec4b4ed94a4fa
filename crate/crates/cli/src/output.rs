use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Run identity echoed into every artifact.
#[derive(Clone, Debug)]
pub struct Header {
    pub command: &'static str,
    pub seed: u64,
    pub config_hash: String,
}

impl Header {
    /// Hashes the run configuration together with the bytes of every input file,
    /// so a changed input changes the hash even when the paths do not.
    pub fn new<C: Serialize>(command: &'static str, seed: u64, config: &C, inputs: &[&[u8]]) -> Self {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update(serde_json::to_vec(config).expect("run config serializes"));
        for bytes in inputs {
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        }
        let digest = h.finalize();
        let config_hash = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        Self {
            command,
            seed,
            config_hash,
        }
    }

    pub fn csv_lines(&self) -> String {
        format!(
            "# cbitcl {VERSION} command={} seed={} config={}\n# timestamp={}\n",
            self.command,
            self.seed,
            self.config_hash,
            timestamp()
        )
    }

    fn json_fields(&self) -> Value {
        json!({
            "version": VERSION,
            "command": self.command,
            "seed": self.seed,
            "config_hash": self.config_hash,
        })
    }
}

/// Seconds since the epoch; `SOURCE_DATE_EPOCH` overrides for reproducible builds.
fn timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse().ok()) {
        return t;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Subsystem seed derived from the run seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(b"cbitcl-seed");
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Writes to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.flush())
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| CliError::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

/// CSV body prefixed by the two `#` header lines.
pub fn write_csv(path: &Path, header: &Header, body: &[u8]) -> Result<(), CliError> {
    let mut out = header.csv_lines().into_bytes();
    out.extend_from_slice(body);
    write_atomic(path, &out)
}

/// The fields of `payload` preceded by `header` and `timestamp`, pretty printed
/// so the timestamp sits on a line of its own.
pub fn write_json(path: &Path, header: &Header, payload: &Value) -> Result<(), CliError> {
    let doc = json_document(header, payload)?;
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn json_document(header: &Header, payload: &Value) -> Result<Value, CliError> {
    let Value::Object(fields) = payload else {
        return Err(CliError::Io("report payload must be a JSON object".into()));
    };
    let mut map = serde_json::Map::new();
    map.insert("header".into(), header.json_fields());
    map.insert("timestamp".into(), json!(timestamp()));
    map.extend(fields.clone());
    Ok(Value::Object(map))
}

/// Drops leading `#` lines so header-stamped CSVs can be read back.
pub fn strip_comment_lines(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Accepts either a bare document or one wrapped by [`write_json`] under `key`.
pub fn unwrap_document(text: &str, key: &str) -> Result<String, CliError> {
    let v: Value = serde_json::from_str(text).map_err(|e| CliError::Data(e.to_string()))?;
    match v {
        Value::Object(mut m) if m.contains_key("header") => m
            .remove(key)
            .map(|inner| inner.to_string())
            .ok_or_else(|| CliError::Data(format!("document has no `{key}` entry"))),
        _ => Ok(text.to_string()),
    }
}

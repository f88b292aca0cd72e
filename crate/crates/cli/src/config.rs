//! Flag/config resolution, manifests and exit-code mapping.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

/// A failure classified by exit code: 2 for configuration, 1 for numerics.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<rose_core::Error> for CliError {
    fn from(e: rose_core::Error) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn config_err(key: &str, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("`{key}`: {msg}"))
}

pub fn read_text(path: &Path, what: &str) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| config_err(what, format!("cannot read {}: {e}", path.display())))
}

/// Recursively overwrite `base` with the keys present in `over`.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Start from the flag values, overlay the JSON file if one is given, and
/// deserialize the result. Keys in the file win over flags.
pub fn resolve<T: Serialize + DeserializeOwned>(from_flags: &T, config: Option<&Path>) -> CliResult<T> {
    let Some(path) = config else {
        return serde_json::to_value(from_flags)
            .and_then(serde_json::from_value)
            .map_err(|e| CliError::Numeric(e.to_string()));
    };
    let mut base = serde_json::to_value(from_flags).map_err(|e| CliError::Numeric(e.to_string()))?;
    let text = read_text(path, "--config")?;
    let over: Value = serde_json::from_str(&text)
        .map_err(|e| config_err("--config", format!("{}: {e}", path.display())))?;
    if !over.is_object() {
        return Err(config_err("--config", "top level must be a JSON object"));
    }
    merge(&mut base, over);
    serde_json::from_value(base).map_err(|e| config_err("--config", format!("{}: {e}", path.display())))
}

/// `<out>.manifest.json` beside an output file.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a C,
    outputs: Vec<String>,
}

/// Write the resolved configuration next to the primary output. Contains
/// nothing run-dependent, so identical inputs give identical manifests.
pub fn write_manifest<C: Serialize>(command: &str, config: &C, outputs: &[&Path]) -> CliResult<PathBuf> {
    let primary = outputs.first().ok_or_else(|| CliError::Numeric("manifest needs an output".into()))?;
    let m = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    let path = manifest_path(primary);
    let mut text = serde_json::to_string_pretty(&m).map_err(|e| CliError::Numeric(e.to_string()))?;
    text.push('\n');
    write_file(&path, text.as_bytes())?;
    Ok(path)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::Numeric(format!("cannot write {}: {e}", path.display())))
}

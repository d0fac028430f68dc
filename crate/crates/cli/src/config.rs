//! Run configuration: a JSON file plus `--set key=value` overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

/// Top-level keys every command accepts; everything command-specific lives
/// under `params`.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub params: Value,
}

impl RunConfig {
    /// Reads `file` (if any), applies `overrides` and the CLI output
    /// directory, and checks the command name against the file's.
    pub fn load(command: &str, file: Option<&Path>, overrides: &[String], out: Option<&Path>) -> Result<Self> {
        let mut root = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str::<Value>(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Value::Object(Map::new()),
        };
        if !root.is_object() {
            bail!("the config file must hold a JSON object");
        }
        for o in overrides {
            let (key, raw) = o.split_once('=').with_context(|| format!("override `{o}` is not key=value"))?;
            set_path(&mut root, key.trim(), parse_scalar(raw.trim()))?;
        }
        let obj = root.as_object_mut().expect("checked above");
        for key in obj.keys() {
            if !["command", "seed", "output_dir", "params"].contains(&key.as_str()) {
                bail!("unknown top-level key `{key}` (command-specific settings go under `params`)");
            }
        }
        if let Some(c) = obj.get("command") {
            if c.as_str() != Some(command) {
                bail!("config file is for command {c}, not `{command}`");
            }
        }
        let seed = match obj.get("seed") {
            None => 0,
            Some(v) => v.as_u64().context("`seed` must be a nonnegative integer")?,
        };
        let output_dir = match (out, obj.get("output_dir")) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(v)) => PathBuf::from(v.as_str().context("`output_dir` must be a string")?),
            (None, None) => PathBuf::from("out").join(command),
        };
        let params = obj.remove("params").unwrap_or_else(|| Value::Object(Map::new()));
        Ok(Self {
            command: command.to_string(),
            seed,
            output_dir,
            params,
        })
    }

    /// Deserializes the parameter block, rejecting unknown keys.
    pub fn params<T: DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(self.params.clone()).context("invalid `params` block")
    }

    pub fn echo(&self, resolved_params: Value) -> Value {
        serde_json::json!({
            "command": self.command,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "params": resolved_params,
        })
    }
}

/// JSON when it parses, a bare string otherwise, so `--set sigma=2` and
/// `--set params.grid=[0,0.1]` both work without quoting.
fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets a dotted path, creating intermediate objects. Keys other than the
/// top-level ones are placed under `params`.
fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("bad override key `{key}`");
    }
    if !["command", "seed", "output_dir", "params"].contains(&parts[0]) {
        parts.insert(0, "params");
    }
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .with_context(|| format!("override `{key}`: `{}` is not an object", parts[..i].join(".")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("loop returns on the last part")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_land_under_params() {
        let cfg = RunConfig::load(
            "synth-sweep",
            None,
            &["sigma=2".into(), "seed=7".into(), "admm.lambda0=0.5".into(), "name=abc".into()],
            None,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.params["sigma"], 2);
        assert_eq!(cfg.params["admm"]["lambda0"], 0.5);
        assert_eq!(cfg.params["name"], "abc");
        assert_eq!(cfg.output_dir, PathBuf::from("out/synth-sweep"));
    }

    #[test]
    fn bad_inputs() {
        assert!(RunConfig::load("x", None, &["novalue".into()], None).is_err());
        assert!(RunConfig::load("x", None, &["a..b=1".into()], None).is_err());
        assert!(RunConfig::load("x", None, &["seed=-1".into()], None).is_err());
    }
}

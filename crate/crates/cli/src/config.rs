//! Layered scenario configuration: preset, then an optional TOML file, then
//! dotted `path=value` overrides, then the dedicated flags.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use sha2::{Digest, Sha256};
use toml::{Table, Value};
use vlc_mvr::ScenarioConfig;

use crate::UsageError;

/// Rewrites `--a.b value` and `--a.b=value` into `--set a.b=value` so every
/// field path can be given as its own flag.
pub fn expand_dotted_flags(args: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut out = Vec::new();
    let mut it = args.into_iter().peekable();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            out.push(arg);
            continue;
        };
        let (name, inline) = match body.split_once('=') {
            Some((n, v)) => (n, Some(v.to_string())),
            None => (body, None),
        };
        if !name.contains('.') {
            out.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => match it.peek() {
                Some(next) if !next.starts_with("--") => it.next().expect("peeked"),
                _ => String::new(),
            },
        };
        out.push("--set".into());
        out.push(format!("{name}={value}"));
    }
    out
}

/// Parses an override value as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_path(root: &mut Table, path: &str, value: Value) -> anyhow::Result<()> {
    let mut parts = path.split('.').peekable();
    let mut table = root;
    while let Some(key) = parts.next() {
        if key.is_empty() {
            bail!(UsageError(format!("empty component in override path `{path}`")));
        }
        if parts.peek().is_none() {
            table.insert(key.to_string(), value);
            return Ok(());
        }
        let entry = table.entry(key.to_string()).or_insert_with(|| Value::Table(Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!(UsageError(format!("`{key}` in `{path}` is not a table"))))?;
    }
    Ok(())
}

fn merge(base: &mut Table, layer: Table) {
    for (k, v) in layer {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(l)) => merge(b, l),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Everything that may change the scenario, lowest precedence first.
#[derive(Debug, Default, Clone)]
pub struct Layers {
    pub preset: String,
    pub file: Option<std::path::PathBuf>,
    pub overrides: Vec<String>,
    /// Dedicated flags, applied last: (field path, value).
    pub flags: Vec<(&'static str, Value)>,
}

pub fn resolve(layers: &Layers) -> anyhow::Result<ScenarioConfig> {
    let base = ScenarioConfig::preset(&layers.preset).map_err(|e| UsageError(e.to_string()))?;
    let mut table = Table::try_from(&base).context("serializing the preset")?;
    if let Some(path) = &layers.file {
        merge(&mut table, read_file(path)?);
    }
    for o in &layers.overrides {
        let (path, raw) = o
            .split_once('=')
            .ok_or_else(|| anyhow!(UsageError(format!("override `{o}` is not of the form path=value"))))?;
        set_path(&mut table, path.trim(), parse_value(raw.trim()))?;
    }
    for (path, v) in &layers.flags {
        set_path(&mut table, path, v.clone())?;
    }
    let cfg: ScenarioConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| UsageError(format!("invalid configuration: {}", e.message())))?;
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(cfg)
}

fn read_file(path: &Path) -> anyhow::Result<Table> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config file {}: {e}", path.display())))?;
    text.parse::<Table>()
        .map_err(|e| UsageError(format!("cannot parse config file {}: {}", path.display(), e.message())).into())
}

pub fn to_toml(cfg: &ScenarioConfig) -> String {
    toml::to_string(cfg).expect("scenario configs serialize to TOML")
}

/// SHA-256 of the resolved configuration in TOML form.
pub fn digest(cfg: &ScenarioConfig) -> String {
    hex::encode(Sha256::digest(to_toml(cfg).as_bytes()))
}

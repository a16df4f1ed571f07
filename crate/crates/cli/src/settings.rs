use std::fmt::Display;
use std::path::{Path, PathBuf};

use clap::Args;
use signtopic_core::config::KvMap;

use crate::{CliError, CliResult};

pub const MODEL_KEYS: &[&str] = &[
    "family",
    "hidden",
    "layers",
    "bidirectional",
    "attn_width",
    "width",
    "heads",
    "ff_width",
    "stride",
    "max_positions",
    "latents",
    "cross_heads",
    "self_heads",
    "blocks",
    "vocab_size",
];

pub const TRAIN_KEYS: &[&str] = &["lr", "batch", "max_epochs", "patience", "seed", "bucket"];

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// `key = value` settings file; flags override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Extra setting, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

pub fn flag<T: Display>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

pub fn switch(on: bool) -> Option<String> {
    on.then(|| "true".to_string())
}

/// Config file, then `--set` pairs, then flags. Keys outside `allowed` are
/// rejected before anything is written.
pub fn resolve(common: &Common, allowed: &[&[&str]], flags: &[(&str, Option<String>)]) -> CliResult<KvMap> {
    let mut kv = match &common.config {
        Some(p) => KvMap::load(p)?,
        None => KvMap::new(),
    };
    for pair in &common.set {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--set expects KEY=VALUE, got {pair:?}")))?;
        kv.set(k.trim(), v.trim());
    }
    for (k, v) in flags {
        if let Some(v) = v {
            kv.set(*k, v);
        }
    }
    let known = |k: &str| allowed.iter().any(|group| group.contains(&k)) || flags.iter().any(|(f, _)| *f == k);
    if let Some(k) = kv.keys().find(|k| !known(k)) {
        return Err(CliError::usage(format!("unknown setting {k:?}")));
    }
    Ok(kv)
}

pub fn required(kv: &KvMap, key: &str) -> CliResult<String> {
    kv.get(key).map(str::to_string).ok_or_else(|| {
        CliError::usage(format!(
            "missing --{} (or `{key}` in the config file)",
            key.replace('_', "-")
        ))
    })
}

pub fn parsed<T: std::str::FromStr>(kv: &KvMap, key: &str, default: T) -> CliResult<T> {
    match kv.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| CliError::usage(format!("invalid value for {key}: {v:?}"))),
    }
}

/// Echo location for a command whose output is one file.
pub fn echo_path_for_file(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".config.txt");
    out.with_file_name(name)
}

/// Echo location for a command whose output is a directory.
pub fn echo_path_for_dir(dir: &Path) -> PathBuf {
    dir.join("config.txt")
}

/// Writes the echo next to `out`, or prints it to stderr when the command
/// has no output path.
pub fn echo(kv: &KvMap, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(p) => kv.write(echo_path_for_file(p))?,
        None => {
            for (k, v) in kv.iter() {
                eprintln!("# {k} = {v}");
            }
        }
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| signtopic_core::Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| signtopic_core::Error::io(path, e).into())
}

pub fn list(v: &str) -> Vec<String> {
    v.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

//! Config resolution, workspace paths and output bookkeeping.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ehd_core::config::KvConfig;
use ehd_core::data::DatasetManifest;
use ehd_core::parallel::Workers;
use ehd_core::EhdError;
use sha2::{Digest, Sha256};

use crate::error::{config, CliError, Result};
use crate::keys::{self, Kind};

pub struct Options {
    pub root: PathBuf,
    pub config: Option<PathBuf>,
    pub set: Vec<String>,
    pub workers: usize,
    pub force: bool,
}

pub struct Context {
    pub root: PathBuf,
    pub cfg: KvConfig,
    /// Keys given by the config file, the environment or `--set`.
    pub explicit: BTreeSet<String>,
    pub workers: Workers,
    force: bool,
    outputs: Vec<PathBuf>,
}

/// Rejects unknown keys and values that do not parse as the key's kind.
fn check_keys(c: &KvConfig, source: &str) -> Result<()> {
    for name in c.keys() {
        let Some(k) = keys::lookup(name) else {
            return Err(config(format!(
                "unknown key {name} (from {source}); see `ehd reference`"
            )));
        };
        let v = c.get_str(name).unwrap_or_default();
        let ok = match k.kind {
            Kind::Int => v.parse::<u64>().is_ok(),
            Kind::Float => v.parse::<f64>().is_ok(),
            Kind::Text => true,
        };
        if !ok {
            return Err(config(format!(
                "{name} = {v:?} (from {source}) is not a valid {:?}",
                k.kind
            )));
        }
    }
    Ok(())
}

impl Context {
    /// Layers defaults, the config file, `EHD_*` variables and `--set` pairs,
    /// later layers winning. `extra` are flag-derived pairs applied last.
    pub fn resolve(
        opts: &Options,
        env: impl IntoIterator<Item = (String, String)>,
        extra: &[(&str, String)],
    ) -> Result<Self> {
        let mut cfg = KvConfig::new();
        for k in keys::KEYS.iter().filter(|k| !k.default.is_empty()) {
            cfg.set(k.name, k.default);
        }
        let mut explicit = BTreeSet::new();
        let mut layer = |cfg: &mut KvConfig, c: KvConfig, source: &str| -> Result<()> {
            check_keys(&c, source)?;
            explicit.extend(c.keys().map(str::to_string));
            cfg.merge(&c);
            Ok(())
        };
        if let Some(file) = &opts.config {
            let path = opts.root.join(file);
            let text = fs::read_to_string(&path).map_err(|e| EhdError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            layer(&mut cfg, KvConfig::parse(&text)?, &path.display().to_string())?;
        }
        let mut from_env = KvConfig::new();
        from_env.apply_env(env);
        layer(&mut cfg, from_env, "environment")?;
        let mut from_set = KvConfig::new();
        for pair in &opts.set {
            let Some((k, v)) = pair.split_once('=') else {
                return Err(config(format!("--set expects key=value, got {pair:?}")));
            };
            let one = KvConfig::parse(&format!("{} = {}", k.trim(), v.trim()))?;
            from_set.merge(&one);
        }
        for (k, v) in extra {
            from_set.set(k, v);
        }
        layer(&mut cfg, from_set, "command line")?;
        Ok(Context {
            root: opts.root.clone(),
            cfg,
            explicit,
            workers: Workers::new(opts.workers)?,
            force: opts.force,
            outputs: Vec::new(),
        })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        Ok(self.cfg.require(key)?)
    }

    /// A stage seed, falling back to the root `seed`.
    pub fn seed(&self, key: &str) -> Result<u64> {
        Ok(self.cfg.get(key)?.map_or_else(|| self.cfg.require("seed"), Ok)?)
    }

    /// Fills a derived key unless the user gave it.
    pub fn derive(&mut self, key: &str, value: impl std::fmt::Display) {
        if !self.cfg.contains(key) {
            self.cfg.set(key, value);
        }
    }

    pub fn derive_f64(&mut self, key: &str, value: f64) {
        if !self.cfg.contains(key) {
            self.cfg.set_f64(key, value);
        }
    }

    /// A workspace path held in `key`.
    pub fn path(&self, key: &str) -> Result<PathBuf> {
        let v: String = self.get(key)?;
        if v.is_empty() {
            return Err(config(format!("{key} is empty")));
        }
        Ok(self.root.join(v))
    }

    pub fn data_file(&self, name: &str) -> Result<PathBuf> {
        Ok(self.path("data.dir")?.join(name))
    }

    pub fn run_file(&self, name: &str) -> Result<PathBuf> {
        Ok(self.path("run.out")?.join(name))
    }

    pub fn digest(&self) -> String {
        self.cfg.digest()
    }

    /// Registers an output; fails if it exists and `--force` was not given.
    pub fn claim(&mut self, path: PathBuf) -> Result<PathBuf> {
        if path.exists() && !self.force {
            return Err(CliError::Exists(path.display().to_string()));
        }
        self.outputs.push(path.clone());
        Ok(path)
    }

    /// Creates the parent directories of every claimed output.
    pub fn prepare_outputs(&self) -> Result<()> {
        for p in &self.outputs {
            if let Some(dir) = p.parent() {
                fs::create_dir_all(dir).map_err(|e| EhdError::Io {
                    path: dir.display().to_string(),
                    source: e,
                })?;
            }
        }
        Ok(())
    }

    /// Writes the resolved configuration with its digest as a header.
    pub fn write_resolved(&self, path: &Path) -> Result<()> {
        let text = format!("# config_digest = {}\n{}", self.digest(), self.cfg.to_text());
        write(path, text.as_bytes())
    }

    /// Checks explicit keys against the values stored in a checkpoint, then
    /// adopts the checkpoint's values for the rest.
    pub fn adopt(&mut self, stored: &KvConfig, what: &str) -> Result<()> {
        for k in stored.keys() {
            let theirs = stored.get_str(k).unwrap_or_default();
            if self.explicit.contains(k) {
                let ours = self.cfg.get_str(k).unwrap_or_default();
                let same = match (ours.parse::<f64>(), theirs.parse::<f64>()) {
                    (Ok(a), Ok(b)) => a == b,
                    _ => ours == theirs,
                };
                if !same {
                    return Err(CliError::Mismatch(format!(
                        "{k} is {ours} in the configuration but {theirs} in {what}"
                    )));
                }
            }
            self.cfg.set(k, theirs);
        }
        Ok(())
    }

    pub fn manifest(&self) -> Result<DatasetManifest> {
        let path = self.data_file("manifest.json")?;
        let text = read(&path, "prep-data")?;
        Ok(serde_json::from_str(&text).map_err(EhdError::from)?)
    }
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| {
        CliError::Core(EhdError::Io {
            path: path.display().to_string(),
            source: e,
        })
    })
}

/// Reads an input produced by an earlier subcommand.
pub fn read(path: &Path, producer: &'static str) -> Result<String> {
    if !path.exists() {
        return Err(CliError::MissingInput {
            path: path.display().to_string(),
            producer,
        });
    }
    fs::read_to_string(path).map_err(|e| {
        CliError::Core(EhdError::Io {
            path: path.display().to_string(),
            source: e,
        })
    })
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| EhdError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Prefixes CSV or JSONL text with the digest comment line.
pub fn stamped(digest: &str, body: &str) -> String {
    format!("# config_digest = {digest}\n{body}")
}

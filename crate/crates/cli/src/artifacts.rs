//! Output directory layout, provenance sidecars and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::LoadedConfig;

pub const MANIFEST: &str = "manifest.json";

/// Identifies the run that produced an artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub seed: u64,
    pub config_hash: String,
    pub outputs: Vec<String>,
}

pub struct Ctx {
    pub cfg: LoadedConfig,
    pub out: PathBuf,
}

impl Ctx {
    pub fn new(cfg: LoadedConfig, out: PathBuf) -> Self {
        Ctx { cfg, out }
    }

    pub fn provenance(&self, command: &str) -> Provenance {
        Provenance {
            command: command.into(),
            seed: self.cfg.seed,
            config_hash: self.cfg.hash.clone(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    /// `out/<stage>`, created on demand.
    pub fn stage_dir(&self, stage: &str) -> Result<PathBuf> {
        let d = self.out.join(stage);
        fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
        Ok(d)
    }

    pub fn path(&self, stage: &str, file: &str) -> PathBuf {
        self.out.join(stage).join(file)
    }

    pub fn rel(&self, p: &Path) -> String {
        p.strip_prefix(&self.out).unwrap_or(p).to_string_lossy().replace('\\', "/")
    }

    /// Record a stage's outputs in the manifest, replacing any earlier entry.
    pub fn record(&self, stage: &str, outputs: &[PathBuf]) -> Result<()> {
        let path = self.out.join(MANIFEST);
        let mut manifest: BTreeMap<String, StageRecord> = if path.is_file() {
            serde_json::from_str(&fs::read_to_string(&path)?).unwrap_or_default()
        } else {
            BTreeMap::new()
        };
        let mut outs: Vec<String> = outputs.iter().map(|p| self.rel(p)).collect();
        outs.sort();
        manifest.insert(
            stage.into(),
            StageRecord {
                seed: self.cfg.seed,
                config_hash: self.cfg.hash.clone(),
                outputs: outs,
            },
        );
        write_json(&path, &manifest)
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Fail listing every missing artifact, with the command that makes each.
pub fn require(ctx: &Ctx, needed: &[(PathBuf, &str)]) -> Result<()> {
    let missing: Vec<String> = needed
        .iter()
        .filter(|(p, _)| !p.is_file())
        .map(|(p, cmd)| format!("  {} (run `stormsafe {cmd}`)", ctx.rel(p)))
        .collect();
    if !missing.is_empty() {
        bail!("missing artifacts under {}:\n{}", ctx.out.display(), missing.join("\n"));
    }
    Ok(())
}

/// Error unless the artifact came from the current config and seed.
pub fn check_fresh(ctx: &Ctx, path: &Path, p: &Provenance) -> Result<()> {
    if p.config_hash != ctx.cfg.hash || p.seed != ctx.cfg.seed {
        bail!(
            "{} was produced by a different config or seed; rerun `stormsafe {}`",
            ctx.rel(path),
            p.command
        );
    }
    Ok(())
}

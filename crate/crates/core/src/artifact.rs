//! The run directory: `run.json`, `schedule.json` and one `level_k/`
//! directory per built level holding `meta.json` and `blocks.txt`.
//!
//! Every file embeds the config hash and seed. Files are written to a
//! temporary sibling and renamed, and `meta.json` is written last, so a
//! level directory with a readable `meta.json` is complete.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{ForgeError, Result};
use crate::hierarchy::FamilyLevel;
use crate::report::Inequality;
use crate::schedule::Schedule;
use crate::symbolic::Block;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Base for relative sequence paths, recorded only for file sequences.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_dir: Option<PathBuf>,
    /// SHA-256 of the test sequence in its text form.
    pub sequence_sha256: String,
    pub sequence_len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRecord {
    pub config_hash: String,
    pub seed: u64,
    pub schedule: Schedule,
    pub validation: Vec<Inequality>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelMeta {
    pub config_hash: String,
    pub seed: u64,
    pub blocks_sha256: String,
    pub level: FamilyLevel,
}

pub fn level_dir(out: &Path, k: u32) -> PathBuf {
    out.join(format!("level_{k}"))
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| ForgeError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| ForgeError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| ForgeError::io(path, e))?;
    // Temporary files are created 0600; artifacts are ordinary output.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(std::fs::Permissions::from_mode(0o644))
            .map_err(|e| ForgeError::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| ForgeError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| ForgeError::io(path, e))?;
    serde_json::from_str(&text).map_err(ForgeError::from)
}

pub fn blocks_text(blocks: &[Block]) -> String {
    let mut out = String::with_capacity(blocks.iter().map(|b| b.len() + 1).sum());
    for b in blocks {
        out.push_str(&b.to_digits());
        out.push('\n');
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn save_level(out: &Path, level: &FamilyLevel, config_hash: &str, seed: u64) -> Result<()> {
    let dir = level_dir(out, level.k);
    let text = blocks_text(&level.blocks);
    write_atomic(&dir.join("blocks.txt"), text.as_bytes())?;
    let meta = LevelMeta {
        config_hash: config_hash.to_string(),
        seed,
        blocks_sha256: sha256_hex(text.as_bytes()),
        level: level.clone(),
    };
    write_json(&dir.join("meta.json"), &meta)
}

/// A level read back from disk, with whether `blocks.txt` still matches the
/// digest recorded in `meta.json`.
pub struct LoadedLevel {
    pub level: FamilyLevel,
    pub meta: LevelMeta,
    pub digest_matches: bool,
}

pub fn load_level(out: &Path, k: u32) -> Result<LoadedLevel> {
    let dir = level_dir(out, k);
    let meta: LevelMeta = read_json(&dir.join("meta.json"))?;
    let path = dir.join("blocks.txt");
    let text = std::fs::read_to_string(&path).map_err(|e| ForgeError::io(&path, e))?;
    let digest_matches = sha256_hex(text.as_bytes()) == meta.blocks_sha256;
    let blocks = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            Block::parse(l.trim(), meta.level.alphabet).map_err(|e| ForgeError::Parse {
                path: path.clone(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut level = meta.level.clone();
    level.blocks = blocks;
    Ok(LoadedLevel {
        level,
        meta,
        digest_matches,
    })
}

/// Levels `0, 1, ...` that have a complete directory, stopping at the first gap.
pub fn complete_levels(out: &Path) -> Vec<u32> {
    (0..)
        .take_while(|&k| level_dir(out, k).join("meta.json").is_file())
        .collect()
}

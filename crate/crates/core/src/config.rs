use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ForgeError, Result};
use crate::schedule::{Mode, ScheduleConfig};
use crate::sequence::{load_sequence, mobius, synthetic_pm1, TestSequence};
use crate::symbolic::CodeWindows;

/// Where the test sequence `y` comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceSpec {
    Mobius {
        length: usize,
    },
    /// Whitespace-separated values, truncated to `length` when given.
    File {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        length: Option<usize>,
    },
    Synthetic {
        seed: u64,
        length: usize,
    },
}

impl SequenceSpec {
    /// Relative file paths resolve against `base`, normally the config's directory.
    pub fn load(&self, base: &Path) -> Result<TestSequence> {
        match self {
            SequenceSpec::Mobius { length } => mobius(*length),
            SequenceSpec::File { path, length } => {
                let y = load_sequence(base.join(path))?;
                match length {
                    Some(l) => y.truncated(*l),
                    None => Ok(y),
                }
            }
            SequenceSpec::Synthetic { seed, length } => synthetic_pm1(*seed, *length),
        }
    }
}

fn default_samples() -> usize {
    50
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    /// Orbit lengths for the uncorrelation sweep.
    #[serde(default)]
    pub n_list: Vec<usize>,
    #[serde(default = "default_samples")]
    pub diameter_samples: usize,
    /// Sweep every block and offset of the top level.
    #[serde(default = "yes")]
    pub sweep: bool,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            n_list: Vec::new(),
            diameter_samples: default_samples(),
            sweep: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    pub sequence: SequenceSpec,
    #[serde(default)]
    pub codes: CodeWindows,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub checks: CheckConfig,
    /// Directory of the config file, for relative paths. Not part of the hash.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ForgeError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ForgeError::io(path, e))?;
        let mut cfg = RunConfig::from_toml(&text).map_err(|e| match e {
            ForgeError::Config(msg) => ForgeError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let caps = &self.schedule.caps;
        if caps.max_level == 0 || caps.max_family == 0 || caps.max_candidates == 0 {
            return Err(ForgeError::Config("caps must be positive".into()));
        }
        let len = match &self.sequence {
            SequenceSpec::Mobius { length } | SequenceSpec::Synthetic { length, .. } => Some(*length),
            SequenceSpec::File { length, .. } => *length,
        };
        if len == Some(0) {
            return Err(ForgeError::Config("sequence length must be positive".into()));
        }
        if self.checks.n_list.contains(&0) {
            return Err(ForgeError::Config("n_list entries must be positive".into()));
        }
        if self.checks.diameter_samples < 2 {
            return Err(ForgeError::Config("diameter_samples must be at least 2".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, as lowercase hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("configs serialise");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn load_sequence(&self) -> Result<TestSequence> {
        self.sequence.load(&self.base_dir)
    }
}

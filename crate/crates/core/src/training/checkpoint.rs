//! Versioned checkpoints with atomic writes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::backbone::BackboneConfig;
use super::TrainConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume training bit-for-bit: model parameters,
/// optimizer velocity, the config snapshot, and the RNG stream position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// Number of completed epochs.
    pub epoch: usize,
    pub backbone: BackboneConfig,
    pub params: Vec<Tensor>,
    /// Classification layer, `[K, C]`.
    pub classifier: Tensor,
    pub velocity: Vec<Tensor>,
    pub classifier_velocity: Tensor,
    pub config: TrainConfig,
    pub rng_seed: u64,
    /// ChaCha word position, stored as a decimal string (u128).
    pub rng_word_pos: String,
}

impl Checkpoint {
    pub fn rng_word_pos(&self) -> Result<u128> {
        self.rng_word_pos
            .parse()
            .map_err(|_| Error::Config(format!("bad rng position `{}`", self.rng_word_pos)))
    }

    /// Write-temp-then-rename so readers never observe a partial file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text).map_err(Error::io(&tmp))?;
        std::fs::rename(&tmp, path).map_err(Error::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::SchemaVersion { found: ckpt.version, expected: CHECKPOINT_VERSION });
        }
        Ok(ckpt)
    }
}

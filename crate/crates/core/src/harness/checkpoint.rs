use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::transfer::RunState;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Config plus the complete run state: module and head parameters, freeze
/// mask, population, best paths of finished stages and every RNG position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub state: RunState,
}

impl Checkpoint {
    pub fn new(config: ExperimentConfig, state: RunState) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            config,
            state,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Validation("checkpoint has no format_version".into()))?;
        if found != u64::from(CHECKPOINT_VERSION) {
            return Err(Error::Version {
                found: u32::try_from(found).unwrap_or(u32::MAX),
                expected: CHECKPOINT_VERSION,
            });
        }
        let checkpoint: Checkpoint = serde_json::from_value(value)?;
        checkpoint.state.network.check()?;
        Ok(checkpoint)
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    super::write_atomic(path.as_ref(), checkpoint.to_json()?.as_bytes())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_json(&text)
}

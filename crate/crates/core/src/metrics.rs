use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::genotype::Genotype;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Source,
    Destination,
    Scratch,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Source, Phase::Destination, Phase::Scratch];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Source => "source",
            Phase::Destination => "destination",
            Phase::Scratch => "scratch",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "source" => Ok(Phase::Source),
            "destination" => Ok(Phase::Destination),
            "scratch" => Ok(Phase::Scratch),
            other => Err(Error::Validation(format!("unknown phase `{other}`"))),
        }
    }
}

/// One row of the learning-curve log: a path evaluation, or the summary of a
/// finished stage (`path_index` empty, `eval_accuracy` set).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub phase: Phase,
    pub iteration: usize,
    pub generation: u64,
    pub path_index: Option<u8>,
    pub genotype: Genotype,
    pub fitness: f64,
    pub mean_train_loss: f64,
    pub eval_accuracy: Option<f64>,
    pub wallclock_ms: Option<u64>,
    pub seed: u64,
}

impl MetricsRecord {
    pub fn is_summary(&self) -> bool {
        self.path_index.is_none()
    }
}

/// Labels attached to every row a stage emits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordContext {
    pub phase: Phase,
    pub iteration: usize,
    pub seed: u64,
    /// Wallclock columns stay empty unless set, keeping logs byte-reproducible.
    pub record_wallclock: bool,
}

impl RecordContext {
    pub fn new(phase: Phase, iteration: usize, seed: u64) -> Self {
        RecordContext {
            phase,
            iteration,
            seed,
            record_wallclock: false,
        }
    }
}

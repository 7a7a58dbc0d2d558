use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::supernet::Architecture;

/// Per-layer sets of active module indices. Each layer's set is kept sorted,
/// which makes equality and the text form canonical.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Genotype {
    layers: Vec<Vec<usize>>,
}

impl Genotype {
    /// Builds a genotype, sorting each layer. Duplicate indices are rejected.
    pub fn new(layers: Vec<Vec<usize>>) -> Result<Self> {
        let mut layers = layers;
        for (l, genes) in layers.iter_mut().enumerate() {
            genes.sort_unstable();
            if genes.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Genotype(format!("layer {l} repeats a module index")));
            }
        }
        Ok(Genotype { layers })
    }

    /// Builds a genotype, dropping repeated indices within a layer.
    pub fn dedup(layers: Vec<Vec<usize>>) -> Self {
        let layers = layers
            .into_iter()
            .map(|mut genes| {
                genes.sort_unstable();
                genes.dedup();
                genes
            })
            .collect();
        Genotype { layers }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, layer: usize) -> &[usize] {
        &self.layers[layer]
    }

    pub fn layers(&self) -> &[Vec<usize>] {
        &self.layers
    }

    pub fn contains(&self, layer: usize, module: usize) -> bool {
        self.layers
            .get(layer)
            .is_some_and(|genes| genes.binary_search(&module).is_ok())
    }

    /// Every `(layer, module)` pair on the path.
    pub fn active(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(l, genes)| genes.iter().map(move |&m| (l, m)))
    }

    pub fn validate(&self, arch: &Architecture) -> Result<()> {
        if self.layers.len() != arch.num_layers {
            return Err(Error::Genotype(format!(
                "{} layers, architecture has {}",
                self.layers.len(),
                arch.num_layers
            )));
        }
        for (l, genes) in self.layers.iter().enumerate() {
            if genes.is_empty() || genes.len() > arch.max_path_width {
                return Err(Error::Genotype(format!(
                    "layer {l} has {} modules, allowed 1..={}",
                    genes.len(),
                    arch.max_path_width
                )));
            }
            if let Some(&m) = genes.iter().find(|&&m| m >= arch.modules_per_layer) {
                return Err(Error::Genotype(format!(
                    "layer {l} module {m} out of range 0..{}",
                    arch.modules_per_layer
                )));
            }
            if genes.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Genotype(format!("layer {l} repeats a module index")));
            }
        }
        Ok(())
    }
}

/// Text form `layer:m,m|layer:m`, e.g. `0:3,7|1:2|2:5,19`.
impl fmt::Display for Genotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (l, genes) in self.layers.iter().enumerate() {
            if l > 0 {
                f.write_str("|")?;
            }
            write!(f, "{l}:")?;
            for (i, m) in genes.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{m}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for Genotype {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let bad = |why: &str| Error::Genotype(format!("cannot parse `{text}`: {why}"));
        let mut layers = Vec::new();
        for (l, part) in text.split('|').enumerate() {
            let (index, genes) = part.split_once(':').ok_or_else(|| bad("missing `:`"))?;
            let index: usize = index.trim().parse().map_err(|_| bad("bad layer index"))?;
            if index != l {
                return Err(bad("layers must be listed in order"));
            }
            let genes = if genes.trim().is_empty() {
                Vec::new()
            } else {
                genes
                    .split(',')
                    .map(|g| g.trim().parse::<usize>().map_err(|_| bad("bad module index")))
                    .collect::<Result<Vec<_>>>()?
            };
            layers.push(genes);
        }
        Genotype::new(layers)
    }
}

impl TryFrom<String> for Genotype {
    type Error = Error;

    fn try_from(text: String) -> Result<Self> {
        text.parse()
    }
}

impl From<Genotype> for String {
    fn from(g: Genotype) -> String {
        g.to_string()
    }
}

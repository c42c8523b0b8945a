use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chunking::ChunkingStrategy;
use crate::error::{Error, Result};

/// One of the eight retrieval configurations, `a` through `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub id: char,
    pub strategy: ChunkingStrategy,
    pub poly: bool,
    pub normalize_query: bool,
}

impl MethodConfig {
    pub const IDS: [char; 8] = ['a', 'b', 'c', 'd', 'e', 'f', 'g', 'h'];

    pub fn by_id(id: char) -> Result<Self> {
        let (strategy, poly, normalize_query) = match id {
            'a' => (ChunkingStrategy::blind_default(), false, false),
            'b' => (ChunkingStrategy::Flat, false, false),
            'c' => (ChunkingStrategy::Multilayer, false, false),
            'd' => (ChunkingStrategy::Multilayer, false, true),
            'e' => (ChunkingStrategy::blind_default(), true, false),
            'f' => (ChunkingStrategy::Flat, true, false),
            'g' => (ChunkingStrategy::Multilayer, true, false),
            'h' => (ChunkingStrategy::Multilayer, true, true),
            other => {
                return Err(Error::Config(format!(
                    "unknown method {other:?}; expected one of a..h"
                )))
            }
        };
        Ok(MethodConfig {
            id,
            strategy,
            poly,
            normalize_query,
        })
    }

    pub fn all() -> Vec<MethodConfig> {
        Self::IDS.iter().map(|&c| Self::by_id(c).expect("known id")).collect()
    }

    /// Parses "a,c,g" or "all".
    pub fn parse_list(spec: &str) -> Result<Vec<MethodConfig>> {
        if spec.trim().eq_ignore_ascii_case("all") {
            return Ok(Self::all());
        }
        let methods = spec
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<MethodConfig>>>()?;
        if methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        Ok(methods)
    }

    pub fn name(&self) -> String {
        let base = match self.strategy {
            ChunkingStrategy::Blind { .. } => "Blind",
            ChunkingStrategy::Flat => "Flat",
            ChunkingStrategy::Multilayer => "Multi-layer",
        };
        let mut name = if self.poly {
            format!("Poly+{base}")
        } else {
            base.to_string()
        };
        if self.normalize_query {
            name.push_str("+Norm");
        }
        name
    }

    /// Two methods that differ only in query normalization share an index.
    pub fn index_key(&self) -> String {
        format!("{}{}", self.strategy.name(), if self.poly { "-poly" } else { "" })
    }

    /// Containment pruning needs lineage, which only unit chunks carry.
    pub fn prunes(&self) -> bool {
        self.strategy == ChunkingStrategy::Multilayer
    }
}

impl FromStr for MethodConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Self::by_id(c.to_ascii_lowercase()),
            _ => Err(Error::Config(format!("unknown method {s:?}; expected one of a..h"))),
        }
    }
}

impl fmt::Display for MethodConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) {}", self.id, self.name())
    }
}

//! JSON documents exchanged between pipeline stages.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::game::{Coalition, NeuronId, Partition, PartitionMethod};

/// On-disk form of a [`Partition`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionFile {
    pub layer: i64,
    pub method: PartitionMethod,
    pub seed: u64,
    pub params: BTreeMap<String, serde_json::Value>,
    pub coalitions: Vec<Vec<u32>>,
}

impl PartitionFile {
    pub fn from_partition(p: &Partition, layer: i64) -> Self {
        PartitionFile {
            layer,
            method: p.method,
            seed: p.seed,
            params: p.params.clone(),
            coalitions: p
                .coalitions()
                .iter()
                .map(|c| c.iter().map(|i| i.0).collect())
                .collect(),
        }
    }

    pub fn to_partition(&self) -> Result<Partition> {
        let coalitions = self
            .coalitions
            .iter()
            .map(|c| Coalition::new(c.iter().copied().map(NeuronId)))
            .collect::<Result<Vec<_>>>()?;
        let mut p = Partition::new(coalitions, self.method, self.seed)?;
        p.params = self.params.clone();
        Ok(p)
    }
}

/// Lower-case transition label used in flow documents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Event {
    Persist,
    Split,
    Merge,
    Vanish,
}

impl Event {
    pub const ALL: [Event; 4] = [Event::Persist, Event::Split, Event::Merge, Event::Vanish];

    pub fn as_str(self) -> &'static str {
        match self {
            Event::Persist => "persist",
            Event::Split => "split",
            Event::Merge => "merge",
            Event::Vanish => "vanish",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowNode {
    pub layer: i64,
    pub coalition_id: usize,
    pub size: usize,
}

/// `source` and `target` index into [`FlowFile::nodes`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowLink {
    pub source: usize,
    pub target: usize,
    pub mass: f64,
    pub alpha: f64,
    pub beta: f64,
    pub event: Event,
}

/// Node/link document for rendering coalition flow across layers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowFile {
    pub nodes: Vec<FlowNode>,
    pub links: Vec<FlowLink>,
}

impl FlowFile {
    /// Every link must reference existing nodes.
    pub fn validate(&self) -> Result<()> {
        for (n, l) in self.links.iter().enumerate() {
            if l.source >= self.nodes.len() || l.target >= self.nodes.len() {
                return Err(domain(format!(
                    "link {n} references node {} but only {} nodes exist",
                    l.source.max(l.target),
                    self.nodes.len()
                )));
            }
        }
        Ok(())
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("document types serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_json_string(value)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_partition(path: impl AsRef<Path>) -> Result<(Partition, i64)> {
    let f: PartitionFile = read_json(path)?;
    Ok((f.to_partition()?, f.layer))
}

pub fn write_partition(p: &Partition, layer: i64, path: impl AsRef<Path>) -> Result<()> {
    write_json(&PartitionFile::from_partition(p, layer), path)
}

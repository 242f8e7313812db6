//! The mined shortcut hierarchy and its on-disk form.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::miner::MiningConfig;
use crate::stats::NodeStats;
use crate::template::Template;

/// Id of the virtual root above every POS-only single-slot template.
pub const ROOT_ID: &str = "root";

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortcutNode {
    pub id: String,
    pub template: Template,
    pub stats: NodeStats,
    /// Sorted; [`ROOT_ID`] for root-level templates.
    pub parents: Vec<String>,
    pub children: Vec<String>,
    /// Passed the mining thresholds (as opposed to a path or child node).
    pub selected: bool,
    pub aggregated: bool,
    /// Ascending indices into [`DatasetInfo::instance_ids`].
    pub covered: Vec<u32>,
}

impl ShortcutNode {
    pub fn covers(&self, instance: usize) -> bool {
        self.covered.binary_search(&(instance as u32)).is_ok()
    }
}

/// Identity of the dataset an artifact was mined from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub fingerprint: String,
    pub labels: Vec<String>,
    pub splits: Vec<String>,
    pub instance_ids: Vec<String>,
}

impl DatasetInfo {
    pub fn of(dataset: &Dataset) -> Self {
        Self {
            name: dataset.name.clone(),
            fingerprint: dataset.fingerprint(),
            labels: dataset.labels().to_vec(),
            splits: dataset.splits().to_vec(),
            instance_ids: dataset.instances().iter().map(|i| i.id.clone()).collect(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("artifact I/O on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed artifact: {0}")]
    Format(#[from] serde_json::Error),
    #[error("unsupported artifact format version {0}")]
    Version(u32),
}

#[derive(Deserialize)]
struct RawArtifact {
    format: u32,
    config: MiningConfig,
    dataset: DatasetInfo,
    root_children: Vec<String>,
    nodes: Vec<ShortcutNode>,
}

/// Mined hierarchy: every selected node, every node on a path from a
/// selected node up to the root, and the covered children of selected nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawArtifact")]
pub struct MinedArtifact {
    pub format: u32,
    pub config: MiningConfig,
    pub dataset: DatasetInfo,
    pub root_children: Vec<String>,
    /// Sorted by id.
    pub nodes: Vec<ShortcutNode>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl From<RawArtifact> for MinedArtifact {
    fn from(raw: RawArtifact) -> Self {
        MinedArtifact::new(raw.config, raw.dataset, raw.root_children, raw.nodes).with_format(raw.format)
    }
}

impl MinedArtifact {
    pub fn new(
        config: MiningConfig,
        dataset: DatasetInfo,
        root_children: Vec<String>,
        mut nodes: Vec<ShortcutNode>,
    ) -> Self {
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        let mut artifact = Self {
            format: FORMAT_VERSION,
            config,
            dataset,
            root_children,
            nodes,
            index: HashMap::new(),
        };
        artifact.reindex();
        artifact
    }

    fn with_format(mut self, format: u32) -> Self {
        self.format = format;
        self
    }

    pub(crate) fn reindex(&mut self) {
        self.nodes.sort_by(|a, b| a.id.cmp(&b.id));
        self.index = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();
    }

    pub fn node(&self, id: &str) -> Option<&ShortcutNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub(crate) fn node_mut(&mut self, id: &str) -> Option<&mut ShortcutNode> {
        self.index.get(id).map(|&i| &mut self.nodes[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn selected(&self) -> impl Iterator<Item = &ShortcutNode> {
        self.nodes.iter().filter(|n| n.selected)
    }

    pub fn selected_count(&self) -> usize {
        self.selected().count()
    }

    /// Selected shortcuts whose whole-set coverage and productivity reach
    /// the given minima, by coverage (descending) then id. Members of a
    /// listed aggregate are left out; they are reachable as its children.
    pub fn shortcut_table(&self, min_coverage: usize, min_productivity: f64) -> Vec<&ShortcutNode> {
        let passes = |n: &ShortcutNode| {
            n.selected
                && n.stats.whole.coverage >= min_coverage
                && n
                    .stats
                    .whole
                    .productivity
                    .value()
                    .is_some_and(|p| p >= min_productivity)
        };
        let mut rows: Vec<&ShortcutNode> = self
            .nodes
            .iter()
            .filter(|n| passes(n))
            .filter(|n| {
                !n.parents
                    .iter()
                    .filter_map(|p| self.node(p))
                    .any(|p| p.aggregated && passes(p))
            })
            .collect();
        rows.sort_by(|a, b| {
            b.stats
                .whole
                .coverage
                .cmp(&a.stats.whole.coverage)
                .then_with(|| a.id.cmp(&b.id))
        });
        rows
    }

    /// Children of a node (or of [`ROOT_ID`]).
    pub fn children_of(&self, id: &str) -> Vec<&ShortcutNode> {
        let ids = if id == ROOT_ID {
            &self.root_children
        } else {
            match self.node(id) {
                Some(n) => &n.children,
                None => return Vec::new(),
            }
        };
        ids.iter().filter_map(|c| self.node(c)).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Whether the artifact was mined from exactly this dataset content.
    pub fn matches_dataset(&self, dataset: &Dataset) -> bool {
        self.dataset.fingerprint == dataset.fingerprint()
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("artifact serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ArtifactError> {
        let artifact: MinedArtifact = serde_json::from_slice(bytes)?;
        if artifact.format != FORMAT_VERSION {
            return Err(ArtifactError::Version(artifact.format));
        }
        Ok(artifact)
    }

    pub fn save(&self, path: &Path) -> Result<(), ArtifactError> {
        fs::write(path, self.to_json()).map_err(|source| ArtifactError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ArtifactError> {
        let bytes = fs::read(path).map_err(|source| ArtifactError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&bytes)
    }
}

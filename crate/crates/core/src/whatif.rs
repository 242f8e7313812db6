//! What-if analysis over a group of shortcuts.
//!
//! The instances of the evaluation split covered by any selected shortcut
//! form the dirty set; the rest form the clean set. Group productivity
//! ignores disagreed instances, i.e. those covered by selected shortcuts
//! with conflicting prediction labels. Machine accuracy is compared across
//! the whole split, the dirty set and the clean set, and the dirty instances
//! can be removed and the dataset re-mined.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifact::MinedArtifact;
use crate::corpus::Dataset;
use crate::miner::{mine, ConfigError, MiningConfig};
use crate::stats::Quotient;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WhatIfError {
    #[error("unknown shortcut id {0:?}")]
    UnknownShortcut(String),
    #[error("unknown split {0:?}")]
    UnknownSplit(String),
    #[error("artifact was mined from a different dataset")]
    StaleArtifact,
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// A group of shortcuts evaluated on one split (or the whole dataset).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSelection {
    pub shortcut_ids: Vec<String>,
    #[serde(default)]
    pub split: Option<String>,
}

impl GroupSelection {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(ids: I, split: Option<&str>) -> Self {
        Self {
            shortcut_ids: ids.into_iter().map(Into::into).collect(),
            split: split.map(str::to_string),
        }
    }
}

/// Dataset indices of the split, divided into covered and uncovered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub dirty: Vec<usize>,
    pub clean: Vec<usize>,
}

impl Partition {
    pub fn whole(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.dirty.iter().chain(&self.clean).copied().collect();
        all.sort_unstable();
        all
    }
}

fn check(selection: &GroupSelection, artifact: &MinedArtifact, dataset: &Dataset) -> Result<(), WhatIfError> {
    if artifact.dataset.instance_ids.len() != dataset.len() {
        return Err(WhatIfError::StaleArtifact);
    }
    if let Some(split) = &selection.split {
        if dataset.split_position(split).is_none() {
            return Err(WhatIfError::UnknownSplit(split.clone()));
        }
    }
    match selection.shortcut_ids.iter().find(|id| !artifact.contains(id)) {
        Some(id) => Err(WhatIfError::UnknownShortcut(id.clone())),
        None => Ok(()),
    }
}

pub fn partition(
    selection: &GroupSelection,
    artifact: &MinedArtifact,
    dataset: &Dataset,
) -> Result<Partition, WhatIfError> {
    check(selection, artifact, dataset)?;
    let covered: BTreeSet<usize> = selection
        .shortcut_ids
        .iter()
        .flat_map(|id| artifact.node(id).unwrap().covered.iter().map(|&i| i as usize))
        .collect();
    let members = dataset
        .split_members(selection.split.as_deref())
        .map_err(|_| WhatIfError::UnknownSplit(selection.split.clone().unwrap_or_default()))?;
    let (dirty, clean) = members.into_iter().partition(|i| covered.contains(i));
    Ok(Partition { dirty, clean })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupProductivity {
    pub coverage: usize,
    pub disagreed: usize,
    pub agreed: usize,
    /// Agreed instances whose label equals the group's shared prediction,
    /// over all agreed instances.
    pub productivity: Quotient,
}

pub fn group_productivity(
    selection: &GroupSelection,
    artifact: &MinedArtifact,
    dataset: &Dataset,
) -> Result<GroupProductivity, WhatIfError> {
    let part = partition(selection, artifact, dataset)?;
    let split = selection.split.as_deref();
    let nodes: Vec<_> = selection
        .shortcut_ids
        .iter()
        .map(|id| artifact.node(id).unwrap())
        .collect();
    let mut disagreed = 0;
    let mut agreed = 0;
    let mut hits = 0;
    for &i in &part.dirty {
        let preds: BTreeSet<&str> = nodes
            .iter()
            .filter(|n| n.covers(i))
            .filter_map(|n| n.stats.get(split).and_then(|s| s.prediction.as_deref()))
            .collect();
        if preds.len() > 1 {
            disagreed += 1;
            continue;
        }
        agreed += 1;
        if preds.first().is_some_and(|p| *p == dataset.instances()[i].label) {
            hits += 1;
        }
    }
    Ok(GroupProductivity {
        coverage: part.dirty.len(),
        disagreed,
        agreed,
        productivity: Quotient::ratio(hits, agreed),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub model: String,
    pub whole: Quotient,
    pub dirty: Quotient,
    pub clean: Quotient,
    pub dirty_minus_whole: Quotient,
    pub clean_minus_whole: Quotient,
}

impl AccuracyRow {
    fn new(model: String, whole: Quotient, dirty: Quotient, clean: Quotient) -> Self {
        Self {
            model,
            whole,
            dirty,
            clean,
            dirty_minus_whole: dirty.minus(whole),
            clean_minus_whole: clean.minus(whole),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyBlock {
    pub models: Vec<AccuracyRow>,
    /// Unweighted mean over `models`; absent when no model qualifies.
    pub average: Option<AccuracyRow>,
    /// Models without a prediction for every instance of the split.
    pub omitted: Vec<String>,
}

fn mean(values: impl Iterator<Item = Quotient>) -> Quotient {
    let vals: Vec<f64> = values.filter_map(Quotient::value).collect();
    if vals.is_empty() {
        Quotient::Undefined
    } else {
        Quotient::Defined(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

pub fn accuracy_deltas(part: &Partition, dataset: &Dataset) -> AccuracyBlock {
    let whole = part.whole();
    let mut models = Vec::new();
    let mut omitted = Vec::new();
    for (m, model) in dataset.models().iter().enumerate() {
        if !dataset.covers(m, &whole) {
            log::warn!("model {:?} lacks predictions for the split; omitted", model.model_name);
            omitted.push(model.model_name.clone());
            continue;
        }
        models.push(AccuracyRow::new(
            model.model_name.clone(),
            dataset.accuracy(m, &whole).into(),
            dataset.accuracy(m, &part.dirty).into(),
            dataset.accuracy(m, &part.clean).into(),
        ));
    }
    let average = (!models.is_empty()).then(|| {
        AccuracyRow::new(
            "average".to_string(),
            mean(models.iter().map(|r| r.whole)),
            mean(models.iter().map(|r| r.dirty)),
            mean(models.iter().map(|r| r.clean)),
        )
    });
    AccuracyBlock {
        models,
        average,
        omitted,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WhatIfReport {
    pub split: Option<String>,
    pub shortcut_ids: Vec<String>,
    pub dirty_ids: Vec<String>,
    pub clean_ids: Vec<String>,
    pub group_coverage: usize,
    pub disagreed_count: usize,
    pub group_productivity: Quotient,
    pub accuracy: AccuracyBlock,
}

pub fn what_if(
    selection: &GroupSelection,
    artifact: &MinedArtifact,
    dataset: &Dataset,
) -> Result<WhatIfReport, WhatIfError> {
    let part = partition(selection, artifact, dataset)?;
    let group = group_productivity(selection, artifact, dataset)?;
    let ids = |idx: &[usize]| -> Vec<String> {
        idx.iter().map(|&i| dataset.instances()[i].id.clone()).collect()
    };
    Ok(WhatIfReport {
        split: selection.split.clone(),
        shortcut_ids: selection.shortcut_ids.clone(),
        dirty_ids: ids(&part.dirty),
        clean_ids: ids(&part.clean),
        group_coverage: group.coverage,
        disagreed_count: group.disagreed,
        group_productivity: group.productivity,
        accuracy: accuracy_deltas(&part, dataset),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub parent: String,
    pub parent_fingerprint: String,
    pub selection: GroupSelection,
    pub config: MiningConfig,
    pub removed_ids: Vec<String>,
}

impl Provenance {
    /// Stable key identifying this removal.
    pub fn key(&self) -> String {
        let mut ids = self.selection.shortcut_ids.clone();
        ids.sort();
        ids.dedup();
        let mut h = Sha256::new();
        h.update(self.parent_fingerprint.as_bytes());
        h.update([0]);
        h.update(ids.join(",").as_bytes());
        h.update([0]);
        h.update(self.selection.split.as_deref().unwrap_or("*").as_bytes());
        h.update([0]);
        h.update(serde_json::to_vec(&self.config).expect("config serializes"));
        hex::encode(&h.finalize()[..6])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShortcutRef {
    pub id: String,
    pub template: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetPresence {
    pub id: String,
    pub template: String,
    pub selected_after: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub removed_instances: usize,
    pub selected_before: usize,
    pub selected_after: usize,
    pub disappeared: Vec<ShortcutRef>,
    pub appeared: Vec<ShortcutRef>,
    pub targets: Vec<TargetPresence>,
    /// Average model accuracy on the evaluation split.
    pub accuracy_before: Quotient,
    pub accuracy_after: Quotient,
    pub accuracy_change: Quotient,
    /// Splits left without instances by the removal.
    pub emptied_splits: Vec<String>,
}

pub struct Removal {
    pub dataset: Dataset,
    pub artifact: MinedArtifact,
    pub comparison: Comparison,
    pub provenance: Provenance,
}

fn selected_refs(artifact: &MinedArtifact) -> BTreeSet<(String, String)> {
    artifact
        .selected()
        .filter(|n| !n.aggregated)
        .map(|n| (n.id.clone(), n.template.canonical()))
        .collect()
}

fn average_accuracy(dataset: &Dataset, split: Option<&str>) -> Quotient {
    let Ok(members) = dataset.split_members(split) else {
        return Quotient::Undefined;
    };
    let accs = (0..dataset.models().len())
        .filter(|&m| dataset.covers(m, &members))
        .map(|m| dataset.accuracy(m, &members).into());
    mean(accs)
}

/// Removes the dirty instances of the selection (scoped to its split, or
/// every split when it has none) and re-mines with the artifact's config.
pub fn remove_and_remine(
    selection: &GroupSelection,
    artifact: &MinedArtifact,
    dataset: &Dataset,
) -> Result<Removal, WhatIfError> {
    let part = partition(selection, artifact, dataset)?;
    let removed_ids: Vec<String> = part
        .dirty
        .iter()
        .map(|&i| dataset.instances()[i].id.clone())
        .collect();
    let provenance = Provenance {
        parent: dataset.name.clone(),
        parent_fingerprint: artifact.dataset.fingerprint.clone(),
        selection: selection.clone(),
        config: artifact.config.clone(),
        removed_ids,
    };
    let name = format!("{}-rm-{}", dataset.name, provenance.key());
    let derived = dataset.without(name, &part.dirty);
    let emptied_splits: Vec<String> = dataset
        .splits()
        .iter()
        .filter(|s| derived.split_position(s).is_none())
        .cloned()
        .collect();
    for s in &emptied_splits {
        log::warn!("removal leaves split {s:?} empty");
    }
    let remined = mine(&derived, &artifact.config)?;

    let before = selected_refs(artifact);
    let after = selected_refs(&remined);
    let as_refs = |set: BTreeSet<&(String, String)>| -> Vec<ShortcutRef> {
        set.into_iter()
            .map(|(id, t)| ShortcutRef {
                id: id.clone(),
                template: t.clone(),
            })
            .collect()
    };
    let targets = selection
        .shortcut_ids
        .iter()
        .map(|id| {
            let node = artifact.node(id).unwrap();
            TargetPresence {
                id: id.clone(),
                template: node.template.canonical(),
                selected_after: remined.node(id).is_some_and(|n| n.selected),
            }
        })
        .collect();
    let split = selection.split.as_deref();
    let accuracy_before = average_accuracy(dataset, split);
    let accuracy_after = average_accuracy(&derived, split);
    let comparison = Comparison {
        removed_instances: part.dirty.len(),
        selected_before: before.len(),
        selected_after: after.len(),
        disappeared: as_refs(before.difference(&after).collect()),
        appeared: as_refs(after.difference(&before).collect()),
        targets,
        accuracy_before,
        accuracy_after,
        accuracy_change: accuracy_after.minus(accuracy_before),
        emptied_splits,
    };
    Ok(Removal {
        dataset: derived,
        artifact: remined,
        comparison,
        provenance,
    })
}

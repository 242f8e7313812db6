//! Response bodies.

use std::collections::BTreeMap;

use serde::Serialize;
use shortcut_core::corpus::{dataset_stats, Dataset, LabelShare};
use shortcut_core::stats::{Quotient, ShortcutStats};
use shortcut_core::{Instance, ShortcutNode, SlotWord, Template};

use crate::registry::DatasetEntry;

/// Tokens shown on each side of a highlighted token in the neighbor style.
pub const NEIGHBOR_WINDOW: usize = 3;
pub const ELLIPSIS: &str = "...";

#[derive(Debug, Serialize)]
pub struct DatasetSummary {
    pub id: String,
    pub name: String,
    pub instances: usize,
    pub split_counts: BTreeMap<String, usize>,
    pub splits: Vec<String>,
    pub labels: Vec<String>,
    pub label_distribution: Vec<LabelShare>,
    pub models: Vec<String>,
    pub average_accuracy: Option<f64>,
    pub has_embeddings: bool,
    pub fingerprint: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derived_from: Option<DerivedFrom>,
}

#[derive(Debug, Serialize)]
pub struct DerivedFrom {
    pub parent: String,
    pub key: String,
    pub removed_instances: usize,
}

impl DatasetSummary {
    pub fn of(entry: &DatasetEntry) -> Self {
        let ds: &Dataset = &entry.dataset;
        let stats = dataset_stats(ds, None).expect("whole-set stats");
        let derived_from = entry.removal.as_ref().map(|r| DerivedFrom {
            parent: r["provenance"]["parent"].as_str().unwrap_or_default().to_string(),
            key: r["key"].as_str().unwrap_or_default().to_string(),
            removed_instances: r["comparison"]["removed_instances"].as_u64().unwrap_or(0) as usize,
        });
        Self {
            id: entry.id.clone(),
            name: ds.name.clone(),
            instances: ds.len(),
            split_counts: stats.split_counts.into_iter().collect(),
            splits: ds.splits().to_vec(),
            labels: ds.labels().to_vec(),
            label_distribution: stats.label_distribution,
            models: ds.models().iter().map(|m| m.model_name.clone()).collect(),
            average_accuracy: stats.average_accuracy,
            has_embeddings: ds.embeddings().is_some(),
            fingerprint: entry.fingerprint.clone(),
            derived_from,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SlotView {
    pub pos: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub word: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub words: Option<Vec<String>>,
}

#[derive(Debug, Serialize)]
pub struct SplitStats {
    pub split: String,
    #[serde(flatten)]
    pub stats: ShortcutStats,
}

#[derive(Debug, Serialize)]
pub struct ShortcutSummary {
    pub id: String,
    pub template: String,
    pub display: String,
    pub slots: Vec<SlotView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<usize>,
    pub whole: ShortcutStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitStats>,
    pub selected: bool,
    pub aggregated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub word_set: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub representative: Option<String>,
    pub parents: Vec<String>,
    pub child_count: usize,
}

impl ShortcutSummary {
    pub fn of(node: &ShortcutNode, split: Option<&str>) -> Self {
        let slots = node
            .template
            .slots()
            .into_iter()
            .map(|s| match &s.word {
                SlotWord::Any => SlotView {
                    pos: s.pos.clone(),
                    word: None,
                    words: None,
                },
                SlotWord::Word(w) => SlotView {
                    pos: s.pos.clone(),
                    word: Some(w.clone()),
                    words: None,
                },
                SlotWord::Set(set) => SlotView {
                    pos: s.pos.clone(),
                    word: Some(set.representative().to_string()),
                    words: Some(set.words().to_vec()),
                },
            })
            .collect();
        let (word_set, representative) = word_set(&node.template).unzip();
        Self {
            id: node.id.clone(),
            template: node.template.canonical(),
            display: node.template.display_form(),
            slots,
            gap: node.template.gap(),
            whole: node.stats.whole.clone(),
            split: split.and_then(|s| {
                node.stats.splits.get(s).map(|stats| SplitStats {
                    split: s.to_string(),
                    stats: stats.clone(),
                })
            }),
            selected: node.selected,
            aggregated: node.aggregated,
            word_set,
            representative,
            parents: node.parents.clone(),
            child_count: node.children.len(),
        }
    }
}

fn word_set(t: &Template) -> Option<(Vec<String>, String)> {
    t.slots().into_iter().find_map(|s| match &s.word {
        SlotWord::Set(set) => Some((set.words().to_vec(), set.representative().to_string())),
        _ => None,
    })
}

#[derive(Debug, Serialize)]
pub struct ShortcutDetail {
    pub shortcut: ShortcutSummary,
    /// By coverage, descending.
    pub children: Vec<ShortcutSummary>,
}

#[derive(Debug, Serialize)]
pub struct InstanceRow {
    pub id: String,
    pub split: String,
    pub label: String,
    /// Per model, whether its prediction is correct; models without a
    /// prediction for the instance are absent.
    pub correct: BTreeMap<String, bool>,
    pub accuracy: Quotient,
    /// Token indices matched by each occurrence of the shortcut.
    pub spans: Vec<Vec<usize>>,
    /// Half-open token ranges shown in `text`.
    pub windows: Vec<[usize; 2]>,
    pub text: String,
}

#[derive(Debug, Serialize)]
pub struct InstancePage {
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
    pub rows: Vec<InstanceRow>,
}

/// Token ranges within `NEIGHBOR_WINDOW` of any highlighted token, merged
/// when they touch.
pub fn neighbor_windows(len: usize, highlighted: &[usize]) -> Vec<[usize; 2]> {
    let mut marks: Vec<usize> = highlighted.iter().copied().filter(|&i| i < len).collect();
    marks.sort_unstable();
    marks.dedup();
    let mut out: Vec<[usize; 2]> = Vec::new();
    for i in marks {
        let lo = i.saturating_sub(NEIGHBOR_WINDOW);
        let hi = (i + NEIGHBOR_WINDOW + 1).min(len);
        match out.last_mut() {
            Some(last) if lo <= last[1] => last[1] = last[1].max(hi),
            _ => out.push([lo, hi]),
        }
    }
    out
}

/// Renders the shown windows, with ellipses where tokens are elided.
pub fn render_windows(instance: &Instance, windows: &[[usize; 2]]) -> String {
    let len = instance.tokens.len();
    let mut parts: Vec<&str> = Vec::new();
    let mut cursor = 0;
    for w in windows {
        if w[0] > cursor {
            parts.push(ELLIPSIS);
        }
        parts.extend(instance.tokens[w[0]..w[1]].iter().map(|t| t.surface.as_str()));
        cursor = w[1];
    }
    if cursor < len {
        parts.push(ELLIPSIS);
    }
    parts.join(" ")
}

pub fn instance_row(dataset: &Dataset, i: usize, spans: Vec<Vec<usize>>, neighbor: bool) -> InstanceRow {
    let inst = &dataset.instances()[i];
    let correct: BTreeMap<String, bool> = dataset
        .models()
        .iter()
        .enumerate()
        .filter_map(|(m, model)| dataset.is_correct(m, i).map(|c| (model.model_name.clone(), c)))
        .collect();
    let hits = correct.values().filter(|c| **c).count();
    let (windows, text) = if neighbor {
        let marks: Vec<usize> = spans.iter().flatten().copied().collect();
        let windows = neighbor_windows(inst.tokens.len(), &marks);
        let text = render_windows(inst, &windows);
        (windows, text)
    } else {
        (vec![[0, inst.tokens.len()]], inst.text.clone())
    };
    InstanceRow {
        id: inst.id.clone(),
        split: inst.split.clone(),
        label: inst.label.clone(),
        accuracy: Quotient::ratio(hits, correct.len()),
        correct,
        spans,
        windows,
        text,
    }
}

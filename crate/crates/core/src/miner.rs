//! Exhaustive template mining.
//!
//! Every instance contributes the set of templates it matches: one- and
//! two-slot patterns over its tokens, with and without the word literals.
//! Occurrences are collected as `(template key, instance)` pairs in parallel,
//! sorted and deduplicated so each instance counts once per template, then
//! grouped into a compact covered-instance table. Filtering and hierarchy
//! construction work on that table.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{DatasetInfo, MinedArtifact, ShortcutNode, ROOT_ID};
use crate::corpus::{Dataset, Instance};
use crate::stats::{dominant, NodeStats};
use crate::template::{Slot, Template};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitMinimum {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_coverage: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_productivity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub min_coverage: usize,
    pub min_productivity: f64,
    /// Optional per-split minima, all of which must hold as well.
    #[serde(default)]
    pub split_minimums: BTreeMap<String, SplitMinimum>,
    /// Largest number of tokens between the two slots; `None` is unbounded.
    #[serde(default)]
    pub max_gap: Option<usize>,
    #[serde(default)]
    pub case_fold: bool,
    /// Children of selected nodes below this coverage are left out of the
    /// hierarchy.
    #[serde(default = "default_child_floor")]
    pub child_min_coverage: usize,
}

fn default_child_floor() -> usize {
    2
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            min_coverage: 10,
            min_productivity: 0.75,
            split_minimums: BTreeMap::new(),
            max_gap: None,
            case_fold: false,
            child_min_coverage: default_child_floor(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("minimum coverage must be at least 1, got {0}")]
    Coverage(usize),
    #[error("minimum productivity must lie in [0, 1], got {0}")]
    Productivity(f64),
    #[error("split {split:?}: {message}")]
    Split { split: String, message: String },
}

impl MiningConfig {
    pub fn new(min_coverage: usize, min_productivity: f64) -> Self {
        Self {
            min_coverage,
            min_productivity,
            ..Default::default()
        }
    }

    pub fn with_max_gap(mut self, max_gap: Option<usize>) -> Self {
        self.max_gap = max_gap;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.min_coverage < 1 {
            return Err(ConfigError::Coverage(self.min_coverage));
        }
        if !(0.0..=1.0).contains(&self.min_productivity) {
            return Err(ConfigError::Productivity(self.min_productivity));
        }
        for (split, m) in &self.split_minimums {
            if m.min_coverage == Some(0) {
                return Err(ConfigError::Split {
                    split: split.clone(),
                    message: "minimum coverage must be at least 1".into(),
                });
            }
            if let Some(p) = m.min_productivity {
                if !(0.0..=1.0).contains(&p) {
                    return Err(ConfigError::Split {
                        split: split.clone(),
                        message: format!("minimum productivity {p} outside [0, 1]"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Whether a node with these statistics passes every configured minimum.
    /// An undefined split productivity fails any productivity minimum.
    pub fn accepts(&self, stats: &NodeStats) -> bool {
        let whole_ok = stats.whole.coverage >= self.min_coverage
            && stats
                .whole
                .productivity
                .value()
                .is_some_and(|p| p >= self.min_productivity);
        whole_ok
            && self.split_minimums.iter().all(|(split, m)| {
                let Some(s) = stats.splits.get(split) else {
                    return false;
                };
                m.min_coverage.is_none_or(|c| s.coverage >= c)
                    && m.min_productivity
                        .is_none_or(|p| s.productivity.value().is_some_and(|v| v >= p))
            })
    }

    fn gap_limit(&self) -> usize {
        self.max_gap.unwrap_or(usize::MAX)
    }
}

const NONE: u32 = u32::MAX;

/// Interned template: POS and word ids for up to two slots. Single-slot keys
/// carry `NONE` in `gap`, `pos2` and `word2`; a missing word is `NONE`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Key {
    pos1: u32,
    word1: u32,
    gap: u32,
    pos2: u32,
    word2: u32,
}

impl Key {
    fn single(pos: u32, word: u32) -> Self {
        Key {
            pos1: pos,
            word1: word,
            gap: NONE,
            pos2: NONE,
            word2: NONE,
        }
    }

    fn is_pair(&self) -> bool {
        self.gap != NONE
    }

    /// Mirrors [`Template::parents`].
    fn parents(&self, out: &mut Vec<Key>) {
        out.clear();
        if self.is_pair() {
            if self.word1 != NONE {
                out.push(Key { word1: NONE, ..*self });
            }
            if self.word2 != NONE {
                out.push(Key { word2: NONE, ..*self });
            }
            out.push(Key::single(self.pos1, self.word1));
            out.push(Key::single(self.pos2, self.word2));
        } else if self.word1 != NONE {
            out.push(Key::single(self.pos1, NONE));
        }
    }
}

#[derive(Default)]
struct Vocab {
    ids: HashMap<String, u32>,
    strings: Vec<String>,
}

impl Vocab {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.strings.len() as u32;
        self.ids.insert(s.to_string(), id);
        self.strings.push(s.to_string());
        id
    }

    fn get(&self, s: &str) -> Option<u32> {
        self.ids.get(s).copied()
    }

    fn slot(&self, pos: u32, word: u32) -> Slot {
        let pos = self.strings[pos as usize].clone();
        if word == NONE {
            Slot::pos(pos)
        } else {
            Slot::word(pos, self.strings[word as usize].clone())
        }
    }

    fn template(&self, key: &Key) -> Template {
        let left = self.slot(key.pos1, key.word1);
        if key.is_pair() {
            Template::pair(left, key.gap as usize, self.slot(key.pos2, key.word2))
        } else {
            Template::Single(left)
        }
    }

    /// Encodes a plain (non-aggregate) template already in the vocabulary.
    fn key(&self, template: &Template) -> Option<Key> {
        let slot = |s: &Slot| -> Option<(u32, u32)> {
            let pos = self.get(&s.pos)?;
            let word = match &s.word {
                crate::template::SlotWord::Any => NONE,
                crate::template::SlotWord::Word(w) => self.get(w)?,
                crate::template::SlotWord::Set(_) => return None,
            };
            Some((pos, word))
        };
        match template {
            Template::Single(s) => {
                let (p, w) = slot(s)?;
                Some(Key::single(p, w))
            }
            Template::Pair { left, gap, right } => {
                let (p1, w1) = slot(left)?;
                let (p2, w2) = slot(right)?;
                Some(Key {
                    pos1: p1,
                    word1: w1,
                    gap: u32::try_from(*gap).ok().filter(|g| *g != NONE)?,
                    pos2: p2,
                    word2: w2,
                })
            }
        }
    }
}

fn interned_tokens(vocab: &mut Vocab, instance: &Instance, case_fold: bool) -> Vec<(u32, u32)> {
    instance
        .tokens
        .iter()
        .map(|t| {
            let pos = vocab.intern(&t.pos);
            let word = if case_fold {
                vocab.intern(&t.surface.to_lowercase())
            } else {
                vocab.intern(&t.surface)
            };
            (pos, word)
        })
        .collect()
}

/// Pushes every template key occurring in one token sequence (duplicates
/// included).
fn enumerate_keys(tokens: &[(u32, u32)], max_gap: usize, out: &mut Vec<Key>) {
    for (p, &(pos1, word1)) in tokens.iter().enumerate() {
        out.push(Key::single(pos1, NONE));
        out.push(Key::single(pos1, word1));
        let last = p.saturating_add(max_gap).saturating_add(1).min(tokens.len() - 1);
        for (q, &(pos2, word2)) in tokens.iter().enumerate().take(last + 1).skip(p + 1) {
            let gap = (q - p - 1) as u32;
            for w1 in [NONE, word1] {
                for w2 in [NONE, word2] {
                    out.push(Key {
                        pos1,
                        word1: w1,
                        gap,
                        pos2,
                        word2: w2,
                    });
                }
            }
        }
    }
}

/// All distinct templates an instance matches under `config` (gap bound and
/// case folding).
pub fn enumerate_templates(instance: &Instance, config: &MiningConfig) -> BTreeSet<Template> {
    let mut vocab = Vocab::default();
    let tokens = interned_tokens(&mut vocab, instance, config.case_fold);
    let mut keys = Vec::new();
    if !tokens.is_empty() {
        enumerate_keys(&tokens, config.gap_limit(), &mut keys);
    }
    keys.iter().map(|k| vocab.template(k)).collect()
}

/// Covered-instance table for every template matching at least one
/// instance. Entries are sorted by an internal key order.
pub struct Accumulation {
    vocab: Vocab,
    keys: Vec<Key>,
    offsets: Vec<usize>,
    covered: Vec<u32>,
}

impl Accumulation {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    fn covered_at(&self, entry: usize) -> &[u32] {
        &self.covered[self.offsets[entry]..self.offsets[entry + 1]]
    }

    fn find(&self, key: &Key) -> Option<usize> {
        self.keys.binary_search(key).ok()
    }

    /// Ascending dataset indices covered by `template`, if it was accumulated.
    pub fn covered(&self, template: &Template) -> Option<&[u32]> {
        let key = self.vocab.key(template)?;
        self.find(&key).map(|e| self.covered_at(e))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Template, &[u32])> + '_ {
        (0..self.len()).map(|e| (self.vocab.template(&self.keys[e]), self.covered_at(e)))
    }

    pub fn stats(&self, dataset: &Dataset, template: &Template) -> Option<NodeStats> {
        let covered = self.covered(template)?;
        Some(NodeStats::compute(dataset, covered.iter().map(|&i| i as usize)))
    }
}

/// Collects every template's covered instances. Each instance counts at most
/// once per template.
pub fn accumulate(dataset: &Dataset, config: &MiningConfig) -> Accumulation {
    let mut vocab = Vocab::default();
    let interned: Vec<Vec<(u32, u32)>> = dataset
        .instances()
        .iter()
        .map(|inst| interned_tokens(&mut vocab, inst, config.case_fold))
        .collect();
    let max_gap = config.gap_limit();

    let mut pairs: Vec<(Key, u32)> = interned
        .par_iter()
        .enumerate()
        .fold(Vec::new, |mut acc, (i, tokens)| {
            let mut local = Vec::new();
            enumerate_keys(tokens, max_gap, &mut local);
            local.sort_unstable();
            local.dedup();
            acc.extend(local.into_iter().map(|k| (k, i as u32)));
            acc
        })
        .reduce(Vec::new, |mut a, mut b| {
            if a.len() < b.len() {
                std::mem::swap(&mut a, &mut b);
            }
            a.append(&mut b);
            a
        });
    drop(interned);
    pairs.par_sort_unstable();

    let mut keys = Vec::new();
    let mut offsets = vec![0];
    let mut covered = Vec::with_capacity(pairs.len());
    for (key, inst) in pairs {
        if keys.last() != Some(&key) {
            if !keys.is_empty() {
                offsets.push(covered.len());
            }
            keys.push(key);
        }
        covered.push(inst);
    }
    if !keys.is_empty() {
        offsets.push(covered.len());
    }
    keys.shrink_to_fit();
    covered.shrink_to_fit();
    Accumulation {
        vocab,
        keys,
        offsets,
        covered,
    }
}

/// Reusable split-by-label tally for threshold checks.
struct Tally<'a> {
    dataset: &'a Dataset,
    split_ids: Vec<(usize, &'a str)>,
    whole: Vec<usize>,
    by_split: Vec<usize>,
}

impl<'a> Tally<'a> {
    fn new(dataset: &'a Dataset) -> Self {
        let n_labels = dataset.labels().len();
        Self {
            dataset,
            split_ids: dataset
                .splits()
                .iter()
                .enumerate()
                .map(|(i, s)| (i, s.as_str()))
                .collect(),
            whole: vec![0; n_labels],
            by_split: vec![0; n_labels * dataset.splits().len()],
        }
    }

    /// Same decision as [`MiningConfig::accepts`] without building stats.
    fn accepts(&mut self, config: &MiningConfig, covered: &[u32]) -> bool {
        if covered.len() < config.min_coverage {
            return false;
        }
        let n_labels = self.whole.len();
        self.whole.iter_mut().for_each(|c| *c = 0);
        self.by_split.iter_mut().for_each(|c| *c = 0);
        for &i in covered {
            let i = i as usize;
            let l = self.dataset.label_index(i);
            self.whole[l] += 1;
            self.by_split[self.dataset.split_index(i) * n_labels + l] += 1;
        }
        match dominant(&self.whole) {
            Some((_, prod)) if prod >= config.min_productivity => {}
            _ => return false,
        }
        config.split_minimums.iter().all(|(split, m)| {
            let Some(&(s, _)) = self.split_ids.iter().find(|(_, name)| *name == split) else {
                return false;
            };
            let row = &self.by_split[s * n_labels..(s + 1) * n_labels];
            let coverage: usize = row.iter().sum();
            m.min_coverage.is_none_or(|c| coverage >= c)
                && m.min_productivity
                    .is_none_or(|p| dominant(row).is_some_and(|(_, v)| v >= p))
        })
    }
}

/// Templates passing every threshold in `config`, sorted.
pub fn filter_shortcuts(
    accumulation: &Accumulation,
    dataset: &Dataset,
    config: &MiningConfig,
) -> Vec<Template> {
    let mut out: Vec<Template> = selected_entries(accumulation, dataset, config)
        .into_iter()
        .map(|e| accumulation.vocab.template(&accumulation.keys[e]))
        .collect();
    out.sort();
    out
}

fn selected_entries(acc: &Accumulation, dataset: &Dataset, config: &MiningConfig) -> Vec<usize> {
    (0..acc.len())
        .into_par_iter()
        .map_init(
            || Tally::new(dataset),
            |tally, e| tally.accepts(config, acc.covered_at(e)).then_some(e),
        )
        .flatten()
        .collect()
}

/// Builds the hierarchy around the selected entries: ancestors up to the
/// root, the selected nodes, and their children with coverage at least
/// `config.child_min_coverage`.
fn build_hierarchy(
    acc: &Accumulation,
    dataset: &Dataset,
    config: &MiningConfig,
    selected: &[usize],
) -> MinedArtifact {
    let selected_set: HashSet<usize> = selected.iter().copied().collect();
    let mut in_graph: BTreeSet<usize> = BTreeSet::new();
    let mut buf = Vec::new();

    // ancestors
    let mut stack: Vec<usize> = selected.to_vec();
    while let Some(e) = stack.pop() {
        if !in_graph.insert(e) {
            continue;
        }
        acc.keys[e].parents(&mut buf);
        for p in &buf {
            let pe = acc.find(p).expect("ancestors cover a superset");
            if !in_graph.contains(&pe) {
                stack.push(pe);
            }
        }
    }

    // children
    let floor = config.child_min_coverage.max(1);
    let children: Vec<usize> = (0..acc.len())
        .into_par_iter()
        .filter(|&e| acc.offsets[e + 1] - acc.offsets[e] >= floor)
        .map_init(Vec::new, |buf, e| {
            acc.keys[e].parents(buf);
            buf.iter()
                .any(|p| acc.find(p).is_some_and(|pe| selected_set.contains(&pe)))
                .then_some(e)
        })
        .flatten()
        .collect();
    in_graph.extend(children);

    let ids: HashMap<usize, String> = in_graph
        .iter()
        .map(|&e| (e, acc.vocab.template(&acc.keys[e]).id()))
        .collect();

    let mut parents: HashMap<usize, Vec<String>> = HashMap::new();
    let mut child_lists: HashMap<usize, Vec<String>> = HashMap::new();
    let mut root_children = Vec::new();
    for &e in &in_graph {
        acc.keys[e].parents(&mut buf);
        let mut ps = Vec::new();
        if buf.is_empty() {
            ps.push(ROOT_ID.to_string());
            root_children.push(ids[&e].clone());
        }
        for p in &buf {
            if let Some(pe) = acc.find(p).filter(|pe| in_graph.contains(pe)) {
                ps.push(ids[&pe].clone());
                child_lists.entry(pe).or_default().push(ids[&e].clone());
            }
        }
        parents.insert(e, ps);
    }
    root_children.sort();

    let nodes: Vec<ShortcutNode> = in_graph
        .par_iter()
        .map(|&e| {
            let covered = acc.covered_at(e).to_vec();
            let mut ps = parents[&e].clone();
            ps.sort();
            let mut cs = child_lists.get(&e).cloned().unwrap_or_default();
            cs.sort();
            ShortcutNode {
                id: ids[&e].clone(),
                template: acc.vocab.template(&acc.keys[e]),
                stats: NodeStats::compute(dataset, covered.iter().map(|&i| i as usize)),
                parents: ps,
                children: cs,
                selected: selected_set.contains(&e),
                aggregated: false,
                covered,
            }
        })
        .collect();

    MinedArtifact::new(config.clone(), DatasetInfo::of(dataset), root_children, nodes)
}

/// Mines, filters and organizes shortcuts. Deterministic for fixed input.
pub fn mine(dataset: &Dataset, config: &MiningConfig) -> Result<MinedArtifact, ConfigError> {
    config.validate()?;
    let acc = accumulate(dataset, config);
    let mut selected = selected_entries(&acc, dataset, config);
    selected.sort_unstable();
    log::info!(
        "{}: {} templates accumulated, {} selected",
        dataset.name,
        acc.len(),
        selected.len()
    );
    Ok(build_hierarchy(&acc, dataset, config, &selected))
}

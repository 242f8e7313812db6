//! Merging of sibling shortcuts whose varying word is semantically similar.
//!
//! Two nodes are mergeable when they differ only in the word literal of one
//! slot, share the template with that word dropped as a parent, predict the
//! same label, and both words have embeddings. Mergeable groups are clustered
//! by complete linkage on `1 - cosine` distance and every cluster of two or
//! more becomes an aggregate node whose slot matches any member word.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::artifact::{MinedArtifact, ShortcutNode};
use crate::corpus::{Dataset, EmbeddingTable};
use crate::stats::NodeStats;
use crate::template::{Slot, SlotWord, Template, WordSet};

/// Default complete-linkage cut.
pub const DEFAULT_CUT: f64 = 0.75;

/// A cluster of two or more mergeable nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeGroup {
    pub aggregate_id: String,
    pub parent: String,
    /// Slot whose word varies across members.
    pub slot: usize,
    pub prediction: String,
    /// Member node ids, ordered like `words`.
    pub members: Vec<String>,
    pub words: Vec<String>,
    pub representative: String,
    pub covered: Vec<u32>,
    /// Pairwise distances between members, ordered like `members`.
    pub distances: Vec<Vec<f64>>,
}

/// The slot along which two templates differ by a word literal only.
fn varying_slot(a: &Template, b: &Template) -> Option<usize> {
    if a.slot_count() != b.slot_count() || a.gap() != b.gap() || a == b {
        return None;
    }
    (0..a.slot_count()).find(|&k| {
        let (sa, sb) = (a.slot(k).unwrap(), b.slot(k).unwrap());
        sa.literal().is_some()
            && sb.literal().is_some()
            && sa.pos == sb.pos
            && a.with_slot(k, sa.abstracted()) == b.with_slot(k, sb.abstracted())
    })
}

fn shared_parent(node: &ShortcutNode, k: usize) -> Template {
    let slot = node.template.slot(k).expect("slot in range");
    node.template.with_slot(k, slot.abstracted())
}

/// Whether two nodes may be merged; see the module docs.
pub fn mergeable(a: &ShortcutNode, b: &ShortcutNode, embeddings: &EmbeddingTable) -> bool {
    let Some(k) = varying_slot(&a.template, &b.template) else {
        return false;
    };
    let parent_id = shared_parent(a, k).id();
    let (Some(pa), Some(pb)) = (&a.stats.whole.prediction, &b.stats.whole.prediction) else {
        return false;
    };
    pa == pb
        && a.parents.contains(&parent_id)
        && b.parents.contains(&parent_id)
        && [a, b].iter().all(|n| {
            n.template.slot(k).and_then(Slot::literal).and_then(|w| embeddings.get(w)).is_some()
        })
}

/// `1 - cosine(u, v)`, in `[0, 2]`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> f64 {
    if u == v {
        return 0.0;
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    (1.0 - dot / (nu * nv)).clamp(0.0, 2.0)
}

/// Distance between the varying words of two nodes; infinite when the nodes
/// are not mergeable.
pub fn pair_distance(a: &ShortcutNode, b: &ShortcutNode, embeddings: &EmbeddingTable) -> f64 {
    if !mergeable(a, b, embeddings) {
        return f64::INFINITY;
    }
    let k = varying_slot(&a.template, &b.template).expect("mergeable");
    let word = |n: &ShortcutNode| n.template.slot(k).and_then(Slot::literal).unwrap().to_string();
    cosine_distance(
        embeddings.get(&word(a)).unwrap(),
        embeddings.get(&word(b)).unwrap(),
    )
}

/// Agglomerative clustering with complete linkage over `n` items. Merging
/// stops once the closest pair of clusters is farther apart than `cut`, so
/// every cluster's diameter is at most `cut`. Ties merge the pair with the
/// smallest indices first. Clusters are returned sorted by smallest member.
pub fn complete_linkage(n: usize, distance: impl Fn(usize, usize) -> f64, cut: f64) -> Vec<Vec<usize>> {
    let mut d = vec![f64::INFINITY; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = distance(i, j);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    let mut clusters: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if clusters[i].is_none() {
                continue;
            }
            for j in (i + 1)..n {
                if clusters[j].is_none() {
                    continue;
                }
                let v = d[i * n + j];
                if v <= cut && best.is_none_or(|(b, _, _)| v < b) {
                    best = Some((v, i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        let moved = clusters[j].take().unwrap();
        clusters[i].as_mut().unwrap().extend(moved);
        for k in 0..n {
            if k != i && clusters[k].is_some() {
                let v = d[i * n + k].max(d[j * n + k]);
                d[i * n + k] = v;
                d[k * n + i] = v;
            }
        }
    }
    let mut out: Vec<Vec<usize>> = clusters
        .into_iter()
        .flatten()
        .map(|mut c| {
            c.sort_unstable();
            c
        })
        .collect();
    out.sort();
    out
}

/// Index of the member with the smallest average distance to the others;
/// ties go to the lexicographically smallest word.
pub fn medoid(words: &[String], distances: &[Vec<f64>]) -> usize {
    let n = words.len();
    let avg = |i: usize| -> f64 {
        if n < 2 {
            return 0.0;
        }
        (0..n).filter(|&j| j != i).map(|j| distances[i][j]).sum::<f64>() / (n - 1) as f64
    };
    (0..n)
        .min_by(|&a, &b| {
            avg(a)
                .partial_cmp(&avg(b))
                .expect("finite distances")
                .then_with(|| words[a].cmp(&words[b]))
        })
        .expect("non-empty cluster")
}

/// Candidate groups keyed by (parent id, slot, prediction label).
fn candidate_groups<'a>(
    artifact: &'a MinedArtifact,
    embeddings: &EmbeddingTable,
) -> BTreeMap<(String, usize, String), Vec<&'a ShortcutNode>> {
    let mut groups: BTreeMap<(String, usize, String), Vec<&ShortcutNode>> = BTreeMap::new();
    for node in &artifact.nodes {
        let Some(pred) = &node.stats.whole.prediction else {
            continue;
        };
        for k in 0..node.template.slot_count() {
            let Some(word) = node.template.slot(k).and_then(Slot::literal) else {
                continue;
            };
            if embeddings.get(word).is_none() {
                continue;
            }
            let parent = shared_parent(node, k).id();
            if !node.parents.contains(&parent) || !artifact.contains(&parent) {
                continue;
            }
            groups
                .entry((parent, k, pred.clone()))
                .or_default()
                .push(node);
        }
    }
    groups.retain(|_, members| members.len() >= 2);
    groups
}

/// Clusters every mergeable group at `cut`; only clusters with two or more
/// members are returned.
pub fn cluster_groups(
    artifact: &MinedArtifact,
    embeddings: &EmbeddingTable,
    cut: f64,
) -> Vec<MergeGroup> {
    let mut out = Vec::new();
    for ((parent, k, prediction), members) in candidate_groups(artifact, embeddings) {
        let n = members.len();
        let mut dist = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = pair_distance(members[i], members[j], embeddings);
                dist[i][j] = v;
                dist[j][i] = v;
            }
        }
        for cluster in complete_linkage(n, |i, j| dist[i][j], cut) {
            if cluster.len() < 2 {
                continue;
            }
            let mut picked: Vec<(String, &ShortcutNode, usize)> = cluster
                .iter()
                .map(|&i| {
                    let w = members[i].template.slot(k).and_then(Slot::literal).unwrap();
                    (w.to_string(), members[i], i)
                })
                .collect();
            picked.sort_by(|a, b| a.0.cmp(&b.0));
            let words: Vec<String> = picked.iter().map(|p| p.0.clone()).collect();
            let distances: Vec<Vec<f64>> = picked
                .iter()
                .map(|a| picked.iter().map(|b| dist[a.2][b.2]).collect())
                .collect();
            let representative = words[medoid(&words, &distances)].clone();
            let covered: BTreeSet<u32> = picked
                .iter()
                .flat_map(|p| p.1.covered.iter().copied())
                .collect();
            let set = WordSet::new(words.clone(), representative.clone()).expect("two or more words");
            let template = members[0]
                .template
                .with_slot(k, Slot::set(members[0].template.slot(k).unwrap().pos.clone(), set));
            out.push(MergeGroup {
                aggregate_id: template.id(),
                parent: parent.clone(),
                slot: k,
                prediction: prediction.clone(),
                members: picked.iter().map(|p| p.1.id.clone()).collect(),
                words,
                representative,
                covered: covered.into_iter().collect(),
                distances,
            });
        }
    }
    out
}

/// Inserts one aggregate node per group: it takes the members' shared
/// parent, the members are reparented under it, and its statistics are
/// recomputed from the pooled covered instances.
pub fn insert_aggregates(artifact: &MinedArtifact, dataset: &Dataset, groups: &[MergeGroup]) -> MinedArtifact {
    let mut out = artifact.clone();
    for g in groups {
        if out.contains(&g.aggregate_id) {
            continue;
        }
        let first = out.node(&g.members[0]).expect("member in artifact");
        let pos = first.template.slot(g.slot).unwrap().pos.clone();
        let set = WordSet::new(g.words.clone(), g.representative.clone()).expect("valid group");
        let template = first.template.with_slot(g.slot, Slot::set(pos, set));
        debug_assert!(matches!(template.slot(g.slot).unwrap().word, SlotWord::Set(_)));
        let stats = NodeStats::compute(dataset, g.covered.iter().map(|&i| i as usize));
        let mut children = g.members.clone();
        children.sort();
        let node = ShortcutNode {
            id: g.aggregate_id.clone(),
            template,
            selected: out.config.accepts(&stats),
            stats,
            parents: vec![g.parent.clone()],
            children,
            aggregated: true,
            covered: g.covered.clone(),
        };
        for m in &g.members {
            let member = out.node_mut(m).expect("member in artifact");
            member.parents.retain(|p| *p != g.parent);
            member.parents.push(g.aggregate_id.clone());
            member.parents.sort();
        }
        let parent = out.node_mut(&g.parent).expect("parent in artifact");
        parent.children.retain(|c| !g.members.contains(c));
        parent.children.push(g.aggregate_id.clone());
        parent.children.sort();
        out.nodes.push(node);
        out.reindex();
    }
    out
}

/// Clusters and inserts aggregates in one step.
pub fn aggregate(
    artifact: &MinedArtifact,
    dataset: &Dataset,
    embeddings: &EmbeddingTable,
    cut: f64,
) -> (MinedArtifact, Vec<MergeGroup>) {
    let groups = cluster_groups(artifact, embeddings, cut);
    (insert_aggregates(artifact, dataset, &groups), groups)
}

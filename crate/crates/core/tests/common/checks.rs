//! Property checks shared by the integration tests and the acceptance
//! harness. Each returns `Err` with a description of the first violation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shortcut_core::aggregate::{aggregate, DEFAULT_CUT};
use shortcut_core::artifact::ShortcutNode;
use shortcut_core::corpus::{EmbeddingTable, ModelPredictions};
use shortcut_core::projection::{
    project, shortcut_distance, GlyphScale, GlyphStats, NormContext, OVERLAP_EPS,
};
use shortcut_core::stats::{NodeStats, ShortcutStats};
use shortcut_core::whatif::{group_productivity, partition, remove_and_remine, what_if, GroupSelection};
use shortcut_core::{mine, Dataset, MinedArtifact, MiningConfig, Slot, Template};

use super::*;

// ---------------------------------------------------------------------------
// What-if identities

/// Draws `count` random selections over `artifact` and checks the partition,
/// the accuracy weighting identity, singleton productivity and agreement with
/// the reference computation.
pub fn whatif_identities<R: Rng>(
    ds: &Dataset,
    artifact: &MinedArtifact,
    rng: &mut R,
    count: usize,
) -> Result<(), String> {
    if artifact.nodes.is_empty() {
        return Ok(());
    }
    let splits: Vec<Option<String>> = std::iter::once(None)
        .chain(ds.splits().iter().cloned().map(Some))
        .collect();
    for _ in 0..count {
        let k = rng.gen_range(1..=5.min(artifact.nodes.len()));
        let ids: Vec<String> = artifact
            .nodes
            .choose_multiple(rng, k)
            .map(|n| n.id.clone())
            .collect();
        let split = splits.choose(rng).unwrap().clone();
        let selection = GroupSelection::new(ids.clone(), split.as_deref());
        let ctx = format!("selection {ids:?} on {split:?}");

        let part = partition(&selection, artifact, ds).map_err(|e| format!("{ctx}: {e}"))?;
        let members = ds.split_members(split.as_deref()).unwrap();
        let union: BTreeSet<usize> = part.dirty.iter().chain(&part.clean).copied().collect();
        if union.len() != part.dirty.len() + part.clean.len() {
            return Err(format!("{ctx}: dirty and clean overlap"));
        }
        if union.into_iter().collect::<Vec<_>>() != members {
            return Err(format!("{ctx}: dirty and clean do not cover the split"));
        }

        let report = what_if(&selection, artifact, ds).map_err(|e| format!("{ctx}: {e}"))?;
        let (nw, nd, nc) = (members.len() as f64, part.dirty.len() as f64, part.clean.len() as f64);
        for row in &report.accuracy.models {
            let term = |n: f64, q: shortcut_core::Quotient| q.value().map_or(0.0, |v| n * v);
            let lhs = term(nw, row.whole);
            let rhs = term(nd, row.dirty) + term(nc, row.clean);
            if (lhs - rhs).abs() > 1e-9 {
                return Err(format!("{ctx}: model {} violates weighting: {lhs} vs {rhs}", row.model));
            }
        }

        let reference = reference_what_if(ds, artifact, &ids, split.as_deref());
        if report != reference {
            return Err(format!("{ctx}: report differs from the reference"));
        }

        if ids.len() == 1 {
            let node = artifact.node(&ids[0]).unwrap();
            let gp = group_productivity(&selection, artifact, ds).unwrap();
            let want = node.stats.get(split.as_deref()).unwrap().productivity;
            if gp.productivity != want || gp.disagreed != 0 {
                return Err(format!(
                    "{ctx}: singleton productivity {:?} vs node {:?}",
                    gp.productivity, want
                ));
            }
        }
    }
    Ok(())
}

/// A random corpus mined with loose thresholds, with predictions from three
/// models (one of which skips some instances).
pub fn random_whatif_fixture(seed: u64) -> (Dataset, MinedArtifact) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = random_dataset(&mut rng, 50, 12);
    random_predictions(&mut rng, &mut ds, 2, 0.7);
    let partial = ModelPredictions {
        model_name: "partial".into(),
        predicted: ds
            .instances()
            .iter()
            .filter(|_| rng.gen_bool(0.9))
            .map(|i| (i.id.clone(), i.label.clone()))
            .collect(),
    };
    ds.attach_predictions(vec![partial]).unwrap();
    let cfg = MiningConfig::new(rng.gen_range(1..=3), 0.6).with_max_gap(Some(3));
    let artifact = mine(&ds, &cfg).unwrap();
    (ds, artifact)
}

// ---------------------------------------------------------------------------
// Aggregation

fn cosine_distance(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    1.0 - dot / (nu * nv)
}

/// Random vectors drawn around a few centers so that some words cluster;
/// roughly one word in ten has no vector.
pub fn random_embeddings<R: Rng>(rng: &mut R, words: &BTreeSet<String>) -> EmbeddingTable {
    let dim = rng.gen_range(2..=6);
    let centers: Vec<Vec<f64>> = (0..rng.gen_range(1..=4))
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let spread = rng.gen_range(0.05..0.8);
    let mut table = EmbeddingTable::new(dim);
    for w in words {
        if rng.gen_bool(0.1) {
            continue;
        }
        let c = centers.choose(rng).unwrap();
        let mut v: Vec<f64> = c.iter().map(|x| x + rng.gen_range(-spread..spread)).collect();
        if v.iter().all(|x| *x == 0.0) {
            v[0] = 1.0;
        }
        table.insert(w.clone(), v);
    }
    table
}

/// Aggregates a random mined corpus under a random embedding table and
/// checks the cluster diameter, medoid, pooled coverage and idempotence.
/// Returns the number of groups formed.
pub fn aggregation_properties(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ds = random_dataset(&mut rng, 40, 10);
    let cfg = MiningConfig::new(rng.gen_range(1..=2), [0.0, 0.5, 0.6][rng.gen_range(0..3)]).with_max_gap(Some(2));
    let artifact = mine(&ds, &cfg).unwrap();
    let words: BTreeSet<String> = ds
        .instances()
        .iter()
        .flat_map(|i| i.tokens.iter().map(|t| t.surface.clone()))
        .collect();
    let emb = random_embeddings(&mut rng, &words);
    let (merged, groups) = aggregate(&artifact, &ds, &emb, DEFAULT_CUT);

    for g in &groups {
        let ctx = format!("seed {seed}, group {:?}", g.words);
        if g.members.len() < 2 {
            return Err(format!("{ctx}: fewer than two members"));
        }
        let vecs: Vec<&[f64]> = g
            .words
            .iter()
            .map(|w| emb.get(w).ok_or_else(|| format!("{ctx}: {w} has no embedding")))
            .collect::<Result<_, _>>()?;
        let n = vecs.len();
        let d: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { cosine_distance(vecs[i], vecs[j]) }).collect())
            .collect();
        let diameter = d.iter().flatten().cloned().fold(0.0, f64::max);
        if diameter > DEFAULT_CUT + 1e-9 {
            return Err(format!("{ctx}: diameter {diameter} exceeds the cut"));
        }
        let avg: Vec<f64> = d.iter().map(|row| row.iter().sum::<f64>() / (n - 1) as f64).collect();
        let best = avg.iter().cloned().fold(f64::INFINITY, f64::min);
        let rep = g.words.iter().position(|w| *w == g.representative).unwrap();
        if avg[rep] > best + 1e-12 {
            return Err(format!("{ctx}: representative {} is not a medoid", g.representative));
        }
        let tied_smaller = (0..n).any(|i| (avg[i] - best).abs() <= 1e-12 && g.words[i] < g.representative && avg[rep] - avg[i] > 1e-12);
        if tied_smaller {
            return Err(format!("{ctx}: medoid tie not broken toward the smaller word"));
        }

        let members: Vec<&ShortcutNode> = g.members.iter().map(|id| artifact.node(id).unwrap()).collect();
        let parents: Vec<BTreeSet<&String>> = members.iter().map(|m| m.parents.iter().collect()).collect();
        if !parents.iter().all(|p| p.contains(&g.parent)) {
            return Err(format!("{ctx}: members do not share the parent"));
        }
        if !members.iter().all(|m| m.stats.whole.prediction.as_deref() == Some(g.prediction.as_str())) {
            return Err(format!("{ctx}: members disagree on the prediction"));
        }
        let union: BTreeSet<u32> = members.iter().flat_map(|m| m.covered.iter().copied()).collect();
        let agg = merged
            .node(&g.aggregate_id)
            .ok_or_else(|| format!("{ctx}: aggregate node missing"))?;
        if agg.covered != union.iter().copied().collect::<Vec<_>>() {
            return Err(format!("{ctx}: aggregate coverage is not the union of members"));
        }
        let matcher = RTemplate::from_template(&agg.template);
        let matched: Vec<u32> = (0..ds.len())
            .filter(|&i| matcher.matches(&ds.instances()[i].tokens))
            .map(|i| i as u32)
            .collect();
        if matched != agg.covered {
            return Err(format!("{ctx}: aggregate template matches a different instance set"));
        }
        if agg.stats != NodeStats::compute(&ds, agg.covered.iter().map(|&i| i as usize)) {
            return Err(format!("{ctx}: aggregate statistics not recomputed from the pooled set"));
        }
    }

    let (again, more) = aggregate(&merged, &ds, &emb, DEFAULT_CUT);
    if !more.is_empty() || again.to_json() != merged.to_json() {
        return Err(format!("seed {seed}: aggregation is not idempotent"));
    }
    Ok(groups.len())
}

// ---------------------------------------------------------------------------
// Distance and layout

fn random_glyph<R: Rng>(rng: &mut R, labels: &[&str]) -> GlyphStats {
    GlyphStats {
        productivity: rng.gen_range(0.0..=1.0),
        coverage: rng.gen_range(1..=1000),
        prediction: labels.choose(rng).unwrap().to_string(),
    }
}

/// Checks the distance against direct substitution on random triples of
/// shortcut statistics. Each triple shares one normalization context.
pub fn distance_formula(seed: u64, triples: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = ["true", "false", "maybe"];
    for t in 0..triples {
        let trio: Vec<GlyphStats> = (0..3).map(|_| random_glyph(&mut rng, &labels)).collect();
        let ctx = NormContext::from_coverages(trio.iter().map(|g| g.coverage));
        let lo = trio.iter().map(|g| g.coverage).min().unwrap() as f64;
        let hi = trio.iter().map(|g| g.coverage).max().unwrap() as f64;
        let norm = |c: usize| if hi > lo { (c as f64 - lo) / (hi - lo) } else { 0.0 };
        for a in &trio {
            for b in &trio {
                let direct = (a.productivity - b.productivity).powi(2)
                    + (norm(a.coverage) - norm(b.coverage)).powi(2)
                    + if a.prediction == b.prediction { 0.0 } else { 1.0 };
                let got = shortcut_distance(a, b, &ctx);
                if (got - direct).abs() > 1e-12 {
                    return Err(format!("triple {t}: distance {got} vs direct {direct}"));
                }
                let mut relabeled = b.clone();
                relabeled.prediction = if a.prediction == "true" { "false".into() } else { "true".into() };
                let mut same = b.clone();
                same.prediction = a.prediction.clone();
                let differ = shortcut_distance(a, &relabeled, &ctx);
                let agree = shortcut_distance(a, &same, &ctx);
                if differ != agree + 1.0 {
                    return Err(format!("triple {t}: indicator contributes {} not 1", differ - agree));
                }
            }
        }
    }
    Ok(())
}

fn synthetic_node(i: usize, g: &GlyphStats) -> ShortcutNode {
    let template = Template::single(Slot::word("X", format!("w{i}")));
    let labels = vec!["true".to_string(), "false".to_string(), "maybe".to_string()];
    let top = (g.productivity * g.coverage as f64).round().max(1.0) as usize;
    let top = top.min(g.coverage);
    let rest = g.coverage - top;
    let p = labels.iter().position(|l| *l == g.prediction).unwrap();
    let mut counts = vec![0; 3];
    counts[p] = top;
    counts[(p + 1) % 3] = rest.min(top);
    counts[(p + 2) % 3] = rest - rest.min(top);
    let whole = ShortcutStats::from_counts(&labels, &counts);
    ShortcutNode {
        id: template.id(),
        template,
        stats: NodeStats {
            whole,
            splits: BTreeMap::new(),
        },
        parents: Vec::new(),
        children: Vec::new(),
        selected: true,
        aggregated: false,
        covered: Vec::new(),
    }
}

/// One seeded layout of `n` random shortcuts: no overlaps beyond the
/// tolerance, everything inside the unit square, arcs equal productivity,
/// and an identical layout on a second run.
pub fn layout_properties(seed: u64, n: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = ["true", "false", "maybe"];
    let distinct_labels = rng.gen_range(1..=3);
    // coarse statistics so that coincident points occur
    let nodes: Vec<ShortcutNode> = (0..n)
        .map(|i| {
            let g = GlyphStats {
                productivity: 0.0,
                coverage: [1, 5, 10, 50, 200][rng.gen_range(0..5)],
                prediction: labels[rng.gen_range(0..distinct_labels)].to_string(),
            };
            synthetic_node(i, &g)
        })
        .collect();
    let refs: Vec<&ShortcutNode> = nodes.iter().collect();
    let scale = GlyphScale::default();
    let points = project(&refs, None, &scale, seed).map_err(|e| e.to_string())?;
    if points.len() != n {
        return Err(format!("seed {seed}: {} points for {n} shortcuts", points.len()));
    }
    for (i, a) in points.iter().enumerate() {
        if a.x - a.radius < -1e-9 || a.y - a.radius < -1e-9 || a.x + a.radius > 1.0 + 1e-9 || a.y + a.radius > 1.0 + 1e-9 {
            return Err(format!("seed {seed}: glyph {} leaves the unit square", a.id));
        }
        let node = &nodes[i];
        if Some(a.arc) != node.stats.whole.productivity.value() {
            return Err(format!("seed {seed}: arc differs from productivity"));
        }
        for b in &points[i + 1..] {
            let d = (a.x - b.x).hypot(a.y - b.y);
            if d < a.radius + b.radius - OVERLAP_EPS {
                return Err(format!(
                    "seed {seed}, n {n}: {} and {} overlap by {}",
                    a.id,
                    b.id,
                    a.radius + b.radius - d
                ));
            }
        }
    }
    let again = project(&refs, None, &scale, seed).map_err(|e| e.to_string())?;
    if again != points {
        return Err(format!("seed {seed}: layout is not deterministic"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Remove and re-mine

/// 15 instances carry the target cue "cheap", 15 a competing cue, and 20
/// are neutral with balanced labels.
pub fn removal_fixture() -> Dataset {
    let nouns = ["phone", "shirt", "table", "lamp", "watch"];
    let mut instances = Vec::new();
    for i in 0..15 {
        let split = if i % 3 == 0 { "test" } else { "train" };
        instances.push(instance(
            &format!("c{i:02}"),
            &[("the", "DET"), (nouns[i % 5], "NOUN"), ("looks", "VERB"), ("cheap", "ADJ")],
            "neg",
            split,
        ));
        instances.push(instance(
            &format!("g{i:02}"),
            &[("this", "DET"), (nouns[(i + 2) % 5], "NOUN"), ("seems", "VERB"), ("great", "ADJ")],
            "pos",
            split,
        ));
    }
    for i in 0..20 {
        instances.push(instance(
            &format!("n{i:02}"),
            &[("a", "DET"), (nouns[i % 5], "NOUN"), ("is", "VERB"), ("here", "ADV")],
            if i % 2 == 0 { "pos" } else { "neg" },
            if i % 4 == 0 { "test" } else { "train" },
        ));
    }
    let mut ds = Dataset::from_instances("removal", instances).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    random_predictions(&mut rng, &mut ds, 2, 0.8);
    ds
}

pub struct RemovalOutcome {
    pub selected_before: usize,
    pub selected_after: usize,
    pub disappeared: usize,
    pub appeared: usize,
}

/// Removes the instances covered by the target cue, re-mines, and checks
/// the outcome against the reference miner.
pub fn remove_and_remine_check() -> Result<RemovalOutcome, String> {
    let ds = removal_fixture();
    let rcfg = RefConfig {
        min_coverage: 10,
        min_productivity: 0.75,
        max_gap: None,
        child_min_coverage: 2,
    };
    let artifact = mine(&ds, &mining_config(&rcfg)).unwrap();
    let target = Template::single(Slot::word("ADJ", "cheap"));
    let node = artifact.node(&target.id()).ok_or("target not mined")?;
    if !node.selected || node.stats.whole.coverage != 15 {
        return Err("target is not a selected shortcut with coverage 15".into());
    }
    let selection = GroupSelection::new([target.id()], None);
    let removal = remove_and_remine(&selection, &artifact, &ds).map_err(|e| e.to_string())?;
    let c = &removal.comparison;
    if c.removed_instances != 15 {
        return Err(format!("removed {} instances, expected 15", c.removed_instances));
    }
    if c.targets.len() != 1 || c.targets[0].selected_after {
        return Err("target still selected after removal".into());
    }
    if !c.disappeared.iter().any(|r| r.id == target.id()) {
        return Err("target not listed as disappeared".into());
    }
    if c.selected_after >= c.selected_before {
        return Err(format!(
            "selected count did not decrease: {} -> {}",
            c.selected_before, c.selected_after
        ));
    }
    let reference_after = reference_mine(&removal.dataset, &rcfg);
    compare_with_reference(&removal.artifact, &reference_after)?;
    if reference_after.nodes.get(&target.canonical()).is_some_and(|n| n.selected) {
        return Err("reference still selects the target".into());
    }
    let reference_before = reference_mine(&ds, &rcfg);
    let before = reference_before.selected().count();
    let after = reference_after.selected().count();
    if (before, after) != (c.selected_before, c.selected_after) {
        return Err(format!(
            "reference counts {before} -> {after} differ from {} -> {}",
            c.selected_before, c.selected_after
        ));
    }
    Ok(RemovalOutcome {
        selected_before: c.selected_before,
        selected_after: c.selected_after,
        disappeared: c.disappeared.len(),
        appeared: c.appeared.len(),
    })
}

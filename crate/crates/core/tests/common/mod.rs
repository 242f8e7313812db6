#![allow(dead_code)]

//! Test support shared by the integration suites: an independent
//! brute-force reference miner, a reference what-if computation, seeded
//! random corpora and the `mini_space` fixture.

pub mod checks;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use shortcut_core::corpus::{self, ModelPredictions};
use shortcut_core::stats::Quotient;
use shortcut_core::whatif::{AccuracyBlock, AccuracyRow, WhatIfReport};
use shortcut_core::{Dataset, Instance, MinedArtifact, SlotWord, Template, Token, ROOT_ID};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn golden_dir() -> PathBuf {
    fixture_dir().join("golden")
}

/// The `mini_space` corpus with its predictions and embeddings attached.
pub fn mini_space() -> Dataset {
    let dir = fixture_dir();
    let mut ds = corpus::load_dataset(&dir.join("mini_space.jsonl")).expect("fixture loads");
    corpus::load_predictions(&dir.join("mini_space.predictions.jsonl"), &mut ds).expect("predictions load");
    ds.set_embeddings(corpus::load_embeddings(&dir.join("mini_space.embeddings.tsv")).expect("embeddings load"));
    ds
}

/// Compares `actual` with a golden file; with `UPDATE_GOLDENS=1` the
/// golden file is (re)written from `expected` instead.
pub fn check_golden(name: &str, expected: &str, actual: &str) -> Result<(), String> {
    let path = golden_dir().join(name);
    if std::env::var("UPDATE_GOLDENS").is_ok_and(|v| v == "1") {
        fs::create_dir_all(golden_dir()).unwrap();
        fs::write(&path, expected).unwrap();
    }
    let golden = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if golden != actual {
        return Err(format!("{name}: output differs from golden file"));
    }
    if golden != expected {
        return Err(format!("{name}: reference differs from golden file"));
    }
    Ok(())
}

pub fn instance(id: &str, tokens: &[(&str, &str)], label: &str, split: &str) -> Instance {
    Instance {
        id: id.to_string(),
        text: tokens.iter().map(|t| t.0).collect::<Vec<_>>().join(" "),
        tokens: tokens.iter().map(|(w, p)| Token::new(*w, *p)).collect(),
        label: label.to_string(),
        split: split.to_string(),
    }
}

// ---------------------------------------------------------------------------
// Reference miner

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RSlot {
    pub pos: String,
    pub words: Option<BTreeSet<String>>,
}

impl RSlot {
    fn new(pos: &str, word: Option<&str>) -> Self {
        RSlot {
            pos: pos.to_string(),
            words: word.map(|w| BTreeSet::from([w.to_string()])),
        }
    }

    fn accepts(&self, tok: &Token) -> bool {
        tok.pos == self.pos && self.words.as_ref().is_none_or(|ws| ws.contains(&tok.surface))
    }

    fn literal(&self) -> Option<&String> {
        self.words.as_ref().filter(|ws| ws.len() == 1).and_then(|ws| ws.iter().next())
    }

    fn text(&self) -> String {
        match self.literal() {
            Some(w) => format!("[pos={} word={}]", self.pos, w),
            None => format!("[pos={}]", self.pos),
        }
    }

    fn without_word(&self) -> Self {
        RSlot {
            pos: self.pos.clone(),
            words: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RTemplate {
    One(RSlot),
    Two(RSlot, usize, RSlot),
}

impl RTemplate {
    pub fn from_template(t: &Template) -> Self {
        let slot = |s: &shortcut_core::Slot| RSlot {
            pos: s.pos.clone(),
            words: match &s.word {
                SlotWord::Any => None,
                SlotWord::Word(w) => Some(BTreeSet::from([w.clone()])),
                SlotWord::Set(set) => Some(set.words().iter().cloned().collect()),
            },
        };
        match t {
            Template::Single(s) => RTemplate::One(slot(s)),
            Template::Pair { left, gap, right } => RTemplate::Two(slot(left), *gap, slot(right)),
        }
    }

    /// Canonical text of a plain template (literal words only).
    pub fn canonical(&self) -> String {
        match self {
            RTemplate::One(s) => s.text(),
            RTemplate::Two(a, g, b) => format!("{} gap={} {}", a.text(), g, b.text()),
        }
    }

    pub fn matches(&self, tokens: &[Token]) -> bool {
        match self {
            RTemplate::One(s) => tokens.iter().any(|t| s.accepts(t)),
            RTemplate::Two(a, g, b) => {
                for i in 0..tokens.len() {
                    let j = i + g + 1;
                    if j < tokens.len() && a.accepts(&tokens[i]) && b.accepts(&tokens[j]) {
                        return true;
                    }
                }
                false
            }
        }
    }

    pub fn parents(&self) -> Vec<RTemplate> {
        let mut out = Vec::new();
        match self {
            RTemplate::One(s) => {
                if s.words.is_some() {
                    out.push(RTemplate::One(s.without_word()));
                }
            }
            RTemplate::Two(a, g, b) => {
                if a.words.is_some() {
                    out.push(RTemplate::Two(a.without_word(), *g, b.clone()));
                }
                if b.words.is_some() {
                    out.push(RTemplate::Two(a.clone(), *g, b.without_word()));
                }
                out.push(RTemplate::One(a.clone()));
                out.push(RTemplate::One(b.clone()));
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefStats {
    pub coverage: usize,
    pub distribution: BTreeMap<String, usize>,
    pub prediction: Option<String>,
    pub productivity: Option<f64>,
}

impl RefStats {
    fn of(labels_in_order: &[String], labels: &[&str]) -> Self {
        let mut distribution: BTreeMap<String, usize> =
            labels_in_order.iter().map(|l| (l.clone(), 0)).collect();
        for l in labels {
            *distribution.get_mut(*l).unwrap() += 1;
        }
        let coverage = labels.len();
        let mut prediction: Option<&String> = None;
        let mut best = 0;
        for l in labels_in_order {
            if distribution[l] > best {
                best = distribution[l];
                prediction = Some(l);
            }
        }
        RefStats {
            coverage,
            distribution,
            prediction: prediction.cloned(),
            productivity: (coverage > 0).then(|| best as f64 / coverage as f64),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RefNode {
    pub template: RTemplate,
    pub covered: Vec<usize>,
    pub whole: RefStats,
    pub splits: BTreeMap<String, RefStats>,
    pub selected: bool,
    pub parents: BTreeSet<String>,
    pub children: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct RefConfig {
    pub min_coverage: usize,
    pub min_productivity: f64,
    pub max_gap: Option<usize>,
    pub child_min_coverage: usize,
}

#[derive(Debug, Clone)]
pub struct RefOutput {
    pub nodes: BTreeMap<String, RefNode>,
    pub root_children: BTreeSet<String>,
}

impl RefOutput {
    pub fn selected(&self) -> impl Iterator<Item = (&String, &RefNode)> {
        self.nodes.iter().filter(|(_, n)| n.selected)
    }
}

fn first_appearance<'a>(values: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for v in values {
        if !out.contains(v) {
            out.push(v.clone());
        }
    }
    out
}

fn candidate_templates(instances: &[Instance], max_gap: Option<usize>) -> BTreeSet<RTemplate> {
    let mut out = BTreeSet::new();
    for inst in instances {
        let toks = &inst.tokens;
        for i in 0..toks.len() {
            let a_opts = [RSlot::new(&toks[i].pos, None), RSlot::new(&toks[i].pos, Some(&toks[i].surface))];
            for a in &a_opts {
                out.insert(RTemplate::One(a.clone()));
            }
            for (j, tj) in toks.iter().enumerate().skip(i + 1) {
                let gap = j - i - 1;
                if max_gap.is_some_and(|m| gap > m) {
                    break;
                }
                for a in &a_opts {
                    for b in [RSlot::new(&tj.pos, None), RSlot::new(&tj.pos, Some(&tj.surface))] {
                        out.insert(RTemplate::Two(a.clone(), gap, b));
                    }
                }
            }
        }
    }
    out
}

/// Brute force: enumerate every candidate template, scan every instance for
/// it, then walk the lattice.
pub fn reference_mine(ds: &Dataset, cfg: &RefConfig) -> RefOutput {
    let instances = ds.instances();
    let label_order = first_appearance(instances.iter().map(|i| &i.label));
    let split_order = first_appearance(instances.iter().map(|i| &i.split));

    let mut all: BTreeMap<RTemplate, Vec<usize>> = BTreeMap::new();
    for t in candidate_templates(instances, cfg.max_gap) {
        let covered: Vec<usize> = (0..instances.len()).filter(|&i| t.matches(&instances[i].tokens)).collect();
        all.insert(t, covered);
    }
    let stats_of = |covered: &[usize]| -> (RefStats, BTreeMap<String, RefStats>) {
        let labels: Vec<&str> = covered.iter().map(|&i| instances[i].label.as_str()).collect();
        let whole = RefStats::of(&label_order, &labels);
        let splits = split_order
            .iter()
            .map(|s| {
                let ls: Vec<&str> = covered
                    .iter()
                    .filter(|&&i| &instances[i].split == s)
                    .map(|&i| instances[i].label.as_str())
                    .collect();
                (s.clone(), RefStats::of(&label_order, &ls))
            })
            .collect();
        (whole, splits)
    };
    let is_selected = |covered: &[usize]| -> bool {
        let (whole, _) = stats_of(covered);
        whole.coverage >= cfg.min_coverage && whole.productivity.is_some_and(|p| p >= cfg.min_productivity)
    };

    let selected: BTreeSet<RTemplate> = all
        .iter()
        .filter(|(_, c)| is_selected(c))
        .map(|(t, _)| t.clone())
        .collect();

    let mut graph: BTreeSet<RTemplate> = BTreeSet::new();
    let mut frontier: Vec<RTemplate> = selected.iter().cloned().collect();
    while let Some(t) = frontier.pop() {
        if graph.insert(t.clone()) {
            frontier.extend(t.parents());
        }
    }
    let floor = cfg.child_min_coverage.max(1);
    for (t, covered) in &all {
        if covered.len() >= floor && t.parents().iter().any(|p| selected.contains(p)) {
            graph.insert(t.clone());
        }
    }

    let mut nodes: BTreeMap<String, RefNode> = BTreeMap::new();
    let mut root_children = BTreeSet::new();
    for t in &graph {
        let covered = all[t].clone();
        let (whole, splits) = stats_of(&covered);
        let mut parents: BTreeSet<String> =
            t.parents().iter().filter(|p| graph.contains(p)).map(|p| p.canonical()).collect();
        if t.parents().is_empty() {
            parents.insert(ROOT_ID.to_string());
            root_children.insert(t.canonical());
        }
        nodes.insert(
            t.canonical(),
            RefNode {
                template: t.clone(),
                covered,
                whole,
                splits,
                selected: selected.contains(t),
                parents,
                children: BTreeSet::new(),
            },
        );
    }
    let edges: Vec<(String, String)> = nodes
        .iter()
        .flat_map(|(c, n)| n.parents.iter().filter(|p| *p != ROOT_ID).map(move |p| (p.clone(), c.clone())))
        .collect();
    for (p, c) in edges {
        nodes.get_mut(&p).unwrap().children.insert(c);
    }
    RefOutput { nodes, root_children }
}

fn compare_stats(what: &str, a: &shortcut_core::ShortcutStats, r: &RefStats) -> Result<(), String> {
    if a.coverage != r.coverage {
        return Err(format!("{what}: coverage {} vs reference {}", a.coverage, r.coverage));
    }
    if a.label_distribution != r.distribution {
        return Err(format!(
            "{what}: label distribution {:?} vs reference {:?}",
            a.label_distribution, r.distribution
        ));
    }
    if a.prediction != r.prediction {
        return Err(format!("{what}: prediction {:?} vs reference {:?}", a.prediction, r.prediction));
    }
    if a.productivity.value() != r.productivity {
        return Err(format!("{what}: productivity {:?} vs reference {:?}", a.productivity, r.productivity));
    }
    Ok(())
}

/// Field-by-field comparison of a mined artifact against the reference.
pub fn compare_with_reference(artifact: &MinedArtifact, reference: &RefOutput) -> Result<(), String> {
    let canon: BTreeMap<&str, String> = artifact
        .nodes
        .iter()
        .map(|n| (n.id.as_str(), n.template.canonical()))
        .collect();
    let name = |id: &str| -> String {
        if id == ROOT_ID {
            ROOT_ID.to_string()
        } else {
            canon.get(id).cloned().unwrap_or_else(|| format!("<dangling {id}>"))
        }
    };
    let got: BTreeSet<&String> = canon.values().collect();
    let want: BTreeSet<&String> = reference.nodes.keys().collect();
    if got != want {
        let missing: Vec<_> = want.difference(&got).take(5).collect();
        let extra: Vec<_> = got.difference(&want).take(5).collect();
        return Err(format!("template sets differ: missing {missing:?}, extra {extra:?}"));
    }
    let roots: BTreeSet<String> = artifact.root_children.iter().map(|id| name(id)).collect();
    if roots != reference.root_children {
        return Err(format!("root children {roots:?} vs reference {:?}", reference.root_children));
    }
    for node in &artifact.nodes {
        let c = &canon[node.id.as_str()];
        let r = &reference.nodes[c];
        if node.id != node.template.id() {
            return Err(format!("{c}: id does not derive from the template"));
        }
        let covered: Vec<usize> = node.covered.iter().map(|&i| i as usize).collect();
        if covered != r.covered {
            return Err(format!("{c}: covered {covered:?} vs reference {:?}", r.covered));
        }
        compare_stats(c, &node.stats.whole, &r.whole)?;
        if node.stats.splits.len() != r.splits.len() {
            return Err(format!("{c}: split count differs"));
        }
        for (s, rs) in &r.splits {
            let a = node.stats.splits.get(s).ok_or_else(|| format!("{c}: missing split {s}"))?;
            compare_stats(&format!("{c} [{s}]"), a, rs)?;
        }
        if node.selected != r.selected {
            return Err(format!("{c}: selected {} vs reference {}", node.selected, r.selected));
        }
        let parents: BTreeSet<String> = node.parents.iter().map(|p| name(p)).collect();
        if parents != r.parents {
            return Err(format!("{c}: parents {parents:?} vs reference {:?}", r.parents));
        }
        let children: BTreeSet<String> = node.children.iter().map(|p| name(p)).collect();
        if children != r.children {
            return Err(format!("{c}: children {children:?} vs reference {:?}", r.children));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Random corpora

const POS_TAGS: [&str; 5] = ["DET", "NOUN", "VERB", "ADJ", "ADP"];
const WORDS: [[&str; 3]; 5] = [
    ["the", "a", "this"],
    ["dog", "park", "ball"],
    ["runs", "sees", "is"],
    ["big", "red", "old"],
    ["in", "on", "near"],
];

pub fn random_dataset<R: Rng>(rng: &mut R, max_instances: usize, max_tokens: usize) -> Dataset {
    let n = rng.gen_range(1..=max_instances);
    let n_labels = rng.gen_range(2..=3);
    let labels = ["yes", "no", "maybe"];
    let splits = ["train", "dev", "test"];
    let instances = (0..n)
        .map(|i| {
            let len = rng.gen_range(1..=max_tokens);
            let toks: Vec<Token> = (0..len)
                .map(|_| {
                    let p = rng.gen_range(0..POS_TAGS.len());
                    let word_pos = if rng.gen_bool(0.1) { rng.gen_range(0..POS_TAGS.len()) } else { p };
                    Token::new(WORDS[word_pos][rng.gen_range(0..3)], POS_TAGS[p])
                })
                .collect();
            Instance {
                id: format!("r{i}"),
                text: toks.iter().map(|t| t.surface.as_str()).collect::<Vec<_>>().join(" "),
                tokens: toks,
                label: labels[rng.gen_range(0..n_labels)].to_string(),
                split: splits[rng.gen_range(0..splits.len())].to_string(),
            }
        })
        .collect();
    Dataset::from_instances("random", instances).expect("valid random corpus")
}

pub fn random_config<R: Rng>(rng: &mut R) -> RefConfig {
    RefConfig {
        min_coverage: rng.gen_range(1..=4),
        min_productivity: [0.0, 0.5, 0.6, 0.75, 0.9, 1.0][rng.gen_range(0..6)],
        max_gap: Some(rng.gen_range(0..=4)),
        child_min_coverage: rng.gen_range(1..=3),
    }
}

pub fn mining_config(cfg: &RefConfig) -> shortcut_core::MiningConfig {
    let mut c = shortcut_core::MiningConfig::new(cfg.min_coverage, cfg.min_productivity).with_max_gap(cfg.max_gap);
    c.child_min_coverage = cfg.child_min_coverage;
    c
}

/// Attaches `k` models predicting each label correctly with probability `acc`.
pub fn random_predictions<R: Rng>(rng: &mut R, ds: &mut Dataset, k: usize, acc: f64) {
    let labels = ds.labels().to_vec();
    let preds = (0..k)
        .map(|m| ModelPredictions {
            model_name: format!("m{m}"),
            predicted: ds
                .instances()
                .iter()
                .map(|inst| {
                    let p = if rng.gen_bool(acc) {
                        inst.label.clone()
                    } else {
                        labels[rng.gen_range(0..labels.len())].clone()
                    };
                    (inst.id.clone(), p)
                })
                .collect(),
        })
        .collect();
    ds.attach_predictions(preds).expect("predictions are valid");
}

// ---------------------------------------------------------------------------
// Reference what-if

fn quotient(num: usize, den: usize) -> Quotient {
    if den == 0 {
        Quotient::Undefined
    } else {
        Quotient::Defined(num as f64 / den as f64)
    }
}

fn diff(a: Quotient, b: Quotient) -> Quotient {
    match (a.value(), b.value()) {
        (Some(x), Some(y)) => Quotient::Defined(x - y),
        _ => Quotient::Undefined,
    }
}

fn average(xs: &[Quotient]) -> Quotient {
    let vals: Vec<f64> = xs.iter().filter_map(|q| q.value()).collect();
    if vals.is_empty() {
        Quotient::Undefined
    } else {
        Quotient::Defined(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

fn row(model: &str, whole: Quotient, dirty: Quotient, clean: Quotient) -> AccuracyRow {
    AccuracyRow {
        model: model.to_string(),
        whole,
        dirty,
        clean,
        dirty_minus_whole: diff(dirty, whole),
        clean_minus_whole: diff(clean, whole),
    }
}

/// Recomputes a what-if report from the instances and templates alone.
pub fn reference_what_if(ds: &Dataset, artifact: &MinedArtifact, ids: &[String], split: Option<&str>) -> WhatIfReport {
    let instances = ds.instances();
    let in_split: Vec<usize> = (0..instances.len())
        .filter(|&i| split.is_none_or(|s| instances[i].split == s))
        .collect();
    let templates: Vec<RTemplate> = ids
        .iter()
        .map(|id| RTemplate::from_template(&artifact.node(id).unwrap().template))
        .collect();
    let label_order = first_appearance(instances.iter().map(|i| &i.label));
    let prediction: Vec<Option<String>> = templates
        .iter()
        .map(|t| {
            let ls: Vec<&str> = in_split
                .iter()
                .filter(|&&i| t.matches(&instances[i].tokens))
                .map(|&i| instances[i].label.as_str())
                .collect();
            RefStats::of(&label_order, &ls).prediction
        })
        .collect();
    let mut dirty = Vec::new();
    let mut clean = Vec::new();
    let mut disagreed = 0;
    let mut agreed = 0;
    let mut hits = 0;
    for &i in &in_split {
        let covering: Vec<usize> = (0..templates.len())
            .filter(|&k| templates[k].matches(&instances[i].tokens))
            .collect();
        if covering.is_empty() {
            clean.push(i);
            continue;
        }
        dirty.push(i);
        let preds: BTreeSet<&String> = covering.iter().filter_map(|&k| prediction[k].as_ref()).collect();
        if preds.len() > 1 {
            disagreed += 1;
        } else {
            agreed += 1;
            if preds.first().is_some_and(|p| **p == instances[i].label) {
                hits += 1;
            }
        }
    }
    let mut models = Vec::new();
    let mut omitted = Vec::new();
    for m in ds.models() {
        let acc = |set: &[usize]| -> Option<Quotient> {
            let mut correct = 0;
            for &i in set {
                let p = m.predicted.get(&instances[i].id)?;
                if *p == instances[i].label {
                    correct += 1;
                }
            }
            Some(quotient(correct, set.len()))
        };
        match (acc(&in_split), acc(&dirty), acc(&clean)) {
            (Some(w), Some(d), Some(c)) => models.push(row(&m.model_name, w, d, c)),
            _ => omitted.push(m.model_name.clone()),
        }
    }
    let average = (!models.is_empty()).then(|| {
        let col = |f: fn(&AccuracyRow) -> Quotient| models.iter().map(f).collect::<Vec<_>>();
        row(
            "average",
            average(&col(|r| r.whole)),
            average(&col(|r| r.dirty)),
            average(&col(|r| r.clean)),
        )
    });
    let to_ids = |set: &[usize]| set.iter().map(|&i| instances[i].id.clone()).collect();
    WhatIfReport {
        split: split.map(str::to_string),
        shortcut_ids: ids.to_vec(),
        dirty_ids: to_ids(&dirty),
        clean_ids: to_ids(&clean),
        group_coverage: dirty.len(),
        disagreed_count: disagreed,
        group_productivity: quotient(hits, agreed),
        accuracy: AccuracyBlock {
            models,
            average,
            omitted,
        },
    }
}

/// One line per selected shortcut: canonical form, coverage, prediction and
/// productivity.
pub fn selected_lines<'a>(rows: impl Iterator<Item = (String, usize, Option<String>, Option<f64>)> + 'a) -> String {
    let mut lines: Vec<String> = rows
        .map(|(c, cov, pred, prod)| {
            format!(
                "{c}\t{cov}\t{}\t{}\n",
                pred.unwrap_or_default(),
                prod.map_or("undefined".to_string(), |p| format!("{p:.6}"))
            )
        })
        .collect();
    lines.sort();
    lines.concat()
}

pub fn artifact_selected_lines(a: &MinedArtifact) -> String {
    selected_lines(a.selected().map(|n| {
        (
            n.template.canonical(),
            n.stats.whole.coverage,
            n.stats.whole.prediction.clone(),
            n.stats.whole.productivity.value(),
        )
    }))
}

pub fn reference_selected_lines(r: &RefOutput) -> String {
    selected_lines(
        r.selected()
            .map(|(c, n)| (c.clone(), n.whole.coverage, n.whole.prediction.clone(), n.whole.productivity)),
    )
}

// ---------------------------------------------------------------------------
// mini_space goldens

pub const MINI_SPACE_SELECTION: [&str; 2] = ["[pos=ADP word=inside]", "[pos=VERB word=floating]"];
pub const PROJECTION_SEED: u64 = 7;

pub fn mini_space_config() -> RefConfig {
    RefConfig {
        min_coverage: 5,
        min_productivity: 0.75,
        max_gap: None,
        child_min_coverage: 2,
    }
}

pub fn projection_lines(points: &[shortcut_core::projection::ProjectionPoint]) -> String {
    points
        .iter()
        .map(|p| {
            format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\n",
                p.id, p.x, p.y, p.radius, p.arc, p.label
            )
        })
        .collect()
}

/// Selected list, projection payload and scripted what-if report on
/// `mini_space`, each compared with its golden file.
pub fn mini_space_golden_checks() -> Vec<(&'static str, Result<(), String>)> {
    use shortcut_core::projection::{project, GlyphScale};
    use shortcut_core::whatif::{what_if, GroupSelection};

    let ds = mini_space();
    let cfg = mini_space_config();
    let artifact = shortcut_core::mine(&ds, &mining_config(&cfg)).unwrap();
    let reference = reference_mine(&ds, &cfg);
    let mut out = Vec::new();

    out.push((
        "selected list",
        check_golden(
            "mini_space.selected.tsv",
            &reference_selected_lines(&reference),
            &artifact_selected_lines(&artifact),
        ),
    ));

    let nodes: Vec<_> = artifact.selected().collect();
    let projection = (|| -> Result<(), String> {
        let points = project(&nodes, None, &GlyphScale::default(), PROJECTION_SEED).map_err(|e| e.to_string())?;
        if points.len() != 5 {
            return Err(format!("expected 5 points, got {}", points.len()));
        }
        for (i, a) in points.iter().enumerate() {
            for b in &points[i + 1..] {
                if (a.x - b.x).hypot(a.y - b.y) < a.radius + b.radius - 1e-9 {
                    return Err(format!("{} overlaps {}", a.id, b.id));
                }
            }
            let node = artifact.node(&a.id).unwrap();
            if Some(a.arc) != node.stats.whole.productivity.value() {
                return Err(format!("{}: arc is not the productivity", a.id));
            }
        }
        let lines = projection_lines(&points);
        check_golden("mini_space.projection.tsv", &lines, &lines)
    })();
    out.push(("projection payload", projection));

    let report = (|| -> Result<(), String> {
        let ids: Vec<String> = MINI_SPACE_SELECTION
            .iter()
            .map(|c| c.parse::<Template>().unwrap().id())
            .collect();
        let selection = GroupSelection::new(ids.clone(), None);
        let got = what_if(&selection, &artifact, &ds).map_err(|e| e.to_string())?;
        let want = reference_what_if(&ds, &artifact, &ids, None);
        let got = serde_json::to_string_pretty(&got).unwrap() + "\n";
        let want = serde_json::to_string_pretty(&want).unwrap() + "\n";
        check_golden("mini_space.whatif.json", &want, &got)
    })();
    out.push(("what-if report", report));
    out
}

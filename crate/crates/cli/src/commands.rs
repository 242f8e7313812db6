use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde_json::{json, Value};
use shortcut_core::aggregate::aggregate;
use shortcut_core::artifact::ArtifactError;
use shortcut_core::corpus::{self, CorpusError, Dataset};
use shortcut_core::miner::ConfigError;
use shortcut_core::whatif::{remove_and_remine, what_if, GroupSelection, WhatIfError, WhatIfReport};
use shortcut_core::{mine, MinedArtifact, MiningConfig, Quotient};
use shortcut_server::ServerConfig;

use crate::cli::{AggregateArgs, ExportArgs, ExportFormat, Format, MineArgs, RemoveArgs, Selection, ServeArgs, WhatIfArgs};

pub const EXIT_PARSE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_REFERENCE: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn io(what: &Path, e: io::Error) -> Self {
        Self::new(EXIT_IO, format!("{}: {e}", what.display()))
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        let code = match e {
            CorpusError::Io { .. } => EXIT_IO,
            CorpusError::UnknownSplit(_) => EXIT_USAGE,
            _ => EXIT_PARSE,
        };
        Self::new(code, e.to_string())
    }
}

impl From<ArtifactError> for Failure {
    fn from(e: ArtifactError) -> Self {
        let code = match &e {
            ArtifactError::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => EXIT_USAGE,
            ArtifactError::Io { .. } => EXIT_IO,
            ArtifactError::Format(_) | ArtifactError::Version(_) => EXIT_PARSE,
        };
        Self::new(code, e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::new(EXIT_USAGE, e.to_string())
    }
}

impl From<WhatIfError> for Failure {
    fn from(e: WhatIfError) -> Self {
        let code = match e {
            WhatIfError::UnknownShortcut(_) => EXIT_REFERENCE,
            _ => EXIT_USAGE,
        };
        Self::new(code, e.to_string())
    }
}

pub type Outcome = Result<(), Failure>;

fn load_dataset(path: &Path) -> Result<Dataset, Failure> {
    let (dataset, warnings) = corpus::load_dataset_with_warnings(path)?;
    for w in warnings {
        log::warn!("{}:{}: {}", path.display(), w.line, w.message);
    }
    Ok(dataset)
}

fn print_json(value: &impl serde::Serialize) -> Outcome {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).expect("report serializes");
    writeln!(out).map_err(|e| Failure::new(EXIT_IO, e.to_string()))
}

fn save(artifact: &MinedArtifact, path: &Path) -> Outcome {
    fs::write(path, artifact.to_json()).map_err(|e| Failure::io(path, e))
}

fn quotient(q: Quotient) -> String {
    match q.value() {
        Some(v) => format!("{v:.4}"),
        None => "undefined".into(),
    }
}

pub fn mine_cmd(args: &MineArgs) -> Outcome {
    let config = MiningConfig {
        min_coverage: args.thresholds.min_coverage,
        min_productivity: args.thresholds.min_productivity,
        max_gap: args.thresholds.max_gap,
        case_fold: args.case_fold,
        child_min_coverage: args.child_min_coverage,
        ..Default::default()
    };
    config.validate()?;
    let dataset = load_dataset(&args.dataset)?;
    let artifact = mine(&dataset, &config)?;
    save(&artifact, &args.out)?;

    let levels: Vec<usize> = [1, 2, 5, 10].iter().map(|k| k * config.min_coverage).collect();
    let by_coverage: BTreeMap<usize, usize> = levels
        .iter()
        .map(|&t| (t, artifact.selected().filter(|n| n.stats.whole.coverage >= t).count()))
        .collect();
    match args.format {
        Format::Json => print_json(&json!({
            "artifact": args.out,
            "instances": dataset.len(),
            "nodes": artifact.nodes.len(),
            "selected": artifact.selected_count(),
            "selected_by_min_coverage": by_coverage,
        })),
        Format::Text => {
            println!(
                "{}: {} instances, {} nodes, {} selected at coverage >= {} and productivity >= {}",
                args.out.display(),
                dataset.len(),
                artifact.nodes.len(),
                artifact.selected_count(),
                config.min_coverage,
                config.min_productivity
            );
            for (t, n) in by_coverage {
                println!("  coverage >= {t:>6}: {n}");
            }
            Ok(())
        }
    }
}

pub fn aggregate_cmd(args: &AggregateArgs) -> Outcome {
    if !(0.0..=2.0).contains(&args.cut) {
        return Err(Failure::new(EXIT_USAGE, format!("cut must lie in [0, 2], got {}", args.cut)));
    }
    let artifact = MinedArtifact::load(&args.artifact)?;
    let dataset = load_dataset(&args.dataset)?;
    if !artifact.matches_dataset(&dataset) {
        return Err(WhatIfError::StaleArtifact.into());
    }
    let embeddings = corpus::load_embeddings(&args.embeddings)?;
    let (merged, groups) = aggregate(&artifact, &dataset, &embeddings, args.cut);
    save(&merged, &args.out)?;
    match args.format {
        Format::Json => print_json(&json!({
            "artifact": args.out,
            "groups": groups.iter().map(|g| json!({
                "id": g.aggregate_id,
                "parent": g.parent,
                "representative": g.representative,
                "words": g.words,
                "prediction": g.prediction,
            })).collect::<Vec<_>>(),
        })),
        Format::Text => {
            println!("{}: {} merge groups", args.out.display(), groups.len());
            for g in &groups {
                let node = merged.node(&g.aggregate_id).expect("aggregate inserted");
                println!("  {}  {}  {{{}}}", g.aggregate_id, node.template.display_form(), g.words.join(", "));
            }
            Ok(())
        }
    }
}

/// Loads the artifact and dataset of a selection and checks they belong
/// together.
fn prepare(sel: &Selection) -> Result<(MinedArtifact, Dataset, GroupSelection), Failure> {
    let artifact = MinedArtifact::load(&sel.artifact)?;
    let mut dataset = load_dataset(&sel.dataset)?;
    if let Some(p) = &sel.predictions {
        corpus::load_predictions(p, &mut dataset)?;
    }
    if !artifact.matches_dataset(&dataset) {
        return Err(WhatIfError::StaleArtifact.into());
    }
    let ids: Vec<String> = sel.shortcuts.iter().filter(|s| !s.is_empty()).cloned().collect();
    if let Some(missing) = ids.iter().find(|id| !artifact.contains(id)) {
        return Err(WhatIfError::UnknownShortcut(missing.clone()).into());
    }
    Ok((artifact, dataset, GroupSelection::new(ids, sel.split.as_deref())))
}

fn print_report(report: &WhatIfReport) {
    println!(
        "split: {}   shortcuts: {}",
        report.split.as_deref().unwrap_or("(all)"),
        report.shortcut_ids.len()
    );
    println!(
        "dirty: {}   clean: {}   group coverage: {}   disagreed: {}   group productivity: {}",
        report.dirty_ids.len(),
        report.clean_ids.len(),
        report.group_coverage,
        report.disagreed_count,
        quotient(report.group_productivity)
    );
    println!(
        "{:<20} {:>9} {:>9} {:>9} {:>11} {:>11}",
        "model", "whole", "dirty", "clean", "dirty-whole", "clean-whole"
    );
    for row in report.accuracy.models.iter().chain(&report.accuracy.average) {
        println!(
            "{:<20} {:>9} {:>9} {:>9} {:>11} {:>11}",
            row.model,
            quotient(row.whole),
            quotient(row.dirty),
            quotient(row.clean),
            quotient(row.dirty_minus_whole),
            quotient(row.clean_minus_whole)
        );
    }
    for m in &report.accuracy.omitted {
        println!("omitted (incomplete predictions): {m}");
    }
}

pub fn whatif_cmd(args: &WhatIfArgs) -> Outcome {
    let (artifact, dataset, selection) = prepare(&args.selection)?;
    let report = what_if(&selection, &artifact, &dataset)?;
    match args.format {
        Format::Json => print_json(&report),
        Format::Text => {
            print_report(&report);
            Ok(())
        }
    }
}

pub fn remove_cmd(args: &RemoveArgs) -> Outcome {
    let (artifact, dataset, selection) = prepare(&args.selection)?;
    let removal = remove_and_remine(&selection, &artifact, &dataset)?;
    let name = removal.dataset.name.clone();
    let path = |suffix: &str| args.out.join(format!("{name}{suffix}"));
    fs::create_dir_all(&args.out).map_err(|e| Failure::io(&args.out, e))?;
    let target = path(".jsonl");
    removal.dataset.save(&target).map_err(|e| Failure::io(&target, e))?;
    if !removal.dataset.models().is_empty() {
        let target = path(".predictions.jsonl");
        let mut buf = Vec::new();
        corpus::write_predictions(removal.dataset.models(), &mut buf).expect("in-memory write");
        fs::write(&target, buf).map_err(|e| Failure::io(&target, e))?;
    }
    let record = json!({
        "dataset_id": name,
        "key": removal.provenance.key(),
        "provenance": removal.provenance,
        "comparison": removal.comparison,
    });
    let target = path(".provenance.json");
    fs::write(&target, serde_json::to_vec_pretty(&record).expect("record serializes"))
        .map_err(|e| Failure::io(&target, e))?;

    match args.format {
        Format::Json => print_json(&record),
        Format::Text => {
            let c = &removal.comparison;
            println!("{}: {} instances removed", path(".jsonl").display(), c.removed_instances);
            println!("selected shortcuts: {} -> {}", c.selected_before, c.selected_after);
            println!(
                "average accuracy: {} -> {} ({})",
                quotient(c.accuracy_before),
                quotient(c.accuracy_after),
                quotient(c.accuracy_change)
            );
            for t in &c.targets {
                let state = if t.selected_after { "still selected" } else { "gone" };
                println!("target {} {}: {state}", t.id, t.template);
            }
            println!("disappeared ({}):", c.disappeared.len());
            for r in &c.disappeared {
                println!("  {} {}", r.id, r.template);
            }
            println!("appeared ({}):", c.appeared.len());
            for r in &c.appeared {
                println!("  {} {}", r.id, r.template);
            }
            for s in &c.emptied_splits {
                println!("warning: split {s:?} is now empty");
            }
            Ok(())
        }
    }
}

/// Column names and rows of the shortcut table.
pub fn export_table(
    artifact: &MinedArtifact,
    min_coverage: usize,
    min_productivity: f64,
    split: Option<&str>,
) -> Result<(Vec<String>, Vec<Vec<String>>), Failure> {
    let splits: Vec<String> = match split {
        Some(s) if !artifact.dataset.splits.iter().any(|d| d == s) => {
            return Err(Failure::new(EXIT_USAGE, format!("unknown split {s:?}")));
        }
        Some(s) => vec![s.to_string()],
        None => artifact.dataset.splits.clone(),
    };
    let mut header: Vec<String> = ["id", "template", "prediction", "aggregated", "coverage", "productivity"]
        .map(String::from)
        .to_vec();
    for s in &splits {
        header.push(format!("{s}_coverage"));
        header.push(format!("{s}_productivity"));
    }
    let rows = artifact
        .shortcut_table(min_coverage, min_productivity)
        .into_iter()
        .map(|n| {
            let whole = &n.stats.whole;
            let mut row = vec![
                n.id.clone(),
                n.template.canonical(),
                whole.prediction.clone().unwrap_or_default(),
                n.aggregated.to_string(),
                whole.coverage.to_string(),
                quotient(whole.productivity),
            ];
            for s in &splits {
                match n.stats.splits.get(s) {
                    Some(st) => {
                        row.push(st.coverage.to_string());
                        row.push(quotient(st.productivity));
                    }
                    None => row.extend(["0".to_string(), "undefined".to_string()]),
                }
            }
            row
        })
        .collect();
    Ok((header, rows))
}

pub fn export_cmd(args: &ExportArgs) -> Outcome {
    let artifact = MinedArtifact::load(&args.artifact)?;
    let min_coverage = args.min_coverage.unwrap_or(artifact.config.min_coverage);
    let min_productivity = args.min_productivity.unwrap_or(artifact.config.min_productivity);
    if min_coverage == 0 || min_productivity.is_nan() || min_productivity < 0.0 {
        return Err(Failure::new(EXIT_USAGE, "thresholds must be a positive coverage and a non-negative productivity"));
    }
    let (header, rows) = export_table(&artifact, min_coverage, min_productivity, args.split.as_deref())?;
    let mut buf = Vec::new();
    match args.format {
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&header).expect("in-memory write");
            for r in &rows {
                w.write_record(r).expect("in-memory write");
            }
            w.flush().expect("in-memory write");
        }
        ExportFormat::Json => {
            let objects: Vec<Value> = rows
                .iter()
                .map(|r| Value::Object(header.iter().cloned().zip(r.iter().map(|v| json!(v))).collect()))
                .collect();
            serde_json::to_writer_pretty(&mut buf, &objects).expect("in-memory write");
            buf.push(b'\n');
        }
    }
    match &args.out {
        Some(path) => fs::write(path, buf).map_err(|e| Failure::io(path, e)),
        None => io::stdout()
            .lock()
            .write_all(&buf)
            .map_err(|e| Failure::new(EXIT_IO, e.to_string())),
    }
}

pub fn serve_cmd(args: &ServeArgs) -> Outcome {
    let mut config = ServerConfig::new(&args.data_dir);
    config.defaults.min_coverage = args.default_min_coverage;
    config.defaults.min_productivity = args.default_min_productivity;
    config.defaults.max_gap = args.max_gap;
    config.defaults.validate()?;
    if !args.data_dir.is_dir() {
        return Err(Failure::new(EXIT_USAGE, format!("{} is not a directory", args.data_dir.display())));
    }
    let addr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| Failure::new(EXIT_USAGE, format!("bad listen address: {e}")))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
    runtime
        .block_on(shortcut_server::serve(config, addr))
        .map_err(|e| Failure::new(EXIT_IO, e.to_string()))
}

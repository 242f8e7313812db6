use std::cmp::Ordering;
use std::fs;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::Json;
use serde::Deserialize;
use serde_json::{json, Value};
use shortcut_core::corpus::write_predictions;
use shortcut_core::projection::{project, GlyphScale, ProjectionPoint};
use shortcut_core::whatif::{remove_and_remine, what_if as run_what_if, GroupSelection, Provenance, WhatIfReport};
use shortcut_core::{MinedArtifact, MiningConfig, ShortcutNode};

use crate::error::ApiError;
use crate::registry::{inherit_embeddings, write_atomic, DatasetEntry, Registry};
use crate::views::{instance_row, DatasetSummary, InstancePage, ShortcutDetail, ShortcutSummary};
use crate::AppState;

pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 1000;

fn dataset(registry: &Registry, id: &str) -> Result<Arc<DatasetEntry>, ApiError> {
    registry.get(id).ok_or_else(|| ApiError::UnknownDataset(id.to_string()))
}

fn check_split(entry: &DatasetEntry, split: Option<&str>) -> Result<(), ApiError> {
    match split {
        Some(s) if entry.dataset.split_position(s).is_none() => Err(ApiError::BadRequest(format!("unknown split {s:?}"))),
        _ => Ok(()),
    }
}

/// Whole-set minima a listing is filtered with.
#[derive(Debug, Default)]
pub struct Thresholds {
    pub min_coverage: Option<usize>,
    pub min_productivity: Option<f64>,
}

impl Thresholds {
    /// The minima to filter with and the mining config whose artifact
    /// contains every shortcut passing them.
    fn resolve(&self, defaults: &MiningConfig) -> Result<(usize, f64, MiningConfig), ApiError> {
        let coverage = self.min_coverage.unwrap_or(defaults.min_coverage);
        let productivity = self.min_productivity.unwrap_or(defaults.min_productivity);
        if coverage == 0 {
            return Err(ApiError::BadRequest("min_coverage must be at least 1".into()));
        }
        if productivity.is_nan() || productivity < 0.0 {
            return Err(ApiError::BadRequest(format!("min_productivity must be non-negative, got {productivity}")));
        }
        let mut config = defaults.clone();
        config.min_coverage = coverage.min(defaults.min_coverage);
        config.min_productivity = productivity.min(defaults.min_productivity);
        Ok((coverage, productivity, config))
    }
}

async fn filtered(
    registry: &Registry,
    entry: &DatasetEntry,
    thresholds: &Thresholds,
) -> Result<(Arc<MinedArtifact>, usize, f64), ApiError> {
    let (coverage, productivity, config) = thresholds.resolve(&registry.config.defaults)?;
    let artifact = entry.artifact(&registry.cache, &config).await?;
    Ok((artifact, coverage, productivity))
}

pub async fn list_datasets(State(registry): State<AppState>) -> Json<Vec<DatasetSummary>> {
    Json(registry.list().iter().map(|e| DatasetSummary::of(e)).collect())
}

#[derive(Debug, Deserialize)]
pub struct ShortcutQuery {
    pub min_coverage: Option<usize>,
    pub min_productivity: Option<f64>,
    pub split: Option<String>,
}

impl ShortcutQuery {
    fn thresholds(&self) -> Thresholds {
        Thresholds {
            min_coverage: self.min_coverage,
            min_productivity: self.min_productivity,
        }
    }
}

pub async fn list_shortcuts(
    State(registry): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ShortcutQuery>,
) -> Result<Json<Vec<ShortcutSummary>>, ApiError> {
    let entry = dataset(&registry, &id)?;
    check_split(&entry, q.split.as_deref())?;
    let (artifact, coverage, productivity) = filtered(&registry, &entry, &q.thresholds()).await?;
    Ok(Json(
        artifact
            .shortcut_table(coverage, productivity)
            .into_iter()
            .map(|n| ShortcutSummary::of(n, q.split.as_deref()))
            .collect(),
    ))
}

/// The artifact holding every id: the default one first, then any other
/// already mined.
async fn artifact_with(registry: &Registry, entry: &DatasetEntry, ids: &[String]) -> Result<Arc<MinedArtifact>, ApiError> {
    let default = entry.artifact(&registry.cache, &registry.config.defaults).await?;
    let has_all = |a: &MinedArtifact| ids.iter().all(|id| a.contains(id));
    if has_all(&default) {
        return Ok(default);
    }
    if let Some(a) = entry.loaded_artifacts().into_iter().find(|a| has_all(a)) {
        return Ok(a);
    }
    let missing = ids.iter().find(|id| !default.contains(id)).cloned().unwrap_or_default();
    Err(ApiError::UnknownShortcut(missing))
}

fn node<'a>(artifact: &'a MinedArtifact, sid: &str) -> &'a ShortcutNode {
    artifact.node(sid).expect("artifact_with checked the id")
}

#[derive(Debug, Deserialize)]
pub struct SplitQuery {
    pub split: Option<String>,
}

pub async fn shortcut_detail(
    State(registry): State<AppState>,
    Path((id, sid)): Path<(String, String)>,
    Query(q): Query<SplitQuery>,
) -> Result<Json<ShortcutDetail>, ApiError> {
    let entry = dataset(&registry, &id)?;
    check_split(&entry, q.split.as_deref())?;
    let artifact = artifact_with(&registry, &entry, std::slice::from_ref(&sid)).await?;
    let split = q.split.as_deref();
    let mut children = artifact.children_of(&sid);
    children.sort_by(|a, b| {
        b.stats
            .whole
            .coverage
            .cmp(&a.stats.whole.coverage)
            .then_with(|| a.id.cmp(&b.id))
    });
    Ok(Json(ShortcutDetail {
        shortcut: ShortcutSummary::of(node(&artifact, &sid), split),
        children: children.into_iter().map(|c| ShortcutSummary::of(c, split)).collect(),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    #[default]
    Full,
    Neighbor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SortKey {
    #[default]
    Id,
    Accuracy,
    Label,
    Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    #[default]
    Asc,
    Desc,
}

#[derive(Debug, Deserialize)]
pub struct InstanceQuery {
    pub split: Option<String>,
    pub label: Option<String>,
    /// Exact substring of the instance text.
    pub search: Option<String>,
    #[serde(default)]
    pub style: Style,
    #[serde(default)]
    pub sort: SortKey,
    #[serde(default)]
    pub order: Order,
    /// 1-based.
    pub page: Option<usize>,
    pub page_size: Option<usize>,
}

pub async fn shortcut_instances(
    State(registry): State<AppState>,
    Path((id, sid)): Path<(String, String)>,
    Query(q): Query<InstanceQuery>,
) -> Result<Json<InstancePage>, ApiError> {
    let entry = dataset(&registry, &id)?;
    check_split(&entry, q.split.as_deref())?;
    if let Some(l) = &q.label {
        if entry.dataset.label_position(l).is_none() {
            return Err(ApiError::BadRequest(format!("unknown label {l:?}")));
        }
    }
    let page = q.page.unwrap_or(1);
    let page_size = q.page_size.unwrap_or(DEFAULT_PAGE_SIZE);
    if page == 0 {
        return Err(ApiError::BadRequest("page numbers start at 1".into()));
    }
    if page_size == 0 || page_size > MAX_PAGE_SIZE {
        return Err(ApiError::BadRequest(format!("page_size must lie in 1..={MAX_PAGE_SIZE}")));
    }
    let artifact = artifact_with(&registry, &entry, std::slice::from_ref(&sid)).await?;
    let node = node(&artifact, &sid);
    let ds = &entry.dataset;
    let mut rows: Vec<_> = node
        .covered
        .iter()
        .map(|&i| i as usize)
        .filter(|&i| {
            let inst = &ds.instances()[i];
            q.split.as_ref().is_none_or(|s| &inst.split == s)
                && q.label.as_ref().is_none_or(|l| &inst.label == l)
                && q.search.as_ref().is_none_or(|s| inst.text.contains(s.as_str()))
        })
        .map(|i| {
            let spans = node
                .template
                .match_spans(&ds.instances()[i], artifact.config.case_fold)
                .into_iter()
                .map(|m| m.indices)
                .collect();
            instance_row(ds, i, spans, q.style == Style::Neighbor)
        })
        .collect();
    rows.sort_by(|a, b| {
        let key = match q.sort {
            SortKey::Id => Ordering::Equal,
            SortKey::Accuracy => {
                let v = |r: &crate::views::InstanceRow| r.accuracy.value().unwrap_or(f64::NEG_INFINITY);
                v(a).total_cmp(&v(b))
            }
            SortKey::Label => a.label.cmp(&b.label),
            SortKey::Split => a.split.cmp(&b.split),
        };
        let key = key.then_with(|| a.id.cmp(&b.id));
        match q.order {
            Order::Asc => key,
            Order::Desc => key.reverse(),
        }
    });
    let total = rows.len();
    let rows = rows.into_iter().skip((page - 1).saturating_mul(page_size)).take(page_size).collect();
    Ok(Json(InstancePage {
        total,
        page,
        page_size,
        rows,
    }))
}

async fn what_if_report(
    registry: &Registry,
    id: &str,
    selection: &GroupSelection,
) -> Result<WhatIfReport, ApiError> {
    let entry = dataset(registry, id)?;
    check_split(&entry, selection.split.as_deref())?;
    let artifact = artifact_with(registry, &entry, &selection.shortcut_ids).await?;
    Ok(run_what_if(selection, &artifact, &entry.dataset)?)
}

pub async fn what_if(
    State(registry): State<AppState>,
    Path(id): Path<String>,
    Json(selection): Json<GroupSelection>,
) -> Result<Json<WhatIfReport>, ApiError> {
    what_if_report(&registry, &id, &selection).await.map(Json)
}

#[derive(Debug, Deserialize)]
pub struct ProjectionQuery {
    pub min_coverage: Option<usize>,
    pub min_productivity: Option<f64>,
    pub split: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

impl ProjectionQuery {
    fn thresholds(&self) -> Thresholds {
        Thresholds {
            min_coverage: self.min_coverage,
            min_productivity: self.min_productivity,
        }
    }
}

pub async fn projection(
    State(registry): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ProjectionQuery>,
) -> Result<Json<Vec<ProjectionPoint>>, ApiError> {
    let entry = dataset(&registry, &id)?;
    check_split(&entry, q.split.as_deref())?;
    let (artifact, coverage, productivity) = filtered(&registry, &entry, &q.thresholds()).await?;
    let nodes = artifact.shortcut_table(coverage, productivity);
    Ok(Json(project(&nodes, q.split.as_deref(), &GlyphScale::default(), q.seed)?))
}

fn cached(record: &Value) -> Json<Value> {
    let mut r = record.clone();
    r["cached"] = json!(true);
    Json(r)
}

pub async fn removal(
    State(registry): State<AppState>,
    Path(id): Path<String>,
    Json(selection): Json<GroupSelection>,
) -> Result<Json<Value>, ApiError> {
    let entry = dataset(&registry, &id)?;
    check_split(&entry, selection.split.as_deref())?;
    let artifact = artifact_with(&registry, &entry, &selection.shortcut_ids).await?;
    let key = Provenance {
        parent: entry.id.clone(),
        parent_fingerprint: artifact.dataset.fingerprint.clone(),
        selection: selection.clone(),
        config: artifact.config.clone(),
        removed_ids: Vec::new(),
    }
    .key();
    let derived_id = format!("{id}-rm-{key}");
    if let Some(record) = registry.get(&derived_id).and_then(|d| d.removal.clone()) {
        return Ok(cached(&record));
    }
    let _guard = entry.write_lock().await;
    if let Some(record) = registry.get(&derived_id).and_then(|d| d.removal.clone()) {
        return Ok(cached(&record));
    }

    let dataset = entry.dataset.clone();
    let mut removal = tokio::task::spawn_blocking(move || remove_and_remine(&selection, &artifact, &dataset))
        .await
        .map_err(|e| ApiError::Internal(format!("removal task failed: {e}")))??;
    removal.dataset.name = derived_id.clone();
    removal.provenance.parent = entry.id.clone();
    let record = json!({
        "dataset_id": derived_id,
        "key": key,
        "provenance": removal.provenance,
        "comparison": removal.comparison,
    });
    persist(&registry, &entry, &derived_id, &removal.dataset, &record).map_err(|e| ApiError::Storage(e.to_string()))?;

    let mut derived = DatasetEntry::new(derived_id.clone(), removal.dataset, inherit_embeddings(&entry));
    derived.removal = Some(record.clone());
    registry.insert(derived);
    log::info!(
        "derived {derived_id:?} from {id:?}: {} instances removed",
        removal.comparison.removed_instances
    );
    let mut response = record;
    response["cached"] = json!(false);
    Ok(Json(response))
}

/// Writes the derived dataset beside its parent. The provenance record goes
/// last, so a dataset without one was not completely written.
fn persist(
    registry: &Registry,
    parent: &DatasetEntry,
    derived_id: &str,
    dataset: &shortcut_core::Dataset,
    record: &Value,
) -> std::io::Result<()> {
    let path = |suffix: &str| registry.dataset_path(derived_id, suffix);
    let mut instances = Vec::new();
    dataset.write_jsonl(&mut instances)?;
    write_atomic(&path(".jsonl"), &instances)?;
    if !dataset.models().is_empty() {
        let mut preds = Vec::new();
        write_predictions(dataset.models(), &mut preds)?;
        write_atomic(&path(".predictions.jsonl"), &preds)?;
    }
    let embeddings = registry.dataset_path(&parent.id, ".embeddings.tsv");
    if embeddings.exists() {
        fs::copy(&embeddings, path(".embeddings.tsv"))?;
    }
    let bytes = serde_json::to_vec_pretty(record).expect("record serializes");
    write_atomic(&path(".provenance.json"), &bytes)
}

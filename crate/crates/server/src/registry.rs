//! Datasets discovered in the data directory, their mined artifacts, and
//! the on-disk artifact cache.
//!
//! A dataset `name` is read from `name.jsonl`, with optional
//! `name.predictions.jsonl`, `name.embeddings.tsv` and, for derived
//! datasets, `name.provenance.json` beside it.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::SystemTime;

use sha2::{Digest, Sha256};
use shortcut_core::aggregate::{aggregate, DEFAULT_CUT};
use shortcut_core::corpus::{self, Dataset};
use shortcut_core::{MinedArtifact, MiningConfig};

use crate::error::ApiError;

const CACHE_DIR: &str = ".shortcut-cache";

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub data_dir: PathBuf,
    /// Thresholds of the artifact served when a query does not ask for
    /// looser ones.
    pub defaults: MiningConfig,
}

impl ServerConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            defaults: MiningConfig::default(),
        }
    }
}

/// Location and identity of one cached artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub fingerprint: String,
    pub config_hash: String,
    pub path: PathBuf,
    pub created_at: Option<SystemTime>,
}

#[derive(Debug, Clone)]
pub struct ArtifactCache {
    dir: PathBuf,
}

impl ArtifactCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn entry(&self, dataset_id: &str, fingerprint: &str, config_hash: &str) -> CacheEntry {
        let path = self
            .dir
            .join(format!("{dataset_id}-{}-{config_hash}.json", &fingerprint[..16.min(fingerprint.len())]));
        let created_at = fs::metadata(&path).and_then(|m| m.modified()).ok();
        CacheEntry {
            fingerprint: fingerprint.to_string(),
            config_hash: config_hash.to_string(),
            path,
            created_at,
        }
    }

    /// The cached artifact, if present and mined from this exact dataset
    /// content with this config.
    pub fn load(&self, entry: &CacheEntry, dataset: &Dataset, config: &MiningConfig) -> Option<MinedArtifact> {
        if !entry.path.exists() {
            return None;
        }
        match MinedArtifact::load(&entry.path) {
            Ok(a) if a.dataset.fingerprint == entry.fingerprint && a.matches_dataset(dataset) && a.config == *config => {
                Some(a)
            }
            Ok(_) => {
                log::info!("discarding stale cached artifact {}", entry.path.display());
                None
            }
            Err(e) => {
                log::warn!("unreadable cached artifact {}: {e}", entry.path.display());
                None
            }
        }
    }

    pub fn store(&self, entry: &CacheEntry, artifact: &MinedArtifact) -> io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        write_atomic(&entry.path, &artifact.to_json())
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One served dataset with the artifacts mined for it so far.
pub struct DatasetEntry {
    pub id: String,
    pub dataset: Arc<Dataset>,
    pub fingerprint: String,
    embeddings_fingerprint: Option<String>,
    /// Removal record of a derived dataset.
    pub removal: Option<serde_json::Value>,
    artifacts: RwLock<HashMap<String, Arc<MinedArtifact>>>,
    writer: tokio::sync::Mutex<()>,
}

impl DatasetEntry {
    pub fn new(id: impl Into<String>, dataset: Dataset, embeddings_fingerprint: Option<String>) -> Self {
        let fingerprint = dataset.fingerprint();
        Self {
            id: id.into(),
            dataset: Arc::new(dataset),
            fingerprint,
            embeddings_fingerprint,
            removal: None,
            artifacts: RwLock::new(HashMap::new()),
            writer: tokio::sync::Mutex::new(()),
        }
    }

    pub fn config_hash(&self, config: &MiningConfig) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(config).expect("config serializes"));
        h.update([0]);
        h.update(self.embeddings_fingerprint.as_deref().unwrap_or("-").as_bytes());
        hex::encode(&h.finalize()[..8])
    }

    /// Artifacts already in memory.
    pub fn loaded_artifacts(&self) -> Vec<Arc<MinedArtifact>> {
        self.artifacts.read().unwrap().values().cloned().collect()
    }

    /// Serializes mining and removal on this dataset.
    pub async fn write_lock(&self) -> tokio::sync::MutexGuard<'_, ()> {
        self.writer.lock().await
    }

    /// The artifact for `config`: from memory, else the disk cache, else
    /// freshly mined (and aggregated when embeddings are available).
    pub async fn artifact(&self, cache: &ArtifactCache, config: &MiningConfig) -> Result<Arc<MinedArtifact>, ApiError> {
        config.validate()?;
        let key = self.config_hash(config);
        if let Some(a) = self.artifacts.read().unwrap().get(&key) {
            return Ok(a.clone());
        }
        let _guard = self.writer.lock().await;
        if let Some(a) = self.artifacts.read().unwrap().get(&key) {
            return Ok(a.clone());
        }
        let entry = cache.entry(&self.id, &self.fingerprint, &key);
        let dataset = self.dataset.clone();
        let cache = cache.clone();
        let config = config.clone();
        let artifact = tokio::task::spawn_blocking(move || -> Result<MinedArtifact, ApiError> {
            if let Some(a) = cache.load(&entry, &dataset, &config) {
                return Ok(a);
            }
            let artifact = build_artifact(&dataset, &config)?;
            if let Err(e) = cache.store(&entry, &artifact) {
                log::warn!("could not cache artifact at {}: {e}", entry.path.display());
            }
            Ok(artifact)
        })
        .await
        .map_err(|e| ApiError::Internal(format!("mining task failed: {e}")))??;
        let artifact = Arc::new(artifact);
        self.artifacts.write().unwrap().insert(key, artifact.clone());
        Ok(artifact)
    }
}

/// Mines the dataset and, when it has embeddings, merges similar siblings.
pub fn build_artifact(dataset: &Dataset, config: &MiningConfig) -> Result<MinedArtifact, ApiError> {
    let started = std::time::Instant::now();
    let mined = shortcut_core::mine(dataset, config)?;
    let artifact = match dataset.embeddings() {
        Some(emb) => aggregate(&mined, dataset, emb, DEFAULT_CUT).0,
        None => mined,
    };
    log::info!(
        "mined {:?}: {} nodes, {} selected in {:.2?}",
        dataset.name,
        artifact.nodes.len(),
        artifact.selected_count(),
        started.elapsed()
    );
    Ok(artifact)
}

pub struct Registry {
    pub config: ServerConfig,
    pub cache: ArtifactCache,
    datasets: RwLock<BTreeMap<String, Arc<DatasetEntry>>>,
}

impl Registry {
    pub fn empty(config: ServerConfig) -> Self {
        let cache = ArtifactCache::new(config.data_dir.join(CACHE_DIR));
        Self {
            config,
            cache,
            datasets: RwLock::new(BTreeMap::new()),
        }
    }

    /// Loads every dataset in the data directory. Files that fail to load
    /// are logged and skipped.
    pub fn scan(config: ServerConfig) -> io::Result<Self> {
        let registry = Self::empty(config);
        let mut paths: Vec<PathBuf> = fs::read_dir(&registry.config.data_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .filter(|p| {
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                name.ends_with(".jsonl") && !name.ends_with(".predictions.jsonl")
            })
            .collect();
        paths.sort();
        for path in paths {
            match load_entry(&path) {
                Ok(entry) => {
                    if registry.get(&entry.id).is_some() {
                        log::warn!("{}: dataset id {:?} already taken; skipped", path.display(), entry.id);
                        continue;
                    }
                    log::info!("serving {:?} ({} instances)", entry.id, entry.dataset.len());
                    registry.insert(entry);
                }
                Err(e) => log::warn!("{}: {e}; skipped", path.display()),
            }
        }
        Ok(registry)
    }

    pub fn insert(&self, entry: DatasetEntry) -> Arc<DatasetEntry> {
        let entry = Arc::new(entry);
        self.datasets.write().unwrap().insert(entry.id.clone(), entry.clone());
        entry
    }

    pub fn get(&self, id: &str) -> Option<Arc<DatasetEntry>> {
        self.datasets.read().unwrap().get(id).cloned()
    }

    pub fn list(&self) -> Vec<Arc<DatasetEntry>> {
        self.datasets.read().unwrap().values().cloned().collect()
    }

    pub fn dataset_path(&self, id: &str, suffix: &str) -> PathBuf {
        self.config.data_dir.join(format!("{id}{suffix}"))
    }
}

fn load_entry(path: &Path) -> Result<DatasetEntry, String> {
    let (mut dataset, warnings) = corpus::load_dataset_with_warnings(path).map_err(|e| e.to_string())?;
    for w in warnings {
        log::warn!("{}:{}: {}", path.display(), w.line, w.message);
    }
    let id = corpus::dataset_name(path);
    dataset.name = id.clone();
    let dir = path.parent().unwrap_or(Path::new("."));

    let predictions = dir.join(format!("{id}.predictions.jsonl"));
    if predictions.exists() {
        let mut with_predictions = dataset.clone();
        match corpus::load_predictions(&predictions, &mut with_predictions) {
            Ok(_) => dataset = with_predictions,
            Err(e) => log::warn!("{}: {e}; serving without predictions", predictions.display()),
        }
    }

    let mut embeddings_fingerprint = None;
    let embeddings = dir.join(format!("{id}.embeddings.tsv"));
    if embeddings.exists() {
        match corpus::load_embeddings_with_warnings(&embeddings) {
            Ok((table, warnings)) => {
                for w in warnings {
                    log::warn!("{}:{}: {}", embeddings.display(), w.line, w.message);
                }
                embeddings_fingerprint = fs::read(&embeddings).ok().map(|b| sha256_hex(&b));
                dataset.set_embeddings(table);
            }
            Err(e) => log::warn!("{}: {e}; serving without embeddings", embeddings.display()),
        }
    }

    let mut entry = DatasetEntry::new(id.clone(), dataset, embeddings_fingerprint);
    let provenance = dir.join(format!("{id}.provenance.json"));
    if provenance.exists() {
        match fs::read(&provenance).map_err(|e| e.to_string()).and_then(|b| {
            serde_json::from_slice::<serde_json::Value>(&b).map_err(|e| e.to_string())
        }) {
            Ok(v) => entry.removal = Some(v),
            Err(e) => log::warn!("{}: {e}", provenance.display()),
        }
    }
    Ok(entry)
}

/// Embeddings fingerprint of a derived dataset that shares its parent's table.
pub(crate) fn inherit_embeddings(parent: &DatasetEntry) -> Option<String> {
    parent.embeddings_fingerprint.clone()
}

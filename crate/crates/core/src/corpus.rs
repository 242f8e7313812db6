//! Loading and indexing of pre-annotated datasets, model predictions and
//! word-embedding tables.
//!
//! Datasets are line-delimited JSON, one instance per line:
//!
//! ```text
//! {"id":"s1","text":"The men will all leave .","tokens":[{"t":"The","pos":"DET"},...],"label":"true","split":"test"}
//! ```
//!
//! Tokenization and POS tagging happen upstream; tags are opaque strings.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate instance id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: instance {id:?} has an empty token list")]
    EmptyTokens { line: usize, id: String },
    #[error("model {model:?}: unknown instance id {id:?}")]
    UnknownInstance { model: String, id: String },
    #[error("model {model:?}: label {label:?} for instance {id:?} is not a dataset label")]
    UnknownLabel {
        model: String,
        id: String,
        label: String,
    },
    #[error("line {line}: expected {expected} dimensions, found {found}")]
    Dimension {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: embedding for {word:?} is the zero vector")]
    ZeroVector { line: usize, word: String },
    #[error("unknown split {0:?}")]
    UnknownSplit(String),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// A non-fatal issue found while loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadWarning {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    #[serde(rename = "t")]
    pub surface: String,
    pub pos: String,
}

impl Token {
    pub fn new(surface: impl Into<String>, pos: impl Into<String>) -> Self {
        Self {
            surface: surface.into(),
            pos: pos.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub text: String,
    pub tokens: Vec<Token>,
    pub label: String,
    pub split: String,
}

#[derive(Deserialize)]
struct RawInstance {
    id: String,
    text: String,
    tokens: Vec<Token>,
    label: String,
    split: String,
    #[serde(flatten)]
    extra: BTreeMap<String, serde_json::Value>,
}

/// Predicted labels of one model, keyed by instance id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPredictions {
    #[serde(rename = "model")]
    pub model_name: String,
    #[serde(rename = "predictions")]
    pub predicted: BTreeMap<String, String>,
}

/// Word vectors; lookup is an exact match on the surface form.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: HashMap::new(),
        }
    }

    /// Inserts a vector, returning the previous one for the word if any.
    ///
    /// Panics if the length does not match `dim` or the vector is all zeros.
    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f64>) -> Option<Vec<f64>> {
        assert_eq!(vector.len(), self.dim, "embedding dimension mismatch");
        assert!(vector.iter().any(|v| *v != 0.0), "zero embedding vector");
        self.vectors.insert(word.into(), vector)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }
}

/// A validated, indexed dataset. Immutable after load.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub name: String,
    instances: Vec<Instance>,
    labels: Vec<String>,
    splits: Vec<String>,
    models: Vec<ModelPredictions>,
    embeddings: Option<EmbeddingTable>,
    label_of: Vec<u16>,
    split_of: Vec<u16>,
    by_id: HashMap<String, usize>,
    /// `correct[m][i]` is model `m`'s correctness on instance `i`, when predicted.
    correct: Vec<Vec<Option<bool>>>,
}

impl Dataset {
    /// Builds a dataset from already-parsed instances.
    ///
    /// Labels and splits are ordered by first appearance.
    pub fn from_instances(name: impl Into<String>, instances: Vec<Instance>) -> Result<Self> {
        let mut ds = Dataset {
            name: name.into(),
            ..Default::default()
        };
        for (i, inst) in instances.into_iter().enumerate() {
            ds.push(i + 1, inst)?;
        }
        Ok(ds)
    }

    fn push(&mut self, line: usize, inst: Instance) -> Result<()> {
        if inst.tokens.is_empty() {
            return Err(CorpusError::EmptyTokens { line, id: inst.id });
        }
        if let Some(tok) = inst
            .tokens
            .iter()
            .find(|t| t.surface.is_empty() || t.pos.is_empty())
        {
            return Err(CorpusError::Parse {
                line,
                message: format!("instance {:?} has a token with empty surface or POS ({tok:?})", inst.id),
            });
        }
        if self.by_id.contains_key(&inst.id) {
            return Err(CorpusError::DuplicateId { line, id: inst.id });
        }
        let label = intern_ordered(&mut self.labels, &inst.label);
        let split = intern_ordered(&mut self.splits, &inst.split);
        self.by_id.insert(inst.id.clone(), self.instances.len());
        self.label_of.push(label);
        self.split_of.push(split);
        self.instances.push(inst);
        Ok(())
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn splits(&self) -> &[String] {
        &self.splits
    }

    pub fn models(&self) -> &[ModelPredictions] {
        &self.models
    }

    pub fn embeddings(&self) -> Option<&EmbeddingTable> {
        self.embeddings.as_ref()
    }

    pub fn set_embeddings(&mut self, table: EmbeddingTable) {
        self.embeddings = Some(table);
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// Label index (into [`Dataset::labels`]) of instance `i`.
    pub fn label_index(&self, i: usize) -> usize {
        self.label_of[i] as usize
    }

    /// Split index (into [`Dataset::splits`]) of instance `i`.
    pub fn split_index(&self, i: usize) -> usize {
        self.split_of[i] as usize
    }

    pub fn split_position(&self, split: &str) -> Option<usize> {
        self.splits.iter().position(|s| s == split)
    }

    pub fn label_position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Instance indices belonging to `split`, or all instances for `None`.
    pub fn split_members(&self, split: Option<&str>) -> Result<Vec<usize>> {
        match split {
            None => Ok((0..self.len()).collect()),
            Some(name) => {
                let s = self
                    .split_position(name)
                    .ok_or_else(|| CorpusError::UnknownSplit(name.to_string()))?;
                Ok((0..self.len())
                    .filter(|&i| self.split_of[i] as usize == s)
                    .collect())
            }
        }
    }

    /// Attaches predictions after checking ids and labels against the dataset.
    pub fn attach_predictions(&mut self, preds: Vec<ModelPredictions>) -> Result<()> {
        for p in &preds {
            for (id, label) in &p.predicted {
                if !self.by_id.contains_key(id) {
                    return Err(CorpusError::UnknownInstance {
                        model: p.model_name.clone(),
                        id: id.clone(),
                    });
                }
                if self.label_position(label).is_none() {
                    return Err(CorpusError::UnknownLabel {
                        model: p.model_name.clone(),
                        id: id.clone(),
                        label: label.clone(),
                    });
                }
            }
        }
        for p in preds {
            let mut correct = vec![None; self.len()];
            for (id, label) in &p.predicted {
                let i = self.by_id[id];
                correct[i] = Some(*label == self.instances[i].label);
            }
            if let Some(pos) = self.models.iter().position(|m| m.model_name == p.model_name) {
                self.models[pos] = p;
                self.correct[pos] = correct;
            } else {
                self.models.push(p);
                self.correct.push(correct);
            }
        }
        Ok(())
    }

    /// Correctness of model `m` on instance `i`; `None` when not predicted.
    pub fn is_correct(&self, m: usize, i: usize) -> Option<bool> {
        self.correct[m][i]
    }

    /// Accuracy of model `m` on the given instances.
    ///
    /// `None` when the set is empty or the model lacks a prediction for any
    /// member.
    pub fn accuracy(&self, m: usize, members: &[usize]) -> Option<f64> {
        if members.is_empty() {
            return None;
        }
        let mut hits = 0usize;
        for &i in members {
            if self.correct[m][i]? {
                hits += 1;
            }
        }
        Some(hits as f64 / members.len() as f64)
    }

    /// Whether model `m` predicts every instance in `members`.
    pub fn covers(&self, m: usize, members: &[usize]) -> bool {
        members.iter().all(|&i| self.correct[m][i].is_some())
    }

    /// Returns a new dataset without the given instance indices. Predictions
    /// for the kept instances and the embedding table carry over.
    pub fn without(&self, name: impl Into<String>, removed: &[usize]) -> Dataset {
        let mut drop = vec![false; self.len()];
        for &i in removed {
            drop[i] = true;
        }
        let kept: Vec<Instance> = self
            .instances
            .iter()
            .zip(&drop)
            .filter(|(_, d)| !**d)
            .map(|(inst, _)| inst.clone())
            .collect();
        let mut ds = Dataset::from_instances(name, kept).expect("subset of a valid dataset");
        // Keep the parent's label and split order so tie-breaking is stable.
        ds.reorder(&self.labels, &self.splits);
        let preds = self
            .models
            .iter()
            .map(|m| ModelPredictions {
                model_name: m.model_name.clone(),
                predicted: m
                    .predicted
                    .iter()
                    .filter(|(id, _)| ds.by_id.contains_key(*id))
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect(),
            })
            .collect();
        ds.attach_predictions(preds).expect("subset of valid predictions");
        ds.embeddings = self.embeddings.clone();
        ds
    }

    fn reorder(&mut self, labels: &[String], splits: &[String]) {
        let new_labels: Vec<String> = labels
            .iter()
            .filter(|l| self.labels.contains(l))
            .cloned()
            .collect();
        let new_splits: Vec<String> = splits
            .iter()
            .filter(|s| self.splits.contains(s))
            .cloned()
            .collect();
        for (i, inst) in self.instances.iter().enumerate() {
            self.label_of[i] = new_labels.iter().position(|l| *l == inst.label).unwrap() as u16;
            self.split_of[i] = new_splits.iter().position(|s| *s == inst.split).unwrap() as u16;
        }
        self.labels = new_labels;
        self.splits = new_splits;
    }

    /// Writes the instances in the line-delimited input format.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for inst in &self.instances {
            serde_json::to_writer(&mut out, inst)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        fs::write(path, buf)
    }

    /// SHA-256 over the canonical serialization of the instances.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("write to memory");
        hasher.update(&buf);
        hex::encode(hasher.finalize())
    }
}

fn intern_ordered(set: &mut Vec<String>, value: &str) -> u16 {
    match set.iter().position(|v| v == value) {
        Some(i) => i as u16,
        None => {
            set.push(value.to_string());
            (set.len() - 1) as u16
        }
    }
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads a dataset, logging non-fatal warnings.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let (ds, warnings) = load_dataset_with_warnings(path)?;
    for w in warnings {
        log::warn!("{}:{}: {}", path.display(), w.line, w.message);
    }
    Ok(ds)
}

/// Loads a dataset and returns the non-fatal warnings alongside it.
///
/// The dataset name is the file name up to its first `.`.
pub fn load_dataset_with_warnings(path: &Path) -> Result<(Dataset, Vec<LoadWarning>)> {
    let name = dataset_name(path);
    let reader = open(path)?;
    let mut ds = Dataset {
        name,
        ..Default::default()
    };
    let mut warnings = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawInstance = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        for key in raw.extra.keys() {
            warnings.push(LoadWarning {
                line: line_no,
                message: format!("unknown field {key:?} ignored"),
            });
        }
        ds.push(
            line_no,
            Instance {
                id: raw.id,
                text: raw.text,
                tokens: raw.tokens,
                label: raw.label,
                split: raw.split,
            },
        )?;
    }
    Ok((ds, warnings))
}

pub fn dataset_name(path: &Path) -> String {
    let file = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();
    file.split('.').next().unwrap_or_default().to_string()
}

/// Reads a predictions file (one `{model, predictions}` record per line) and
/// attaches it to the dataset.
pub fn load_predictions(path: &Path, dataset: &mut Dataset) -> Result<Vec<ModelPredictions>> {
    let reader = open(path)?;
    let mut preds = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ModelPredictions =
            serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
        preds.push(record);
    }
    dataset.attach_predictions(preds.clone())?;
    Ok(preds)
}

pub fn write_predictions<W: Write>(preds: &[ModelPredictions], mut out: W) -> std::io::Result<()> {
    for p in preds {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Loads `word<TAB>v1 v2 ... vd` lines.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let (table, warnings) = load_embeddings_with_warnings(path)?;
    for w in warnings {
        log::warn!("{}:{}: {}", path.display(), w.line, w.message);
    }
    Ok(table)
}

pub fn load_embeddings_with_warnings(path: &Path) -> Result<(EmbeddingTable, Vec<LoadWarning>)> {
    let reader = open(path)?;
    let mut table: Option<EmbeddingTable> = None;
    let mut warnings = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let (word, rest) = line.split_once('\t').ok_or_else(|| CorpusError::Parse {
            line: line_no,
            message: "expected word<TAB>vector".to_string(),
        })?;
        let vector = rest
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| CorpusError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        if vector.is_empty() {
            return Err(CorpusError::Parse {
                line: line_no,
                message: "empty vector".to_string(),
            });
        }
        let table = table.get_or_insert_with(|| EmbeddingTable::new(vector.len()));
        if vector.len() != table.dim {
            return Err(CorpusError::Dimension {
                line: line_no,
                expected: table.dim,
                found: vector.len(),
            });
        }
        if vector.iter().all(|v| *v == 0.0) {
            return Err(CorpusError::ZeroVector {
                line: line_no,
                word: word.to_string(),
            });
        }
        if table.insert(word, vector).is_some() {
            warnings.push(LoadWarning {
                line: line_no,
                message: format!("duplicate word {word:?}, last occurrence wins"),
            });
        }
    }
    Ok((table.unwrap_or_default(), warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelShare {
    pub label: String,
    pub count: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelAccuracy {
    pub model: String,
    pub accuracy: f64,
}

/// Summary of a dataset, optionally restricted to one split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub split: Option<String>,
    pub total: usize,
    pub split_counts: Vec<(String, usize)>,
    pub label_distribution: Vec<LabelShare>,
    /// Only models that predict every instance in scope.
    pub accuracies: Vec<ModelAccuracy>,
    pub average_accuracy: Option<f64>,
}

pub fn dataset_stats(dataset: &Dataset, split: Option<&str>) -> Result<DatasetStats> {
    let members = dataset.split_members(split)?;
    let mut split_counts = vec![0usize; dataset.splits.len()];
    let mut label_counts = vec![0usize; dataset.labels.len()];
    for &i in &members {
        split_counts[dataset.split_index(i)] += 1;
        label_counts[dataset.label_index(i)] += 1;
    }
    let total = members.len();
    let label_distribution = dataset
        .labels
        .iter()
        .zip(&label_counts)
        .map(|(l, &c)| LabelShare {
            label: l.clone(),
            count: c,
            fraction: if total == 0 { 0.0 } else { c as f64 / total as f64 },
        })
        .collect();
    let accuracies: Vec<ModelAccuracy> = dataset
        .models
        .iter()
        .enumerate()
        .filter_map(|(m, model)| {
            dataset.accuracy(m, &members).map(|accuracy| ModelAccuracy {
                model: model.model_name.clone(),
                accuracy,
            })
        })
        .collect();
    let average_accuracy = if accuracies.is_empty() {
        None
    } else {
        Some(accuracies.iter().map(|a| a.accuracy).sum::<f64>() / accuracies.len() as f64)
    };
    Ok(DatasetStats {
        split: split.map(str::to_string),
        total,
        split_counts: dataset
            .splits
            .iter()
            .cloned()
            .zip(split_counts)
            .filter(|(_, c)| *c > 0)
            .collect(),
        label_distribution,
        accuracies,
        average_accuracy,
    })
}

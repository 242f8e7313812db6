//! Coverage, label distribution, prediction label and productivity.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::Dataset;

/// A ratio that may be undefined (zero denominator). Serializes as a number
/// or the string `"undefined"`, never as 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Quotient {
    Defined(f64),
    #[default]
    Undefined,
}

impl Quotient {
    pub fn ratio(num: usize, den: usize) -> Self {
        if den == 0 {
            Quotient::Undefined
        } else {
            Quotient::Defined(num as f64 / den as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Quotient::Defined(v) => Some(v),
            Quotient::Undefined => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, Quotient::Defined(_))
    }

    /// `self - other`, undefined if either side is.
    pub fn minus(self, other: Quotient) -> Quotient {
        match (self, other) {
            (Quotient::Defined(a), Quotient::Defined(b)) => Quotient::Defined(a - b),
            _ => Quotient::Undefined,
        }
    }
}

impl From<Option<f64>> for Quotient {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Quotient::Undefined, Quotient::Defined)
    }
}

impl fmt::Display for Quotient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quotient::Defined(v) => write!(f, "{v:.4}"),
            Quotient::Undefined => f.write_str("undefined"),
        }
    }
}

impl Serialize for Quotient {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Quotient::Defined(v) => serializer.serialize_f64(*v),
            Quotient::Undefined => serializer.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Quotient {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(v) => Ok(Quotient::Defined(v)),
            Repr::Str(s) if s == "undefined" => Ok(Quotient::Undefined),
            Repr::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"undefined\", got {s:?}"
            ))),
        }
    }
}

/// Index of the dominant label and the productivity, given per-label counts
/// in dataset label order. Ties go to the label declared first.
pub fn dominant(counts: &[usize]) -> Option<(usize, f64)> {
    let coverage: usize = counts.iter().sum();
    if coverage == 0 {
        return None;
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    Some((best, counts[best] as f64 / coverage as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortcutStats {
    pub coverage: usize,
    pub label_distribution: BTreeMap<String, usize>,
    pub prediction: Option<String>,
    pub productivity: Quotient,
}

impl ShortcutStats {
    pub fn from_counts(labels: &[String], counts: &[usize]) -> Self {
        let coverage = counts.iter().sum();
        let (prediction, productivity) = match dominant(counts) {
            Some((p, prod)) => (Some(labels[p].clone()), Quotient::Defined(prod)),
            None => (None, Quotient::Undefined),
        };
        Self {
            coverage,
            label_distribution: labels.iter().cloned().zip(counts.iter().copied()).collect(),
            prediction,
            productivity,
        }
    }
}

/// Whole-set statistics plus one entry per declared split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    pub whole: ShortcutStats,
    pub splits: BTreeMap<String, ShortcutStats>,
}

impl NodeStats {
    /// Tallies the covered instances (dataset indices) by split and label.
    pub fn compute<I>(dataset: &Dataset, covered: I) -> Self
    where
        I: IntoIterator<Item = usize>,
    {
        let n_labels = dataset.labels().len();
        let mut table = vec![0usize; dataset.splits().len() * n_labels];
        let mut whole = vec![0usize; n_labels];
        for i in covered {
            let l = dataset.label_index(i);
            table[dataset.split_index(i) * n_labels + l] += 1;
            whole[l] += 1;
        }
        let splits = dataset
            .splits()
            .iter()
            .enumerate()
            .map(|(s, name)| {
                let row = &table[s * n_labels..(s + 1) * n_labels];
                (name.clone(), ShortcutStats::from_counts(dataset.labels(), row))
            })
            .collect();
        Self {
            whole: ShortcutStats::from_counts(dataset.labels(), &whole),
            splits,
        }
    }

    /// Stats for a split, or the whole set for `None`.
    pub fn get(&self, split: Option<&str>) -> Option<&ShortcutStats> {
        match split {
            None => Some(&self.whole),
            Some(s) => self.splits.get(s),
        }
    }
}

//! Shortcut templates: one or two POS slots, optional word constraints and a
//! fixed gap between the slots.
//!
//! Slots are always stored in sentence order. The canonical text form is
//!
//! ```text
//! [pos=DET word=The] gap=1 [pos=VERB word=will]
//! [pos=PRON words={he,it,she} repr=he]
//! ```
//!
//! and is what node ids are hashed from.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::corpus::{Instance, Token};

/// A clustered word set carried by an aggregate slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WordSet {
    words: Vec<String>,
    representative: String,
}

impl WordSet {
    /// Returns `None` unless there are at least two distinct words and the
    /// representative is one of them.
    pub fn new<I, S>(words: I, representative: impl Into<String>) -> Option<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let words: Vec<String> = words
            .into_iter()
            .map(Into::into)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let representative = representative.into();
        if words.len() < 2 || words.binary_search(&representative).is_err() {
            return None;
        }
        Some(Self {
            words,
            representative,
        })
    }

    /// Members in sorted order.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn representative(&self) -> &str {
        &self.representative
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.binary_search_by(|w| w.as_str().cmp(word)).is_ok()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SlotWord {
    Any,
    Word(String),
    Set(WordSet),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Slot {
    pub pos: String,
    pub word: SlotWord,
}

impl Slot {
    pub fn pos(pos: impl Into<String>) -> Self {
        Self {
            pos: pos.into(),
            word: SlotWord::Any,
        }
    }

    pub fn word(pos: impl Into<String>, word: impl Into<String>) -> Self {
        Self {
            pos: pos.into(),
            word: SlotWord::Word(word.into()),
        }
    }

    pub fn set(pos: impl Into<String>, set: WordSet) -> Self {
        Self {
            pos: pos.into(),
            word: SlotWord::Set(set),
        }
    }

    /// The same slot with any word constraint removed.
    pub fn abstracted(&self) -> Self {
        Self::pos(self.pos.clone())
    }

    pub fn has_word_constraint(&self) -> bool {
        !matches!(self.word, SlotWord::Any)
    }

    pub fn literal(&self) -> Option<&str> {
        match &self.word {
            SlotWord::Word(w) => Some(w),
            _ => None,
        }
    }

    /// Whether the token satisfies this slot. With `case_fold`, the token
    /// surface is lowercased before comparison; template words are expected
    /// to be lowercase already.
    pub fn accepts(&self, token: &Token, case_fold: bool) -> bool {
        if token.pos != self.pos {
            return false;
        }
        match &self.word {
            SlotWord::Any => true,
            SlotWord::Word(w) if case_fold => *w == token.surface.to_lowercase(),
            SlotWord::Word(w) => *w == token.surface,
            SlotWord::Set(set) if case_fold => set.contains(&token.surface.to_lowercase()),
            SlotWord::Set(set) => set.contains(&token.surface),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Template {
    Single(Slot),
    /// `gap` counts the tokens strictly between the two slots.
    Pair { left: Slot, gap: usize, right: Slot },
}

/// Token indices matched by one occurrence of a template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchSpan {
    pub instance_id: String,
    pub indices: Vec<usize>,
}

impl Template {
    pub fn single(slot: Slot) -> Self {
        Template::Single(slot)
    }

    pub fn pair(left: Slot, gap: usize, right: Slot) -> Self {
        Template::Pair { left, gap, right }
    }

    pub fn slots(&self) -> Vec<&Slot> {
        match self {
            Template::Single(s) => vec![s],
            Template::Pair { left, right, .. } => vec![left, right],
        }
    }

    pub fn slot_count(&self) -> usize {
        match self {
            Template::Single(_) => 1,
            Template::Pair { .. } => 2,
        }
    }

    pub fn gap(&self) -> Option<usize> {
        match self {
            Template::Single(_) => None,
            Template::Pair { gap, .. } => Some(*gap),
        }
    }

    pub fn slot(&self, k: usize) -> Option<&Slot> {
        match (self, k) {
            (Template::Single(s), 0) => Some(s),
            (Template::Pair { left, .. }, 0) => Some(left),
            (Template::Pair { right, .. }, 1) => Some(right),
            _ => None,
        }
    }

    /// Returns a copy with slot `k` replaced. Panics if `k` is out of range.
    pub fn with_slot(&self, k: usize, slot: Slot) -> Self {
        let mut t = self.clone();
        match (&mut t, k) {
            (Template::Single(s), 0) => *s = slot,
            (Template::Pair { left, .. }, 0) => *left = slot,
            (Template::Pair { right, .. }, 1) => *right = slot,
            _ => panic!("slot index {k} out of range"),
        }
        t
    }

    pub fn is_aggregate(&self) -> bool {
        self.slots()
            .iter()
            .any(|s| matches!(s.word, SlotWord::Set(_)))
    }

    /// Start positions of every occurrence, as token index lists.
    pub fn positions(&self, tokens: &[Token], case_fold: bool) -> Vec<Vec<usize>> {
        match self {
            Template::Single(slot) => tokens
                .iter()
                .enumerate()
                .filter(|(_, t)| slot.accepts(t, case_fold))
                .map(|(i, _)| vec![i])
                .collect(),
            Template::Pair { left, gap, right } => {
                let offset = gap + 1;
                if tokens.len() <= offset {
                    return Vec::new();
                }
                (0..tokens.len() - offset)
                    .filter(|&i| {
                        left.accepts(&tokens[i], case_fold)
                            && right.accepts(&tokens[i + offset], case_fold)
                    })
                    .map(|i| vec![i, i + offset])
                    .collect()
            }
        }
    }

    pub fn matches_tokens(&self, tokens: &[Token], case_fold: bool) -> bool {
        match self {
            Template::Single(slot) => tokens.iter().any(|t| slot.accepts(t, case_fold)),
            Template::Pair { left, gap, right } => {
                let offset = gap + 1;
                tokens.len() > offset
                    && tokens.iter().zip(&tokens[offset..]).any(|(a, b)| {
                        left.accepts(a, case_fold) && right.accepts(b, case_fold)
                    })
            }
        }
    }

    /// Exact, case-sensitive matching.
    pub fn matches(&self, instance: &Instance) -> bool {
        self.matches_tokens(&instance.tokens, false)
    }

    pub fn match_spans(&self, instance: &Instance, case_fold: bool) -> Vec<MatchSpan> {
        self.positions(&instance.tokens, case_fold)
            .into_iter()
            .map(|indices| MatchSpan {
                instance_id: instance.id.clone(),
                indices,
            })
            .collect()
    }

    /// Templates one abstraction step above this one: each word constraint
    /// dropped in turn, and for pairs, each slot dropped entirely. Sorted and
    /// deduplicated.
    pub fn parents(&self) -> Vec<Template> {
        let mut out = Vec::with_capacity(4);
        match self {
            Template::Single(s) => {
                if s.has_word_constraint() {
                    out.push(Template::Single(s.abstracted()));
                }
            }
            Template::Pair { left, gap, right } => {
                if left.has_word_constraint() {
                    out.push(Template::pair(left.abstracted(), *gap, right.clone()));
                }
                if right.has_word_constraint() {
                    out.push(Template::pair(left.clone(), *gap, right.abstracted()));
                }
                out.push(Template::Single(left.clone()));
                out.push(Template::Single(right.clone()));
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Strict ancestry under repeated application of [`Template::parents`].
    pub fn is_ancestor_of(&self, other: &Template) -> bool {
        let mut queue: VecDeque<Template> = other.parents().into();
        let mut seen = BTreeSet::new();
        while let Some(t) = queue.pop_front() {
            if t == *self {
                return true;
            }
            if seen.insert(t.clone()) {
                queue.extend(t.parents());
            }
        }
        false
    }

    /// Full canonical text form; unique per template.
    pub fn canonical(&self) -> String {
        self.to_string()
    }

    /// Short form for display: aggregates show the representative and the
    /// number of other members, e.g. `[pos=PRON words={he,+3}]`.
    pub fn display_form(&self) -> String {
        let mut out = String::new();
        let write_slot = |s: &Slot, out: &mut String| {
            out.push_str("[pos=");
            escape_into(&s.pos, out);
            match &s.word {
                SlotWord::Any => {}
                SlotWord::Word(w) => {
                    out.push_str(" word=");
                    escape_into(w, out);
                }
                SlotWord::Set(set) => {
                    out.push_str(" words={");
                    escape_into(set.representative(), out);
                    out.push_str(&format!(",+{}}}", set.len() - 1));
                }
            }
            out.push(']');
        };
        match self {
            Template::Single(s) => write_slot(s, &mut out),
            Template::Pair { left, gap, right } => {
                write_slot(left, &mut out);
                out.push_str(&format!(" gap={gap} "));
                write_slot(right, &mut out);
            }
        }
        out
    }

    /// Stable node id: the first 16 hex digits of SHA-256 over the
    /// canonical form.
    pub fn id(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(&digest[..8])
    }
}

const SPECIAL: &[char] = &['\\', '[', ']', '{', '}', ',', '=', ' '];

fn escape_into(s: &str, out: &mut String) {
    for c in s.chars() {
        if SPECIAL.contains(&c) || c.is_whitespace() {
            out.push('\\');
        }
        out.push(c);
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::from("[pos=");
        escape_into(&self.pos, &mut s);
        match &self.word {
            SlotWord::Any => {}
            SlotWord::Word(w) => {
                s.push_str(" word=");
                escape_into(w, &mut s);
            }
            SlotWord::Set(set) => {
                s.push_str(" words={");
                for (i, w) in set.words().iter().enumerate() {
                    if i > 0 {
                        s.push(',');
                    }
                    escape_into(w, &mut s);
                }
                s.push_str("} repr=");
                escape_into(set.representative(), &mut s);
            }
        }
        s.push(']');
        f.write_str(&s)
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Template::Single(s) => write!(f, "{s}"),
            Template::Pair { left, gap, right } => write!(f, "{left} gap={gap} {right}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid template at byte {offset}: {message}")]
pub struct ParseTemplateError {
    pub offset: usize,
    pub message: String,
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseTemplateError> {
        Err(ParseTemplateError {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, lit: &str) -> bool {
        if self.src[self.pos..].starts_with(lit) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, lit: &str) -> Result<(), ParseTemplateError> {
        if self.eat(lit) {
            Ok(())
        } else {
            self.err(format!("expected {lit:?}"))
        }
    }

    /// Reads an escaped atom up to the next unescaped special character.
    fn atom(&mut self) -> Result<String, ParseTemplateError> {
        let mut out = String::new();
        while let Some(c) = self.peek() {
            if c == '\\' {
                self.pos += 1;
                match self.peek() {
                    Some(e) => {
                        out.push(e);
                        self.pos += e.len_utf8();
                    }
                    None => return self.err("dangling escape"),
                }
            } else if SPECIAL.contains(&c) || c.is_whitespace() {
                break;
            } else {
                out.push(c);
                self.pos += c.len_utf8();
            }
        }
        if out.is_empty() {
            return self.err("expected a non-empty value");
        }
        Ok(out)
    }

    fn slot(&mut self) -> Result<Slot, ParseTemplateError> {
        self.expect("[pos=")?;
        let pos = self.atom()?;
        let word = if self.eat(" word=") {
            SlotWord::Word(self.atom()?)
        } else if self.eat(" words={") {
            let mut words = vec![self.atom()?];
            while self.eat(",") {
                words.push(self.atom()?);
            }
            self.expect("} repr=")?;
            let repr = self.atom()?;
            match WordSet::new(words, repr) {
                Some(set) => SlotWord::Set(set),
                None => return self.err("word set needs two members including repr"),
            }
        } else {
            SlotWord::Any
        };
        self.expect("]")?;
        Ok(Slot { pos, word })
    }
}

impl FromStr for Template {
    type Err = ParseTemplateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut cur = Cursor { src: s, pos: 0 };
        let left = cur.slot()?;
        let template = if cur.eat(" gap=") {
            let start = cur.pos;
            while cur.peek().is_some_and(|c| c.is_ascii_digit()) {
                cur.pos += 1;
            }
            let gap: usize = match s[start..cur.pos].parse() {
                Ok(g) => g,
                Err(_) => return cur.err("expected gap digits"),
            };
            cur.expect(" ")?;
            let right = cur.slot()?;
            Template::pair(left, gap, right)
        } else {
            Template::Single(left)
        };
        if cur.pos != s.len() {
            return cur.err("trailing input");
        }
        Ok(template)
    }
}

impl Serialize for Template {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Template {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

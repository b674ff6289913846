//! Semantic-concept vocabulary and multi-hot concept targets.
//!
//! The vocabulary is the top-N most frequent content words (nouns, verbs,
//! adjectives, adverbs) in the caption corpus, after stopword removal.
//! Ranking is by raw occurrence count, descending, with ties broken by
//! ascending word order, so rebuilding from the same corpus always yields
//! the same entry list.
//!
//! Lexicon file format: one `word<TAB>tag[,tag...]` line per word, tags in
//! `{noun, verb, adjective, adverb, other}`. Vocabulary file format: one
//! `word<TAB>tag<TAB>count` line per entry in rank order.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Segment, VideoAnnotation};
use crate::error::{Error, Result};

/// Word classes distinguished by the lexicon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosTag {
    Noun,
    Verb,
    Adjective,
    Adverb,
    Other,
}

impl PosTag {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "noun" => Ok(PosTag::Noun),
            "verb" => Ok(PosTag::Verb),
            "adjective" => Ok(PosTag::Adjective),
            "adverb" => Ok(PosTag::Adverb),
            "other" => Ok(PosTag::Other),
            _ => Err(Error::validation(format!("unknown part-of-speech tag {s:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PosTag::Noun => "noun",
            PosTag::Verb => "verb",
            PosTag::Adjective => "adjective",
            PosTag::Adverb => "adverb",
            PosTag::Other => "other",
        }
    }

    fn is_content(&self) -> bool {
        !matches!(self, PosTag::Other)
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Word class lookup: lowercase token to its ordered list of tags.
///
/// Tag order is the order listed in the lexicon file; when a word carries
/// several content tags, the first listed one is the tag recorded in the
/// vocabulary.
#[derive(Debug, Clone, Default)]
pub struct PosLexicon {
    tags: HashMap<String, Vec<PosTag>>,
}

impl PosLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert a word with its tags in listed order. Duplicate tags for the
    /// same word are dropped, keeping the first occurrence.
    pub fn insert(&mut self, word: impl Into<String>, tags: &[PosTag]) -> Result<()> {
        let word = word.into();
        if word.is_empty() || word.chars().any(|c| c.is_uppercase()) {
            return Err(Error::validation(format!(
                "lexicon words must be nonempty lowercase, got {word:?}"
            )));
        }
        if tags.is_empty() {
            return Err(Error::validation(format!(
                "lexicon entry {word:?} must carry at least one tag"
            )));
        }
        let entry = self.tags.entry(word).or_default();
        for &tag in tags {
            if !entry.contains(&tag) {
                entry.push(tag);
            }
        }
        Ok(())
    }

    pub fn tags(&self, word: &str) -> Option<&[PosTag]> {
        self.tags.get(word).map(Vec::as_slice)
    }

    /// First content tag in listed order, if any.
    pub fn content_tag(&self, word: &str) -> Option<PosTag> {
        self.tags
            .get(word)
            .and_then(|ts| ts.iter().copied().find(PosTag::is_content))
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Parse the `word<TAB>tag[,tag...]` line format. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut lexicon = PosLexicon::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, tags) = line.split_once('\t').ok_or_else(|| {
                Error::validation(format!("lexicon line {}: missing tab", lineno + 1))
            })?;
            let tags: Vec<PosTag> = tags
                .split(',')
                .map(|t| PosTag::parse(t.trim()))
                .collect::<Result<_>>()?;
            lexicon.insert(word, &tags)?;
        }
        Ok(lexicon)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse_tsv(&text)
    }

    pub fn to_tsv(&self) -> String {
        let mut words: Vec<&String> = self.tags.keys().collect();
        words.sort_unstable();
        let mut out = String::new();
        for word in words {
            let tags: Vec<&str> = self.tags[word].iter().map(PosTag::as_str).collect();
            out.push_str(word);
            out.push('\t');
            out.push_str(&tags.join(","));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Small default stopword list.
///
/// Auxiliary verbs and determiners are tagged as verbs/other in most
/// lexicons and would otherwise crowd out content words.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "an", "the", "is", "are", "was", "were", "be", "been", "being", "am", "do", "does",
    "did", "has", "have", "had", "will", "would", "can", "could", "shall", "should", "may",
    "might", "must", "and", "or", "of", "to", "in", "on", "at", "it", "its", "his", "her",
    "their", "this", "that", "then", "there", "as", "by", "with", "from", "up", "down", "out",
    "off", "not", "no", "so", "we", "he", "she", "they", "you", "i",
];

pub fn default_stopwords() -> BTreeSet<String> {
    DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect()
}

/// Load a stopword file: one word per line, `#` comments allowed.
pub fn load_stopwords(path: impl AsRef<Path>) -> Result<BTreeSet<String>> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_lowercase())
        .collect())
}

/// One vocabulary entry: surface word, recorded tag, corpus count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptEntry {
    pub word: String,
    pub pos: PosTag,
    pub count: u64,
}

/// Ordered list of semantic concepts; defines the multi-hot label space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptVocabulary {
    entries: Vec<ConceptEntry>,
    index: HashMap<String, usize>,
    max_size: usize,
}

impl ConceptVocabulary {
    fn from_entries(entries: Vec<ConceptEntry>, max_size: usize) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.word.clone(), i))
            .collect();
        ConceptVocabulary {
            entries,
            index,
            max_size,
        }
    }

    pub fn entries(&self) -> &[ConceptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// `word<TAB>tag<TAB>count` lines in rank order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}\n", e.word, e.pos, e.count));
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (word, tag, count) = match (parts.next(), parts.next(), parts.next()) {
                (Some(w), Some(t), Some(c)) => (w, t, c),
                _ => {
                    return Err(Error::validation(format!(
                        "vocabulary line {}: expected word<TAB>tag<TAB>count",
                        lineno + 1
                    )))
                }
            };
            let count: u64 = count.parse().map_err(|_| {
                Error::validation(format!("vocabulary line {}: bad count {count:?}", lineno + 1))
            })?;
            entries.push(ConceptEntry {
                word: word.to_string(),
                pos: PosTag::parse(tag)?,
                count,
            });
        }
        let n = entries.len();
        Ok(Self::from_entries(entries, n))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse_tsv(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Multi-hot target over the vocabulary: bit i marks concept i present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptTarget {
    bits: Vec<bool>,
}

impl ConceptTarget {
    pub fn zeros(len: usize) -> Self {
        ConceptTarget {
            bits: vec![false; len],
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        ConceptTarget { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn set(&mut self, idx: usize) {
        self.bits[idx] = true;
    }

    /// In-place union with another target of the same length.
    pub fn union_with(&mut self, other: &ConceptTarget) {
        debug_assert_eq!(self.bits.len(), other.bits.len());
        for (b, o) in self.bits.iter_mut().zip(&other.bits) {
            *b |= o;
        }
    }
}

/// Build the concept vocabulary from a caption corpus.
///
/// Counts token occurrences (not documents) over all sentences, keeps
/// tokens whose lexicon tags include a content class and that are not
/// stopwords, sorts by count descending with ties broken by ascending
/// word, and truncates to `n`.
pub fn build_vocabulary<'a, I>(
    annotations: I,
    lexicon: &PosLexicon,
    stopwords: &BTreeSet<String>,
    n: usize,
) -> Result<ConceptVocabulary>
where
    I: IntoIterator<Item = &'a VideoAnnotation>,
{
    if n < 1 {
        return Err(Error::argument("vocabulary size must be at least 1".to_string()));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for ann in annotations {
        for event in &ann.events {
            for token in tokenize(&event.sentence) {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
    }
    let mut entries: Vec<ConceptEntry> = counts
        .into_iter()
        .filter(|(word, _)| !stopwords.contains(word))
        .filter_map(|(word, count)| {
            lexicon.content_tag(&word).map(|pos| ConceptEntry { word, pos, count })
        })
        .collect();
    entries.sort_unstable_by(|a, b| b.count.cmp(&a.count).then_with(|| a.word.cmp(&b.word)));
    entries.truncate(n);
    Ok(ConceptVocabulary::from_entries(entries, n))
}

/// Multi-hot target for a list of sentences: bit i set iff word i appears
/// among the tokenized sentences. Presence-based; counts are ignored.
pub fn concept_target(sentences: &[String], vocab: &ConceptVocabulary) -> ConceptTarget {
    let mut target = ConceptTarget::zeros(vocab.len());
    for sentence in sentences {
        for token in tokenize(sentence) {
            if let Some(idx) = vocab.index_of(&token) {
                target.set(idx);
            }
        }
    }
    target
}

/// Semantic target for one clip: the union of concepts from every event
/// whose segment overlaps the clip by a positive duration.
pub fn clip_semantic_targets(
    annotation: &VideoAnnotation,
    clip: &Segment,
    vocab: &ConceptVocabulary,
) -> ConceptTarget {
    let sentences: Vec<String> = annotation
        .events
        .iter()
        .filter(|ev| ev.segment.overlap(clip) > 0.0)
        .map(|ev| ev.sentence.clone())
        .collect();
    concept_target(&sentences, vocab)
}

/// Number of distinct vocabulary words in the tokenized caption.
pub fn unique_concept_count(caption: &str, vocab: &ConceptVocabulary) -> usize {
    let mut seen = HashSet::new();
    for token in tokenize(caption) {
        if let Some(idx) = vocab.index_of(&token) {
            seen.insert(idx);
        }
    }
    seen.len()
}

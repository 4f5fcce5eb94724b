//! Handcrafted token features over a growable, append-only feature space.

use std::collections::HashMap;

use crate::corpus::{Corpus, Sentence};
use crate::error::{Error, Result};

pub const BIAS_FEATURE: &str = "bias";
const BOS: &str = "<BOS>";
const EOS: &str = "<EOS>";
const MAX_SHAPE_RUN: usize = 4;

/// Sparse feature vector with strictly increasing indices. Index 0 is the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
    dimension_hint: usize,
}

impl SparseVector {
    /// Sorts and merges duplicate indices (summing values). Adds the bias if absent.
    pub fn from_entries(mut entries: Vec<(usize, f64)>, dimension_hint: usize) -> Result<Self> {
        if entries.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
        if !entries.iter().any(|(i, _)| *i == 0) {
            entries.push((0, 1.0));
        }
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => merged.push((i, v)),
            }
        }
        let dimension_hint = dimension_hint.max(merged.last().map_or(0, |e| e.0 + 1));
        Ok(SparseVector {
            entries: merged,
            dimension_hint,
        })
    }

    /// Binary vector over the given indices (bias added).
    pub fn binary(indices: &[usize], dimension_hint: usize) -> Self {
        let entries = indices.iter().map(|&i| (i, 1.0)).collect();
        let mut v = SparseVector::from_entries(entries, dimension_hint).unwrap();
        for e in &mut v.entries {
            e.1 = 1.0;
        }
        v
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dimension_hint(&self) -> usize {
        self.dimension_hint
    }

    pub fn max_index(&self) -> usize {
        self.entries.last().map_or(0, |e| e.0)
    }
}

/// Character-class signature with runs capped at four ("Aspirin" -> "Xxxxx").
pub fn word_shape(word: &str) -> String {
    let mut out = String::new();
    let mut last: Option<char> = None;
    let mut run = 0;
    for ch in word.chars() {
        let class = if ch.is_uppercase() {
            'X'
        } else if ch.is_lowercase() {
            'x'
        } else if ch.is_ascii_digit() {
            'd'
        } else {
            ch
        };
        if Some(class) == last {
            run += 1;
        } else {
            last = Some(class);
            run = 1;
        }
        if run <= MAX_SHAPE_RUN {
            out.push(class);
        }
    }
    out
}

fn context_word(sentence: &Sentence, position: usize, offset: isize) -> String {
    let p = position as isize + offset;
    if p < 0 {
        BOS.to_string()
    } else if p as usize >= sentence.len() {
        EOS.to_string()
    } else {
        sentence.tokens()[p as usize].surface.to_lowercase()
    }
}

/// Template instantiations fired by the token at `position`, bias first.
pub fn feature_strings(sentence: &Sentence, position: usize) -> Result<Vec<String>> {
    if position >= sentence.len() {
        return Err(Error::InvalidArgument(format!(
            "position {position} out of range for sentence of length {}",
            sentence.len()
        )));
    }
    let word = &sentence.tokens()[position].surface;
    let lower = word.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();

    let mut feats = vec![BIAS_FEATURE.to_string()];
    feats.push(format!("w={lower}"));
    feats.push(format!("shape={}", word_shape(word)));
    for n in 1..=4.min(chars.len()) {
        let prefix: String = chars[..n].iter().collect();
        let suffix: String = chars[chars.len() - n..].iter().collect();
        feats.push(format!("pre{n}={prefix}"));
        feats.push(format!("suf{n}={suffix}"));
    }
    if !word.is_empty() && word.chars().all(|c| c.is_ascii_digit()) {
        feats.push("is_digit".to_string());
    }
    if !word.is_empty() && word.chars().all(|c| c.is_ascii_punctuation()) {
        feats.push("is_punct".to_string());
    }
    if word.chars().next().is_some_and(char::is_uppercase) {
        feats.push("is_cap".to_string());
    }
    for offset in [-2isize, -1, 1, 2] {
        feats.push(format!("w[{offset:+}]={}", context_word(sentence, position, offset)));
    }
    Ok(feats)
}

/// Bijection between feature strings and column indices. Index 0 is always the bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureIndexer {
    index: HashMap<String, usize>,
    names: Vec<String>,
    frozen: bool,
}

impl Default for FeatureIndexer {
    fn default() -> Self {
        FeatureIndexer::new()
    }
}

impl FeatureIndexer {
    pub fn new() -> Self {
        let mut ix = FeatureIndexer {
            index: HashMap::new(),
            names: Vec::new(),
            frozen: false,
        };
        ix.intern(BIAS_FEATURE);
        ix
    }

    fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.index.insert(name.to_string(), i);
        self.names.push(name.to_string());
        i
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn unfreeze(&mut self) {
        self.frozen = false;
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    /// Featurizes one token, allocating unseen features unless frozen.
    pub fn featurize(&mut self, sentence: &Sentence, position: usize) -> Result<SparseVector> {
        if self.frozen {
            return self.lookup(sentence, position);
        }
        let idx: Vec<usize> = feature_strings(sentence, position)?
            .iter()
            .map(|f| self.intern(f))
            .collect();
        Ok(SparseVector::binary(&idx, self.len()))
    }

    /// Featurizes one token, dropping features that have no index.
    pub fn lookup(&self, sentence: &Sentence, position: usize) -> Result<SparseVector> {
        let idx: Vec<usize> = feature_strings(sentence, position)?
            .iter()
            .filter_map(|f| self.get(f))
            .collect();
        Ok(SparseVector::binary(&idx, self.len()))
    }

    pub fn lookup_sentence(&self, sentence: &Sentence) -> Vec<SparseVector> {
        (0..sentence.len())
            .map(|p| self.lookup(sentence, p).expect("position in range"))
            .collect()
    }

    pub fn lookup_corpus(&self, corpus: &Corpus) -> Vec<Vec<SparseVector>> {
        corpus
            .sentences()
            .iter()
            .map(|s| self.lookup_sentence(s))
            .collect()
    }

    /// Indexes every template instantiation in `corpus`. Existing indices never move.
    pub fn grow(&mut self, corpus: &Corpus) -> Result<()> {
        if self.frozen {
            return Err(Error::FrozenIndexer);
        }
        for s in corpus.sentences() {
            for p in 0..s.len() {
                for f in feature_strings(s, p)? {
                    self.intern(&f);
                }
            }
        }
        Ok(())
    }

    /// Ordered feature strings, one per line; line number is the index.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in &self.names {
            out.push_str(n);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut ix = FeatureIndexer {
            index: HashMap::new(),
            names: Vec::new(),
            frozen: false,
        };
        for (n, line) in text.lines().enumerate() {
            if ix.index.contains_key(line) {
                return Err(Error::Parse {
                    line: n + 1,
                    message: format!("duplicate feature {line:?}"),
                });
            }
            ix.intern(line);
        }
        if ix.names.first().map(String::as_str) != Some(BIAS_FEATURE) {
            return Err(Error::Parse {
                line: 1,
                message: "feature list must start with the bias feature".into(),
            });
        }
        Ok(ix)
    }
}

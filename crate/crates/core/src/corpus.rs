//! CoNLL-column corpora, label inventories, and experiment splits.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const OUTSIDE: &str = "O";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub gold_tag: String,
}

impl Token {
    pub fn new(surface: impl Into<String>, gold_tag: impl Into<String>) -> Self {
        Token {
            surface: surface.into(),
            gold_tag: gold_tag.into(),
        }
    }

    /// Entity type carried by the tag, `None` for "O".
    pub fn entity_type(&self) -> Option<&str> {
        tag_type(&self.gold_tag)
    }
}

/// Entity type of a BIO tag (`"B-PER"` -> `Some("PER")`).
pub fn tag_type(tag: &str) -> Option<&str> {
    tag.strip_prefix("B-").or_else(|| tag.strip_prefix("I-"))
}

fn validate_tag(tag: &str) -> std::result::Result<(), String> {
    if tag == OUTSIDE {
        return Ok(());
    }
    match tag_type(tag) {
        Some(t) if !t.is_empty() && t != OUTSIDE => Ok(()),
        _ => Err(format!("invalid BIO tag {tag:?}")),
    }
}

/// Rewrites any `I-X` that does not continue an `X` span into `B-X`.
pub fn repair_bio<S: AsRef<str>>(tags: &[S]) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(tags.len());
    for tag in tags {
        let tag = tag.as_ref();
        let repaired = match tag.strip_prefix("I-") {
            Some(ty) => {
                let continues = out.last().and_then(|p| tag_type(p)) == Some(ty);
                if continues {
                    tag.to_string()
                } else {
                    format!("B-{ty}")
                }
            }
            None => tag.to_string(),
        };
        out.push(repaired);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    tokens: Vec<Token>,
}

impl Sentence {
    /// Builds a sentence, repairing illegal `I-` transitions.
    pub fn new(tokens: Vec<Token>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::InvalidArgument("sentence must not be empty".into()));
        }
        for t in &tokens {
            validate_tag(&t.gold_tag).map_err(Error::InvalidArgument)?;
        }
        let repaired = repair_bio(&tokens.iter().map(|t| &t.gold_tag).collect::<Vec<_>>());
        let tokens = tokens
            .into_iter()
            .zip(repaired)
            .map(|(t, gold_tag)| Token {
                surface: t.surface,
                gold_tag,
            })
            .collect();
        Ok(Sentence { tokens })
    }

    pub fn from_pairs(pairs: &[(&str, &str)]) -> Result<Self> {
        Sentence::new(pairs.iter().map(|(w, t)| Token::new(*w, *t)).collect())
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tags(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.gold_tag.as_str()).collect()
    }

    /// Per-token label indices (entity type or "O") under `labels`.
    pub fn label_indices(&self, labels: &LabelSet) -> Result<Vec<usize>> {
        self.tokens
            .iter()
            .map(|t| {
                let name = t.entity_type().unwrap_or(OUTSIDE);
                labels
                    .index_of(name)
                    .ok_or_else(|| Error::UnknownLabel(name.to_string()))
            })
            .collect()
    }
}

/// Label inventory: entity type names plus the single "O" class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    names: Vec<String>,
    o_index: usize,
}

impl LabelSet {
    /// Takes the full ordered label list, which must contain "O" exactly once.
    pub fn new(names: Vec<String>) -> Result<Self> {
        let o_count = names.iter().filter(|n| *n == OUTSIDE).count();
        if o_count != 1 {
            return Err(Error::MissingOClass);
        }
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(Error::InvalidArgument("duplicate label names".into()));
        }
        let o_index = names.iter().position(|n| n == OUTSIDE).unwrap();
        Ok(LabelSet { names, o_index })
    }

    /// "O" at index 0 followed by the entity types in sorted order.
    pub fn from_types<I, S>(types: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let types: BTreeSet<String> = types
            .into_iter()
            .map(Into::into)
            .filter(|t| t != OUTSIDE)
            .collect();
        let mut names = vec![OUTSIDE.to_string()];
        names.extend(types);
        LabelSet { names, o_index: 0 }
    }

    pub fn union(&self, other: &LabelSet) -> LabelSet {
        LabelSet::from_types(self.entity_types().chain(other.entity_types()))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn o_index(&self) -> usize {
        self.o_index
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn entity_types(&self) -> impl Iterator<Item = &str> {
        self.names
            .iter()
            .filter(|n| *n != OUTSIDE)
            .map(String::as_str)
    }

    /// BIO tags for a label-index sequence; a run of one type is one span.
    pub fn to_tags(&self, labels: &[usize]) -> Vec<String> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                if y == self.o_index {
                    OUTSIDE.to_string()
                } else if i > 0 && labels[i - 1] == y {
                    format!("I-{}", self.names[y])
                } else {
                    format!("B-{}", self.names[y])
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    sentences: Vec<Sentence>,
    label_set: LabelSet,
}

impl Corpus {
    pub fn new(sentences: Vec<Sentence>) -> Self {
        let label_set = LabelSet::from_types(
            sentences
                .iter()
                .flat_map(|s| s.tokens.iter().filter_map(|t| t.entity_type())),
        );
        Corpus {
            sentences,
            label_set,
        }
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn label_set(&self) -> &LabelSet {
        &self.label_set
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    /// Sub-corpus with the given sentence indices, in the order given.
    pub fn subset(&self, indices: &[usize]) -> Result<Corpus> {
        let sentences = indices
            .iter()
            .map(|&i| {
                self.sentences.get(i).cloned().ok_or_else(|| {
                    Error::InvalidArgument(format!("sentence index {i} out of range"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus::new(sentences))
    }

    /// Two-column `surface tag` text with blank lines between sentences.
    pub fn to_conll(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            for t in &s.tokens {
                let _ = writeln!(out, "{} {}", t.surface, t.gold_tag);
            }
            out.push('\n');
        }
        out
    }
}

pub fn parse_conll<R: BufRead>(reader: R, token_column: usize, tag_column: usize) -> Result<Corpus> {
    let needed = token_column.max(tag_column) + 1;
    let mut sentences = Vec::new();
    let mut current: Vec<Token> = Vec::new();

    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::io(format!("reading line {line_no}"), e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            if !current.is_empty() {
                sentences.push(Sentence::new(std::mem::take(&mut current))?);
            }
            continue;
        }
        if trimmed.starts_with("-DOCSTART-") {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() < needed {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected at least {needed} fields, found {}", fields.len()),
            });
        }
        let tag = fields[tag_column];
        validate_tag(tag).map_err(|message| Error::Parse {
            line: line_no,
            message,
        })?;
        current.push(Token::new(fields[token_column], tag));
    }
    if !current.is_empty() {
        sentences.push(Sentence::new(current)?);
    }
    if sentences.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(Corpus::new(sentences))
}

pub fn parse_conll_str(text: &str, token_column: usize, tag_column: usize) -> Result<Corpus> {
    parse_conll(text.as_bytes(), token_column, tag_column)
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Seeded sentence-level dev holdout. The dev side always receives at least one sentence.
pub fn holdout_dev(corpus: &Corpus, fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "dev fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = corpus.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "dev holdout needs at least 2 sentences".into(),
        ));
    }
    let dev_size = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let order = shuffled_indices(n, seed);
    let mut dev_idx = order[..dev_size].to_vec();
    let mut train_idx = order[dev_size..].to_vec();
    dev_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((corpus.subset(&train_idx)?, corpus.subset(&dev_idx)?))
}

/// Disjoint partitions whose successive unions form nested training sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    partitions: Vec<Vec<usize>>,
    cumulative_sizes: Vec<usize>,
}

impl SplitPlan {
    pub fn from_partitions(partitions: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for p in &partitions {
            for &i in p {
                if !seen.insert(i) {
                    return Err(Error::InvalidArgument(format!(
                        "sentence {i} appears in more than one partition"
                    )));
                }
            }
        }
        let cumulative_sizes = partitions
            .iter()
            .scan(0, |acc, p| {
                *acc += p.len();
                Some(*acc)
            })
            .collect();
        Ok(SplitPlan {
            partitions,
            cumulative_sizes,
        })
    }

    pub fn partitions(&self) -> &[Vec<usize>] {
        &self.partitions
    }

    pub fn cumulative_sizes(&self) -> &[usize] {
        &self.cumulative_sizes
    }

    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }

    /// Sorted sentence indices of cumulative set `k` (partitions `0..=k`).
    pub fn cumulative_indices(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = self.partitions[..=k].iter().flatten().copied().collect();
        idx.sort_unstable();
        idx
    }

    /// One partition per line, space-separated sentence indices.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.partitions {
            let line: Vec<String> = p.iter().map(usize::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let partitions = text
            .lines()
            .enumerate()
            .map(|(n, line)| {
                line.split_whitespace()
                    .map(|f| {
                        f.parse::<usize>().map_err(|e| Error::Parse {
                            line: n + 1,
                            message: format!("bad sentence index {f:?}: {e}"),
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        SplitPlan::from_partitions(partitions)
    }
}

fn plan_from_sizes(n: usize, mut sizes: Vec<usize>, seed: u64) -> Result<SplitPlan> {
    let k = sizes.len();
    // Force strictly increasing sizes ending at n so no partition is empty.
    for i in 0..k {
        let floor = if i == 0 { 1 } else { sizes[i - 1] + 1 };
        let ceiling = n - (k - 1 - i);
        sizes[i] = sizes[i].clamp(floor, ceiling);
    }
    let order = shuffled_indices(n, seed);
    let mut start = 0;
    let partitions = sizes
        .iter()
        .map(|&end| {
            let p = order[start..end].to_vec();
            start = end;
            p
        })
        .collect();
    SplitPlan::from_partitions(partitions)
}

fn check_plan_args(n: usize, n_partitions: usize) -> Result<()> {
    if n_partitions < 2 {
        return Err(Error::InvalidArgument("need at least 2 partitions".into()));
    }
    if n < n_partitions {
        return Err(Error::InvalidArgument(format!(
            "corpus of {n} sentences is too small for {n_partitions} partitions"
        )));
    }
    Ok(())
}

/// Log-scale grid: cumulative set `k` holds `round(N^(k/n))` sentences.
pub fn split_log_partitions(corpus: &Corpus, n_partitions: usize, seed: u64) -> Result<SplitPlan> {
    let n = corpus.len();
    check_plan_args(n, n_partitions)?;
    let sizes = (1..=n_partitions)
        .map(|k| (n as f64).powf(k as f64 / n_partitions as f64).round() as usize)
        .collect();
    plan_from_sizes(n, sizes, seed)
}

/// Geometric grid from `min_size` up to the full corpus.
pub fn split_geometric_partitions(
    corpus: &Corpus,
    n_partitions: usize,
    min_size: usize,
    seed: u64,
) -> Result<SplitPlan> {
    let n = corpus.len();
    check_plan_args(n, n_partitions)?;
    if min_size == 0 || min_size >= n {
        return Err(Error::InvalidArgument(format!(
            "min_size must lie in 1..{n}, got {min_size}"
        )));
    }
    let ratio = n as f64 / min_size as f64;
    let sizes = (0..n_partitions)
        .map(|k| {
            let e = k as f64 / (n_partitions - 1) as f64;
            (min_size as f64 * ratio.powf(e)).round() as usize
        })
        .collect();
    plan_from_sizes(n, sizes, seed)
}

/// Target entity types whose names do not occur among the source types.
pub fn novel_types(source: &LabelSet, target: &LabelSet) -> BTreeSet<String> {
    let known: BTreeSet<&str> = source.entity_types().collect();
    target
        .entity_types()
        .filter(|t| !known.contains(t))
        .map(str::to_string)
        .collect()
}

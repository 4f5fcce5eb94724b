//! Exact-match span scoring and the learning-curve table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::baselines::{cold_start, label_embed_transfer, train_deep_crf, Activation, DeepCrfModel, EmbeddingTable};
use crate::corpus::{
    novel_types, split_geometric_partitions, split_log_partitions, tag_type, Corpus, LabelSet, SplitPlan,
};
use crate::crf::CrfModel;
use crate::error::{Error, Result};
use crate::features::FeatureIndexer;
use crate::transfer::{train_source, transfer_from_source, TransferArtifacts, TransferConfig};

/// A labelled span `[start, end)` within one sentence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub kind: String,
}

/// Spans encoded by a BIO tag sequence. An `I-X` that does not continue an
/// `X` span opens a new one.
pub fn extract_spans<S: AsRef<str>>(tags: &[S]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, String)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        let kind = tag_type(tag);
        let continues = tag.starts_with("I-")
            && matches!((&open, kind), (Some((_, k)), Some(t)) if k == t);
        if continues {
            continue;
        }
        if let Some((start, k)) = open.take() {
            spans.push(Span {
                start,
                end: i,
                kind: k,
            });
        }
        if let Some(t) = kind {
            open = Some((i, t.to_string()));
        }
    }
    if let Some((start, k)) = open {
        spans.push(Span {
            start,
            end: tags.len(),
            kind: k,
        });
    }
    spans
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold_count: usize,
    pub pred_count: usize,
    pub correct_count: usize,
}

impl ClassScore {
    fn from_counts(gold: usize, pred: usize, correct: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(correct, pred);
        let recall = ratio(correct, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassScore {
            precision,
            recall,
            f1,
            gold_count: gold,
            pred_count: pred,
            correct_count: correct,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_class: BTreeMap<String, ClassScore>,
    pub macro_f1_novel: f64,
    pub novel_classes: BTreeSet<String>,
}

impl EvalReport {
    pub fn class(&self, name: &str) -> ClassScore {
        self.per_class.get(name).copied().unwrap_or_default()
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let width = self
            .per_class
            .keys()
            .map(String::len)
            .max()
            .unwrap_or(5)
            .max(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}   {:>9}  {:>9}  {:>9}  {:>6}  {:>6}  {:>7}",
            "class", "precision", "recall", "f1", "gold", "pred", "correct"
        );
        for (name, s) in &self.per_class {
            let star = if self.novel_classes.contains(name) { "*" } else { " " };
            let _ = writeln!(
                out,
                "{name:<width$} {star} {:>9.4}  {:>9.4}  {:>9.4}  {:>6}  {:>6}  {:>7}",
                s.precision, s.recall, s.f1, s.gold_count, s.pred_count, s.correct_count
            );
        }
        let _ = writeln!(out, "macro-F1 over novel classes (*): {:.4}", self.macro_f1_novel);
        out
    }

    /// `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let novel: Vec<&str> = self.novel_classes.iter().map(String::as_str).collect();
        let _ = writeln!(out, "novel_classes={}", novel.join(","));
        let _ = writeln!(out, "macro_f1_novel={}", self.macro_f1_novel);
        for (name, s) in &self.per_class {
            let _ = writeln!(out, "{name}.precision={}", s.precision);
            let _ = writeln!(out, "{name}.recall={}", s.recall);
            let _ = writeln!(out, "{name}.f1={}", s.f1);
            let _ = writeln!(out, "{name}.gold={}", s.gold_count);
            let _ = writeln!(out, "{name}.pred={}", s.pred_count);
            let _ = writeln!(out, "{name}.correct={}", s.correct_count);
        }
        out
    }
}

/// Per-class span precision/recall/F1, plus the unweighted mean F1 over `novel`.
/// Novel classes with no gold and no predicted spans score 0 and still count.
pub fn span_f1<S: AsRef<str>>(
    gold: &Corpus,
    predicted: &[Vec<S>],
    novel: &BTreeSet<String>,
) -> Result<EvalReport> {
    if gold.len() != predicted.len() {
        return Err(Error::LengthMismatch(format!(
            "{} gold sentences, {} predicted",
            gold.len(),
            predicted.len()
        )));
    }
    let mut counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for class in novel {
        counts.entry(class.clone()).or_default();
    }
    for (i, (sentence, pred)) in gold.sentences().iter().zip(predicted).enumerate() {
        if sentence.len() != pred.len() {
            return Err(Error::LengthMismatch(format!(
                "sentence {i}: {} gold tokens, {} predicted",
                sentence.len(),
                pred.len()
            )));
        }
        let gold_spans: BTreeSet<Span> = extract_spans(&sentence.tags()).into_iter().collect();
        let pred_spans: BTreeSet<Span> = extract_spans(pred).into_iter().collect();
        for s in &gold_spans {
            counts.entry(s.kind.clone()).or_default().0 += 1;
        }
        for s in &pred_spans {
            let c = counts.entry(s.kind.clone()).or_default();
            c.1 += 1;
            if gold_spans.contains(s) {
                c.2 += 1;
            }
        }
    }
    let per_class: BTreeMap<String, ClassScore> = counts
        .into_iter()
        .map(|(k, (g, p, c))| (k, ClassScore::from_counts(g, p, c)))
        .collect();
    let macro_f1_novel = if novel.is_empty() {
        0.0
    } else {
        novel.iter().map(|c| per_class[c].f1).sum::<f64>() / novel.len() as f64
    };
    Ok(EvalReport {
        per_class,
        macro_f1_novel,
        novel_classes: novel.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub train_size: usize,
    pub method: String,
    pub seed: u64,
    pub macro_f1_novel: f64,
}

/// Learning-curve results, kept sorted by (method, train_size, seed).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurveTable {
    rows: Vec<CurveRow>,
}

pub const CURVE_HEADER: &str = "train_size,method,seed,macro_f1_novel";

impl CurveTable {
    pub fn new(mut rows: Vec<CurveRow>) -> Self {
        rows.sort_by(|a, b| {
            (a.method.as_str(), a.train_size, a.seed).cmp(&(b.method.as_str(), b.train_size, b.seed))
        });
        CurveTable { rows }
    }

    pub fn rows(&self) -> &[CurveRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Scores for one (method, size) cell, in seed order.
    pub fn scores(&self, method: &str, train_size: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.train_size == train_size)
            .map(|r| r.macro_f1_novel)
            .collect()
    }

    pub fn median(&self, method: &str, train_size: usize) -> Option<f64> {
        median(&self.scores(method, train_size))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CURVE_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.6}",
                r.train_size, r.method, r.seed, r.macro_f1_novel
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CURVE_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header {CURVE_HEADER:?}"),
                })
            }
        }
        let mut rows = Vec::new();
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse {
                line: n + 1,
                message,
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(format!("expected 4 fields, found {}", f.len())));
            }
            rows.push(CurveRow {
                train_size: f[0].parse().map_err(|e| bad(format!("{e}")))?,
                method: f[1].to_string(),
                seed: f[2].parse().map_err(|e| bad(format!("{e}")))?,
                macro_f1_novel: f[3].parse().map_err(|e| bad(format!("{e}")))?,
            });
        }
        Ok(CurveTable::new(rows))
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Training methods compared on a learning curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Cold,
    LabelEmbed,
    TwoLayer,
    DeepCrf,
    TransInit,
    TransInitFrozen,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Cold,
        Method::LabelEmbed,
        Method::TwoLayer,
        Method::DeepCrf,
        Method::TransInit,
        Method::TransInitFrozen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cold => "cold",
            Method::LabelEmbed => "labelembed",
            Method::TwoLayer => "twolayer",
            Method::DeepCrf => "deepcrf",
            Method::TransInit => "transinit",
            Method::TransInitFrozen => "transinit-frozen",
        }
    }

    pub fn uses_source(self) -> bool {
        self != Method::Cold
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::InvalidArgument(format!("unknown method {s:?}; expected one of {}", names.join("|")))
            })
    }
}

/// Corpora for a learning curve. The plan indexes `target_train`.
#[derive(Debug, Clone, Copy)]
pub struct CurveInputs<'a> {
    pub source_train: &'a Corpus,
    pub source_dev: &'a Corpus,
    pub target_train: &'a Corpus,
    pub target_dev: &'a Corpus,
    pub target_test: &'a Corpus,
    pub embeddings: Option<&'a EmbeddingTable>,
}

/// A trained source model and its feature space.
#[derive(Debug, Clone)]
pub struct SourceModel {
    pub model: CrfModel,
    pub indexer: FeatureIndexer,
}

/// A model fitted by one of the curve methods, with the feature space it reads.
#[derive(Debug, Clone)]
pub enum FittedModel {
    Crf {
        model: CrfModel,
        indexer: FeatureIndexer,
        /// Present for the TransInit variants.
        transfer: Option<Box<TransferArtifacts>>,
        /// Present for LabelEmbed: target type -> aligned source type.
        alignment: Option<BTreeMap<String, Option<String>>>,
    },
    Deep {
        model: DeepCrfModel,
        indexer: FeatureIndexer,
    },
}

impl FittedModel {
    pub fn indexer(&self) -> &FeatureIndexer {
        match self {
            FittedModel::Crf { indexer, .. } | FittedModel::Deep { indexer, .. } => indexer,
        }
    }

    pub fn predict_tags(&self, corpus: &Corpus) -> Vec<Vec<String>> {
        match self {
            FittedModel::Crf { model, indexer, .. } => model.predict_tags(indexer, corpus),
            FittedModel::Deep { model, indexer } => model.predict_tags(indexer, corpus),
        }
    }
}

/// Trains `method` on the target data. Every method except cold start needs
/// `source`; `activation` only applies to [`Method::DeepCrf`].
pub fn fit_method(
    method: Method,
    source: Option<&SourceModel>,
    train: &Corpus,
    dev: &Corpus,
    embeddings: Option<&EmbeddingTable>,
    activation: Activation,
    config: &TransferConfig,
) -> Result<FittedModel> {
    if method == Method::Cold {
        let (model, indexer, _) = cold_start(train, dev, &config.finetune)?;
        return Ok(FittedModel::Crf {
            model,
            indexer,
            transfer: None,
            alignment: None,
        });
    }
    let source = source.ok_or_else(|| Error::InvalidArgument(format!("method {method} needs a source model")))?;
    let mut indexer = source.indexer.clone();
    indexer.unfreeze();
    indexer.grow(train)?;
    Ok(match method {
        Method::Cold => unreachable!(),
        Method::TransInit | Method::TransInitFrozen => {
            let cfg = TransferConfig {
                update_bottom: method == Method::TransInit,
                ..*config
            };
            let (model, artifacts) = transfer_from_source(&source.model, &source.indexer, train, dev, &cfg)?;
            FittedModel::Crf {
                model,
                indexer: artifacts.indexer.clone(),
                transfer: Some(Box::new(artifacts)),
                alignment: None,
            }
        }
        Method::LabelEmbed => {
            let table =
                embeddings.ok_or_else(|| Error::InvalidArgument("labelembed needs an embedding table".into()))?;
            let (model, alignment, _) =
                label_embed_transfer(&source.model, table, train, dev, &indexer, &config.finetune)?;
            FittedModel::Crf {
                model,
                indexer,
                transfer: None,
                alignment: Some(alignment),
            }
        }
        Method::TwoLayer | Method::DeepCrf => {
            let activation = if method == Method::DeepCrf {
                activation
            } else {
                Activation::None
            };
            let (model, _) = train_deep_crf(&source.model, train, dev, &indexer, activation, &config.finetune)?;
            FittedModel::Deep { model, indexer }
        }
    })
}

/// Target types that count as novel: those absent from the source label
/// set, or every target type when there is no source.
pub fn novel_classes(source: Option<&LabelSet>, target: &LabelSet) -> BTreeSet<String> {
    match source {
        Some(s) => novel_types(s, target),
        None => target.entity_types().map(str::to_string).collect(),
    }
}

/// Trains `method` on `train` and scores it on `test`.
pub fn train_and_evaluate(
    method: Method,
    source: Option<&SourceModel>,
    train: &Corpus,
    dev: &Corpus,
    test: &Corpus,
    embeddings: Option<&EmbeddingTable>,
    config: &TransferConfig,
) -> Result<EvalReport> {
    let target_labels = train.label_set().union(dev.label_set()).union(test.label_set());
    let novel = novel_classes(source.map(|s| s.model.labels()), &target_labels);
    let fitted = fit_method(method, source, train, dev, embeddings, Activation::HardTanh, config)?;
    span_f1(test, &fitted.predict_tags(test), &novel)
}

/// Runs every (method, cumulative training set, seed) cell and scores it on
/// the fixed test set. The source model is trained once per seed with
/// `config.with_seed(seed).source`.
pub fn run_curve(
    methods: &[Method],
    inputs: CurveInputs<'_>,
    plan: &SplitPlan,
    seeds: &[u64],
    config: &TransferConfig,
) -> Result<CurveTable> {
    let total: usize = plan.partitions().iter().map(Vec::len).sum();
    if total > inputs.target_train.len() {
        return Err(Error::InvalidArgument(format!(
            "plan covers {total} sentences but target train has {}",
            inputs.target_train.len()
        )));
    }
    let needs_source = methods.iter().any(|m| m.uses_source());
    let mut rows = Vec::with_capacity(methods.len() * plan.len() * seeds.len());
    for &seed in seeds {
        let cfg = config.with_seed(seed);
        let source = if needs_source {
            let (model, indexer, _) = train_source(inputs.source_train, inputs.source_dev, &cfg.source)?;
            Some(SourceModel { model, indexer })
        } else {
            None
        };
        for k in 0..plan.len() {
            let train = inputs.target_train.subset(&plan.cumulative_indices(k))?;
            for &method in methods {
                let report = train_and_evaluate(
                    method,
                    source.as_ref(),
                    &train,
                    inputs.target_dev,
                    inputs.target_test,
                    inputs.embeddings,
                    &cfg,
                )?;
                rows.push(CurveRow {
                    train_size: train.len(),
                    method: method.name().to_string(),
                    seed,
                    macro_f1_novel: report.macro_f1_novel,
                });
            }
        }
    }
    Ok(CurveTable::new(rows))
}

/// Builds the nested split named by `grid` ("log" or "geometric").
pub fn build_plan(
    corpus: &Corpus,
    grid: &str,
    partitions: usize,
    min_size: usize,
    seed: u64,
) -> Result<SplitPlan> {
    match grid {
        "log" => split_log_partitions(corpus, partitions, seed),
        "geometric" => split_geometric_partitions(corpus, partitions, min_size, seed),
        other => Err(Error::InvalidArgument(format!("unknown grid {other:?}"))),
    }
}

/// One [`run_curve`] call per (seed, plan) pair, merged into one table.
pub fn run_curve_per_seed(
    methods: &[Method],
    inputs: CurveInputs<'_>,
    plans: &[(u64, SplitPlan)],
    config: &TransferConfig,
) -> Result<CurveTable> {
    let mut rows = Vec::new();
    for (seed, plan) in plans {
        rows.extend_from_slice(run_curve(methods, inputs, plan, &[*seed], config)?.rows());
    }
    Ok(CurveTable::new(rows))
}

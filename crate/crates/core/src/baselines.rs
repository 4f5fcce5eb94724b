//! Comparison systems: in-domain cold start, label-name embedding alignment,
//! and two/three-layer CRFs stacked on the source emission layer.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adagrad::AdaGrad;
use crate::chain;
use crate::corpus::{Corpus, LabelSet};
use crate::crf::{
    encode_corpus, train_crf, CrfModel, DevScorer, EarlyStopping, EpochRecord, TrainConfig,
    TrainLog,
};
use crate::error::{Error, Result};
use crate::features::{FeatureIndexer, SparseVector};
use crate::matrix::{softmax, Matrix};

/// In-domain CRF trained from scratch on the target data alone.
pub fn cold_start(
    target_train: &Corpus,
    target_dev: &Corpus,
    config: &TrainConfig,
) -> Result<(CrfModel, FeatureIndexer, TrainLog)> {
    let mut indexer = FeatureIndexer::new();
    indexer.grow(target_train)?;
    let (model, log) = train_crf(target_train, target_dev, &indexer, config, None)?;
    Ok((model, indexer, log))
}

pub fn hard_tanh(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.clamp(-1.0, 1.0)).collect()
}

/// Fraction of hidden pre-activations `bottom x` with magnitude above
/// `threshold`, over a seeded sample of at most `sample_size` tokens.
pub fn saturation_probe(
    bottom: &Matrix,
    corpus: &Corpus,
    indexer: &FeatureIndexer,
    threshold: f64,
    sample_size: usize,
    seed: u64,
) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument("threshold must be positive".into()));
    }
    let mut positions: Vec<(usize, usize)> = corpus
        .sentences()
        .iter()
        .enumerate()
        .flat_map(|(s, sent)| (0..sent.len()).map(move |p| (s, p)))
        .collect();
    positions.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    positions.truncate(sample_size);
    let mut total = 0usize;
    let mut saturated = 0usize;
    for (s, p) in positions {
        let x = indexer.lookup(&corpus.sentences()[s], p)?;
        for z in bottom.mul_sparse(&x) {
            total += 1;
            if z.abs() > threshold {
                saturated += 1;
            }
        }
    }
    Ok(if total == 0 {
        0.0
    } else {
        saturated as f64 / total as f64
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    HardTanh,
    None,
}

impl Activation {
    fn apply(self, z: &[f64]) -> Vec<f64> {
        match self {
            Activation::HardTanh => hard_tanh(z),
            Activation::None => z.to_vec(),
        }
    }

    /// Derivative; zero at and beyond the clamp kinks.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::HardTanh => {
                if z > -1.0 && z < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::None => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard_tanh" | "hardtanh" | "hard-tanh" => Ok(Activation::HardTanh),
            "none" | "linear" => Ok(Activation::None),
            other => Err(Error::InvalidArgument(format!("unknown activation {other:?}"))),
        }
    }
}

/// Bottom linear layer (source labels x features), optional hard tanh, and a
/// CRF over target labels whose per-token features are the hidden units.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepCrfModel {
    pub bottom: Matrix,
    pub top: CrfModel,
    pub activation: Activation,
}

pub struct DeepGradient {
    pub loss: f64,
    pub bottom: Matrix,
    pub top_emission: Matrix,
    pub top_transition: Matrix,
}

impl DeepCrfModel {
    pub fn new(bottom: Matrix, top: CrfModel, activation: Activation) -> Result<Self> {
        if top.feature_dimension() != bottom.rows() {
            return Err(Error::DimensionMismatch(format!(
                "top layer reads {} inputs, bottom produces {}",
                top.feature_dimension(),
                bottom.rows()
            )));
        }
        Ok(DeepCrfModel {
            bottom,
            top,
            activation,
        })
    }

    /// Bottom initialised from the source emissions, top CRF all zeros.
    pub fn from_source(
        source: &CrfModel,
        target_labels: LabelSet,
        feature_dimension: usize,
        activation: Activation,
    ) -> Result<Self> {
        if source.feature_dimension() > feature_dimension {
            return Err(Error::DimensionMismatch(format!(
                "source model has {} features, indexer only {feature_dimension}",
                source.feature_dimension()
            )));
        }
        let bottom = source.emission().widen(feature_dimension)?;
        let top = CrfModel::zeros(target_labels, bottom.rows())?;
        DeepCrfModel::new(bottom, top, activation)
    }

    pub fn labels(&self) -> &LabelSet {
        self.top.labels()
    }

    pub fn hidden(&self, x: &SparseVector) -> Vec<f64> {
        self.activation.apply(&self.bottom.mul_sparse(x))
    }

    pub fn emission_scores(&self, features: &[SparseVector]) -> Vec<Vec<f64>> {
        features
            .iter()
            .map(|x| self.top.emission().mul_dense(&self.hidden(x)))
            .collect()
    }

    pub fn viterbi_decode(&self, features: &[SparseVector]) -> Vec<usize> {
        chain::viterbi(&self.emission_scores(features), self.top.transition())
    }

    pub fn token_posterior(&self, x: &SparseVector) -> Vec<f64> {
        softmax(&self.top.emission().mul_dense(&self.hidden(x)))
    }

    pub fn predict_tags(&self, indexer: &FeatureIndexer, corpus: &Corpus) -> Vec<Vec<String>> {
        corpus
            .sentences()
            .iter()
            .map(|s| self.labels().to_tags(&self.viterbi_decode(&indexer.lookup_sentence(s))))
            .collect()
    }

    /// Summed sequence NLL over `batch` and its dense gradient (no L2).
    pub fn nll_gradient(&self, batch: &[(Vec<SparseVector>, Vec<usize>)]) -> Result<DeepGradient> {
        let nt = self.top.num_labels();
        let mut out = DeepGradient {
            loss: 0.0,
            bottom: Matrix::zeros(self.bottom.rows(), self.bottom.cols()),
            top_emission: Matrix::zeros(nt, self.bottom.rows()),
            top_transition: Matrix::zeros(nt, nt),
        };
        for (features, labels) in batch {
            let step = self.sentence_gradient(features, labels)?;
            out.loss += step.loss;
            for (g, v) in out.top_emission.as_mut_slice().iter_mut().zip(step.top_emission.as_slice()) {
                *g += v;
            }
            for (g, v) in out.top_transition.as_mut_slice().iter_mut().zip(&step.top_transition) {
                *g += v;
            }
            for (f, col) in step.bottom {
                for (j, v) in col.iter().enumerate() {
                    out.bottom[(j, f)] += v;
                }
            }
        }
        Ok(out)
    }

    fn sentence_gradient(&self, features: &[SparseVector], labels: &[usize]) -> Result<SentenceGradient> {
        if features.len() != labels.len() {
            return Err(Error::LengthMismatch(format!(
                "{} feature vectors, {} labels",
                features.len(),
                labels.len()
            )));
        }
        let nt = self.top.num_labels();
        let nh = self.bottom.rows();
        let dim = self.bottom.cols();
        let pre: Vec<Vec<f64>> = features.iter().map(|x| self.bottom.mul_sparse(x)).collect();
        let hidden: Vec<Vec<f64>> = pre.iter().map(|z| self.activation.apply(z)).collect();
        let scores: Vec<Vec<f64>> = hidden
            .iter()
            .map(|h| self.top.emission().mul_dense(h))
            .collect();
        let m = chain::marginals(&scores, self.top.transition());
        let loss = m.log_partition - chain::path_score(&scores, self.top.transition(), labels);

        let mut top_emission = Matrix::zeros(nt, nh);
        let mut bottom: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for l in 0..features.len() {
            let mut g = m.node[l].clone();
            g[labels[l]] -= 1.0;
            for y in 0..nt {
                for (t, h) in top_emission.row_mut(y).iter_mut().zip(&hidden[l]) {
                    *t += g[y] * h;
                }
            }
            let grad_h = self.top.emission().transpose_mul_dense(&g);
            let grad_z: Vec<f64> = grad_h
                .iter()
                .zip(&pre[l])
                .map(|(gh, z)| gh * self.activation.derivative(*z))
                .collect();
            if grad_z.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (f, v) in features[l].iter() {
                if f >= dim {
                    continue;
                }
                let col = bottom.entry(f).or_insert_with(|| vec![0.0; nh]);
                for (c, gz) in col.iter_mut().zip(&grad_z) {
                    *c += gz * v;
                }
            }
        }
        let mut top_transition = vec![0.0; nt * nt];
        for (l, e) in m.edge.iter().enumerate() {
            for (g, p) in top_transition.iter_mut().zip(e.as_slice()) {
                *g += p;
            }
            top_transition[labels[l] * nt + labels[l + 1]] -= 1.0;
        }
        Ok(SentenceGradient {
            loss,
            top_emission,
            top_transition,
            bottom,
        })
    }
}

struct SentenceGradient {
    loss: f64,
    top_emission: Matrix,
    top_transition: Vec<f64>,
    /// feature index -> gradient column over hidden units
    bottom: BTreeMap<usize, Vec<f64>>,
}

/// Joint per-sentence AdaGrad training of the stacked model, early-stopped on
/// dev macro span-F1. `indexer` must already cover the target training data.
pub fn train_deep_crf(
    source_model: &CrfModel,
    target_train: &Corpus,
    target_dev: &Corpus,
    indexer: &FeatureIndexer,
    activation: Activation,
    config: &TrainConfig,
) -> Result<(DeepCrfModel, TrainLog)> {
    config.validate()?;
    if target_train.is_empty() {
        return Err(Error::InvalidArgument("target training corpus is empty".into()));
    }
    let labels = target_train.label_set().union(target_dev.label_set());
    let mut model = DeepCrfModel::from_source(source_model, labels.clone(), indexer.len(), activation)?;
    let data = encode_corpus(target_train, indexer, &labels)?;
    let scorer = DevScorer::new(target_dev, indexer, &labels);
    let dev_score = |m: &DeepCrfModel| scorer.score(&labels, |f| m.viterbi_decode(f));
    let l2 = config.l2_strength;
    let objective = |m: &DeepCrfModel| -> Result<f64> {
        Ok(m.nll_gradient_loss(&data)?
            + 0.5 * l2 * (m.bottom.squared_norm() + m.top.emission().squared_norm() + m.top.transition().squared_norm()))
    };

    let initial = dev_score(&model)?;
    let mut log = TrainLog {
        epochs: vec![EpochRecord {
            epoch: 0,
            objective: objective(&model)?,
            dev_score: initial,
        }],
        best_epoch: 0,
        best_dev_score: initial,
    };
    let mut stopper = EarlyStopping::new(config.patience, initial);
    let mut best = model.clone();

    let nt = labels.len();
    let nh = model.bottom.rows();
    let dim = model.bottom.cols();
    let mut opt_b = AdaGrad::new(nh * dim, config.learning_rate, config.adagrad_epsilon);
    let mut opt_e = AdaGrad::new(nt * nh, config.learning_rate, config.adagrad_epsilon);
    let mut opt_t = AdaGrad::new(nt * nt, config.learning_rate, config.adagrad_epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (f, y) = &data[i];
            let g = model.sentence_gradient(f, y)?;
            for (f, col) in &g.bottom {
                for (j, gv) in col.iter().enumerate() {
                    let w = &mut model.bottom[(j, *f)];
                    let gw = gv + l2 * *w;
                    opt_b.update(j * dim + f, w, gw);
                }
            }
            let mut ge = g.top_emission;
            for (gv, w) in ge.as_mut_slice().iter_mut().zip(model.top.emission().as_slice()) {
                *gv += l2 * w;
            }
            opt_e.update_dense(model.top.emission_mut().as_mut_slice(), ge.as_slice());
            let mut gt = g.top_transition;
            for (gv, w) in gt.iter_mut().zip(model.top.transition().as_slice()) {
                *gv += l2 * w;
            }
            opt_t.update_dense(model.top.transition_mut().as_mut_slice(), &gt);
        }
        let score = dev_score(&model)?;
        log.epochs.push(EpochRecord {
            epoch,
            objective: objective(&model)?,
            dev_score: score,
        });
        if stopper.observe(epoch, score) {
            best = model.clone();
        }
        if stopper.should_stop() {
            break;
        }
    }
    let (best_epoch, best_dev_score) = stopper.best();
    log.best_epoch = best_epoch;
    log.best_dev_score = best_dev_score;
    Ok((best, log))
}

impl DeepCrfModel {
    fn nll_gradient_loss(&self, batch: &[(Vec<SparseVector>, Vec<usize>)]) -> Result<f64> {
        batch
            .iter()
            .map(|(f, y)| {
                let scores = self.emission_scores(f);
                Ok(chain::log_partition(&scores, self.top.transition())
                    - chain::path_score(&scores, self.top.transition(), y))
            })
            .sum()
    }
}

/// Word vectors of a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Self {
        EmbeddingTable {
            dimension,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} in a table of dimension {}",
                vector.len(),
                self.dimension
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite embedding value".into()));
        }
        self.vectors.insert(word.into(), vector);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
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

    /// One entry per line: the word followed by its values.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut table: Option<EmbeddingTable> = None;
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(format!("reading embeddings line {}", n + 1), e))?;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let values = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    line: n + 1,
                    message: format!("bad embedding value: {e}"),
                })?;
            if values.is_empty() {
                return Err(Error::Parse {
                    line: n + 1,
                    message: "embedding line has no values".into(),
                });
            }
            let t = table.get_or_insert_with(|| EmbeddingTable::new(values.len()));
            t.insert(word, values).map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
        }
        table.ok_or(Error::EmptyInput)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        EmbeddingTable::from_reader(text.as_bytes())
    }

    /// Mean vector of the in-vocabulary words of a label name (lowercased,
    /// split on non-alphanumerics). `None` when every word is out of vocabulary.
    pub fn label_vector(&self, label: &str) -> Option<Vec<f64>> {
        let lower = label.to_lowercase();
        let found: Vec<&[f64]> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .filter_map(|w| self.get(w))
            .collect();
        if found.is_empty() {
            return None;
        }
        let mut mean = vec![0.0; self.dimension];
        for v in &found {
            for (m, x) in mean.iter_mut().zip(v.iter()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= found.len() as f64);
        Some(mean)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some(dot / (na * nb))
    }
}

/// Target entity type -> most similar source entity type by label-name
/// cosine similarity. Unalignable types map to `None`.
pub fn align_labels(
    source: &LabelSet,
    target: &LabelSet,
    embeddings: &EmbeddingTable,
) -> BTreeMap<String, Option<String>> {
    let sources: Vec<(&str, Vec<f64>)> = source
        .entity_types()
        .filter_map(|s| embeddings.label_vector(s).map(|v| (s, v)))
        .collect();
    target
        .entity_types()
        .map(|t| {
            let best = embeddings.label_vector(t).and_then(|tv| {
                let mut best: Option<(&str, f64)> = None;
                for (s, sv) in &sources {
                    if let Some(c) = cosine(&tv, sv) {
                        if best.is_none_or(|(_, b)| c > b) {
                            best = Some((s, c));
                        }
                    }
                }
                best.map(|(s, _)| s.to_string())
            });
            (t.to_string(), best)
        })
        .collect()
}

/// Initialises target emission rows by copying the source rows that the
/// label-name embeddings align them to (O copies O; unaligned rows stay
/// zero), then fine-tunes.
pub fn label_embed_transfer(
    source_model: &CrfModel,
    embeddings: &EmbeddingTable,
    target_train: &Corpus,
    target_dev: &Corpus,
    indexer: &FeatureIndexer,
    config: &TrainConfig,
) -> Result<(CrfModel, BTreeMap<String, Option<String>>, TrainLog)> {
    if embeddings.is_empty() {
        return Err(Error::InvalidArgument("embedding table is empty".into()));
    }
    let init = label_embed_init(source_model, embeddings, target_train, target_dev, indexer.len())?;
    let (model, log) = train_crf(target_train, target_dev, indexer, config, Some(&init.0))?;
    Ok((model, init.1, log))
}

pub fn label_embed_init(
    source_model: &CrfModel,
    embeddings: &EmbeddingTable,
    target_train: &Corpus,
    target_dev: &Corpus,
    feature_dimension: usize,
) -> Result<(CrfModel, BTreeMap<String, Option<String>>)> {
    let source = source_model.widen(feature_dimension)?;
    let target_labels = target_train.label_set().union(target_dev.label_set());
    let alignment = align_labels(source.labels(), &target_labels, embeddings);
    let n = target_labels.len();
    let mut emission = Matrix::zeros(n, feature_dimension);
    let so = source.labels().o_index();
    emission
        .row_mut(target_labels.o_index())
        .copy_from_slice(source.emission().row(so));
    for (t, s) in &alignment {
        if let Some(s) = s {
            let ti = target_labels.index_of(t).unwrap();
            let si = source.labels().index_of(s).unwrap();
            emission.row_mut(ti).copy_from_slice(source.emission().row(si));
        }
    }
    let model = CrfModel::new(target_labels, emission, Matrix::zeros(n, n))?;
    Ok((model, alignment))
}

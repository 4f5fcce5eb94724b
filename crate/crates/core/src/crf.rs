//! Linear-chain CRF: scoring, exact inference, NLL gradients, and AdaGrad
//! training with dev-set early stopping.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adagrad::AdaGrad;
use crate::chain::{self, Marginals};
use crate::corpus::{Corpus, LabelSet};
use crate::error::{Error, Result};
use crate::eval::span_f1;
use crate::features::{FeatureIndexer, SparseVector};
use crate::matrix::{softmax, Matrix};

/// Emission weights (labels x features) plus label-pair transition weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    emission: Matrix,
    transition: Matrix,
    labels: LabelSet,
}

impl CrfModel {
    pub fn zeros(labels: LabelSet, feature_dimension: usize) -> Result<Self> {
        let n = labels.len();
        CrfModel::new(
            labels,
            Matrix::zeros(n, feature_dimension),
            Matrix::zeros(n, n),
        )
    }

    pub fn new(labels: LabelSet, emission: Matrix, transition: Matrix) -> Result<Self> {
        let n = labels.len();
        if n < 2 {
            return Err(Error::InvalidArgument("a CRF needs at least 2 labels".into()));
        }
        if emission.rows() != n || transition.rows() != n || transition.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} labels but emission is {}x{} and transition {}x{}",
                emission.rows(),
                emission.cols(),
                transition.rows(),
                transition.cols()
            )));
        }
        if !emission.is_finite() || !transition.is_finite() {
            return Err(Error::InvalidArgument("non-finite CRF weight".into()));
        }
        Ok(CrfModel {
            emission,
            transition,
            labels,
        })
    }

    pub fn emission(&self) -> &Matrix {
        &self.emission
    }

    pub fn transition(&self) -> &Matrix {
        &self.transition
    }

    pub fn emission_mut(&mut self) -> &mut Matrix {
        &mut self.emission
    }

    pub fn transition_mut(&mut self) -> &mut Matrix {
        &mut self.transition
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_dimension(&self) -> usize {
        self.emission.cols()
    }

    /// Same weights with zero columns appended for features added since training.
    pub fn widen(&self, feature_dimension: usize) -> Result<CrfModel> {
        Ok(CrfModel {
            emission: self.emission.widen(feature_dimension)?,
            transition: self.transition.clone(),
            labels: self.labels.clone(),
        })
    }

    /// Unnormalised per-label scores `W^f x` of one token.
    pub fn token_emissions(&self, features: &SparseVector) -> Vec<f64> {
        self.emission.mul_sparse(features)
    }

    pub fn emission_scores(&self, features: &[SparseVector]) -> Vec<Vec<f64>> {
        features.iter().map(|x| self.token_emissions(x)).collect()
    }

    pub fn sequence_score(&self, features: &[SparseVector], labels: &[usize]) -> Result<f64> {
        self.check_labels(features, labels)?;
        Ok(chain::path_score(
            &self.emission_scores(features),
            &self.transition,
            labels,
        ))
    }

    fn check_labels(&self, features: &[SparseVector], labels: &[usize]) -> Result<()> {
        if features.len() != labels.len() {
            return Err(Error::LengthMismatch(format!(
                "{} feature vectors, {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= self.num_labels()) {
            return Err(Error::InvalidArgument(format!("label index {y} out of range")));
        }
        Ok(())
    }

    pub fn log_partition(&self, features: &[SparseVector]) -> f64 {
        chain::log_partition(&self.emission_scores(features), &self.transition)
    }

    pub fn posterior_marginals(&self, features: &[SparseVector]) -> Marginals {
        chain::marginals(&self.emission_scores(features), &self.transition)
    }

    pub fn viterbi_decode(&self, features: &[SparseVector]) -> Vec<usize> {
        chain::viterbi(&self.emission_scores(features), &self.transition)
    }

    /// Per-token label distribution ignoring transitions.
    pub fn token_posterior(&self, features: &SparseVector) -> Vec<f64> {
        softmax(&self.token_emissions(features))
    }

    /// BIO tags predicted for every sentence of `corpus`.
    pub fn predict_tags(&self, indexer: &FeatureIndexer, corpus: &Corpus) -> Vec<Vec<String>> {
        corpus
            .sentences()
            .iter()
            .map(|s| {
                self.labels
                    .to_tags(&self.viterbi_decode(&indexer.lookup_sentence(s)))
            })
            .collect()
    }

    /// Summed negative log-likelihood over `batch` plus `(l2/2)|W|^2`, and its gradient.
    pub fn nll_gradient(&self, batch: &[(Vec<SparseVector>, Vec<usize>)], l2: f64) -> Result<Gradient> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let n = self.num_labels();
        let mut grad = Gradient {
            loss: 0.0,
            emission: Matrix::zeros(n, self.feature_dimension()),
            transition: Matrix::zeros(n, n),
        };
        // Each sequence is accumulated separately, then added, so the batch
        // gradient is an exact sum of per-sequence gradients.
        let mut seq_e = Matrix::zeros(n, self.feature_dimension());
        let mut seq_t = Matrix::zeros(n, n);
        for (features, labels) in batch {
            self.check_labels(features, labels)?;
            seq_e.as_mut_slice().fill(0.0);
            seq_t.as_mut_slice().fill(0.0);
            let scores = self.emission_scores(features);
            let m = chain::marginals(&scores, &self.transition);
            grad.loss += m.log_partition - chain::path_score(&scores, &self.transition, labels);
            for (l, x) in features.iter().enumerate() {
                for y in 0..n {
                    let d = m.node[l][y] - if labels[l] == y { 1.0 } else { 0.0 };
                    for (i, v) in x.iter() {
                        if i < self.feature_dimension() {
                            seq_e[(y, i)] += d * v;
                        }
                    }
                }
            }
            for (l, e) in m.edge.iter().enumerate() {
                for (g, p) in seq_t.as_mut_slice().iter_mut().zip(e.as_slice()) {
                    *g += p;
                }
                seq_t[(labels[l], labels[l + 1])] -= 1.0;
            }
            for (g, s) in grad.emission.as_mut_slice().iter_mut().zip(seq_e.as_slice()) {
                *g += s;
            }
            for (g, s) in grad.transition.as_mut_slice().iter_mut().zip(seq_t.as_slice()) {
                *g += s;
            }
        }
        if l2 > 0.0 {
            grad.loss += 0.5 * l2 * (self.emission.squared_norm() + self.transition.squared_norm());
            for (g, w) in grad
                .emission
                .as_mut_slice()
                .iter_mut()
                .zip(self.emission.as_slice())
            {
                *g += l2 * w;
            }
            for (g, w) in grad
                .transition
                .as_mut_slice()
                .iter_mut()
                .zip(self.transition.as_slice())
            {
                *g += l2 * w;
            }
        }
        Ok(grad)
    }

    /// Full training objective (summed NLL plus the L2 term).
    pub fn objective(&self, batch: &[(Vec<SparseVector>, Vec<usize>)], l2: f64) -> f64 {
        let nll: f64 = batch
            .iter()
            .map(|(f, y)| {
                let scores = self.emission_scores(f);
                chain::log_partition(&scores, &self.transition)
                    - chain::path_score(&scores, &self.transition, y)
            })
            .sum();
        nll + 0.5 * l2 * (self.emission.squared_norm() + self.transition.squared_norm())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub loss: f64,
    pub emission: Matrix,
    pub transition: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adagrad_epsilon: f64,
    pub l2_strength: f64,
    /// Zero is allowed and returns the initial model untouched.
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            adagrad_epsilon: 1e-8,
            l2_strength: 1e-6,
            max_epochs: 100,
            patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.adagrad_epsilon > 0.0) {
            return Err(Error::InvalidArgument(
                "learning rate and epsilon must be positive".into(),
            ));
        }
        if !(self.l2_strength >= 0.0) {
            return Err(Error::InvalidArgument("l2 strength must be nonnegative".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidArgument("patience must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Training objective measured after the epoch's updates.
    pub objective: f64,
    pub dev_score: f64,
}

/// Per-epoch history of a training run. Epoch 0 is the starting point.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_score: f64,
}

/// Keeps the best dev score seen and signals when patience runs out.
#[derive(Debug, Clone)]
pub(crate) struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub(crate) fn new(patience: usize, initial: f64) -> Self {
        EarlyStopping {
            patience,
            best: initial,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Returns true when `score` strictly improves on the best so far.
    pub(crate) fn observe(&mut self, epoch: usize, score: f64) -> bool {
        if score > self.best {
            self.best = score;
            self.best_epoch = epoch;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub(crate) fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }

    pub(crate) fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }
}

/// Featurized sentences with gold label indices.
pub type Encoded = Vec<(Vec<SparseVector>, Vec<usize>)>;

pub fn encode_corpus(corpus: &Corpus, indexer: &FeatureIndexer, labels: &LabelSet) -> Result<Encoded> {
    corpus
        .sentences()
        .iter()
        .map(|s| Ok((indexer.lookup_sentence(s), s.label_indices(labels)?)))
        .collect()
}

/// Dev-set scorer: macro span-F1 over every entity type in the model or dev data.
pub(crate) struct DevScorer<'a> {
    corpus: &'a Corpus,
    features: Vec<Vec<SparseVector>>,
    classes: BTreeSet<String>,
}

impl<'a> DevScorer<'a> {
    pub(crate) fn new(corpus: &'a Corpus, indexer: &FeatureIndexer, labels: &LabelSet) -> Self {
        let classes = labels
            .entity_types()
            .chain(corpus.label_set().entity_types())
            .map(str::to_string)
            .collect();
        DevScorer {
            corpus,
            features: indexer.lookup_corpus(corpus),
            classes,
        }
    }

    /// Scores a decoder mapping a sentence's features to label indices.
    pub(crate) fn score<F>(&self, labels: &LabelSet, mut decode: F) -> Result<f64>
    where
        F: FnMut(&[SparseVector]) -> Vec<usize>,
    {
        if self.corpus.is_empty() {
            return Ok(0.0);
        }
        let predicted: Vec<Vec<String>> = self
            .features
            .iter()
            .map(|f| labels.to_tags(&decode(f)))
            .collect();
        Ok(span_f1(self.corpus, &predicted, &self.classes)?.macro_f1_novel)
    }
}

/// One stochastic AdaGrad step on a single sentence; returns its NLL.
fn sentence_step(
    model: &mut CrfModel,
    opt_emission: &mut AdaGrad,
    opt_transition: &mut AdaGrad,
    features: &[SparseVector],
    labels: &[usize],
    l2: f64,
) -> f64 {
    let n = model.num_labels();
    let dim = model.feature_dimension();
    let scores = model.emission_scores(features);
    let m = chain::marginals(&scores, &model.transition);
    let loss = m.log_partition - chain::path_score(&scores, &model.transition, labels);

    // Emission gradient restricted to active features.
    let mut slots: HashMap<usize, usize> = HashMap::new();
    let mut grads: Vec<f64> = Vec::new();
    for (l, x) in features.iter().enumerate() {
        for (i, v) in x.iter() {
            if i >= dim {
                continue;
            }
            let slot = *slots.entry(i).or_insert_with(|| {
                grads.extend(std::iter::repeat(0.0).take(n));
                grads.len() / n - 1
            });
            for y in 0..n {
                let d = m.node[l][y] - if labels[l] == y { 1.0 } else { 0.0 };
                grads[slot * n + y] += d * v;
            }
        }
    }
    for (&i, &slot) in &slots {
        for y in 0..n {
            let w = &mut model.emission[(y, i)];
            let g = grads[slot * n + y] + l2 * *w;
            opt_emission.update(y * dim + i, w, g);
        }
    }

    let mut gt = vec![0.0; n * n];
    for (l, e) in m.edge.iter().enumerate() {
        for (g, p) in gt.iter_mut().zip(e.as_slice()) {
            *g += p;
        }
        gt[labels[l] * n + labels[l + 1]] -= 1.0;
    }
    for (k, g) in gt.iter_mut().enumerate() {
        *g += l2 * model.transition.as_slice()[k];
    }
    opt_transition.update_dense(model.transition.as_mut_slice(), &gt);
    loss
}

/// Trains a CRF by per-sentence AdaGrad, keeping the model with the best dev
/// macro span-F1 (the starting model included). Stops after `patience`
/// epochs without improvement.
pub fn train_crf(
    train: &Corpus,
    dev: &Corpus,
    indexer: &FeatureIndexer,
    config: &TrainConfig,
    init: Option<&CrfModel>,
) -> Result<(CrfModel, TrainLog)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    let dim = indexer.len();
    let mut model = match init {
        Some(m) => {
            if m.feature_dimension() > dim {
                return Err(Error::DimensionMismatch(format!(
                    "initial model has {} features, indexer only {dim}",
                    m.feature_dimension()
                )));
            }
            if m.feature_dimension() == dim {
                m.clone()
            } else {
                m.widen(dim)?
            }
        }
        None => CrfModel::zeros(train.label_set().union(dev.label_set()), dim)?,
    };
    let data = encode_corpus(train, indexer, model.labels())?;
    let scorer = DevScorer::new(dev, indexer, model.labels());
    let labels = model.labels().clone();
    let dev_score = |m: &CrfModel| scorer.score(&labels, |f| m.viterbi_decode(f));

    let l2 = config.l2_strength;
    let initial = dev_score(&model)?;
    let mut log = TrainLog {
        epochs: vec![EpochRecord {
            epoch: 0,
            objective: model.objective(&data, l2),
            dev_score: initial,
        }],
        best_epoch: 0,
        best_dev_score: initial,
    };
    let mut stopper = EarlyStopping::new(config.patience, initial);
    let mut best = model.clone();

    let n = model.num_labels();
    let mut opt_e = AdaGrad::new(n * dim, config.learning_rate, config.adagrad_epsilon);
    let mut opt_t = AdaGrad::new(n * n, config.learning_rate, config.adagrad_epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (f, y) = &data[i];
            sentence_step(&mut model, &mut opt_e, &mut opt_t, f, y, l2);
        }
        let score = dev_score(&model)?;
        log.epochs.push(EpochRecord {
            epoch,
            objective: model.objective(&data, l2),
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

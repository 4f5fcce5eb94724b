//! Transfer across mismatched label sets: correlation learning between
//! source and target labels, correlation renormalization, collapse of the two
//! linear layers into CRF emissions, and fine-tuning.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adagrad::AdaGrad;
use crate::corpus::{Corpus, LabelSet};
use crate::crf::{train_crf, CrfModel, EarlyStopping, EpochRecord, TrainConfig, TrainLog};
use crate::error::{Error, Result};
use crate::features::{FeatureIndexer, SparseVector};
use crate::matrix::{softmax, Matrix};

/// Target-by-source correlation weights on top of a (possibly adapted)
/// source emission layer: `p(y'|x) = softmax(w_t (w_s x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationModel {
    pub w_t: Matrix,
    pub w_s: Matrix,
    pub source_labels: LabelSet,
    pub target_labels: LabelSet,
}

impl CorrelationModel {
    pub fn new(
        w_t: Matrix,
        w_s: Matrix,
        source_labels: LabelSet,
        target_labels: LabelSet,
    ) -> Result<Self> {
        if w_t.rows() != target_labels.len()
            || w_t.cols() != source_labels.len()
            || w_s.rows() != source_labels.len()
        {
            return Err(Error::DimensionMismatch(format!(
                "w_t {}x{} and w_s {}x{} for {} target / {} source labels",
                w_t.rows(),
                w_t.cols(),
                w_s.rows(),
                w_s.cols(),
                target_labels.len(),
                source_labels.len()
            )));
        }
        if !w_t.is_finite() || !w_s.is_finite() {
            return Err(Error::InvalidArgument("non-finite correlation weight".into()));
        }
        Ok(CorrelationModel {
            w_t,
            w_s,
            source_labels,
            target_labels,
        })
    }

    /// Unnormalised source label scores `a = w_s x`.
    pub fn hidden(&self, x: &SparseVector) -> Vec<f64> {
        self.w_s.mul_sparse(x)
    }

    pub fn target_scores(&self, x: &SparseVector) -> Vec<f64> {
        self.w_t.mul_dense(&self.hidden(x))
    }

    pub fn predict_proba(&self, x: &SparseVector) -> Vec<f64> {
        softmax(&self.target_scores(x))
    }

    pub fn predict(&self, x: &SparseVector) -> usize {
        argmax(&self.target_scores(x))
    }

    /// True when the target-O row is one-hot at source O and every entity
    /// row has zero weight on source O.
    pub fn is_renormalized(&self) -> bool {
        let so = self.source_labels.o_index();
        let to = self.target_labels.o_index();
        let o_row_ok = self
            .w_t
            .row(to)
            .iter()
            .enumerate()
            .all(|(j, &v)| v == if j == so { 1.0 } else { 0.0 });
        let entity_ok = (0..self.w_t.rows())
            .filter(|&i| i != to)
            .all(|i| self.w_t[(i, so)] == 0.0);
        o_row_ok && entity_ok
    }
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    /// Let correlation learning adapt the source emission layer.
    pub update_bottom: bool,
    /// After zeroing the source-O weight of an entity row, rescale the rest
    /// of the row so its absolute mass is unchanged.
    pub rescale_rows: bool,
    pub source: TrainConfig,
    pub correlation: TrainConfig,
    pub finetune: TrainConfig,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            update_bottom: true,
            rescale_rows: false,
            source: TrainConfig::default(),
            // Smaller steps keep an updated bottom layer close to the source solution.
            correlation: TrainConfig {
                learning_rate: 0.03,
                ..TrainConfig::default()
            },
            finetune: TrainConfig::default(),
        }
    }
}

impl TransferConfig {
    /// Same configuration with every stage seeded from `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.source.seed = seed;
        self.correlation.seed = seed.wrapping_add(1);
        self.finetune.seed = seed.wrapping_add(2);
        self
    }
}

fn widened_source(source: &CrfModel, dim: usize) -> Result<Matrix> {
    if source.feature_dimension() > dim {
        return Err(Error::DimensionMismatch(format!(
            "source model has {} features, indexer only {dim}",
            source.feature_dimension()
        )));
    }
    source.emission().widen(dim)
}

struct TokenData {
    features: Vec<SparseVector>,
    labels: Vec<usize>,
}

fn token_data(corpus: &Corpus, indexer: &FeatureIndexer, labels: &LabelSet) -> Result<TokenData> {
    let mut features = Vec::with_capacity(corpus.num_tokens());
    let mut out = Vec::with_capacity(corpus.num_tokens());
    for s in corpus.sentences() {
        features.extend(indexer.lookup_sentence(s));
        out.extend(s.label_indices(labels)?);
    }
    Ok(TokenData {
        features,
        labels: out,
    })
}

fn token_accuracy(model: &CorrelationModel, data: &TokenData) -> f64 {
    if data.labels.is_empty() {
        return 0.0;
    }
    let correct = data
        .features
        .iter()
        .zip(&data.labels)
        .filter(|(x, &y)| model.predict(x) == y)
        .count();
    correct as f64 / data.labels.len() as f64
}

fn token_log_loss(model: &CorrelationModel, data: &TokenData, l2: f64) -> f64 {
    let nll: f64 = data
        .features
        .iter()
        .zip(&data.labels)
        .map(|(x, &y)| {
            let s = model.target_scores(x);
            crate::matrix::log_sum_exp(&s) - s[y]
        })
        .sum();
    nll + 0.5 * l2 * (model.w_t.squared_norm() + model.w_s.squared_norm())
}

/// Learns `w_t` (and, with `update_bottom`, adapts `w_s`) by per-token AdaGrad
/// on the multinomial log-loss, early-stopped on dev token accuracy.
/// `w_t` starts at zero.
pub fn learn_correlation(
    source_model: &CrfModel,
    target_train: &Corpus,
    target_dev: &Corpus,
    indexer: &FeatureIndexer,
    config: &TransferConfig,
) -> Result<(CorrelationModel, TrainLog)> {
    learn_correlation_from(source_model, target_train, target_dev, indexer, config, None)
}

/// As [`learn_correlation`], starting from `initial_w_t` when given.
pub fn learn_correlation_from(
    source_model: &CrfModel,
    target_train: &Corpus,
    target_dev: &Corpus,
    indexer: &FeatureIndexer,
    config: &TransferConfig,
    initial_w_t: Option<Matrix>,
) -> Result<(CorrelationModel, TrainLog)> {
    let cfg = &config.correlation;
    cfg.validate()?;
    if target_train.is_empty() {
        return Err(Error::InvalidArgument("target training corpus is empty".into()));
    }
    let target_labels = target_train.label_set().union(target_dev.label_set());
    let source_labels = source_model.labels().clone();
    let w_s = widened_source(source_model, indexer.len())?;
    let w_t = match initial_w_t {
        Some(m) => m,
        None => Matrix::zeros(target_labels.len(), source_labels.len()),
    };
    let mut model = CorrelationModel::new(w_t, w_s, source_labels, target_labels)?;

    let train = token_data(target_train, indexer, &model.target_labels)?;
    let dev = token_data(target_dev, indexer, &model.target_labels)?;
    let l2 = cfg.l2_strength;

    let initial = token_accuracy(&model, &dev);
    let mut log = TrainLog {
        epochs: vec![EpochRecord {
            epoch: 0,
            objective: token_log_loss(&model, &train, l2),
            dev_score: initial,
        }],
        best_epoch: 0,
        best_dev_score: initial,
    };
    let mut stopper = EarlyStopping::new(cfg.patience, initial);
    let mut best = model.clone();

    let (nt, ns, dim) = (model.w_t.rows(), model.w_t.cols(), model.w_s.cols());
    let mut opt_t = AdaGrad::new(nt * ns, cfg.learning_rate, cfg.adagrad_epsilon);
    let mut opt_s = AdaGrad::new(ns * dim, cfg.learning_rate, cfg.adagrad_epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.labels.len()).collect();
    let mut grad_t = vec![0.0; nt * ns];

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for &k in &order {
            let x = &train.features[k];
            let y = train.labels[k];
            let a = model.hidden(x);
            let mut g = softmax(&model.w_t.mul_dense(&a));
            g[y] -= 1.0;

            let grad_a = if config.update_bottom {
                Some(model.w_t.transpose_mul_dense(&g))
            } else {
                None
            };
            for i in 0..nt {
                for j in 0..ns {
                    grad_t[i * ns + j] = g[i] * a[j] + l2 * model.w_t[(i, j)];
                }
            }
            opt_t.update_dense(model.w_t.as_mut_slice(), &grad_t);

            if let Some(grad_a) = grad_a {
                for (f, v) in x.iter() {
                    if f >= dim {
                        continue;
                    }
                    for (j, ga) in grad_a.iter().enumerate() {
                        let w = &mut model.w_s[(j, f)];
                        let gw = ga * v + l2 * *w;
                        opt_s.update(j * dim + f, w, gw);
                    }
                }
            }
        }
        let score = token_accuracy(&model, &dev);
        log.epochs.push(EpochRecord {
            epoch,
            objective: token_log_loss(&model, &train, l2),
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

/// Decouples the dominant O class: every target entity row loses its
/// source-O weight, and the target-O row becomes one-hot at source O.
pub fn renormalize_correlation(model: &CorrelationModel) -> Result<CorrelationModel> {
    renormalize_correlation_with(model, false)
}

pub fn renormalize_correlation_with(model: &CorrelationModel, rescale_rows: bool) -> Result<CorrelationModel> {
    let so = model.source_labels.index_of(crate::corpus::OUTSIDE).ok_or(Error::MissingOClass)?;
    let to = model.target_labels.index_of(crate::corpus::OUTSIDE).ok_or(Error::MissingOClass)?;
    let mut out = model.clone();
    for i in 0..out.w_t.rows() {
        let row = out.w_t.row_mut(i);
        if i == to {
            row.iter_mut().enumerate().for_each(|(j, v)| *v = if j == so { 1.0 } else { 0.0 });
            continue;
        }
        if rescale_rows {
            let before: f64 = row.iter().map(|v| v.abs()).sum();
            let after = before - row[so].abs();
            row[so] = 0.0;
            if after > 0.0 && after != before {
                let scale = before / after;
                row.iter_mut().for_each(|v| *v *= scale);
            }
        } else {
            row[so] = 0.0;
        }
    }
    Ok(out)
}

/// Collapses the two linear layers into CRF emissions `w_t · w_s`, with zero
/// transitions, over a feature space of `target_indexer_dimension` columns.
pub fn collapse_init(model: &CorrelationModel, target_indexer_dimension: usize) -> Result<CrfModel> {
    if !model.is_renormalized() {
        return Err(Error::NotRenormalized(
            "target-O row must be one-hot at source O and entity rows must not weight source O"
                .into(),
        ));
    }
    if model.w_s.cols() > target_indexer_dimension {
        return Err(Error::DimensionMismatch(format!(
            "bottom layer has {} features, target space only {target_indexer_dimension}",
            model.w_s.cols()
        )));
    }
    let w_s = model.w_s.widen(target_indexer_dimension)?;
    let emission = model.w_t.matmul(&w_s)?;
    let n = model.target_labels.len();
    CrfModel::new(model.target_labels.clone(), emission, Matrix::zeros(n, n))
}

/// Everything produced by a transfer run, kept for inspection.
#[derive(Debug, Clone)]
pub struct TransferArtifacts {
    pub source_model: CrfModel,
    pub source_log: Option<TrainLog>,
    /// Indexer after growing on the target training data.
    pub indexer: FeatureIndexer,
    /// Source emissions widened to the target feature space.
    pub w_s_before: Matrix,
    pub correlation: CorrelationModel,
    pub correlation_log: TrainLog,
    pub renormalized: CorrelationModel,
    pub collapsed: CrfModel,
    pub finetune_log: TrainLog,
}

/// Correlation learning, renormalization, collapse, and fine-tuning from a
/// trained source model. `source_indexer` is cloned and grown on `target_train`.
pub fn transfer_from_source(
    source_model: &CrfModel,
    source_indexer: &FeatureIndexer,
    target_train: &Corpus,
    target_dev: &Corpus,
    config: &TransferConfig,
) -> Result<(CrfModel, TransferArtifacts)> {
    let mut indexer = source_indexer.clone();
    indexer.unfreeze();
    indexer.grow(target_train)?;
    let w_s_before = widened_source(source_model, indexer.len())?;
    let (correlation, correlation_log) =
        learn_correlation(source_model, target_train, target_dev, &indexer, config)?;
    let renormalized = renormalize_correlation_with(&correlation, config.rescale_rows)?;
    let collapsed = collapse_init(&renormalized, indexer.len())?;
    let (model, finetune_log) =
        train_crf(target_train, target_dev, &indexer, &config.finetune, Some(&collapsed))?;
    Ok((
        model,
        TransferArtifacts {
            source_model: source_model.clone(),
            source_log: None,
            indexer,
            w_s_before,
            correlation,
            correlation_log,
            renormalized,
            collapsed,
            finetune_log,
        },
    ))
}

/// Trains a source CRF on its own feature space.
pub fn train_source(
    source_train: &Corpus,
    source_dev: &Corpus,
    config: &TrainConfig,
) -> Result<(CrfModel, FeatureIndexer, TrainLog)> {
    let mut indexer = FeatureIndexer::new();
    indexer.grow(source_train)?;
    let (model, log) = train_crf(source_train, source_dev, &indexer, config, None)?;
    Ok((model, indexer, log))
}

/// The full pipeline: source CRF, correlation learning, renormalization,
/// collapse, and target fine-tuning.
pub fn trans_init(
    source_train: &Corpus,
    source_dev: &Corpus,
    target_train: &Corpus,
    target_dev: &Corpus,
    config: &TransferConfig,
) -> Result<(CrfModel, TransferArtifacts)> {
    let (source_model, indexer, source_log) = train_source(source_train, source_dev, &config.source)?;
    let (model, mut artifacts) =
        transfer_from_source(&source_model, &indexer, target_train, target_dev, config)?;
    artifacts.source_log = Some(source_log);
    Ok((model, artifacts))
}

/// Target type -> top-k source types by correlation weight, as a text table.
pub fn correlation_report(model: &CorrelationModel, top_k: usize) -> String {
    let width = model
        .target_labels
        .names()
        .iter()
        .map(String::len)
        .max()
        .unwrap_or(6)
        .max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  top source types (weight)", "target");
    for (i, name) in model.target_labels.names().iter().enumerate() {
        let mut cols: Vec<(usize, f64)> = model.w_t.row(i).iter().copied().enumerate().collect();
        cols.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let cells: Vec<String> = cols
            .iter()
            .take(top_k)
            .map(|(j, w)| format!("{}({w:+.4})", model.source_labels.name(*j)))
            .collect();
        let _ = writeln!(out, "{name:<width$}  {}", cells.join("  "));
    }
    out
}

//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use transinit::corpus::LabelSet;
use transinit::crf::CrfModel;
use transinit::features::SparseVector;
use transinit::matrix::Matrix;

pub type Batch = Vec<(Vec<SparseVector>, Vec<usize>)>;

pub fn labels(n: usize) -> LabelSet {
    LabelSet::from_types((1..n).map(|i| format!("T{i}")))
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn random_model(rng: &mut ChaCha8Rng, n_labels: usize, n_features: usize) -> CrfModel {
    let e = random_matrix(rng, n_labels, n_features, 1.5);
    let t = random_matrix(rng, n_labels, n_labels, 1.5);
    CrfModel::new(labels(n_labels), e, t).unwrap()
}

/// Real-valued sparse token vectors: the bias plus a few random features.
pub fn random_sequence(rng: &mut ChaCha8Rng, len: usize, n_features: usize) -> Vec<SparseVector> {
    (0..len)
        .map(|_| {
            let k = rng.gen_range(1..=5);
            let entries = (0..k)
                .map(|_| (rng.gen_range(1..n_features), rng.gen_range(-1.0..1.0)))
                .collect();
            SparseVector::from_entries(entries, n_features).unwrap()
        })
        .collect()
}

pub fn random_labels(rng: &mut ChaCha8Rng, len: usize, n_labels: usize) -> Vec<usize> {
    (0..len).map(|_| rng.gen_range(0..n_labels)).collect()
}

/// Dense per-position label scores computed straight from the definition.
pub fn scores(model: &CrfModel, xs: &[SparseVector]) -> Vec<Vec<f64>> {
    xs.iter()
        .map(|x| {
            (0..model.num_labels())
                .map(|y| x.iter().map(|(i, v)| model.emission()[(y, i)] * v).sum())
                .collect()
        })
        .collect()
}

pub struct Enumerated {
    pub log_partition: f64,
    pub node: Vec<Vec<f64>>,
    pub best: Vec<usize>,
}

/// Visits every label sequence of length `scores.len()`.
pub fn enumerate(scores: &[Vec<f64>], transition: &Matrix) -> Enumerated {
    let n = transition.rows();
    let len = scores.len();
    let total = n.pow(len as u32);
    let mut path_scores = Vec::with_capacity(total);
    let mut paths = Vec::with_capacity(total);
    for code in 0..total {
        let mut c = code;
        let mut y = vec![0; len];
        for slot in y.iter_mut().rev() {
            *slot = c % n;
            c /= n;
        }
        let mut s: f64 = (0..len).map(|l| scores[l][y[l]]).sum();
        for l in 1..len {
            s += transition[(y[l - 1], y[l])];
        }
        path_scores.push(s);
        paths.push(y);
    }
    let max = path_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = path_scores.iter().map(|s| (s - max).exp()).sum();
    let log_partition = max + z.ln();
    let mut node = vec![vec![0.0; n]; len];
    for (y, s) in paths.iter().zip(&path_scores) {
        let p = (s - log_partition).exp();
        for (l, &label) in y.iter().enumerate() {
            node[l][label] += p;
        }
    }
    let best_idx = (0..total)
        .max_by(|&a, &b| path_scores[a].total_cmp(&path_scores[b]))
        .unwrap();
    Enumerated {
        log_partition,
        node,
        best: paths[best_idx].clone(),
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub enum Coord {
    Emission(usize, usize),
    Transition(usize, usize),
}

/// Central difference of `model.objective` along one coordinate.
pub fn finite_difference(model: &CrfModel, batch: &Batch, l2: f64, coord: &Coord, h: f64) -> f64 {
    let mut plus = model.clone();
    let mut minus = model.clone();
    match *coord {
        Coord::Emission(r, c) => {
            plus.emission_mut()[(r, c)] += h;
            minus.emission_mut()[(r, c)] -= h;
        }
        Coord::Transition(r, c) => {
            plus.transition_mut()[(r, c)] += h;
            minus.transition_mut()[(r, c)] -= h;
        }
    }
    (plus.objective(batch, l2) - minus.objective(batch, l2)) / (2.0 * h)
}

pub fn data_file(name: &str) -> String {
    let path = format!("{}/data/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn toy(name: &str) -> transinit::Corpus {
    transinit::corpus::parse_conll_str(&data_file(name), 0, 1).unwrap()
}

pub fn toy_embeddings() -> transinit::baselines::EmbeddingTable {
    transinit::baselines::EmbeddingTable::from_text(&data_file("toy_embeddings.txt")).unwrap()
}

/// Quick configuration for tests on the toy corpora.
pub fn quick_config() -> transinit::transfer::TransferConfig {
    let mut cfg = transinit::transfer::TransferConfig::default();
    for stage in [&mut cfg.source, &mut cfg.correlation, &mut cfg.finetune] {
        stage.max_epochs = 15;
        stage.patience = 3;
    }
    cfg
}

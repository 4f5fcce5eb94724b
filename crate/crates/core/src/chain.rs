//! Exact inference on a linear chain, given per-position label scores and a
//! label-pair transition matrix. Everything runs in log space.

use crate::matrix::{log_sum_exp, Matrix};

/// Posterior marginals of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub log_partition: f64,
    /// `node[l][y]` = p(y_l = y | x).
    pub node: Vec<Vec<f64>>,
    /// `edge[l][(a, b)]` = p(y_l = a, y_{l+1} = b | x), for `l` in `0..L-1`.
    pub edge: Vec<Matrix>,
}

pub fn path_score(scores: &[Vec<f64>], transition: &Matrix, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (l, &y) in labels.iter().enumerate() {
        total += scores[l][y];
        if l > 0 {
            total += transition[(labels[l - 1], y)];
        }
    }
    total
}

fn forward(scores: &[Vec<f64>], transition: &Matrix) -> Vec<Vec<f64>> {
    let n = transition.rows();
    let mut alpha: Vec<Vec<f64>> = Vec::with_capacity(scores.len());
    alpha.push(scores[0].clone());
    let mut buf = vec![0.0; n];
    for l in 1..scores.len() {
        let prev = &alpha[l - 1];
        let row: Vec<f64> = (0..n)
            .map(|b| {
                for a in 0..n {
                    buf[a] = prev[a] + transition[(a, b)];
                }
                log_sum_exp(&buf) + scores[l][b]
            })
            .collect();
        alpha.push(row);
    }
    alpha
}

fn backward(scores: &[Vec<f64>], transition: &Matrix) -> Vec<Vec<f64>> {
    let n = transition.rows();
    let len = scores.len();
    let mut beta = vec![vec![0.0; n]; len];
    let mut buf = vec![0.0; n];
    for l in (0..len - 1).rev() {
        for a in 0..n {
            for b in 0..n {
                buf[b] = transition[(a, b)] + scores[l + 1][b] + beta[l + 1][b];
            }
            beta[l][a] = log_sum_exp(&buf);
        }
    }
    beta
}

pub fn log_partition(scores: &[Vec<f64>], transition: &Matrix) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let alpha = forward(scores, transition);
    log_sum_exp(alpha.last().unwrap())
}

pub fn marginals(scores: &[Vec<f64>], transition: &Matrix) -> Marginals {
    let n = transition.rows();
    let len = scores.len();
    if len == 0 {
        return Marginals {
            log_partition: 0.0,
            node: vec![],
            edge: vec![],
        };
    }
    let alpha = forward(scores, transition);
    let beta = backward(scores, transition);
    let log_z = log_sum_exp(&alpha[len - 1]);

    let node = (0..len)
        .map(|l| {
            let mut p: Vec<f64> = (0..n)
                .map(|y| (alpha[l][y] + beta[l][y] - log_z).exp())
                .collect();
            // Remove rounding drift so rows sum to one.
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= s);
            p
        })
        .collect();

    let edge = (0..len.saturating_sub(1))
        .map(|l| {
            let mut m = Matrix::zeros(n, n);
            for a in 0..n {
                for b in 0..n {
                    m[(a, b)] = (alpha[l][a]
                        + transition[(a, b)]
                        + scores[l + 1][b]
                        + beta[l + 1][b]
                        - log_z)
                        .exp();
                }
            }
            m
        })
        .collect();

    Marginals {
        log_partition: log_z,
        node,
        edge,
    }
}

/// Highest-scoring label path. Ties go to the lower label index.
pub fn viterbi(scores: &[Vec<f64>], transition: &Matrix) -> Vec<usize> {
    let n = transition.rows();
    let len = scores.len();
    if len == 0 {
        return vec![];
    }
    let mut delta = scores[0].clone();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(len);
    back.push(vec![0; n]);
    for l in 1..len {
        let mut next = vec![0.0; n];
        let mut ptr = vec![0; n];
        for b in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for a in 0..n {
                let v = delta[a] + transition[(a, b)];
                if v > best {
                    best = v;
                    arg = a;
                }
            }
            next[b] = best + scores[l][b];
            ptr[b] = arg;
        }
        delta = next;
        back.push(ptr);
    }
    let mut last = 0;
    for y in 1..n {
        if delta[y] > delta[last] {
            last = y;
        }
    }
    let mut path = vec![0; len];
    path[len - 1] = last;
    for l in (1..len).rev() {
        path[l - 1] = back[l][path[l]];
    }
    path
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_chain() {
        let scores = vec![vec![0.0; 3]; 2];
        let t = Matrix::zeros(3, 3);
        assert!((log_partition(&scores, &t) - 9f64.ln()).abs() < 1e-12);
        let m = marginals(&scores, &t);
        for row in &m.node {
            for p in row {
                assert!((p - 1.0 / 3.0).abs() < 1e-12);
            }
        }
        assert_eq!(viterbi(&scores, &t), vec![0, 0]);
    }

    #[test]
    fn edge_marginals_agree_with_nodes() {
        let scores = vec![vec![0.3, -1.0], vec![2.0, 0.1], vec![-0.5, 0.7]];
        let t = Matrix::from_rows(&[vec![0.2, -0.4], vec![1.1, 0.0]]).unwrap();
        let m = marginals(&scores, &t);
        for (l, e) in m.edge.iter().enumerate() {
            for a in 0..2 {
                let row: f64 = e.row(a).iter().sum();
                assert!((row - m.node[l][a]).abs() < 1e-12);
                let col: f64 = (0..2).map(|r| e[(r, a)]).sum();
                assert!((col - m.node[l + 1][a]).abs() < 1e-12);
            }
        }
    }
}

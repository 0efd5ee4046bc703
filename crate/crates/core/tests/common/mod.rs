//! Independent reference computations used to check the library.
#![allow(dead_code)]

use asdetect::mlp::MlpModel;
use asdetect::numerics::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Sample covariance (divisor n − 1) by explicit double loop.
pub fn covariance(x: &Matrix) -> Matrix {
    let (n, d) = (x.rows(), x.cols());
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for j in 0..d {
            mean[j] += x[(i, j)] / n as f64;
        }
    }
    let mut c = Matrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            let mut s = 0.0;
            for i in 0..n {
                s += (x[(i, a)] - mean[a]) * (x[(i, b)] - mean[b]);
            }
            c[(a, b)] = s / (n as f64 - 1.0);
        }
    }
    c
}

/// Eigenvalues (descending) from nalgebra's symmetric eigensolver.
pub fn reference_eigenvalues(c: &Matrix) -> Vec<f64> {
    let n = c.rows();
    let m = nalgebra::DMatrix::from_row_slice(n, n, c.as_slice());
    let mut vals: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    vals
}

/// Central finite-difference gradient of the cross-entropy loss.
pub fn fd_gradient(model: &MlpModel, x: &[f64], y: usize, h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            (model.loss(&xp, y).unwrap() - model.loss(&xm, y).unwrap()) / (2.0 * h)
        })
        .collect()
}

/// k nearest indices by brute force: every distance, full sort on (dist, index).
pub fn brute_force_knn_label(points: &Matrix, labels: &[usize], q: &[f64], k: usize) -> usize {
    let mut d: Vec<(f64, usize)> = (0..points.rows())
        .map(|i| {
            let mut s = 0.0;
            for j in 0..q.len() {
                s += (points[(i, j)] - q[j]) * (points[(i, j)] - q[j]);
            }
            (s, i)
        })
        .collect();
    d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let nearest = &d[..k];
    let max_label = labels.iter().max().unwrap() + 1;
    let mut votes = vec![0usize; max_label];
    for &(_, i) in nearest {
        votes[labels[i]] += 1;
    }
    let top = *votes.iter().max().unwrap();
    // First neighbour (in rank order) whose label has the top vote count.
    nearest
        .iter()
        .map(|&(_, i)| labels[i])
        .find(|&l| votes[l] == top)
        .unwrap()
}

/// Mann–Whitney statistic: P(adv < normal) + ½ P(adv = normal).
pub fn mann_whitney_auc(normal: &[f64], adv: &[f64]) -> f64 {
    let mut s = 0.0;
    for &a in adv {
        for &n in normal {
            if a < n {
                s += 1.0;
            } else if a == n {
                s += 0.5;
            }
        }
    }
    s / (normal.len() * adv.len()) as f64
}

/// Pearson correlation by the textbook single-pass-sums formula.
pub fn pearson_direct(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    let saa: f64 = a.iter().map(|x| x * x).sum();
    let sbb: f64 = b.iter().map(|x| x * x).sum();
    let sab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt())
}

/// Probability of a switch pattern as a plain product.
pub fn sequence_probability(labels: &[usize], probs: &[f64]) -> f64 {
    let mut p = 1.0;
    for i in 1..labels.len() {
        p *= if labels[i] != labels[i - 1] { probs[i - 1] } else { 1.0 - probs[i - 1] };
    }
    p
}

/// `(TPR, FPR)` of every candidate threshold, by direct counting.
pub fn threshold_sweep(normal: &[f64], adv: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut values: Vec<f64> = normal.iter().chain(adv).copied().collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup();
    let mut thresholds = vec![f64::NEG_INFINITY];
    for w in values.windows(2) {
        thresholds.push((w[0] + w[1]) / 2.0);
    }
    thresholds.push(f64::INFINITY);
    thresholds
        .into_iter()
        .map(|t| {
            let tp = adv.iter().filter(|&&v| v < t).count() as f64 / adv.len() as f64;
            let fp = normal.iter().filter(|&&v| v < t).count() as f64 / normal.len() as f64;
            (t, tp, fp)
        })
        .collect()
}

/// Random orthogonal matrix via Gram–Schmidt on a random square matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let mut q = random_matrix(rng, n, n);
    for i in 0..n {
        for j in 0..i {
            let d: f64 = (0..n).map(|k| q[(i, k)] * q[(j, k)]).sum();
            for k in 0..n {
                q[(i, k)] -= d * q[(j, k)];
            }
        }
        let norm: f64 = (0..n).map(|k| q[(i, k)] * q[(i, k)]).sum::<f64>().sqrt();
        for k in 0..n {
            q[(i, k)] /= norm;
        }
    }
    q
}

/// Smallest |pre-activation| over all hidden ReLU units at `x`. Central
/// differences are only meaningful away from the ReLU kinks.
pub fn min_hidden_preactivation(model: &MlpModel, x: &[f64]) -> f64 {
    let mut a = x.to_vec();
    let mut min = f64::INFINITY;
    let layers = model.layers();
    for l in &layers[..layers.len() - 1] {
        let z: Vec<f64> = (0..l.bias.len())
            .map(|o| l.bias[o] + (0..a.len()).map(|i| l.weights[(o, i)] * a[i]).sum::<f64>())
            .collect();
        for &v in &z {
            min = min.min(v.abs());
        }
        a = z.into_iter().map(|v| v.max(0.0)).collect();
    }
    min
}

/// A random input at least `margin` away from every ReLU kink of `model`.
pub fn smooth_point(model: &MlpModel, r: &mut ChaCha8Rng, margin: f64) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..model.input_dim()).map(|_| r.gen_range(0.0..1.0)).collect();
        if min_hidden_preactivation(model, &x) > margin {
            return x;
        }
    }
}

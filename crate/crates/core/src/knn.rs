//! Exact k-nearest-neighbour classification over an activation space.
//!
//! Neighbours are ordered by `(squared distance, point index)`, so the
//! KD-tree and the exhaustive scan always return the same neighbour list.
//! The majority label wins; among labels with equal votes the one whose
//! nearest member ranks first wins.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{sq_dist, Matrix};

/// Dimensions at or below which queries go through the KD-tree.
pub const KD_TREE_MAX_DIM: usize = 20;
const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchPath {
    /// KD-tree when `m <= KD_TREE_MAX_DIM`, else exhaustive.
    Auto,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnClassifier {
    points: Matrix,
    labels: Vec<usize>,
    k: usize,
    tree: Option<KdTree>,
}

pub fn knn_fit(points: Matrix, labels: Vec<usize>, k: usize) -> Result<KnnClassifier> {
    if labels.len() != points.rows() {
        return Err(Error::DimensionMismatch {
            expected: points.rows(),
            got: labels.len(),
        });
    }
    if k == 0 || points.rows() < k {
        return Err(Error::TooFewPoints { n: points.rows(), k });
    }
    let tree = (points.cols() <= KD_TREE_MAX_DIM).then(|| KdTree::build(&points));
    Ok(KnnClassifier {
        points,
        labels,
        k,
        tree,
    })
}

impl KnnClassifier {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn has_index(&self) -> bool {
        self.tree.is_some()
    }

    /// The `k` nearest points as `(squared distance, index)`, nearest first.
    pub fn neighbors(&self, q: &[f64], path: SearchPath) -> Result<Vec<(f64, usize)>> {
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: q.len(),
            });
        }
        Ok(match (&self.tree, path) {
            (Some(tree), SearchPath::Auto) => tree.nearest(&self.points, q, self.k),
            _ => exhaustive(&self.points, q, self.k),
        })
    }

    pub fn predict_with(&self, q: &[f64], path: SearchPath) -> Result<usize> {
        Ok(vote(&self.neighbors(q, path)?, &self.labels))
    }
}

pub fn knn_predict(clf: &KnnClassifier, q: &[f64]) -> Result<usize> {
    clf.predict_with(q, SearchPath::Auto)
}

/// Row-wise [`knn_predict`], order-preserving.
pub fn knn_predict_batch(clf: &KnnClassifier, queries: &Matrix) -> Result<Vec<usize>> {
    if queries.rows() == 0 {
        return Ok(Vec::new());
    }
    if queries.cols() != clf.dim() {
        return Err(Error::DimensionMismatch {
            expected: clf.dim(),
            got: queries.cols(),
        });
    }
    (0..queries.rows())
        .into_par_iter()
        .map(|i| knn_predict(clf, queries.row(i)))
        .collect()
}

fn vote(neighbors: &[(f64, usize)], labels: &[usize]) -> usize {
    // (label, votes, rank of nearest member)
    let mut tally: Vec<(usize, usize, usize)> = Vec::new();
    for (rank, &(_, idx)) in neighbors.iter().enumerate() {
        let label = labels[idx];
        match tally.iter_mut().find(|t| t.0 == label) {
            Some(t) => t.1 += 1,
            None => tally.push((label, 1, rank)),
        }
    }
    tally
        .iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
        .map(|t| t.0)
        .expect("k >= 1")
}

fn cmp_key(a: &(f64, usize), b: &(f64, usize)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn exhaustive(points: &Matrix, q: &[f64], k: usize) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = points.row_iter().enumerate().map(|(i, p)| (sq_dist(p, q), i)).collect();
    all.sort_by(cmp_key);
    all.truncate(k);
    all
}

/// Bounded sorted candidate list.
struct Best {
    items: Vec<(f64, usize)>,
    k: usize,
}

impl Best {
    fn worst(&self) -> Option<f64> {
        (self.items.len() == self.k).then(|| self.items[self.k - 1].0)
    }

    fn offer(&mut self, cand: (f64, usize)) {
        if self.items.len() == self.k && cmp_key(&cand, &self.items[self.k - 1]).is_ge() {
            return;
        }
        let pos = self.items.partition_point(|x| cmp_key(x, &cand).is_lt());
        self.items.insert(pos, cand);
        self.items.truncate(self.k);
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Median-split KD-tree over row indices of a point matrix.
#[derive(Debug, Clone, PartialEq)]
struct KdTree {
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    fn build(points: &Matrix) -> Self {
        let mut tree = KdTree {
            order: (0..points.rows()).collect(),
            nodes: Vec::new(),
        };
        tree.build_node(points, 0, points.rows());
        tree
    }

    fn build_node(&mut self, points: &Matrix, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let slice = &mut self.order[start..end];
        let axis = widest_axis(points, slice);
        slice.sort_by(|&a, &b| points[(a, axis)].total_cmp(&points[(b, axis)]).then(a.cmp(&b)));
        let mid = slice.len() / 2;
        let value = points[(slice[mid], axis)];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(points, start, start + mid);
        let right = self.build_node(points, start + mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    fn nearest(&self, points: &Matrix, q: &[f64], k: usize) -> Vec<(f64, usize)> {
        let mut best = Best {
            items: Vec::with_capacity(k + 1),
            k,
        };
        self.search(0, points, q, &mut best);
        best.items
    }

    fn search(&self, node: usize, points: &Matrix, q: &[f64], best: &mut Best) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    best.offer((sq_dist(points.row(i), q), i));
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, points, q, best);
                // Points across the plane are at least |diff| away; equal
                // distances must still be visited for the index tie-break.
                if best.worst().map_or(true, |w| diff * diff <= w) {
                    self.search(far, points, q, best);
                }
            }
        }
    }
}

fn widest_axis(points: &Matrix, idx: &[usize]) -> usize {
    let mut best = (0usize, f64::NEG_INFINITY);
    for axis in 0..points.cols() {
        let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let v = points[(i, axis)];
            (lo.min(v), hi.max(v))
        });
        if hi - lo > best.1 {
            best = (axis, hi - lo);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> Matrix {
        Matrix::from_vec(points.len(), 1, points.to_vec()).unwrap()
    }

    #[test]
    fn fit_boundaries() {
        assert!(knn_fit(line(&[0.0, 1.0, 2.0, 3.0, 4.0]), vec![0; 5], 5).is_ok());
        assert!(matches!(
            knn_fit(line(&[0.0, 1.0, 2.0, 3.0]), vec![0; 4], 5),
            Err(Error::TooFewPoints { n: 4, k: 5 })
        ));
    }

    #[test]
    fn self_neighbor_with_k1() {
        let clf = knn_fit(line(&[0.0, 1.0, 2.0]), vec![4, 5, 6], 1).unwrap();
        assert_eq!(knn_predict(&clf, &[1.0]).unwrap(), 5);
    }

    #[test]
    fn majority_vote() {
        // Three of class 0 nearer than two of class 1.
        let clf = knn_fit(line(&[0.1, 0.2, 0.3, 0.4, 0.5, 9.0]), vec![0, 0, 0, 1, 1, 1], 5).unwrap();
        assert_eq!(knn_predict(&clf, &[0.0]).unwrap(), 0);
        let clf = knn_fit(line(&[0.4, 0.5, 0.1, 0.2, 0.3]), vec![0, 0, 1, 1, 1], 5).unwrap();
        assert_eq!(knn_predict(&clf, &[0.0]).unwrap(), 1);
    }

    #[test]
    fn vote_tie_goes_to_nearest_label() {
        // k = 4: two votes each; label 1 owns the single nearest point.
        let clf = knn_fit(line(&[0.2, 0.1, 0.3, 0.4]), vec![0, 1, 0, 1], 4).unwrap();
        assert_eq!(knn_predict(&clf, &[0.0]).unwrap(), 1);
    }

    #[test]
    fn equal_distance_prefers_lower_index() {
        let clf = knn_fit(line(&[1.0, -1.0]), vec![3, 7], 1).unwrap();
        assert_eq!(knn_predict(&clf, &[0.0]).unwrap(), 3);
        let clf = knn_fit(line(&[-1.0, 1.0]), vec![3, 7], 1).unwrap();
        assert_eq!(knn_predict(&clf, &[0.0]).unwrap(), 3);
    }

    #[test]
    fn batch_edge_cases() {
        let clf = knn_fit(line(&[0.0, 1.0]), vec![0, 1], 1).unwrap();
        assert!(knn_predict_batch(&clf, &Matrix::zeros(0, 1)).unwrap().is_empty());
        assert_eq!(knn_predict_batch(&clf, &line(&[0.9, 0.1])).unwrap(), vec![1, 0]);
        assert!(knn_predict(&clf, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn tree_with_many_duplicates() {
        let pts: Vec<f64> = (0..100).map(|i| (i % 3) as f64).collect();
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let clf = knn_fit(line(&pts), labels, 5).unwrap();
        assert!(clf.has_index());
        for q in [-0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 3.0] {
            assert_eq!(
                clf.neighbors(&[q], SearchPath::Auto).unwrap(),
                clf.neighbors(&[q], SearchPath::Exhaustive).unwrap()
            );
        }
    }
}

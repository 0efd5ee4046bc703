//! Labelled sample sets, the synthetic Gaussian-blob generator and MNIST IDX
//! ingestion.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng;

/// Row-major samples with features in `[0, 1]` and labels `< n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::CountMismatch {
                images: features.rows(),
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::InvalidLabel { label: bad, n_classes });
        }
        if let Some(v) = features.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParams(format!("feature {v} outside [0, 1]")));
        }
        Ok(Dataset {
            features,
            labels,
            n_classes,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    /// Shuffles with the named seed stream and cuts into consecutive parts
    /// of the given sizes. Sizes must not exceed the dataset length.
    pub fn shuffled_split(&self, seed: u64, sizes: &[usize]) -> Result<Vec<Dataset>> {
        let total: usize = sizes.iter().sum();
        if total > self.len() {
            return Err(Error::InvalidParams(format!(
                "split sizes sum to {total}, dataset has {}",
                self.len()
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng::stream(seed, "split"));
        let mut start = 0;
        Ok(sizes
            .iter()
            .map(|&s| {
                let part = self.subset(&order[start..start + s]);
                start += s;
                part
            })
            .collect())
    }
}

/// Isotropic Gaussian blobs. Class means are drawn once, uniformly in
/// `[0.25, 0.75]^dim`; samples are `mean + N(0, spread²)` clipped to `[0, 1]`.
/// Rows are grouped by class in label order.
pub fn gen_blobs(n_classes: usize, dim: usize, per_class: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if n_classes == 0 || dim == 0 || per_class == 0 || !(spread >= 0.0) || !spread.is_finite() {
        return Err(Error::InvalidParams(format!(
            "gen_blobs needs positive counts and spread >= 0 (classes {n_classes}, dim {dim}, per_class {per_class}, spread {spread})"
        )));
    }
    let mut rng = rng::stream(seed, "blobs");
    let means: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| (0..dim).map(|_| rng.gen_range(0.25..0.75)).collect())
        .collect();
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut data = Vec::with_capacity(n_classes * per_class * dim);
    let mut labels = Vec::with_capacity(n_classes * per_class);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            for &m in mean {
                let v: f64 = noise.sample(&mut rng);
                data.push((m + spread * v).clamp(0.0, 1.0));
            }
            labels.push(c);
        }
    }
    Dataset::new(Matrix::from_vec(labels.len(), dim, data)?, labels, n_classes)
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &'static str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::TruncatedFile(what))
}

/// Decodes an IDX image/label pair already in memory. Pixels are scaled by
/// `1/255` and each image is flattened row-major; `n_classes` is one more
/// than the largest label seen.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let magic = be_u32(images, 0, "idx images header")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            what: "idx images",
            found: images[..4].to_vec(),
        });
    }
    let n = be_u32(images, 4, "idx images header")? as usize;
    let rows = be_u32(images, 8, "idx images header")? as usize;
    let cols = be_u32(images, 12, "idx images header")? as usize;
    let d = rows * cols;
    let pixels = images
        .get(16..16 + n * d)
        .ok_or(Error::TruncatedFile("idx images body"))?;

    let lmagic = be_u32(labels, 0, "idx labels header")?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            what: "idx labels",
            found: labels[..4].to_vec(),
        });
    }
    let nl = be_u32(labels, 4, "idx labels header")? as usize;
    if nl != n {
        return Err(Error::CountMismatch { images: n, labels: nl });
    }
    let label_bytes = labels.get(8..8 + nl).ok_or(Error::TruncatedFile("idx labels body"))?;

    let features = Matrix::from_vec(n, d, pixels.iter().map(|&p| f64::from(p) / 255.0).collect())?;
    let labels: Vec<usize> = label_bytes.iter().map(|&b| usize::from(b)).collect();
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(features, labels, n_classes)
}

pub fn read_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    parse_idx(&images, &labels)
}

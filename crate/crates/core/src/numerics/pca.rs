use super::eigen::canonical_sign;
use super::{covariance_eigs, dot, Matrix};
use crate::error::{Error, Result};

/// Component cap applied to wide layers.
pub const DEFAULT_MAX_COMPONENTS: usize = 100;

/// A PCA projection of one layer's activations: a centred, rotated
/// Euclidean coordinate system with perpendicular axes. Coordinates keep
/// their eigenvalue scale (no whitening).
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSpace {
    mean: Vec<f64>,
    /// `n_components × input_dim`, orthonormal rows.
    components: Matrix,
    eigenvalues: Vec<f64>,
}

impl ActivationSpace {
    pub(crate) fn from_parts(mean: Vec<f64>, components: Matrix, eigenvalues: Vec<f64>) -> Result<Self> {
        if components.cols() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: components.cols(),
            });
        }
        if components.rows() != eigenvalues.len() {
            return Err(Error::DimensionMismatch {
                expected: components.rows(),
                got: eigenvalues.len(),
            });
        }
        Ok(ActivationSpace {
            mean,
            components,
            eigenvalues,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.rows()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &Matrix {
        &self.components
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Projects a single vector.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let centred: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok(self.components.row_iter().map(|c| dot(c, &centred)).collect())
    }
}

/// Fits a PCA projection keeping `min(max_components, cols, rows - 1)` axes.
///
/// Uses the `cols × cols` sample covariance (divisor `rows - 1`) when
/// `cols <= rows`, and the `rows × rows` Gram matrix otherwise.
pub fn pca_fit(x: &Matrix, max_components: usize) -> Result<ActivationSpace> {
    let (n, d) = (x.rows(), x.cols());
    if n < 2 {
        return Err(Error::DegenerateInput(format!("PCA needs at least 2 rows, got {n}")));
    }
    if max_components == 0 || d == 0 {
        return Err(Error::InvalidParams("PCA needs at least one component".into()));
    }
    let m = max_components.min(d).min(n - 1);
    let mean = x.column_means();
    let mut centred = x.clone();
    for r in 0..n {
        for (v, mu) in centred.row_mut(r).iter_mut().zip(&mean) {
            *v -= mu;
        }
    }
    let denom = (n - 1) as f64;

    let (eigenvalues, mut components) = if d <= n {
        let mut cov = centred.transpose().matmul(&centred)?;
        cov.as_mut_slice().iter_mut().for_each(|v| *v /= denom);
        let (vals, vecs) = covariance_eigs(&cov)?;
        let top: Vec<usize> = (0..m).collect();
        (vals[..m].to_vec(), vecs.select_rows(&top))
    } else {
        let mut gram = centred.matmul(&centred.transpose())?;
        gram.as_mut_slice().iter_mut().for_each(|v| *v /= denom);
        let (vals, vecs) = covariance_eigs(&gram)?;
        let mut comps = Matrix::zeros(m, d);
        let floor = 1e-12 * vals.first().copied().unwrap_or(0.0).abs().max(f64::MIN_POSITIVE);
        for i in 0..m {
            if vals[i] <= floor {
                continue;
            }
            // v = Xcᵀ u / sqrt((n-1) λ)
            let u = vecs.row(i);
            let scale = 1.0 / (denom * vals[i]).sqrt();
            let row = comps.row_mut(i);
            for (r, &ur) in u.iter().enumerate() {
                if ur == 0.0 {
                    continue;
                }
                for (c, &xv) in row.iter_mut().zip(centred.row(r)) {
                    *c += ur * xv * scale;
                }
            }
        }
        (vals[..m].to_vec(), comps)
    };

    orthonormalize(&mut components);
    for r in 0..components.rows() {
        canonical_sign(components.row_mut(r));
    }
    let eigenvalues = eigenvalues.into_iter().map(|v| v.max(0.0)).collect();
    ActivationSpace::from_parts(mean, components, eigenvalues)
}

/// Modified Gram–Schmidt over the rows; rows that collapse to (near) zero are
/// replaced by the first standard basis vector that is not already spanned.
fn orthonormalize(m: &mut Matrix) {
    let (rows, cols) = (m.rows(), m.cols());
    let mut next_basis = 0usize;
    for i in 0..rows {
        let mut v = m.row(i).to_vec();
        for _ in 0..2 {
            for j in 0..i {
                let proj = dot(&v, m.row(j));
                for (a, b) in v.iter_mut().zip(m.row(j)) {
                    *a -= proj * b;
                }
            }
        }
        let mut norm = dot(&v, &v).sqrt();
        while norm < 1e-6 && next_basis < cols {
            v = vec![0.0; cols];
            v[next_basis] = 1.0;
            next_basis += 1;
            for _ in 0..2 {
                for j in 0..i {
                    let proj = dot(&v, m.row(j));
                    for (a, b) in v.iter_mut().zip(m.row(j)) {
                        *a -= proj * b;
                    }
                }
            }
            norm = dot(&v, &v).sqrt();
        }
        v.iter_mut().for_each(|a| *a /= norm);
        m.row_mut(i).copy_from_slice(&v);
    }
}

/// Projects every row of `x` into `space`: `(x - mean) · componentsᵀ`.
pub fn pca_transform(space: &ActivationSpace, x: &Matrix) -> Result<Matrix> {
    if x.cols() != space.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: space.input_dim(),
            got: x.cols(),
        });
    }
    let mut data = Vec::with_capacity(x.rows() * space.n_components());
    for r in x.row_iter() {
        data.extend(space.project(r)?);
    }
    Matrix::from_vec(x.rows(), space.n_components(), data)
}

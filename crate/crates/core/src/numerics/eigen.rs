use super::Matrix;
use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

/// Full spectral decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and a matrix whose *rows* are the
/// matching unit eigenvectors. Each eigenvector is signed so that its
/// largest-magnitude entry (first such index on ties) is positive.
pub fn covariance_eigs(c: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = c.rows();
    if c.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: c.cols(),
        });
    }
    let asym = c.max_asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }

    // Work on the exactly symmetrized copy.
    let mut a = c.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
    let mut v = Matrix::identity(n);
    let scale = a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();

    for _ in 0..MAX_SWEEPS {
        let off = off_diagonal_norm(&a);
        if off == 0.0 || off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * cs;
                rotate(&mut a, &mut v, p, q, cs, sn);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps index order among equal eigenvalues.
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));

    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (r, &i) in order.iter().enumerate() {
        let row = vectors.row_mut(r);
        for k in 0..n {
            row[k] = v[(k, i)];
        }
        canonical_sign(row);
    }
    Ok((values, vectors))
}

fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize, cs: f64, sn: f64) {
    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = cs * akp - sn * akq;
        a[(k, q)] = sn * akp + cs * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = cs * apk - sn * aqk;
        a[(q, k)] = sn * apk + cs * aqk;
    }
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = cs * vkp - sn * vkq;
        v[(k, q)] = sn * vkp + cs * vkq;
    }
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Flips `v` so its largest-magnitude entry is positive.
pub(crate) fn canonical_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_unit_spectrum() {
        let (vals, vecs) = covariance_eigs(&Matrix::identity(3)).unwrap();
        assert_eq!(vals, vec![1.0, 1.0, 1.0]);
        assert_eq!(vecs, Matrix::identity(3));
    }

    #[test]
    fn diagonal_sorted_descending() {
        let c = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let (vals, vecs) = covariance_eigs(&c).unwrap();
        assert_eq!(vals, vec![3.0, 1.0]);
        assert_eq!(vecs.row(0), &[0.0, 1.0]);
        assert_eq!(vecs.row(1), &[1.0, 0.0]);
    }

    #[test]
    fn rejects_asymmetric() {
        let c = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(covariance_eigs(&c), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn two_by_two_rotation() {
        // [[2,1],[1,2]] has eigenpairs 3:(1,1)/√2 and 1:(1,-1)/√2.
        let c = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let (vals, vecs) = covariance_eigs(&c).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-14 && (vals[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((vecs[(0, 0)] - h).abs() < 1e-14 && (vecs[(0, 1)] - h).abs() < 1e-14);
    }
}

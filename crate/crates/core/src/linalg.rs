//! Small dense helpers that ndarray does not provide without a LAPACK backend.

use ndarray::{Array1, Array2};

use crate::num::Real;

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// columns. Each eigenvector is signed so that its largest-magnitude entry is
/// positive.
pub fn symmetric_eigen<T: Real>(a: &Array2<T>) -> (Array1<T>, Array2<T>) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut m = a.clone();
    let mut v = Array2::<T>::eye(n);
    let scale: T = m.iter().map(|x| *x * *x).sum::<T>().sqrt();
    if scale == T::zero() {
        return (Array1::zeros(n), v);
    }
    let tol = T::epsilon() * scale;
    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off += m[[p, q]] * m[[p, q]];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.abs() <= T::min_positive_value() {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap_or(std::cmp::Ordering::Equal));
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src).to_owned();
        let lead = col
            .iter()
            .copied()
            .fold(T::zero(), |best, x| if x.abs() > best.abs() { x } else { best });
        if lead < T::zero() {
            col.mapv_inplace(|x| -x);
        }
        vectors.column_mut(dst).assign(&col);
    }
    (values, vectors)
}

/// Extends a set of orthonormal columns to a full orthonormal basis of R^n
/// by Gram-Schmidt against the standard basis.
pub fn complete_basis<T: Real>(columns: &[Array1<T>], n: usize) -> Vec<Array1<T>> {
    let mut basis: Vec<Array1<T>> = columns.to_vec();
    for e in 0..n {
        if basis.len() == n {
            break;
        }
        let mut cand = Array1::<T>::zeros(n);
        cand[e] = T::one();
        for _ in 0..2 {
            for b in &basis {
                let proj = cand.dot(b);
                cand.scaled_add(-proj, b);
            }
        }
        let norm = cand.dot(&cand).sqrt();
        if norm > T::lit(1e-6) {
            basis.push(cand / norm);
        }
    }
    basis
}

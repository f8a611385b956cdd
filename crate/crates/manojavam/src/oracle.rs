//! Independent double-precision references: triple-loop matrix product,
//! textbook cyclic Jacobi eigensolver, and a composed PCA.
//!
//! These are the ground truth for every other module's tests. They share no
//! arithmetic code with the simulated datapaths: the eigensolver uses the
//! square-root tangent formulation and in-place 2x2 updates rather than the
//! engine's CORDIC angles and full-matrix products. Performance is a
//! non-goal here.

use crate::matrix::Matrix;

/// Exact-order triple-loop product: the inner sum runs over k ascending.
pub fn oracle_matmul(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
    assert_eq!(a.cols(), b.rows(), "inner dimensions must agree");
    let mut out = Matrix::filled(a.rows(), b.cols(), 0.0);
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut acc = 0.0;
            for k in 0..a.cols() {
                acc += a.get(i, k) * b.get(k, j);
            }
            out.set(i, j, acc);
        }
    }
    out
}

/// Same product accumulated in outer-product order, used to cross-check the
/// primary oracle under a different summation order.
pub fn oracle_matmul_outer(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
    assert_eq!(a.cols(), b.rows(), "inner dimensions must agree");
    let mut out = Matrix::filled(a.rows(), b.cols(), 0.0);
    for k in 0..a.cols() {
        for i in 0..a.rows() {
            let aik = a.get(i, k);
            for j in 0..b.cols() {
                out.set(i, j, out.get(i, j) + aik * b.get(k, j));
            }
        }
    }
    out
}

/// Eigendecomposition result from the reference solver.
#[derive(Clone, Debug)]
pub struct OracleEigen {
    /// Eigenvalues sorted descending.
    pub values: Vec<f64>,
    /// Matching eigenvectors as columns.
    pub vectors: Matrix<f64>,
    /// Off-diagonal Frobenius norm before each sweep and after the last.
    pub e_off_trace: Vec<f64>,
    pub sweeps: usize,
}

fn off_norm(a: &Matrix<f64>) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a.get(i, j) * a.get(i, j);
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigensolver for a symmetric matrix.
///
/// Sweeps row-wise over all (p, q) pairs until the off-diagonal norm falls
/// to `tol` or the sweep budget runs out. Rotations use the stable
/// square-root tangent form and update rows/columns in place.
pub fn oracle_jacobi(c: &Matrix<f64>, max_sweeps: usize, tol: f64) -> OracleEigen {
    assert_eq!(c.rows(), c.cols(), "matrix must be square");
    let n = c.rows();
    let mut a = c.clone();
    let mut v = Matrix::identity_like(n, 1.0f64);
    let mut trace = vec![off_norm(&a)];
    let mut sweeps = 0;

    while sweeps < max_sweeps {
        if *trace.last().unwrap() <= tol {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let tau = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * cs;

                let app = a.get(p, p);
                let aqq = a.get(q, q);
                for j in 0..n {
                    if j == p || j == q {
                        continue;
                    }
                    let ajp = a.get(j, p);
                    let ajq = a.get(j, q);
                    a.set(j, p, cs * ajp - sn * ajq);
                    a.set(p, j, cs * ajp - sn * ajq);
                    a.set(j, q, sn * ajp + cs * ajq);
                    a.set(q, j, sn * ajp + cs * ajq);
                }
                a.set(p, p, app - t * apq);
                a.set(q, q, aqq + t * apq);
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);

                for j in 0..n {
                    let vjp = v.get(j, p);
                    let vjq = v.get(j, q);
                    v.set(j, p, cs * vjp - sn * vjq);
                    v.set(j, q, sn * vjp + cs * vjq);
                }
            }
        }
        sweeps += 1;
        trace.push(off_norm(&a));
    }

    let mut values: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    let mut vectors = v;
    sort_eigenpairs_desc(&mut values, &mut vectors);
    OracleEigen { values, vectors, e_off_trace: trace, sweeps }
}

/// Descending eigenvalue order with the matching column permutation, plus
/// the sign convention that each column's first nonzero entry is positive.
fn sort_eigenpairs_desc(values: &mut [f64], vectors: &mut Matrix<f64>) {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let old_vals = values.to_vec();
    let old_vecs = vectors.clone();
    for (new_col, &old_col) in order.iter().enumerate() {
        values[new_col] = old_vals[old_col];
        let flip = (0..n)
            .map(|r| old_vecs.get(r, old_col))
            .find(|x| *x != 0.0)
            .is_some_and(|x| x < 0.0);
        for r in 0..n {
            let x = old_vecs.get(r, old_col);
            vectors.set(r, new_col, if flip { -x } else { x });
        }
    }
}

/// PCA reference on a preprocessed (standardized or pre-centered) matrix.
#[derive(Clone, Debug)]
pub struct OraclePca {
    pub eigenvalues: Vec<f64>,
    pub components: Matrix<f64>,
    pub projected: Matrix<f64>,
}

/// Composition of the references above: C = XᵀX, eigendecompose, project
/// onto the top `k` components.
pub fn oracle_pca(x: &Matrix<f64>, k: usize) -> OraclePca {
    assert!(k >= 1 && k <= x.cols(), "component count out of range");
    let c = oracle_matmul(&x.transpose(), x);
    let eig = oracle_jacobi(&c, 100, 1e-12 * off_norm(&c).max(1.0));
    let n = x.cols();
    let mut vk = Matrix::filled(n, k, 0.0);
    for r in 0..n {
        for col in 0..k {
            vk.set(r, col, eig.vectors.get(r, col));
        }
    }
    let projected = oracle_matmul(x, &vk);
    OraclePca { eigenvalues: eig.values, components: vk, projected }
}

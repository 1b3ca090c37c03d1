//! Small dense kernels: Cholesky inversion of Gram blocks and orthonormal
//! frames for affine subspaces.  Blocks here are at most `d x d` with `d`
//! around a dozen, so everything is plain row-major `Vec<f64>`.

use nalgebra::{DMatrix, DVector};

/// Relative pivot threshold below which a Cholesky factorization is
/// declared singular.
const PIVOT_EPS: f64 = 1e-14;

/// Inverse, determinant and 1-norm condition number of a symmetric
/// positive definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdInverse {
    pub dim: usize,
    /// Row-major `dim x dim`.
    pub inverse: Vec<f64>,
    pub det: f64,
    pub cond: f64,
}

/// Factor `m` (row-major, `k x k`, symmetric) as `L L^T` and invert it.
///
/// Returns `None` if a pivot is non-positive or negligible relative to the
/// corresponding diagonal entry.
// The pivot test is negated so that a NaN pivot also counts as singular.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn spd_inverse(m: &[f64], k: usize) -> Option<SpdInverse> {
    debug_assert_eq!(m.len(), k * k);
    if k == 0 {
        return Some(SpdInverse {
            dim: 0,
            inverse: Vec::new(),
            det: 1.0,
            cond: 1.0,
        });
    }
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = m[i * k + j];
            for p in 0..j {
                s -= l[i * k + p] * l[j * k + p];
            }
            if i == j {
                if !(s > PIVOT_EPS * m[i * k + i].abs()) {
                    return None;
                }
                l[i * k + i] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    let det = (0..k).map(|i| l[i * k + i] * l[i * k + i]).product();

    // L^{-1} by forward substitution, column by column.
    let mut linv = vec![0.0; k * k];
    for c in 0..k {
        linv[c * k + c] = 1.0 / l[c * k + c];
        for i in c + 1..k {
            let mut s = 0.0;
            for p in c..i {
                s -= l[i * k + p] * linv[p * k + c];
            }
            linv[i * k + c] = s / l[i * k + i];
        }
    }
    // m^{-1} = L^{-T} L^{-1}
    let mut inverse = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = 0.0;
            for p in i..k {
                s += linv[p * k + i] * linv[p * k + j];
            }
            inverse[i * k + j] = s;
            inverse[j * k + i] = s;
        }
    }
    let cond = one_norm(m, k) * one_norm(&inverse, k);
    Some(SpdInverse {
        dim: k,
        inverse,
        det,
        cond,
    })
}

fn one_norm(m: &[f64], k: usize) -> f64 {
    (0..k)
        .map(|c| (0..k).map(|r| m[r * k + c].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Gram-Schmidt over `vectors` (two passes for stability), keeping only those
/// whose residual norm exceeds `tol` relative to their original norm.
/// Returns the kept orthonormal vectors and the indices of the inputs that
/// produced them.
pub fn orthonormalize(vectors: &[DVector<f64>], tol: f64) -> (Vec<DVector<f64>>, Vec<usize>) {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut picked = Vec::new();
    for (idx, v) in vectors.iter().enumerate() {
        let norm0 = v.norm();
        if norm0 == 0.0 {
            continue;
        }
        let mut w = v / norm0;
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&w);
                w.axpy(-c, q, 1.0);
            }
        }
        let r = w.norm();
        if r > tol {
            basis.push(w / r);
            picked.push(idx);
        }
    }
    (basis, picked)
}

/// Orthonormal basis of the orthogonal complement of `span(range)` in `R^d`,
/// returned as the columns of a `d x m` matrix.
pub fn orthogonal_complement(range: &[DVector<f64>], d: usize, tol: f64) -> DMatrix<f64> {
    let (range_basis, _) = orthonormalize(range, tol);
    let mut all = range_basis.clone();
    let mut complement = Vec::new();
    for i in 0..d {
        let mut w = DVector::zeros(d);
        w[i] = 1.0;
        for _ in 0..2 {
            for q in &all {
                let c = q.dot(&w);
                w.axpy(-c, q, 1.0);
            }
        }
        let r = w.norm();
        if r > 1e-8 {
            let q = w / r;
            all.push(q.clone());
            complement.push(q);
        }
        if all.len() == d {
            break;
        }
    }
    let mut out = DMatrix::zeros(d, complement.len());
    for (c, q) in complement.iter().enumerate() {
        out.set_column(c, q);
    }
    out
}

/// Smallest singular value of the matrix whose columns are `cols`, each
/// column scaled to unit length first.
pub fn min_singular_value_normalized(cols: &[DVector<f64>]) -> f64 {
    if cols.is_empty() {
        return f64::INFINITY;
    }
    let d = cols[0].len();
    if cols.len() > d {
        return 0.0;
    }
    let mut m = DMatrix::zeros(d, cols.len());
    for (c, v) in cols.iter().enumerate() {
        m.set_column(c, &(v / v.norm()));
    }
    m.singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

//! Signed-sum identities over the face complex: the indicator of `P` (and of
//! each face, restricted to its hyperplane) equals a sum over `F` of products
//! of `H(f_j) - 1`.  Used as executable ground truth in tests.

use crate::error::{HgmError, Result};
use crate::geometry::{FaceComplex, HalfspaceSystem, IndexSet};

/// Heaviside step with `H(0) = 1`.
pub fn heaviside(x: f64) -> i64 {
    i64::from(x >= 0.0)
}

/// Residual allowed when checking that a point lies on `V(J)`.
pub const HYPERPLANE_TOL: f64 = 1e-8;

pub fn indicator(sys: &HalfspaceSystem, x: &[f64]) -> i64 {
    i64::from((0..sys.len()).all(|j| sys.eval(j, x) >= 0.0))
}

/// Indices `j` not in `skip` with `f_j(x) < 0`.
fn violated(sys: &HalfspaceSystem, x: &[f64], skip: IndexSet) -> IndexSet {
    (0..sys.len())
        .filter(|&j| !skip.contains(j) && heaviside(sys.eval(j, x)) == 0)
        .collect()
}

fn parity(k: usize) -> i64 {
    if k.is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// `sum_{J in F} prod_{j in J} (H(f_j(x)) - 1)`.
///
/// A term survives only if every `j` in `J` is violated, in which case it
/// contributes `(-1)^|J|`.
pub fn ie_sum(sys: &HalfspaceSystem, fc: &FaceComplex, x: &[f64]) -> i64 {
    let neg = violated(sys, x, IndexSet::EMPTY);
    fc.members()
        .iter()
        .filter(|s| s.is_subset(neg))
        .map(|s| parity(s.len()))
        .sum()
}

/// `sum_{F in F_J} prod_{j in F \ J} (H(f_j(x)) - 1)` for `x` on `V(J)`.
pub fn face_ie_sum(
    sys: &HalfspaceSystem,
    fc: &FaceComplex,
    set: IndexSet,
    x: &[f64],
) -> Result<i64> {
    let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    for j in set.iter() {
        let f = sys.eval(j, x);
        let scale = 1.0 + sys.b()[j].abs() + sys.a().column(j).norm() * xnorm;
        if f.abs() > HYPERPLANE_TOL * scale {
            return Err(HgmError::NotOnHyperplane { set, residual: f });
        }
    }
    let neg = violated(sys, x, set);
    Ok(fc
        .supersets(set)
        .filter(|f| f.difference(set).is_subset(neg))
        .map(|f| parity(f.len() - set.len()))
        .sum())
}

/// `prod_{j not in J} H(f_j(x))`.
pub fn face_indicator(sys: &HalfspaceSystem, set: IndexSet, x: &[f64]) -> i64 {
    i64::from(violated(sys, x, set).is_empty())
}

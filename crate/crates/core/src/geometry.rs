//! Half-space systems `P = {x : a_j.x + b_j >= 0}`, their face complexes and
//! general-position diagnostics.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HgmError, Result};
use crate::linalg;
use crate::lp;

/// Slack tolerance used when deciding LP feasibility of a face.
pub const DEFAULT_FEAS_TOL: f64 = 1e-9;
/// Singular-value threshold for rank tests on normal vectors.
pub const DEFAULT_RANK_TOL: f64 = 1e-7;

/// A subset of the half-space indices `0..n`, `n <= 64`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct IndexSet(u64);

impl IndexSet {
    pub const EMPTY: IndexSet = IndexSet(0);

    pub fn from_bits(bits: u64) -> Self {
        IndexSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn singleton(j: usize) -> Self {
        IndexSet(1 << j)
    }

    pub fn contains(self, j: usize) -> bool {
        j < 64 && self.0 & (1 << j) != 0
    }

    pub fn with(self, j: usize) -> Self {
        IndexSet(self.0 | (1 << j))
    }

    pub fn without(self, j: usize) -> Self {
        IndexSet(self.0 & !(1 << j))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: IndexSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn difference(self, other: IndexSet) -> IndexSet {
        IndexSet(self.0 & !other.0)
    }

    /// Position of `j` among the members of `self` (requires `j` in `self`).
    pub fn rank_of(self, j: usize) -> usize {
        (self.0 & ((1u64 << j) - 1)).count_ones() as usize
    }

    pub fn max(self) -> Option<usize> {
        (self.0 != 0).then(|| 63 - self.0.leading_zeros() as usize)
    }

    /// Members in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            (bits != 0).then(|| {
                let j = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                j
            })
        })
    }

    /// Canonical order: by cardinality, then lexicographically on the
    /// ascending member lists.
    pub fn canonical_cmp(&self, other: &IndexSet) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.iter().cmp(other.iter()))
    }
}

impl FromIterator<usize> for IndexSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        iter.into_iter().fold(IndexSet::EMPTY, |s, j| s.with(j))
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, j) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{j}")?;
        }
        write!(f, "}}")
    }
}

impl fmt::Debug for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// `P = {x in R^d : a_j.x + b_j >= 0, j = 0..n}` with the normals `a_j` stored
/// as the columns of a `d x n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfspaceSystem {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl HalfspaceSystem {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let (d, n) = a.shape();
        if d == 0 || n == 0 {
            return Err(HgmError::DimensionMismatch(format!(
                "empty normal matrix {d}x{n}"
            )));
        }
        if b.len() != n {
            return Err(HgmError::DimensionMismatch(format!(
                "normal matrix has {n} columns but offset vector has {} entries",
                b.len()
            )));
        }
        if n > 64 {
            return Err(HgmError::TooManyHalfspaces(n));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(HgmError::NonFiniteEntry);
        }
        if let Some(j) = (0..n).find(|&j| a.column(j).iter().all(|&v| v == 0.0)) {
            return Err(HgmError::ZeroNormal(j));
        }
        Ok(Self { a, b })
    }

    /// Build from `d` rows of `n` entries each.
    pub fn from_rows(rows: &[Vec<f64>], b: &[f64]) -> Result<Self> {
        let d = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(HgmError::DimensionMismatch("ragged normal matrix".into()));
        }
        let a = DMatrix::from_fn(d, n, |i, j| rows[i][j]);
        Self::new(a, DVector::from_column_slice(b))
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn len(&self) -> usize {
        self.a.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn normal(&self, j: usize) -> DVector<f64> {
        self.a.column(j).into_owned()
    }

    /// `f_j(x) = a_j.x + b_j`
    pub fn eval(&self, j: usize, x: &[f64]) -> f64 {
        self.a
            .column(j)
            .iter()
            .zip(x)
            .map(|(a, x)| a * x)
            .sum::<f64>()
            + self.b[j]
    }

    pub fn eval_all(&self, x: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|j| self.eval(j, x)).collect()
    }

    /// Same normals, offsets replaced.
    pub fn with_offsets(&self, b: DVector<f64>) -> Result<Self> {
        Self::new(self.a.clone(), b)
    }

    /// Apply an orthogonal change of coordinates `x -> R x` to the normals.
    pub fn rotated(&self, r: &DMatrix<f64>) -> Result<Self> {
        Self::new(r * &self.a, self.b.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SystemDoc::from(self)).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SystemDoc =
            serde_json::from_str(text).map_err(|e| HgmError::Parse(e.to_string()))?;
        doc.into_system()
    }

    /// One line per half-space: `a_0j, ..., a_(d-1)j, b_j`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        for j in 0..self.len() {
            let mut rec: Vec<String> = self.a.column(j).iter().map(|v| format!("{v:?}")).collect();
            rec.push(format!("{:?}", self.b[j]));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| HgmError::Parse(e.to_string()))?;
            let vals = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| HgmError::Parse(format!("{s:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if vals.len() < 2 {
                return Err(HgmError::Parse(
                    "each row needs at least d + 1 = 2 fields".into(),
                ));
            }
            cols.push(vals);
        }
        if cols.is_empty() {
            return Err(HgmError::Parse("no constraints".into()));
        }
        let width = cols[0].len();
        if cols.iter().any(|c| c.len() != width) {
            return Err(HgmError::Parse("rows have different lengths".into()));
        }
        let d = width - 1;
        let a = DMatrix::from_fn(d, cols.len(), |i, j| cols[j][i]);
        let b = DVector::from_iterator(cols.len(), cols.iter().map(|c| c[d]));
        Self::new(a, b)
    }
}

/// JSON layout of a half-space system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemDoc {
    pub d: usize,
    pub n: usize,
    /// `d` rows of `n` entries.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl From<&HalfspaceSystem> for SystemDoc {
    fn from(sys: &HalfspaceSystem) -> Self {
        SystemDoc {
            d: sys.dim(),
            n: sys.len(),
            a: sys
                .a
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            b: sys.b.iter().copied().collect(),
        }
    }
}

impl SystemDoc {
    pub fn into_system(self) -> Result<HalfspaceSystem> {
        if self.a.len() != self.d || self.b.len() != self.n {
            return Err(HgmError::DimensionMismatch(format!(
                "declared d={}, n={} but a has {} rows and b has {} entries",
                self.d,
                self.n,
                self.a.len(),
                self.b.len()
            )));
        }
        HalfspaceSystem::from_rows(&self.a, &self.b)
    }
}

/// The abstract simplicial complex of index sets with nonempty faces, in
/// canonical order.  Position 0 is always the empty set.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceComplex {
    d: usize,
    n: usize,
    members: Vec<IndexSet>,
    index_of: HashMap<IndexSet, usize>,
}

impl FaceComplex {
    /// Sorts `sets` canonically, removes duplicates and inserts the empty set.
    pub fn from_sets(d: usize, n: usize, sets: impl IntoIterator<Item = IndexSet>) -> Self {
        let mut members: Vec<IndexSet> = sets.into_iter().collect();
        members.push(IndexSet::EMPTY);
        members.sort_by(IndexSet::canonical_cmp);
        members.dedup();
        let index_of = members.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        Self {
            d,
            n,
            members,
            index_of,
        }
    }

    /// Face complex of a `d`-simplex: every subset of `0..=d` except the full set.
    pub fn simplex(d: usize) -> Self {
        let n = d + 1;
        let full = (1u64 << n) - 1;
        Self::from_sets(d, n, (0..full).map(IndexSet))
    }

    /// Face complex of a simplicial cone: the full power set of `0..d`.
    pub fn cone(d: usize) -> Self {
        Self::from_sets(d, d, (0..1u64 << d).map(IndexSet))
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn num_halfspaces(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[IndexSet] {
        &self.members
    }

    pub fn index_of(&self, set: IndexSet) -> Option<usize> {
        self.index_of.get(&set).copied()
    }

    pub fn contains(&self, set: IndexSet) -> bool {
        self.index_of.contains_key(&set)
    }

    /// `F_J`: members containing `j_set`.
    pub fn supersets(&self, j_set: IndexSet) -> impl Iterator<Item = IndexSet> + '_ {
        self.members
            .iter()
            .copied()
            .filter(move |f| j_set.is_subset(*f))
    }

    pub fn is_downward_closed(&self) -> bool {
        self.members
            .iter()
            .all(|s| s.iter().all(|j| self.contains(s.without(j))))
    }
}

/// Base point and orthonormal tangent frame of `V(J) = {x : f_j(x) = 0, j in J}`.
#[derive(Debug, Clone)]
pub struct AffineFrame {
    pub origin: DVector<f64>,
    /// `d x (d - rank)` orthonormal columns.
    pub tangent: DMatrix<f64>,
}

fn gram_block(sys: &HalfspaceSystem, set: IndexSet) -> Vec<f64> {
    let idx: Vec<usize> = set.iter().collect();
    let k = idx.len();
    let mut m = vec![0.0; k * k];
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            m[r * k + c] = sys.a.column(i).dot(&sys.a.column(j));
        }
    }
    m
}

/// Minimum-norm point of `V(J)`: `x0 = -A_J alpha_J^{-1} b_J`.
pub fn min_norm_point(sys: &HalfspaceSystem, set: IndexSet) -> Result<DVector<f64>> {
    let d = sys.dim();
    if set.is_empty() {
        return Ok(DVector::zeros(d));
    }
    if let Some(j) = set.max().filter(|&j| j >= sys.len()) {
        return Err(HgmError::IndexOutOfRange {
            index: j,
            n: sys.len(),
        });
    }
    let k = set.len();
    let inv = linalg::spd_inverse(&gram_block(sys, set), k).ok_or(HgmError::SingularGram(set))?;
    let idx: Vec<usize> = set.iter().collect();
    let mut x = DVector::zeros(d);
    for (r, &i) in idx.iter().enumerate() {
        let coef: f64 = idx
            .iter()
            .enumerate()
            .map(|(c, &j)| inv.inverse[r * k + c] * sys.b[j])
            .sum();
        x.axpy(-coef, &sys.a.column(i), 1.0);
    }
    Ok(x)
}

/// Frame of `V(J)` for linearly independent normals.
pub fn affine_frame(sys: &HalfspaceSystem, set: IndexSet) -> Result<AffineFrame> {
    let origin = min_norm_point(sys, set)?;
    let normals: Vec<DVector<f64>> = set.iter().map(|j| sys.normal(j)).collect();
    let tangent = linalg::orthogonal_complement(&normals, sys.dim(), 1e-10);
    Ok(AffineFrame { origin, tangent })
}

/// Frame of `V(J)` tolerating dependent normals.  Returns `None` if the
/// equalities are inconsistent (relative residual above `tol`).
fn consistent_frame(sys: &HalfspaceSystem, set: IndexSet, tol: f64) -> Option<AffineFrame> {
    let idx: Vec<usize> = set.iter().collect();
    let normals: Vec<DVector<f64>> = idx.iter().map(|&j| sys.normal(j)).collect();
    let (_, picked) = linalg::orthonormalize(&normals, DEFAULT_RANK_TOL);
    let base: IndexSet = picked.iter().map(|&p| idx[p]).collect();
    let frame = affine_frame(sys, base).ok()?;
    let x0 = frame.origin.as_slice();
    for &j in &idx {
        if !base.contains(j) && sys.eval(j, x0).abs() > tol * sys.a.column(j).norm().max(1.0) {
            return None;
        }
    }
    Some(frame)
}

/// Is `{x : f_j(x) = 0 (j in J), f_k(x) >= 0 (k not in J)}` nonempty?
pub fn face_feasible(sys: &HalfspaceSystem, set: IndexSet, tol: f64) -> Result<bool> {
    let Some(frame) = consistent_frame(sys, set, tol) else {
        return Ok(false);
    };
    let x0 = frame.origin.as_slice();
    let mut rows = Vec::new();
    let mut offsets = Vec::new();
    for k in (0..sys.len()).filter(|&k| !set.contains(k)) {
        let ak = sys.a.column(k);
        let scale = ak.norm();
        let row: Vec<f64> = (0..frame.tangent.ncols())
            .map(|c| frame.tangent.column(c).dot(&ak) / scale)
            .collect();
        rows.push(row);
        offsets.push(sys.eval(k, x0) / scale);
    }
    lp::inequalities_feasible(&rows, &offsets, tol)
}

/// All feasible index sets with at most `max_card` members, in canonical
/// order, found by extending feasible sets one index at a time.
pub fn enumerate_faces(sys: &HalfspaceSystem, tol: f64, max_card: usize) -> Result<Vec<IndexSet>> {
    let n = sys.len();
    if !face_feasible(sys, IndexSet::EMPTY, tol)? {
        return Ok(Vec::new());
    }
    let mut all = vec![IndexSet::EMPTY];
    let mut level = vec![IndexSet::EMPTY];
    let mut found: std::collections::HashSet<IndexSet> = [IndexSet::EMPTY].into_iter().collect();
    for _ in 0..max_card {
        let candidates: Vec<IndexSet> = level
            .iter()
            .flat_map(|s| {
                let start = s.max().map_or(0, |m| m + 1);
                (start..n).map(move |j| s.with(j))
            })
            .filter(|c| c.iter().all(|j| found.contains(&c.without(j))))
            .collect();
        let verdicts: Vec<Result<bool>> = candidates
            .par_iter()
            .map(|c| face_feasible(sys, *c, tol))
            .collect();
        let mut next = Vec::new();
        for (c, v) in candidates.into_iter().zip(verdicts) {
            if v? {
                next.push(c);
            }
        }
        if next.is_empty() {
            break;
        }
        found.extend(next.iter().copied());
        all.extend(next.iter().copied());
        level = next;
    }
    Ok(all)
}

/// Face complex decided by LP feasibility, capped at cardinality `d`.
pub fn face_complex_lp(sys: &HalfspaceSystem, tol: f64) -> Result<FaceComplex> {
    let sets = enumerate_faces(sys, tol, sys.dim())?;
    Ok(FaceComplex::from_sets(sys.dim(), sys.len(), sets))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralPositionReport {
    /// Members whose normals are (numerically) dependent.
    pub dependent: Vec<IndexSet>,
    /// Feasible sets of more than `d` facets.
    pub overfull: Vec<IndexSet>,
}

impl GeneralPositionReport {
    pub fn passed(&self) -> bool {
        self.dependent.is_empty() && self.overfull.is_empty()
    }

    pub fn offenders(&self) -> Vec<IndexSet> {
        self.dependent
            .iter()
            .chain(&self.overfull)
            .copied()
            .collect()
    }
}

/// Practical general-position proxy: independent normals on every face and
/// no point where more than `d` facets meet.
pub fn general_position_check(
    sys: &HalfspaceSystem,
    fc: &FaceComplex,
    feas_tol: f64,
    rank_tol: f64,
) -> Result<GeneralPositionReport> {
    let d = sys.dim();
    let dependent = fc
        .members()
        .par_iter()
        .filter(|s| !s.is_empty())
        .filter(|s| {
            let cols: Vec<DVector<f64>> = s.iter().map(|j| sys.normal(j)).collect();
            linalg::min_singular_value_normalized(&cols) <= rank_tol
        })
        .copied()
        .collect();
    // Any feasible set of size > d contains a feasible set of size d + 1.
    let top: Vec<IndexSet> = fc
        .members()
        .iter()
        .copied()
        .filter(|s| s.len() == d)
        .collect();
    let mut candidates: Vec<IndexSet> = top
        .iter()
        .flat_map(|s| {
            (0..sys.len())
                .filter(move |&j| !s.contains(j))
                .map(move |j| s.with(j))
        })
        .filter(|c| c.iter().all(|j| fc.contains(c.without(j))))
        .collect();
    candidates.sort_by(IndexSet::canonical_cmp);
    candidates.dedup();
    let verdicts: Vec<Result<bool>> = candidates
        .par_iter()
        .map(|c| face_feasible(sys, *c, feas_tol))
        .collect();
    let mut overfull = Vec::new();
    for (c, v) in candidates.into_iter().zip(verdicts) {
        if v? {
            overfull.push(c);
        }
    }
    Ok(GeneralPositionReport {
        dependent,
        overfull,
    })
}

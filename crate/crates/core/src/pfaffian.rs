//! The Pfaffian connection acting on the state vector `g = (g^J)_{J in F}`.
//!
//! For `j` not in `J`:  `d/db_j g^J = g^{J+j}` (zero when `J+j` is not a face).
//! For `j` in `J`:      `d/db_j g^J = -sum_{k in J} alpha_J^{jk} (b_k g^J
//!                                     + sum_{l not in J} alpha_{kl} g^{J+l})`.
//! Derivatives in `a_ij` follow from `d/da_ij g = sum_k a_ik d/db_k d/db_j g`.
//!
//! The state is kept in the unnormalized scale `(2 pi)^{d/2} g`, which leaves
//! the (linear) connection unchanged.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{HgmError, Result};
use crate::geometry::{FaceComplex, IndexSet};
use crate::linalg;

/// Gram blocks `alpha_F(a)` of every face together with their inverses.
#[derive(Debug, Clone)]
pub struct GramCache {
    a: DMatrix<f64>,
    n: usize,
    gram: Vec<f64>,
    members: Vec<IndexSet>,
    offsets: Vec<usize>,
    inverses: Vec<f64>,
    dets: Vec<f64>,
    conds: Vec<f64>,
}

impl GramCache {
    pub fn new(a: &DMatrix<f64>, fc: &FaceComplex) -> Result<Self> {
        let n = a.ncols();
        let mut gram = vec![0.0; n * n];
        for k in 0..n {
            for l in k..n {
                let v = a.column(k).dot(&a.column(l));
                gram[k * n + l] = v;
                gram[l * n + k] = v;
            }
        }
        let members = fc.members().to_vec();
        let mut offsets = Vec::with_capacity(members.len());
        let mut inverses = Vec::new();
        let mut dets = Vec::with_capacity(members.len());
        let mut conds = Vec::with_capacity(members.len());
        for &f in &members {
            if let Some(j) = f.max().filter(|&j| j >= n) {
                return Err(HgmError::IndexOutOfRange { index: j, n });
            }
            let idx: Vec<usize> = f.iter().collect();
            let k = idx.len();
            let mut block = vec![0.0; k * k];
            for (r, &i) in idx.iter().enumerate() {
                for (c, &j) in idx.iter().enumerate() {
                    block[r * k + c] = gram[i * n + j];
                }
            }
            let inv = linalg::spd_inverse(&block, k).ok_or(HgmError::SingularGram(f))?;
            offsets.push(inverses.len());
            inverses.extend_from_slice(&inv.inverse);
            dets.push(inv.det);
            conds.push(inv.cond);
        }
        Ok(Self {
            a: a.clone(),
            n,
            gram,
            members,
            offsets,
            inverses,
            dets,
            conds,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn num_halfspaces(&self) -> usize {
        self.n
    }

    /// `alpha_{kl}(a) = a_k . a_l`
    pub fn gram(&self, k: usize, l: usize) -> f64 {
        self.gram[k * self.n + l]
    }

    /// `alpha_F^{jk}` for the face at position `pos`, `j, k` in `F`.
    pub fn inverse_entry(&self, pos: usize, j: usize, k: usize) -> f64 {
        let f = self.members[pos];
        let size = f.len();
        self.inverses[self.offsets[pos] + f.rank_of(j) * size + f.rank_of(k)]
    }

    pub fn det(&self, pos: usize) -> f64 {
        self.dets[pos]
    }

    pub fn cond(&self, pos: usize) -> f64 {
        self.conds[pos]
    }

    pub fn max_cond(&self) -> f64 {
        self.conds.iter().copied().fold(1.0, f64::max)
    }

    pub fn block(&self, pos: usize) -> DMatrix<f64> {
        let idx: Vec<usize> = self.members[pos].iter().collect();
        DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.gram(idx[r], idx[c]))
    }

    pub fn inverse_block(&self, pos: usize) -> DMatrix<f64> {
        let k = self.members[pos].len();
        DMatrix::from_row_slice(
            k,
            k,
            &self.inverses[self.offsets[pos]..self.offsets[pos] + k * k],
        )
    }
}

/// State vector in face-complex order, unnormalized: entry `J` holds
/// `(2 pi)^{d/2} g^J`.
#[derive(Debug, Clone, PartialEq)]
pub struct GVector {
    pub values: Vec<f64>,
}

impl GVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `g^{empty} / (2 pi)^{d/2}`
    pub fn probability(&self, d: usize) -> f64 {
        self.values[0] / normalizer(d)
    }
}

/// `(2 pi)^{d/2}`
pub fn normalizer(d: usize) -> f64 {
    (2.0 * std::f64::consts::PI).powf(d as f64 / 2.0)
}

/// Square sparse matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let dim = rows.len();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: vec![0; dim + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        Self::from_rows(
            diag.iter()
                .enumerate()
                .map(|(i, &v)| if v != 0.0 { vec![(i, v)] } else { Vec::new() })
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).filter(|&(cc, _)| cc == c).map(|(_, v)| v).sum()
    }

    /// `out += scale * self * x`
    pub fn mul_vec_add(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.dim) {
            let mut s = 0.0;
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[p] * x[self.cols[p]];
            }
            *o += scale * s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.mul_vec_add(x, 1.0, &mut out);
        out
    }

    /// `self * other`
    pub fn matmul(&self, other: &SparseMatrix) -> SparseMatrix {
        let mut acc = vec![0.0; self.dim];
        let mut seen = vec![false; self.dim];
        let mut rows = Vec::with_capacity(self.dim);
        for r in 0..self.dim {
            let mut touched = Vec::new();
            for (c, v) in self.row(r) {
                for (c2, v2) in other.row(c) {
                    if !seen[c2] {
                        seen[c2] = true;
                        touched.push(c2);
                    }
                    acc[c2] += v * v2;
                }
            }
            let row = touched
                .into_iter()
                .map(|c| {
                    seen[c] = false;
                    (c, std::mem::take(&mut acc[c]))
                })
                .collect();
            rows.push(row);
        }
        SparseMatrix::from_rows(rows)
    }

    /// `self + scale * other`
    pub fn add_scaled(&self, other: &SparseMatrix, scale: f64) -> SparseMatrix {
        let rows = (0..self.dim)
            .map(|r| {
                let mut row: Vec<(usize, f64)> = self.row(r).collect();
                for (c, v) in other.row(r) {
                    match row.iter_mut().find(|e| e.0 == c) {
                        Some(e) => e.1 += scale * v,
                        None => row.push((c, scale * v)),
                    }
                }
                row
            })
            .collect();
        SparseMatrix::from_rows(rows)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// Coordinate-format dump, one `row-set<TAB>col-set<TAB>value` line per
    /// stored entry.
    pub fn to_coordinate_text(&self, fc: &FaceComplex) -> String {
        let mut s = String::new();
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                let _ = writeln!(s, "{}\t{}\t{:.17e}", fc.members()[r], fc.members()[c], v);
            }
        }
        s
    }
}

/// The matrices `B_j(a, b)` of the connection for one parameter point.
///
/// `B_j` is assembled once per normal matrix `a`; only its diagonal entries
/// depend on `b` and are refreshed by [`PfaffianOperator::set_offsets`].
#[derive(Debug, Clone)]
pub struct PfaffianOperator {
    cache: GramCache,
    members: Vec<IndexSet>,
    b: Vec<f64>,
    b_mats: Vec<SparseMatrix>,
    /// Per `j`: (position in `b_mats[j].vals`, row) of the `b`-dependent entries.
    diag_slots: Vec<Vec<(usize, usize)>>,
}

impl PfaffianOperator {
    pub fn new(cache: GramCache, fc: &FaceComplex, b: &[f64]) -> Result<Self> {
        let n = cache.num_halfspaces();
        if b.len() != n || fc.num_halfspaces() != n {
            return Err(HgmError::DimensionMismatch(format!(
                "operator for {n} half-spaces given {} offsets",
                b.len()
            )));
        }
        let members = fc.members().to_vec();
        let mut b_mats = Vec::with_capacity(n);
        let mut diag_slots = Vec::with_capacity(n);
        for j in 0..n {
            let mut rows = Vec::with_capacity(members.len());
            for (pos, &set) in members.iter().enumerate() {
                let mut row = Vec::new();
                if !set.contains(j) {
                    if let Some(c) = fc.index_of(set.with(j)) {
                        row.push((c, 1.0));
                    }
                } else {
                    row.push((pos, 0.0));
                    for l in (0..n).filter(|&l| !set.contains(l)) {
                        if let Some(c) = fc.index_of(set.with(l)) {
                            let coef: f64 = set
                                .iter()
                                .map(|k| cache.inverse_entry(pos, j, k) * cache.gram(k, l))
                                .sum();
                            row.push((c, -coef));
                        }
                    }
                }
                rows.push(row);
            }
            let m = SparseMatrix::from_rows(rows);
            let slots = (0..members.len())
                .filter(|&pos| members[pos].contains(j))
                .map(|pos| {
                    let p = (m.row_ptr[pos]..m.row_ptr[pos + 1])
                        .find(|&p| m.cols[p] == pos)
                        .expect("diagonal slot");
                    (p, pos)
                })
                .collect();
            b_mats.push(m);
            diag_slots.push(slots);
        }
        let mut op = Self {
            cache,
            members,
            b: vec![0.0; n],
            b_mats,
            diag_slots,
        };
        op.set_offsets(b);
        Ok(op)
    }

    /// Refresh the `b`-dependent diagonal `-sum_{k in J} alpha_J^{jk} b_k`.
    pub fn set_offsets(&mut self, b: &[f64]) {
        self.b.copy_from_slice(b);
        for (j, slots) in self.diag_slots.iter().enumerate() {
            let m = &mut self.b_mats[j];
            for &(p, pos) in slots {
                let set = self.members[pos];
                m.vals[p] = -set
                    .iter()
                    .map(|k| self.cache.inverse_entry(pos, j, k) * b[k])
                    .sum::<f64>();
            }
        }
    }

    pub fn cache(&self) -> &GramCache {
        &self.cache
    }

    pub fn dim(&self) -> usize {
        self.members.len()
    }

    pub fn num_halfspaces(&self) -> usize {
        self.b_mats.len()
    }

    pub fn b_matrix(&self, j: usize) -> Result<&SparseMatrix> {
        self.b_mats.get(j).ok_or(HgmError::IndexOutOfRange {
            index: j,
            n: self.b_mats.len(),
        })
    }

    /// Diagonal of `dB_j/db_k`: `-alpha_J^{jk}` on rows with `j, k` in `J`.
    fn b_derivative_diag(&self, j: usize, k: usize) -> Vec<f64> {
        self.members
            .iter()
            .enumerate()
            .map(|(pos, s)| {
                if s.contains(j) && s.contains(k) {
                    -self.cache.inverse_entry(pos, j, k)
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn b_derivative(&self, j: usize, k: usize) -> Result<SparseMatrix> {
        self.check_index(j)?;
        self.check_index(k)?;
        Ok(SparseMatrix::diagonal(&self.b_derivative_diag(j, k)))
    }

    /// `M_kj = dB_j/db_k + B_j B_k`, so that `d/db_k d/db_j g = M_kj g`.
    pub fn second_derivative(&self, k: usize, j: usize) -> Result<SparseMatrix> {
        let d = self.b_derivative(j, k)?;
        Ok(d.add_scaled(&self.b_mats[j].matmul(&self.b_mats[k]), 1.0))
    }

    /// `A_ij = sum_k a_ik M_kj`.
    pub fn a_matrix(&self, i: usize, j: usize) -> Result<SparseMatrix> {
        let a = self.cache.a();
        if i >= a.nrows() {
            return Err(HgmError::IndexOutOfRange {
                index: i,
                n: a.nrows(),
            });
        }
        self.check_index(j)?;
        let mut acc = SparseMatrix::zeros(self.dim());
        for k in 0..self.num_halfspaces() {
            let aik = a[(i, k)];
            if aik != 0.0 {
                acc = acc.add_scaled(&self.second_derivative(k, j)?, aik);
            }
        }
        Ok(acc)
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j < self.num_halfspaces() {
            Ok(())
        } else {
            Err(HgmError::IndexOutOfRange {
                index: j,
                n: self.num_halfspaces(),
            })
        }
    }

    /// `dg/dt = [sum_ij a_dot_ij A_ij + sum_j b_dot_j B_j] g`, evaluated without
    /// forming `A_ij`:  with `c = a_dot^T a` and `v_k = B_k g`,
    /// `sum_ij a_dot_ij A_ij g = sum_j B_j (sum_k c_jk v_k) + sum_jk c_jk (dB_j/db_k) g`.
    pub fn rhs(&self, a_dot: Option<&DMatrix<f64>>, b_dot: &[f64], g: &[f64], out: &mut [f64]) {
        let n = self.num_halfspaces();
        out.iter_mut().for_each(|o| *o = 0.0);
        let Some(a_dot) = a_dot else {
            for j in 0..n {
                if b_dot[j] != 0.0 {
                    self.b_mats[j].mul_vec_add(g, b_dot[j], out);
                }
            }
            return;
        };
        let v: Vec<Vec<f64>> = self.b_mats.iter().map(|m| m.mul_vec(g)).collect();
        for j in 0..n {
            for (o, vj) in out.iter_mut().zip(&v[j]) {
                *o += b_dot[j] * vj;
            }
        }
        let c = a_dot.transpose() * self.cache.a();
        let mut w = vec![0.0; g.len()];
        for j in 0..n {
            w.iter_mut().for_each(|x| *x = 0.0);
            let mut any = false;
            for k in 0..n {
                let cjk = c[(j, k)];
                if cjk != 0.0 {
                    any = true;
                    for (x, vk) in w.iter_mut().zip(&v[k]) {
                        *x += cjk * vk;
                    }
                }
            }
            if any {
                self.b_mats[j].mul_vec_add(&w, 1.0, out);
            }
        }
        for (pos, set) in self.members.iter().enumerate() {
            if set.is_empty() {
                continue;
            }
            let mut s = 0.0;
            for j in set.iter() {
                for k in set.iter() {
                    s -= c[(j, k)] * self.cache.inverse_entry(pos, j, k);
                }
            }
            out[pos] += s * g[pos];
        }
    }
}

pub fn gram_cache(a: &DMatrix<f64>, fc: &FaceComplex) -> Result<GramCache> {
    GramCache::new(a, fc)
}

/// `B_j` at `(a, b)`.
pub fn bj_matrix(cache: &GramCache, b: &[f64], fc: &FaceComplex, j: usize) -> Result<SparseMatrix> {
    PfaffianOperator::new(cache.clone(), fc, b)?
        .b_matrix(j)
        .cloned()
}

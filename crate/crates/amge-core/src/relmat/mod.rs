//! Boolean relation tables and numeric sparse matrices.
//!
//! A [`Relation`] is a boolean sparse matrix `object1_object2` between two
//! labeled entity sets: entry `(i, j)` is present when entity `i` of the row
//! kind is related to entity `j` of the column kind. Composite relations are
//! boolean matrix products; e.g. `element_element = element_facet x
//! facet_element` relates two elements when they share a facet.
//!
//! A [`SparseMatrix`] carries real values with the same storage layout.
//! Products accumulate row-major with ascending column index, so results are
//! bitwise reproducible for a fixed input ordering.

pub mod io;

use crate::{Error, Result};
use std::fmt;

/// Label for the entity set indexing one axis of a relation or matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityKind {
    Element,
    Facet,
    Vertex,
    Dof,
    TrueDof,
    /// An active computational core.
    Core,
    /// A group of cores acting as one coarser core after redistribution.
    CoreGroup,
    /// Agglomerated element.
    Agglomerate,
    NewElement,
    NewDof,
    NewTrueDof,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            EntityKind::Element => "element",
            EntityKind::Facet => "facet",
            EntityKind::Vertex => "vertex",
            EntityKind::Dof => "dof",
            EntityKind::TrueDof => "truedof",
            EntityKind::Core => "core",
            EntityKind::CoreGroup => "Core",
            EntityKind::Agglomerate => "AE",
            EntityKind::NewElement => "newelement",
            EntityKind::NewDof => "newdof",
            EntityKind::NewTrueDof => "newtruedof",
        };
        f.write_str(name)
    }
}

/// Boolean sparse incidence between two entity sets, stored row-major (CSR)
/// with strictly ascending column indices per row and no duplicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub row_kind: EntityKind,
    pub col_kind: EntityKind,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl Relation {
    /// Build from (row, col) pairs; duplicates are merged.
    pub fn from_pairs(
        row_kind: EntityKind,
        col_kind: EntityKind,
        nrows: usize,
        ncols: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut sorted: Vec<(usize, usize)> = pairs.into_iter().collect();
        for &(r, c) in &sorted {
            if r >= nrows {
                return Err(Error::IndexOutOfBounds {
                    what: "relation row",
                    index: r,
                    size: nrows,
                });
            }
            if c >= ncols {
                return Err(Error::IndexOutOfBounds {
                    what: "relation column",
                    index: c,
                    size: ncols,
                });
            }
        }
        sorted.sort_unstable();
        sorted.dedup();
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        for (r, c) in sorted {
            indptr[r + 1] += 1;
            indices.push(c);
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Ok(Relation {
            row_kind,
            col_kind,
            ncols,
            indptr,
            indices,
        })
    }

    /// Build from per-row column lists (consumed in order).
    pub fn from_rows(
        row_kind: EntityKind,
        col_kind: EntityKind,
        ncols: usize,
        rows: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let nrows = rows.len();
        let pairs = rows
            .into_iter()
            .enumerate()
            .flat_map(|(r, cols)| cols.into_iter().map(move |c| (r, c)));
        Self::from_pairs(row_kind, col_kind, nrows, ncols, pairs)
    }

    /// Square identity relation over one entity set.
    pub fn identity(kind: EntityKind, n: usize) -> Self {
        Relation {
            row_kind: kind,
            col_kind: kind,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
        }
    }

    /// Empty relation with the given shape.
    pub fn empty(row_kind: EntityKind, col_kind: EntityKind, nrows: usize, ncols: usize) -> Self {
        Relation {
            row_kind,
            col_kind,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.indices[self.indptr[i]..self.indptr[i + 1]]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[usize]> {
        (0..self.nrows()).map(move |i| self.row(i))
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.row(i).binary_search(&j).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.nrows()).flat_map(move |i| self.row(i).iter().map(move |&j| (i, j)))
    }

    /// Swap rows and columns; kinds swap with them.
    pub fn transpose(&self) -> Relation {
        let nrows = self.ncols;
        let mut indptr = vec![0usize; nrows + 1];
        for &j in &self.indices {
            indptr[j + 1] += 1;
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        let mut cursor = indptr.clone();
        let mut indices = vec![0usize; self.indices.len()];
        for i in 0..self.nrows() {
            for &j in self.row(i) {
                indices[cursor[j]] = i;
                cursor[j] += 1;
            }
        }
        // Rows come out ascending because the forward scan visits row indices
        // in increasing order.
        Relation {
            row_kind: self.col_kind,
            col_kind: self.row_kind,
            ncols: self.nrows(),
            indptr,
            indices,
        }
    }

    /// Boolean product: `(i, k)` present iff some `j` has `(i, j)` here and
    /// `(j, k)` in `other`. Multiplicities are dropped.
    pub fn multiply(&self, other: &Relation) -> Result<Relation> {
        if self.col_kind != other.row_kind {
            return Err(Error::KindMismatch {
                left: self.col_kind,
                right: other.row_kind,
            });
        }
        if self.ncols != other.nrows() {
            return Err(Error::DimensionMismatch {
                context: "boolean product inner dimension",
                left: self.ncols,
                right: other.nrows(),
            });
        }
        let nrows = self.nrows();
        let ncols = other.ncols;
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::new();
        let mut marker = vec![usize::MAX; ncols];
        let mut scratch = Vec::new();
        for i in 0..nrows {
            scratch.clear();
            for &j in self.row(i) {
                for &k in other.row(j) {
                    if marker[k] != i {
                        marker[k] = i;
                        scratch.push(k);
                    }
                }
            }
            scratch.sort_unstable();
            indices.extend_from_slice(&scratch);
            indptr[i + 1] = indices.len();
        }
        Ok(Relation {
            row_kind: self.row_kind,
            col_kind: other.col_kind,
            ncols,
            indptr,
            indices,
        })
    }

    /// True iff every column has exactly one entry, i.e. each child entity
    /// belongs to exactly one parent.
    pub fn is_partition(&self) -> bool {
        let mut count = vec![0usize; self.ncols];
        for &j in &self.indices {
            count[j] += 1;
        }
        count.iter().all(|&c| c == 1)
    }

    /// True iff square with exactly one entry per row and per column.
    pub fn is_permutation(&self) -> bool {
        self.nrows() == self.ncols
            && self.indptr.windows(2).all(|w| w[1] - w[0] == 1)
            && self.is_partition()
    }

    /// Number of entries in each column.
    pub fn col_counts(&self) -> Vec<usize> {
        let mut count = vec![0usize; self.ncols];
        for &j in &self.indices {
            count[j] += 1;
        }
        count
    }

    /// View as a 0/1 numeric matrix.
    pub fn to_matrix(&self) -> SparseMatrix {
        SparseMatrix {
            row_kind: Some(self.row_kind),
            col_kind: Some(self.col_kind),
            ncols: self.ncols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: vec![1.0; self.indices.len()],
        }
    }

    /// Same shape and entries, entity-kind labels ignored.
    pub fn same_entries(&self, other: &Relation) -> bool {
        self.ncols == other.ncols && self.indptr == other.indptr && self.indices == other.indices
    }

    /// For a partition relation, the parent of each child column.
    pub fn column_owner(&self) -> Result<Vec<usize>> {
        let mut owner = vec![usize::MAX; self.ncols];
        for (i, j) in self.iter() {
            if owner[j] != usize::MAX {
                return Err(Error::NotAPartition(format!(
                    "{}_{}: column {j} has multiple parents",
                    self.row_kind, self.col_kind
                )));
            }
            owner[j] = i;
        }
        if let Some(j) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::NotAPartition(format!(
                "{}_{}: column {j} is orphaned",
                self.row_kind, self.col_kind
            )));
        }
        Ok(owner)
    }
}

/// Real sparse matrix in CSR form with optional entity-kind labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub row_kind: Option<EntityKind>,
    pub col_kind: Option<EntityKind>,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Build from (row, col, value) triplets. Duplicates are summed in
    /// triplet order; explicit zeros are kept.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= nrows {
                return Err(Error::IndexOutOfBounds {
                    what: "matrix row",
                    index: r,
                    size: nrows,
                });
            }
            if c >= ncols {
                return Err(Error::IndexOutOfBounds {
                    what: "matrix column",
                    index: c,
                    size: ncols,
                });
            }
        }
        // Stable sort keeps duplicate accumulation in triplet order.
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_counts = vec![0usize; nrows];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_counts[r] += 1;
                indices.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        let mut indptr = vec![0usize; nrows + 1];
        for i in 0..nrows {
            indptr[i + 1] = indptr[i] + row_counts[i];
        }
        Ok(SparseMatrix {
            row_kind: None,
            col_kind: None,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseMatrix {
            row_kind: None,
            col_kind: None,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            row_kind: None,
            col_kind: None,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn with_kinds(mut self, row_kind: EntityKind, col_kind: EntityKind) -> Self {
        self.row_kind = Some(row_kind);
        self.col_kind = Some(col_kind);
        self
    }

    pub fn nrows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows()).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    pub fn transpose(&self) -> SparseMatrix {
        let nrows = self.ncols;
        let mut indptr = vec![0usize; nrows + 1];
        for &j in &self.indices {
            indptr[j + 1] += 1;
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        let mut cursor = indptr.clone();
        let mut indices = vec![0usize; self.indices.len()];
        let mut values = vec![0.0f64; self.values.len()];
        for i in 0..self.nrows() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                indices[cursor[j]] = i;
                values[cursor[j]] = v;
                cursor[j] += 1;
            }
        }
        SparseMatrix {
            row_kind: self.col_kind,
            col_kind: self.row_kind,
            ncols: self.nrows(),
            indptr,
            indices,
            values,
        }
    }

    /// Sparse product. Each output row accumulates contributions in the order
    /// of this matrix's row entries, then emits columns ascending.
    pub fn multiply(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        if let (Some(l), Some(r)) = (self.col_kind, other.row_kind) {
            if l != r {
                return Err(Error::KindMismatch { left: l, right: r });
            }
        }
        if self.ncols != other.nrows() {
            return Err(Error::DimensionMismatch {
                context: "numeric product inner dimension",
                left: self.ncols,
                right: other.nrows(),
            });
        }
        let nrows = self.nrows();
        let ncols = other.ncols;
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut acc = vec![0.0f64; ncols];
        let mut marker = vec![usize::MAX; ncols];
        let mut touched = Vec::new();
        for i in 0..nrows {
            touched.clear();
            let (cols, vals) = self.row(i);
            for (&j, &a) in cols.iter().zip(vals) {
                let (ocols, ovals) = other.row(j);
                for (&k, &b) in ocols.iter().zip(ovals) {
                    if marker[k] != i {
                        marker[k] = i;
                        acc[k] = 0.0;
                        touched.push(k);
                    }
                    acc[k] += a * b;
                }
            }
            touched.sort_unstable();
            for &k in &touched {
                indices.push(k);
                values.push(acc[k]);
            }
            indptr[i + 1] = indices.len();
        }
        Ok(SparseMatrix {
            row_kind: self.row_kind,
            col_kind: other.col_kind,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows());
        for i in 0..self.nrows() {
            let (cols, vals) = self.row(i);
            let mut s = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                s += v * x[j];
            }
            y[i] = s;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    /// Drop entries with |value| <= threshold.
    pub fn pruned(&self, threshold: f64) -> SparseMatrix {
        let triplets: Vec<_> = self
            .iter()
            .filter(|&(_, _, v)| v.abs() > threshold)
            .collect();
        let mut out = SparseMatrix::from_triplets(self.nrows(), self.ncols, triplets)
            .expect("indices already validated");
        out.row_kind = self.row_kind;
        out.col_kind = self.col_kind;
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let t = self.transpose();
        if t.indptr != self.indptr || t.indices != self.indices {
            return false;
        }
        self.values
            .iter()
            .zip(&t.values)
            .all(|(a, b)| (a - b).abs() <= tol)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.ncols]; self.nrows()];
        for (i, j, v) in self.iter() {
            dense[i][j] += v;
        }
        dense
    }

    /// Max absolute entry-wise difference; `None` when shapes differ.
    pub fn max_abs_diff(&self, other: &SparseMatrix) -> Option<f64> {
        if self.nrows() != other.nrows() || self.ncols != other.ncols {
            return None;
        }
        let mut diff = 0.0f64;
        for i in 0..self.nrows() {
            let (ac, av) = self.row(i);
            let (bc, bv) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ac.len() || q < bc.len() {
                let (ja, jb) = (
                    ac.get(p).copied().unwrap_or(usize::MAX),
                    bc.get(q).copied().unwrap_or(usize::MAX),
                );
                if ja == jb {
                    diff = diff.max((av[p] - bv[q]).abs());
                    p += 1;
                    q += 1;
                } else if ja < jb {
                    diff = diff.max(av[p].abs());
                    p += 1;
                } else {
                    diff = diff.max(bv[q].abs());
                    q += 1;
                }
            }
        }
        Some(diff)
    }

    /// Identical sparsity patterns (positions only, values ignored).
    pub fn same_pattern(&self, other: &SparseMatrix) -> bool {
        self.nrows() == other.nrows()
            && self.ncols == other.ncols
            && self.indptr == other.indptr
            && self.indices == other.indices
    }
}

/// Computes `left * mid * right` as written; callers pass transposes
/// explicitly when a `P^T A P` form is wanted. The result is deterministic
/// for fixed inputs.
pub fn num_triple_product(
    left: &SparseMatrix,
    mid: &SparseMatrix,
    right: &SparseMatrix,
) -> Result<SparseMatrix> {
    left.multiply(mid)?.multiply(right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_relation(rng: &mut StdRng, nrows: usize, ncols: usize, fill: f64) -> Relation {
        let mut pairs = Vec::new();
        for i in 0..nrows {
            for j in 0..ncols {
                if rng.gen::<f64>() < fill {
                    pairs.push((i, j));
                }
            }
        }
        Relation::from_pairs(EntityKind::Element, EntityKind::Dof, nrows, ncols, pairs).unwrap()
    }

    /// Fig. 1 element_dof: six quads, fourteen interior-facet dofs.
    pub(crate) fn figure_element_dof() -> Relation {
        Relation::from_rows(
            EntityKind::Element,
            EntityKind::Dof,
            14,
            vec![
                vec![0, 1],
                vec![2, 3],
                vec![4, 5, 6],
                vec![7, 8, 9],
                vec![10, 11],
                vec![12, 13],
            ],
        )
        .unwrap()
    }

    #[test]
    fn transpose_figure_element_dof() {
        let element_dof = figure_element_dof();
        let dof_element = element_dof.transpose();
        assert_eq!(dof_element.row_kind, EntityKind::Dof);
        assert_eq!(dof_element.col_kind, EntityKind::Element);
        // d1 -> e1, d3 -> e2, d5 -> e3, d8 -> e4, d11 -> e5, d13 -> e6
        assert_eq!(dof_element.row(0), &[0]);
        assert_eq!(dof_element.row(2), &[1]);
        assert_eq!(dof_element.row(4), &[2]);
        assert_eq!(dof_element.row(7), &[3]);
        assert_eq!(dof_element.row(10), &[4]);
        assert_eq!(dof_element.row(12), &[5]);
    }

    #[test]
    fn transpose_empty() {
        let r = Relation::empty(EntityKind::Element, EntityKind::Facet, 3, 5);
        let t = r.transpose();
        assert_eq!(t.nrows(), 5);
        assert_eq!(t.ncols(), 3);
        assert_eq!(t.nnz(), 0);
        assert_eq!(t.row_kind, EntityKind::Facet);
    }

    #[test]
    fn transpose_involution_random() {
        let mut rng = StdRng::seed_from_u64(7);
        let r = random_relation(&mut rng, 50, 30, 0.1);
        let tt = r.transpose().transpose();
        assert_eq!(r, tt);
    }

    #[test]
    fn bool_multiply_figure_core_relations() {
        // Fig. 1(g): core_element with three cores of two elements each.
        let core_element = Relation::from_rows(
            EntityKind::Core,
            EntityKind::Element,
            6,
            vec![vec![0, 1], vec![2, 3], vec![4, 5]],
        )
        .unwrap();
        // Fig. 1(h): Core_core grouping {C1}, {C2, C3}.
        let core_group = Relation::from_rows(
            EntityKind::CoreGroup,
            EntityKind::Core,
            3,
            vec![vec![0], vec![1, 2]],
        )
        .unwrap();
        let group_element = core_group.multiply(&core_element).unwrap();
        // Fig. 1(i): Core1 -> {e1, e2}, Core2 -> {e3..e6}.
        assert_eq!(group_element.row(0), &[0, 1]);
        assert_eq!(group_element.row(1), &[2, 3, 4, 5]);
    }

    #[test]
    fn bool_multiply_identity() {
        let mut rng = StdRng::seed_from_u64(3);
        let r = random_relation(&mut rng, 20, 15, 0.2);
        let id = Relation::identity(EntityKind::Element, 20);
        assert_eq!(id.multiply(&r).unwrap(), r);
    }

    #[test]
    fn bool_multiply_kind_mismatch() {
        let a = Relation::identity(EntityKind::Element, 4);
        let b = Relation::identity(EntityKind::Facet, 4);
        assert!(matches!(
            a.multiply(&b),
            Err(Error::KindMismatch { .. })
        ));
    }

    #[test]
    fn element_element_on_quad_grid() {
        // 2x2 quad mesh, elements 0..4 in C order ((x, y) -> x*2 + y), four
        // interior facets. Brute-force neighbor enumeration as the oracle.
        let element_facet = Relation::from_rows(
            EntityKind::Element,
            EntityKind::Facet,
            12,
            vec![
                vec![0, 2, 4, 6],
                vec![1, 3, 6, 7],
                vec![2, 5, 8, 10],
                vec![3, 5, 10, 11],
            ],
        )
        .unwrap();
        let element_element = element_facet
            .multiply(&element_facet.transpose())
            .unwrap();
        let mut expected = vec![
            (0, 0),
            (0, 1),
            (0, 2),
            (1, 0),
            (1, 1),
            (1, 3),
            (2, 0),
            (2, 2),
            (2, 3),
            (3, 1),
            (3, 2),
            (3, 3),
        ];
        expected.sort_unstable();
        let got: Vec<_> = element_element.iter().collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn bool_multiply_associative_random() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..10 {
            let a = random_relation(&mut rng, 40, 60, 0.05);
            let mut b = random_relation(&mut rng, 60, 100, 0.05);
            b.row_kind = EntityKind::Dof;
            b.col_kind = EntityKind::TrueDof;
            let mut c = random_relation(&mut rng, 100, 30, 0.05);
            c.row_kind = EntityKind::TrueDof;
            c.col_kind = EntityKind::Facet;
            let left = a.multiply(&b).unwrap().multiply(&c).unwrap();
            let right = a.multiply(&b.multiply(&c).unwrap()).unwrap();
            assert_eq!(left, right);
        }
    }

    #[test]
    fn transpose_of_product_random() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..10 {
            let a = random_relation(&mut rng, 30, 50, 0.08);
            let mut b = random_relation(&mut rng, 50, 20, 0.08);
            b.row_kind = EntityKind::Dof;
            b.col_kind = EntityKind::TrueDof;
            let lhs = a.multiply(&b).unwrap().transpose();
            let rhs = b.transpose().multiply(&a.transpose()).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn is_partition_cases() {
        // Fig. 1(j): AE_element with AE1 = {e1, e2}, AE2 = {e3..e6}.
        let ae_element = Relation::from_rows(
            EntityKind::Agglomerate,
            EntityKind::Element,
            6,
            vec![vec![0, 1], vec![2, 3, 4, 5]],
        )
        .unwrap();
        assert!(ae_element.is_partition());

        let orphan = Relation::from_rows(
            EntityKind::Agglomerate,
            EntityKind::Element,
            3,
            vec![vec![0], vec![2]],
        )
        .unwrap();
        assert!(!orphan.is_partition());

        let doubled = Relation::from_rows(
            EntityKind::Agglomerate,
            EntityKind::Element,
            2,
            vec![vec![0, 1], vec![1]],
        )
        .unwrap();
        assert!(!doubled.is_partition());
    }

    #[test]
    fn triple_product_identity() {
        let mut rng = StdRng::seed_from_u64(17);
        let a = random_matrix(&mut rng, 12, 12, 0.3);
        let id = SparseMatrix::identity(12);
        let out = num_triple_product(&id, &a, &id).unwrap();
        assert!(out.max_abs_diff(&a).unwrap() == 0.0);
    }

    #[test]
    fn triple_product_two_element_assembly() {
        // Two 1x1 element blocks sharing one truedof: assembled entry is 5.
        let a_diag = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 2.0), (1, 1, 3.0)]).unwrap();
        let dof_truedof = SparseMatrix::from_triplets(2, 1, vec![(0, 0, 1.0), (1, 0, 1.0)]).unwrap();
        let assembled =
            num_triple_product(&dof_truedof.transpose(), &a_diag, &dof_truedof).unwrap();
        assert_eq!(assembled.nrows(), 1);
        assert_eq!(assembled.get(0, 0), 5.0);
    }

    fn random_matrix(rng: &mut StdRng, nrows: usize, ncols: usize, fill: f64) -> SparseMatrix {
        let mut triplets = Vec::new();
        for i in 0..nrows {
            for j in 0..ncols {
                if rng.gen::<f64>() < fill {
                    triplets.push((i, j, rng.gen_range(-2.0..2.0)));
                }
            }
        }
        SparseMatrix::from_triplets(nrows, ncols, triplets).unwrap()
    }

    fn dense_product(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (n, k, m) = (a.len(), b.len(), b[0].len());
        let mut out = vec![vec![0.0; m]; n];
        for i in 0..n {
            for l in 0..k {
                for j in 0..m {
                    out[i][j] += a[i][l] * b[l][j];
                }
            }
        }
        out
    }

    #[test]
    fn triple_product_matches_dense_oracle() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..10 {
            let a = random_matrix(&mut rng, 20, 20, 0.25);
            let p = random_relation(&mut rng, 20, 14, 0.2).to_matrix();
            let pt = p.transpose();
            let sparse = num_triple_product(&pt, &a, &p).unwrap();
            let dense = dense_product(&dense_product(&pt.to_dense(), &a.to_dense()), &p.to_dense());
            let mut max_diff = 0.0f64;
            for i in 0..sparse.nrows() {
                for j in 0..sparse.ncols() {
                    max_diff = max_diff.max((sparse.get(i, j) - dense[i][j]).abs());
                }
            }
            let scale = sparse.max_abs().max(1.0);
            assert!(max_diff <= 1e-13 * scale, "diff {max_diff}");
        }
    }

    #[test]
    fn triple_product_dimension_mismatch() {
        let a = SparseMatrix::identity(4);
        let b = SparseMatrix::identity(5);
        assert!(matches!(
            num_triple_product(&a, &b, &a),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn from_triplets_accumulates_duplicates() {
        let m = SparseMatrix::from_triplets(2, 2, vec![(0, 1, 1.5), (0, 1, 2.5), (1, 0, 1.0)])
            .unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 4.0);
    }
}

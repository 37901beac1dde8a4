//! Small dense and banded linear algebra used by the local interpolation
//! solves and the global saddle-point solver. Everything here is
//! deterministic: fixed pivoting rules, fixed summation order.

use crate::{Error, Result, SparseMatrix};

/// Column-major dense matrix for local element computations.
#[derive(Debug, Clone)]
pub struct DenseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        DenseMatrix {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(nrows, ncols);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = Self::zeros(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn multiply(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.ncols, other.nrows);
        let mut out = Self::zeros(self.nrows, other.ncols);
        for j in 0..other.ncols {
            for k in 0..self.ncols {
                let b = other[(k, j)];
                if b == 0.0 {
                    continue;
                }
                for i in 0..self.nrows {
                    out[(i, j)] += self[(i, k)] * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for j in 0..self.ncols {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for i in 0..self.nrows {
                y[i] += self[(i, j)] * xj;
            }
        }
        y
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[j * self.nrows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[j * self.nrows + i]
    }
}

/// LU factorization with partial pivoting; ties keep the lowest row index.
pub struct DenseLu {
    n: usize,
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl DenseLu {
    pub fn factor(a: &DenseMatrix) -> Result<DenseLu> {
        assert_eq!(a.nrows, a.ncols);
        let n = a.nrows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut pivot_row = k;
            let mut pivot_val = lu[(k, k)].abs();
            for i in (k + 1)..n {
                let v = lu[(i, k)].abs();
                if v > pivot_val {
                    pivot_val = v;
                    pivot_row = i;
                }
            }
            if pivot_val == 0.0 {
                return Err(Error::SingularSystem(format!(
                    "zero pivot at elimination step {k}"
                )));
            }
            if pivot_row != k {
                perm.swap(k, pivot_row);
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(pivot_row, j)];
                    lu[(pivot_row, j)] = tmp;
                }
            }
            let inv = 1.0 / lu[(k, k)];
            for i in (k + 1)..n {
                let factor = lu[(i, k)] * inv;
                lu[(i, k)] = factor;
                if factor != 0.0 {
                    for j in (k + 1)..n {
                        let delta = factor * lu[(k, j)];
                        lu[(i, j)] -= delta;
                    }
                }
            }
        }
        Ok(DenseLu { n, lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 1..self.n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..self.n).rev() {
            let mut s = x[i];
            for j in (i + 1)..self.n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }
}

/// Reverse Cuthill-McKee ordering of a symmetric sparsity pattern, used to
/// keep factorization bandwidth small. Returns `order` such that new index
/// `k` holds old index `order[k]`.
pub fn reverse_cuthill_mckee(n: usize, neighbors: &dyn Fn(usize) -> Vec<usize>) -> Vec<usize> {
    let mut degree = vec![0usize; n];
    for i in 0..n {
        degree[i] = neighbors(i).len();
    }
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for start in 0..n {
        if visited[start] {
            continue;
        }
        // Start each component from its lowest-index minimum-degree node.
        let mut component = vec![start];
        let mut head = 0;
        visited[start] = true;
        while head < component.len() {
            let u = component[head];
            head += 1;
            for v in neighbors(u) {
                if !visited[v] {
                    visited[v] = true;
                    component.push(v);
                }
            }
        }
        let &seed = component
            .iter()
            .min_by_key(|&&u| (degree[u], u))
            .expect("component is nonempty");
        for &u in &component {
            visited[u] = false;
        }
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(seed);
        visited[seed] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut next: Vec<usize> = neighbors(u).into_iter().filter(|&v| !visited[v]).collect();
            next.sort_by_key(|&v| (degree[v], v));
            for v in next {
                visited[v] = true;
                queue.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

/// Symmetric banded matrix stored by diagonals: `band[d][i]` is entry
/// `(i + d, i)` for `d = 0..=bandwidth`.
pub struct BandCholesky {
    n: usize,
    bandwidth: usize,
    factor: Vec<Vec<f64>>,
    /// Flop count of the factorization, for the deterministic cost model.
    pub ops: u64,
}

impl BandCholesky {
    /// Factor a symmetric positive definite matrix given by lower triplets
    /// `(i, j, v)` with `i >= j`.
    pub fn factor(
        n: usize,
        bandwidth: usize,
        lower_triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<BandCholesky> {
        let mut band: Vec<Vec<f64>> = (0..=bandwidth).map(|_| vec![0.0; n]).collect();
        for (i, j, v) in lower_triplets {
            debug_assert!(i >= j && i - j <= bandwidth);
            band[i - j][j] += v;
        }
        let mut ops: u64 = 0;
        for j in 0..n {
            let mut d = band[0][j];
            let lo = j.saturating_sub(bandwidth);
            for k in lo..j {
                let l = band[j - k][k];
                d -= l * l * band[0][k];
                ops += 3;
            }
            if d <= 0.0 {
                return Err(Error::SingularSystem(format!(
                    "non-positive pivot {d:e} at column {j} of band factorization"
                )));
            }
            band[0][j] = d;
            let hi = (j + bandwidth).min(n - 1);
            for i in (j + 1)..=hi {
                let mut s = band[i - j][j];
                let lo_i = i.saturating_sub(bandwidth);
                for k in lo_i.max(lo)..j {
                    s -= band[i - k][k] * band[j - k][k] * band[0][k];
                    ops += 3;
                }
                band[i - j][j] = s / d;
                ops += 1;
            }
        }
        Ok(BandCholesky {
            n,
            bandwidth,
            factor: band,
            ops,
        })
    }

    /// Solve `L D L^T x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        for j in 0..self.n {
            let xj = x[j];
            if xj != 0.0 {
                let hi = (j + self.bandwidth).min(self.n - 1);
                for i in (j + 1)..=hi {
                    x[i] -= self.factor[i - j][j] * xj;
                }
            }
        }
        for j in 0..self.n {
            x[j] /= self.factor[0][j];
        }
        for j in (0..self.n).rev() {
            let mut s = x[j];
            let hi = (j + self.bandwidth).min(self.n - 1);
            for i in (j + 1)..=hi {
                s -= self.factor[i - j][j] * x[i];
            }
            x[j] = s;
        }
        x
    }

    pub fn solve_ops(&self) -> u64 {
        // Forward + diagonal + backward sweeps.
        (self.n as u64) * (2 * self.bandwidth as u64 + 1)
    }
}

/// A sparse SPD matrix reordered and factored in banded form.
pub struct ReorderedCholesky {
    order: Vec<usize>,
    inverse: Vec<usize>,
    chol: BandCholesky,
}

impl ReorderedCholesky {
    pub fn factor(matrix: &SparseMatrix) -> Result<ReorderedCholesky> {
        let n = matrix.nrows();
        if n == 0 {
            return Err(Error::SingularSystem("empty matrix".into()));
        }
        let neighbor_fn = |i: usize| -> Vec<usize> {
            matrix.row(i).0.iter().copied().filter(|&j| j != i).collect()
        };
        let order = reverse_cuthill_mckee(n, &neighbor_fn);
        let mut inverse = vec![0usize; n];
        for (new, &old) in order.iter().enumerate() {
            inverse[old] = new;
        }
        let mut bandwidth = 0usize;
        let mut triplets = Vec::with_capacity(matrix.nnz());
        for old_i in 0..n {
            let (cols, vals) = matrix.row(old_i);
            let i = inverse[old_i];
            for (&old_j, &v) in cols.iter().zip(vals) {
                let j = inverse[old_j];
                if i >= j {
                    bandwidth = bandwidth.max(i - j);
                    triplets.push((i, j, v));
                }
            }
        }
        let chol = BandCholesky::factor(n, bandwidth, triplets)?;
        Ok(ReorderedCholesky {
            order,
            inverse,
            chol,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let permuted: Vec<f64> = self.order.iter().map(|&o| b[o]).collect();
        let y = self.chol.solve(&permuted);
        let mut x = vec![0.0; b.len()];
        for (new, &old) in self.order.iter().enumerate() {
            x[old] = y[new];
        }
        let _ = &self.inverse;
        x
    }

    pub fn factor_ops(&self) -> u64 {
        self.chol.ops
    }

    pub fn solve_ops(&self) -> u64 {
        self.chol.solve_ops()
    }
}

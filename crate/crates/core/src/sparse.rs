//! Square sparse matrices in compressed sparse row form.

use nalgebra::DMatrix;

use crate::block::Block;
use crate::error::{shape_err, Error, Result};

/// A square sparse matrix in CSR form with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Validates raw CSR arrays.
    pub fn new(n: usize, indptr: Vec<usize>, indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indptr.len() != n + 1 || indptr[0] != 0 {
            return Err(Error::InvalidInput(
                "row offsets must have length n + 1 and start at 0".into(),
            ));
        }
        if indices.len() != values.len() || *indptr.last().unwrap() != indices.len() {
            return Err(Error::InvalidInput("inconsistent CSR array lengths".into()));
        }
        for r in 0..n {
            let (lo, hi) = (indptr[r], indptr[r + 1]);
            if lo > hi {
                return Err(Error::InvalidInput(format!("row offsets decrease at row {r}")));
            }
            let row = &indices[lo..hi];
            if row.iter().any(|&c| c >= n) {
                return Err(Error::InvalidInput(format!("column index out of range in row {r}")));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidInput(format!("row {r} indices not sorted and unique")));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        Ok(Self {
            n,
            indptr,
            indices,
            values,
        })
    }

    /// Assembles from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets {
            if r >= n || c >= n {
                return Err(Error::InvalidInput(format!(
                    "entry ({r}, {c}) outside a {n}x{n} matrix"
                )));
            }
            sorted.push((r, c, v));
        }
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            indptr[r + 1] += indptr[r];
        }
        Self::new(n, indptr, indices, values)
    }

    /// Keeps every entry of a dense matrix, including explicit zeros off the pattern's diagonal band.
    pub fn from_dense(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(shape_err("square matrix", format!("{}x{}", a.nrows(), a.ncols())));
        }
        let n = a.nrows();
        let mut trip = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = a[(i, j)];
                if v != 0.0 {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, &trip)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        let trip: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(d.len(), &trip)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates `(col, value)` over row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.indptr[r], self.indptr[r + 1]);
        self.indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (lo, hi) = (self.indptr[r], self.indptr[r + 1]);
        match self.indices[lo..hi].binary_search(&c) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                d[(r, c)] = v;
            }
        }
        d
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                trip.push((c, r, v));
            }
        }
        Self::from_triplets(self.n, &trip).expect("transpose of a valid matrix is valid")
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `‖A - Aᵀ‖_F`.
    pub fn asymmetry(&self) -> f64 {
        let mut s = 0.0;
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                let d = v - self.get(c, r);
                s += d * d;
            }
        }
        s.sqrt()
    }

    pub fn is_symmetric(&self) -> bool {
        self.asymmetry() == 0.0
    }

    /// `y = A x` for a single column.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let (lo, hi) = (self.indptr[r], self.indptr[r + 1]);
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[self.indices[k]];
            }
            *yr = acc;
        }
    }

    /// `A X` for an `n x p` block.
    pub fn mul_block(&self, x: &Block) -> Result<Block> {
        if x.rows() != self.n {
            return Err(shape_err(format!("{} rows", self.n), format!("{} rows", x.rows())));
        }
        let mut out = Block::zeros(self.n, x.cols());
        for j in 0..x.cols() {
            self.mul_vec_into(x.column(j), out.column_mut(j));
        }
        Ok(out)
    }

    /// `(A - sI) X`.
    pub fn mul_block_shifted(&self, shift: f64, x: &Block) -> Result<Block> {
        let mut y = self.mul_block(x)?;
        if shift != 0.0 {
            y.axpy(-shift, x);
        }
        Ok(y)
    }

    /// Lower and upper bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let (mut kl, mut ku) = (0, 0);
        for r in 0..self.n {
            for (c, _) in self.row(r) {
                if c < r {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        (kl, ku)
    }

    /// `P A Pᵀ` where `perm[new] = old`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> CsrMatrix {
        let mut inv = vec![0usize; self.n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                trip.push((inv[r], inv[c], v));
            }
        }
        Self::from_triplets(self.n, &trip).expect("permutation of a valid matrix is valid")
    }
}

/// Reverse Cuthill–McKee ordering of the symmetrized pattern; `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in 0..n {
        for (c, _) in a.row(r) {
            if c != r {
                adj[r].push(c);
                adj[c].push(r);
            }
        }
    }
    for list in adj.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| degree[v]);

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(seed, &adj);
        let mut queue = std::collections::VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| degree[w]);
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(start: usize, adj: &[Vec<usize>]) -> (usize, usize) {
    // returns (eccentricity, a farthest vertex of minimum degree)
    let mut dist = std::collections::HashMap::new();
    dist.insert(start, 0usize);
    let mut queue = std::collections::VecDeque::from([start]);
    let mut far = (0usize, start);
    while let Some(v) = queue.pop_front() {
        let d = dist[&v];
        if d > far.0 || (d == far.0 && adj[v].len() < adj[far.1].len()) {
            far = (d, v);
        }
        for &w in &adj[v] {
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(w) {
                e.insert(d + 1);
                queue.push_back(w);
            }
        }
    }
    far
}

fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>]) -> usize {
    let mut v = seed;
    let (mut ecc, mut far) = bfs_levels(v, adj);
    for _ in 0..8 {
        let (e2, f2) = bfs_levels(far, adj);
        if e2 <= ecc {
            break;
        }
        v = far;
        ecc = e2;
        far = f2;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let a = CsrMatrix::from_triplets(2, &[(1, 1, 2.0), (0, 1, 1.0), (1, 1, 3.0), (0, 0, 4.0)]).unwrap();
        assert_eq!(a.indptr(), &[0, 2, 3]);
        assert_eq!(a.indices(), &[0, 1, 1]);
        assert_eq!(a.values(), &[4.0, 1.0, 5.0]);
    }

    #[test]
    fn rejects_out_of_range_and_unsorted() {
        assert!(CsrMatrix::from_triplets(2, &[(2, 0, 1.0)]).is_err());
        assert!(CsrMatrix::new(2, vec![0, 2, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::new(2, vec![0, 1, 1], vec![0], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn block_product_matches_dense() {
        let a = CsrMatrix::from_triplets(3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, -1.0), (2, 0, 3.0)]).unwrap();
        let x = Block::from_fn(3, 2, |i, j| (i + 2 * j) as f64 + 0.5).unwrap();
        let y = a.mul_block(&x).unwrap();
        let dense = a.to_dense() * x.as_matrix();
        assert_eq!(y.as_matrix(), &dense);
        let ys = a.mul_block_shifted(0.5, &x).unwrap();
        assert!((ys.as_matrix() - (dense - x.as_matrix() * 0.5)).norm() < 1e-15);
    }

    #[test]
    fn rcm_is_a_permutation_and_shrinks_bandwidth() {
        // a path graph numbered badly
        let n = 40;
        let label: Vec<usize> = (0..n).map(|i| (i * 17) % n).collect();
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((label[i], label[i], 2.0));
            if i + 1 < n {
                trip.push((label[i], label[i + 1], -1.0));
                trip.push((label[i + 1], label[i], -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, &trip).unwrap();
        let perm = reverse_cuthill_mckee(&a);
        let mut seen = perm.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..n).collect::<Vec<_>>());
        let b = a.permute_symmetric(&perm);
        assert_eq!(b.bandwidths(), (1, 1));
        assert!(a.bandwidths().0 > 1);
    }
}

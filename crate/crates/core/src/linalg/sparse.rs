use std::collections::BTreeMap;

/// Compressed-row symmetric matrix; both triangles are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Accumulates (row, col, value) contributions; duplicates are summed.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    n: usize,
    entries: BTreeMap<(usize, usize), f64>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        TripletBuilder {
            n,
            entries: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(i < self.n && j < self.n, "entry ({i}, {j}) outside {}x{}", self.n, self.n);
        *self.entries.entry((i, j)).or_insert(0.0) += v;
    }

    /// Adds `v` at (i, j) and (j, i); once on the diagonal.
    pub fn add_sym(&mut self, i: usize, j: usize, v: f64) {
        self.add(i, j, v);
        if i != j {
            self.add(j, i, v);
        }
    }

    pub fn build(self) -> SparseSym {
        let mut row_ptr = vec![0; self.n + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values = Vec::with_capacity(self.entries.len());
        for (&(i, j), &v) in &self.entries {
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
        }
        for i in 0..self.n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseSym {
            n: self.n,
            row_ptr,
            col_idx,
            values,
        }
    }
}

impl SparseSym {
    pub fn identity(n: usize) -> Self {
        let mut b = TripletBuilder::new(n);
        for i in 0..n {
            b.add(i, i, 1.0);
        }
        b.build()
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut b = TripletBuilder::new(n);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    b.add(i, j, v);
                }
            }
        }
        b.build()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        super::dot(x, &self.matvec(y))
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest |a_ij − a_ji| relative to the largest entry; `None` when the
    /// sparsity pattern itself is not symmetric.
    pub fn symmetry_defect(&self) -> Option<f64> {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let r = self.row_ptr[j]..self.row_ptr[j + 1];
                let k = self.col_idx[r.clone()].binary_search(&i).ok()?;
                worst = worst.max((v - self.values[r.start + k]).abs());
            }
        }
        let scale = self.max_abs();
        Some(if scale > 0.0 { worst / scale } else { 0.0 })
    }

    /// `self + s·other`, on the union of both patterns.
    pub fn add_scaled(&self, s: f64, other: &SparseSym) -> SparseSym {
        assert_eq!(self.n, other.n);
        let mut b = TripletBuilder::new(self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                b.add(i, j, v);
            }
            for (j, v) in other.row(i) {
                b.add(i, j, s * v);
            }
        }
        b.build()
    }

    pub fn scaled(&self, s: f64) -> SparseSym {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= s);
        m
    }

    /// Principal submatrix on `keep` (row/column `k` of the result is
    /// `keep[k]` of `self`).
    pub fn principal_submatrix(&self, keep: &[usize]) -> SparseSym {
        let mut pos = vec![usize::MAX; self.n];
        for (k, &i) in keep.iter().enumerate() {
            pos[i] = k;
        }
        let mut b = TripletBuilder::new(keep.len());
        for (k, &i) in keep.iter().enumerate() {
            for (j, v) in self.row(i) {
                if pos[j] != usize::MAX {
                    b.add(k, pos[j], v);
                }
            }
        }
        b.build()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_sums_duplicates() {
        let mut b = TripletBuilder::new(3);
        b.add_sym(0, 1, 2.0);
        b.add_sym(1, 0, 1.0);
        b.add(2, 2, 5.0);
        let m = b.build();
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), 3.0);
        assert_eq!(m.get(2, 2), 5.0);
        assert_eq!(m.get(0, 2), 0.0);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.symmetry_defect(), Some(0.0));
    }

    #[test]
    fn asymmetric_pattern_detected() {
        let mut b = TripletBuilder::new(2);
        b.add(0, 1, 1.0);
        assert_eq!(b.build().symmetry_defect(), None);
    }

    #[test]
    fn submatrix_and_matvec() {
        let m = SparseSym::from_dense(&[
            vec![4.0, -1.0, 0.0],
            vec![-1.0, 4.0, -1.0],
            vec![0.0, -1.0, 4.0],
        ]);
        assert_eq!(m.matvec(&[1.0, 1.0, 1.0]), vec![3.0, 2.0, 3.0]);
        let s = m.principal_submatrix(&[0, 2]);
        assert_eq!(s.to_dense(), vec![vec![4.0, 0.0], vec![0.0, 4.0]]);
    }
}

use super::SolveError;

/// Row-major square matrix for the small constants systems.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = DenseMatrix::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "row {i} has wrong length");
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.get(i, j)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Debug, Clone, PartialEq)]
pub struct LuFactors {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn factorize(a: &DenseMatrix) -> Result<Self, SolveError> {
        let n = a.dim();
        let threshold = 1e-14 * a.max_abs();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| lu.get(i, k).abs().total_cmp(&lu.get(j, k).abs()))
                .unwrap_or(k);
            let pivot = lu.get(p, k);
            if pivot.abs() <= threshold || !pivot.is_finite() {
                return Err(SolveError::SingularConstantsMatrix { column: k, pivot });
            }
            if p != k {
                for j in 0..n {
                    let (x, y) = (lu.get(k, j), lu.get(p, j));
                    lu.set(k, j, y);
                    lu.set(p, j, x);
                }
                perm.swap(k, p);
            }
            for i in k + 1..n {
                let factor = lu.get(i, k) / pivot;
                lu.set(i, k, factor);
                for j in k + 1..n {
                    let v = lu.get(i, j) - factor * lu.get(k, j);
                    lu.set(i, j, v);
                }
            }
        }
        Ok(LuFactors { lu, perm })
    }

    pub fn solve(&self, g: &[f64]) -> Vec<f64> {
        let n = self.lu.dim();
        assert_eq!(g.len(), n);
        let mut y: Vec<f64> = self.perm.iter().map(|&p| g[p]).collect();
        for i in 0..n {
            for j in 0..i {
                y[i] -= self.lu.get(i, j) * y[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                y[i] -= self.lu.get(i, j) * y[j];
            }
            y[i] /= self.lu.get(i, i);
        }
        y
    }
}

/// Solves the small dense system `A c = G` by Gaussian elimination with
/// partial pivoting.
pub fn dense_solve(a: &DenseMatrix, g: &[f64]) -> Result<Vec<f64>, SolveError> {
    if g.len() != a.dim() {
        return Err(SolveError::DimensionMismatch {
            expected: a.dim(),
            got: g.len(),
        });
    }
    Ok(LuFactors::factorize(a)?.solve(g))
}

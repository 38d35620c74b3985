//! Sparse matrices in compressed row form and a direct sparse LU solve.

use crate::error::{Error, Result};
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

const RESIDUAL_TOL: f64 = 1e-10;

/// Square matrix in compressed sparse row form. Duplicate triplets are summed
/// and exact zeros dropped at construction.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    pub dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    pub symmetric: bool,
}

impl SparseMatrix {
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)], symmetric: bool) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut rows = Vec::with_capacity(sorted.len());
        let mut it = sorted.into_iter().peekable();
        while let Some((i, j, mut v)) = it.next() {
            assert!(
                i < dim && j < dim,
                "triplet ({i},{j}) outside dimension {dim}"
            );
            while let Some(&(i2, j2, v2)) = it.peek() {
                if (i2, j2) != (i, j) {
                    break;
                }
                v += v2;
                it.next();
            }
            if v != 0.0 {
                rows.push(i);
                col_idx.push(j);
                values.push(v);
            }
        }
        for &i in &rows {
            row_ptr[i + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix {
            dim,
            row_ptr,
            col_idx,
            values,
            symmetric,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// Largest `|a_ij - a_ji|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn is_structurally_symmetric(&self) -> bool {
        (0..self.dim).all(|i| self.row(i).all(|(j, _)| self.row(j).any(|(c, _)| c == i)))
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let trips: Vec<Triplet<usize, usize, f64>> = (0..self.dim)
            .flat_map(|i| self.row(i).map(move |(j, v)| Triplet::new(i, j, v)))
            .collect();
        SparseColMat::try_new_from_triplets(self.dim, self.dim, &trips)
            .map_err(|e| Error::Factorization(format!("{e:?}")))
    }
}

/// Relative residual `‖Ax - b‖ / ‖b‖` (absolute when `b = 0`).
pub fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: f64 = ax
        .iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nb > 0.0 {
        r / nb
    } else {
        r
    }
}

/// Sparse LU with fill-reducing column ordering, then a multiply-back check.
pub fn factor_and_solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.dim {
        return Err(Error::Factorization(format!(
            "right-hand side has length {} for dimension {}",
            b.len(),
            a.dim
        )));
    }
    if a.dim == 0 {
        return Ok(Vec::new());
    }
    faer::set_global_parallelism(faer::Par::Seq);
    let lu = a
        .to_faer()?
        .sp_lu()
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let mut rhs = Mat::<f64>::from_fn(a.dim, 1, |i, _| b[i]);
    lu.solve_in_place(rhs.as_mut());
    let x: Vec<f64> = (0..a.dim).map(|i| rhs[(i, 0)]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization("matrix is singular".into()));
    }
    let res = relative_residual(a, &x, b);
    if res > RESIDUAL_TOL {
        return Err(Error::SolveResidual(res));
    }
    Ok(x)
}

//! Compressed-row sparse matrices and a Jacobi-preconditioned CG solver.

use crate::error::{Error, Result};
use crate::par;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Compressed-row sparse matrix. Symmetric matrices are stored in full.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed in
    /// input order, so identical triplet streams give identical matrices.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        // bucket by row, stable
        let mut next = counts.clone();
        let mut bucket = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            bucket[next[r]] = (c, v);
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in 0..nrows {
            let row = &mut bucket[counts[r]..counts[r + 1]];
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for &(c, v) in row.iter() {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let t: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(d.len(), d.len(), &t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v)))
            .collect()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// Row sums, i.e. `A * 1`.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    #[inline]
    fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in self.row_ptr[r]..self.row_ptr[r + 1] {
            s += self.values[k] * x[self.col_idx[k]];
        }
        s
    }

    /// `y = A x`, rows in parallel when the `parallel` feature is on.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        #[cfg(feature = "parallel")]
        {
            y.par_iter_mut()
                .enumerate()
                .with_min_len(256)
                .for_each(|(r, yr)| *yr = self.row_dot(r, x));
        }
        #[cfg(not(feature = "parallel"))]
        {
            self.mul_vec_serial_into(x, y);
        }
    }

    pub fn mul_vec_serial_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.row_dot(r, x);
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `xᵀ A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        par::dot(x, &self.mul_vec(y))
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `Σ αₖ Aₖ` over matrices of equal shape (patterns may differ).
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> Self {
        let (nrows, ncols) = terms
            .first()
            .map(|(_, m)| (m.nrows, m.ncols))
            .expect("at least one term");
        let mut t = Vec::with_capacity(terms.iter().map(|(_, m)| m.nnz()).sum());
        for (alpha, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols), "shape mismatch");
            t.extend(m.triplets().into_iter().map(|(r, c, v)| (r, c, alpha * v)));
        }
        Self::from_triplets(nrows, ncols, &t)
    }

    /// Copy with `d` added to the diagonal. Every diagonal entry must be
    /// structurally present.
    pub fn with_diagonal_added(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.nrows);
        let mut out = self.clone();
        for (r, &dr) in d.iter().enumerate() {
            let span = out.row_ptr[r]..out.row_ptr[r + 1];
            let k = out.col_idx[span.clone()]
                .binary_search(&r)
                .expect("diagonal entry missing from pattern");
            out.values[span.start + k] += dr;
        }
        out
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        (0..self.nrows).all(|r| {
            self.row(r)
                .all(|(c, v)| (v - self.get(c, r)).abs() <= rel_tol * scale)
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            d[r][c] += v;
        }
        d
    }

    /// Coordinate-format text (`row col value`, 0-based), for debugging.
    pub fn to_coo_string(&self) -> String {
        let mut s = format!("% {} {} {}\n", self.nrows, self.ncols, self.nnz());
        for (r, c, v) in self.triplets() {
            s.push_str(&format!("{r} {c} {v:e}\n"));
        }
        s
    }
}

/// Outcome of a converged CG solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `A x = b` for symmetric positive definite `A` by conjugate
/// gradients with a diagonal (Jacobi) preconditioner.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], tol: f64, maxit: usize) -> Result<Vec<f64>> {
    let mut x = vec![0.0; b.len()];
    solve_spd_into(a, b, &mut x, tol, maxit)?;
    Ok(x)
}

/// Warm-started variant: `x` holds the initial guess on entry.
///
/// Convergence means `‖b − A x‖ ≤ tol · ‖b‖`; `b = 0` returns `x = 0`.
pub fn solve_spd_into(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    maxit: usize,
) -> Result<SolveStats> {
    let n = b.len();
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::Dimension {
            what: "CG system",
            expected: a.nrows(),
            got: n,
        });
    }
    if x.len() != n {
        return Err(Error::Dimension {
            what: "CG initial guess",
            expected: n,
            got: x.len(),
        });
    }
    let bnorm = par::norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = a.mul_vec(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut rel = par::norm2(&r) / bnorm;
    if rel <= tol {
        return Ok(SolveStats {
            iterations: 0,
            residual: rel,
        });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = par::dot(&r, &z);

    for it in 1..=maxit {
        a.mul_vec_into(&p, &mut ap);
        let pap = par::dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: rel,
            });
        }
        let alpha = rz / pap;
        par::axpy(alpha, &p, x);
        par::axpy(-alpha, &ap, &mut r);
        rel = par::norm2(&r) / bnorm;
        if rel <= tol {
            return Ok(SolveStats {
                iterations: it,
                residual: rel,
            });
        }
        par::fill_indexed(&mut z, |i| r[i] * inv_diag[i]);
        let rz_new = par::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        let zs = &z;
        par::fill_indexed(&mut ap, |i| zs[i] + beta * p[i]);
        std::mem::swap(&mut p, &mut ap);
    }
    Err(Error::NoConvergence {
        iterations: maxit,
        residual: rel,
    })
}

//! Sparse and small-dense linear algebra: triplet assembly into CSR, a
//! Jacobi-preconditioned conjugate gradient solver and pivoted dense solves
//! for the local systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Compressed-row sparse matrix.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Assemble triplets into CSR. Duplicates are summed; the result is
/// independent of the triplet order (duplicates are accumulated in a fixed
/// value order).
pub fn assemble(triplets: &[(usize, usize, f64)], n: usize) -> Result<SparseMatrix> {
    for &(r, c, _) in triplets {
        if r >= n || c >= n {
            return Err(Error::InvalidArgument(format!(
                "triplet index ({r}, {c}) out of range for dimension {n}"
            )));
        }
    }
    let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
    sorted.sort_by(|a, b| {
        (a.0, a.1)
            .cmp(&(b.0, b.1))
            .then_with(|| a.2.total_cmp(&b.2))
    });
    let mut row_ptr = vec![0usize; n + 1];
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    let mut iter = sorted.into_iter().peekable();
    while let Some((r, c, mut v)) = iter.next() {
        while let Some(&(r2, c2, v2)) = iter.peek() {
            if r2 == r && c2 == c {
                v += v2;
                iter.next();
            } else {
                break;
            }
        }
        row_ptr[r + 1] += 1;
        col_idx.push(c);
        values.push(v);
    }
    for r in 0..n {
        row_ptr[r + 1] += row_ptr[r];
    }
    Ok(SparseMatrix {
        n,
        row_ptr,
        col_idx,
        values,
    })
}

impl SparseMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            y[r] = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Check symmetry entry-wise: `|a_ij - a_ji| <= rel_tol * max|a|`.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if (v - self.get(c, r)).abs() > rel_tol * scale {
                    return false;
                }
            }
        }
        true
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// Coordinate text dump: one `row col value` line per stored entry.
    pub fn to_coordinate_text(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let _ = writeln!(out, "{r} {c} {v:.17e}");
            }
        }
        out
    }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Clone, Debug)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final true relative residual `||Ax - b|| / ||b||`.
    pub residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite
/// systems. Iteration cap `20 n`; the returned residual is recomputed from
/// scratch.
pub fn solve_spd(a: &SparseMatrix, b: &[f64], tol: f64) -> Result<CgSolution> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::InvalidArgument(format!(
            "rhs length {} does not match dimension {n}",
            b.len()
        )));
    }
    if !a.is_symmetric(1e-12) {
        return Err(Error::InvalidArgument(
            "matrix is not symmetric within 1e-12 relative".into(),
        ));
    }
    let norm_b = norm(b);
    if norm_b == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let cap = 20 * n;
    let mut iterations = 0;
    while iterations < cap {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SolverFailure {
                iterations,
                residual: norm(&r) / norm_b,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        if norm(&r) <= tol * norm_b {
            // Recompute the true residual; rounded recurrences can drift.
            a.matvec(&x, &mut ap);
            let true_res: f64 = (0..n).map(|i| (ap[i] - b[i]).powi(2)).sum::<f64>().sqrt();
            if true_res <= tol * norm_b {
                return Ok(CgSolution {
                    x,
                    iterations,
                    residual: true_res / norm_b,
                });
            }
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverFailure {
        iterations: cap,
        residual: norm(&r) / norm_b,
    })
}

/// Condition-number estimate for an SPD matrix via power iteration on `A` and
/// on `lambda_max I - A`. Diagnostic quality only.
pub fn condition_estimate_spd(a: &SparseMatrix, iters: usize) -> f64 {
    let n = a.dim();
    if n == 0 {
        return 1.0;
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.754).sin()).collect();
    let mut av = vec![0.0; n];
    let mut lambda_max = 0.0;
    for _ in 0..iters {
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        a.matvec(&v, &mut av);
        lambda_max = dot(&v, &av);
        v.copy_from_slice(&av);
    }
    let shift = lambda_max * 1.000001;
    let mut w: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 1.318).cos()).collect();
    let mut gap = 0.0;
    for _ in 0..iters {
        let nw = norm(&w);
        w.iter_mut().for_each(|x| *x /= nw);
        a.matvec(&w, &mut av);
        for i in 0..n {
            av[i] = shift * w[i] - av[i];
        }
        gap = dot(&w, &av);
        w.copy_from_slice(&av);
    }
    let lambda_min = (shift - gap).max(f64::MIN_POSITIVE);
    lambda_max / lambda_min
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve mode for [`DenseSystem`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMode {
    /// Square system solved by pivoted elimination; near-zero pivots error.
    Square,
    /// Minimum-norm least-squares solution of a possibly rectangular system.
    LeastSquares,
}

/// Small dense system with a solve mode.
#[derive(Clone, Debug)]
pub struct DenseSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub mode: SolveMode,
}

/// Dense solution with the reported residual `||Ax - b||`.
#[derive(Clone, Debug)]
pub struct DenseSolution {
    pub x: DVector<f64>,
    pub residual: f64,
}

impl DenseSystem {
    pub fn square(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        DenseSystem {
            a,
            b,
            mode: SolveMode::Square,
        }
    }

    pub fn least_squares(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        DenseSystem {
            a,
            b,
            mode: SolveMode::LeastSquares,
        }
    }
}

/// Solve a small dense system according to its mode.
pub fn solve_dense(sys: &DenseSystem) -> Result<DenseSolution> {
    if sys.a.iter().any(|v| !v.is_finite()) || sys.b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "dense system has non-finite entries".into(),
        ));
    }
    if sys.a.nrows() != sys.b.len() {
        return Err(Error::InvalidArgument(format!(
            "matrix has {} rows but rhs has {} entries",
            sys.a.nrows(),
            sys.b.len()
        )));
    }
    match sys.mode {
        SolveMode::Square => {
            if sys.a.nrows() != sys.a.ncols() {
                return Err(Error::InvalidArgument(
                    "square mode needs a square matrix".into(),
                ));
            }
            let scale = sys.a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let lu = sys.a.clone().full_piv_lu();
            let min_pivot = (0..sys.a.nrows())
                .map(|i| lu.u()[(i, i)].abs())
                .fold(f64::INFINITY, f64::min);
            if min_pivot < 1e-12 * scale.max(f64::MIN_POSITIVE) {
                let cond = condition_via_svd(&sys.a);
                return Err(Error::SingularSystem { cond });
            }
            let x = lu
                .solve(&sys.b)
                .ok_or(Error::SingularSystem { cond: f64::INFINITY })?;
            let residual = (&sys.a * &x - &sys.b).norm();
            Ok(DenseSolution { x, residual })
        }
        SolveMode::LeastSquares => {
            let svd = sys.a.clone().svd(true, true);
            let scale = svd.singular_values.iter().fold(0.0f64, |m, v| m.max(*v));
            let x = svd
                .solve(&sys.b, 1e-12 * scale.max(f64::MIN_POSITIVE))
                .map_err(|_| Error::SingularSystem { cond: f64::INFINITY })?;
            let residual = (&sys.a * &x - &sys.b).norm();
            Ok(DenseSolution { x, residual })
        }
    }
}

fn condition_via_svd(a: &DMatrix<f64>) -> f64 {
    let svd = a.clone().svd(false, false);
    let max = svd.singular_values.iter().fold(0.0f64, |m, v| m.max(*v));
    let min = svd
        .singular_values
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(*v));
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

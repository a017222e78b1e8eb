//! Small sparse linear algebra kit: compressed-row matrices, a banded
//! Cholesky factorisation and preconditioned MINRES.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds the matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n_rows + 1];
        for &(i, j, _) in triplets {
            assert!(i < n_rows && j < n_cols, "triplet ({i}, {j}) out of bounds");
            counts[i + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            cols[fill[i]] = j;
            vals[fill[i]] = v;
            fill[i] += 1;
        }

        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..n_rows {
            scratch.clear();
            scratch.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_unstable_by_key(|e| e.0);
            for &(j, v) in &scratch {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    /// `y = M x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        for (i, yi) in y.iter_mut().enumerate().take(self.n_rows) {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// `y = Mᵀ x`.
    pub fn matvec_t(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_rows);
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                y[j] += v * xi;
            }
        }
    }

    /// `D_r M D_c` for diagonal scalings given as vectors.
    pub fn scaled(&self, row_scale: &[f64], col_scale: &[f64]) -> CsrMatrix {
        let mut out = self.clone();
        for i in 0..self.n_rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[k] *= row_scale[i] * col_scale[self.col_idx[k]];
            }
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.n_rows == self.n_cols
            && (0..self.n_rows).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i)).abs() <= tol * v.abs().max(1.0)))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    /// Coordinate text format, one `i j value` line per stored entry.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                let _ = writeln!(s, "{i} {j} {v:.17e}");
            }
        }
        s
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cholesky factor of a symmetric positive definite band matrix, stored by
/// rows of the lower band.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandCholesky {
    /// Factors the lower band of `m` (entries with `i - bw <= j <= i`).
    pub fn factor(m: &CsrMatrix) -> Result<Self> {
        let n = m.n_rows;
        let bw = (0..n)
            .flat_map(|i| m.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0);
        let w = bw + 1;
        // row i, column j stored at i*w + (j + bw - i)
        let mut data = vec![0.0; n * w];
        for i in 0..n {
            for (j, v) in m.row(i) {
                if j <= i {
                    data[i * w + j + bw - i] = v;
                }
            }
        }
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let jlo = j.saturating_sub(bw).max(lo);
                let mut s = data[i * w + j + bw - i];
                for k in jlo..j {
                    s -= data[i * w + k + bw - i] * data[j * w + k + bw - j];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::DegenerateSystem(format!(
                            "band matrix is not positive definite at row {i}"
                        )));
                    }
                    data[i * w + bw] = s.sqrt();
                } else {
                    data[i * w + j + bw - i] = s / data[j * w + bw];
                }
            }
        }
        Ok(BandCholesky { n, bw, data })
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Solves `L Lᵀ x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = x[i];
            for k in lo..i {
                s -= self.data[i * w + k + bw - i] * x[k];
            }
            x[i] = s / self.data[i * w + bw];
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut s = x[i];
            for k in i + 1..=hi {
                s -= self.data[k * w + i + bw - k] * x[k];
            }
            x[i] = s / self.data[i * w + bw];
        }
    }
}

/// Outcome of a MINRES run.
#[derive(Debug, Clone)]
pub struct MinresReport {
    pub iterations: usize,
    /// Estimated preconditioned relative residual after each iteration.
    pub history: Vec<f64>,
    pub converged: bool,
}

/// Preconditioned MINRES for symmetric (possibly indefinite) systems.
///
/// `apply_a` computes `y = A x`, `apply_m` computes `y = M⁻¹ x` with `M`
/// symmetric positive definite. Starts from the given `x`. Stops when the
/// `M⁻¹`-norm residual estimate falls below `tol` relative to the initial one.
pub fn minres(
    apply_a: impl Fn(&[f64], &mut [f64]),
    apply_m: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> MinresReport {
    let n = b.len();
    let mut r1 = vec![0.0; n];
    apply_a(x, &mut r1);
    for i in 0..n {
        r1[i] = b[i] - r1[i];
    }
    let mut y = vec![0.0; n];
    apply_m(&r1, &mut y);
    let beta1 = dot(&r1, &y).max(0.0).sqrt();
    let mut history = Vec::new();
    if beta1 == 0.0 {
        return MinresReport {
            iterations: 0,
            history,
            converged: true,
        };
    }

    let mut r2 = r1.clone();
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let (mut beta, mut oldb) = (beta1, 0.0);
    let (mut dbar, mut epsln, mut phibar) = (0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);

    for itn in 1..=max_iter {
        let s = 1.0 / beta;
        for i in 0..n {
            v[i] = s * y[i];
        }
        apply_a(&v, &mut y);
        if itn >= 2 {
            let c = beta / oldb;
            for i in 0..n {
                y[i] -= c * r1[i];
            }
        }
        let alfa = dot(&v, &y);
        let c = alfa / beta;
        for i in 0..n {
            y[i] -= c * r2[i];
        }
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        apply_m(&r2, &mut y);
        oldb = beta;
        beta = dot(&r2, &y).max(0.0).sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w2, &mut w);
        let denom = 1.0 / gamma;
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }

        let rel = phibar / beta1;
        history.push(rel);
        if rel <= tol || beta == 0.0 {
            return MinresReport {
                iterations: itn,
                history,
                converged: true,
            };
        }
    }
    MinresReport {
        iterations: max_iter,
        history,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (0, 2, 2.5), (1, 0, -1.0), (0, 0, 4.0)]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 2), 3.5);
        assert_eq!(m.get(0, 0), 4.0);
        assert_eq!(m.get(1, 1), 0.0);
        let mut y = vec![0.0; 2];
        m.matvec(&[1.0, 2.0, 3.0], &mut y);
        assert_eq!(y, vec![14.5, -1.0]);
        let mut z = vec![0.0; 3];
        m.matvec_t(&[1.0, 2.0], &mut z);
        assert_eq!(z, vec![2.0, 0.0, 3.5]);
        assert_eq!(m.dump().lines().count(), 3);
        assert!(m.dump().starts_with("0 0 4.0"));
    }

    #[test]
    fn band_cholesky_solves_tridiagonal() {
        let n = 50;
        let m = laplace_1d(n);
        let chol = BandCholesky::factor(&m).unwrap();
        assert_eq!(chol.bandwidth(), 1);
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; n];
        m.matvec(&x_true, &mut b);
        chol.solve_in_place(&mut b);
        for (a, e) in b.iter().zip(&x_true) {
            assert_relative_eq!(*a, *e, epsilon = 1e-11);
        }
    }

    #[test]
    fn band_cholesky_wide_band_and_failure() {
        // 2D five-point Laplacian on a 6x6 grid, bandwidth 6
        let k = 6;
        let mut t = Vec::new();
        for i in 0..k {
            for j in 0..k {
                let r = i * k + j;
                t.push((r, r, 4.0));
                if i > 0 {
                    t.push((r, r - k, -1.0));
                }
                if i + 1 < k {
                    t.push((r, r + k, -1.0));
                }
                if j > 0 {
                    t.push((r, r - 1, -1.0));
                }
                if j + 1 < k {
                    t.push((r, r + 1, -1.0));
                }
            }
        }
        let m = CsrMatrix::from_triplets(k * k, k * k, &t);
        let chol = BandCholesky::factor(&m).unwrap();
        assert_eq!(chol.bandwidth(), k);
        let x_true: Vec<f64> = (0..k * k).map(|i| 1.0 + i as f64).collect();
        let mut b = vec![0.0; k * k];
        m.matvec(&x_true, &mut b);
        chol.solve_in_place(&mut b);
        for (a, e) in b.iter().zip(&x_true) {
            assert_relative_eq!(*a, *e, max_relative = 1e-11);
        }

        let indefinite = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, -1.0)]);
        assert!(BandCholesky::factor(&indefinite).is_err());
    }

    #[test]
    fn minres_on_indefinite_saddle() {
        // [[I, Bᵀ], [B, 0]] with B = [1 1 0; 0 1 1]
        let t = vec![
            (0, 0, 2.0),
            (1, 1, 1.0),
            (2, 2, 3.0),
            (3, 0, 1.0),
            (3, 1, 1.0),
            (4, 1, 1.0),
            (4, 2, 1.0),
            (0, 3, 1.0),
            (1, 3, 1.0),
            (1, 4, 1.0),
            (2, 4, 1.0),
        ];
        let m = CsrMatrix::from_triplets(5, 5, &t);
        assert!(m.is_symmetric(0.0));
        let x_true = [1.0, -2.0, 0.5, 3.0, -1.0];
        let mut b = vec![0.0; 5];
        m.matvec(&x_true, &mut b);
        let mut x = vec![0.0; 5];
        let rep = minres(|u, v| m.matvec(u, v), |u, v| v.copy_from_slice(u), &b, &mut x, 1e-14, 50);
        assert!(rep.converged);
        for (a, e) in x.iter().zip(&x_true) {
            assert_relative_eq!(*a, *e, epsilon = 1e-10);
        }
    }

    #[test]
    fn minres_with_exact_preconditioner_converges_in_one_step() {
        let m = laplace_1d(30);
        let chol = BandCholesky::factor(&m).unwrap();
        let b: Vec<f64> = (0..30).map(|i| (i as f64).cos()).collect();
        let mut x = vec![0.0; 30];
        let rep = minres(
            |u, v| m.matvec(u, v),
            |u, v| {
                v.copy_from_slice(u);
                chol.solve_in_place(v);
            },
            &b,
            &mut x,
            1e-12,
            10,
        );
        assert!(rep.converged);
        assert!(rep.iterations <= 2);
        let mut r = vec![0.0; 30];
        m.matvec(&x, &mut r);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-10);
        }
    }

    #[test]
    fn minres_zero_rhs_and_cap() {
        let m = laplace_1d(10);
        let mut x = vec![0.0; 10];
        let rep = minres(|u, v| m.matvec(u, v), |u, v| v.copy_from_slice(u), &[0.0; 10], &mut x, 1e-12, 5);
        assert!(rep.converged && rep.iterations == 0);
        let m = laplace_1d(200);
        let b = vec![1.0; 200];
        let mut x = vec![0.0; 200];
        let rep = minres(|u, v| m.matvec(u, v), |u, v| v.copy_from_slice(u), &b, &mut x, 1e-14, 3);
        assert!(!rep.converged);
        assert_eq!(rep.history.len(), 3);
    }
}

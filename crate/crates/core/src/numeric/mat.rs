//! Dense row-major matrices sized for small phase spaces (n ≲ 20).

use crate::error::{Error, Result};

/// Dense matrix with row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty());
        let cols = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == cols));
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            data.extend_from_slice(r);
        }
        Mat {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Mat::zeros(entries.len(), entries.len());
        for (i, &e) in entries.iter().enumerate() {
            m.set(i, i, e);
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self.get(i, l);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.add_to(i, j, a * other.get(l, j));
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// y = A^T x without forming the transpose.
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len(), "tr_matvec dimension mismatch");
        let mut y = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            for (j, yj) in y.iter_mut().enumerate() {
                *yj += self.get(i, j) * xi;
            }
        }
        y
    }

    pub fn scaled(&self, s: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// max_{ij} |M_ij - M_ji| over a square matrix.
    pub fn asymmetry(&self) -> f64 {
        assert!(self.is_square());
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    fn lu_decompose(&self) -> Option<(Mat, Vec<usize>, f64)> {
        assert!(self.is_square());
        let n = self.rows;
        let mut lu = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for col in 0..n {
            let mut pivot_row = col;
            let mut pivot_val = lu.get(col, col).abs();
            for r in (col + 1)..n {
                let v = lu.get(r, col).abs();
                if v > pivot_val {
                    pivot_val = v;
                    pivot_row = r;
                }
            }
            if pivot_val == 0.0 {
                return None;
            }
            if pivot_row != col {
                for j in 0..n {
                    let tmp = lu.get(col, j);
                    lu.set(col, j, lu.get(pivot_row, j));
                    lu.set(pivot_row, j, tmp);
                }
                perm.swap(col, pivot_row);
                sign = -sign;
            }
            let piv = lu.get(col, col);
            for r in (col + 1)..n {
                let factor = lu.get(r, col) / piv;
                lu.set(r, col, factor);
                for j in (col + 1)..n {
                    let v = lu.get(r, j) - factor * lu.get(col, j);
                    lu.set(r, j, v);
                }
            }
        }
        Some((lu, perm, sign))
    }

    /// Solve A x = b with partial-pivoted LU.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if !self.is_square() || self.rows != b.len() {
            return Err(Error::Dimension(format!(
                "solve: {}x{} matrix with rhs of length {}",
                self.rows,
                self.cols,
                b.len()
            )));
        }
        let (lu, perm, _) = self
            .lu_decompose()
            .ok_or_else(|| Error::Singular(format!("{}x{} solve", self.rows, self.cols)))?;
        let n = self.rows;
        let mut x: Vec<f64> = perm.iter().map(|&pi| b[pi]).collect();
        for i in 1..n {
            for j in 0..i {
                x[i] -= lu.get(i, j) * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                x[i] -= lu.get(i, j) * x[j];
            }
            x[i] /= lu.get(i, i);
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<Mat> {
        let n = self.rows;
        let mut out = Mat::zeros(n, n);
        // Solve against unit vectors; LU is recomputed but n is tiny.
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.solve(&e)?;
            e[j] = 0.0;
            for i in 0..n {
                out.set(i, j, col[i]);
            }
        }
        Ok(out)
    }

    pub fn det(&self) -> f64 {
        assert!(self.is_square());
        match self.lu_decompose() {
            None => 0.0,
            Some((lu, _, sign)) => {
                let mut d = sign;
                for i in 0..self.rows {
                    d *= lu.get(i, i);
                }
                d
            }
        }
    }

    /// Leading principal minors det(M[..m, ..m]) for m = 1..=n.
    pub fn leading_principal_minors(&self) -> Vec<f64> {
        assert!(self.is_square());
        (1..=self.rows)
            .map(|m| {
                Mat::from_fn(m, m, |i, j| self.get(i, j)).det()
            })
            .collect()
    }

    /// Cholesky factor B with M = B^T B for symmetric positive-definite M.
    pub fn cholesky(&self) -> Result<Mat> {
        assert!(self.is_square());
        let n = self.rows;
        let mut l = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(Error::NotPositiveDefinite(format!(
                            "Cholesky pivot {s:.3e} at index {i}"
                        )));
                    }
                    l.set(i, j, s.sqrt());
                } else {
                    l.set(i, j, s / l.get(j, j));
                }
            }
        }
        // B = L^T so that M = B^T B.
        Ok(l.transpose())
    }

    /// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
    pub fn eigenvalues_symmetric(&self) -> Result<Vec<f64>> {
        Ok(self.eigen_symmetric()?.0)
    }

    /// Eigenvalues (ascending) and the orthogonal matrix of column
    /// eigenvectors of a symmetric matrix, by cyclic Jacobi rotations.
    pub fn eigen_symmetric(&self) -> Result<(Vec<f64>, Mat)> {
        if !self.is_square() {
            return Err(Error::Dimension("eigenvalues of non-square matrix".into()));
        }
        let n = self.rows;
        let mut a = self.clone();
        // Symmetrize to kill representation noise.
        for i in 0..n {
            for j in 0..n {
                let s = 0.5 * (a.get(i, j) + a.get(j, i));
                a.set(i, j, s);
                a.set(j, i, s);
            }
        }
        let mut v = Mat::identity(n);
        for _sweep in 0..100 {
            let mut off = 0.0f64;
            for i in 0..n {
                for j in (i + 1)..n {
                    off = off.max(a.get(i, j).abs());
                }
            }
            if off < 1e-14 * (1.0 + a.max_abs()) {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.get(p, q);
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                    for k in 0..n {
                        let vkp = v.get(k, p);
                        let vkq = v.get(k, q);
                        v.set(k, p, c * vkp - s * vkq);
                        v.set(k, q, s * vkp + c * vkq);
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a.get(i, i).partial_cmp(&a.get(j, j)).unwrap());
        let eig: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
        let vecs = Mat::from_fn(n, n, |r, c| v.get(r, order[c]));
        Ok((eig, vecs))
    }

    /// 1-norm condition number estimate via explicit inverse (fine at this scale).
    pub fn condition(&self) -> f64 {
        let norm1 = |m: &Mat| {
            (0..m.cols)
                .map(|j| (0..m.rows).map(|i| m.get(i, j).abs()).sum::<f64>())
                .fold(0.0f64, f64::max)
        };
        match self.inverse() {
            Err(_) => f64::INFINITY,
            Ok(inv) => norm1(self) * norm1(&inv),
        }
    }
}

/// Small helpers for plain `Vec<f64>` phase vectors.
pub mod vecops {
    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    pub fn norm_inf(a: &[f64]) -> f64 {
        a.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm2(a: &[f64]) -> f64 {
        dot(a, a).sqrt()
    }

    pub fn axpy(alpha: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
        x.iter().zip(y).map(|(a, b)| alpha * a + b).collect()
    }

    pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x - y).collect()
    }

    pub fn scaled(a: &[f64], s: f64) -> Vec<f64> {
        a.iter().map(|x| x * s).collect()
    }

    pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_and_det_2x2() {
        let a = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let x = a.solve(&[5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
        assert!((a.det() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_roundtrip() {
        let a = Mat::from_rows(&[
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, -0.2],
            vec![0.5, -0.2, 2.0],
        ]);
        let inv = a.inverse().unwrap();
        let prod = a.matmul(&inv);
        assert!(prod.sub(&Mat::identity(3)).max_abs() < 1e-12);
    }

    #[test]
    fn jacobi_eigenvalues_match_known() {
        // diag(1, 2) rotated by 45 degrees has eigenvalues 1 and 2.
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let r = Mat::from_rows(&[vec![c, -c], vec![c, c]]);
        let d = Mat::diag(&[1.0, 2.0]);
        let m = r.matmul(&d).matmul(&r.transpose());
        let eig = m.eigenvalues_symmetric().unwrap();
        assert!((eig[0] - 1.0).abs() < 1e-12);
        assert!((eig[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cholesky_factors_spd() {
        let m = Mat::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]);
        let b = m.cholesky().unwrap();
        let back = b.transpose().matmul(&b);
        assert!(back.sub(&m).max_abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_reports() {
        let m = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(m.solve(&[1.0, 1.0]).is_err());
        assert_eq!(m.det(), 0.0);
    }
}

//! Dense row-major matrices and the few solvers the least-squares baselines
//! need: Gram products, an SPD (Cholesky) ridge solve and a Gauss-Jordan
//! inverse used as an independent check.

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

use crate::counter::Tally;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {op} of {left} and {right}")]
    Shape {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("matrix must be square, got {0}")]
    NotSquare(Shape),
    #[error("system is not positive definite (pivot {pivot:.3e} at row {row}); use lambda > 0")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("singular matrix: pivot magnitude {pivot:.3e} below tolerance at column {col}")]
    Singular { col: usize, pivot: f64 },
    #[error("lambda must be finite and nonnegative, got {0}")]
    BadLambda(f64),
    #[error("non-finite entry produced by {0}")]
    NonFinite(&'static str),
    #[error("data length {len} does not match {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape(pub usize, pub usize);

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.0, self.1)
    }
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Pivot tolerance of [`gauss_jordan_inverse`].
pub const GJ_PIVOT_TOL: f64 = 1e-12;

/// Relative pivot tolerance of the Cholesky factorization.
const CHOL_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LinalgError::DataLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> Shape {
        Shape(self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Largest absolute entry (0 for an empty matrix).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entrywise difference. Shapes must agree.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn add_diagonal(&mut self, v: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self[(i, i)] += v;
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// General product `op(a) * op(b)` through `matrixmultiply`, where `op` is
/// either identity or transpose depending on the flags.
fn gemm(a: &Matrix, ta: bool, b: &Matrix, tb: bool) -> Matrix {
    let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let n = if tb { b.rows } else { b.cols };
    let (rsa, csa) = if ta {
        (1, a.cols as isize)
    } else {
        (a.cols as isize, 1)
    };
    let (rsb, csb) = if tb {
        (1, b.cols as isize)
    } else {
        (b.cols as isize, 1)
    };
    let mut c = Matrix::zeros(m, n);
    if m == 0 || n == 0 {
        return c;
    }
    // SAFETY: the strides and extents above describe exactly the buffers of
    // `a`, `b` and `c`, which stay borrowed for the duration of the call.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            0.0,
            c.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(LinalgError::Shape {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(gemm(a, false, b, false))
}

/// `aᵀ b` without materializing the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(LinalgError::Shape {
            op: "matmul_tn",
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(gemm(a, true, b, false))
}

/// `hᵀh`. The upper triangle is computed and mirrored so the result is
/// bitwise symmetric.
pub fn gram(h: &Matrix) -> Matrix {
    let mut g = gemm(h, true, h, false);
    let n = g.rows;
    for i in 0..n {
        for j in (i + 1)..n {
            g.data[j * n + i] = g.data[i * n + j];
        }
    }
    g
}

/// Lower-triangular Cholesky factor of an SPD matrix.
pub fn cholesky<T: Tally>(a: &Matrix, tally: &mut T) -> Result<Matrix> {
    if a.rows != a.cols {
        return Err(LinalgError::NotSquare(a.shape()));
    }
    let n = a.rows;
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let (li, lj) = if i == j {
                let r = l.row(i);
                (r, r)
            } else {
                (l.row(i), l.row(j))
            };
            let dot: f64 = li[..j].iter().zip(&lj[..j]).map(|(x, y)| x * y).sum();
            tally.mults(j as u64);
            tally.adds(j as u64);
            let s = a[(i, j)] - dot;
            if i == j {
                let scale = a[(i, i)].abs().max(f64::MIN_POSITIVE);
                if s.is_nan() || s <= CHOL_REL_TOL * scale {
                    return Err(LinalgError::NotPositiveDefinite { row: i, pivot: s });
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
            tally.mults(1);
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ X = B` given the Cholesky factor `L`.
pub fn cholesky_solve<T: Tally>(l: &Matrix, b: &Matrix, tally: &mut T) -> Result<Matrix> {
    let n = l.rows;
    if b.rows != n {
        return Err(LinalgError::Shape {
            op: "cholesky_solve",
            left: l.shape(),
            right: b.shape(),
        });
    }
    let mut x = Matrix::zeros(n, b.cols);
    let mut y = vec![0.0; n];
    for c in 0..b.cols {
        for i in 0..n {
            let li = l.row(i);
            let dot: f64 = li[..i].iter().zip(&y[..i]).map(|(a, b)| a * b).sum();
            y[i] = (b[(i, c)] - dot) / li[i];
            tally.mults(i as u64 + 1);
            tally.adds(i as u64);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
            tally.mults((n - i) as u64);
            tally.adds((n - i - 1) as u64);
        }
    }
    Ok(x)
}

/// Forms the normal equations `(hᵀh + λI, hᵀt)`.
pub fn normal_equations<T: Tally>(
    h: &Matrix,
    t: &Matrix,
    lambda: f64,
    tally: &mut T,
) -> Result<(Matrix, Matrix)> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(LinalgError::BadLambda(lambda));
    }
    if h.rows != t.rows {
        return Err(LinalgError::Shape {
            op: "ridge_solve",
            left: h.shape(),
            right: t.shape(),
        });
    }
    let (n, m, c) = (h.rows as u64, h.cols as u64, t.cols as u64);
    let mut g = gram(h);
    g.add_diagonal(lambda);
    let b = matmul_tn(h, t)?;
    tally.mults(n * m * m + n * m * c);
    tally.adds(n * m * m + n * m * c + m);
    Ok((g, b))
}

/// Factorizes the SPD system `g` and back-substitutes every column of `b`.
pub fn spd_solve<T: Tally>(g: &Matrix, b: &Matrix, tally: &mut T) -> Result<Matrix> {
    let l = cholesky(g, tally)?;
    let w = cholesky_solve(&l, b, tally)?;
    if !w.is_finite() {
        return Err(LinalgError::NonFinite("spd_solve"));
    }
    Ok(w)
}

/// Ridge least squares: the `W` solving `(hᵀh + λI) W = hᵀt`.
pub fn ridge_solve(h: &Matrix, t: &Matrix, lambda: f64) -> Result<Matrix> {
    let (g, b) = normal_equations(h, t, lambda, &mut ())?;
    spd_solve(&g, &b, &mut ())
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &Matrix) -> Result<Matrix> {
    if a.rows != a.cols {
        return Err(LinalgError::NotSquare(a.shape()));
    }
    let n = a.rows;
    let mut work = a.clone();
    let mut inv = Matrix::identity(n);
    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, work[(r, col)]))
            .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
            .expect("nonempty pivot range");
        if pivot.abs() < GJ_PIVOT_TOL {
            return Err(LinalgError::Singular { col, pivot });
        }
        if pivot_row != col {
            for j in 0..n {
                work.data.swap(col * n + j, pivot_row * n + j);
                inv.data.swap(col * n + j, pivot_row * n + j);
            }
        }
        let scale = 1.0 / pivot;
        for j in 0..n {
            work[(col, j)] *= scale;
            inv[(col, j)] *= scale;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = work[(r, col)];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                work[(r, j)] -= f * work[(col, j)];
                inv[(r, j)] -= f * inv[(col, j)];
            }
        }
    }
    if !inv.is_finite() {
        return Err(LinalgError::NonFinite("gauss_jordan_inverse"));
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counter::OpCounter;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut c = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                c[(i, j)] = s;
            }
        }
        c
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(matmul(&Matrix::identity(2), &a).unwrap(), a);
        let b = Matrix::from_rows(&[[0.0], [1.0]]);
        assert_eq!(
            matmul(&a, &b).unwrap(),
            Matrix::from_rows(&[[2.0], [4.0]])
        );
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let a = random(5, 7, 1);
        let b = random(7, 3, 2);
        let c = matmul(&a, &b).unwrap();
        assert!(c.max_abs_diff(&naive_matmul(&a, &b)) < 1e-12);
    }

    #[test]
    fn matmul_shape_error_names_both() {
        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.matches("2x3").count() == 2, "{msg}");
    }

    #[test]
    fn gram_cases() {
        assert_eq!(gram(&Matrix::identity(3)), Matrix::identity(3));
        let h = Matrix::from_rows(&[[1.0, 1.0], [1.0, -1.0]]);
        assert_eq!(gram(&h), Matrix::from_rows(&[[2.0, 0.0], [0.0, 2.0]]));
        let h = random(6, 4, 3);
        let g = gram(&h);
        assert!(g.max_abs_diff(&naive_matmul(&h.transpose(), &h)) < 1e-12);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(g[(i, j)].to_bits(), g[(j, i)].to_bits());
            }
        }
    }

    #[test]
    fn ridge_identity_systems() {
        let i2 = Matrix::identity(2);
        assert!(ridge_solve(&i2, &i2, 0.0).unwrap().max_abs_diff(&i2) < 1e-15);
        let w = ridge_solve(&i2, &i2, 1.0).unwrap();
        assert!(w.max_abs_diff(&Matrix::from_rows(&[[0.5, 0.0], [0.0, 0.5]])) < 1e-15);
    }

    #[test]
    fn ridge_matches_gauss_jordan() {
        let h = random(8, 3, 4);
        let t = random(8, 2, 5);
        let w = ridge_solve(&h, &t, 0.01).unwrap();
        let mut g = naive_matmul(&h.transpose(), &h);
        g.add_diagonal(0.01);
        let inv = gauss_jordan_inverse(&g).unwrap();
        let oracle = naive_matmul(&inv, &naive_matmul(&h.transpose(), &t));
        assert!(w.max_abs_diff(&oracle) < 1e-8);
    }

    #[test]
    fn ridge_rank_deficient_without_lambda() {
        let h = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]);
        let t = Matrix::from_rows(&[[1.0], [0.0], [1.0]]);
        let err = ridge_solve(&h, &t, 0.0).unwrap_err();
        assert!(matches!(err, LinalgError::NotPositiveDefinite { .. }));
        assert!(err.to_string().contains("lambda > 0"));
        assert!(ridge_solve(&h, &t, 1e-3).is_ok());
        assert!(matches!(
            ridge_solve(&h, &t, -1.0),
            Err(LinalgError::BadLambda(_))
        ));
    }

    #[test]
    fn gauss_jordan_cases() {
        assert_eq!(gauss_jordan_inverse(&Matrix::identity(4)).unwrap(), Matrix::identity(4));
        let a = Matrix::from_rows(&[[2.0, 0.0], [0.0, 4.0]]);
        assert_eq!(
            gauss_jordan_inverse(&a).unwrap(),
            Matrix::from_rows(&[[0.5, 0.0], [0.0, 0.25]])
        );
        let s = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        assert!(matches!(
            gauss_jordan_inverse(&s),
            Err(LinalgError::Singular { .. })
        ));
        assert!(matches!(
            gauss_jordan_inverse(&Matrix::zeros(2, 3)),
            Err(LinalgError::NotSquare(_))
        ));
    }

    #[test]
    fn gauss_jordan_random_spd() {
        let b = random(5, 5, 6);
        let mut a = naive_matmul(&b.transpose(), &b);
        a.add_diagonal(0.5);
        let inv = gauss_jordan_inverse(&a).unwrap();
        assert!(naive_matmul(&a, &inv).max_abs_diff(&Matrix::identity(5)) < 1e-8);
    }

    #[test]
    fn residual_bound() {
        let h = random(40, 12, 7);
        let t = random(40, 3, 8);
        let lambda = 1e-3;
        let w = ridge_solve(&h, &t, lambda).unwrap();
        let mut g = gram(&h);
        g.add_diagonal(lambda);
        let b = matmul_tn(&h, &t).unwrap();
        let r = matmul(&g, &w).unwrap();
        let bound = 1e-8 * g.max_abs().max(b.max_abs());
        assert!(r.max_abs_diff(&b) <= bound);
    }

    #[test]
    fn cholesky_counts_cubic_term() {
        let mut a = gram(&random(20, 16, 9));
        a.add_diagonal(1.0);
        let mut c = OpCounter::new();
        cholesky(&a, &mut c).unwrap();
        // sum_{i} sum_{j<=i} (j + 1) mults
        let n = 16u64;
        let expect: u64 = (0..n).map(|i| (0..=i).map(|j| j + 1).sum::<u64>()).sum();
        assert_eq!(c.mults, expect);
    }
}
